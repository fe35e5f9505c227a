#include "fspn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fspn/fft.hpp"

namespace fspn {
namespace dsp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kMorletW0 = 6.0;
constexpr double kEps = 1e-12;
}  // namespace

TimeIndices time_indices(std::span<const float> signal) {
    if (signal.size() < 8)
        throw DataError("time_indices: signal too short");
    const double n = static_cast<double>(signal.size());
    double peak = 0, m1_abs = 0, m2 = 0, m3 = 0, m4 = 0;
    for (float xf : signal) {
        double x = xf;
        double ax = std::fabs(x);
        peak = std::max(peak, ax);
        m1_abs += ax;
        double x2 = x * x;
        m2 += x2;
        m3 += x2 * x;
        m4 += x2 * x2;
    }
    m1_abs /= n;
    m2 /= n;
    m3 /= n;
    m4 /= n;

    TimeIndices out;
    if (m2 < kEps) {
        out.degenerate = true;
        return out;  // all six indices 0
    }
    out.peak = peak;
    out.rms = std::sqrt(m2);
    out.kurtosis = m4 / (m2 * m2);
    out.skewness = m3 / std::pow(m2, 1.5);
    out.crest = peak / out.rms;
    out.impulse = peak / m1_abs;
    return out;
}

Spectrum spectrum(std::span<const float> signal, double sampling_rate) {
    const size_t len = signal.size();
    if (!is_power_of_two(len))
        throw DataError("spectrum: signal length must be a power of two");
    std::vector<std::complex<double>> buf(len);
    for (size_t i = 0; i < len; ++i) buf[i] = signal[i];
    fft_inplace(buf);
    Spectrum out;
    out.bin_width = sampling_rate / static_cast<double>(len);
    out.mag.resize(len / 2);
    const double scale = 2.0 / static_cast<double>(len);
    for (size_t k = 0; k < len / 2; ++k) out.mag[k] = scale * std::abs(buf[k]);
    return out;
}

std::array<double, 6> freq_indices(const Spectrum& spec, double rotating_freq) {
    if (rotating_freq <= 0)
        throw DataError("freq_indices: rotating_freq must be positive");
    static constexpr double kOrders[6] = {0.5, 1.0, 2.0, 3.0, 4.0, 5.0};
    std::array<double, 6> out{};
    const int nbins = static_cast<int>(spec.mag.size());
    for (int i = 0; i < 6; ++i) {
        int center = static_cast<int>(std::lround(kOrders[i] * rotating_freq /
                                                  spec.bin_width));
        double best = 0.0;
        for (int b = center - 2; b <= center + 2; ++b)
            if (b >= 0 && b < nbins) best = std::max(best, spec.mag[b]);
        out[i] = best;
    }
    return out;
}

Scalogram cwt(std::span<const float> signal, double sampling_rate,
              double rotating_freq, int n_scales, int frames) {
    if (n_scales < 4) throw DataError("cwt: need at least 4 scales");
    const size_t len = signal.size();
    if (!is_power_of_two(len))
        throw DataError("cwt: signal length must be a power of two");
    if (frames <= 0 || static_cast<size_t>(frames) > len ||
        len % static_cast<size_t>(frames) != 0)
        throw DataError("cwt: frames must divide the signal length");

    std::vector<std::complex<double>> x_fft(len);
    for (size_t i = 0; i < len; ++i) x_fft[i] = signal[i];
    fft_inplace(x_fft);

    // center frequencies geometric over [rotating_freq/2, Nyquist/2],
    // highest frequency first (row 0 = highest scale frequency)
    const double f_hi = sampling_rate / 4.0;
    const double f_lo = rotating_freq / 2.0;
    if (f_lo <= 0 || f_lo >= f_hi)
        throw DataError("cwt: invalid frequency range");

    Scalogram out;
    out.scales = n_scales;
    out.frames = frames;
    out.mag.assign(static_cast<size_t>(n_scales) * frames, 0.0);
    const int pool = static_cast<int>(len) / frames;

    std::vector<std::complex<double>> buf(len);
    for (int s = 0; s < n_scales; ++s) {
        double frac = n_scales == 1 ? 0.0
                                    : static_cast<double>(s) / (n_scales - 1);
        double fc = f_hi * std::pow(f_lo / f_hi, frac);
        // scale in samples: wavelet center frequency w0/(2*pi*a) = fc/fs
        double a = kMorletW0 * sampling_rate / (kTwoPi * fc);
        // analytic Morlet in the frequency domain
        for (size_t k = 0; k < len; ++k) {
            if (k == 0 || k >= len / 2) {
                buf[k] = 0.0;
                continue;
            }
            double w = kTwoPi * static_cast<double>(k) / static_cast<double>(len);
            double arg = a * w - kMorletW0;
            double psi = std::exp(-0.5 * arg * arg) * std::sqrt(a);
            buf[k] = x_fft[k] * psi;
        }
        fft_inplace(buf, true);
        for (int t = 0; t < static_cast<int>(len); ++t) {
            out.mag[static_cast<size_t>(s) * frames + t / pool] +=
                std::abs(buf[t]);
        }
    }
    for (auto& m : out.mag) m /= pool;
    return out;
}

std::vector<double> index_vector(const VibrationRecord& record,
                                 const std::vector<ChannelConfig>& channels) {
    if (record.channels.size() != channels.size())
        throw DataError("index_vector: channel count mismatch");
    std::vector<double> out;
    out.reserve(channels.size() * 12);
    for (size_t c = 0; c < channels.size(); ++c) {
        TimeIndices ti = time_indices(record.channels[c]);
        for (double v : ti.as_array()) out.push_back(v);
        Spectrum sp = spectrum(record.channels[c], channels[c].sampling_rate);
        for (double v : freq_indices(sp, record.rotating_freq)) out.push_back(v);
    }
    return out;
}

std::vector<std::string> index_names(int n_channels) {
    static const char* kBase[12] = {"peak",   "rms",     "kurtosis", "skewness",
                                    "crest",  "impulse", "amp_05x",  "amp_1x",
                                    "amp_2x", "amp_3x",  "amp_4x",   "amp_5x"};
    std::vector<std::string> out;
    for (int c = 0; c < n_channels; ++c)
        for (const char* b : kBase)
            out.push_back("ch" + std::to_string(c) + "_" + b);
    return out;
}

RawFeatures extract_raw(const VibrationRecord& record,
                        const std::vector<ChannelConfig>& channels,
                        const FeatureProfile& profile) {
    if (static_cast<int>(channels.size()) != profile.n_channels)
        throw DataError("extract_raw: profile/channel mismatch");
    RawFeatures out;
    for (int c = 0; c < profile.n_channels; ++c) {
        const auto& sig = record.channels[static_cast<size_t>(c)];
        const int len = static_cast<int>(sig.size());
        out.signals.emplace_back(std::vector<int>{1, len},
                                 std::vector<float>(sig.begin(), sig.end()));

        Spectrum sp = spectrum(sig, channels[static_cast<size_t>(c)].sampling_rate);
        std::vector<float> spv(sp.mag.begin(), sp.mag.end());
        out.spectra.emplace_back(
            std::vector<int>{1, static_cast<int>(spv.size())}, std::move(spv));

        Scalogram sc = cwt(sig, channels[static_cast<size_t>(c)].sampling_rate,
                           record.rotating_freq, profile.n_scales, profile.frames);
        std::vector<float> scv(sc.mag.begin(), sc.mag.end());
        out.scalograms.emplace_back(
            std::vector<int>{1, sc.scales, sc.frames}, std::move(scv));
    }
    return out;
}

namespace {
const Tensor& nth_input(const RawFeatures& f, size_t i) {
    size_t nc = f.signals.size();
    if (i < nc) return f.signals[i];
    if (i < 2 * nc) return f.spectra[i - nc];
    return f.scalograms[i - 2 * nc];
}
}  // namespace

NormStats compute_norm_stats(const std::vector<const RawFeatures*>& features) {
    if (features.empty()) throw DataError("compute_norm_stats: no features");
    const size_t n_inputs = features[0]->signals.size() * 3;
    NormStats stats;
    stats.mean.resize(n_inputs);
    stats.std.resize(n_inputs);
    const double n = static_cast<double>(features.size());
    for (size_t i = 0; i < n_inputs; ++i) {
        const size_t dim = nth_input(*features[0], i).v.size();
        std::vector<double> sum(dim, 0.0), sum2(dim, 0.0);
        for (const RawFeatures* f : features) {
            const auto& t = nth_input(*f, i);
            for (size_t d = 0; d < dim; ++d) {
                sum[d] += t.v[d];
                sum2[d] += static_cast<double>(t.v[d]) * t.v[d];
            }
        }
        stats.mean[i].resize(dim);
        stats.std[i].resize(dim);
        for (size_t d = 0; d < dim; ++d) {
            double m = sum[d] / n;
            double var = std::max(0.0, sum2[d] / n - m * m);
            double sd = std::sqrt(var);
            stats.mean[i][d] = static_cast<float>(m);
            stats.std[i][d] = sd < 1e-8 ? 1.0f : static_cast<float>(sd);
        }
    }
    return stats;
}

FeatureBundle normalize(const RawFeatures& raw, const NormStats& stats) {
    FeatureBundle out;
    const size_t nc = raw.signals.size();
    auto apply = [&](const Tensor& t, size_t i) {
        Tensor r = t;
        const auto& m = stats.mean[i];
        const auto& s = stats.std[i];
        if (m.size() != r.v.size())
            throw DataError("normalize: stats do not match feature sizes");
        for (size_t d = 0; d < r.v.size(); ++d) r.v[d] = (r.v[d] - m[d]) / s[d];
        return r;
    };
    for (size_t c = 0; c < nc; ++c) out.signals.push_back(apply(raw.signals[c], c));
    for (size_t c = 0; c < nc; ++c)
        out.spectra.push_back(apply(raw.spectra[c], nc + c));
    for (size_t c = 0; c < nc; ++c)
        out.scalograms.push_back(apply(raw.scalograms[c], 2 * nc + c));
    return out;
}

FeatureBundle featurize(const VibrationRecord& record,
                        const std::vector<ChannelConfig>& channels,
                        const FeatureProfile& profile, const NormStats& stats) {
    return normalize(extract_raw(record, channels, profile), stats);
}

}  // namespace dsp
}  // namespace fspn
