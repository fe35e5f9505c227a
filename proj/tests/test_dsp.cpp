#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "fspn/dsp.hpp"
#include "fspn/fft.hpp"
#include "fspn/rng.hpp"
#include "fspn/synth.hpp"

using namespace fspn;

namespace {

std::vector<float> sine(double amp, double freq, double fs, int n,
                        double phase = 0.0) {
    std::vector<float> x(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        x[static_cast<size_t>(i)] = static_cast<float>(
            amp * std::sin(2.0 * std::numbers::pi * freq * i / fs + phase));
    return x;
}

// brute-force raw moments, independent of the implementation
dsp::TimeIndices brute_indices(const std::vector<float>& x) {
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0, mabs = 0, peak = 0;
    for (float v : x) {
        double d = v;
        m1 += d;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mabs += std::abs(d);
        peak = std::max(peak, std::abs(d));
    }
    double n = static_cast<double>(x.size());
    m1 /= n; m2 /= n; m3 /= n; m4 /= n; mabs /= n;
    dsp::TimeIndices out;
    out.peak = peak;
    out.rms = std::sqrt(m2);
    out.kurtosis = m4 / (m2 * m2);
    out.skewness = m3 / std::pow(m2, 1.5);
    out.crest = peak / out.rms;
    out.impulse = peak / mabs;
    return out;
}

VibrationRecord make_record(const MachineSpec& spec,
                            const std::vector<ChannelConfig>& channels,
                            const std::vector<uint8_t>& labels, uint64_t seed) {
    return synth::synthesize_record(spec, channels, labels, seed);
}

}  // namespace

TEST_CASE("time indices: sinusoid closed forms") {
    auto x = sine(2.0, 32.0, 1024.0, 1024);  // whole number of periods
    auto ti = dsp::time_indices(x);
    CHECK(ti.peak == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(ti.rms == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-4));
    CHECK(ti.crest == doctest::Approx(std::sqrt(2.0)).epsilon(1e-4));
    CHECK(ti.kurtosis == doctest::Approx(1.5).epsilon(1e-2));
    CHECK(std::abs(ti.skewness) < 1e-2);
    CHECK_FALSE(ti.degenerate);
}

TEST_CASE("time indices: constant signal") {
    std::vector<float> x(64, 3.0f);
    auto ti = dsp::time_indices(x);
    CHECK(ti.peak == doctest::Approx(3.0));
    CHECK(ti.rms == doctest::Approx(3.0));
    CHECK(ti.crest == doctest::Approx(1.0));
    CHECK(ti.impulse == doctest::Approx(1.0));
    CHECK(ti.kurtosis == doctest::Approx(1.0));
}

TEST_CASE("time indices: all-zero signal flagged degenerate, zeros") {
    std::vector<float> x(64, 0.0f);
    auto ti = dsp::time_indices(x);
    CHECK(ti.degenerate);
    for (double v : ti.as_array()) CHECK(v == 0.0);
}

TEST_CASE("time indices match brute-force moments on noisy data") {
    Rng rng(7);
    std::vector<float> x(512);
    for (auto& v : x) v = static_cast<float>(rng.normal() + 0.3);
    auto ti = dsp::time_indices(x);
    auto bf = brute_indices(x);
    CHECK(ti.peak == doctest::Approx(bf.peak).epsilon(1e-9));
    CHECK(ti.rms == doctest::Approx(bf.rms).epsilon(1e-9));
    CHECK(ti.kurtosis == doctest::Approx(bf.kurtosis).epsilon(1e-9));
    CHECK(ti.skewness == doctest::Approx(bf.skewness).epsilon(1e-9));
    CHECK(ti.crest == doctest::Approx(bf.crest).epsilon(1e-9));
    CHECK(ti.impulse == doctest::Approx(bf.impulse).epsilon(1e-9));
}

TEST_CASE("index scaling: alpha moves peak/rms, leaves shape factors") {
    Rng rng(11);
    std::vector<float> x(256), y(256);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<float>(rng.normal());
        y[i] = 2.5f * x[i];
    }
    auto a = dsp::time_indices(x);
    auto b = dsp::time_indices(y);
    CHECK(b.peak == doctest::Approx(2.5 * a.peak).epsilon(1e-6));
    CHECK(b.rms == doctest::Approx(2.5 * a.rms).epsilon(1e-6));
    CHECK(b.crest == doctest::Approx(a.crest).epsilon(1e-6));
    CHECK(b.impulse == doctest::Approx(a.impulse).epsilon(1e-6));
    CHECK(b.kurtosis == doctest::Approx(a.kurtosis).epsilon(1e-6));
    CHECK(b.skewness == doctest::Approx(a.skewness).epsilon(1e-6));
}

TEST_CASE("spectrum: bin-centered tone has magnitude 1 at its bin") {
    auto x = sine(1.0, 50.0, 1024.0, 1024);  // bin width 1 Hz
    auto sp = dsp::spectrum(x, 1024.0);
    CHECK(sp.mag.size() == 512);
    CHECK(sp.bin_width == doctest::Approx(1.0));
    CHECK(sp.mag[50] == doctest::Approx(1.0).epsilon(1e-6));
    for (size_t i = 0; i < sp.mag.size(); ++i)
        if (i != 50) CHECK(sp.mag[i] < 1e-6);
}

TEST_CASE("spectrum: zero signal and tone superposition") {
    std::vector<float> z(256, 0.0f);
    auto spz = dsp::spectrum(z, 256.0);
    for (double m : spz.mag) CHECK(m == 0.0);

    auto a = sine(0.7, 20.0, 1024.0, 1024);
    auto b = sine(1.3, 90.0, 1024.0, 1024);
    std::vector<float> ab(1024);
    for (int i = 0; i < 1024; ++i)
        ab[static_cast<size_t>(i)] =
            a[static_cast<size_t>(i)] + b[static_cast<size_t>(i)];
    auto sp = dsp::spectrum(ab, 1024.0);
    CHECK(sp.mag[20] == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(sp.mag[90] == doctest::Approx(1.3).epsilon(1e-6));
}

TEST_CASE("spectrum rejects non-power-of-two lengths") {
    std::vector<float> x(1000, 1.0f);
    CHECK_THROWS_AS(dsp::spectrum(x, 1000.0), DataError);
}

TEST_CASE("Parseval: two-sided spectral energy equals signal energy") {
    Rng rng(3);
    const int n = 512;
    std::vector<float> x(n);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    std::vector<std::complex<double>> a(x.begin(), x.end());
    fft_inplace(a);
    double spec_energy = 0.0;
    for (auto& c : a) spec_energy += std::norm(c);
    spec_energy /= n;
    double sig_energy = 0.0;
    for (float v : x) sig_energy += static_cast<double>(v) * v;
    CHECK(spec_energy ==
          doctest::Approx(sig_energy).epsilon(1e-6));
}

TEST_CASE("fft: inverse recovers the input") {
    Rng rng(5);
    std::vector<std::complex<double>> a(64);
    for (auto& c : a) c = std::complex<double>(rng.normal(), rng.normal());
    auto orig = a;
    fft_inplace(a);
    fft_inplace(a, true);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(a[i] - orig[i]) < 1e-9);
}

TEST_CASE("freq indices: unit sine at 1X") {
    auto x = sine(1.0, 50.0, 1024.0, 1024);
    auto sp = dsp::spectrum(x, 1024.0);
    auto fi = dsp::freq_indices(sp, 50.0);
    CHECK(fi[1] == doctest::Approx(1.0).epsilon(1e-6));  // amp_1X
    CHECK(fi[0] < 1e-6);
    for (int k = 2; k < 6; ++k) CHECK(fi[static_cast<size_t>(k)] < 1e-6);
    CHECK_THROWS_AS(dsp::freq_indices(sp, -1.0), DataError);
}

TEST_CASE("freq indices: zero spectrum gives zeros, added tone is monotone") {
    dsp::Spectrum z;
    z.mag.assign(512, 0.0);
    z.bin_width = 1.0;
    auto fz = dsp::freq_indices(z, 50.0);
    for (double v : fz) CHECK(v == 0.0);

    auto base = sine(1.0, 50.0, 1024.0, 1024);
    auto extra = sine(0.5, 100.0, 1024.0, 1024);
    std::vector<float> both(1024);
    for (int i = 0; i < 1024; ++i)
        both[static_cast<size_t>(i)] =
            base[static_cast<size_t>(i)] + extra[static_cast<size_t>(i)];
    auto f0 = dsp::freq_indices(dsp::spectrum(base, 1024.0), 50.0);
    auto f1 = dsp::freq_indices(dsp::spectrum(both, 1024.0), 50.0);
    for (int k = 0; k < 6; ++k)
        CHECK(f1[static_cast<size_t>(k)] >=
              f0[static_cast<size_t>(k)] - 1e-6);
    CHECK(f1[2] > f0[2] + 0.4);  // the 2X tone landed where it should
}

TEST_CASE("misalignment raises 2X and 3X amplitudes over healthy") {
    MachineSpec spec;
    spec.machine_id = 1;
    spec.rotating_freq = 50.0;
    spec.sample_count = 1;
    std::vector<ChannelConfig> channels = {
        {0, ChannelKind::acceleration, 8000.0, 1024}};
    auto healthy = make_record(spec, channels, {0, 0, 0, 0}, 99);
    auto faulty = make_record(spec, channels, {0, 1, 0, 0}, 99);
    auto fh = dsp::freq_indices(dsp::spectrum(healthy.channels[0], 8000.0), 50.0);
    auto ff = dsp::freq_indices(dsp::spectrum(faulty.channels[0], 8000.0), 50.0);
    CHECK(ff[2] > fh[2]);
    CHECK(ff[3] > fh[3]);
}

TEST_CASE("cwt: zero signal, positive homogeneity, shape") {
    std::vector<float> z(1024, 0.0f);
    auto sz = dsp::cwt(z, 8000.0, 50.0, 16, 64);
    CHECK(sz.scales == 16);
    CHECK(sz.frames == 64);
    for (double m : sz.mag) CHECK(m == 0.0);

    auto x = sine(1.0, 150.0, 8000.0, 1024);
    std::vector<float> x3(x);
    for (auto& v : x3) v *= 3.0f;
    auto s1 = dsp::cwt(x, 8000.0, 50.0, 16, 64);
    auto s3 = dsp::cwt(x3, 8000.0, 50.0, 16, 64);
    for (size_t i = 0; i < s1.mag.size(); ++i)
        CHECK(s3.mag[i] == doctest::Approx(3.0 * s1.mag[i]).epsilon(1e-6));
}

TEST_CASE("cwt: bearing impulses raise high-frequency time variance") {
    MachineSpec spec;
    spec.machine_id = 1;
    spec.rotating_freq = 50.0;
    spec.sample_count = 1;
    std::vector<ChannelConfig> channels = {
        {0, ChannelKind::acceleration, 8000.0, 1024}};
    auto healthy = make_record(spec, channels, {0, 0, 0, 0}, 12);
    auto bearing = make_record(spec, channels, {0, 0, 1, 0}, 12);
    auto sh = dsp::cwt(healthy.channels[0], 8000.0, 50.0, 16, 64);
    auto sb = dsp::cwt(bearing.channels[0], 8000.0, 50.0, 16, 64);
    // scale rows are ordered high-frequency first
    auto row_var = [](const dsp::Scalogram& s, int row) {
        double mean = 0;
        for (int t = 0; t < s.frames; ++t) mean += s.at(row, t);
        mean /= s.frames;
        double var = 0;
        for (int t = 0; t < s.frames; ++t) {
            double d = s.at(row, t) - mean;
            var += d * d;
        }
        return var / s.frames;
    };
    double vh = 0, vb = 0;
    for (int r = 0; r < 4; ++r) {
        vh += row_var(sh, r);
        vb += row_var(sb, r);
    }
    CHECK(vb > vh);
}

TEST_CASE("index vector: 12 per channel, finite, names align") {
    MachineSpec spec;
    spec.machine_id = 1;
    spec.rotating_freq = 50.0;
    spec.sample_count = 1;
    std::vector<ChannelConfig> channels = {
        {0, ChannelKind::velocity, 2000.0, 1024},
        {1, ChannelKind::acceleration, 4000.0, 1024},
        {2, ChannelKind::acceleration, 8000.0, 1024}};
    auto rec = make_record(spec, channels, {0, 0, 0, 0}, 1);
    auto iv = dsp::index_vector(rec, channels);
    auto names = dsp::index_names(3);
    CHECK(iv.size() == 36);
    CHECK(names.size() == 36);
    for (double v : iv) CHECK(std::isfinite(v));
    // invariants for non-degenerate signals
    CHECK(iv[0] >= iv[1]);  // peak >= rms
    CHECK(iv[1] > 0);
    CHECK(iv[4] >= 1.0);    // crest
}

TEST_CASE("featurize: shapes, determinism, normalized fold stats") {
    MachineSpec spec;
    spec.machine_id = 1;
    spec.rotating_freq = 50.0;
    spec.sample_count = 1;
    std::vector<ChannelConfig> channels = {
        {0, ChannelKind::velocity, 2000.0, 1024},
        {1, ChannelKind::acceleration, 4000.0, 1024},
        {2, ChannelKind::acceleration, 8000.0, 1024}};
    dsp::FeatureProfile prof;  // 3 channels, 16x64

    std::vector<dsp::RawFeatures> raws;
    std::vector<const dsp::RawFeatures*> ptrs;
    for (int i = 0; i < 24; ++i)
        raws.push_back(dsp::extract_raw(
            make_record(spec, channels, {0, 0, 0, 0},
                        static_cast<uint64_t>(100 + i)),
            channels, prof));
    for (const auto& r : raws) ptrs.push_back(&r);
    auto stats = dsp::compute_norm_stats(ptrs);

    auto rec = make_record(spec, channels, {1, 0, 0, 0}, 500);
    auto b1 = dsp::featurize(rec, channels, prof, stats);
    auto b2 = dsp::featurize(rec, channels, prof, stats);
    REQUIRE(b1.signals.size() == 3);
    REQUIRE(b1.spectra.size() == 3);
    REQUIRE(b1.scalograms.size() == 3);
    CHECK(b1.signals[0].shape == std::vector<int>{1, 1024});
    CHECK(b1.spectra[0].shape == std::vector<int>{1, 512});
    CHECK(b1.scalograms[0].shape == std::vector<int>{1, 16, 64});
    for (size_t f = 0; f < 3; ++f) {
        CHECK(b1.signals[f].v == b2.signals[f].v);
        CHECK(b1.spectra[f].v == b2.spectra[f].v);
        CHECK(b1.scalograms[f].v == b2.scalograms[f].v);
    }

    // normalized training features: per-dimension mean ~ 0, std ~ 1
    std::vector<dsp::FeatureBundle> normed;
    for (const auto& r : raws) normed.push_back(dsp::normalize(r, stats));
    const auto& t0 = normed[0].spectra[2];
    for (size_t d = 0; d < t0.v.size(); d += 37) {
        double mean = 0, sq = 0;
        for (const auto& b : normed) {
            double v = b.spectra[2].v[d];
            mean += v;
            sq += v * v;
        }
        mean /= static_cast<double>(normed.size());
        sq /= static_cast<double>(normed.size());
        double sd = std::sqrt(std::max(0.0, sq - mean * mean));
        CHECK(std::abs(mean) < 0.05);
        if (sd > 1e-6) CHECK(sd == doctest::Approx(1.0).epsilon(0.05));
    }
}
