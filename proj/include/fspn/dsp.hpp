#pragma once

#include <array>
#include <span>
#include <string>

#include "fspn/data.hpp"
#include "fspn/tensor.hpp"

namespace fspn {
namespace dsp {

struct TimeIndices {
    double peak = 0, rms = 0, kurtosis = 0, skewness = 0, crest = 0, impulse = 0;
    bool degenerate = false;

    std::array<double, 6> as_array() const {
        return {peak, rms, kurtosis, skewness, crest, impulse};
    }
};

// Moments are raw (about zero), matching the vibration convention: a pure
// sine has kurtosis 1.5, a constant has kurtosis 1.
TimeIndices time_indices(std::span<const float> signal);

struct Spectrum {
    std::vector<double> mag;  // one-sided, length = signal_length / 2
    double bin_width = 0.0;   // hertz
};

// One-sided magnitude spectrum with 2/L scaling: a unit-amplitude
// bin-centered sinusoid yields magnitude 1.0 at its bin.
Spectrum spectrum(std::span<const float> signal, double sampling_rate);

// amp_kX for k in {0.5, 1, 2, 3, 4, 5}; max magnitude within +-2 bins.
std::array<double, 6> freq_indices(const Spectrum& spec, double rotating_freq);

struct Scalogram {
    int scales = 0;
    int frames = 0;
    std::vector<double> mag;  // row-major scales x frames

    double at(int s, int t) const { return mag[static_cast<size_t>(s) * frames + t]; }
};

// Morlet (center frequency 6.0) magnitude scalogram; scales geometrically
// spaced so their center frequencies cover [rotating_freq/2, Nyquist/2];
// time axis average-pooled down to `frames`.
Scalogram cwt(std::span<const float> signal, double sampling_rate,
              double rotating_freq, int n_scales, int frames);

// 12 indices per channel (6 time + 6 frequency domain), concatenated.
std::vector<double> index_vector(const VibrationRecord& record,
                                 const std::vector<ChannelConfig>& channels);

std::vector<std::string> index_names(int n_channels);

// Sizes of the 9 model inputs produced by featurization.
struct FeatureProfile {
    int n_channels = 3;
    int n_scales = 16;
    int frames = 64;
};

// Unnormalized per-record features: per channel the raw signal, spectrum and
// scalogram, all as float tensors.
struct RawFeatures {
    std::vector<Tensor> signals;     // [1, L]
    std::vector<Tensor> spectra;     // [1, F]
    std::vector<Tensor> scalograms;  // [1, S, T']
};

RawFeatures extract_raw(const VibrationRecord& record,
                        const std::vector<ChannelConfig>& channels,
                        const FeatureProfile& profile);

// Per-dimension standardization statistics, one pair of tensors per input.
// Computed on training folds only and then frozen.
struct NormStats {
    std::vector<std::vector<float>> mean;  // 3*n_channels entries
    std::vector<std::vector<float>> std;
};

NormStats compute_norm_stats(const std::vector<const RawFeatures*>& features);

struct FeatureBundle {
    std::vector<Tensor> signals;
    std::vector<Tensor> spectra;
    std::vector<Tensor> scalograms;
};

FeatureBundle normalize(const RawFeatures& raw, const NormStats& stats);

FeatureBundle featurize(const VibrationRecord& record,
                        const std::vector<ChannelConfig>& channels,
                        const FeatureProfile& profile, const NormStats& stats);

}  // namespace dsp
}  // namespace fspn
