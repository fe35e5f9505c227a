#pragma once

#include <string>
#include <vector>

#include "fspn/dsp.hpp"
#include "fspn/nn.hpp"

namespace fspn {
namespace model {

struct ConvStage {
    int out_ch;
    int kernel;
    int stride;
    int pool;  // 1 = no pooling
};

// Architecture description: per input family a conv stack ending in feature
// maps of equal channel count, concatenated along the length axis, a shared
// conv + dense trunk, and one small dense head per fault.
struct ModelProfile {
    std::string name;
    int n_channels = 3;
    std::vector<int> signal_len;
    std::vector<int> spectrum_len;
    std::vector<std::pair<int, int>> scalo_size;  // (scales, frames) per channel
    std::vector<ConvStage> signal_convs;
    std::vector<ConvStage> spectrum_convs;
    std::vector<ConvStage> scalo_convs;
    int shared_kernel = 3;
    int trunk_width = 32;
    int head_width = 32;
};

// 3 channels of length-1024 signals, 512-bin spectra, 16x64 scalograms.
ModelProfile desk_profile();
// Full-scale input sizes (4k/8k/16k signals, up to 384x384 scalograms);
// used for shape and parameter-count arithmetic only.
ModelProfile paper_shape_profile();
// Sub-500-parameter shrink of the desk layout for finite-difference checks.
ModelProfile tiny_profile();

dsp::FeatureProfile feature_profile_for(const ModelProfile& p);

struct DiagnosisModel {
    ModelProfile profile;
    int n_faults = 0;
    std::vector<nn::Stack> branches;  // 3 * n_channels input branches
    std::vector<int> branch_channels;
    std::vector<int> branch_lengths;  // map length per branch after reshape
    nn::Stack shared;                 // shared conv + trunk (common partition)
    std::vector<nn::Stack> heads;
    ParamSet params;

    long param_count() const { return params.total_size(); }
};

DiagnosisModel build_model(const ModelProfile& profile, int n_faults,
                           uint64_t seed);

struct ModelCtx {
    std::vector<std::vector<nn::LayerCtx>> branch_ctx;
    std::vector<nn::LayerCtx> shared_ctx;
    std::vector<std::vector<nn::LayerCtx>> head_ctx;
};

// Forward through the given parameter set (usually model.params); outputs one
// probability per fault.
std::vector<double> forward(const DiagnosisModel& m, const ParamSet& params,
                            const dsp::FeatureBundle& bundle, ModelCtx* ctx);

inline std::vector<double> predict(const DiagnosisModel& m,
                                   const dsp::FeatureBundle& bundle) {
    return forward(m, m.params, bundle, nullptr);
}

// Backpropagate d(loss)/d(outputs); parameter gradients accumulate into
// `grads`.
void backward(const DiagnosisModel& m, const ParamSet& params,
              const ModelCtx& ctx, const std::vector<double>& out_grad,
              ParamSet& grads);

// F1 floor applied before any division by an F1 score.
constexpr double kF1Floor = 0.05;

struct TaskState {
    std::vector<double> f;  // per-task F1 from the last training step
    std::vector<double> r;  // per-task fault rate in the training partition
};

// T_i = (sum_j f_j) / f_i with floored f values.
std::vector<double> sensitive_coefficients(const TaskState& state);

struct LossResult {
    double total = 0.0;
    std::vector<double> weights;  // per-element C, n x N row-major
    std::vector<double> grad;     // dL/dy = 2 (y - l) C
};

// Sensitive-cost loss: C_i^j = (l_i^j (1 - r_i) + 1) T_i,
// L = sum_j sum_i (y_i^j - l_i^j)^2 C_i^j.
LossResult adaptive_loss(const std::vector<double>& outputs,
                         const std::vector<uint8_t>& labels, int n_samples,
                         int n_tasks, const TaskState& state);

struct TaskMetrics {
    long tp = 0, tn = 0, fp = 0, fn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

std::vector<TaskMetrics> metrics(const std::vector<double>& preds,
                                 const std::vector<uint8_t>& labels,
                                 int n_samples, int n_tasks,
                                 double threshold = 0.5);

struct TrainView {
    std::vector<const dsp::FeatureBundle*> bundles;
    std::vector<const uint8_t*> labels;  // n_tasks entries each
};

struct TrainResult {
    double mean_f1 = 0.0;        // over tasks with >= 1 positive sample
    std::vector<double> epoch_loss;
    std::vector<std::vector<double>> epoch_f1;
};

// Minibatch SGD on the adaptive loss; state.f is refreshed from training-set
// F1 after each epoch. Tasks without positive samples train as negatives and
// are excluded from the returned mean.
TrainResult train_local(DiagnosisModel& m, const TrainView& data, int epochs,
                        int batch_size, double lr, double momentum,
                        TaskState& state, uint64_t seed);

}  // namespace model
}  // namespace fspn
