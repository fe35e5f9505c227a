#include "fspn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fspn {
namespace model {

ModelProfile desk_profile() {
    ModelProfile p;
    p.name = "desk";
    p.n_channels = 3;
    p.signal_len = {1024, 1024, 1024};
    p.spectrum_len = {512, 512, 512};
    p.scalo_size = {{16, 64}, {16, 64}, {16, 64}};
    p.signal_convs = {{4, 16, 8, 4}, {8, 5, 2, 2}};
    p.spectrum_convs = {{4, 16, 4, 4}, {8, 5, 2, 2}};
    p.scalo_convs = {{4, 3, 2, 1}, {8, 3, 2, 2}};
    p.shared_kernel = 3;
    p.trunk_width = 32;
    p.head_width = 32;
    return p;
}

ModelProfile paper_shape_profile() {
    ModelProfile p;
    p.name = "paper-shape";
    p.n_channels = 3;
    p.signal_len = {4096, 8192, 16384};
    p.spectrum_len = {128, 128, 256};
    p.scalo_size = {{128, 128}, {256, 256}, {384, 384}};
    p.signal_convs = {{8, 32, 8, 4}, {16, 9, 4, 2}, {16, 5, 2, 2}};
    p.spectrum_convs = {{8, 9, 2, 2}, {16, 5, 2, 2}};
    p.scalo_convs = {{8, 5, 2, 2}, {16, 3, 2, 2}, {16, 3, 2, 2}};
    p.shared_kernel = 3;
    p.trunk_width = 64;
    p.head_width = 64;
    return p;
}

ModelProfile tiny_profile() {
    ModelProfile p;
    p.name = "tiny";
    p.n_channels = 1;
    p.signal_len = {32};
    p.spectrum_len = {16};
    p.scalo_size = {{4, 8}};
    p.signal_convs = {{2, 5, 2, 2}};
    p.spectrum_convs = {{2, 5, 1, 2}};
    p.scalo_convs = {{2, 3, 1, 2}};
    p.shared_kernel = 3;
    p.trunk_width = 4;
    p.head_width = 3;
    return p;
}

dsp::FeatureProfile feature_profile_for(const ModelProfile& p) {
    dsp::FeatureProfile f;
    f.n_channels = p.n_channels;
    f.n_scales = p.scalo_size[0].first;
    f.frames = p.scalo_size[0].second;
    return f;
}

namespace {

nn::Stack build_1d_branch(const std::string& prefix, int in_len,
                          const std::vector<ConvStage>& stages) {
    nn::Stack s;
    int ch = 1;
    (void)in_len;
    for (size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        s.push_back(nn::make_conv1d(prefix + ".conv" + std::to_string(i), ch,
                                    st.out_ch, st.kernel, st.stride,
                                    Partition::common));
        s.push_back(nn::make_relu());
        if (st.pool > 1) s.push_back(nn::make_maxpool1d(st.pool));
        ch = st.out_ch;
    }
    return s;
}

nn::Stack build_2d_branch(const std::string& prefix,
                          const std::vector<ConvStage>& stages) {
    nn::Stack s;
    int ch = 1;
    for (size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        s.push_back(nn::make_conv2d(prefix + ".conv" + std::to_string(i), ch,
                                    st.out_ch, st.kernel, st.stride,
                                    Partition::common));
        s.push_back(nn::make_relu());
        if (st.pool > 1) s.push_back(nn::make_maxpool2d(st.pool));
        ch = st.out_ch;
    }
    return s;
}

}  // namespace

DiagnosisModel build_model(const ModelProfile& profile, int n_faults,
                           uint64_t seed) {
    DiagnosisModel m;
    m.profile = profile;
    m.n_faults = n_faults;
    const int nc = profile.n_channels;

    int map_ch = -1;
    int concat_len = 0;
    auto note_branch = [&](std::vector<int> out_shape) {
        int ch = out_shape[0];
        int len = static_cast<int>(Tensor::numel(out_shape)) / ch;
        if (map_ch < 0) map_ch = ch;
        if (ch != map_ch)
            throw nn::StructuralError(
                "branch output channel counts differ; cannot concatenate");
        m.branch_channels.push_back(ch);
        m.branch_lengths.push_back(len);
        concat_len += len;
    };

    for (int c = 0; c < nc; ++c) {
        auto s = build_1d_branch("sig" + std::to_string(c), profile.signal_len[c],
                                 profile.signal_convs);
        note_branch(nn::stack_out_shape(s, {1, profile.signal_len[c]}));
        m.branches.push_back(std::move(s));
    }
    for (int c = 0; c < nc; ++c) {
        auto s = build_1d_branch("spec" + std::to_string(c),
                                 profile.spectrum_len[c], profile.spectrum_convs);
        note_branch(nn::stack_out_shape(s, {1, profile.spectrum_len[c]}));
        m.branches.push_back(std::move(s));
    }
    for (int c = 0; c < nc; ++c) {
        auto s = build_2d_branch("scal" + std::to_string(c), profile.scalo_convs);
        note_branch(nn::stack_out_shape(
            s, {1, profile.scalo_size[c].first, profile.scalo_size[c].second}));
        m.branches.push_back(std::move(s));
    }

    // shared block over the concatenated maps
    m.shared.push_back(nn::make_conv1d("shared.conv", map_ch, map_ch,
                                       profile.shared_kernel, 1,
                                       Partition::common));
    m.shared.push_back(nn::make_relu());
    m.shared.push_back(nn::make_flatten());
    int shared_flat =
        map_ch * (concat_len - profile.shared_kernel + 1);
    m.shared.push_back(nn::make_dense("trunk", shared_flat, profile.trunk_width,
                                      Partition::common));
    m.shared.push_back(nn::make_relu());

    for (int h = 0; h < n_faults; ++h) {
        nn::Stack head;
        std::string prefix = "head" + std::to_string(h);
        head.push_back(nn::make_dense(prefix + ".fc0", profile.trunk_width,
                                      profile.head_width, Partition::head, h));
        head.push_back(nn::make_relu());
        head.push_back(nn::make_dense(prefix + ".fc1", profile.head_width, 1,
                                      Partition::head, h));
        head.push_back(nn::make_sigmoid());
        m.heads.push_back(std::move(head));
    }

    Rng rng(derive_seed(seed, 0xd1a9));
    for (const auto& b : m.branches) nn::stack_init(b, m.params, rng);
    nn::stack_init(m.shared, m.params, rng);
    for (const auto& h : m.heads) nn::stack_init(h, m.params, rng);
    return m;
}

namespace {

const Tensor& model_input(const dsp::FeatureBundle& bundle, int nc, int i) {
    if (i < nc) return bundle.signals[static_cast<size_t>(i)];
    if (i < 2 * nc) return bundle.spectra[static_cast<size_t>(i - nc)];
    return bundle.scalograms[static_cast<size_t>(i - 2 * nc)];
}

}  // namespace

std::vector<double> forward(const DiagnosisModel& m, const ParamSet& params,
                            const dsp::FeatureBundle& bundle, ModelCtx* ctx) {
    const int nc = m.profile.n_channels;
    const size_t nb = m.branches.size();
    if (ctx) {
        ctx->branch_ctx.resize(nb);
        ctx->head_ctx.resize(m.heads.size());
    }
    std::vector<Tensor> maps(nb);
    for (size_t b = 0; b < nb; ++b) {
        Tensor y = nn::stack_forward(m.branches[b],
                                     model_input(bundle, nc, static_cast<int>(b)),
                                     params, ctx ? &ctx->branch_ctx[b] : nullptr);
        // 2-d branch outputs become [C, H*W] maps
        y.shape = {m.branch_channels[b], m.branch_lengths[b]};
        maps[b] = std::move(y);
    }
    Tensor trunk = nn::stack_forward(m.shared, nn::concat_maps(maps), params,
                                     ctx ? &ctx->shared_ctx : nullptr);
    std::vector<double> out(m.heads.size());
    for (size_t h = 0; h < m.heads.size(); ++h) {
        Tensor y = nn::stack_forward(m.heads[h], trunk, params,
                                     ctx ? &ctx->head_ctx[h] : nullptr);
        out[h] = y.v[0];
    }
    return out;
}

void backward(const DiagnosisModel& m, const ParamSet& params,
              const ModelCtx& ctx, const std::vector<double>& out_grad,
              ParamSet& grads) {
    Tensor gtrunk({m.profile.trunk_width});
    for (size_t h = 0; h < m.heads.size(); ++h) {
        Tensor gy({1});
        gy.v[0] = static_cast<float>(out_grad[h]);
        Tensor gt = nn::stack_backward(m.heads[h], std::move(gy), params,
                                       ctx.head_ctx[h], grads);
        for (size_t i = 0; i < gtrunk.v.size(); ++i) gtrunk.v[i] += gt.v[i];
    }
    Tensor gconcat = nn::stack_backward(m.shared, std::move(gtrunk), params,
                                        ctx.shared_ctx, grads);
    std::vector<Tensor> gmaps = nn::split_maps(gconcat, m.branch_lengths);
    const int nc = m.profile.n_channels;
    for (size_t b = 0; b < m.branches.size(); ++b) {
        Tensor g = std::move(gmaps[b]);
        // restore the stack's true output shape ([C,H,W] for 2-d branches)
        std::vector<int> in_shape =
            b < static_cast<size_t>(nc)
                ? std::vector<int>{1, m.profile.signal_len[b]}
            : b < static_cast<size_t>(2 * nc)
                ? std::vector<int>{1, m.profile.spectrum_len[b - static_cast<size_t>(nc)]}
                : std::vector<int>{1,
                      m.profile.scalo_size[b - static_cast<size_t>(2 * nc)].first,
                      m.profile.scalo_size[b - static_cast<size_t>(2 * nc)].second};
        g.shape = nn::stack_out_shape(m.branches[b], in_shape);
        nn::stack_backward(m.branches[b], std::move(g), params,
                           ctx.branch_ctx[b], grads);
    }
}

std::vector<double> sensitive_coefficients(const TaskState& state) {
    const size_t n = state.f.size();
    double sum = 0.0;
    std::vector<double> floored(n);
    for (size_t i = 0; i < n; ++i) {
        floored[i] = std::max(state.f[i], kF1Floor);
        sum += floored[i];
    }
    std::vector<double> t(n);
    for (size_t i = 0; i < n; ++i) t[i] = sum / floored[i];
    return t;
}

LossResult adaptive_loss(const std::vector<double>& outputs,
                         const std::vector<uint8_t>& labels, int n_samples,
                         int n_tasks, const TaskState& state) {
    for (double r : state.r)
        if (r >= 1.0) throw DataError("adaptive_loss: fault rate must be < 1");
    std::vector<double> t = sensitive_coefficients(state);
    LossResult res;
    res.weights.resize(static_cast<size_t>(n_samples) * n_tasks);
    res.grad.resize(static_cast<size_t>(n_samples) * n_tasks);
    double total = 0.0;
    for (int j = 0; j < n_samples; ++j) {
        for (int i = 0; i < n_tasks; ++i) {
            const size_t idx = static_cast<size_t>(j) * n_tasks + i;
            const double l = labels[idx] ? 1.0 : 0.0;
            const double c = (l * (1.0 - state.r[static_cast<size_t>(i)]) + 1.0) *
                             t[static_cast<size_t>(i)];
            const double d = outputs[idx] - l;
            res.weights[idx] = c;
            res.grad[idx] = 2.0 * d * c;
            total += d * d * c;
        }
    }
    res.total = total;
    return res;
}

std::vector<TaskMetrics> metrics(const std::vector<double>& preds,
                                 const std::vector<uint8_t>& labels,
                                 int n_samples, int n_tasks, double threshold) {
    std::vector<TaskMetrics> out(static_cast<size_t>(n_tasks));
    for (int j = 0; j < n_samples; ++j) {
        for (int i = 0; i < n_tasks; ++i) {
            const size_t idx = static_cast<size_t>(j) * n_tasks + i;
            const bool pred = preds[idx] >= threshold;
            const bool truth = labels[idx] != 0;
            TaskMetrics& m = out[static_cast<size_t>(i)];
            if (pred && truth) ++m.tp;
            else if (!pred && !truth) ++m.tn;
            else if (pred && !truth) ++m.fp;
            else ++m.fn;
        }
    }
    for (auto& m : out) {
        const long n = m.tp + m.tn + m.fp + m.fn;
        m.accuracy = n > 0 ? static_cast<double>(m.tp + m.tn) / n : 0.0;
        m.precision = (m.tp + m.fp) > 0
                          ? static_cast<double>(m.tp) / (m.tp + m.fp)
                          : 0.0;
        m.recall = (m.tp + m.fn) > 0
                       ? static_cast<double>(m.tp) / (m.tp + m.fn)
                       : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    }
    return out;
}

namespace {

// full-dataset prediction pass
std::vector<double> predict_all(const DiagnosisModel& m, const TrainView& data) {
    const int n = static_cast<int>(data.bundles.size());
    std::vector<double> preds(static_cast<size_t>(n) * m.n_faults);
    for (int j = 0; j < n; ++j) {
        auto y = forward(m, m.params, *data.bundles[static_cast<size_t>(j)],
                         nullptr);
        for (int i = 0; i < m.n_faults; ++i)
            preds[static_cast<size_t>(j) * m.n_faults + i] = y[static_cast<size_t>(i)];
    }
    return preds;
}

std::vector<uint8_t> flat_labels(const TrainView& data, int n_tasks) {
    std::vector<uint8_t> out;
    out.reserve(data.labels.size() * static_cast<size_t>(n_tasks));
    for (const uint8_t* l : data.labels)
        out.insert(out.end(), l, l + n_tasks);
    return out;
}

}  // namespace

TrainResult train_local(DiagnosisModel& m, const TrainView& data, int epochs,
                        int batch_size, double lr, double momentum,
                        TaskState& state, uint64_t seed) {
    const int n = static_cast<int>(data.bundles.size());
    const int nt = m.n_faults;
    if (n == 0) throw DataError("train_local: empty training data");
    if (batch_size <= 0) throw DataError("train_local: bad batch size");

    std::vector<uint8_t> labels = flat_labels(data, nt);

    std::vector<int> positives(static_cast<size_t>(nt), 0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < nt; ++i)
            if (labels[static_cast<size_t>(j) * nt + i]) ++positives[static_cast<size_t>(i)];

    if (state.r.empty()) {
        state.r.resize(static_cast<size_t>(nt));
        for (int i = 0; i < nt; ++i)
            state.r[static_cast<size_t>(i)] =
                static_cast<double>(positives[static_cast<size_t>(i)]) / n;
    }
    if (state.f.empty()) state.f.assign(static_cast<size_t>(nt), 1.0);

    TrainResult result;
    ParamSet velocity = m.params.zeros_like();

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, 0xba7c4, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[rng.below(static_cast<uint64_t>(i + 1))]);

        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += batch_size) {
            const int bs = std::min(batch_size, n - start);
            ParamSet grads = m.params.zeros_like();
            std::vector<double> batch_out(static_cast<size_t>(bs) * nt);
            std::vector<uint8_t> batch_lab(static_cast<size_t>(bs) * nt);
            std::vector<ModelCtx> ctxs(static_cast<size_t>(bs));
            for (int b = 0; b < bs; ++b) {
                const int j = order[static_cast<size_t>(start + b)];
                auto y = forward(m, m.params, *data.bundles[static_cast<size_t>(j)],
                                 &ctxs[static_cast<size_t>(b)]);
                for (int i = 0; i < nt; ++i) {
                    batch_out[static_cast<size_t>(b) * nt + i] = y[static_cast<size_t>(i)];
                    batch_lab[static_cast<size_t>(b) * nt + i] =
                        labels[static_cast<size_t>(j) * nt + i];
                }
            }
            LossResult loss = adaptive_loss(batch_out, batch_lab, bs, nt, state);
            epoch_loss += loss.total;
            for (int b = 0; b < bs; ++b) {
                std::vector<double> gy(static_cast<size_t>(nt));
                for (int i = 0; i < nt; ++i)
                    gy[static_cast<size_t>(i)] =
                        loss.grad[static_cast<size_t>(b) * nt + i] / bs;
                backward(m, m.params, ctxs[static_cast<size_t>(b)], gy, grads);
            }
            nn::sgd_step(m.params, grads, lr, momentum, velocity);
        }
        result.epoch_loss.push_back(epoch_loss / n);

        // refresh f_i from training-set F1 after the epoch
        auto preds = predict_all(m, data);
        auto ms = metrics(preds, labels, n, nt);
        std::vector<double> f1s(static_cast<size_t>(nt));
        for (int i = 0; i < nt; ++i) {
            f1s[static_cast<size_t>(i)] = ms[static_cast<size_t>(i)].f1;
            state.f[static_cast<size_t>(i)] =
                positives[static_cast<size_t>(i)] > 0
                    ? std::max(ms[static_cast<size_t>(i)].f1, kF1Floor)
                    : 1.0;
        }
        result.epoch_f1.push_back(std::move(f1s));
    }

    // mean F1 over tasks with positives, on current params
    auto preds = predict_all(m, data);
    auto ms = metrics(preds, labels, n, nt);
    double sum = 0.0;
    int cnt = 0;
    for (int i = 0; i < nt; ++i) {
        if (positives[static_cast<size_t>(i)] > 0) {
            sum += ms[static_cast<size_t>(i)].f1;
            ++cnt;
        }
    }
    result.mean_f1 = cnt > 0 ? sum / cnt : kF1Floor;
    return result;
}

}  // namespace model
}  // namespace fspn
