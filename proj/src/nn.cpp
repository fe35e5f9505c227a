#include "fspn/nn.hpp"

#include <cmath>

namespace fspn {
namespace nn {

namespace {

void he_uniform(std::vector<float>& v, int fan_in, Rng& rng) {
    double limit = std::sqrt(6.0 / std::max(1, fan_in));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-limit, limit));
}

class Conv1d final : public Layer {
public:
    Conv1d(std::string name, int in_ch, int out_ch, int k, int stride,
           Partition part, int head)
        : name_(std::move(name)), in_(in_ch), out_(out_ch), k_(k), s_(stride),
          part_(part), head_(head) {}

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        if (in.size() != 2 || in[0] != in_ || in[1] < k_)
            throw StructuralError("conv1d " + name_ + ": bad input shape");
        return {out_, (in[1] - k_) / s_ + 1};
    }

    void init_params(ParamSet& p, Rng& rng) const override {
        auto& w = p.add(name_ + ".W", part_, head_, {out_, in_, k_});
        he_uniform(w.v, in_ * k_, rng);
        p.add(name_ + ".b", part_, head_, {out_});
    }

    Tensor forward(const Tensor& x, const ParamSet& p,
                   LayerCtx& ctx) const override {
        const int L = x.shape[1];
        const int Lo = (L - k_) / s_ + 1;
        const auto& w = p.at(name_ + ".W").v;
        const auto& b = p.at(name_ + ".b").v;
        Tensor y({out_, Lo});
        for (int oc = 0; oc < out_; ++oc) {
            const float* wo = &w[static_cast<size_t>(oc) * in_ * k_];
            float* yo = &y.v[static_cast<size_t>(oc) * Lo];
            for (int t = 0; t < Lo; ++t) {
                double acc = b[oc];
                const int base = t * s_;
                for (int ic = 0; ic < in_; ++ic) {
                    const float* xi = &x.v[static_cast<size_t>(ic) * L + base];
                    const float* wi = &wo[ic * k_];
                    for (int j = 0; j < k_; ++j) acc += wi[j] * xi[j];
                }
                yo[t] = static_cast<float>(acc);
            }
        }
        ctx.x = x;
        return y;
    }

    Tensor backward(const Tensor& gy, const ParamSet& p, const LayerCtx& ctx,
                    ParamSet& g) const override {
        const Tensor& x = ctx.x;
        const int L = x.shape[1];
        const int Lo = gy.shape[1];
        const auto& w = p.at(name_ + ".W").v;
        auto& gw = g.at(name_ + ".W").v;
        auto& gb = g.at(name_ + ".b").v;
        Tensor gx(x.shape);
        for (int oc = 0; oc < out_; ++oc) {
            const float* wo = &w[static_cast<size_t>(oc) * in_ * k_];
            float* gwo = &gw[static_cast<size_t>(oc) * in_ * k_];
            const float* gyo = &gy.v[static_cast<size_t>(oc) * Lo];
            double gbacc = 0.0;
            for (int t = 0; t < Lo; ++t) {
                const float gyv = gyo[t];
                gbacc += gyv;
                const int base = t * s_;
                for (int ic = 0; ic < in_; ++ic) {
                    const float* xi = &x.v[static_cast<size_t>(ic) * L + base];
                    float* gxi = &gx.v[static_cast<size_t>(ic) * L + base];
                    float* gwi = &gwo[ic * k_];
                    const float* wi = &wo[ic * k_];
                    for (int j = 0; j < k_; ++j) {
                        gwi[j] += gyv * xi[j];
                        gxi[j] += gyv * wi[j];
                    }
                }
            }
            gb[oc] += static_cast<float>(gbacc);
        }
        return gx;
    }

private:
    std::string name_;
    int in_, out_, k_, s_;
    Partition part_;
    int head_;
};

class Conv2d final : public Layer {
public:
    Conv2d(std::string name, int in_ch, int out_ch, int k, int stride,
           Partition part, int head)
        : name_(std::move(name)), in_(in_ch), out_(out_ch), k_(k), s_(stride),
          part_(part), head_(head) {}

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        if (in.size() != 3 || in[0] != in_ || in[1] < k_ || in[2] < k_)
            throw StructuralError("conv2d " + name_ + ": bad input shape");
        return {out_, (in[1] - k_) / s_ + 1, (in[2] - k_) / s_ + 1};
    }

    void init_params(ParamSet& p, Rng& rng) const override {
        auto& w = p.add(name_ + ".W", part_, head_, {out_, in_, k_, k_});
        he_uniform(w.v, in_ * k_ * k_, rng);
        p.add(name_ + ".b", part_, head_, {out_});
    }

    Tensor forward(const Tensor& x, const ParamSet& p,
                   LayerCtx& ctx) const override {
        const int H = x.shape[1], W = x.shape[2];
        const int Ho = (H - k_) / s_ + 1, Wo = (W - k_) / s_ + 1;
        const auto& w = p.at(name_ + ".W").v;
        const auto& b = p.at(name_ + ".b").v;
        Tensor y({out_, Ho, Wo});
        for (int oc = 0; oc < out_; ++oc) {
            const float* wo = &w[static_cast<size_t>(oc) * in_ * k_ * k_];
            float* yo = &y.v[static_cast<size_t>(oc) * Ho * Wo];
            for (int r = 0; r < Ho; ++r) {
                for (int c = 0; c < Wo; ++c) {
                    double acc = b[oc];
                    for (int ic = 0; ic < in_; ++ic) {
                        const float* xi = &x.v[(static_cast<size_t>(ic) * H +
                                                r * s_) * W + c * s_];
                        const float* wi = &wo[(ic * k_) * k_];
                        for (int u = 0; u < k_; ++u)
                            for (int vcol = 0; vcol < k_; ++vcol)
                                acc += wi[u * k_ + vcol] * xi[u * W + vcol];
                    }
                    yo[r * Wo + c] = static_cast<float>(acc);
                }
            }
        }
        ctx.x = x;
        return y;
    }

    Tensor backward(const Tensor& gy, const ParamSet& p, const LayerCtx& ctx,
                    ParamSet& g) const override {
        const Tensor& x = ctx.x;
        const int H = x.shape[1], W = x.shape[2];
        const int Ho = gy.shape[1], Wo = gy.shape[2];
        const auto& w = p.at(name_ + ".W").v;
        auto& gw = g.at(name_ + ".W").v;
        auto& gb = g.at(name_ + ".b").v;
        Tensor gx(x.shape);
        for (int oc = 0; oc < out_; ++oc) {
            const float* wo = &w[static_cast<size_t>(oc) * in_ * k_ * k_];
            float* gwo = &gw[static_cast<size_t>(oc) * in_ * k_ * k_];
            const float* gyo = &gy.v[static_cast<size_t>(oc) * Ho * Wo];
            double gbacc = 0.0;
            for (int r = 0; r < Ho; ++r) {
                for (int c = 0; c < Wo; ++c) {
                    const float gyv = gyo[r * Wo + c];
                    gbacc += gyv;
                    for (int ic = 0; ic < in_; ++ic) {
                        const float* xi = &x.v[(static_cast<size_t>(ic) * H +
                                                r * s_) * W + c * s_];
                        float* gxi = &gx.v[(static_cast<size_t>(ic) * H +
                                            r * s_) * W + c * s_];
                        float* gwi = &gwo[(ic * k_) * k_];
                        const float* wi = &wo[(ic * k_) * k_];
                        for (int u = 0; u < k_; ++u)
                            for (int vcol = 0; vcol < k_; ++vcol) {
                                gwi[u * k_ + vcol] += gyv * xi[u * W + vcol];
                                gxi[u * W + vcol] += gyv * wi[u * k_ + vcol];
                            }
                    }
                }
            }
            gb[oc] += static_cast<float>(gbacc);
        }
        return gx;
    }

private:
    std::string name_;
    int in_, out_, k_, s_;
    Partition part_;
    int head_;
};

class MaxPool1d final : public Layer {
public:
    explicit MaxPool1d(int p) : p_(p) {}

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        if (in.size() != 2 || in[1] < p_)
            throw StructuralError("maxpool1d: bad input shape");
        return {in[0], in[1] / p_};
    }

    Tensor forward(const Tensor& x, const ParamSet&,
                   LayerCtx& ctx) const override {
        const int C = x.shape[0], L = x.shape[1], Lo = L / p_;
        Tensor y({C, Lo});
        ctx.aux.resize(static_cast<size_t>(C) * Lo);
        for (int c = 0; c < C; ++c) {
            for (int t = 0; t < Lo; ++t) {
                int best = c * L + t * p_;
                for (int j = 1; j < p_; ++j)
                    if (x.v[c * L + t * p_ + j] > x.v[best]) best = c * L + t * p_ + j;
                y.v[static_cast<size_t>(c) * Lo + t] = x.v[best];
                ctx.aux[static_cast<size_t>(c) * Lo + t] = best;
            }
        }
        ctx.x.shape = x.shape;  // shape only; values not needed
        return y;
    }

    Tensor backward(const Tensor& gy, const ParamSet&, const LayerCtx& ctx,
                    ParamSet&) const override {
        Tensor gx(ctx.x.shape);
        for (size_t i = 0; i < gy.v.size(); ++i)
            gx.v[static_cast<size_t>(ctx.aux[i])] += gy.v[i];
        return gx;
    }

private:
    int p_;
};

class MaxPool2d final : public Layer {
public:
    explicit MaxPool2d(int p) : p_(p) {}

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        if (in.size() != 3 || in[1] < p_ || in[2] < p_)
            throw StructuralError("maxpool2d: bad input shape");
        return {in[0], in[1] / p_, in[2] / p_};
    }

    Tensor forward(const Tensor& x, const ParamSet&,
                   LayerCtx& ctx) const override {
        const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
        const int Ho = H / p_, Wo = W / p_;
        Tensor y({C, Ho, Wo});
        ctx.aux.resize(static_cast<size_t>(C) * Ho * Wo);
        size_t o = 0;
        for (int c = 0; c < C; ++c) {
            for (int r = 0; r < Ho; ++r) {
                for (int col = 0; col < Wo; ++col, ++o) {
                    int best = (c * H + r * p_) * W + col * p_;
                    for (int u = 0; u < p_; ++u)
                        for (int v = 0; v < p_; ++v) {
                            int idx = (c * H + r * p_ + u) * W + col * p_ + v;
                            if (x.v[idx] > x.v[best]) best = idx;
                        }
                    y.v[o] = x.v[best];
                    ctx.aux[o] = best;
                }
            }
        }
        ctx.x.shape = x.shape;
        return y;
    }

    Tensor backward(const Tensor& gy, const ParamSet&, const LayerCtx& ctx,
                    ParamSet&) const override {
        Tensor gx(ctx.x.shape);
        for (size_t i = 0; i < gy.v.size(); ++i)
            gx.v[static_cast<size_t>(ctx.aux[i])] += gy.v[i];
        return gx;
    }

private:
    int p_;
};

class Dense final : public Layer {
public:
    Dense(std::string name, int in, int out, Partition part, int head)
        : name_(std::move(name)), in_(in), out_(out), part_(part), head_(head) {}

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        if (Tensor::numel(in) != in_)
            throw StructuralError("dense " + name_ + ": bad input size");
        return {out_};
    }

    void init_params(ParamSet& p, Rng& rng) const override {
        auto& w = p.add(name_ + ".W", part_, head_, {out_, in_});
        he_uniform(w.v, in_, rng);
        p.add(name_ + ".b", part_, head_, {out_});
    }

    Tensor forward(const Tensor& x, const ParamSet& p,
                   LayerCtx& ctx) const override {
        const auto& w = p.at(name_ + ".W").v;
        const auto& b = p.at(name_ + ".b").v;
        Tensor y({out_});
        for (int o = 0; o < out_; ++o) {
            double acc = b[o];
            const float* wo = &w[static_cast<size_t>(o) * in_];
            for (int i = 0; i < in_; ++i) acc += wo[i] * x.v[i];
            y.v[o] = static_cast<float>(acc);
        }
        ctx.x = x;
        return y;
    }

    Tensor backward(const Tensor& gy, const ParamSet& p, const LayerCtx& ctx,
                    ParamSet& g) const override {
        const auto& w = p.at(name_ + ".W").v;
        auto& gw = g.at(name_ + ".W").v;
        auto& gb = g.at(name_ + ".b").v;
        Tensor gx(ctx.x.shape);
        for (int o = 0; o < out_; ++o) {
            const float gyv = gy.v[o];
            gb[o] += gyv;
            const float* wo = &w[static_cast<size_t>(o) * in_];
            float* gwo = &gw[static_cast<size_t>(o) * in_];
            for (int i = 0; i < in_; ++i) {
                gwo[i] += gyv * ctx.x.v[i];
                gx.v[i] += gyv * wo[i];
            }
        }
        return gx;
    }

private:
    std::string name_;
    int in_, out_;
    Partition part_;
    int head_;
};

class ReLU final : public Layer {
public:
    std::vector<int> out_shape(const std::vector<int>& in) const override {
        return in;
    }
    Tensor forward(const Tensor& x, const ParamSet&,
                   LayerCtx& ctx) const override {
        Tensor y = x;
        for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
        ctx.x = x;
        return y;
    }
    Tensor backward(const Tensor& gy, const ParamSet&, const LayerCtx& ctx,
                    ParamSet&) const override {
        Tensor gx = gy;
        for (size_t i = 0; i < gx.v.size(); ++i)
            if (ctx.x.v[i] <= 0.0f) gx.v[i] = 0.0f;
        return gx;
    }
};

class Sigmoid final : public Layer {
public:
    std::vector<int> out_shape(const std::vector<int>& in) const override {
        return in;
    }
    Tensor forward(const Tensor& x, const ParamSet&,
                   LayerCtx& ctx) const override {
        Tensor y = x;
        for (auto& v : y.v)
            v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
        ctx.x = y;  // store the output; the derivative is y(1-y)
        return y;
    }
    Tensor backward(const Tensor& gy, const ParamSet&, const LayerCtx& ctx,
                    ParamSet&) const override {
        Tensor gx = gy;
        for (size_t i = 0; i < gx.v.size(); ++i) {
            float y = ctx.x.v[i];
            gx.v[i] *= y * (1.0f - y);
        }
        return gx;
    }
};

class Flatten final : public Layer {
public:
    std::vector<int> out_shape(const std::vector<int>& in) const override {
        return {static_cast<int>(Tensor::numel(in))};
    }
    Tensor forward(const Tensor& x, const ParamSet&,
                   LayerCtx& ctx) const override {
        ctx.x.shape = x.shape;
        Tensor y = x;
        y.shape = {static_cast<int>(x.v.size())};
        return y;
    }
    Tensor backward(const Tensor& gy, const ParamSet&, const LayerCtx& ctx,
                    ParamSet&) const override {
        Tensor gx = gy;
        gx.shape = ctx.x.shape;
        return gx;
    }
};

}  // namespace

std::unique_ptr<Layer> make_conv1d(const std::string& name, int in_ch,
                                   int out_ch, int kernel, int stride,
                                   Partition part, int head) {
    return std::make_unique<Conv1d>(name, in_ch, out_ch, kernel, stride, part,
                                    head);
}
std::unique_ptr<Layer> make_conv2d(const std::string& name, int in_ch,
                                   int out_ch, int kernel, int stride,
                                   Partition part, int head) {
    return std::make_unique<Conv2d>(name, in_ch, out_ch, kernel, stride, part,
                                    head);
}
std::unique_ptr<Layer> make_maxpool1d(int pool) {
    return std::make_unique<MaxPool1d>(pool);
}
std::unique_ptr<Layer> make_maxpool2d(int pool) {
    return std::make_unique<MaxPool2d>(pool);
}
std::unique_ptr<Layer> make_dense(const std::string& name, int in, int out,
                                  Partition part, int head) {
    return std::make_unique<Dense>(name, in, out, part, head);
}
std::unique_ptr<Layer> make_relu() { return std::make_unique<ReLU>(); }
std::unique_ptr<Layer> make_sigmoid() { return std::make_unique<Sigmoid>(); }
std::unique_ptr<Layer> make_flatten() { return std::make_unique<Flatten>(); }

std::vector<int> stack_out_shape(const Stack& stack, std::vector<int> shape) {
    for (const auto& l : stack) shape = l->out_shape(shape);
    return shape;
}

void stack_init(const Stack& stack, ParamSet& params, Rng& rng) {
    for (const auto& l : stack) l->init_params(params, rng);
}

Tensor stack_forward(const Stack& stack, Tensor x, const ParamSet& params,
                     std::vector<LayerCtx>* ctx) {
    if (ctx) ctx->resize(stack.size());
    LayerCtx scratch;
    for (size_t i = 0; i < stack.size(); ++i)
        x = stack[i]->forward(x, params, ctx ? (*ctx)[i] : scratch);
    return x;
}

Tensor stack_backward(const Stack& stack, Tensor gy, const ParamSet& params,
                      const std::vector<LayerCtx>& ctx, ParamSet& grads) {
    if (ctx.size() != stack.size())
        throw TrainingError("backward called with a stale or missing cache");
    for (size_t i = stack.size(); i-- > 0;)
        gy = stack[i]->backward(gy, params, ctx[i], grads);
    return gy;
}

Tensor concat_maps(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw StructuralError("concat of zero tensors");
    const int C = xs[0].shape[0];
    int total = 0;
    for (const auto& x : xs) {
        if (x.shape.size() != 2 || x.shape[0] != C)
            throw StructuralError("concat inputs must be [C, L] with equal C");
        total += x.shape[1];
    }
    Tensor y({C, total});
    int off = 0;
    for (const auto& x : xs) {
        const int L = x.shape[1];
        for (int c = 0; c < C; ++c)
            std::copy(x.v.begin() + static_cast<size_t>(c) * L,
                      x.v.begin() + static_cast<size_t>(c + 1) * L,
                      y.v.begin() + static_cast<size_t>(c) * total + off);
        off += L;
    }
    return y;
}

std::vector<Tensor> split_maps(const Tensor& gy,
                               const std::vector<int>& lengths) {
    const int C = gy.shape[0];
    const int total = gy.shape[1];
    std::vector<Tensor> out;
    int off = 0;
    for (int L : lengths) {
        Tensor t({C, L});
        for (int c = 0; c < C; ++c)
            std::copy(gy.v.begin() + static_cast<size_t>(c) * total + off,
                      gy.v.begin() + static_cast<size_t>(c) * total + off + L,
                      t.v.begin() + static_cast<size_t>(c) * L);
        out.push_back(std::move(t));
        off += L;
    }
    if (off != total) throw StructuralError("split lengths do not cover input");
    return out;
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr,
              double momentum, ParamSet& velocity) {
    if (!ParamSet::same_structure(params, grads) ||
        !ParamSet::same_structure(params, velocity))
        throw TrainingError("sgd_step: structural mismatch");
    for (size_t a = 0; a < params.arrays().size(); ++a) {
        auto& p = params.arrays()[a].v;
        const auto& g = grads.arrays()[a].v;
        auto& v = velocity.arrays()[a].v;
        for (size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw TrainingError("non-finite gradient in " +
                                    params.arrays()[a].name);
            v[i] = static_cast<float>(momentum * v[i] + g[i]);
            p[i] = static_cast<float>(p[i] - lr * v[i]);
        }
    }
}

}  // namespace nn
}  // namespace fspn
