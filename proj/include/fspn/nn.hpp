#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fspn/data.hpp"
#include "fspn/rng.hpp"
#include "fspn/tensor.hpp"

namespace fspn {
namespace nn {

struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Saved per-layer state from a forward pass, consumed by backward.
struct LayerCtx {
    Tensor x;               // layer input (or output, for sigmoid)
    std::vector<int> aux;   // argmax indices for pooling
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::vector<int> out_shape(const std::vector<int>& in) const = 0;
    // Register this layer's parameter arrays and their seeded initial values.
    virtual void init_params(ParamSet&, Rng&) const {}
    virtual Tensor forward(const Tensor& x, const ParamSet& p,
                           LayerCtx& ctx) const = 0;
    // Returns the gradient w.r.t. the layer input; accumulates parameter
    // gradients into `g`.
    virtual Tensor backward(const Tensor& gy, const ParamSet& p,
                            const LayerCtx& ctx, ParamSet& g) const = 0;
};

std::unique_ptr<Layer> make_conv1d(const std::string& name, int in_ch,
                                   int out_ch, int kernel, int stride,
                                   Partition part, int head = -1);
std::unique_ptr<Layer> make_conv2d(const std::string& name, int in_ch,
                                   int out_ch, int kernel, int stride,
                                   Partition part, int head = -1);
std::unique_ptr<Layer> make_maxpool1d(int pool);
std::unique_ptr<Layer> make_maxpool2d(int pool);
std::unique_ptr<Layer> make_dense(const std::string& name, int in, int out,
                                  Partition part, int head = -1);
std::unique_ptr<Layer> make_relu();
std::unique_ptr<Layer> make_sigmoid();
std::unique_ptr<Layer> make_flatten();

using Stack = std::vector<std::unique_ptr<Layer>>;

std::vector<int> stack_out_shape(const Stack& stack, std::vector<int> shape);
void stack_init(const Stack& stack, ParamSet& params, Rng& rng);
Tensor stack_forward(const Stack& stack, Tensor x, const ParamSet& params,
                     std::vector<LayerCtx>* ctx);
Tensor stack_backward(const Stack& stack, Tensor gy, const ParamSet& params,
                      const std::vector<LayerCtx>& ctx, ParamSet& grads);

// Concatenation of feature maps [C, L_i] with equal channel count along the
// length axis, and the matching gradient split.
Tensor concat_maps(const std::vector<Tensor>& xs);
std::vector<Tensor> split_maps(const Tensor& gy, const std::vector<int>& lengths);

// p <- p - lr * v with v <- momentum * v + g. Throws TrainingError on
// non-finite gradients.
void sgd_step(ParamSet& params, const ParamSet& grads, double lr,
              double momentum, ParamSet& velocity);

}  // namespace nn
}  // namespace fspn
