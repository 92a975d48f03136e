#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gevo/rng.hpp"

namespace gevo {

// Dense float32 tensor, row-major. Image batches are laid out (N, C, H, W).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, float fill = 0.0f);
    Tensor(std::vector<int> shape, std::vector<float> data);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    void fill(float v);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

std::string shape_string(std::span<const int> shape);
std::size_t shape_numel(std::span<const int> shape);

// Throws NumericError naming `where` if any element is NaN or Inf.
void ensure_finite(const Tensor& t, const std::string& where);

enum class ParamRole : std::uint8_t { Weight = 0, Bias = 1 };

// Identifies one shared parameter tensor. Edge parameters use
// (block, dest node, src node, op code); block-level parameters use
// src = kNoSource and op = 0 (dest 0/1 = input preprocessors,
// dest 6 = output projection). The stem lives at block -1 and the
// classifier at block B.
struct ParamKey {
    std::int16_t block = 0;
    std::int8_t dest = 0;
    std::int8_t src = 0;
    std::uint8_t op = 0;
    ParamRole role = ParamRole::Weight;

    friend auto operator<=>(const ParamKey&, const ParamKey&) = default;
    std::string str() const;
};

inline constexpr std::int8_t kNoSource = -1;
inline constexpr std::int16_t kStemBlock = -1;

struct Param {
    Tensor value;
    Tensor velocity;
};

using ParamStore = std::map<ParamKey, Param>;
using GradMap = std::map<ParamKey, Tensor>;

// Xavier-uniform bound s = sqrt(6 / (fan_in + fan_out)), weights drawn from a
// generator seeded by (seed, key) so initialization does not depend on the
// order in which keys are created. Biases start at zero.
Tensor init_param(const ParamKey& key, std::span<const int> shape, int fan_in, int fan_out, std::uint64_t seed);

std::uint64_t store_digest(const ParamStore& store);

// ---------------------------------------------------------------------------
// Primitive ops. Every forward result is checked for NaN/Inf.

enum class OpKind : std::uint8_t {
    Zero,
    Identity,
    Conv3x3Relu,
    Conv1x1Relu,
    AvgPool3x3,
    DenseRelu,
    DenseTanh,
};

bool is_parametric(OpKind kind);
const char* op_kind_name(OpKind kind);

// Inputs and outputs retained by op_forward for op_backward.
struct OpCache {
    OpKind kind = OpKind::Zero;
    Tensor input;
    Tensor output;
};

struct OpGrads {
    Tensor input;
    Tensor weight;  // empty for parameter-free ops
    Tensor bias;
};

// weight/bias may be null for parameter-free ops.
Tensor op_forward(OpKind kind, const Tensor& input, const Tensor* weight, const Tensor* bias, OpCache* cache);
OpGrads op_backward(const OpCache& cache, const Tensor& grad_out, const Tensor* weight);

// Conv with "same" padding for odd kernels. x (N,C,H,W), w (O,C,k,k), b (O).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
// Accumulates into gx (may be null), gw, gb.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, int stride, Tensor* gx, Tensor& gw,
                     Tensor& gb);

// x (N,D), w (O,D), b (O).
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor& gw, Tensor& gb);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& gy);
Tensor tanh_act(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& gy);
// 3x3 average, stride 1, zero padding counted in the divisor.
Tensor avg_pool3(const Tensor& x);
Tensor avg_pool3_backward(const Tensor& gy);
// (N,C,H,W) -> (N,C)
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& gy, std::span<const int> input_shape);
// Concatenate along dim 1 / split back.
Tensor concat_channels(std::span<const Tensor* const> parts);
std::vector<Tensor> split_channels(const Tensor& x, int parts);
void add_inplace(Tensor& acc, const Tensor& x);

struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;
};

// Mean softmax cross-entropy over the batch; gradient = (softmax - onehot)/N.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise argmax hits.
int count_correct(const Tensor& logits, std::span<const int> labels);

// Scales every gradient by max_norm / ||g|| when the global L2 norm exceeds
// max_norm (max_norm <= 0 disables). Returns the norm before clipping.
double clip_grad_norm(GradMap& grads, double max_norm);

// v <- momentum*v + g + weight_decay*w ; w <- w - lr*v, for every key in grads.
void sgd_step(ParamStore& store, const GradMap& grads, double lr, double momentum, double weight_decay);

// lr_max * 0.5 * (1 + cos(pi * step / total)); 0 once step passes total.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max);

}  // namespace gevo
