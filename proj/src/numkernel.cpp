#include "gevo/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Core>

#include "gevo/error.hpp"
#include "gevo/hash.hpp"

namespace gevo {

std::size_t shape_numel(std::span<const int> shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(std::span<const int> shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ')';
    return out.str();
}

Tensor::Tensor(std::vector<int> shape, float fill_value)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill_value) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void ensure_finite(const Tensor& t, const std::string& where) {
    for (float v : t.values()) {
        if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + where);
    }
}

std::string ParamKey::str() const {
    std::ostringstream out;
    out << "[block " << block << " dest " << int(dest) << " src " << int(src) << " op " << int(op)
        << (role == ParamRole::Weight ? " W" : " b") << ']';
    return out.str();
}

Tensor init_param(const ParamKey& key, std::span<const int> shape, int fan_in, int fan_out, std::uint64_t seed) {
    Tensor t(std::vector<int>(shape.begin(), shape.end()));
    if (key.role == ParamRole::Bias) return t;
    Hasher h;
    h.u32(static_cast<std::uint16_t>(key.block))
        .u8(static_cast<std::uint8_t>(key.dest))
        .u8(static_cast<std::uint8_t>(key.src))
        .u8(key.op)
        .u8(static_cast<std::uint8_t>(key.role));
    Rng rng = derive_rng(seed, h.digest());
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.values()) v = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
    return t;
}

std::uint64_t store_digest(const ParamStore& store) {
    Hasher h;
    h.u64(store.size());
    for (const auto& [key, p] : store) {
        h.u32(static_cast<std::uint16_t>(key.block))
            .u8(static_cast<std::uint8_t>(key.dest))
            .u8(static_cast<std::uint8_t>(key.src))
            .u8(key.op)
            .u8(static_cast<std::uint8_t>(key.role));
        for (int d : p.value.shape()) h.u32(static_cast<std::uint32_t>(d));
        for (float v : p.value.values()) h.f32(v);
        for (float v : p.velocity.values()) h.f32(v);
    }
    return h.digest();
}

bool is_parametric(OpKind kind) {
    switch (kind) {
    case OpKind::Conv3x3Relu:
    case OpKind::Conv1x1Relu:
    case OpKind::DenseRelu:
    case OpKind::DenseTanh:
        return true;
    default:
        return false;
    }
}

const char* op_kind_name(OpKind kind) {
    switch (kind) {
    case OpKind::Zero: return "zero";
    case OpKind::Identity: return "identity";
    case OpKind::Conv3x3Relu: return "conv3x3_relu";
    case OpKind::Conv1x1Relu: return "conv1x1_relu";
    case OpKind::AvgPool3x3: return "avg_pool3x3";
    case OpKind::DenseRelu: return "dense_relu";
    case OpKind::DenseTanh: return "dense_tanh";
    }
    return "?";
}

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
    }
}

int conv_out_size(int in, int stride) { return (in - 1) / stride + 1; }

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeom {
    int C, H, W, K, stride, pad, Ho, Wo;
    int rows() const { return C * K * K; }
    int cols() const { return Ho * Wo; }
    bool direct() const { return K == 1 && stride == 1; }  // col matrix is the input itself
};

// Output columns ox whose input column ox*stride + k - pad lies in [0, in).
void valid_cols(const ConvGeom& g, int k, int& lo, int& hi) {
    lo = 0;
    while (lo < g.Wo && lo * g.stride + k - g.pad < 0) ++lo;
    hi = g.Wo;
    while (hi > lo && (hi - 1) * g.stride + k - g.pad >= g.W) --hi;
}

// Unfold one sample (C,H,W) into a (C*K*K, Ho*Wo) patch matrix, zero padded.
void im2col(const ConvGeom& g, const float* x, float* col) {
    for (int c = 0; c < g.C; ++c) {
        for (int ky = 0; ky < g.K; ++ky) {
            for (int kx = 0; kx < g.K; ++kx) {
                float* row = col + static_cast<std::size_t>((c * g.K + ky) * g.K + kx) * g.cols();
                int lo, hi;
                valid_cols(g, kx, lo, hi);
                for (int oy = 0; oy < g.Ho; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    float* out = row + oy * g.Wo;
                    if (iy < 0 || iy >= g.H) {
                        std::fill(out, out + g.Wo, 0.0f);
                        continue;
                    }
                    const float* in = x + (static_cast<std::size_t>(c) * g.H + iy) * g.W + (kx - g.pad);
                    std::fill(out, out + lo, 0.0f);
                    if (g.stride == 1) {
                        std::copy(in + lo, in + hi, out + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) out[ox] = in[ox * g.stride];
                    }
                    std::fill(out + hi, out + g.Wo, 0.0f);
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patches back onto the (C,H,W) image.
void col2im_add(const ConvGeom& g, const float* col, float* x) {
    for (int c = 0; c < g.C; ++c) {
        for (int ky = 0; ky < g.K; ++ky) {
            for (int kx = 0; kx < g.K; ++kx) {
                const float* row = col + static_cast<std::size_t>((c * g.K + ky) * g.K + kx) * g.cols();
                int lo, hi;
                valid_cols(g, kx, lo, hi);
                for (int oy = 0; oy < g.Ho; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.H) continue;
                    float* out = x + (static_cast<std::size_t>(c) * g.H + iy) * g.W + (kx - g.pad);
                    const float* in = row + oy * g.Wo;
                    for (int ox = lo; ox < hi; ++ox) out[ox * g.stride] += in[ox];
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), K = w.dim(2);
    if (w.dim(1) != C || w.dim(3) != K || K % 2 == 0 || b.size() != static_cast<std::size_t>(O) || stride < 1) {
        throw ShapeError("conv2d: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(w.shape()) + " / bias " + shape_string(b.shape()));
    }
    const ConvGeom g{C, H, W, K, stride, K / 2, conv_out_size(H, stride), conv_out_size(W, stride)};
    Tensor y({N, O, g.Ho, g.Wo});
    std::vector<float> col(g.direct() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
    const ConstMatMap wm(w.data(), O, g.rows());
    const Eigen::Map<const Eigen::VectorXf> bias(b.data(), O);
    for (int n = 0; n < N; ++n) {
        const float* xp = x.data() + static_cast<std::size_t>(n) * C * H * W;
        if (!g.direct()) im2col(g, xp, col.data());
        const ConstMatMap cm(g.direct() ? xp : col.data(), g.rows(), g.cols());
        MatMap ym(y.data() + static_cast<std::size_t>(n) * O * g.cols(), O, g.cols());
        ym.noalias() = wm * cm;
        ym.colwise() += bias;
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, int stride, Tensor* gx, Tensor& gw,
                     Tensor& gb) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), K = w.dim(2);
    const ConvGeom g{C, H, W, K, stride, K / 2, gy.dim(2), gy.dim(3)};
    std::vector<float> col(g.direct() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
    std::vector<float> gcol(g.direct() ? 0 : col.size());
    const ConstMatMap wm(w.data(), O, g.rows());
    MatMap gwm(gw.data(), O, g.rows());
    for (int n = 0; n < N; ++n) {
        const float* xp = x.data() + static_cast<std::size_t>(n) * C * H * W;
        const ConstMatMap gym(gy.data() + static_cast<std::size_t>(n) * O * g.cols(), O, g.cols());
        // Plain loops for the bias sums: Eigen's vectorized reductions
        // peel by address alignment, which makes the result run-dependent.
        for (int o = 0; o < O; ++o) {
            const float* row = gy.data() + (static_cast<std::size_t>(n) * O + o) * g.cols();
            float acc = 0.0f;
            for (int i = 0; i < g.cols(); ++i) acc += row[i];
            gb.data()[o] += acc;
        }
        if (!g.direct()) im2col(g, xp, col.data());
        const ConstMatMap cm(g.direct() ? xp : col.data(), g.rows(), g.cols());
        gwm.noalias() += gym * cm.transpose();
        if (!gx) continue;
        float* gxp = gx->data() + static_cast<std::size_t>(n) * C * H * W;
        if (g.direct()) {
            MatMap gxm(gxp, g.rows(), g.cols());
            gxm.noalias() += wm.transpose() * gym;
        } else {
            MatMap gcm(gcol.data(), g.rows(), g.cols());
            gcm.noalias() = wm.transpose() * gym;
            col2im_add(g, gcol.data(), gxp);
        }
    }
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 2, "dense input");
    require_rank(w, 2, "dense weight");
    const int N = x.dim(0), D = x.dim(1), O = w.dim(0);
    if (w.dim(1) != D || b.size() != static_cast<std::size_t>(O)) {
        throw ShapeError("dense: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(w.shape()) + " / bias " + shape_string(b.shape()));
    }
    Tensor y({N, O});
    MatMap ym(y.data(), N, O);
    ym.noalias() = ConstMatMap(x.data(), N, D) * ConstMatMap(w.data(), O, D).transpose();
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.data(), O);
    return y;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor& gw, Tensor& gb) {
    const int N = x.dim(0), D = x.dim(1), O = w.dim(0);
    const ConstMatMap gym(gy.data(), N, O);
    for (int i = 0; i < N; ++i)
        for (int o = 0; o < O; ++o) gb.data()[o] += gy.data()[static_cast<std::size_t>(i) * O + o];
    MatMap(gw.data(), O, D).noalias() += gym.transpose() * ConstMatMap(x.data(), N, D);
    if (gx) MatMap(gx->data(), N, D).noalias() += gym * ConstMatMap(w.data(), O, D);
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
    return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
    Tensor g = gy;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > 0.0f)) g[i] = 0.0f;
    return g;
}

Tensor tanh_act(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.values()) v = std::tanh(v);
    return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& gy) {
    Tensor g = gy;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0f - y[i] * y[i];
    return g;
}

Tensor avg_pool3(const Tensor& x) {
    require_rank(x, 4, "avg_pool3 input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    std::vector<float> rows(static_cast<std::size_t>(H) * W);
    for (int p = 0; p < N * C; ++p) {
        const float* xp = x.data() + static_cast<std::size_t>(p) * H * W;
        float* yp = y.data() + static_cast<std::size_t>(p) * H * W;
        // Separable: horizontal 3-sums, then vertical 3-sums of those.
        for (int i = 0; i < H; ++i) {
            const float* r = xp + i * W;
            float* o = rows.data() + i * W;
            for (int j = 0; j < W; ++j) o[j] = (j > 0 ? r[j - 1] : 0.0f) + r[j] + (j + 1 < W ? r[j + 1] : 0.0f);
        }
        for (int i = 0; i < H; ++i) {
            float* o = yp + i * W;
            const float* mid = rows.data() + i * W;
            for (int j = 0; j < W; ++j) o[j] = mid[j];
            if (i > 0)
                for (int j = 0; j < W; ++j) o[j] += mid[j - W];
            if (i + 1 < H)
                for (int j = 0; j < W; ++j) o[j] += mid[j + W];
            for (int j = 0; j < W; ++j) o[j] /= 9.0f;
        }
    }
    return y;
}

Tensor avg_pool3_backward(const Tensor& gy) {
    // The 3x3 averaging window is symmetric, so the adjoint is the same op.
    return avg_pool3(gy);
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool input");
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor y({N, C});
    for (int p = 0; p < N * C; ++p) {
        const float* xp = x.data() + static_cast<std::size_t>(p) * HW;
        float acc = 0.0f;
        for (int i = 0; i < HW; ++i) acc += xp[i];
        y[static_cast<std::size_t>(p)] = acc / static_cast<float>(HW);
    }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, std::span<const int> input_shape) {
    Tensor g(std::vector<int>(input_shape.begin(), input_shape.end()));
    const int NC = input_shape[0] * input_shape[1];
    const int HW = input_shape[2] * input_shape[3];
    for (int p = 0; p < NC; ++p) {
        const float v = gy[static_cast<std::size_t>(p)] / static_cast<float>(HW);
        std::fill(g.data() + static_cast<std::size_t>(p) * HW, g.data() + static_cast<std::size_t>(p + 1) * HW, v);
    }
    return g;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
    const Tensor& first = *parts.front();
    const int N = first.dim(0);
    std::vector<int> shape = first.shape();
    int channels = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != first.rank() || p->dim(0) != N) throw ShapeError("concat_channels: mismatched parts");
        channels += p->dim(1);
    }
    shape[1] = channels;
    Tensor y(shape);
    const std::size_t inner = first.size() / (static_cast<std::size_t>(N) * first.dim(1));
    float* out = y.data();
    for (int n = 0; n < N; ++n) {
        for (const Tensor* p : parts) {
            const std::size_t chunk = static_cast<std::size_t>(p->dim(1)) * inner;
            const float* src = p->data() + static_cast<std::size_t>(n) * chunk;
            out = std::copy(src, src + chunk, out);
        }
    }
    return y;
}

std::vector<Tensor> split_channels(const Tensor& x, int parts) {
    const int N = x.dim(0);
    if (x.dim(1) % parts != 0) throw ShapeError("split_channels: channel count not divisible");
    std::vector<int> shape = x.shape();
    shape[1] /= parts;
    std::vector<Tensor> out(static_cast<std::size_t>(parts), Tensor(shape));
    const std::size_t chunk = x.size() / (static_cast<std::size_t>(N) * parts);
    const float* src = x.data();
    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < parts; ++k) {
            std::copy(src, src + chunk, out[k].data() + static_cast<std::size_t>(n) * chunk);
            src += chunk;
        }
    }
    return out;
}

void add_inplace(Tensor& acc, const Tensor& x) {
    if (acc.shape() != x.shape()) {
        throw ShapeError("add: shape " + shape_string(acc.shape()) + " vs " + shape_string(x.shape()));
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

Tensor op_forward(OpKind kind, const Tensor& input, const Tensor* weight, const Tensor* bias, OpCache* cache) {
    if (is_parametric(kind) && (!weight || !bias)) {
        throw ShapeError(std::string("op ") + op_kind_name(kind) + " called without parameters");
    }
    Tensor out;
    switch (kind) {
    case OpKind::Zero: out = Tensor(input.shape()); break;
    case OpKind::Identity: out = input; break;
    case OpKind::Conv3x3Relu:
    case OpKind::Conv1x1Relu: out = relu(conv2d(input, *weight, *bias, 1)); break;
    case OpKind::AvgPool3x3: out = avg_pool3(input); break;
    case OpKind::DenseRelu: out = relu(dense(input, *weight, *bias)); break;
    case OpKind::DenseTanh: out = tanh_act(dense(input, *weight, *bias)); break;
    }
    ensure_finite(out, op_kind_name(kind));
    if (cache) {
        cache->kind = kind;
        if (is_parametric(kind)) {
            cache->input = input;
            cache->output = out;
        } else {
            cache->input = Tensor();
            cache->output = Tensor();
        }
    }
    return out;
}

OpGrads op_backward(const OpCache& cache, const Tensor& grad_out, const Tensor* weight) {
    OpGrads g;
    switch (cache.kind) {
    case OpKind::Zero: g.input = Tensor(grad_out.shape()); break;
    case OpKind::Identity: g.input = grad_out; break;
    case OpKind::AvgPool3x3: g.input = avg_pool3_backward(grad_out); break;
    case OpKind::Conv3x3Relu:
    case OpKind::Conv1x1Relu: {
        const Tensor gpre = relu_backward(cache.output, grad_out);
        g.input = Tensor(cache.input.shape());
        g.weight = Tensor(weight->shape());
        g.bias = Tensor({weight->dim(0)});
        conv2d_backward(cache.input, *weight, gpre, 1, &g.input, g.weight, g.bias);
        break;
    }
    case OpKind::DenseRelu:
    case OpKind::DenseTanh: {
        const Tensor gpre = cache.kind == OpKind::DenseRelu ? relu_backward(cache.output, grad_out)
                                                            : tanh_backward(cache.output, grad_out);
        g.input = Tensor(cache.input.shape());
        g.weight = Tensor(weight->shape());
        g.bias = Tensor({weight->dim(0)});
        dense_backward(cache.input, *weight, gpre, &g.input, g.weight, g.bias);
        break;
    }
    }
    return g;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "loss logits");
    const int N = logits.dim(0), K = logits.dim(1);
    if (labels.size() != static_cast<std::size_t>(N)) throw ShapeError("loss: label count does not match batch");
    LossResult r;
    r.grad_logits = Tensor({N, K});
    double total = 0.0;
    std::vector<double> p(static_cast<std::size_t>(K));
    for (int n = 0; n < N; ++n) {
        const int y = labels[n];
        if (y < 0 || y >= K) {
            throw ValidationError("label " + std::to_string(y) + " out of range for " + std::to_string(K) + " classes");
        }
        const float* row = logits.data() + static_cast<std::size_t>(n) * K;
        double mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
        double z = 0.0;
        for (int k = 0; k < K; ++k) {
            p[k] = std::exp(static_cast<double>(row[k]) - mx);
            z += p[k];
        }
        total += std::log(z) + mx - row[y];
        for (int k = 0; k < K; ++k) {
            const double g = p[k] / z - (k == y ? 1.0 : 0.0);
            r.grad_logits[static_cast<std::size_t>(n) * K + k] = static_cast<float>(g / N);
        }
    }
    r.loss = total / N;
    if (!std::isfinite(r.loss)) throw NumericError("non-finite loss");
    return r;
}

int count_correct(const Tensor& logits, std::span<const int> labels) {
    const int N = logits.dim(0), K = logits.dim(1);
    int hits = 0;
    for (int n = 0; n < N; ++n) {
        const float* row = logits.data() + static_cast<std::size_t>(n) * K;
        const int best = static_cast<int>(std::max_element(row, row + K) - row);
        if (best == labels[n]) ++hits;
    }
    return hits;
}

void sgd_step(ParamStore& store, const GradMap& grads, double lr, double momentum, double weight_decay) {
    for (const auto& [key, g] : grads) {
        auto it = store.find(key);
        if (it == store.end()) throw ValidationError("sgd_step: no parameter for key " + key.str());
        Param& p = it->second;
        if (p.value.shape() != g.shape()) {
            throw ShapeError("sgd_step: gradient " + shape_string(g.shape()) + " vs parameter " +
                             shape_string(p.value.shape()) + " at " + key.str());
        }
        if (p.velocity.shape() != p.value.shape()) p.velocity = Tensor(p.value.shape());
        const float m = static_cast<float>(momentum), wd = static_cast<float>(weight_decay), step = static_cast<float>(lr);
        float* w = p.value.data();
        float* v = p.velocity.data();
        const float* gr = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            v[i] = m * v[i] + gr[i] + wd * w[i];
            w[i] -= step * v[i];
        }
        ensure_finite(p.value, "sgd_step " + key.str());
    }
}

double clip_grad_norm(GradMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [key, g] : grads)
        for (float v : g.values()) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const auto scale = static_cast<float>(max_norm / norm);
        for (auto& [key, g] : grads)
            for (float& v : g.values()) v *= scale;
    }
    return norm;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max) {
    if (total_steps <= 0 || step >= total_steps) return 0.0;
    if (step <= 0) return lr_max;
    return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

}  // namespace gevo
