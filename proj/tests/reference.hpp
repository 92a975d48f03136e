#pragma once

// Double-precision reference implementations, written independently of the
// kernels: direct loops over the textbook definitions.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gevo/numkernel.hpp"

namespace refimpl {

using namespace gevo;
using Vec = std::vector<double>;

struct Shape4 {
    int n, c, h, w;
};

inline Vec ref_conv(const Vec& x, Shape4 s, const Vec& w, int out_c, int k, const Vec& b, int stride, int& oh, int& ow) {
    oh = (s.h - 1) / stride + 1;
    ow = (s.w - 1) / stride + 1;
    const int pad = k / 2;
    Vec y(static_cast<std::size_t>(s.n * out_c * oh * ow));
    for (int n = 0; n < s.n; ++n)
        for (int o = 0; o < out_c; ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = b[o];
                    for (int c = 0; c < s.c; ++c)
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) {
                                const int yy = i * stride + u - pad, xx = j * stride + v - pad;
                                if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                                acc += w[((o * s.c + c) * k + u) * k + v] * x[((n * s.c + c) * s.h + yy) * s.w + xx];
                            }
                    y[((n * out_c + o) * oh + i) * ow + j] = acc;
                }
    return y;
}

inline Vec ref_avg_pool(const Vec& x, Shape4 s) {
    Vec y(x.size());
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j) {
                    double acc = 0;
                    for (int u = -1; u <= 1; ++u)
                        for (int v = -1; v <= 1; ++v) {
                            const int yy = i + u, xx = j + v;
                            if (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w) acc += x[((n * s.c + c) * s.h + yy) * s.w + xx];
                        }
                    y[((n * s.c + c) * s.h + i) * s.w + j] = acc / 9.0;
                }
    return y;
}

inline Vec ref_dense(const Vec& x, int n, int d, const Vec& w, int o, const Vec& b) {
    Vec y(static_cast<std::size_t>(n * o));
    for (int r = 0; r < n; ++r)
        for (int q = 0; q < o; ++q) {
            double acc = b[q];
            for (int k = 0; k < d; ++k) acc += w[q * d + k] * x[r * d + k];
            y[r * o + q] = acc;
        }
    return y;
}

inline Vec to_vec(const Tensor& t) { return Vec(t.values().begin(), t.values().end()); }

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<float>(scale * (2.0 * uniform01(rng) - 1.0));
    return t;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double rel_err(const Vec& a, const Vec& b) {
    Vec d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return norm(d) / std::max(1e-12, std::max(norm(a), norm(b)));
}

// Reference forward of a whole op in double precision; kink_margin reports
// the smallest |pre-activation| so random cases near a ReLU kink can be
// skipped (finite differences are meaningless there).
struct RefOp {
    OpKind kind;
    Shape4 s;
    int out = 0;  // output channels / features

    Vec forward(const Vec& x, const Vec& w, const Vec& b, double* kink_margin = nullptr) const {
        Vec pre;
        int oh = 0, ow = 0;
        switch (kind) {
            case OpKind::Zero: return Vec(x.size(), 0.0);
            case OpKind::Identity: return x;
            case OpKind::AvgPool3x3: return ref_avg_pool(x, s);
            case OpKind::Conv3x3Relu: pre = ref_conv(x, s, w, out, 3, b, 1, oh, ow); break;
            case OpKind::Conv1x1Relu: pre = ref_conv(x, s, w, out, 1, b, 1, oh, ow); break;
            case OpKind::DenseRelu:
            case OpKind::DenseTanh: pre = ref_dense(x, s.n, s.c, w, out, b); break;
        }
        if (kink_margin) {
            *kink_margin = 1e300;
            for (double v : pre) *kink_margin = std::min(*kink_margin, std::abs(v));
        }
        for (double& v : pre) v = kind == OpKind::DenseTanh ? std::tanh(v) : std::max(0.0, v);
        return pre;
    }
};

}  // namespace refimpl
