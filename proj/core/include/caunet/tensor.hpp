#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "caunet/error.hpp"
#include "caunet/rng.hpp"

namespace caunet {

using Shape = std::vector<int>;

inline long long numel(const Shape& shape) {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Thread-local switch: when grad recording is off, ops produce plain value
// tensors with no graph edges (used for eval and benchmarking).
class GradMode {
public:
    static bool enabled() { return flag(); }
    static void set(bool on) { flag() = on; }

private:
    static bool& flag() {
        thread_local bool enabled = true;
        return enabled;
    }
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    bool prev_;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad; // empty until backward() reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
};

// Dense N-d tensor handle.  Copies are shallow (shared node); values are
// immutable by convention once the tensor participates in a graph, except
// for gradient accumulation and explicit parameter updates between steps.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node(std::make_shared<TensorNode<T>>()) {
        if (numel(shape) != static_cast<long long>(values.size()))
            throw DimensionError("tensor values length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        node->shape = std::move(shape);
        node->values = std::move(values);
        node->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), T(0), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        std::vector<T> v(static_cast<std::size_t>(numel(shape)), value);
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    bool defined() const { return node != nullptr; }
    const Shape& shape() const { return node->shape; }
    int dim(int i) const { return node->shape[static_cast<std::size_t>(i)]; }
    long long size() const { return static_cast<long long>(node->values.size()); }

    std::vector<T>& values() { return node->values; }
    const std::vector<T>& values() const { return node->values; }

    bool has_grad() const { return node && !node->grad.empty(); }
    std::vector<T>& grad() { return node->grad; }
    const std::vector<T>& grad() const { return node->grad; }

    bool requires_grad() const { return node->requires_grad; }

    std::shared_ptr<TensorNode<T>> node;
};

namespace detail {

template <typename T>
inline Tensor<T> make_op_result(Shape shape, std::vector<T> values,
                                std::vector<std::shared_ptr<TensorNode<T>>> parents,
                                std::function<void(TensorNode<T>&)> backprop) {
    bool needs = false;
    if (GradMode::enabled())
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    Tensor<T> out(std::move(shape), std::move(values), needs);
    if (needs) {
        out.node->parents = std::move(parents);
        out.node->backprop = std::move(backprop);
    }
    return out;
}

inline long long idx4(const Shape& s, long long n, long long c, long long h, long long w) {
    return ((n * s[1] + c) * s[2] + h) * s[3] + w;
}

inline void require_4d(const Shape& s, const char* what) {
    if (s.size() != 4)
        throw DimensionError(std::string(what) + " must be 4-d (NxCxHxW), got " + shape_str(s));
}

// C (MxN) += A (MxK) * B (KxN), all row-major.  The k loop is outermost per
// output row so the accumulation order over k matches a naive per-element
// loop, while the innermost j loop vectorizes.
template <typename T>
inline void gemm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<long long>(i) * k;
        T* crow = c + static_cast<long long>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<long long>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
inline std::vector<T> transpose(const std::vector<T>& a, int rows, int cols) {
    std::vector<T> t(a.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            t[static_cast<std::size_t>(c) * rows + r] = a[static_cast<std::size_t>(r) * cols + c];
    return t;
}

} // namespace detail

struct ConvSpec {
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    int padding = 0;
    int dilation = 1;

    int out_h(int h) const { return (h + 2 * padding - dilation * (kernel_h - 1) - 1) / stride + 1; }
    int out_w(int w) const { return (w + 2 * padding - dilation * (kernel_w - 1) - 1) / stride + 1; }
};

namespace detail {

// Unpack an input plane set into a (C*kh*kw) x (out_h*out_w) matrix with
// zero padding; row order (c, i, j) matches the weight layout.
template <typename T>
inline void im2col(const T* x, int c_in, int h, int w, const ConvSpec& sp,
                   int out_h, int out_w, T* col) {
    const int kh = sp.kernel_h, kw = sp.kernel_w;
    const long long j_count = static_cast<long long>(out_h) * out_w;
    long long row = 0;
    for (int c = 0; c < c_in; ++c) {
        const T* plane = x + static_cast<long long>(c) * h * w;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j, ++row) {
                T* dst = col + row * j_count;
                long long out_idx = 0;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * sp.stride - sp.padding + i * sp.dilation;
                    for (int ow = 0; ow < out_w; ++ow, ++out_idx) {
                        const int iw = ow * sp.stride - sp.padding + j * sp.dilation;
                        dst[out_idx] = (ih >= 0 && ih < h && iw >= 0 && iw < w)
                                           ? plane[static_cast<long long>(ih) * w + iw]
                                           : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add a column matrix back into an input plane set.
template <typename T>
inline void col2im_acc(const T* col, int c_in, int h, int w, const ConvSpec& sp,
                       int out_h, int out_w, T* x) {
    const int kh = sp.kernel_h, kw = sp.kernel_w;
    const long long j_count = static_cast<long long>(out_h) * out_w;
    long long row = 0;
    for (int c = 0; c < c_in; ++c) {
        T* plane = x + static_cast<long long>(c) * h * w;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j, ++row) {
                const T* src = col + row * j_count;
                long long out_idx = 0;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * sp.stride - sp.padding + i * sp.dilation;
                    for (int ow = 0; ow < out_w; ++ow, ++out_idx) {
                        const int iw = ow * sp.stride - sp.padding + j * sp.dilation;
                        if (ih >= 0 && ih < h && iw >= 0 && iw < w)
                            plane[static_cast<long long>(ih) * w + iw] += src[out_idx];
                    }
                }
            }
        }
    }
}

} // namespace detail

// 2-d cross-correlation with zero padding.  weight: C_out x C_in x kh x kw,
// bias: C_out or undefined for no bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvSpec& spec) {
    detail::require_4d(input.shape(), "conv2d input");
    detail::require_4d(weight.shape(), "conv2d weight");
    const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int c_out = weight.dim(0);
    if (weight.dim(1) != c_in)
        throw DimensionError("conv2d: weight input-channel axis is " + std::to_string(weight.dim(1)) +
                             ", input channel axis is " + std::to_string(c_in));
    if (weight.dim(2) != spec.kernel_h || weight.dim(3) != spec.kernel_w)
        throw DimensionError("conv2d: weight kernel axes " + shape_str(weight.shape()) +
                             " do not match spec " + std::to_string(spec.kernel_h) + "x" +
                             std::to_string(spec.kernel_w));
    if (bias.defined() && bias.size() != c_out)
        throw DimensionError("conv2d: bias length must equal output channel axis " +
                             std::to_string(c_out));
    const int out_h = spec.out_h(h), out_w = spec.out_w(w);
    if (out_h < 1 || out_w < 1)
        throw DimensionError("conv2d: non-positive output size for input " + shape_str(input.shape()));

    const long long k = static_cast<long long>(c_in) * spec.kernel_h * spec.kernel_w;
    const long long j = static_cast<long long>(out_h) * out_w;
    const long long plane_in = static_cast<long long>(c_in) * h * w;
    const long long plane_out = static_cast<long long>(c_out) * j;

    std::vector<T> out(static_cast<std::size_t>(n) * plane_out, T(0));
    std::vector<T> col(static_cast<std::size_t>(k * j));
    const T* xv = input.values().data();
    const T* wv = weight.values().data();
    for (int b = 0; b < n; ++b) {
        detail::im2col(xv + b * plane_in, c_in, h, w, spec, out_h, out_w, col.data());
        T* dst = out.data() + b * plane_out;
        if (bias.defined())
            for (int co = 0; co < c_out; ++co)
                std::fill(dst + co * j, dst + (co + 1) * j, bias.values()[static_cast<std::size_t>(co)]);
        detail::gemm_acc(wv, col.data(), dst, c_out, static_cast<int>(k), static_cast<int>(j));
    }

    std::vector<std::shared_ptr<TensorNode<T>>> parents{input.node, weight.node};
    if (bias.defined()) parents.push_back(bias.node);
    auto x_node = input.node;
    auto w_node = weight.node;
    auto b_node = bias.defined() ? bias.node : nullptr;
    ConvSpec sp = spec;
    auto backprop = [x_node, w_node, b_node, sp, n, c_in, h, w, c_out, out_h, out_w, k,
                     j](TensorNode<T>& self) {
        const long long plane_in = static_cast<long long>(c_in) * h * w;
        const long long plane_out = static_cast<long long>(c_out) * out_h * out_w;
        const T* g = self.grad.data();
        std::vector<T> col(static_cast<std::size_t>(k * j));
        const bool need_w = w_node->requires_grad;
        const bool need_x = x_node->requires_grad;
        if (need_w) w_node->ensure_grad();
        if (need_x) x_node->ensure_grad();
        std::vector<T> wt;
        if (need_x) wt = detail::transpose(w_node->values, c_out, static_cast<int>(k));
        std::vector<T> dcol(static_cast<std::size_t>(k * j));
        for (int b = 0; b < n; ++b) {
            const T* gb = g + b * plane_out;
            if (need_w) {
                detail::im2col(x_node->values.data() + b * plane_in, c_in, h, w, sp, out_h, out_w,
                               col.data());
                std::vector<T> colt = detail::transpose(col, static_cast<int>(k), static_cast<int>(j));
                detail::gemm_acc(gb, colt.data(), w_node->grad.data(), c_out, static_cast<int>(j),
                                 static_cast<int>(k));
            }
            if (need_x) {
                std::fill(dcol.begin(), dcol.end(), T(0));
                detail::gemm_acc(wt.data(), gb, dcol.data(), static_cast<int>(k), c_out,
                                 static_cast<int>(j));
                detail::col2im_acc(dcol.data(), c_in, h, w, sp, out_h, out_w,
                                   x_node->grad.data() + b * plane_in);
            }
        }
        if (b_node && b_node->requires_grad) {
            b_node->ensure_grad();
            for (int b = 0; b < n; ++b)
                for (int co = 0; co < c_out; ++co) {
                    T acc = T(0);
                    const T* gr = g + b * plane_out + static_cast<long long>(co) * j;
                    for (long long p = 0; p < j; ++p) acc += gr[p];
                    b_node->grad[static_cast<std::size_t>(co)] += acc;
                }
        }
    };
    return detail::make_op_result<T>({n, c_out, out_h, out_w}, std::move(out), std::move(parents),
                                     std::move(backprop));
}

/// Transposed convolution.  weight: C_in x C_out x kh x kw; output spatial
// size (H-1)*stride + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           int stride) {
    detail::require_4d(input.shape(), "conv_transpose2d input");
    detail::require_4d(weight.shape(), "conv_transpose2d weight");
    const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (weight.dim(0) != c_in)
        throw DimensionError("conv_transpose2d: weight axis 0 is " + std::to_string(weight.dim(0)) +
                             ", input channel axis is " + std::to_string(c_in));
    const int c_out = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (bias.defined() && bias.size() != c_out)
        throw DimensionError("conv_transpose2d: bias length must equal output channel axis");
    if (stride < 1) throw ConfigError("conv_transpose2d: stride must be positive");
    const int out_h = (h - 1) * stride + kh;
    const int out_w = (w - 1) * stride + kw;

    std::vector<T> out(static_cast<std::size_t>(n) * c_out * out_h * out_w, T(0));
    const Shape oshape{n, c_out, out_h, out_w};
    const T* xv = input.values().data();
    const T* wv = weight.values().data();
    if (bias.defined())
        for (int b = 0; b < n; ++b)
            for (int co = 0; co < c_out; ++co)
                std::fill(out.data() + detail::idx4(oshape, b, co, 0, 0),
                          out.data() + detail::idx4(oshape, b, co, 0, 0) + static_cast<long long>(out_h) * out_w,
                          bias.values()[static_cast<std::size_t>(co)]);
    const Shape ishape = input.shape();
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c_in; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const T v = xv[detail::idx4(ishape, b, ci, y, x)];
                    if (v == T(0)) continue;
                    for (int co = 0; co < c_out; ++co) {
                        const T* wk = wv + ((static_cast<long long>(ci) * c_out + co) * kh) * kw;
                        T* dst = out.data() + detail::idx4(oshape, b, co, y * stride, x * stride);
                        for (int i = 0; i < kh; ++i)
                            for (int jj = 0; jj < kw; ++jj)
                                dst[static_cast<long long>(i) * out_w + jj] += v * wk[i * kw + jj];
                    }
                }

    std::vector<std::shared_ptr<TensorNode<T>>> parents{input.node, weight.node};
    if (bias.defined()) parents.push_back(bias.node);
    auto x_node = input.node;
    auto w_node = weight.node;
    auto b_node = bias.defined() ? bias.node : nullptr;
    auto backprop = [x_node, w_node, b_node, stride, n, c_in, h, w, c_out, kh, kw, out_h, out_w,
                     ishape, oshape](TensorNode<T>& self) {
        const T* g = self.grad.data();
        const bool need_x = x_node->requires_grad;
        const bool need_w = w_node->requires_grad;
        if (need_x) x_node->ensure_grad();
        if (need_w) w_node->ensure_grad();
        for (int b = 0; b < n; ++b)
            for (int ci = 0; ci < c_in; ++ci)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const long long xi = detail::idx4(ishape, b, ci, y, x);
                        T dx = T(0);
                        for (int co = 0; co < c_out; ++co) {
                            const T* wk =
                                w_node->values.data() + ((static_cast<long long>(ci) * c_out + co) * kh) * kw;
                            T* wg = need_w
                                        ? w_node->grad.data() + ((static_cast<long long>(ci) * c_out + co) * kh) * kw
                                        : nullptr;
                            const T* gd = g + detail::idx4(oshape, b, co, y * stride, x * stride);
                            const T xv = x_node->values[static_cast<std::size_t>(xi)];
                            for (int i = 0; i < kh; ++i)
                                for (int jj = 0; jj < kw; ++jj) {
                                    const T go = gd[static_cast<long long>(i) * out_w + jj];
                                    dx += go * wk[i * kw + jj];
                                    if (need_w) wg[i * kw + jj] += go * xv;
                                }
                        }
                        if (need_x) x_node->grad[static_cast<std::size_t>(xi)] += dx;
                    }
        if (b_node && b_node->requires_grad) {
            b_node->ensure_grad();
            for (int b = 0; b < n; ++b)
                for (int co = 0; co < c_out; ++co) {
                    T acc = T(0);
                    const T* gr = g + detail::idx4(oshape, b, co, 0, 0);
                    const long long plane = static_cast<long long>(out_h) * out_w;
                    for (long long p = 0; p < plane; ++p) acc += gr[p];
                    b_node->grad[static_cast<std::size_t>(co)] += acc;
                }
        }
    };
    return detail::make_op_result<T>(oshape, std::move(out), std::move(parents), std::move(backprop));
}

// 2x2 stride-2 max pooling.  Gradient routes to the argmax; ties go to the
// lowest linear index.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input) {
    detail::require_4d(input.shape(), "maxpool2d input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw DimensionError("maxpool2d: spatial axes must be even, got " + shape_str(input.shape()));
    const int oh = h / 2, ow = w / 2;
    const Shape ishape = input.shape();
    std::vector<T> out(static_cast<std::size_t>(n) * c * oh * ow);
    auto argmax = std::make_shared<std::vector<long long>>(out.size());
    const T* xv = input.values().data();
    long long oi = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x, ++oi) {
                    long long best_idx = detail::idx4(ishape, b, ch, 2 * y, 2 * x);
                    T best = xv[best_idx];
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j) {
                            const long long idx = detail::idx4(ishape, b, ch, 2 * y + i, 2 * x + j);
                            if (xv[idx] > best) {
                                best = xv[idx];
                                best_idx = idx;
                            }
                        }
                    out[static_cast<std::size_t>(oi)] = best;
                    (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
                }
    auto x_node = input.node;
    auto backprop = [x_node, argmax](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            x_node->grad[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
    };
    return detail::make_op_result<T>({n, c, oh, ow}, std::move(out), {input.node},
                                     std::move(backprop));
}

enum class ReduceMode { Avg, Max };

// Per-channel spatial reduction to N x C x 1 x 1.
template <typename T>
Tensor<T> global_pool(const Tensor<T>& input, ReduceMode mode) {
    detail::require_4d(input.shape(), "global_pool input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const long long plane = static_cast<long long>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * c);
    auto argmax = std::make_shared<std::vector<long long>>();
    if (mode == ReduceMode::Max) argmax->resize(out.size());
    const T* xv = input.values().data();
    for (long long p = 0; p < static_cast<long long>(n) * c; ++p) {
        const T* src = xv + p * plane;
        if (mode == ReduceMode::Avg) {
            T acc = T(0);
            for (long long i = 0; i < plane; ++i) acc += src[i];
            out[static_cast<std::size_t>(p)] = acc / static_cast<T>(plane);
        } else {
            long long best = 0;
            for (long long i = 1; i < plane; ++i)
                if (src[i] > src[best]) best = i;
            out[static_cast<std::size_t>(p)] = src[best];
            (*argmax)[static_cast<std::size_t>(p)] = p * plane + best;
        }
    }
    auto x_node = input.node;
    auto backprop = [x_node, mode, plane, argmax](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        for (std::size_t p = 0; p < self.grad.size(); ++p) {
            if (mode == ReduceMode::Avg) {
                const T share = self.grad[p] / static_cast<T>(plane);
                T* dst = x_node->grad.data() + static_cast<long long>(p) * plane;
                for (long long i = 0; i < plane; ++i) dst[i] += share;
            } else {
                x_node->grad[static_cast<std::size_t>((*argmax)[p])] += self.grad[p];
            }
        }
    };
    return detail::make_op_result<T>({n, c, 1, 1}, std::move(out), {input.node}, std::move(backprop));
}

// Per-pixel reduction across channels to N x 1 x H x W.
template <typename T>
Tensor<T> channel_reduce(const Tensor<T>& input, ReduceMode mode) {
    detail::require_4d(input.shape(), "channel_reduce input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const long long plane = static_cast<long long>(h) * w;
    const Shape ishape = input.shape();
    std::vector<T> out(static_cast<std::size_t>(n) * plane);
    auto argmax = std::make_shared<std::vector<long long>>();
    if (mode == ReduceMode::Max) argmax->resize(out.size());
    const T* xv = input.values().data();
    for (int b = 0; b < n; ++b)
        for (long long px = 0; px < plane; ++px) {
            const long long base = static_cast<long long>(b) * c * plane + px;
            const std::size_t oi = static_cast<std::size_t>(b * plane + px);
            if (mode == ReduceMode::Avg) {
                T acc = T(0);
                for (int ch = 0; ch < c; ++ch) acc += xv[base + static_cast<long long>(ch) * plane];
                out[oi] = acc / static_cast<T>(c);
            } else {
                long long best = base;
                for (int ch = 1; ch < c; ++ch) {
                    const long long idx = base + static_cast<long long>(ch) * plane;
                    if (xv[idx] > xv[best]) best = idx;
                }
                out[oi] = xv[best];
                (*argmax)[oi] = best;
            }
        }
    auto x_node = input.node;
    auto backprop = [x_node, mode, n, c, plane, argmax](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        for (int b = 0; b < n; ++b)
            for (long long px = 0; px < plane; ++px) {
                const std::size_t oi = static_cast<std::size_t>(b * plane + px);
                if (mode == ReduceMode::Avg) {
                    const T share = self.grad[oi] / static_cast<T>(c);
                    const long long base = static_cast<long long>(b) * c * plane + px;
                    for (int ch = 0; ch < c; ++ch)
                        x_node->grad[static_cast<std::size_t>(base + static_cast<long long>(ch) * plane)] +=
                            share;
                } else {
                    x_node->grad[static_cast<std::size_t>((*argmax)[oi])] += self.grad[oi];
                }
            }
    };
    return detail::make_op_result<T>({n, 1, h, w}, std::move(out), {input.node}, std::move(backprop));
}

template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T eps = static_cast<T>(1e-5);
    T momentum = static_cast<T>(0.1);

    explicit BatchNormState(int channels = 0)
        : running_mean(static_cast<std::size_t>(channels), T(0)),
          running_var(static_cast<std::size_t>(channels), T(1)) {}
};

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, bool training) {
    detail::require_4d(input.shape(), "batchnorm2d input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (gamma.size() != c || beta.size() != c)
        throw DimensionError("batchnorm2d: gamma/beta must have length equal to channel axis " +
                             std::to_string(c));
    if (static_cast<int>(state.running_mean.size()) != c)
        throw ConfigError("batchnorm2d: state channel count mismatch");
    const long long m = static_cast<long long>(n) * h * w;
    if (training && m < 2)
        throw ContractError("batchnorm2d: training mode needs batch*H*W >= 2");

    const long long plane = static_cast<long long>(h) * w;
    const T* xv = input.values().data();
    auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            T acc = T(0);
            for (int b = 0; b < n; ++b) {
                const T* src = xv + (static_cast<long long>(b) * c + ch) * plane;
                for (long long i = 0; i < plane; ++i) acc += src[i];
            }
            const T mu = acc / static_cast<T>(m);
            T var = T(0);
            for (int b = 0; b < n; ++b) {
                const T* src = xv + (static_cast<long long>(b) * c + ch) * plane;
                for (long long i = 0; i < plane; ++i) {
                    const T d = src[i] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<T>(m);
            (*mean)[static_cast<std::size_t>(ch)] = mu;
            (*invstd)[static_cast<std::size_t>(ch)] = T(1) / std::sqrt(var + state.eps);
            // running stats keep the unbiased variance
            const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
            state.running_mean[static_cast<std::size_t>(ch)] =
                (T(1) - state.momentum) * state.running_mean[static_cast<std::size_t>(ch)] +
                state.momentum * mu;
            state.running_var[static_cast<std::size_t>(ch)] =
                (T(1) - state.momentum) * state.running_var[static_cast<std::size_t>(ch)] +
                state.momentum * unbiased;
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            (*mean)[static_cast<std::size_t>(ch)] = state.running_mean[static_cast<std::size_t>(ch)];
            (*invstd)[static_cast<std::size_t>(ch)] =
                T(1) / std::sqrt(state.running_var[static_cast<std::size_t>(ch)] + state.eps);
        }
    }

    std::vector<T> out(input.values().size());
    const T* gv = gamma.values().data();
    const T* bv = beta.values().data();
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const T mu = (*mean)[static_cast<std::size_t>(ch)];
            const T is = (*invstd)[static_cast<std::size_t>(ch)];
            const T g = gv[static_cast<std::size_t>(ch)];
            const T bt = bv[static_cast<std::size_t>(ch)];
            const T* src = xv + (static_cast<long long>(b) * c + ch) * plane;
            T* dst = out.data() + (static_cast<long long>(b) * c + ch) * plane;
            for (long long i = 0; i < plane; ++i) dst[i] = g * (src[i] - mu) * is + bt;
        }

    auto x_node = input.node;
    auto g_node = gamma.node;
    auto b_node = beta.node;
    auto backprop = [x_node, g_node, b_node, mean, invstd, training, n, c, plane,
                     m](TensorNode<T>& self) {
        const T* g = self.grad.data();
        const T* xv = x_node->values.data();
        const bool need_x = x_node->requires_grad;
        if (need_x) x_node->ensure_grad();
        const bool need_g = g_node->requires_grad;
        if (need_g) g_node->ensure_grad();
        const bool need_b = b_node->requires_grad;
        if (need_b) b_node->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            const T mu = (*mean)[static_cast<std::size_t>(ch)];
            const T is = (*invstd)[static_cast<std::size_t>(ch)];
            const T gam = g_node->values[static_cast<std::size_t>(ch)];
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (int b = 0; b < n; ++b) {
                const long long base = (static_cast<long long>(b) * c + ch) * plane;
                for (long long i = 0; i < plane; ++i) {
                    const T dy = g[base + i];
                    sum_dy += dy;
                    sum_dy_xhat += dy * (xv[base + i] - mu) * is;
                }
            }
            if (need_g) g_node->grad[static_cast<std::size_t>(ch)] += sum_dy_xhat;
            if (need_b) b_node->grad[static_cast<std::size_t>(ch)] += sum_dy;
            if (!need_x) continue;
            for (int b = 0; b < n; ++b) {
                const long long base = (static_cast<long long>(b) * c + ch) * plane;
                for (long long i = 0; i < plane; ++i) {
                    const T dy = g[base + i];
                    const T xhat = (xv[base + i] - mu) * is;
                    T dx;
                    if (training) {
                        dx = gam * is / static_cast<T>(m) *
                             (static_cast<T>(m) * dy - sum_dy - xhat * sum_dy_xhat);
                    } else {
                        dx = gam * is * dy;
                    }
                    x_node->grad[static_cast<std::size_t>(base + i)] += dx;
                }
            }
        }
    };
    return detail::make_op_result<T>(input.shape(), std::move(out), {input.node, gamma.node, beta.node},
                                     std::move(backprop));
}

// Structured dropout: zero contiguous block_size x block_size squares seeded
// at Bernoulli(gamma) top-left positions, mask shared across channels and
// independent per batch item, survivors rescaled by total/kept.
template <typename T>
Tensor<T> dropblock(const Tensor<T>& input, int block_size, double drop_prob, RngStream& rng,
                    bool training) {
    detail::require_4d(input.shape(), "dropblock input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (block_size < 1 || block_size > std::min(h, w))
        throw ConfigError("dropblock: block_size " + std::to_string(block_size) +
                          " exceeds feature map " + std::to_string(h) + "x" + std::to_string(w));
    if (drop_prob < 0.0 || drop_prob > 1.0)
        throw ParameterError("dropblock: drop_prob must be in [0,1]");
    if (!training || drop_prob == 0.0) return input;

    const long long plane = static_cast<long long>(h) * w;
    const int seed_h = h - block_size + 1, seed_w = w - block_size + 1;
    const double gamma = drop_prob * (static_cast<double>(h) * w) /
                         (static_cast<double>(block_size) * block_size * seed_h * seed_w);
    auto mask = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * plane, T(1));
    auto scale = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n), T(1));
    for (int b = 0; b < n; ++b) {
        T* mp = mask->data() + static_cast<long long>(b) * plane;
        for (int y = 0; y < seed_h; ++y)
            for (int x = 0; x < seed_w; ++x)
                if (rng.bernoulli(gamma))
                    for (int i = 0; i < block_size; ++i)
                        for (int j = 0; j < block_size; ++j)
                            mp[static_cast<long long>(y + i) * w + (x + j)] = T(0);
        long long kept = 0;
        for (long long i = 0; i < plane; ++i) kept += mp[i] != T(0);
        (*scale)[static_cast<std::size_t>(b)] =
            kept > 0 ? static_cast<T>(plane) / static_cast<T>(kept) : T(0);
    }

    std::vector<T> out(input.values().size());
    const T* xv = input.values().data();
    for (int b = 0; b < n; ++b) {
        const T s = (*scale)[static_cast<std::size_t>(b)];
        const T* mp = mask->data() + static_cast<long long>(b) * plane;
        for (int ch = 0; ch < c; ++ch) {
            const long long base = (static_cast<long long>(b) * c + ch) * plane;
            for (long long i = 0; i < plane; ++i) out[base + i] = xv[base + i] * mp[i] * s;
        }
    }
    auto x_node = input.node;
    auto backprop = [x_node, mask, scale, n, c, plane](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        for (int b = 0; b < n; ++b) {
            const T s = (*scale)[static_cast<std::size_t>(b)];
            const T* mp = mask->data() + static_cast<long long>(b) * plane;
            for (int ch = 0; ch < c; ++ch) {
                const long long base = (static_cast<long long>(b) * c + ch) * plane;
                for (long long i = 0; i < plane; ++i)
                    x_node->grad[static_cast<std::size_t>(base + i)] += self.grad[base + i] * mp[i] * s;
            }
        }
    };
    return detail::make_op_result<T>(input.shape(), std::move(out), {input.node}, std::move(backprop));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    std::vector<T> out(input.values().size());
    const auto& xv = input.values();
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    auto x_node = input.node;
    auto backprop = [x_node](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (x_node->values[i] > T(0)) x_node->grad[i] += self.grad[i];
    };
    return detail::make_op_result<T>(input.shape(), std::move(out), {input.node}, std::move(backprop));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    std::vector<T> out(input.values().size());
    const auto& xv = input.values();
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
    auto values = std::make_shared<std::vector<T>>(out);
    auto x_node = input.node;
    auto backprop = [x_node, values](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T s = (*values)[i];
            x_node->grad[i] += self.grad[i] * s * (T(1) - s);
        }
    };
    return detail::make_op_result<T>(input.shape(), std::move(out), {input.node}, std::move(backprop));
}

namespace detail {

// 4-d broadcast: every axis of each operand must equal the output axis or 1.
// (The network only exercises NxCx1x1-vs-NxCxHxW, Nx1xHxW-vs-NxCxHxW and
// scalars, but the axis-wise rule covers those uniformly.)
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    if (a == b) return a;
    if (numel(a) == 1) return b;
    if (numel(b) == 1) return a;
    if (a.size() != 4 || b.size() != 4)
        throw DimensionError("broadcast: shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not compatible");
    Shape out(4);
    for (int i = 0; i < 4; ++i) {
        const int ai = a[static_cast<std::size_t>(i)], bi = b[static_cast<std::size_t>(i)];
        if (ai == bi)
            out[static_cast<std::size_t>(i)] = ai;
        else if (ai == 1)
            out[static_cast<std::size_t>(i)] = bi;
        else if (bi == 1)
            out[static_cast<std::size_t>(i)] = ai;
        else
            throw DimensionError("broadcast: axis " + std::to_string(i) + " mismatch between " +
                                 shape_str(a) + " and " + shape_str(b));
    }
    return out;
}

inline long long broadcast_index(const Shape& from, const Shape& to, long long flat) {
    if (from == to) return flat;
    if (numel(from) == 1) return 0;
    // decompose flat index in `to`, clamp broadcast axes, recompose in `from`
    long long coords[4];
    long long rem = flat;
    for (int i = 3; i >= 0; --i) {
        coords[i] = rem % to[static_cast<std::size_t>(i)];
        rem /= to[static_cast<std::size_t>(i)];
    }
    long long idx = 0;
    for (int i = 0; i < 4; ++i) {
        const long long c = from[static_cast<std::size_t>(i)] == 1 ? 0 : coords[i];
        idx = idx * from[static_cast<std::size_t>(i)] + c;
    }
    return idx;
}

} // namespace detail

template <typename T, bool IsMul>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape oshape = detail::broadcast_shape(a.shape(), b.shape());
    const long long total = numel(oshape);
    std::vector<T> out(static_cast<std::size_t>(total));
    const Shape as = a.shape(), bs = b.shape();
    const auto& av = a.values();
    const auto& bv = b.values();
    for (long long i = 0; i < total; ++i) {
        const T x = av[static_cast<std::size_t>(detail::broadcast_index(as, oshape, i))];
        const T y = bv[static_cast<std::size_t>(detail::broadcast_index(bs, oshape, i))];
        out[static_cast<std::size_t>(i)] = IsMul ? x * y : x + y;
    }
    auto a_node = a.node;
    auto b_node = b.node;
    auto backprop = [a_node, b_node, as, bs, oshape, total](TensorNode<T>& self) {
        for (long long i = 0; i < total; ++i) {
            const T g = self.grad[static_cast<std::size_t>(i)];
            const long long ia = detail::broadcast_index(as, oshape, i);
            const long long ib = detail::broadcast_index(bs, oshape, i);
            if (a_node->requires_grad) {
                a_node->ensure_grad();
                a_node->grad[static_cast<std::size_t>(ia)] +=
                    IsMul ? g * b_node->values[static_cast<std::size_t>(ib)] : g;
            }
            if (b_node->requires_grad) {
                b_node->ensure_grad();
                b_node->grad[static_cast<std::size_t>(ib)] +=
                    IsMul ? g * a_node->values[static_cast<std::size_t>(ia)] : g;
            }
        }
    };
    return detail::make_op_result<T>(oshape, std::move(out), {a.node, b.node}, std::move(backprop));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_elementwise<T, false>(a, b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_elementwise<T, true>(a, b);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_4d(a.shape(), "concat_channels lhs");
    detail::require_4d(b.shape(), "concat_channels rhs");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw DimensionError("concat_channels: non-channel axes differ, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const long long plane = static_cast<long long>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * (ca + cb) * plane);
    for (int bn = 0; bn < n; ++bn) {
        std::copy_n(a.values().data() + static_cast<long long>(bn) * ca * plane, ca * plane,
                    out.data() + static_cast<long long>(bn) * (ca + cb) * plane);
        std::copy_n(b.values().data() + static_cast<long long>(bn) * cb * plane, cb * plane,
                    out.data() + (static_cast<long long>(bn) * (ca + cb) + ca) * plane);
    }
    auto a_node = a.node;
    auto b_node = b.node;
    auto backprop = [a_node, b_node, n, ca, cb, plane](TensorNode<T>& self) {
        for (int bn = 0; bn < n; ++bn) {
            const T* g = self.grad.data() + static_cast<long long>(bn) * (ca + cb) * plane;
            if (a_node->requires_grad) {
                a_node->ensure_grad();
                T* dst = a_node->grad.data() + static_cast<long long>(bn) * ca * plane;
                for (long long i = 0; i < static_cast<long long>(ca) * plane; ++i) dst[i] += g[i];
            }
            if (b_node->requires_grad) {
                b_node->ensure_grad();
                T* dst = b_node->grad.data() + static_cast<long long>(bn) * cb * plane;
                for (long long i = 0; i < static_cast<long long>(cb) * plane; ++i)
                    dst[i] += g[static_cast<long long>(ca) * plane + i];
            }
        }
    };
    return detail::make_op_result<T>({n, ca + cb, h, w}, std::move(out), {a.node, b.node},
                                     std::move(backprop));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& input) {
    T acc = T(0);
    for (const T v : input.values()) acc += v;
    auto x_node = input.node;
    auto backprop = [x_node](TensorNode<T>& self) {
        if (!x_node->requires_grad) return;
        x_node->ensure_grad();
        const T g = self.grad[0];
        for (auto& gv : x_node->grad) gv += g;
    };
    return detail::make_op_result<T>({1}, {acc}, {input.node}, std::move(backprop));
}

// Reverse-mode sweep from a scalar loss.  Gradients of all reachable nodes
// are zeroed first, then filled; every reachable requires_grad tensor ends
// with a populated grad.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward: loss must be a defined scalar tensor");
    // iterative post-order topological sort
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node.get(), 0);
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode<T>* parent = node->parents[next++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (TensorNode<T>* node : order)
        if (node->requires_grad) node->grad.assign(node->values.size(), T(0));
    loss.node->ensure_grad();
    loss.node->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* node = *it;
        if (node->backprop && node->requires_grad && !node->grad.empty()) node->backprop(*node);
    }
}

} // namespace caunet
