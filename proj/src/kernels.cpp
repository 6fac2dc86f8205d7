#include "ick/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ick {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::shape_mismatch: return "shape mismatch";
        case ErrorKind::label_out_of_range: return "label out of range";
        case ErrorKind::bad_magic: return "bad magic";
        case ErrorKind::truncated_file: return "truncated file";
        case ErrorKind::count_mismatch: return "count mismatch";
        case ErrorKind::record_size: return "record size";
        case ErrorKind::version_mismatch: return "version mismatch";
        case ErrorKind::insufficient_samples: return "insufficient samples";
        case ErrorKind::empty_input: return "empty input";
        case ErrorKind::stale_feature_bank: return "stale feature bank";
        case ErrorKind::not_on_tape: return "not on tape";
        case ErrorKind::invalid_argument: return "invalid argument";
        case ErrorKind::io: return "io error";
        case ErrorKind::config: return "config error";
        case ErrorKind::consistency: return "consistency error";
    }
    return "error";
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

}  // namespace ick

namespace ick::kernels {

namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
    if (shape.size() != rank) {
        throw Error(ErrorKind::shape_mismatch,
                    std::string(what) + " expects rank " + std::to_string(rank) + ", got " + shape_to_string(shape));
    }
}

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
struct Span1d {
    std::size_t lo;
    std::size_t hi;
};

Span1d valid_outputs(std::size_t out_len, std::size_t in_len, std::size_t tap, Conv2dParams p) {
    // need 0 <= o*stride + tap - pad < in_len
    std::size_t lo = 0;
    if (tap < p.padding) {
        const std::size_t deficit = p.padding - tap;
        lo = (deficit + p.stride - 1) / p.stride;
    }
    // o*stride + tap - pad <= in_len - 1  ->  o <= (in_len - 1 + pad - tap) / stride
    std::size_t hi = 0;
    if (in_len + p.padding > tap) {
        hi = std::min(out_len, (in_len - 1 + p.padding - tap) / p.stride + 1);
    }
    if (hi < lo) hi = lo;
    return {lo, hi};
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a.shape(), 2, "matmul lhs");
    require_rank(b.shape(), 2, "matmul rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw Error(ErrorKind::shape_mismatch,
                    "matmul " + shape_to_string(a.shape()) + " by " + shape_to_string(b.shape()));
    }
    Tensor<T> c({m, n});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* row = pc + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const T av = pa[i * k + t];
            const T* brow = pb + t * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> matmul_grad_lhs(const Tensor<T>& grad_out, const Tensor<T>& b) {
    const std::size_t m = grad_out.dim(0), n = grad_out.dim(1), k = b.dim(0);
    Tensor<T> ga({m, k});
    const T* pg = grad_out.data().data();
    const T* pb = b.data().data();
    T* out = ga.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            T acc = 0;
            const T* brow = pb + t * n;
            const T* grow = pg + i * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            out[i * k + t] = acc;
        }
    }
    return ga;
}

template <typename T>
Tensor<T> matmul_grad_rhs(const Tensor<T>& a, const Tensor<T>& grad_out) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = grad_out.dim(1);
    Tensor<T> gb({k, n});
    const T* pa = a.data().data();
    const T* pg = grad_out.data().data();
    T* out = gb.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const T av = pa[i * k + t];
            T* orow = out + t * n;
            const T* grow = pg + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
    }
    return gb;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require_rank(x.shape(), 2, "add_bias input");
    if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw Error(ErrorKind::shape_mismatch,
                    "bias " + shape_to_string(bias.shape()) + " for input " + shape_to_string(x.shape()));
    }
    Tensor<T> out = x;
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bias[j];
    return out;
}

template <typename T>
Tensor<T> bias_grad(const Tensor<T>& grad_out) {
    const std::size_t rows = grad_out.dim(0), cols = grad_out.dim(1);
    Tensor<T> g({cols});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g[j] += grad_out[i * cols + j];
    return g;
}

Shape conv2d_output_shape(const Shape& input, const Shape& kernel, Conv2dParams params) {
    require_rank(input, 4, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    if (params.stride == 0) throw Error(ErrorKind::invalid_argument, "conv2d stride must be positive");
    if (kernel[1] != input[1]) {
        throw Error(ErrorKind::shape_mismatch,
                    "conv2d kernel " + shape_to_string(kernel) + " vs input " + shape_to_string(input));
    }
    const std::size_t ph = input[2] + 2 * params.padding;
    const std::size_t pw = input[3] + 2 * params.padding;
    if (kernel[2] > ph || kernel[3] > pw) {
        throw Error(ErrorKind::shape_mismatch, "conv2d kernel " + shape_to_string(kernel) +
                                                   " larger than padded input " + shape_to_string(input));
    }
    return {input[0], kernel[0], (ph - kernel[2]) / params.stride + 1, (pw - kernel[3]) / params.stride + 1};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, Conv2dParams params) {
    const Shape out_shape = conv2d_output_shape(input.shape(), kernel.shape(), params);
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t F = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
    const std::size_t OH = out_shape[2], OW = out_shape[3];
    const std::size_t s = params.stride;
    Tensor<T> out(out_shape);
    const T* in = input.data().data();
    const T* k = kernel.data().data();
    T* o = out.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) {
            T* oplane = o + ((n * F + f) * OH) * OW;
            for (std::size_t c = 0; c < C; ++c) {
                const T* iplane = in + ((n * C + c) * H) * W;
                for (std::size_t i = 0; i < KH; ++i) {
                    const Span1d rows = valid_outputs(OH, H, i, params);
                    for (std::size_t j = 0; j < KW; ++j) {
                        const Span1d cols = valid_outputs(OW, W, j, params);
                        const T w = k[((f * C + c) * KH + i) * KW + j];
                        const std::size_t count = cols.hi - cols.lo;
                        const std::size_t col0 = cols.lo * s + j - params.padding;
                        for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                            const T* src = iplane + (oh * s + i - params.padding) * W + col0;
                            T* dst = oplane + oh * OW + cols.lo;
                            for (std::size_t q = 0; q < count; ++q) dst[q] += w * src[q * s];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const Shape& input_shape,
                            Conv2dParams params) {
    const std::size_t N = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
    const std::size_t F = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
    const std::size_t OH = grad_out.dim(2), OW = grad_out.dim(3);
    const std::size_t s = params.stride;
    Tensor<T> gin(input_shape);
    const T* g = grad_out.data().data();
    const T* k = kernel.data().data();
    T* gi = gin.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) {
            const T* gplane = g + ((n * F + f) * OH) * OW;
            for (std::size_t c = 0; c < C; ++c) {
                T* iplane = gi + ((n * C + c) * H) * W;
                for (std::size_t i = 0; i < KH; ++i) {
                    const Span1d rows = valid_outputs(OH, H, i, params);
                    for (std::size_t j = 0; j < KW; ++j) {
                        const Span1d cols = valid_outputs(OW, W, j, params);
                        const T w = k[((f * C + c) * KH + i) * KW + j];
                        const std::size_t count = cols.hi - cols.lo;
                        const std::size_t col0 = cols.lo * s + j - params.padding;
                        for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                            T* dst = iplane + (oh * s + i - params.padding) * W + col0;
                            const T* src = gplane + oh * OW + cols.lo;
                            for (std::size_t q = 0; q < count; ++q) dst[q * s] += w * src[q];
                        }
                    }
                }
            }
        }
    }
    return gin;
}

template <typename T>
Tensor<T> conv2d_grad_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const Shape& kernel_shape,
                             Conv2dParams params) {
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t F = kernel_shape[0], KH = kernel_shape[2], KW = kernel_shape[3];
    const std::size_t OH = grad_out.dim(2), OW = grad_out.dim(3);
    const std::size_t s = params.stride;
    Tensor<T> gk(kernel_shape);
    const T* g = grad_out.data().data();
    const T* in = input.data().data();
    T* out = gk.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) {
            const T* gplane = g + ((n * F + f) * OH) * OW;
            for (std::size_t c = 0; c < C; ++c) {
                const T* iplane = in + ((n * C + c) * H) * W;
                for (std::size_t i = 0; i < KH; ++i) {
                    const Span1d rows = valid_outputs(OH, H, i, params);
                    for (std::size_t j = 0; j < KW; ++j) {
                        const Span1d cols = valid_outputs(OW, W, j, params);
                        const std::size_t count = cols.hi - cols.lo;
                        const std::size_t col0 = cols.lo * s + j - params.padding;
                        T acc = 0;
                        for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                            const T* src = iplane + (oh * s + i - params.padding) * W + col0;
                            const T* grow = gplane + oh * OW + cols.lo;
                            for (std::size_t q = 0; q < count; ++q) acc += grow[q] * src[q * s];
                        }
                        out[((f * C + c) * KH + i) * KW + j] += acc;
                    }
                }
            }
        }
    }
    return gk;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return out;
}

template <typename T>
Tensor<T> relu_grad(const Tensor<T>& grad_out, const Tensor<T>& x) {
    Tensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(x[i] > T{0})) g[i] = T{0};
    return g;
}

Shape max_pool2d_output_shape(const Shape& input, Pool2dParams params) {
    require_rank(input, 4, "max_pool2d input");
    if (params.window == 0 || params.stride == 0) {
        throw Error(ErrorKind::invalid_argument, "max_pool2d window and stride must be positive");
    }
    if (params.window > input[2] || params.window > input[3]) {
        throw Error(ErrorKind::shape_mismatch, "max_pool2d window " + std::to_string(params.window) +
                                                   " larger than input " + shape_to_string(input));
    }
    return {input[0], input[1], (input[2] - params.window) / params.stride + 1,
            (input[3] - params.window) / params.stride + 1};
}

template <typename T>
PoolResult<T> max_pool2d(const Tensor<T>& input, Pool2dParams params) {
    const Shape out_shape = max_pool2d_output_shape(input.shape(), params);
    const std::size_t planes = input.dim(0) * input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t OH = out_shape[2], OW = out_shape[3];
    PoolResult<T> result{Tensor<T>(out_shape), std::vector<std::size_t>(num_elements(out_shape))};
    std::size_t o = 0;
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * H * W;
        for (std::size_t oh = 0; oh < OH; ++oh) {
            for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
                std::size_t best = base + (oh * params.stride) * W + ow * params.stride;
                for (std::size_t i = 0; i < params.window; ++i) {
                    for (std::size_t j = 0; j < params.window; ++j) {
                        const std::size_t idx = base + (oh * params.stride + i) * W + ow * params.stride + j;
                        if (input[idx] > input[best]) best = idx;
                    }
                }
                result.output[o] = input[best];
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

template <typename T>
Tensor<T> max_pool2d_grad(const Tensor<T>& grad_out, std::span<const std::size_t> argmax, const Shape& input_shape) {
    Tensor<T> g(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += grad_out[o];
    return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorKind::shape_mismatch,
                    "add " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require_rank(logits.shape(), 2, "softmax");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (cols < 2) throw Error(ErrorKind::shape_mismatch, "softmax needs at least 2 classes");
    Tensor<T> out(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = logits.data().data() + r * cols;
        T* y = out.data().data() + r * cols;
        const T mx = *std::max_element(x, x + cols);
        T total = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
    }
    return out;
}

template <typename T>
Tensor<T> softmax_grad(const Tensor<T>& grad_out, const Tensor<T>& probs) {
    const std::size_t rows = probs.dim(0), cols = probs.dim(1);
    Tensor<T> g(probs.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = probs.data().data() + r * cols;
        const T* go = grad_out.data().data() + r * cols;
        T dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += go[j] * p[j];
        for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] = p[j] * (go[j] - dot);
    }
    return g;
}

template <typename T>
void check_labels(const Tensor<T>& probs, std::span<const Label> labels) {
    require_rank(probs.shape(), 2, "cross_entropy");
    if (labels.size() != probs.dim(0)) {
        throw Error(ErrorKind::shape_mismatch, std::to_string(labels.size()) + " labels for " +
                                                   std::to_string(probs.dim(0)) + " rows");
    }
    const auto classes = static_cast<Label>(probs.dim(1));
    for (Label y : labels) {
        if (y < 0 || y >= classes) {
            throw Error(ErrorKind::label_out_of_range,
                        "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

template <typename T>
T cross_entropy(const Tensor<T>& probs, std::span<const Label> labels) {
    check_labels(probs, labels);
    const std::size_t rows = probs.dim(0), cols = probs.dim(1);
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T p = std::max(probs[r * cols + static_cast<std::size_t>(labels[r])], static_cast<T>(kProbabilityFloor));
        total -= std::log(p);
    }
    return total / static_cast<T>(rows);
}

template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, std::span<const Label> labels, T grad_out) {
    const std::size_t rows = probs.dim(0), cols = probs.dim(1);
    Tensor<T> g(probs.shape());
    const T scale = grad_out / static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t idx = r * cols + static_cast<std::size_t>(labels[r]);
        // the clamp is flat below the floor
        if (probs[idx] >= static_cast<T>(kProbabilityFloor)) g[idx] = -scale / probs[idx];
    }
    return g;
}

template <typename T>
std::vector<Label> argmax_rows(const Tensor<T>& x) {
    const std::size_t rows = x.dim(0), cols = x.size() / x.dim(0);
    std::vector<Label> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j)
            if (x[r * cols + j] > x[r * cols + best]) best = j;
        out[r] = static_cast<Label>(best);
    }
    return out;
}

#define ICK_INSTANTIATE_KERNELS(T)                                                                        \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> matmul_grad_lhs(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> matmul_grad_rhs(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> bias_grad(const Tensor<T>&);                                                       \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, Conv2dParams);                          \
    template Tensor<T> conv2d_grad_input(const Tensor<T>&, const Tensor<T>&, const Shape&, Conv2dParams); \
    template Tensor<T> conv2d_grad_kernel(const Tensor<T>&, const Tensor<T>&, const Shape&, Conv2dParams); \
    template Tensor<T> relu(const Tensor<T>&);                                                            \
    template Tensor<T> relu_grad(const Tensor<T>&, const Tensor<T>&);                                     \
    template PoolResult<T> max_pool2d(const Tensor<T>&, Pool2dParams);                                    \
    template Tensor<T> max_pool2d_grad(const Tensor<T>&, std::span<const std::size_t>, const Shape&);     \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> softmax(const Tensor<T>&);                                                         \
    template Tensor<T> softmax_grad(const Tensor<T>&, const Tensor<T>&);                                  \
    template T cross_entropy(const Tensor<T>&, std::span<const Label>);                                   \
    template Tensor<T> cross_entropy_grad(const Tensor<T>&, std::span<const Label>, T);                   \
    template void check_labels(const Tensor<T>&, std::span<const Label>);                                 \
    template std::vector<Label> argmax_rows(const Tensor<T>&);

ICK_INSTANTIATE_KERNELS(float)
ICK_INSTANTIATE_KERNELS(double)

#undef ICK_INSTANTIATE_KERNELS

}  // namespace ick::kernels
