#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ick/tensor.hpp"

// Forward and backward kernels shared by the taped (training) and untaped
// (inference) code paths. Every kernel uses a fixed loop order so results are
// bitwise reproducible.
namespace ick::kernels {

using Label = std::int32_t;

inline constexpr double kProbabilityFloor = 1e-12;

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct Pool2dParams {
    std::size_t window = 2;
    std::size_t stride = 2;
};

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// grad_a = g * b^T
template <typename T>
Tensor<T> matmul_grad_lhs(const Tensor<T>& grad_out, const Tensor<T>& b);
// grad_b = a^T * g
template <typename T>
Tensor<T> matmul_grad_rhs(const Tensor<T>& a, const Tensor<T>& grad_out);

/// x[N x K] + bias[K] on every row.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T>
Tensor<T> bias_grad(const Tensor<T>& grad_out);

Shape conv2d_output_shape(const Shape& input, const Shape& kernel, Conv2dParams params);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, Conv2dParams params);
template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const Shape& input_shape,
                            Conv2dParams params);
template <typename T>
Tensor<T> conv2d_grad_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const Shape& kernel_shape,
                             Conv2dParams params);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// Subgradient at exactly 0 is 0.
template <typename T>
Tensor<T> relu_grad(const Tensor<T>& grad_out, const Tensor<T>& x);

Shape max_pool2d_output_shape(const Shape& input, Pool2dParams params);

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

// Ties resolve to the lowest flat input index.
template <typename T>
PoolResult<T> max_pool2d(const Tensor<T>& input, Pool2dParams params);
template <typename T>
Tensor<T> max_pool2d_grad(const Tensor<T>& grad_out, std::span<const std::size_t> argmax, const Shape& input_shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);
template <typename T>
Tensor<T> softmax_grad(const Tensor<T>& grad_out, const Tensor<T>& probs);

/// Mean negative log-likelihood of the labelled class, probabilities clamped
/// at kProbabilityFloor.
template <typename T>
T cross_entropy(const Tensor<T>& probs, std::span<const Label> labels);
template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, std::span<const Label> labels, T grad_out);

template <typename T>
void check_labels(const Tensor<T>& probs, std::span<const Label> labels);

/// Index of the largest entry in each row; ties go to the lowest index.
template <typename T>
std::vector<Label> argmax_rows(const Tensor<T>& x);

}  // namespace ick::kernels
