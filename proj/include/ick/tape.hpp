#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ick/kernels.hpp"
#include "ick/tensor.hpp"

namespace ick {

/// Handle to a value recorded on a GradTape.
struct Var {
    std::size_t index = 0;
    std::uint64_t tape_id = 0;
};

/// Records primitive applications in execution order and replays their
/// backward rules in strict reverse order. A tape is single-threaded; use one
/// tape per minibatch.
template <typename T>
class GradTape {
public:
    GradTape();

    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;
    GradTape(GradTape&&) noexcept = default;
    GradTape& operator=(GradTape&&) noexcept = default;

    /// Leaf value. Parameters use requires_grad = true, inputs usually false.
    Var leaf(Tensor<T> value, bool requires_grad = true);

    const Tensor<T>& value(Var v) const;
    /// Gradient accumulated by the last backward(); zeros for untouched nodes.
    const Tensor<T>& grad(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    Var matmul(Var a, Var b);
    Var add_bias(Var x, Var bias);
    Var conv2d(Var input, Var kernel, kernels::Conv2dParams params);
    Var relu(Var x);
    Var max_pool2d(Var x, kernels::Pool2dParams params);
    /// N x ... -> N x (product of the rest)
    Var flatten(Var x);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, T factor);
    Var sum(Var x);
    Var softmax(Var logits);
    Var cross_entropy(Var probs, std::span<const kernels::Label> labels);

    /// Reverse-mode sweep from a scalar loss. Gradients are summed over every
    /// use site of a value.
    void backward(Var loss);

private:
    using BackwardRule = std::function<void(GradTape&, const Tensor<T>& grad_out)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        BackwardRule rule;
    };

    const Node& node(Var v) const;
    Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardRule rule);
    void accumulate(Var v, const Tensor<T>& g);
    bool needs(Var v) const { return nodes_[v.index].requires_grad; }

    std::uint64_t id_;
    std::vector<Node> nodes_;
};

extern template class GradTape<float>;
extern template class GradTape<double>;

}  // namespace ick
