#include "ick/tape.hpp"

#include <atomic>
#include <memory>

namespace ick {

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}

template <typename T>
GradTape<T>::GradTape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
Var GradTape<T>::leaf(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var{nodes_.size() - 1, id_};
}

template <typename T>
const typename GradTape<T>::Node& GradTape<T>::node(Var v) const {
    if (v.tape_id != id_ || v.index >= nodes_.size()) {
        throw Error(ErrorKind::not_on_tape, "variable does not belong to this tape");
    }
    return nodes_[v.index];
}

template <typename T>
const Tensor<T>& GradTape<T>::value(Var v) const {
    return node(v).value;
}

template <typename T>
const Tensor<T>& GradTape<T>::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) {
        throw Error(ErrorKind::not_on_tape, "no gradient recorded; call backward() first");
    }
    return n.grad;
}

template <typename T>
bool GradTape<T>::requires_grad(Var v) const {
    return node(v).requires_grad;
}

template <typename T>
Var GradTape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardRule rule) {
    bool any = false;
    for (Var in : inputs) any = any || node(in).requires_grad;
    nodes_.push_back(Node{std::move(value), {}, any, any ? std::move(rule) : BackwardRule{}});
    return Var{nodes_.size() - 1, id_};
}

template <typename T>
void GradTape<T>::accumulate(Var v, const Tensor<T>& g) {
    Tensor<T>& acc = nodes_[v.index].grad;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

template <typename T>
Var GradTape<T>::matmul(Var a, Var b) {
    Tensor<T> out = kernels::matmul(value(a), value(b));
    return record(std::move(out), {a, b}, [a, b](GradTape& t, const Tensor<T>& g) {
        if (t.needs(a)) t.accumulate(a, kernels::matmul_grad_lhs(g, t.value(b)));
        if (t.needs(b)) t.accumulate(b, kernels::matmul_grad_rhs(t.value(a), g));
    });
}

template <typename T>
Var GradTape<T>::add_bias(Var x, Var bias) {
    Tensor<T> out = kernels::add_bias(value(x), value(bias));
    return record(std::move(out), {x, bias}, [x, bias](GradTape& t, const Tensor<T>& g) {
        if (t.needs(x)) t.accumulate(x, g);
        if (t.needs(bias)) t.accumulate(bias, kernels::bias_grad(g));
    });
}

template <typename T>
Var GradTape<T>::conv2d(Var input, Var kernel, kernels::Conv2dParams params) {
    Tensor<T> out = kernels::conv2d(value(input), value(kernel), params);
    return record(std::move(out), {input, kernel}, [input, kernel, params](GradTape& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(input);
        const Tensor<T>& k = t.value(kernel);
        if (t.needs(input)) t.accumulate(input, kernels::conv2d_grad_input(g, k, x.shape(), params));
        if (t.needs(kernel)) t.accumulate(kernel, kernels::conv2d_grad_kernel(g, x, k.shape(), params));
    });
}

template <typename T>
Var GradTape<T>::relu(Var x) {
    Tensor<T> out = kernels::relu(value(x));
    return record(std::move(out), {x}, [x](GradTape& t, const Tensor<T>& g) {
        t.accumulate(x, kernels::relu_grad(g, t.value(x)));
    });
}

template <typename T>
Var GradTape<T>::max_pool2d(Var x, kernels::Pool2dParams params) {
    auto pooled = kernels::max_pool2d(value(x), params);
    auto argmax = std::make_shared<std::vector<std::size_t>>(std::move(pooled.argmax));
    return record(std::move(pooled.output), {x}, [x, argmax](GradTape& t, const Tensor<T>& g) {
        t.accumulate(x, kernels::max_pool2d_grad(g, std::span<const std::size_t>(*argmax), t.value(x).shape()));
    });
}

template <typename T>
Var GradTape<T>::flatten(Var x) {
    const Tensor<T>& in = value(x);
    const std::size_t rows = in.dim(0);
    Tensor<T> out = in.reshaped({rows, in.size() / rows});
    return record(std::move(out), {x}, [x](GradTape& t, const Tensor<T>& g) { t.accumulate(x, g); });
}

template <typename T>
Var GradTape<T>::add(Var a, Var b) {
    Tensor<T> out = kernels::add(value(a), value(b));
    return record(std::move(out), {a, b}, [a, b](GradTape& t, const Tensor<T>& g) {
        if (t.needs(a)) t.accumulate(a, g);
        if (t.needs(b)) t.accumulate(b, g);
    });
}

template <typename T>
Var GradTape<T>::mul(Var a, Var b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (va.shape() != vb.shape()) {
        throw Error(ErrorKind::shape_mismatch,
                    "mul " + shape_to_string(va.shape()) + " and " + shape_to_string(vb.shape()));
    }
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return record(std::move(out), {a, b}, [a, b](GradTape& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(a);
        const Tensor<T>& y = t.value(b);
        if (t.needs(a)) {
            Tensor<T> ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i];
            t.accumulate(a, ga);
        }
        if (t.needs(b)) {
            Tensor<T> gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= x[i];
            t.accumulate(b, gb);
        }
    });
}

template <typename T>
Var GradTape<T>::scale(Var x, T factor) {
    Tensor<T> out = value(x);
    for (T& v : out.data()) v *= factor;
    return record(std::move(out), {x}, [x, factor](GradTape& t, const Tensor<T>& g) {
        Tensor<T> gx = g;
        for (T& v : gx.data()) v *= factor;
        t.accumulate(x, gx);
    });
}

template <typename T>
Var GradTape<T>::sum(Var x) {
    T total = 0;
    for (T v : value(x).data()) total += v;
    return record(Tensor<T>({1}, total), {x}, [x](GradTape& t, const Tensor<T>& g) {
        t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0]));
    });
}

template <typename T>
Var GradTape<T>::softmax(Var logits) {
    Tensor<T> out = kernels::softmax(value(logits));
    const std::size_t self = nodes_.size();
    return record(std::move(out), {logits}, [logits, self](GradTape& t, const Tensor<T>& g) {
        t.accumulate(logits, kernels::softmax_grad(g, t.nodes_[self].value));
    });
}

template <typename T>
Var GradTape<T>::cross_entropy(Var probs, std::span<const kernels::Label> labels) {
    const T loss = kernels::cross_entropy(value(probs), labels);
    auto kept = std::make_shared<std::vector<kernels::Label>>(labels.begin(), labels.end());
    return record(Tensor<T>({1}, loss), {probs}, [probs, kept](GradTape& t, const Tensor<T>& g) {
        t.accumulate(probs, kernels::cross_entropy_grad(t.value(probs), std::span<const kernels::Label>(*kept), g[0]));
    });
}

template <typename T>
void GradTape<T>::backward(Var loss) {
    const Node& root = node(loss);
    if (root.value.size() != 1) {
        throw Error(ErrorKind::shape_mismatch, "backward needs a scalar loss, got " + shape_to_string(root.value.shape()));
    }
    for (std::size_t i = 0; i <= loss.index; ++i) {
        nodes_[i].grad = Tensor<T>::zeros(nodes_[i].value.shape());
    }
    for (std::size_t i = loss.index + 1; i < nodes_.size(); ++i) nodes_[i].grad = Tensor<T>();
    nodes_[loss.index].grad[0] = T{1};
    for (std::size_t i = loss.index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.rule) n.rule(*this, n.grad);
    }
}

template class GradTape<float>;
template class GradTape<double>;

}  // namespace ick
