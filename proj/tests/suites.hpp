#pragma once

// Randomized check suites shared by the unit tests and the acceptance binary.

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "ick/icing.hpp"
#include "ick/kernels.hpp"
#include "ick/network.hpp"
#include "ick/tape.hpp"
#include "oracles.hpp"

namespace ick::test {

inline constexpr double kGradientTolerance = 1e-5;
inline constexpr double kOracleTolerance = 1e-6;

struct SuiteLine {
    std::string name;
    std::size_t cases = 0;  // probes or randomized shapes
    double worst = 0;       // worst relative error observed
};

namespace detail {

using Build = std::function<Var(GradTape<double>&, const std::vector<Var>&)>;

// Reduces a tensor-valued primitive to a scalar through a fixed random
// weighting, so every output element contributes to the gradient.
inline Var weighted_sum(GradTape<double>& tape, Var y, Var weights) { return tape.sum(tape.mul(y, weights)); }

struct Case {
    std::vector<Tensor<double>> leaves;
    std::vector<bool> trainable;
    Build build;
};

inline SuiteLine run_cases(const std::string& name, const std::function<Case(std::mt19937_64&)>& make,
                           std::size_t instances, std::size_t probes_per_leaf, std::mt19937_64& rng) {
    SuiteLine line{name};
    for (std::size_t i = 0; i < instances; ++i) {
        Case c = make(rng);
        const auto r = finite_difference_check(c.build, c.leaves, c.trainable, probes_per_leaf, rng);
        line.cases += r.probes;
        line.worst = std::max(line.worst, r.worst);
    }
    return line;
}

}  // namespace detail

/// Gradients of the mean cross-entropy of a whole network through
/// forward_taped, against finite differences of the untaped forward.
inline SuiteLine network_gradient_check(const std::string& name, const Network<double>& shape_source,
                                        const Shape& batch_shape, std::size_t instances, std::mt19937_64& rng,
                                        std::size_t probes_per_param = 15) {
    SuiteLine line{name};
    const std::size_t classes = shape_source.num_classes();
    for (std::size_t i = 0; i < instances; ++i) {
        Network<double> net = init_params(shape_source, InitScheme::he, rng());
        for (auto* p : trainable_parameters(net))
            for (double& x : p->data()) x += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
        const Tensor<double> batch = random_tensor<double>(batch_shape, rng);
        std::vector<kernels::Label> labels(batch_shape[0]);
        for (auto& l : labels) l = static_cast<kernels::Label>(random_size(rng, 0, classes - 1));

        GradTape<double> tape;
        std::vector<Var> vars;
        tape.backward(tape.cross_entropy(forward_taped(tape, net, tape.leaf(batch, false), vars), labels));
        auto params = trainable_parameters(net);
        auto loss = [&] { return static_cast<double>(kernels::cross_entropy(forward(net, batch), std::span(labels))); };
        for (std::size_t p = 0; p < params.size(); ++p) {
            const Tensor<double> analytic = tape.grad(vars[p]);
            for (std::size_t probe = 0; probe < probes_per_param; ++probe) {
                const std::size_t idx = random_size(rng, 0, params[p]->size() - 1);
                double& theta = (*params[p])[idx];
                const double saved = theta, h = 1e-6 * std::max(1.0, std::abs(saved));
                theta = saved + h;
                const double up = loss();
                theta = saved - h;
                const double down = loss();
                theta = saved;
                line.worst = std::max(line.worst, relative_error(analytic[idx], (up - down) / (2 * h), 1e-8));
                ++line.cases;
            }
        }
    }
    return line;
}

/// Central finite differences against the tape for every primitive and a
/// composed two-layer network, in double precision.
inline std::vector<SuiteLine> gradient_suite(std::uint64_t seed = 2024) {
    using detail::Case;
    using detail::weighted_sum;
    std::mt19937_64 rng(seed);
    std::vector<SuiteLine> lines;
    const std::size_t instances = 5, probes = 25;

    lines.push_back(detail::run_cases("matmul", [](std::mt19937_64& g) {
        const std::size_t m = random_size(g, 1, 5), k = random_size(g, 1, 5), n = random_size(g, 1, 5);
        return Case{{random_tensor<double>({m, k}, g), random_tensor<double>({k, n}, g), random_tensor<double>({m, n}, g)},
                    {true, true, false},
                    [](GradTape<double>& t, const std::vector<Var>& v) { return weighted_sum(t, t.matmul(v[0], v[1]), v[2]); }};
    }, instances, probes, rng));

    lines.push_back(detail::run_cases("add_bias", [](std::mt19937_64& g) {
        const std::size_t m = random_size(g, 1, 5), n = random_size(g, 1, 5);
        return Case{{random_tensor<double>({m, n}, g), random_tensor<double>({n}, g), random_tensor<double>({m, n}, g)},
                    {true, true, false},
                    [](GradTape<double>& t, const std::vector<Var>& v) { return weighted_sum(t, t.add_bias(v[0], v[1]), v[2]); }};
    }, instances, probes, rng));

    lines.push_back(detail::run_cases("conv2d", [](std::mt19937_64& g) {
        const std::size_t n = random_size(g, 1, 2), c = random_size(g, 1, 3), f = random_size(g, 1, 3);
        const std::size_t kk = random_size(g, 1, 3), pad = random_size(g, 0, 1), stride = random_size(g, 1, 2);
        const std::size_t h = random_size(g, 3, 6), w = random_size(g, 3, 6);
        const Shape out = kernels::conv2d_output_shape({n, c, h, w}, {f, c, kk, kk}, {stride, pad});
        return Case{{random_tensor<double>({n, c, h, w}, g), random_tensor<double>({f, c, kk, kk}, g),
                     random_tensor<double>(out, g)},
                    {true, true, false},
                    [stride, pad](GradTape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, t.conv2d(v[0], v[1], {stride, pad}), v[2]);
                    }};
    }, instances, probes, rng));

    lines.push_back(detail::run_cases("relu", [](std::mt19937_64& g) {
        const std::size_t n = random_size(g, 2, 20);
        return Case{{random_tensor<double>({n}, g), random_tensor<double>({n}, g)},
                    {true, false},
                    [](GradTape<double>& t, const std::vector<Var>& v) { return weighted_sum(t, t.relu(v[0]), v[1]); }};
    }, instances, 2 * probes, rng));

    lines.push_back(detail::run_cases("max_pool2d", [](std::mt19937_64& g) {
        const std::size_t window = random_size(g, 1, 3), stride = random_size(g, 1, 2);
        const std::size_t h = random_size(g, window, 6), w = random_size(g, window, 6);
        const Shape in{1, 2, h, w};
        const Shape out = kernels::max_pool2d_output_shape(in, {window, stride});
        return Case{{random_tensor<double>(in, g), random_tensor<double>(out, g)},
                    {true, false},
                    [window, stride](GradTape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, t.max_pool2d(v[0], {window, stride}), v[1]);
                    }};
    }, instances, 2 * probes, rng));

    lines.push_back(detail::run_cases("flatten+add+scale", [](std::mt19937_64& g) {
        const Shape s{2, random_size(g, 1, 3), 3};
        return Case{{random_tensor<double>(s, g), random_tensor<double>(s, g), random_tensor<double>({2, s[1] * 3}, g)},
                    {true, true, false},
                    [](GradTape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, t.flatten(t.scale(t.add(v[0], v[1]), 1.7)), v[2]);
                    }};
    }, instances, probes, rng));

    lines.push_back(detail::run_cases("mul+sum", [](std::mt19937_64& g) {
        const std::size_t n = random_size(g, 1, 12);
        return Case{{random_tensor<double>({n}, g), random_tensor<double>({n}, g)},
                    {true, true},
                    [](GradTape<double>& t, const std::vector<Var>& v) { return t.sum(t.mul(v[0], v[1])); }};
    }, instances, probes, rng));

    lines.push_back(detail::run_cases("softmax", [](std::mt19937_64& g) {
        const std::size_t n = random_size(g, 1, 4), k = random_size(g, 2, 6);
        return Case{{random_tensor<double>({n, k}, g, -3, 3), random_tensor<double>({n, k}, g)},
                    {true, false},
                    [](GradTape<double>& t, const std::vector<Var>& v) { return weighted_sum(t, t.softmax(v[0]), v[1]); }};
    }, instances, 2 * probes, rng));

    lines.push_back(detail::run_cases("cross_entropy", [](std::mt19937_64& g) {
        const std::size_t n = random_size(g, 1, 5), k = random_size(g, 2, 5);
        std::vector<kernels::Label> labels(n);
        for (auto& l : labels) l = static_cast<kernels::Label>(random_size(g, 0, k - 1));
        return Case{{random_tensor<double>({n, k}, g, 0.05, 1.0)},
                    {true},
                    [labels](GradTape<double>& t, const std::vector<Var>& v) { return t.cross_entropy(v[0], labels); }};
    }, instances, 2 * probes, rng));

    lines.push_back(network_gradient_check("two_layer_network", make_mlp<double>(5, {7}, 3), {6, 5}, instances, rng));

    return lines;
}

/// Library kernels against the nested-loop oracles on randomized small shapes.
inline std::vector<SuiteLine> oracle_suite(std::uint64_t seed = 77, std::size_t cases = 120) {
    std::mt19937_64 rng(seed);
    SuiteLine mm{"matmul"}, conv{"conv2d"}, pool{"max_pool2d"};
    for (std::size_t i = 0; i < cases; ++i) {
        {
            const std::size_t m = random_size(rng, 1, 9), n = random_size(rng, 1, 9), q = random_size(rng, 1, 9);
            auto a = random_tensor<double>({m, n}, rng);
            auto b = random_tensor<double>({n, q}, rng);
            mm.worst = std::max(mm.worst, max_relative_error(kernels::matmul(a, b), oracle_matmul(a, b), 1e-9));
            ++mm.cases;
        }
        {
            const std::size_t n = random_size(rng, 1, 2), c = random_size(rng, 1, 3), f = random_size(rng, 1, 4);
            const std::size_t kh = random_size(rng, 1, 4), kw = random_size(rng, 1, 4);
            const std::size_t pad = random_size(rng, 0, 2), stride = random_size(rng, 1, 3);
            const std::size_t h = random_size(rng, kh > 2 * pad ? kh - 2 * pad : 1, 9);
            const std::size_t w = random_size(rng, kw > 2 * pad ? kw - 2 * pad : 1, 9);
            auto x = random_tensor<double>({n, c, h, w}, rng);
            auto k = random_tensor<double>({f, c, kh, kw}, rng);
            conv.worst = std::max(conv.worst, max_relative_error(kernels::conv2d(x, k, {stride, pad}),
                                                                 oracle_conv2d(x, k, stride, pad), 1e-9));
            ++conv.cases;
        }
        {
            const std::size_t window = random_size(rng, 1, 3), stride = random_size(rng, 1, 3);
            const std::size_t h = random_size(rng, window, 8), w = random_size(rng, window, 8);
            auto x = random_tensor<double>({random_size(rng, 1, 2), random_size(rng, 1, 3), h, w}, rng);
            pool.worst = std::max(pool.worst, max_relative_error(kernels::max_pool2d(x, {window, stride}).output,
                                                                 oracle_max_pool(x, window, stride)));
            ++pool.cases;
        }
    }
    return {mm, conv, pool};
}

struct EquivalenceResult {
    std::size_t cases = 0;
    std::size_t mismatches = 0;
    std::size_t extractor_changes = 0;
};

/// Random architectures, random replacement heads and random datasets: the
/// fast path (extract, then score with the head) must reproduce the swapped
/// network's evaluation bit for bit. Every case also checks that swapping and
/// apply_icing leave the extractor digest unchanged.
inline EquivalenceResult fast_path_suite(std::uint64_t seed = 31, std::size_t cases = 60) {
    std::mt19937_64 rng(seed);
    EquivalenceResult result;
    for (std::size_t i = 0; i < cases; ++i) {
        const std::size_t c = random_size(rng, 1, 3), hw = random_size(rng, 4, 10), classes = random_size(rng, 2, 7);
        const Shape sample{c, hw, hw};
        Network<float> net = [&] {
            switch (i % 3) {
                case 0: return make_mlp<float>(c * hw * hw, {random_size(rng, 2, 12)}, classes);
                case 1: return make_cnn<float>(sample, classes, random_size(rng, 1, 4), random_size(rng, 1, 4));
                default: return make_tiny_resnet<float>(sample, classes, {4 + 2 * random_size(rng, 0, 1), 2, 1 + i % 2, 2});
            }
        }();
        net = init_params(std::move(net), InitScheme::he, rng());
        // Some datasets span several evaluation batches.
        const std::size_t n = i % 5 == 0 ? random_size(rng, kEvalBatch, 2 * kEvalBatch + 7) : random_size(rng, 1, 60);
        const Dataset data = random_dataset(n, sample, classes, rng());
        const Head<float> head{random_tensor<float>({net.feature_width(), classes}, rng, -2, 2),
                               random_tensor<float>({classes}, rng, -1, 1)};

        const Digest before = extractor_digest(net);
        const Evaluation fast = evaluate_fast_path(net, head, data);
        const Network<float> swapped = swap_head(net, head);
        const Evaluation slow = evaluate(swapped, data);
        ++result.cases;
        if (fast.accuracy != slow.accuracy || fast.loss != slow.loss) ++result.mismatches;
        if (extractor_digest(swapped) != before) ++result.extractor_changes;

        IcingConfig icing;
        icing.epochs = 1;
        icing.seed = rng();
        const auto iced = apply_icing(net, data, icing);
        if (extractor_digest(iced.network) != before) ++result.extractor_changes;
    }
    return result;
}

}  // namespace ick::test
