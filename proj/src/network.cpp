#include "ick/network.hpp"

#include <cmath>
#include <random>
#include <type_traits>

namespace ick {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv: return "conv";
        case LayerKind::relu: return "relu";
        case LayerKind::max_pool: return "max_pool";
        case LayerKind::flatten: return "flatten";
        case LayerKind::residual_block: return "residual_block";
        case LayerKind::softmax_head: return "softmax_head";
    }
    return "unknown";
}

namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::size_t as_size(std::uint32_t v) { return static_cast<std::size_t>(v); }

}  // namespace

std::vector<std::uint32_t> hyperparameter_words(const LayerSpec& spec) {
    return std::visit(Overloaded{
                          [](const DenseSpec& s) { return std::vector<std::uint32_t>{s.inputs, s.outputs}; },
                          [](const ConvSpec& s) {
                              return std::vector<std::uint32_t>{s.in_channels, s.out_channels, s.kernel, s.stride,
                                                                s.padding};
                          },
                          [](const ReluSpec&) { return std::vector<std::uint32_t>{}; },
                          [](const MaxPoolSpec& s) { return std::vector<std::uint32_t>{s.window, s.stride}; },
                          [](const FlattenSpec&) { return std::vector<std::uint32_t>{}; },
                          [](const ResidualSpec& s) { return std::vector<std::uint32_t>{s.channels, s.kernel}; },
                          [](const SoftmaxHeadSpec& s) { return std::vector<std::uint32_t>{s.inputs, s.classes}; },
                      },
                      spec);
}

std::size_t hyperparameter_count(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return 2;
        case LayerKind::conv: return 5;
        case LayerKind::relu: return 0;
        case LayerKind::max_pool: return 2;
        case LayerKind::flatten: return 0;
        case LayerKind::residual_block: return 2;
        case LayerKind::softmax_head: return 2;
    }
    throw Error(ErrorKind::invalid_argument, "unknown layer kind " + std::to_string(static_cast<int>(kind)));
}

LayerSpec spec_from_words(LayerKind kind, std::span<const std::uint32_t> w) {
    if (w.size() != hyperparameter_count(kind)) {
        throw Error(ErrorKind::invalid_argument, std::string(to_string(kind)) + " expects " +
                                                     std::to_string(hyperparameter_count(kind)) + " hyperparameters");
    }
    switch (kind) {
        case LayerKind::dense: return DenseSpec{w[0], w[1]};
        case LayerKind::conv: return ConvSpec{w[0], w[1], w[2], w[3], w[4]};
        case LayerKind::relu: return ReluSpec{};
        case LayerKind::max_pool: return MaxPoolSpec{w[0], w[1]};
        case LayerKind::flatten: return FlattenSpec{};
        case LayerKind::residual_block: return ResidualSpec{w[0], w[1]};
        case LayerKind::softmax_head: return SoftmaxHeadSpec{w[0], w[1]};
    }
    throw Error(ErrorKind::invalid_argument, "unknown layer kind");
}

std::vector<Shape> parameter_shapes(const LayerSpec& spec) {
    return std::visit(Overloaded{
                          [](const DenseSpec& s) {
                              return std::vector<Shape>{{as_size(s.inputs), as_size(s.outputs)}, {as_size(s.outputs)}};
                          },
                          [](const ConvSpec& s) {
                              return std::vector<Shape>{{as_size(s.out_channels), as_size(s.in_channels),
                                                         as_size(s.kernel), as_size(s.kernel)}};
                          },
                          [](const ReluSpec&) { return std::vector<Shape>{}; },
                          [](const MaxPoolSpec&) { return std::vector<Shape>{}; },
                          [](const FlattenSpec&) { return std::vector<Shape>{}; },
                          [](const ResidualSpec& s) {
                              const Shape k{as_size(s.channels), as_size(s.channels), as_size(s.kernel),
                                            as_size(s.kernel)};
                              return std::vector<Shape>{k, k};
                          },
                          [](const SoftmaxHeadSpec& s) {
                              return std::vector<Shape>{{as_size(s.inputs), as_size(s.classes)}, {as_size(s.classes)}};
                          },
                      },
                      spec);
}

template <typename T>
Layer<T>::Layer(LayerSpec s) : spec(s) {
    for (Shape& shape : parameter_shapes(spec)) params.emplace_back(std::move(shape));
}

namespace {

template <typename T>
void check_parameter_shapes(const LayerSpec& spec, const std::vector<Tensor<T>>& params) {
    const auto shapes = parameter_shapes(spec);
    const auto kind = static_cast<LayerKind>(spec.index());
    if (shapes.size() != params.size()) {
        throw Error(ErrorKind::shape_mismatch, std::string(to_string(kind)) + " expects " +
                                                   std::to_string(shapes.size()) + " parameters, got " +
                                                   std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i] != params[i].shape()) {
            throw Error(ErrorKind::shape_mismatch, std::string(to_string(kind)) + " parameter " + std::to_string(i) +
                                                       " has shape " + shape_to_string(params[i].shape()) +
                                                       ", expected " + shape_to_string(shapes[i]));
        }
    }
}

}  // namespace

template <typename T>
Layer<T>::Layer(LayerSpec s, std::vector<Tensor<T>> p) : spec(s), params(std::move(p)) {
    check_parameter_shapes(spec, params);
}

template <typename T>
std::string Layer<T>::describe(std::size_t index) const {
    return "layer " + std::to_string(index) + " (" + std::string(to_string(kind())) + ")";
}

template <typename T>
Network<T>::Network(std::vector<Layer<T>> layers, std::size_t head_index)
    : layers_(std::move(layers)), head_index_(head_index) {
    if (layers_.empty()) throw Error(ErrorKind::invalid_argument, "network has no layers");
    if (head_index_ + 1 != layers_.size()) {
        throw Error(ErrorKind::invalid_argument, "head index " + std::to_string(head_index_) +
                                                     " must point at the last of " + std::to_string(layers_.size()) +
                                                     " layers");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const bool is_head = layers_[i].kind() == LayerKind::softmax_head;
        if (is_head != (i == head_index_)) {
            throw Error(ErrorKind::invalid_argument, "exactly the last layer must be a softmax_head, see " +
                                                         layers_[i].describe(i));
        }
        if (const auto* r = std::get_if<ResidualSpec>(&layers_[i].spec); r && r->kernel % 2 == 0) {
            throw Error(ErrorKind::invalid_argument, layers_[i].describe(i) + " needs an odd kernel");
        }
        check_parameter_shapes(layers_[i].spec, layers_[i].params);
    }
    if (num_classes() < 2) throw Error(ErrorKind::invalid_argument, "the head needs at least 2 classes");
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers_)
        for (const auto& p : layer.params) total += p.size();
    return total;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
    std::vector<Layer<U>> out;
    for (const auto& layer : layers_) {
        std::vector<Tensor<U>> params;
        for (const auto& p : layer.params) params.push_back(p.template cast<U>());
        out.emplace_back(layer.spec, std::move(params));
    }
    return Network<U>(std::move(out), head_index_);
}

template <typename T>
Network<T> init_params(Network<T> network, InitScheme scheme, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&](Tensor<T>& w, std::size_t fan_in, std::size_t fan_out) {
        if (scheme == InitScheme::he) {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            for (T& v : w.data()) v = static_cast<T>(dist(rng));
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (T& v : w.data()) v = static_cast<T>(dist(rng));
        }
    };
    for (auto& layer : network.layers()) {
        switch (layer.kind()) {
            case LayerKind::dense:
            case LayerKind::softmax_head: {
                Tensor<T>& w = layer.params[0];
                fill(w, w.dim(0), w.dim(1));
                layer.params[1].fill(T{0});
                break;
            }
            case LayerKind::conv:
            case LayerKind::residual_block:
                for (Tensor<T>& k : layer.params) {
                    const std::size_t taps = k.dim(2) * k.dim(3);
                    fill(k, k.dim(1) * taps, k.dim(0) * taps);
                }
                break;
            default:
                break;
        }
    }
    return network;
}

// ---- architectures ----

template <typename T>
Network<T> make_mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes) {
    std::vector<Layer<T>> layers;
    layers.emplace_back(FlattenSpec{});
    std::size_t width = inputs;
    for (std::size_t h : hidden) {
        layers.emplace_back(DenseSpec{static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(h)});
        layers.emplace_back(ReluSpec{});
        width = h;
    }
    layers.emplace_back(SoftmaxHeadSpec{static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(classes)});
    return Network<T>(std::move(layers));
}

template <typename T>
Network<T> make_cnn(const Shape& sample_shape, std::size_t classes, std::size_t channels1, std::size_t channels2) {
    if (sample_shape.size() != 3) throw Error(ErrorKind::shape_mismatch, "CNN input must be C x H x W");
    const auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
    std::vector<Layer<T>> layers;
    layers.emplace_back(ConvSpec{u32(sample_shape[0]), u32(channels1), 3, 1, 1});
    layers.emplace_back(ReluSpec{});
    layers.emplace_back(MaxPoolSpec{2, 2});
    layers.emplace_back(ConvSpec{u32(channels1), u32(channels2), 3, 1, 1});
    layers.emplace_back(ReluSpec{});
    layers.emplace_back(MaxPoolSpec{2, 2});
    layers.emplace_back(FlattenSpec{});
    const std::size_t h = sample_shape[1] / 2 / 2;
    const std::size_t w = sample_shape[2] / 2 / 2;
    layers.emplace_back(SoftmaxHeadSpec{u32(channels2 * h * w), u32(classes)});
    return Network<T>(std::move(layers));
}

template <typename T>
Network<T> make_tiny_resnet(const Shape& sample_shape, std::size_t classes, const TinyResNetOptions& options) {
    if (sample_shape.size() != 3) throw Error(ErrorKind::shape_mismatch, "TinyResNet input must be C x H x W");
    if (options.depth < 4 || options.depth % 2 != 0) {
        throw Error(ErrorKind::invalid_argument,
                    "TinyResNet depth must be even and at least 4, got " + std::to_string(options.depth));
    }
    const auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
    std::vector<Layer<T>> layers;
    layers.emplace_back(ConvSpec{u32(sample_shape[0]), u32(options.width), 3, u32(options.stem_stride), 1});
    layers.emplace_back(ReluSpec{});
    for (std::size_t b = 0; b < (options.depth - 2) / 2; ++b) layers.emplace_back(ResidualSpec{u32(options.width), 3});
    layers.emplace_back(MaxPoolSpec{u32(options.pool), u32(options.pool)});
    layers.emplace_back(FlattenSpec{});
    // conv output size with kernel 3, padding 1
    const std::size_t h = (sample_shape[1] - 1) / options.stem_stride + 1;
    const std::size_t w = (sample_shape[2] - 1) / options.stem_stride + 1;
    const std::size_t features = options.width * ((h - options.pool) / options.pool + 1) *
                                 ((w - options.pool) / options.pool + 1);
    layers.emplace_back(SoftmaxHeadSpec{u32(features), u32(classes)});
    return Network<T>(std::move(layers));
}

// ---- forward ----

namespace {

kernels::Conv2dParams conv_params(const ConvSpec& s) { return {s.stride, s.padding}; }
kernels::Conv2dParams residual_params(const ResidualSpec& s) { return {1, s.kernel / 2}; }

Shape flatten_shape(const Shape& in) { return {in[0], num_elements(in) / in[0]}; }

Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
    return std::visit(
        Overloaded{
            [&](const DenseSpec& s) -> Shape {
                if (in.size() != 2 || in[1] != s.inputs) {
                    throw Error(ErrorKind::shape_mismatch, "expects N x " + std::to_string(s.inputs) + ", got " +
                                                               shape_to_string(in));
                }
                return {in[0], s.outputs};
            },
            [&](const ConvSpec& s) -> Shape {
                return kernels::conv2d_output_shape(in, {s.out_channels, s.in_channels, s.kernel, s.kernel},
                                                    conv_params(s));
            },
            [&](const ReluSpec&) -> Shape { return in; },
            [&](const MaxPoolSpec& s) -> Shape { return kernels::max_pool2d_output_shape(in, {s.window, s.stride}); },
            [&](const FlattenSpec&) -> Shape { return flatten_shape(in); },
            [&](const ResidualSpec& s) -> Shape {
                const Shape k{s.channels, s.channels, s.kernel, s.kernel};
                const Shape mid = kernels::conv2d_output_shape(in, k, residual_params(s));
                const Shape out = kernels::conv2d_output_shape(mid, k, residual_params(s));
                if (out != in) {
                    throw Error(ErrorKind::shape_mismatch, "residual branch " + shape_to_string(out) +
                                                               " does not match skip " + shape_to_string(in));
                }
                return out;
            },
            [&](const SoftmaxHeadSpec& s) -> Shape {
                const Shape flat = flatten_shape(in);
                if (flat[1] != s.inputs) {
                    throw Error(ErrorKind::shape_mismatch, "expects " + std::to_string(s.inputs) +
                                                               " features, got " + shape_to_string(in));
                }
                return {in[0], s.classes};
            },
        },
        spec);
}

template <typename T>
Tensor<T> flatten_rows(const Tensor<T>& x) {
    return x.reshaped(flatten_shape(x.shape()));
}

template <typename T>
Tensor<T> apply_layer(const Layer<T>& layer, const Tensor<T>& x) {
    const auto& p = layer.params;
    return std::visit(Overloaded{
                          [&](const DenseSpec&) { return kernels::add_bias(kernels::matmul(x, p[0]), p[1]); },
                          [&](const ConvSpec& s) { return kernels::conv2d(x, p[0], conv_params(s)); },
                          [&](const ReluSpec&) { return kernels::relu(x); },
                          [&](const MaxPoolSpec& s) {
                              return std::move(kernels::max_pool2d(x, {s.window, s.stride}).output);
                          },
                          [&](const FlattenSpec&) { return flatten_rows(x); },
                          [&](const ResidualSpec& s) {
                              const auto cp = residual_params(s);
                              Tensor<T> branch = kernels::conv2d(kernels::relu(kernels::conv2d(x, p[0], cp)), p[1], cp);
                              return kernels::relu(kernels::add(branch, x));
                          },
                          [&](const SoftmaxHeadSpec&) { return head_probabilities(p[0], p[1], flatten_rows(x)); },
                      },
                      layer.spec);
}

template <typename T>
Var apply_layer_taped(GradTape<T>& tape, const Layer<T>& layer, Var x, std::vector<Var>& param_vars) {
    std::vector<Var> p;
    for (const auto& param : layer.params) {
        p.push_back(tape.leaf(param, true));
        param_vars.push_back(p.back());
    }
    return std::visit(Overloaded{
                          [&](const DenseSpec&) { return tape.add_bias(tape.matmul(x, p[0]), p[1]); },
                          [&](const ConvSpec& s) { return tape.conv2d(x, p[0], conv_params(s)); },
                          [&](const ReluSpec&) { return tape.relu(x); },
                          [&](const MaxPoolSpec& s) { return tape.max_pool2d(x, {s.window, s.stride}); },
                          [&](const FlattenSpec&) { return tape.flatten(x); },
                          [&](const ResidualSpec& s) {
                              const auto cp = residual_params(s);
                              Var branch = tape.conv2d(tape.relu(tape.conv2d(x, p[0], cp)), p[1], cp);
                              return tape.relu(tape.add(branch, x));
                          },
                          [&](const SoftmaxHeadSpec&) {
                              return tape.softmax(tape.add_bias(tape.matmul(tape.flatten(x), p[0]), p[1]));
                          },
                      },
                      layer.spec);
}

[[noreturn]] void rethrow_at(const Error& e, const std::string& where) {
    throw Error(e.kind(), where + ": " + e.what());
}

template <typename T>
Tensor<T> run_layers(const Network<T>& network, const Tensor<T>& batch, std::size_t stop,
                     std::type_identity_t<std::vector<Tensor<T>>>* trace) {
    // Validate every layer before computing so errors name the failing one.
    infer_shapes(network, batch.shape());
    Tensor<T> x = batch;
    for (std::size_t i = 0; i < stop; ++i) {
        if (trace) trace->push_back(x);
        x = apply_layer(network.layers()[i], x);
    }
    return x;
}

}  // namespace

template <typename T>
std::vector<Shape> infer_shapes(const Network<T>& network, const Shape& input_shape) {
    std::vector<Shape> shapes{input_shape};
    for (std::size_t i = 0; i < network.layers().size(); ++i) {
        try {
            shapes.push_back(layer_output_shape(network.layers()[i].spec, shapes.back()));
        } catch (const Error& e) {
            rethrow_at(e, network.layers()[i].describe(i));
        }
    }
    return shapes;
}

template <typename T>
Tensor<T> head_probabilities(const Tensor<T>& weight, const Tensor<T>& bias, const Tensor<T>& features) {
    return kernels::softmax(kernels::add_bias(kernels::matmul(features, weight), bias));
}

template <typename T>
Tensor<T> forward(const Network<T>& network, const Tensor<T>& batch) {
    return run_layers(network, batch, network.layers().size(), nullptr);
}

template <typename T>
std::vector<Tensor<T>> forward_trace(const Network<T>& network, const Tensor<T>& batch) {
    std::vector<Tensor<T>> trace;
    trace.push_back(run_layers(network, batch, network.layers().size(), &trace));
    return trace;
}

template <typename T>
Tensor<T> forward_extractor(const Network<T>& network, const Tensor<T>& batch) {
    return flatten_rows(run_layers(network, batch, network.head_index(), nullptr));
}

template <typename T>
Var forward_taped(GradTape<T>& tape, const Network<T>& network, Var input, std::vector<Var>& param_vars) {
    infer_shapes(network, tape.value(input).shape());
    Var x = input;
    for (const auto& layer : network.layers()) x = apply_layer_taped(tape, layer, x, param_vars);
    return x;
}

template <typename T>
std::vector<Tensor<T>*> trainable_parameters(Network<T>& network) {
    std::vector<Tensor<T>*> out;
    for (auto& layer : network.layers())
        for (auto& p : layer.params) out.push_back(&p);
    return out;
}

// ---- optimizers ----

template <typename T>
Optimizer<T>::Optimizer(OptimizerSettings settings, const std::vector<Tensor<T>*>& params) : settings_(settings) {
    if (!(settings_.learning_rate > 0)) throw Error(ErrorKind::invalid_argument, "learning rate must be positive");
    for (const Tensor<T>* p : params) {
        first_.push_back(Tensor<T>::zeros(p->shape()));
        if (settings_.kind == OptimizerKind::adam) second_.push_back(Tensor<T>::zeros(p->shape()));
    }
}

template <typename T>
void Optimizer<T>::step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads) {
    if (params.size() != first_.size() || grads.size() != params.size()) {
        throw Error(ErrorKind::shape_mismatch, "optimizer was built for " + std::to_string(first_.size()) +
                                                   " parameters");
    }
    ++steps_;
    const T lr = static_cast<T>(settings_.learning_rate);
    if (settings_.kind == OptimizerKind::adam) {
        const T b1 = static_cast<T>(settings_.beta1);
        const T b2 = static_cast<T>(settings_.beta2);
        const T eps = static_cast<T>(settings_.epsilon);
        const T c1 = static_cast<T>(1.0 - std::pow(settings_.beta1, static_cast<double>(steps_)));
        const T c2 = static_cast<T>(1.0 - std::pow(settings_.beta2, static_cast<double>(steps_)));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& w = *params[i];
            const Tensor<T>& g = *grads[i];
            Tensor<T>& m = first_[i];
            Tensor<T>& v = second_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = b1 * m[j] + (T{1} - b1) * g[j];
                v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
                const T m_hat = m[j] / c1;
                const T v_hat = v[j] / c2;
                w[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
            }
        }
    } else {
        const T mu = static_cast<T>(settings_.momentum);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& w = *params[i];
            const Tensor<T>& g = *grads[i];
            Tensor<T>& buf = first_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                buf[j] = mu * buf[j] + g[j];
                w[j] -= lr * buf[j];
            }
        }
    }
}

// ---- training ----

void TrainConfig::validate() const {
    if (batch_size == 0) throw Error(ErrorKind::invalid_argument, "batch_size must be at least 1");
    if (!(learning_rate > 0)) throw Error(ErrorKind::invalid_argument, "learning_rate must be positive");
}

template <typename T>
void EvaluationAccumulator::add(const Tensor<T>& probs, std::span<const Label> labels) {
    kernels::check_labels(probs, labels);
    const auto predicted = kernels::argmax_rows(probs);
    const std::size_t cols = probs.dim(1);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const double p = static_cast<double>(probs[r * cols + static_cast<std::size_t>(labels[r])]);
        loss_sum_ -= std::log(std::max(p, kernels::kProbabilityFloor));
        if (predicted[r] == labels[r]) ++correct_;
    }
    count_ += labels.size();
}

Evaluation EvaluationAccumulator::result() const {
    if (count_ == 0) throw Error(ErrorKind::empty_input, "nothing was evaluated");
    return {static_cast<double>(correct_) / static_cast<double>(count_), loss_sum_ / static_cast<double>(count_)};
}

namespace {

template <typename T>
void check_dataset_fits(const Network<T>& network, const Dataset& dataset) {
    validate(dataset);
    if (dataset.num_classes > network.num_classes()) {
        throw Error(ErrorKind::label_out_of_range, "dataset '" + dataset.name + "' has " +
                                                       std::to_string(dataset.num_classes) + " classes, head has " +
                                                       std::to_string(network.num_classes()));
    }
    Shape one = dataset.images.shape();
    one[0] = 1;
    infer_shapes(network, one);
}

}  // namespace

template <typename T>
TrainResult<T> train(Network<T> network, const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    check_dataset_fits(network, dataset);
    TrainResult<T> result{std::move(network), {}};
    if (config.epochs == 0) return result;

    std::mt19937_64 rng(config.seed);
    auto params = trainable_parameters(result.network);
    OptimizerSettings settings;
    settings.kind = config.optimizer;
    settings.learning_rate = config.learning_rate;
    Optimizer<T> optimizer(settings, params);
    AugmentPolicy policy = config.augment;
    policy.enabled = config.augmentation;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0;
        std::size_t correct = 0;
        for (const auto& idx : batch_indices(dataset.size(), config.batch_size, true, rng())) {
            Batch batch = gather(dataset, idx);
            Tensor<float> images = config.augmentation ? augment_batch(batch.images, policy, rng) : std::move(batch.images);

            GradTape<T> tape;
            std::vector<Var> param_vars;
            Var input = tape.leaf(to_scalar_type<T>(images), false);
            Var probs = forward_taped(tape, result.network, input, param_vars);
            Var loss = tape.cross_entropy(probs, batch.labels);
            tape.backward(loss);

            std::vector<const Tensor<T>*> grads;
            for (Var v : param_vars) grads.push_back(&tape.grad(v));
            optimizer.step(params, grads);

            loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(idx.size());
            const auto predicted = kernels::argmax_rows(tape.value(probs));
            for (std::size_t r = 0; r < predicted.size(); ++r) correct += predicted[r] == batch.labels[r];
        }
        const double n = static_cast<double>(dataset.size());
        result.log.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
    }
    return result;
}

template <typename T>
Evaluation evaluate(const Network<T>& network, const Dataset& dataset) {
    check_dataset_fits(network, dataset);
    EvaluationAccumulator acc;
    for (const auto& idx : batch_indices(dataset.size(), kEvalBatch, false, 0)) {
        Batch batch = gather(dataset, idx);
        acc.add(forward(network, to_scalar_type<T>(batch.images)), batch.labels);
    }
    return acc.result();
}

#define ICK_INSTANTIATE_NETWORK(T)                                                                            \
    template struct Layer<T>;                                                                                 \
    template class Network<T>;                                                                                \
    template Network<T> init_params(Network<T>, InitScheme, std::uint64_t);                                   \
    template Network<T> make_mlp(std::size_t, const std::vector<std::size_t>&, std::size_t);                  \
    template Network<T> make_cnn(const Shape&, std::size_t, std::size_t, std::size_t);                        \
    template Network<T> make_tiny_resnet(const Shape&, std::size_t, const TinyResNetOptions&);                \
    template std::vector<Shape> infer_shapes(const Network<T>&, const Shape&);                                \
    template Tensor<T> forward(const Network<T>&, const Tensor<T>&);                                          \
    template std::vector<Tensor<T>> forward_trace(const Network<T>&, const Tensor<T>&);                       \
    template Tensor<T> forward_extractor(const Network<T>&, const Tensor<T>&);                                \
    template Tensor<T> head_probabilities(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
    template Var forward_taped(GradTape<T>&, const Network<T>&, Var, std::vector<Var>&);                      \
    template std::vector<Tensor<T>*> trainable_parameters(Network<T>&);                                       \
    template class Optimizer<T>;                                                                              \
    template void EvaluationAccumulator::add(const Tensor<T>&, std::span<const Label>);                       \
    template TrainResult<T> train(Network<T>, const Dataset&, const TrainConfig&);                            \
    template Evaluation evaluate(const Network<T>&, const Dataset&);

ICK_INSTANTIATE_NETWORK(float)
ICK_INSTANTIATE_NETWORK(double)

#undef ICK_INSTANTIATE_NETWORK

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

}  // namespace ick
