#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ick/data_io.hpp"
#include "ick/tape.hpp"
#include "ick/tensor.hpp"

namespace ick {

enum class LayerKind : std::uint8_t {
    dense = 0,
    conv = 1,
    relu = 2,
    max_pool = 3,
    flatten = 4,
    residual_block = 5,
    softmax_head = 6,
};

std::string_view to_string(LayerKind kind);

struct DenseSpec {
    std::uint32_t inputs;
    std::uint32_t outputs;
};
struct ConvSpec {
    std::uint32_t in_channels;
    std::uint32_t out_channels;
    std::uint32_t kernel;
    std::uint32_t stride;
    std::uint32_t padding;
};
struct ReluSpec {};
struct MaxPoolSpec {
    std::uint32_t window;
    std::uint32_t stride;
};
struct FlattenSpec {};
/// conv -> relu -> conv, plus the skip connection, then relu. Kernels are
/// odd-sized with same-padding so the block preserves its input shape.
struct ResidualSpec {
    std::uint32_t channels;
    std::uint32_t kernel;
};
/// Affine map followed by softmax: the final classifier.
struct SoftmaxHeadSpec {
    std::uint32_t inputs;
    std::uint32_t classes;
};

// Alternative order matches LayerKind.
using LayerSpec =
    std::variant<DenseSpec, ConvSpec, ReluSpec, MaxPoolSpec, FlattenSpec, ResidualSpec, SoftmaxHeadSpec>;

/// Kind-specific hyperparameters as stored in checkpoints.
std::vector<std::uint32_t> hyperparameter_words(const LayerSpec& spec);
LayerSpec spec_from_words(LayerKind kind, std::span<const std::uint32_t> words);
std::size_t hyperparameter_count(LayerKind kind);
/// Parameter shapes implied by the hyperparameters.
std::vector<Shape> parameter_shapes(const LayerSpec& spec);

template <typename T>
struct Layer {
    LayerSpec spec;
    std::vector<Tensor<T>> params;

    /// Layer with zero-filled parameters of the implied shapes.
    explicit Layer(LayerSpec s);
    Layer(LayerSpec s, std::vector<Tensor<T>> p);

    LayerKind kind() const noexcept { return static_cast<LayerKind>(spec.index()); }
    std::string describe(std::size_t index) const;
};

/// Ordered layers split at head_index into extractor [0, head_index) and
/// head [head_index, end). The head is exactly one softmax_head layer.
template <typename T>
class Network {
public:
    Network(std::vector<Layer<T>> layers, std::size_t head_index);
    explicit Network(std::vector<Layer<T>> layers) : Network(layers, layers.empty() ? 0 : layers.size() - 1) {}

    const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
    std::vector<Layer<T>>& layers() noexcept { return layers_; }
    std::size_t head_index() const noexcept { return head_index_; }
    std::span<const Layer<T>> extractor() const { return std::span(layers_).first(head_index_); }
    const Layer<T>& head() const { return layers_[head_index_]; }
    Layer<T>& head() { return layers_[head_index_]; }
    std::size_t num_classes() const { return std::get<SoftmaxHeadSpec>(head().spec).classes; }
    std::size_t feature_width() const { return std::get<SoftmaxHeadSpec>(head().spec).inputs; }
    std::size_t parameter_count() const;

    template <typename U>
    Network<U> cast() const;

    friend bool operator==(const Network& a, const Network& b) {
        if (a.head_index_ != b.head_index_ || a.layers_.size() != b.layers_.size()) return false;
        for (std::size_t i = 0; i < a.layers_.size(); ++i) {
            if (hyperparameter_words(a.layers_[i].spec) != hyperparameter_words(b.layers_[i].spec) ||
                a.layers_[i].kind() != b.layers_[i].kind() || a.layers_[i].params != b.layers_[i].params)
                return false;
        }
        return true;
    }

private:
    std::vector<Layer<T>> layers_;
    std::size_t head_index_;
};

enum class InitScheme { he, xavier };

/// He: normal, std sqrt(2 / fan_in). Xavier: uniform +-sqrt(6 / (fan_in + fan_out)).
/// Biases are zero. Deterministic in the seed.
template <typename T>
Network<T> init_params(Network<T> network, InitScheme scheme, std::uint64_t seed);

// ---- architectures ----

template <typename T>
Network<T> make_mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes);

/// conv -> relu -> pool -> conv -> relu -> pool -> flatten -> head
template <typename T>
Network<T> make_cnn(const Shape& sample_shape, std::size_t classes, std::size_t channels1 = 8,
                    std::size_t channels2 = 16);

struct TinyResNetOptions {
    std::size_t depth = 8;
    std::size_t width = 8;
    std::size_t stem_stride = 2;
    std::size_t pool = 2;
};

/// Stem conv, (depth - 2) / 2 residual blocks, max-pool, flatten, head.
template <typename T>
Network<T> make_tiny_resnet(const Shape& sample_shape, std::size_t classes, const TinyResNetOptions& options);

// ---- forward passes ----

/// Output shape after each layer (entry 0 is the input shape). Errors name
/// the first layer that rejects its input.
template <typename T>
std::vector<Shape> infer_shapes(const Network<T>& network, const Shape& input_shape);

/// Class probabilities, N x classes.
template <typename T>
Tensor<T> forward(const Network<T>& network, const Tensor<T>& batch);

/// Every intermediate activation: entry i is the input to layer i, the last
/// entry is the output.
template <typename T>
std::vector<Tensor<T>> forward_trace(const Network<T>& network, const Tensor<T>& batch);

/// Extractor output flattened to N x d (the penultimate features).
template <typename T>
Tensor<T> forward_extractor(const Network<T>& network, const Tensor<T>& batch);

/// softmax(features * weight + bias); the single implementation of the head.
template <typename T>
Tensor<T> head_probabilities(const Tensor<T>& weight, const Tensor<T>& bias, const Tensor<T>& features);

/// Taped forward. Parameter leaves are appended to `param_vars` in layer
/// order, matching the order of `trainable_parameters`.
template <typename T>
Var forward_taped(GradTape<T>& tape, const Network<T>& network, Var input, std::vector<Var>& param_vars);

template <typename T>
std::vector<Tensor<T>*> trainable_parameters(Network<T>& network);

// ---- optimizers ----

enum class OptimizerKind { adam, sgd };

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double momentum = 0.0;
};

/// Per-parameter moment buffers mirroring parameter shapes.
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerSettings settings, const std::vector<Tensor<T>*>& params);

    void step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads);
    std::uint64_t steps() const noexcept { return steps_; }
    const std::vector<Tensor<T>>& first_moments() const noexcept { return first_; }
    const std::vector<Tensor<T>>& second_moments() const noexcept { return second_; }

private:
    OptimizerSettings settings_;
    std::uint64_t steps_ = 0;
    std::vector<Tensor<T>> first_;
    std::vector<Tensor<T>> second_;
};

// ---- training and evaluation ----

struct TrainConfig {
    std::size_t batch_size = 128;
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    bool augmentation = true;
    AugmentPolicy augment{};
    InitScheme init = InitScheme::he;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0;
    double accuracy = 0;
};

template <typename T>
struct TrainResult {
    Network<T> network;
    std::vector<EpochStats> log;
};

/// Minibatch training of every parameter. Shuffling and augmentation draw
/// from a generator seeded by config.seed.
template <typename T>
TrainResult<T> train(Network<T> network, const Dataset& dataset, const TrainConfig& config);

struct Evaluation {
    double accuracy = 0;
    double loss = 0;
};

/// Running accuracy and cross-entropy over batches of probabilities.
class EvaluationAccumulator {
public:
    template <typename T>
    void add(const Tensor<T>& probs, std::span<const Label> labels);
    Evaluation result() const;
    std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_ = 0;
    std::size_t correct_ = 0;
    double loss_sum_ = 0;
};

inline constexpr std::size_t kEvalBatch = 256;

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy. No
/// augmentation.
template <typename T>
Evaluation evaluate(const Network<T>& network, const Dataset& dataset);

template <typename T>
Tensor<T> to_scalar_type(const Tensor<float>& images) {
    if constexpr (std::is_same_v<T, float>) {
        return images;
    } else {
        return images.cast<T>();
    }
}

}  // namespace ick
