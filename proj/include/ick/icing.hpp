#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ick/data_io.hpp"
#include "ick/digest.hpp"
#include "ick/network.hpp"

// Post-training head refit: extract penultimate features with the frozen
// extractor, retrain only the final affine + softmax classifier on them, then
// put the new classifier back (or score test features with it directly).
namespace ick {

/// The final classifier: probabilities = softmax(features * weight + bias).
template <typename T>
struct Head {
    Tensor<T> weight;  // d x K
    Tensor<T> bias;    // K

    std::size_t features() const { return weight.dim(0); }
    std::size_t classes() const { return weight.dim(1); }
    friend bool operator==(const Head&, const Head&) = default;
};

/// Penultimate activations of a dataset plus the digest of the extractor
/// that produced them.
template <typename T>
struct FeatureBank {
    Tensor<T> features;  // N x d
    std::vector<Label> labels;
    std::size_t num_classes = 0;
    Digest source_hash{};

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t width() const { return features.dim(1); }
    friend bool operator==(const FeatureBank&, const FeatureBank&) = default;
};

enum class HeadInit { fresh, warm };

struct IcingConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    HeadInit head_init = HeadInit::fresh;
    InitScheme init_scheme = InitScheme::xavier;
    std::uint64_t seed = 0;

    void validate() const;
};

/// SHA-256 over the kinds, hyperparameters, parameter shapes and parameter
/// bytes of layers [0, head_index).
template <typename T>
Digest extractor_digest(const Network<T>& network);

template <typename T>
Head<T> head_of(const Network<T>& network);

/// Features of every sample, one deterministic un-augmented pass through the
/// extractor.
template <typename T>
FeatureBank<T> extract_features(const Network<T>& network, const Dataset& dataset);

/// Throws stale_feature_bank unless `bank` came from this network's extractor.
template <typename T>
void require_current(const FeatureBank<T>& bank, const Network<T>& network);

template <typename T>
struct HeadFit {
    Head<T> head;
    std::vector<EpochStats> log;
};

/// Minibatch softmax regression on the bank. A warm start uses `warm_start`,
/// which is required when config.head_init is warm.
template <typename T>
HeadFit<T> retrain_head(const FeatureBank<T>& bank, std::size_t num_classes, const IcingConfig& config,
                        const std::optional<Head<T>>& warm_start = std::nullopt);

/// Copy of `network` with the head parameters replaced.
template <typename T>
Network<T> swap_head(Network<T> network, const Head<T>& head);

/// Accuracy and mean cross-entropy of `head` on the bank's samples.
template <typename T>
Evaluation score_head(const Head<T>& head, const FeatureBank<T>& bank);

/// Extract test features with the network's extractor and score them with
/// `head`. Matches evaluate(swap_head(network, head), dataset) exactly.
template <typename T>
Evaluation evaluate_fast_path(const Network<T>& network, const Head<T>& head, const Dataset& dataset);

template <typename T>
struct IcingResult {
    Network<T> network;
    FeatureBank<T> bank;
    Head<T> original_head;
    std::vector<EpochStats> log;
};

/// extract_features -> retrain_head -> swap_head. Warm starts from the
/// network's own head.
template <typename T>
IcingResult<T> apply_icing(const Network<T>& network, const Dataset& train_set, const IcingConfig& config);

// FeatureBank cache file: "ICKF", version, N, d, K, digest, f32 features,
// u32 labels. All integers little-endian.
inline constexpr std::uint32_t kFeatureBankVersion = 1;

std::vector<std::uint8_t> encode_feature_bank(const FeatureBank<float>& bank);
FeatureBank<float> decode_feature_bank(std::span<const std::uint8_t> bytes, const std::string& origin = "buffer");
void save_feature_bank(const FeatureBank<float>& bank, const std::filesystem::path& path);
FeatureBank<float> load_feature_bank(const std::filesystem::path& path);

}  // namespace ick
