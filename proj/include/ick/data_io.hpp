#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ick/kernels.hpp"
#include "ick/tensor.hpp"

namespace ick {

using Label = kernels::Label;

/// Images are N x C x H x W with values in [0, 1]; labels lie in
/// [0, num_classes).
struct Dataset {
    Tensor<float> images;
    std::vector<Label> labels;
    std::size_t num_classes = 0;
    std::string name;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
};

/// Throws unless the dataset satisfies its invariants.
void validate(const Dataset& dataset);

struct AugmentPolicy {
    std::size_t pad_crop = 4;
    bool horizontal_flip = true;
    bool enabled = true;
};

enum class CifarVariant { cifar10, cifar100 };

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kMnistClasses = 10;
inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;

Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
Dataset load_cifar(std::span<const std::filesystem::path> paths, CifarVariant variant);

// Writers produce files the loaders accept; pixels are quantized to bytes.
void write_mnist(const Dataset& dataset, const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
void write_cifar(const Dataset& dataset, const std::filesystem::path& path, CifarVariant variant);

/// Balanced subset with exactly n_per_class samples of every class, kept in
/// original order.
Dataset subset(const Dataset& dataset, std::size_t n_per_class, std::uint64_t seed);

/// Pad-with-zeros, random crop back to size, then random horizontal flip.
/// Identity when the policy is disabled.
Tensor<float> augment_batch(const Tensor<float>& batch, const AugmentPolicy& policy, std::mt19937_64& rng);

/// Number of augment_batch calls that actually augmented, on this thread.
std::uint64_t augment_invocations() noexcept;

struct Batch {
    Tensor<float> images;
    std::vector<Label> labels;
    std::vector<std::size_t> indices;
};

/// Partition of [0, n) into consecutive batches; the last may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed);
Batch gather(const Dataset& dataset, std::span<const std::size_t> indices);
std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed);

/// Locations of a dataset on disk. `kind` is mnist, cifar10 or cifar100 and
/// `root` the directory holding the standard file names.
struct DatasetSource {
    std::string kind;
    std::filesystem::path root;

    /// Parses "kind:path".
    static DatasetSource parse(const std::string& spec);
    Dataset load_train() const;
    Dataset load_test() const;
};

}  // namespace ick
