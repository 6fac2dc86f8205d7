#pragma once

// Small synthetic datasets and hand-built networks for tests.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ick/data_io.hpp"
#include "ick/network.hpp"

namespace ick::test {

/// Images with uniform random pixels and labels cycling through the classes.
inline Dataset random_dataset(std::size_t n, const Shape& sample_shape, std::size_t classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> pixel(0.0f, 1.0f);
    Shape shape{n};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Dataset ds{Tensor<float>(shape), std::vector<Label>(n), classes, "random"};
    for (float& v : ds.images.data()) v = pixel(rng);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<Label>(i % classes);
    return ds;
}

/// 1 x 1 x K images holding the one-hot code of the label.
inline Dataset one_hot_dataset(std::size_t n, std::size_t classes) {
    Dataset ds{Tensor<float>({n, 1, 1, classes}), std::vector<Label>(n), classes, "one-hot"};
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<Label>(i % classes);
        ds.images[i * classes + i % classes] = 1.0f;
    }
    return ds;
}

/// flatten -> head with weight `scale` * I: predicts the one-hot class.
inline Network<float> one_hot_reader(std::size_t classes, float scale) {
    std::vector<Layer<float>> layers;
    layers.emplace_back(FlattenSpec{});
    Tensor<float> w({classes, classes});
    for (std::size_t k = 0; k < classes; ++k) w.at({k, k}) = scale;
    const auto c = static_cast<std::uint32_t>(classes);
    layers.emplace_back(SoftmaxHeadSpec{c, c}, std::vector<Tensor<float>>{w, Tensor<float>({classes})});
    return Network<float>(std::move(layers));
}

/// Two Gaussian blobs in the plane, separated by a wide margin, as 1 x 1 x 2
/// images.
inline Dataset separable_2d(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.05f);
    Dataset ds{Tensor<float>({n, 1, 1, 2}), std::vector<Label>(n), 2, "blobs"};
    for (std::size_t i = 0; i < n; ++i) {
        const Label y = static_cast<Label>(i % 2);
        ds.labels[i] = y;
        ds.images[2 * i] = (y ? 0.75f : 0.25f) + noise(rng);
        ds.images[2 * i + 1] = (y ? 0.25f : 0.75f) + noise(rng);
    }
    return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("ick_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Raw bytes written verbatim, for malformed-file tests.
inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return {bytes.begin(), bytes.end()};
}

/// Directory with the four MNIST IDX files: $ICK_MNIST_DIR or /root/data/mnist.
/// Empty when the files are not present.
inline std::filesystem::path mnist_dir() {
    const char* env = std::getenv("ICK_MNIST_DIR");
    const std::filesystem::path dir = env && *env ? env : "/root/data/mnist";
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                          "t10k-labels-idx1-ubyte"})
        if (!std::filesystem::exists(dir / f)) return {};
    return dir;
}

}  // namespace ick::test
