#include "ick/data_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

namespace ick {

namespace {

thread_local std::uint64_t augment_calls = 0;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void append_be32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) bytes.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint8_t quantize(float v) {
    const float scaled = std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f;
    return static_cast<std::uint8_t>(scaled);
}

std::size_t cifar_record_size(CifarVariant variant) {
    return variant == CifarVariant::cifar10 ? kCifarPixels + 1 : kCifarPixels + 2;
}

std::size_t cifar_classes(CifarVariant variant) { return variant == CifarVariant::cifar10 ? 10 : 100; }

}  // namespace

void validate(const Dataset& dataset) {
    if (dataset.labels.empty()) throw Error(ErrorKind::empty_input, "dataset '" + dataset.name + "' is empty");
    if (dataset.images.rank() != 4 || dataset.images.dim(0) != dataset.labels.size()) {
        throw Error(ErrorKind::shape_mismatch, "dataset '" + dataset.name + "' images " +
                                                   shape_to_string(dataset.images.shape()) + " for " +
                                                   std::to_string(dataset.labels.size()) + " labels");
    }
    for (Label y : dataset.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= dataset.num_classes) {
            throw Error(ErrorKind::label_out_of_range, "dataset '" + dataset.name + "' label " + std::to_string(y));
        }
    }
}

Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto image_bytes = read_file(images_path);
    const auto label_bytes = read_file(labels_path);

    if (image_bytes.size() < 16) throw Error(ErrorKind::truncated_file, images_path.string() + " has no IDX header");
    if (read_be32(image_bytes, 0) != kIdxImageMagic) {
        throw Error(ErrorKind::bad_magic, images_path.string() + " is not an IDX image file");
    }
    const std::size_t count = read_be32(image_bytes, 4);
    const std::size_t rows = read_be32(image_bytes, 8);
    const std::size_t cols = read_be32(image_bytes, 12);
    const std::size_t pixels = rows * cols;
    if (image_bytes.size() - 16 < count * pixels) {
        throw Error(ErrorKind::truncated_file, images_path.string() + " holds fewer than " + std::to_string(count) +
                                                   " images of " + std::to_string(rows) + "x" + std::to_string(cols));
    }

    if (label_bytes.size() < 8) throw Error(ErrorKind::truncated_file, labels_path.string() + " has no IDX header");
    if (read_be32(label_bytes, 0) != kIdxLabelMagic) {
        throw Error(ErrorKind::bad_magic, labels_path.string() + " is not an IDX label file");
    }
    const std::size_t label_count = read_be32(label_bytes, 4);
    if (label_bytes.size() - 8 < label_count) {
        throw Error(ErrorKind::truncated_file,
                    labels_path.string() + " holds fewer than " + std::to_string(label_count) + " labels");
    }
    if (label_count != count) {
        throw Error(ErrorKind::count_mismatch, labels_path.string() + " has " + std::to_string(label_count) +
                                                   " labels but " + images_path.string() + " has " +
                                                   std::to_string(count) + " images");
    }
    if (count == 0 || pixels == 0) throw Error(ErrorKind::empty_input, images_path.string() + " contains no images");

    Dataset ds;
    ds.name = "mnist";
    ds.num_classes = kMnistClasses;
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t y = label_bytes[8 + i];
        if (y >= kMnistClasses) {
            throw Error(ErrorKind::label_out_of_range, labels_path.string() + " record " + std::to_string(i) +
                                                           " has label " + std::to_string(y));
        }
        ds.labels[i] = y;
    }
    std::vector<float> data(count * pixels);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(image_bytes[16 + i]) / 255.0f;
    ds.images = Tensor<float>({count, 1, rows, cols}, std::move(data));
    return ds;
}

Dataset load_cifar(std::span<const std::filesystem::path> paths, CifarVariant variant) {
    const std::size_t record = cifar_record_size(variant);
    const std::size_t classes = cifar_classes(variant);
    const std::size_t label_bytes = record - kCifarPixels;

    Dataset ds;
    ds.name = variant == CifarVariant::cifar10 ? "cifar10" : "cifar100";
    ds.num_classes = classes;
    std::vector<float> data;
    for (const auto& path : paths) {
        const auto bytes = read_file(path);
        if (bytes.size() % record != 0) {
            throw Error(ErrorKind::record_size, path.string() + " length " + std::to_string(bytes.size()) +
                                                    " is not a multiple of " + std::to_string(record));
        }
        const std::size_t n = bytes.size() / record;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t base = r * record;
            // CIFAR-100 records carry the coarse label first; keep the fine one.
            const std::uint8_t y = bytes[base + label_bytes - 1];
            if (y >= classes) {
                throw Error(ErrorKind::label_out_of_range,
                            path.string() + " record " + std::to_string(r) + " has label " + std::to_string(y));
            }
            ds.labels.push_back(y);
            for (std::size_t p = 0; p < kCifarPixels; ++p) {
                data.push_back(static_cast<float>(bytes[base + label_bytes + p]) / 255.0f);
            }
        }
    }
    if (ds.labels.empty()) throw Error(ErrorKind::empty_input, "no CIFAR records loaded");
    ds.images = Tensor<float>({ds.labels.size(), 3, 32, 32}, std::move(data));
    return ds;
}

void write_mnist(const Dataset& dataset, const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    validate(dataset);
    const Shape& s = dataset.images.shape();
    if (s[1] != 1) throw Error(ErrorKind::shape_mismatch, "IDX images must have one channel");
    std::vector<std::uint8_t> images;
    append_be32(images, kIdxImageMagic);
    append_be32(images, static_cast<std::uint32_t>(s[0]));
    append_be32(images, static_cast<std::uint32_t>(s[2]));
    append_be32(images, static_cast<std::uint32_t>(s[3]));
    for (float v : dataset.images.data()) images.push_back(quantize(v));
    std::vector<std::uint8_t> labels;
    append_be32(labels, kIdxLabelMagic);
    append_be32(labels, static_cast<std::uint32_t>(dataset.size()));
    for (Label y : dataset.labels) labels.push_back(static_cast<std::uint8_t>(y));
    write_file(images_path, images);
    write_file(labels_path, labels);
}

void write_cifar(const Dataset& dataset, const std::filesystem::path& path, CifarVariant variant) {
    validate(dataset);
    if (dataset.sample_shape() != Shape{3, 32, 32}) {
        throw Error(ErrorKind::shape_mismatch, "CIFAR images must be 3x32x32");
    }
    std::vector<std::uint8_t> bytes;
    bytes.reserve(dataset.size() * cifar_record_size(variant));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto y = static_cast<std::uint8_t>(dataset.labels[i]);
        if (variant == CifarVariant::cifar100) bytes.push_back(static_cast<std::uint8_t>(y / 5));
        bytes.push_back(y);
        const float* px = dataset.images.data().data() + i * kCifarPixels;
        for (std::size_t p = 0; p < kCifarPixels; ++p) bytes.push_back(quantize(px[p]));
    }
    write_file(path, bytes);
}

Dataset subset(const Dataset& dataset, std::size_t n_per_class, std::uint64_t seed) {
    validate(dataset);
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(n_per_class * dataset.num_classes);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.size() < n_per_class) {
            throw Error(ErrorKind::insufficient_samples, "class " + std::to_string(c) + " has " +
                                                             std::to_string(members.size()) + " samples, need " +
                                                             std::to_string(n_per_class));
        }
        std::shuffle(members.begin(), members.end(), rng);
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_per_class));
    }
    std::sort(chosen.begin(), chosen.end());

    Batch picked = gather(dataset, chosen);
    Dataset out;
    out.images = std::move(picked.images);
    out.labels = std::move(picked.labels);
    out.num_classes = dataset.num_classes;
    out.name = dataset.name;
    return out;
}

Tensor<float> augment_batch(const Tensor<float>& batch, const AugmentPolicy& policy, std::mt19937_64& rng) {
    if (!policy.enabled || (policy.pad_crop == 0 && !policy.horizontal_flip)) return batch;
    ++augment_calls;

    const std::size_t N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    const std::size_t pad = policy.pad_crop;
    Tensor<float> out(batch.shape());
    std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t dy = pad ? offset(rng) : 0;
        const std::size_t dx = pad ? offset(rng) : 0;
        const bool flip = policy.horizontal_flip && coin(rng);
        for (std::size_t c = 0; c < C; ++c) {
            const float* src = batch.data().data() + (n * C + c) * H * W;
            float* dst = out.data().data() + (n * C + c) * H * W;
            for (std::size_t y = 0; y < H; ++y) {
                // padded row y + dy maps to source row y + dy - pad
                if (y + dy < pad || y + dy - pad >= H) continue;
                const std::size_t sy = y + dy - pad;
                for (std::size_t x = 0; x < W; ++x) {
                    if (x + dx < pad || x + dx - pad >= W) continue;
                    const std::size_t tx = flip ? W - 1 - x : x;
                    dst[y * W + tx] = src[sy * W + (x + dx - pad)];
                }
            }
        }
    }
    return out;
}

std::uint64_t augment_invocations() noexcept { return augment_calls; }

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed) {
    if (batch_size == 0) throw Error(ErrorKind::invalid_argument, "batch size must be at least 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

Batch gather(const Dataset& dataset, std::span<const std::size_t> indices) {
    Batch b;
    b.images = gather_rows(dataset.images, indices);
    b.labels.reserve(indices.size());
    for (std::size_t i : indices) b.labels.push_back(dataset.labels[i]);
    b.indices.assign(indices.begin(), indices.end());
    return b;
}

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed) {
    std::vector<Batch> out;
    for (const auto& idx : batch_indices(dataset.size(), batch_size, shuffle, seed)) out.push_back(gather(dataset, idx));
    return out;
}

DatasetSource DatasetSource::parse(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
        throw Error(ErrorKind::config, "dataset must look like kind:path, got '" + spec + "'");
    }
    DatasetSource src{spec.substr(0, colon), spec.substr(colon + 1)};
    if (src.kind != "mnist" && src.kind != "cifar10" && src.kind != "cifar100") {
        throw Error(ErrorKind::config, "unknown dataset kind '" + src.kind + "'");
    }
    return src;
}

Dataset DatasetSource::load_train() const {
    if (kind == "mnist") return load_mnist(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte");
    if (kind == "cifar10") {
        std::vector<std::filesystem::path> files;
        for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
        return load_cifar(files, CifarVariant::cifar10);
    }
    const std::filesystem::path file = root / "train.bin";
    return load_cifar(std::span(&file, 1), CifarVariant::cifar100);
}

Dataset DatasetSource::load_test() const {
    if (kind == "mnist") return load_mnist(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte");
    const std::filesystem::path file = root / (kind == "cifar10" ? "test_batch.bin" : "test.bin");
    return load_cifar(std::span(&file, 1), kind == "cifar10" ? CifarVariant::cifar10 : CifarVariant::cifar100);
}

}  // namespace ick
