#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "ick/data_io.hpp"
#include "oracles.hpp"

using namespace ick;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
            static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                     std::size_t pixel_bytes) {
    std::vector<std::uint8_t> out;
    for (auto v : {magic, n, rows, cols}) {
        auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    for (std::size_t i = 0; i < pixel_bytes; ++i) out.push_back(static_cast<std::uint8_t>(i * 37));
    return out;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, std::vector<std::uint8_t> labels) {
    auto out = be32(magic);
    auto n = be32(static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), n.begin(), n.end());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

ErrorKind mnist_error(const std::filesystem::path& dir) {
    try {
        load_mnist(dir / "img", dir / "lbl");
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::consistency;  // sentinel: no error
}

std::string mnist_message(const std::filesystem::path& dir) {
    try {
        load_mnist(dir / "img", dir / "lbl");
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

// Pixel values exactly representable by the byte formats.
Dataset quantized_dataset(std::size_t n, const Shape& sample, std::size_t classes, std::uint64_t seed) {
    Dataset ds = test::random_dataset(n, sample, classes, seed);
    std::mt19937_64 rng(seed);
    for (float& v : ds.images.data()) v = static_cast<float>(rng() % 256) / 255.0f;
    std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
    return ds;
}

std::vector<std::uint8_t> cifar_record(std::size_t label_bytes, std::uint8_t label) {
    std::vector<std::uint8_t> r(label_bytes, label);
    for (std::size_t i = 0; i < kCifarPixels; ++i) r.push_back(static_cast<std::uint8_t>(i));
    return r;
}

}  // namespace

TEST(Mnist, OfficialFilesWhenAvailable) {
    const auto dir = test::mnist_dir();
    if (dir.empty()) GTEST_SKIP() << "MNIST files not found; set ICK_MNIST_DIR";
    const Dataset train = DatasetSource::parse("mnist:" + dir.string()).load_train();
    EXPECT_EQ(train.size(), 60000u);
    EXPECT_EQ(train.labels[0], 5);
    EXPECT_EQ(train.sample_shape(), (Shape{1, 28, 28}));
    EXPECT_EQ(train.num_classes, 10u);
    const auto [lo, hi] = std::minmax_element(train.images.data().begin(), train.images.data().end());
    EXPECT_EQ(*lo, 0.0f);
    EXPECT_EQ(*hi, 1.0f);
    EXPECT_EQ(DatasetSource::parse("mnist:" + dir.string()).load_test().size(), 10000u);
}

TEST(Mnist, SyntheticFilesLoad) {
    const auto dir = test::scratch_dir("mnist_ok");
    test::write_bytes(dir / "img", idx_images(kIdxImageMagic, 3, 2, 2, 12));
    test::write_bytes(dir / "lbl", idx_labels(kIdxLabelMagic, {9, 0, 4}));
    const Dataset ds = load_mnist(dir / "img", dir / "lbl");
    EXPECT_EQ(ds.images.shape(), (Shape{3, 1, 2, 2}));
    EXPECT_EQ(ds.labels, (std::vector<Label>{9, 0, 4}));
    EXPECT_EQ(ds.images[1], 37.0f / 255.0f);
}

TEST(Mnist, MalformedFilesAreRejected) {
    const auto dir = test::scratch_dir("mnist_bad");
    const auto good_labels = idx_labels(kIdxLabelMagic, {1, 2, 3});

    test::write_bytes(dir / "img", idx_images(0x00000801, 3, 2, 2, 12));
    test::write_bytes(dir / "lbl", good_labels);
    EXPECT_EQ(mnist_error(dir), ErrorKind::bad_magic);
    EXPECT_NE(mnist_message(dir).find("img"), std::string::npos);

    test::write_bytes(dir / "img", idx_images(kIdxImageMagic, 3, 2, 2, 12));
    test::write_bytes(dir / "lbl", idx_labels(kIdxImageMagic, {1, 2, 3}));
    EXPECT_EQ(mnist_error(dir), ErrorKind::bad_magic);
    EXPECT_NE(mnist_message(dir).find("lbl"), std::string::npos);

    test::write_bytes(dir / "img", idx_images(kIdxImageMagic, 3, 2, 2, 11));
    test::write_bytes(dir / "lbl", good_labels);
    EXPECT_EQ(mnist_error(dir), ErrorKind::truncated_file);
    EXPECT_NE(mnist_message(dir).find("img"), std::string::npos);

    test::write_bytes(dir / "img", std::vector<std::uint8_t>{0, 0, 8});
    EXPECT_EQ(mnist_error(dir), ErrorKind::truncated_file);

    test::write_bytes(dir / "img", idx_images(kIdxImageMagic, 3, 2, 2, 12));
    auto short_labels = good_labels;
    short_labels.pop_back();
    test::write_bytes(dir / "lbl", short_labels);
    EXPECT_EQ(mnist_error(dir), ErrorKind::truncated_file);

    test::write_bytes(dir / "lbl", idx_labels(kIdxLabelMagic, {1, 2}));
    EXPECT_EQ(mnist_error(dir), ErrorKind::count_mismatch);

    test::write_bytes(dir / "lbl", idx_labels(kIdxLabelMagic, {1, 10, 2}));
    EXPECT_EQ(mnist_error(dir), ErrorKind::label_out_of_range);

    std::filesystem::remove(dir / "lbl");
    EXPECT_EQ(mnist_error(dir), ErrorKind::io);
}

TEST(Mnist, RoundTripIsBitwise) {
    const auto dir = test::scratch_dir("mnist_rt");
    const Dataset ds = quantized_dataset(25, {1, 28, 28}, 10, 3);
    write_mnist(ds, dir / "img", dir / "lbl");
    const Dataset back = load_mnist(dir / "img", dir / "lbl");
    EXPECT_EQ(back.images, ds.images);
    EXPECT_EQ(back.labels, ds.labels);
}

TEST(Cifar, TwoRecordsLoad) {
    const auto dir = test::scratch_dir("cifar_ok");
    auto bytes = cifar_record(1, 3);
    auto second = cifar_record(1, 9);
    bytes.insert(bytes.end(), second.begin(), second.end());
    test::write_bytes(dir / "b.bin", bytes);
    const std::filesystem::path f = dir / "b.bin";
    const Dataset ds = load_cifar(std::span(&f, 1), CifarVariant::cifar10);
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.num_classes, 10u);
    EXPECT_EQ(ds.labels, (std::vector<Label>{3, 9}));
    EXPECT_EQ(ds.images.shape(), (Shape{2, 3, 32, 32}));
    // channel-planar: the second plane starts at byte 1024
    EXPECT_EQ(ds.images.at({0, 1, 0, 0}), static_cast<float>(1024 % 256) / 255.0f);
    EXPECT_EQ(ds.images.at({0, 0, 0, 5}), 5.0f / 255.0f);
}

TEST(Cifar, HundredUsesFineLabel) {
    const auto dir = test::scratch_dir("cifar100");
    auto rec = cifar_record(2, 0);
    rec[0] = 7;   // coarse
    rec[1] = 42;  // fine
    test::write_bytes(dir / "train.bin", rec);
    const std::filesystem::path f = dir / "train.bin";
    const Dataset ds = load_cifar(std::span(&f, 1), CifarVariant::cifar100);
    EXPECT_EQ(ds.labels, (std::vector<Label>{42}));
    EXPECT_EQ(ds.num_classes, 100u);
}

TEST(Cifar, MalformedFilesAreRejected) {
    const auto dir = test::scratch_dir("cifar_bad");
    const std::filesystem::path f = dir / "b.bin";
    auto bytes = cifar_record(1, 1);
    bytes.push_back(0);
    test::write_bytes(f, bytes);
    try {
        load_cifar(std::span(&f, 1), CifarVariant::cifar10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::record_size);
        EXPECT_NE(std::string(e.what()).find("b.bin"), std::string::npos);
    }
    test::write_bytes(f, cifar_record(1, 10));
    try {
        load_cifar(std::span(&f, 1), CifarVariant::cifar10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::label_out_of_range);
    }
    test::write_bytes(f, cifar_record(1, 1));  // 3073 bytes is not a CIFAR-100 record
    try {
        load_cifar(std::span(&f, 1), CifarVariant::cifar100);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::record_size);
    }
}

TEST(Cifar, RoundTripIsBitwise) {
    const auto dir = test::scratch_dir("cifar_rt");
    for (auto variant : {CifarVariant::cifar10, CifarVariant::cifar100}) {
        const std::size_t classes = variant == CifarVariant::cifar10 ? 10 : 100;
        const Dataset ds = quantized_dataset(12, {3, 32, 32}, classes, 4);
        write_cifar(ds, dir / "x.bin", variant);
        const std::filesystem::path f = dir / "x.bin";
        const Dataset back = load_cifar(std::span(&f, 1), variant);
        EXPECT_EQ(back.images, ds.images);
        EXPECT_EQ(back.labels, ds.labels);
    }
}

TEST(Loaders, FuzzedValidFilesKeepLabelsInRange) {
    const auto dir = test::scratch_dir("fuzz");
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = test::random_size(rng, 1, 6);
        std::vector<std::uint8_t> labels(n);
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 10);
        const std::uint32_t rows = static_cast<std::uint32_t>(test::random_size(rng, 1, 5));
        test::write_bytes(dir / "img", idx_images(kIdxImageMagic, static_cast<std::uint32_t>(n), rows, 3, n * rows * 3));
        test::write_bytes(dir / "lbl", idx_labels(kIdxLabelMagic, labels));
        const Dataset ds = load_mnist(dir / "img", dir / "lbl");
        for (Label y : ds.labels) EXPECT_TRUE(y >= 0 && y < 10);

        std::vector<std::uint8_t> cifar;
        for (std::size_t i = 0; i < n; ++i) {
            auto r = cifar_record(2, static_cast<std::uint8_t>(rng() % 100));
            cifar.insert(cifar.end(), r.begin(), r.end());
        }
        test::write_bytes(dir / "c.bin", cifar);
        const std::filesystem::path f = dir / "c.bin";
        for (Label y : load_cifar(std::span(&f, 1), CifarVariant::cifar100).labels) EXPECT_TRUE(y >= 0 && y < 100);
    }
}

TEST(Subset, BalancedAndDeterministic) {
    const Dataset ds = test::random_dataset(300, {1, 2, 2}, 10, 6);
    const Dataset a = subset(ds, 10, 7);
    const Dataset b = subset(ds, 10, 7);
    EXPECT_EQ(a.size(), 100u);
    std::map<Label, int> counts;
    for (Label y : a.labels) ++counts[y];
    for (const auto& [label, count] : counts) EXPECT_EQ(count, 10) << label;
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_FALSE(subset(ds, 10, 8).images == a.images);
}

TEST(Subset, FullClassSizeKeepsEverySample) {
    const Dataset ds = test::random_dataset(40, {1, 1, 3}, 4, 9);
    const Dataset all = subset(ds, 10, 1);
    EXPECT_EQ(all.images, ds.images);  // original order is kept
    EXPECT_EQ(all.labels, ds.labels);
}

TEST(Subset, InsufficientSamplesNamesTheClass) {
    Dataset ds = test::random_dataset(20, {1, 1, 1}, 4, 10);
    ds.labels[3] = 0;  // class 3 now has 4 samples
    try {
        subset(ds, 5, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::insufficient_samples);
        EXPECT_NE(std::string(e.what()).find("class 3"), std::string::npos) << e.what();
    }
}

TEST(Augment, IdentityCases) {
    std::mt19937_64 rng(11);
    const auto batch = test::random_tensor<float>({4, 3, 8, 8}, rng, 0, 1);
    const auto before = augment_invocations();
    std::mt19937_64 probe = rng;
    EXPECT_EQ(augment_batch(batch, {4, true, false}, rng), batch);
    EXPECT_EQ(augment_batch(batch, {0, false, true}, rng), batch);
    EXPECT_EQ(augment_invocations(), before);
    EXPECT_EQ(probe(), rng());  // no draws consumed
}

TEST(Augment, MatchesPaddedCropFlipOracle) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t pad = test::random_size(rng, 0, 4), h = test::random_size(rng, 1, 7),
                          w = test::random_size(rng, 1, 7);
        const AugmentPolicy policy{pad, trial % 3 != 0, true};
        if (pad == 0 && !policy.horizontal_flip) continue;
        const auto batch = test::random_tensor<float>({3, 2, h, w}, rng, 0.01, 1);
        std::mt19937_64 mirror = rng;
        const auto out = augment_batch(batch, policy, rng);

        const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
        std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
        std::bernoulli_distribution coin(0.5);
        for (std::size_t n = 0; n < 3; ++n) {
            const std::size_t dy = pad ? offset(mirror) : 0, dx = pad ? offset(mirror) : 0;
            const bool flip = policy.horizontal_flip && coin(mirror);
            for (std::size_t c = 0; c < 2; ++c) {
                std::vector<float> padded(ph * pw, 0.0f);
                std::multiset<float> source;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        padded[(y + pad) * pw + x + pad] = batch.at({n, c, y, x});
                        source.insert(batch.at({n, c, y, x}));
                    }
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        const float v = padded[(y + dy) * pw + x + dx];
                        const std::size_t tx = flip ? w - 1 - x : x;
                        ASSERT_EQ(out.at({n, c, y, tx}), v);
                        if (v != 0.0f) {
                            auto it = source.find(v);
                            ASSERT_NE(it, source.end());
                            source.erase(it);
                        }
                    }
            }
        }
    }
}

TEST(Batches, SizesOrderAndCoverage) {
    const auto idx = batch_indices(10, 3, false, 0);
    std::vector<std::size_t> sizes;
    for (const auto& b : idx) sizes.push_back(b.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
    std::vector<std::size_t> flat;
    for (const auto& b : idx) flat.insert(flat.end(), b.begin(), b.end());
    EXPECT_EQ(flat, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));

    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = test::random_size(rng, 1, 200), bs = test::random_size(rng, 1, 64);
        const std::uint64_t seed = rng();
        const auto shuffled = batch_indices(n, bs, true, seed);
        std::vector<std::size_t> seen;
        for (const auto& b : shuffled) {
            EXPECT_LE(b.size(), bs);
            seen.insert(seen.end(), b.begin(), b.end());
        }
        std::sort(seen.begin(), seen.end());
        std::vector<std::size_t> expected(n);
        std::iota(expected.begin(), expected.end(), std::size_t{0});
        ASSERT_EQ(seen, expected);
        ASSERT_EQ(shuffled, batch_indices(n, bs, true, seed));
    }
    EXPECT_THROW(batch_indices(5, 0, false, 0), Error);
}

TEST(Batches, GatherMatchesIndices) {
    const Dataset ds = test::random_dataset(9, {1, 2, 2}, 3, 14);
    const auto all = batches(ds, 4, true, 15);
    ASSERT_EQ(all.size(), 3u);
    for (const auto& b : all)
        for (std::size_t i = 0; i < b.indices.size(); ++i) {
            EXPECT_EQ(b.labels[i], ds.labels[b.indices[i]]);
            for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(b.images[i * 4 + p], ds.images[b.indices[i] * 4 + p]);
        }
}

TEST(DatasetSourceSpec, ParsesKindAndPath) {
    const auto s = DatasetSource::parse("cifar10:/data/c10");
    EXPECT_EQ(s.kind, "cifar10");
    EXPECT_EQ(s.root, std::filesystem::path("/data/c10"));
    EXPECT_THROW(DatasetSource::parse("imagenet:/x"), Error);
    EXPECT_THROW(DatasetSource::parse("/no/kind"), Error);
}
