#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ick/checkpoint.hpp"

using namespace ick;

namespace {

std::vector<Network<float>> sample_networks() {
    std::vector<Network<float>> nets;
    nets.push_back(init_params(make_mlp<float>(12, {7, 5}, 3), InitScheme::he, 1));
    nets.push_back(init_params(make_cnn<float>({1, 8, 8}, 4, 2, 3), InitScheme::xavier, 2));
    nets.push_back(init_params(make_tiny_resnet<float>({3, 9, 9}, 5, {6, 4, 2, 2}), InitScheme::he, 3));
    std::vector<Layer<float>> bare;
    bare.emplace_back(SoftmaxHeadSpec{6, 2});
    nets.push_back(init_params(Network<float>(bare), InitScheme::he, 4));
    return nets;
}

ErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_checkpoint(bytes);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::consistency;  // sentinel: accepted
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const auto dir = test::scratch_dir("ckpt");
    for (const auto& net : sample_networks()) {
        save_checkpoint(net, dir / "a.ick");
        const auto loaded = load_checkpoint(dir / "a.ick");
        EXPECT_EQ(loaded, net);
        EXPECT_EQ(loaded.head_index(), net.head_index());
        save_checkpoint(loaded, dir / "b.ick");
        EXPECT_EQ(test::read_bytes(dir / "a.ick"), test::read_bytes(dir / "b.ick"));
    }
}

TEST(Checkpoint, EvaluateUnchangedByRoundTrip) {
    const auto dir = test::scratch_dir("ckpt_eval");
    const auto net = sample_networks()[1];
    const Dataset ds = test::random_dataset(50, {1, 8, 8}, 4, 5);
    save_checkpoint(net, dir / "m.ick");
    const auto a = evaluate(net, ds);
    const auto b = evaluate(load_checkpoint(dir / "m.ick"), ds);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.loss, b.loss);
}

TEST(Checkpoint, HeaderLayout) {
    const auto bytes = encode_checkpoint(sample_networks()[3]);
    ASSERT_GE(bytes.size(), 16u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ICK1");
    EXPECT_EQ(bytes[4], kCheckpointVersion);  // little-endian u32
    EXPECT_EQ(bytes[8], 0);                   // head_index
    EXPECT_EQ(bytes[12], 1);                  // layer count
    EXPECT_EQ(bytes[16], static_cast<std::uint8_t>(LayerKind::softmax_head));
    // 16 header + tag + 2 words + count + (rank + 2 dims + 12 floats) + (rank + dim + 2 floats)
    EXPECT_EQ(bytes.size(), 16u + 1 + 8 + 4 + (4 + 8 + 48) + (4 + 4 + 8));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
    const auto bytes = encode_checkpoint(sample_networks()[1]);

    auto magic = bytes;
    std::copy_n("XXXX", 4, magic.begin());
    EXPECT_EQ(decode_error(magic), ErrorKind::bad_magic);

    auto version = bytes;
    version[4] = 2;
    EXPECT_EQ(decode_error(version), ErrorKind::version_mismatch);

    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
        EXPECT_EQ(decode_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut))),
                  ErrorKind::truncated_file)
            << cut;

    auto trailing = bytes;
    trailing.push_back(7);
    EXPECT_EQ(decode_error(trailing), ErrorKind::count_mismatch);

    auto tag = bytes;
    tag[16] = 99;
    EXPECT_EQ(decode_error(tag), ErrorKind::invalid_argument);

    const auto dir = test::scratch_dir("ckpt_bad");
    test::write_bytes(dir / "bad.ick", magic);
    try {
        load_checkpoint(dir / "bad.ick");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("bad.ick"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_checkpoint(dir / "missing.ick"), Error);
}
