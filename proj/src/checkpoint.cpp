#include "ick/checkpoint.hpp"

#include "binary_io.hpp"

namespace ick {

std::vector<std::uint8_t> encode_checkpoint(const Network<float>& network) {
    detail::ByteWriter out;
    out.magic("ICK1");
    out.u32(kCheckpointVersion);
    out.u32(static_cast<std::uint32_t>(network.head_index()));
    out.u32(static_cast<std::uint32_t>(network.layers().size()));
    for (const auto& layer : network.layers()) {
        out.u8(static_cast<std::uint8_t>(layer.kind()));
        for (std::uint32_t w : hyperparameter_words(layer.spec)) out.u32(w);
        out.u32(static_cast<std::uint32_t>(layer.params.size()));
        for (const auto& p : layer.params) {
            out.u32(static_cast<std::uint32_t>(p.rank()));
            for (std::size_t d : p.shape()) out.u32(static_cast<std::uint32_t>(d));
            for (float v : p.data()) out.f32(v);
        }
    }
    return std::move(out.bytes());
}

Network<float> decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
    detail::ByteReader in(bytes, origin);
    in.expect_magic("ICK1");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::version_mismatch, origin + " has checkpoint version " + std::to_string(version) +
                                                     ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::size_t head_index = in.u32();
    const std::size_t layer_count = in.u32();

    std::vector<Layer<float>> layers;
    for (std::size_t l = 0; l < layer_count; ++l) {
        const std::uint8_t tag = in.u8();
        if (tag > static_cast<std::uint8_t>(LayerKind::softmax_head)) {
            throw Error(ErrorKind::invalid_argument,
                        origin + " layer " + std::to_string(l) + " has unknown kind tag " + std::to_string(tag));
        }
        const auto kind = static_cast<LayerKind>(tag);
        std::vector<std::uint32_t> words(hyperparameter_count(kind));
        for (auto& w : words) w = in.u32();
        const LayerSpec spec = spec_from_words(kind, words);

        const std::size_t param_count = in.u32();
        std::vector<Tensor<float>> params;
        for (std::size_t p = 0; p < param_count; ++p) {
            const std::size_t rank = in.u32();
            Shape shape(rank);
            for (auto& d : shape) d = in.u32();
            const std::size_t count = num_elements(shape);
            // check the payload exists before allocating for it
            const auto raw = in.take(count * 4);
            detail::ByteReader payload(raw, origin);
            std::vector<float> data(count);
            for (float& v : data) v = payload.f32();
            params.emplace_back(std::move(shape), std::move(data));
        }
        layers.emplace_back(spec, std::move(params));
    }
    if (!in.at_end()) throw Error(ErrorKind::count_mismatch, origin + " has trailing bytes after the last layer");
    return Network<float>(std::move(layers), head_index);
}

void save_checkpoint(const Network<float>& network, const std::filesystem::path& path) {
    detail::write_all(path, encode_checkpoint(network));
}

Network<float> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_all(path), path.string());
}

}  // namespace ick
