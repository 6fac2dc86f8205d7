#include "ick/icing.hpp"

#include <random>

#include "binary_io.hpp"

namespace ick {

void IcingConfig::validate() const {
    if (batch_size == 0) throw Error(ErrorKind::invalid_argument, "icing batch_size must be at least 1");
    if (!(learning_rate > 0)) throw Error(ErrorKind::invalid_argument, "icing learning_rate must be positive");
}

template <typename T>
Digest extractor_digest(const Network<T>& network) {
    Sha256 sha;
    sha.update_u32(static_cast<std::uint32_t>(sizeof(T)));
    sha.update_u32(static_cast<std::uint32_t>(network.head_index()));
    for (const auto& layer : network.extractor()) {
        sha.update_u32(static_cast<std::uint32_t>(layer.kind()));
        for (std::uint32_t w : hyperparameter_words(layer.spec)) sha.update_u32(w);
        for (const auto& p : layer.params) {
            sha.update_u32(static_cast<std::uint32_t>(p.rank()));
            for (std::size_t d : p.shape()) sha.update_u32(static_cast<std::uint32_t>(d));
            sha.update_values(p.data());
        }
    }
    return sha.finish();
}

template <typename T>
Head<T> head_of(const Network<T>& network) {
    return {network.head().params[0], network.head().params[1]};
}

template <typename T>
FeatureBank<T> extract_features(const Network<T>& network, const Dataset& dataset) {
    validate(dataset);
    FeatureBank<T> bank;
    bank.labels = dataset.labels;
    bank.num_classes = dataset.num_classes;
    bank.source_hash = extractor_digest(network);

    std::vector<T> rows;
    std::size_t width = 0;
    for (const auto& idx : batch_indices(dataset.size(), kEvalBatch, false, 0)) {
        const Tensor<T> features = forward_extractor(network, to_scalar_type<T>(gather_rows(dataset.images, idx)));
        width = features.dim(1);
        rows.insert(rows.end(), features.storage().begin(), features.storage().end());
    }
    bank.features = Tensor<T>({dataset.size(), width}, std::move(rows));
    return bank;
}

template <typename T>
void require_current(const FeatureBank<T>& bank, const Network<T>& network) {
    if (bank.source_hash != extractor_digest(network)) {
        throw Error(ErrorKind::stale_feature_bank,
                    "feature bank digest " + to_hex(bank.source_hash) + " does not match the network's extractor " +
                        to_hex(extractor_digest(network)));
    }
}

namespace {

template <typename T>
void check_head(const Head<T>& head, std::size_t width, std::size_t classes, const char* what) {
    if (head.weight.shape() != Shape{width, classes} || head.bias.shape() != Shape{classes}) {
        throw Error(ErrorKind::shape_mismatch, std::string(what) + ": head " + shape_to_string(head.weight.shape()) +
                                                   " + " + shape_to_string(head.bias.shape()) + ", expected [" +
                                                   std::to_string(width) + "x" + std::to_string(classes) + "]");
    }
}

}  // namespace

template <typename T>
HeadFit<T> retrain_head(const FeatureBank<T>& bank, std::size_t num_classes, const IcingConfig& config,
                        const std::optional<Head<T>>& warm_start) {
    config.validate();
    if (bank.size() == 0) throw Error(ErrorKind::empty_input, "feature bank is empty");
    if (bank.features.rank() != 2 || bank.features.dim(0) != bank.size()) {
        throw Error(ErrorKind::shape_mismatch, "feature bank holds " + shape_to_string(bank.features.shape()) +
                                                   " for " + std::to_string(bank.size()) + " labels");
    }
    for (Label y : bank.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw Error(ErrorKind::label_out_of_range,
                        "bank label " + std::to_string(y) + " for " + std::to_string(num_classes) + " classes");
        }
    }
    const std::size_t width = bank.width();

    HeadFit<T> fit;
    if (config.head_init == HeadInit::warm) {
        if (!warm_start) throw Error(ErrorKind::invalid_argument, "warm head init needs a starting head");
        check_head(*warm_start, width, num_classes, "warm start");
        fit.head = *warm_start;
    } else {
        std::vector<Layer<T>> layers;
        layers.emplace_back(SoftmaxHeadSpec{static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(num_classes)});
        const Network<T> fresh = init_params(Network<T>(std::move(layers)), config.init_scheme, config.seed);
        fit.head = head_of(fresh);
    }
    if (config.epochs == 0) return fit;

    OptimizerSettings settings;
    settings.kind = config.optimizer;
    settings.learning_rate = config.learning_rate;
    std::vector<Tensor<T>*> params{&fit.head.weight, &fit.head.bias};
    Optimizer<T> optimizer(settings, params);
    std::mt19937_64 rng(config.seed);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0;
        std::size_t correct = 0;
        for (const auto& idx : batch_indices(bank.size(), config.batch_size, true, rng())) {
            std::vector<Label> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(bank.labels[i]);

            GradTape<T> tape;
            Var x = tape.leaf(gather_rows(bank.features, idx), false);
            Var w = tape.leaf(fit.head.weight, true);
            Var b = tape.leaf(fit.head.bias, true);
            Var probs = tape.softmax(tape.add_bias(tape.matmul(x, w), b));
            Var loss = tape.cross_entropy(probs, labels);
            tape.backward(loss);
            optimizer.step(params, {&tape.grad(w), &tape.grad(b)});

            loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(idx.size());
            const auto predicted = kernels::argmax_rows(tape.value(probs));
            for (std::size_t r = 0; r < predicted.size(); ++r) correct += predicted[r] == labels[r];
        }
        const double n = static_cast<double>(bank.size());
        fit.log.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
    }
    return fit;
}

template <typename T>
Network<T> swap_head(Network<T> network, const Head<T>& head) {
    check_head(head, network.feature_width(), network.num_classes(), "swap_head");
    network.head().params[0] = head.weight;
    network.head().params[1] = head.bias;
    return network;
}

template <typename T>
Evaluation score_head(const Head<T>& head, const FeatureBank<T>& bank) {
    check_head(head, bank.width(), head.classes(), "score_head");
    EvaluationAccumulator acc;
    for (const auto& idx : batch_indices(bank.size(), kEvalBatch, false, 0)) {
        std::vector<Label> labels;
        labels.reserve(idx.size());
        for (std::size_t i : idx) labels.push_back(bank.labels[i]);
        acc.add(head_probabilities(head.weight, head.bias, gather_rows(bank.features, idx)), labels);
    }
    return acc.result();
}

template <typename T>
Evaluation evaluate_fast_path(const Network<T>& network, const Head<T>& head, const Dataset& dataset) {
    check_head(head, network.feature_width(), network.num_classes(), "evaluate_fast_path");
    if (dataset.num_classes > head.classes()) {
        throw Error(ErrorKind::label_out_of_range, "dataset '" + dataset.name + "' has " +
                                                       std::to_string(dataset.num_classes) + " classes, head has " +
                                                       std::to_string(head.classes()));
    }
    return score_head(head, extract_features(network, dataset));
}

template <typename T>
IcingResult<T> apply_icing(const Network<T>& network, const Dataset& train_set, const IcingConfig& config) {
    const Digest before = extractor_digest(network);
    IcingResult<T> result{network, extract_features(network, train_set), head_of(network), {}};
    std::optional<Head<T>> warm;
    if (config.head_init == HeadInit::warm) warm = result.original_head;
    HeadFit<T> fit = retrain_head(result.bank, network.num_classes(), config, warm);
    require_current(result.bank, network);
    result.network = swap_head(network, fit.head);
    result.log = std::move(fit.log);
    if (extractor_digest(result.network) != before) {
        throw Error(ErrorKind::consistency, "extractor parameters changed during head retraining");
    }
    return result;
}

std::vector<std::uint8_t> encode_feature_bank(const FeatureBank<float>& bank) {
    detail::ByteWriter out;
    out.magic("ICKF");
    out.u32(kFeatureBankVersion);
    out.u32(static_cast<std::uint32_t>(bank.size()));
    out.u32(static_cast<std::uint32_t>(bank.width()));
    out.u32(static_cast<std::uint32_t>(bank.num_classes));
    out.raw(bank.source_hash);
    for (float v : bank.features.data()) out.f32(v);
    for (Label y : bank.labels) out.u32(static_cast<std::uint32_t>(y));
    return std::move(out.bytes());
}

FeatureBank<float> decode_feature_bank(std::span<const std::uint8_t> bytes, const std::string& origin) {
    detail::ByteReader in(bytes, origin);
    in.expect_magic("ICKF");
    const std::uint32_t version = in.u32();
    if (version != kFeatureBankVersion) {
        throw Error(ErrorKind::version_mismatch, origin + " has feature bank version " + std::to_string(version));
    }
    const std::size_t n = in.u32();
    const std::size_t d = in.u32();
    FeatureBank<float> bank;
    bank.num_classes = in.u32();
    const auto digest = in.take(bank.source_hash.size());
    std::copy(digest.begin(), digest.end(), bank.source_hash.begin());
    if (n == 0 || d == 0) throw Error(ErrorKind::empty_input, origin + " holds an empty feature bank");
    const std::size_t header = 4 + 4 * 4 + bank.source_hash.size();
    if (bytes.size() < header + 4 * (n * d + n)) {
        throw Error(ErrorKind::truncated_file, origin + " is shorter than its " + std::to_string(n) + "x" +
                                                   std::to_string(d) + " header declares");
    }
    std::vector<float> features(n * d);
    for (float& v : features) v = in.f32();
    bank.features = Tensor<float>({n, d}, std::move(features));
    bank.labels.resize(n);
    for (Label& y : bank.labels) {
        const std::uint32_t raw = in.u32();
        if (raw >= bank.num_classes) {
            throw Error(ErrorKind::label_out_of_range, origin + " label " + std::to_string(raw));
        }
        y = static_cast<Label>(raw);
    }
    if (!in.at_end()) throw Error(ErrorKind::count_mismatch, origin + " has trailing bytes");
    return bank;
}

void save_feature_bank(const FeatureBank<float>& bank, const std::filesystem::path& path) {
    detail::write_all(path, encode_feature_bank(bank));
}

FeatureBank<float> load_feature_bank(const std::filesystem::path& path) {
    return decode_feature_bank(detail::read_all(path), path.string());
}

#define ICK_INSTANTIATE_ICING(T)                                                                                \
    template Digest extractor_digest(const Network<T>&);                                                        \
    template Head<T> head_of(const Network<T>&);                                                                \
    template FeatureBank<T> extract_features(const Network<T>&, const Dataset&);                                \
    template void require_current(const FeatureBank<T>&, const Network<T>&);                                    \
    template HeadFit<T> retrain_head(const FeatureBank<T>&, std::size_t, const IcingConfig&,                    \
                                     const std::optional<Head<T>>&);                                            \
    template Network<T> swap_head(Network<T>, const Head<T>&);                                                  \
    template Evaluation score_head(const Head<T>&, const FeatureBank<T>&);                                      \
    template Evaluation evaluate_fast_path(const Network<T>&, const Head<T>&, const Dataset&);                  \
    template IcingResult<T> apply_icing(const Network<T>&, const Dataset&, const IcingConfig&);

ICK_INSTANTIATE_ICING(float)
ICK_INSTANTIATE_ICING(double)

#undef ICK_INSTANTIATE_ICING

}  // namespace ick
