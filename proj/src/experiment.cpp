#include "ick/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "ick/checkpoint.hpp"

namespace ick {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
    Int v{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorKind::config, key + ": expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

double parse_real(const std::string& key, const std::string& text) {
    double v{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorKind::config, key + ": expected a number, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw Error(ErrorKind::config, key + ": expected true or false, got '" + text + "'");
}

OptimizerKind parse_optimizer(const std::string& key, const std::string& text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "sgd") return OptimizerKind::sgd;
    throw Error(ErrorKind::config, key + ": expected adam or sgd, got '" + text + "'");
}

InitScheme parse_init(const std::string& key, const std::string& text) {
    if (text == "he") return InitScheme::he;
    if (text == "xavier") return InitScheme::xavier;
    throw Error(ErrorKind::config, key + ": expected he or xavier, got '" + text + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_int<std::size_t>(key, item));
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    detail::write_all(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
    std::map<std::string, std::string> out;
    std::stringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw Error(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
    const auto bytes = detail::read_all(path);
    return parse_key_values(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string ArchitectureSpec::label() const {
    if (kind == "tinyresnet") return "tinyresnet-" + std::to_string(resnet.depth);
    if (kind == "cnn") return "cnn-" + std::to_string(channels1) + "-" + std::to_string(channels2);
    std::string s = "mlp";
    for (std::size_t h : hidden) s += "-" + std::to_string(h);
    return s;
}

Network<float> build_network(const ArchitectureSpec& arch, const Shape& sample_shape, std::size_t classes) {
    if (arch.kind == "tinyresnet") return make_tiny_resnet<float>(sample_shape, classes, arch.resnet);
    if (arch.kind == "cnn") return make_cnn<float>(sample_shape, classes, arch.channels1, arch.channels2);
    if (arch.kind == "mlp") return make_mlp<float>(num_elements(sample_shape), arch.hidden, classes);
    throw Error(ErrorKind::config, "unknown architecture '" + arch.kind + "'");
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        if (key == "name") name = value;
        else if (key == "dataset") dataset = value;
        else if (key == "subset_per_class") subset_per_class = parse_int<std::size_t>(key, value);
        else if (key == "test_subset_per_class") test_subset_per_class = parse_int<std::size_t>(key, value);
        else if (key == "subset_seed") subset_seed = parse_int<std::uint64_t>(key, value);
        else if (key == "arch") arch.kind = value;
        else if (key == "depth") arch.resnet.depth = parse_int<std::size_t>(key, value);
        else if (key == "width") arch.resnet.width = parse_int<std::size_t>(key, value);
        else if (key == "stem_stride") arch.resnet.stem_stride = parse_int<std::size_t>(key, value);
        else if (key == "pool") arch.resnet.pool = parse_int<std::size_t>(key, value);
        else if (key == "channels1") arch.channels1 = parse_int<std::size_t>(key, value);
        else if (key == "channels2") arch.channels2 = parse_int<std::size_t>(key, value);
        else if (key == "hidden") arch.hidden = parse_size_list(key, value);
        else if (key == "train.batch_size") train.batch_size = parse_int<std::size_t>(key, value);
        else if (key == "train.optimizer") train.optimizer = parse_optimizer(key, value);
        else if (key == "train.learning_rate") train.learning_rate = parse_real(key, value);
        else if (key == "train.epochs") train.epochs = parse_int<std::size_t>(key, value);
        else if (key == "train.augmentation") train.augmentation = parse_bool(key, value);
        else if (key == "train.pad_crop") train.augment.pad_crop = parse_int<std::size_t>(key, value);
        else if (key == "train.flip") train.augment.horizontal_flip = parse_bool(key, value);
        else if (key == "train.init") train.init = parse_init(key, value);
        else if (key == "icing.optimizer") icing.optimizer = parse_optimizer(key, value);
        else if (key == "icing.learning_rate") icing.learning_rate = parse_real(key, value);
        else if (key == "icing.epochs") icing.epochs = parse_int<std::size_t>(key, value);
        else if (key == "icing.batch_size") icing.batch_size = parse_int<std::size_t>(key, value);
        else if (key == "icing.init") icing.init_scheme = parse_init(key, value);
        else if (key == "icing.head_init") {
            if (value == "fresh") icing.head_init = HeadInit::fresh;
            else if (value == "warm") icing.head_init = HeadInit::warm;
            else throw Error(ErrorKind::config, key + ": expected fresh or warm, got '" + value + "'");
        }
        else if (key == "trials") trials = parse_int<std::size_t>(key, value);
        else if (key == "seed") base_seed = parse_int<std::uint64_t>(key, value);
        else if (key == "out_dir") out_dir = value;
        else if (key == "csv_timing") csv_timing = parse_bool(key, value);
        else throw Error(ErrorKind::config, "unknown key '" + key + "'");
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    ExperimentConfig config;
    config.apply(read_key_values(path));
    return config;
}

void ExperimentConfig::validate() const {
    if (trials == 0) throw Error(ErrorKind::config, "trials must be at least 1");
    train.validate();
    icing.validate();
}

std::string ExperimentConfig::label() const {
    if (!name.empty()) return name;
    const auto colon = dataset.find(':');
    const std::string data = colon == std::string::npos ? dataset : dataset.substr(0, colon);
    return (data.empty() ? std::string("data") : data) + "/" + arch.label();
}

double mean(const std::vector<double>& values) {
    if (values.empty()) return 0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
    if (values.size() < 2) return 0;
    const double m = mean(values);
    double ss = 0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

SummaryRow summarize(const std::string& configuration, const std::vector<TrialReport>& reports) {
    if (reports.empty()) throw Error(ErrorKind::empty_input, "no trial reports to summarize");
    std::vector<double> before, after;
    for (const auto& r : reports) {
        before.push_back(r.acc_before);
        after.push_back(r.acc_after);
    }
    return {configuration, reports.size(), mean(before), sample_std(before), mean(after), sample_std(after)};
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "csv") return ReportFormat::csv;
    if (text == "markdown" || text == "md") return ReportFormat::markdown;
    if (text == "both") return ReportFormat::both;
    throw Error(ErrorKind::config, "unknown report format '" + text + "'");
}

std::string format_trials_csv(const std::vector<TrialReport>& reports, bool with_timing) {
    std::string out = "trial,seed,acc_before,acc_after,loss_before,loss_after,train_s,icing_s\n";
    for (const auto& r : reports) {
        out += std::to_string(r.trial) + "," + std::to_string(r.seed) + "," + shortest(r.acc_before) + "," +
               shortest(r.acc_after) + "," + shortest(r.loss_before) + "," + shortest(r.loss_after) + ",";
        out += with_timing ? shortest(r.train_seconds) + "," + shortest(r.icing_seconds) : std::string("NA,NA");
        out += "\n";
    }
    return out;
}

std::vector<TrialReport> parse_trials_csv(const std::string& text, const std::string& origin) {
    std::stringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "trial,seed,acc_before,acc_after,loss_before,loss_after,train_s,icing_s") {
        throw Error(ErrorKind::config, origin + ": missing or unexpected header");
    }
    std::vector<TrialReport> reports;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) {
            throw Error(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": expected 8 columns");
        }
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto time_cell = [&](const std::string& c) {
            return c == "NA" ? std::nan("") : parse_real(where, c);
        };
        TrialReport r;
        r.trial = parse_int<std::size_t>(where, cells[0]);
        r.seed = parse_int<std::uint64_t>(where, cells[1]);
        r.acc_before = parse_real(where, cells[2]);
        r.acc_after = parse_real(where, cells[3]);
        r.loss_before = parse_real(where, cells[4]);
        r.loss_after = parse_real(where, cells[5]);
        r.train_seconds = time_cell(cells[6]);
        r.icing_seconds = time_cell(cells[7]);
        reports.push_back(r);
    }
    return reports;
}

std::string format_summary_markdown(const SummaryTable& table) {
    std::string out = "| Configuration | Before | Icing on the Cake |\n|---|---|---|\n";
    for (const auto& row : table.rows) {
        out += "| " + row.configuration + " | " + fixed(row.mean_before, 3) + " (" + fixed(row.std_before, 4) +
               ") | " + fixed(row.mean_after, 3) + " (" + fixed(row.std_after, 4) + ") |\n";
    }
    return out;
}

std::string format_summary_csv(const SummaryTable& table) {
    std::string out = "configuration,trials,mean_before,std_before,mean_after,std_after\n";
    for (const auto& row : table.rows) {
        out += row.configuration + "," + std::to_string(row.trials) + "," + shortest(row.mean_before) + "," +
               shortest(row.std_before) + "," + shortest(row.mean_after) + "," + shortest(row.std_after) + "\n";
    }
    return out;
}

void emit_report(const SummaryTable& table, const std::vector<TrialReport>& reports, ReportFormat format,
                 const std::filesystem::path& out_dir, bool with_timing) {
    if (reports.empty()) throw Error(ErrorKind::empty_input, "no trial reports to emit");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + out_dir.string() + ": " + ec.message());
    if (format == ReportFormat::csv || format == ReportFormat::both) {
        write_text(out_dir / "trials.csv", format_trials_csv(reports, with_timing));
        write_text(out_dir / "summary.csv", format_summary_csv(table));
    }
    if (format == ReportFormat::markdown || format == ReportFormat::both) {
        write_text(out_dir / "summary.md", format_summary_markdown(table));
    }
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::size_t trial, bool after) {
    return out_dir / ("trial_" + std::to_string(trial) + (after ? "_after.ick" : "_before.ick"));
}

std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& config) {
    const DatasetSource source = DatasetSource::parse(config.dataset);
    Dataset train_set = source.load_train();
    Dataset test_set = source.load_test();
    if (config.subset_per_class) train_set = subset(train_set, config.subset_per_class, config.subset_seed);
    if (config.test_subset_per_class) test_set = subset(test_set, config.test_subset_per_class, config.subset_seed);
    return {std::move(train_set), std::move(test_set)};
}

ExperimentResult run_experiment(const ExperimentConfig& config, const TrialCallback& on_trial) {
    config.validate();
    const auto [train_set, test_set] = load_experiment_data(config);
    return run_experiment(config, train_set, test_set, on_trial);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& train_set, const Dataset& test_set,
                                const TrialCallback& on_trial) {
    config.validate();
    validate(train_set);
    validate(test_set);
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + config.out_dir.string() + ": " + ec.message());

    ExperimentResult result;
    for (std::size_t i = 0; i < config.trials; ++i) {
        TrialReport report;
        report.trial = i;
        report.seed = config.base_seed + i;
        try {
            Network<float> network =
                init_params(build_network(config.arch, train_set.sample_shape(), train_set.num_classes),
                            config.train.init, report.seed);

            TrainConfig train_config = config.train;
            train_config.seed = report.seed;
            auto start = std::chrono::steady_clock::now();
            Network<float> trained = train(std::move(network), train_set, train_config).network;
            report.train_seconds = seconds_since(start);

            const Evaluation before = evaluate(trained, test_set);
            report.acc_before = before.accuracy;
            report.loss_before = before.loss;
            save_checkpoint(trained, checkpoint_path(config.out_dir, i, false));

            IcingConfig icing_config = config.icing;
            icing_config.seed = report.seed;
            start = std::chrono::steady_clock::now();
            IcingResult<float> iced = apply_icing(trained, train_set, icing_config);
            report.icing_seconds = seconds_since(start);

            const Evaluation swapped = evaluate(iced.network, test_set);
            const Evaluation fast = evaluate_fast_path(trained, head_of(iced.network), test_set);
            if (swapped.accuracy != fast.accuracy || swapped.loss != fast.loss) {
                throw Error(ErrorKind::consistency, "fast-path evaluation disagrees with the head-swapped network");
            }
            report.acc_after = swapped.accuracy;
            report.loss_after = swapped.loss;
            report.extractor_unchanged = extractor_digest(iced.network) == extractor_digest(trained);
            report.bank_loss_original = score_head(iced.original_head, iced.bank).loss;
            report.bank_loss_retrained = score_head(head_of(iced.network), iced.bank).loss;
            save_checkpoint(iced.network, checkpoint_path(config.out_dir, i, true));
        } catch (const Error& e) {
            throw Error(e.kind(), "trial " + std::to_string(i) + " (seed " + std::to_string(report.seed) +
                                      "): " + e.what());
        } catch (const std::exception& e) {
            throw Error(ErrorKind::consistency, "trial " + std::to_string(i) + " (seed " +
                                                    std::to_string(report.seed) + "): " + e.what());
        }
        result.reports.push_back(report);
        write_text(config.out_dir / "trials.csv", format_trials_csv(result.reports, config.csv_timing));
        if (on_trial) on_trial(report);
    }
    result.table.rows.push_back(summarize(config.label(), result.reports));
    return result;
}

}  // namespace ick
