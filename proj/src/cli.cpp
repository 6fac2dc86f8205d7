#include "ick/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "binary_io.hpp"
#include "ick/checkpoint.hpp"
#include "ick/experiment.hpp"

namespace ick {

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string dataset;
    std::string format = "both";
    std::string checkpoint;
    std::string split = "test";
    std::string bank;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "key=value configuration file");
    cmd->add_option("--seed", flags.seed, "base seed");
    cmd->add_option("--out-dir", flags.out_dir, "output directory");
    cmd->add_option("--dataset", flags.dataset, "dataset as kind:path (mnist, cifar10, cifar100)");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig config;
    if (!flags.config.empty()) config.apply(read_key_values(flags.config));
    if (flags.seed) config.base_seed = *flags.seed;
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    if (!flags.dataset.empty()) config.dataset = flags.dataset;
    return config;
}

void require_dataset(const ExperimentConfig& config) {
    if (config.dataset.empty()) throw Error(ErrorKind::config, "no dataset given; use --dataset kind:path");
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

void print_eval(std::ostream& out, const std::string& prefix, const Evaluation& e) {
    out << prefix << "accuracy " << fmt(e.accuracy, 3) << "\n" << prefix << "loss " << fmt(e.loss, 6) << "\n";
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = detail::read_all(path);
    return std::string(bytes.begin(), bytes.end());
}

int run_train(const CommonFlags& flags, std::ostream& out) {
    ExperimentConfig config = resolve_config(flags);
    require_dataset(config);
    config.validate();
    auto [train_set, test_set] = load_experiment_data(config);
    Network<float> network = init_params(build_network(config.arch, train_set.sample_shape(), train_set.num_classes),
                                         config.train.init, config.base_seed);
    TrainConfig train_config = config.train;
    train_config.seed = config.base_seed;
    TrainResult<float> trained = train(std::move(network), train_set, train_config);
    for (const auto& e : trained.log) {
        out << "epoch " << e.epoch + 1 << " loss " << fmt(e.mean_loss, 6) << " train_accuracy " << fmt(e.accuracy, 4)
            << "\n";
    }
    print_eval(out, "test ", evaluate(trained.network, test_set));
    ensure_dir(config.out_dir);
    const auto path = config.out_dir / "model.ick";
    save_checkpoint(trained.network, path);
    out << "checkpoint " << path.string() << "\n";
    return 0;
}

int run_icing(const CommonFlags& flags, std::ostream& out) {
    ExperimentConfig config = resolve_config(flags);
    require_dataset(config);
    config.validate();
    auto [train_set, test_set] = load_experiment_data(config);
    const Network<float> network = load_checkpoint(flags.checkpoint);

    FeatureBank<float> bank;
    if (!flags.bank.empty() && std::filesystem::exists(flags.bank)) {
        bank = load_feature_bank(flags.bank);
        require_current(bank, network);
        out << "reusing feature bank " << flags.bank << "\n";
    } else {
        bank = extract_features(network, train_set);
    }
    IcingConfig icing = config.icing;
    icing.seed = config.base_seed;
    std::optional<Head<float>> warm;
    if (icing.head_init == HeadInit::warm) warm = head_of(network);
    const HeadFit<float> fit = retrain_head(bank, network.num_classes(), icing, warm);
    const Network<float> iced = swap_head(network, fit.head);

    print_eval(out, "before ", evaluate(network, test_set));
    print_eval(out, "after ", evaluate(iced, test_set));
    ensure_dir(config.out_dir);
    save_checkpoint(iced, config.out_dir / "icing.ick");
    save_feature_bank(bank, flags.bank.empty() ? config.out_dir / "features.ickf" : std::filesystem::path(flags.bank));
    out << "checkpoint " << (config.out_dir / "icing.ick").string() << "\n";
    return 0;
}

int run_evaluate(const CommonFlags& flags, std::ostream& out) {
    ExperimentConfig config = resolve_config(flags);
    require_dataset(config);
    const DatasetSource source = DatasetSource::parse(config.dataset);
    Dataset data = flags.split == "train" ? source.load_train() : source.load_test();
    const std::size_t per_class = flags.split == "train" ? config.subset_per_class : config.test_subset_per_class;
    if (per_class) data = subset(data, per_class, config.subset_seed);
    print_eval(out, "", evaluate(load_checkpoint(flags.checkpoint), data));
    return 0;
}

int run_experiment_cmd(const CommonFlags& flags, std::ostream& out) {
    ExperimentConfig config = resolve_config(flags);
    require_dataset(config);
    const ReportFormat format = parse_report_format(flags.format);
    const ExperimentResult result = run_experiment(config, [&](const TrialReport& r) {
        out << "trial " << r.trial << " seed " << r.seed << " before " << fmt(r.acc_before, 4) << " after "
            << fmt(r.acc_after, 4) << " train_s " << fmt(r.train_seconds, 2) << " icing_s "
            << fmt(r.icing_seconds, 2) << "\n";
    });
    emit_report(result.table, result.reports, format, config.out_dir, config.csv_timing);
    out << format_summary_markdown(result.table);
    return 0;
}

int run_report(const CommonFlags& flags, std::ostream& out) {
    const ExperimentConfig config = resolve_config(flags);
    const std::filesystem::path dir = config.out_dir;
    const auto reports = parse_trials_csv(read_text(dir / "trials.csv"), (dir / "trials.csv").string());
    if (reports.empty()) throw Error(ErrorKind::empty_input, (dir / "trials.csv").string() + " has no trials");

    std::string label = config.label();
    if (flags.config.empty() && std::filesystem::exists(dir / "summary.csv")) {
        std::stringstream summary(read_text(dir / "summary.csv"));
        std::string line;
        std::getline(summary, line);
        if (std::getline(summary, line) && line.find(',') != std::string::npos) label = line.substr(0, line.find(','));
    }
    bool timed = true;
    for (const auto& r : reports) timed = timed && !std::isnan(r.train_seconds) && !std::isnan(r.icing_seconds);

    SummaryTable table;
    table.rows.push_back(summarize(label, reports));
    emit_report(table, reports, parse_report_format(flags.format), dir, timed);
    out << format_summary_markdown(table);
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Post-training final-classifier refit toolkit", "ick"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto* train_cmd = app.add_subcommand("train", "train a network and write <out-dir>/model.ick");
    add_common(train_cmd, flags);

    auto* icing_cmd = app.add_subcommand("icing", "retrain the final classifier of a checkpoint");
    add_common(icing_cmd, flags);
    icing_cmd->add_option("--checkpoint", flags.checkpoint, "trained checkpoint")->required();
    icing_cmd->add_option("--bank", flags.bank, "feature bank cache file (read if present, written otherwise)");

    auto* eval_cmd = app.add_subcommand("evaluate", "accuracy and loss of a checkpoint");
    add_common(eval_cmd, flags);
    eval_cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint to evaluate")->required();
    eval_cmd->add_option("--split", flags.split, "train or test")->check(CLI::IsMember({"train", "test"}));

    auto* exp_cmd = app.add_subcommand("experiment", "seeded before/after trials from a config file");
    add_common(exp_cmd, flags);
    exp_cmd->add_option("--format", flags.format, "csv, markdown or both")
        ->check(CLI::IsMember({"csv", "markdown", "both"}));

    auto* report_cmd = app.add_subcommand("report", "rebuild summary tables from <out-dir>/trials.csv");
    add_common(report_cmd, flags);
    report_cmd->add_option("--format", flags.format, "csv, markdown or both")
        ->check(CLI::IsMember({"csv", "markdown", "both"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*train_cmd) return run_train(flags, out);
        if (*icing_cmd) return run_icing(flags, out);
        if (*eval_cmd) return run_evaluate(flags, out);
        if (*exp_cmd) {
            if (flags.config.empty()) {
                err << "experiment needs --config\n\n" << app.help();
                return 1;
            }
            return run_experiment_cmd(flags, out);
        }
        if (*report_cmd) return run_report(flags, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << app.help();
    return 1;
}

}  // namespace ick
