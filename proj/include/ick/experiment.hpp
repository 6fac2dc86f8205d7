#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ick/data_io.hpp"
#include "ick/icing.hpp"
#include "ick/network.hpp"

namespace ick {

/// Flat `key = value` text with `#` comments.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

struct ArchitectureSpec {
    std::string kind = "tinyresnet";  // tinyresnet | cnn | mlp
    TinyResNetOptions resnet{};
    std::size_t channels1 = 8;
    std::size_t channels2 = 16;
    std::vector<std::size_t> hidden{64};

    std::string label() const;
};

Network<float> build_network(const ArchitectureSpec& arch, const Shape& sample_shape, std::size_t classes);

struct ExperimentConfig {
    std::string name;     // configuration label; derived when empty
    std::string dataset;  // kind:path
    std::size_t subset_per_class = 0;       // 0 keeps the whole training split
    std::size_t test_subset_per_class = 0;  // 0 keeps the whole test split
    std::uint64_t subset_seed = 0;
    ArchitectureSpec arch{};
    TrainConfig train{};
    IcingConfig icing{};
    std::size_t trials = 10;
    std::uint64_t base_seed = 0;
    std::filesystem::path out_dir = "ick_out";
    /// Write wall-clock columns into trials.csv; when false they read NA so
    /// reruns produce identical bytes.
    bool csv_timing = true;

    /// Applies keys on top of the current values; unknown keys are errors.
    void apply(const std::map<std::string, std::string>& values);
    static ExperimentConfig from_file(const std::filesystem::path& path);
    void validate() const;
    std::string label() const;
};

struct TrialReport {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    double acc_before = 0;
    double acc_after = 0;
    double loss_before = 0;
    double loss_after = 0;
    double train_seconds = 0;
    double icing_seconds = 0;
    // Training cross-entropy on the feature bank; kept in memory only.
    double bank_loss_original = 0;
    double bank_loss_retrained = 0;
    bool extractor_unchanged = true;
};

struct SummaryRow {
    std::string configuration;
    std::size_t trials = 0;
    double mean_before = 0;
    double std_before = 0;
    double mean_after = 0;
    double std_after = 0;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
};

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
double sample_std(const std::vector<double>& values);
double mean(const std::vector<double>& values);

SummaryRow summarize(const std::string& configuration, const std::vector<TrialReport>& reports);

enum class ReportFormat { csv, markdown, both };
ReportFormat parse_report_format(const std::string& text);

std::string format_trials_csv(const std::vector<TrialReport>& reports, bool with_timing);
std::vector<TrialReport> parse_trials_csv(const std::string& text, const std::string& origin = "trials.csv");
std::string format_summary_markdown(const SummaryTable& table);
std::string format_summary_csv(const SummaryTable& table);

/// Writes trials.csv + summary.csv (csv) and/or summary.md (markdown) into
/// `out_dir`.
void emit_report(const SummaryTable& table, const std::vector<TrialReport>& reports, ReportFormat format,
                 const std::filesystem::path& out_dir, bool with_timing = true);

struct ExperimentResult {
    SummaryTable table;
    std::vector<TrialReport> reports;
};

/// Observer called after every completed trial.
using TrialCallback = std::function<void(const TrialReport&)>;

/// Seeded trials of train -> evaluate -> icing -> evaluate. Checkpoints and the
/// running trials.csv land in config.out_dir as each trial finishes.
ExperimentResult run_experiment(const ExperimentConfig& config, const TrialCallback& on_trial = {});
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& train_set, const Dataset& test_set,
                                const TrialCallback& on_trial = {});

/// Training and test splits named by the config, subset as configured.
std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& config);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::size_t trial, bool after);

}  // namespace ick
