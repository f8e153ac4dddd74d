#pragma once

#include "interpret3c/analysis.hpp"
#include "interpret3c/gating_model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace i3c::config {

enum class AverageOver { Selected, All };
enum class KernelInput { Averaged, PerFeatureThenAverage };

struct ClusterConfig {
    std::optional<double> sigma; // nullopt = median heuristic
    int n_min = 3;
    int n_max = 10;
    uint64_t seed = 0;
    AverageOver average_over = AverageOver::Selected;
    KernelInput kernel_input = KernelInput::Averaged;
};

struct ReportConfig {
    analysis::Collapse collapse = analysis::Collapse::Mean;
    bool raw_values = false;
};

struct SimulateConfig {
    int n_students = 600;
    int n_weeks = 10;
    uint64_t seed = 42;
};

struct PipelineConfig {
    std::string events_path;
    std::string schedule_path;
    std::string labels_path; // may be empty: report omits pass rates
    std::string output_dir;

    int weeks_used = 4;
    std::vector<std::string> features; // empty = every registered feature
    int noise_features = 0;
    double session_timeout = 1800.0;
    double gap_cap = 3600.0;

    gating::TrainConfig train;
    ClusterConfig cluster;
    ReportConfig report;
    SimulateConfig simulate;

    int threads = 1; // runtime control, excluded from the config hash

    // Semantic fingerprint used to detect stale stage artifacts.
    uint64_t hash() const;
    std::string hash_hex() const;

    void validate() const; // ConfigError on any violation
};

// key = "section.key" (e.g. "clustering.n_min"). Unknown keys are errors.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_ini(std::istream& in);
KeyValues parse_ini_file(const std::string& path);

// Builds the typed config; `overrides` are applied on top of the file values.
PipelineConfig build_config(const KeyValues& file_values,
                            const std::vector<std::pair<std::string, std::string>>& overrides = {});

PipelineConfig load_config(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Default benchmark configuration text (synthetic plant, all defaults spelled
// out); written by `interpret3c init-config`.
std::string default_config_text();

} // namespace i3c::config
