#include "interpret3c/config.hpp"

#include "interpret3c/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace i3c::config {

KeyValues parse_ini(std::istream& in) {
    KeyValues out;
    std::string line, section;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        if (key.empty() || section.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": key outside a section");
        out[section + "." + key] = trim(t.substr(eq + 1));
    }
    return out;
}

KeyValues parse_ini_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_ini(in);
}

namespace {

const std::set<std::string> kKnownKeys = {
    "paths.events", "paths.schedule", "paths.labels", "paths.output",
    "features.weeks_used", "features.names", "features.noise_features",
    "features.session_timeout", "features.gap_cap",
    "train.epochs", "train.batch_size", "train.learning_rate", "train.seed",
    "train.temperature_start", "train.temperature_end", "train.lambda_start",
    "train.lambda_end", "train.validation_fraction",
    "train.class_weighting",
    "train.soft_gates", "train.disc_hidden", "train.lstm_hidden", "train.weight_decay",
    "train.disc_weight_decay",
    "train.input_jitter", "train.lambda_warmup", "train.lambda_plateau", "train.freeze_experts",
    "train.gate_value_weight",
    "clustering.sigma", "clustering.n_min", "clustering.n_max", "clustering.seed",
    "clustering.average_over", "clustering.kernel_input",
    "report.collapse", "report.raw_values",
    "simulate.n_students", "simulate.n_weeks", "simulate.seed",
    "runtime.threads",
};

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

long to_long(const std::string& v, const std::string& key) {
    try {
        return parse_long(v, key);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        return parse_double(v, key);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

} // namespace

PipelineConfig build_config(const KeyValues& file_values,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
    KeyValues kv = file_values;
    for (const auto& [key, value] : overrides) kv[key] = value;
    for (const auto& [key, _] : kv)
        if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");

    auto get = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };

    PipelineConfig c;
    if (auto v = get("paths.events")) c.events_path = *v;
    if (auto v = get("paths.schedule")) c.schedule_path = *v;
    if (auto v = get("paths.labels")) c.labels_path = *v;
    if (auto v = get("paths.output")) c.output_dir = *v;

    if (auto v = get("features.weeks_used")) c.weeks_used = static_cast<int>(to_long(*v, "weeks_used"));
    if (auto v = get("features.names"); v && *v != "all")
        for (const auto& name : split(*v, ','))
            if (!trim(name).empty()) c.features.push_back(trim(name));
    if (auto v = get("features.noise_features"))
        c.noise_features = static_cast<int>(to_long(*v, "noise_features"));
    if (auto v = get("features.session_timeout")) c.session_timeout = to_double(*v, "session_timeout");
    if (auto v = get("features.gap_cap")) c.gap_cap = to_double(*v, "gap_cap");

    if (auto v = get("train.epochs")) c.train.epochs = static_cast<int>(to_long(*v, "epochs"));
    if (auto v = get("train.batch_size")) c.train.batch_size = static_cast<int>(to_long(*v, "batch_size"));
    if (auto v = get("train.learning_rate")) c.train.learning_rate = to_double(*v, "learning_rate");
    if (auto v = get("train.seed")) c.train.seed = static_cast<uint64_t>(to_long(*v, "train.seed"));
    else throw ConfigError("train.seed is required: every run must pin its training seed");
    if (auto v = get("train.temperature_start")) c.train.temperature_start = to_double(*v, "temperature_start");
    if (auto v = get("train.temperature_end")) c.train.temperature_end = to_double(*v, "temperature_end");
    if (auto v = get("train.lambda_start")) c.train.lambda_start = to_double(*v, "lambda_start");
    if (auto v = get("train.lambda_end")) c.train.lambda_end = to_double(*v, "lambda_end");
    if (auto v = get("train.lambda_warmup")) c.train.lambda_warmup = to_double(*v, "lambda_warmup");
    if (auto v = get("train.lambda_plateau")) c.train.lambda_plateau = to_double(*v, "lambda_plateau");
    if (auto v = get("train.freeze_experts")) c.train.freeze_experts = parse_bool(*v, "freeze_experts");
    if (auto v = get("train.validation_fraction"))
        c.train.validation_fraction = to_double(*v, "validation_fraction");
    if (auto v = get("train.class_weighting")) c.train.class_weighting = parse_bool(*v, "class_weighting");
    if (auto v = get("train.soft_gates")) c.train.soft_gates = parse_bool(*v, "soft_gates");
    if (auto v = get("train.disc_hidden")) c.train.disc_hidden = static_cast<int>(to_long(*v, "disc_hidden"));
    if (auto v = get("train.lstm_hidden")) c.train.lstm_hidden = static_cast<int>(to_long(*v, "lstm_hidden"));
    if (auto v = get("train.weight_decay")) c.train.weight_decay = to_double(*v, "weight_decay");
    if (auto v = get("train.disc_weight_decay")) c.train.disc_weight_decay = to_double(*v, "disc_weight_decay");
    if (auto v = get("train.input_jitter")) c.train.input_jitter = to_double(*v, "input_jitter");
    if (auto v = get("train.gate_value_weight")) c.train.gate_value_weight = to_double(*v, "gate_value_weight");

    if (auto v = get("clustering.sigma"); v && *v != "median") {
        double sigma = to_double(*v, "sigma");
        c.cluster.sigma = sigma;
    }
    if (auto v = get("clustering.n_min")) c.cluster.n_min = static_cast<int>(to_long(*v, "n_min"));
    if (auto v = get("clustering.n_max")) c.cluster.n_max = static_cast<int>(to_long(*v, "n_max"));
    if (auto v = get("clustering.seed")) c.cluster.seed = static_cast<uint64_t>(to_long(*v, "clustering.seed"));
    else throw ConfigError("clustering.seed is required: every run must pin its clustering seed");
    if (auto v = get("clustering.average_over")) {
        if (*v == "selected") c.cluster.average_over = AverageOver::Selected;
        else if (*v == "all") c.cluster.average_over = AverageOver::All;
        else throw ConfigError("clustering.average_over must be selected|all");
    }
    if (auto v = get("clustering.kernel_input")) {
        if (*v == "averaged") c.cluster.kernel_input = KernelInput::Averaged;
        else if (*v == "per_feature_then_average")
            c.cluster.kernel_input = KernelInput::PerFeatureThenAverage;
        else throw ConfigError("clustering.kernel_input must be averaged|per_feature_then_average");
    }

    if (auto v = get("report.collapse")) {
        try {
            c.report.collapse = analysis::collapse_from_string(*v);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto v = get("report.raw_values")) c.report.raw_values = parse_bool(*v, "raw_values");

    if (auto v = get("simulate.n_students")) c.simulate.n_students = static_cast<int>(to_long(*v, "n_students"));
    if (auto v = get("simulate.n_weeks")) c.simulate.n_weeks = static_cast<int>(to_long(*v, "n_weeks"));
    if (auto v = get("simulate.seed")) c.simulate.seed = static_cast<uint64_t>(to_long(*v, "simulate.seed"));

    if (auto v = get("runtime.threads")) c.threads = static_cast<int>(to_long(*v, "threads"));

    c.validate();
    return c;
}

PipelineConfig load_config(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
    return build_config(parse_ini_file(path), overrides);
}

void PipelineConfig::validate() const {
    if (output_dir.empty()) throw ConfigError("paths.output is required");
    if (weeks_used < 1) throw ConfigError("features.weeks_used must be >= 1");
    if (noise_features < 0) throw ConfigError("features.noise_features must be >= 0");
    if (session_timeout <= 0) throw ConfigError("features.session_timeout must be positive");
    if (gap_cap <= 0) throw ConfigError("features.gap_cap must be positive");
    if (cluster.n_min <= 2)
        throw ConfigError("clustering.n_min must be greater than two (n > 2): fewer clusters "
                          "would replicate the binary outcome split");
    if (cluster.n_min > cluster.n_max) throw ConfigError("clustering.n_min must be <= n_max");
    if (cluster.sigma && *cluster.sigma <= 0) throw ConfigError("clustering.sigma must be positive");
    if (threads < 1) throw ConfigError("runtime.threads must be >= 1");
    if (simulate.n_students < 10) throw ConfigError("simulate.n_students must be >= 10");
    if (simulate.n_weeks < 1) throw ConfigError("simulate.n_weeks must be >= 1");
    try {
        train.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

uint64_t PipelineConfig::hash() const {
    // Canonical dump of every semantic field; threads and the output location
    // do not change results and stay out of the fingerprint.
    std::ostringstream ss;
    ss << "events=" << events_path << '\n'
       << "schedule=" << schedule_path << '\n'
       << "labels=" << labels_path << '\n'
       << "weeks_used=" << weeks_used << '\n';
    ss << "features=";
    for (const auto& f : features) ss << f << ',';
    ss << '\n'
       << "noise_features=" << noise_features << '\n'
       << "session_timeout=" << format_double(session_timeout) << '\n'
       << "gap_cap=" << format_double(gap_cap) << '\n'
       << "train=" << train.epochs << ',' << train.batch_size << ','
       << format_double(train.learning_rate) << ',' << train.seed << ','
       << format_double(train.temperature_start) << ',' << format_double(train.temperature_end)
       << ',' << format_double(train.lambda_start) << ',' << format_double(train.lambda_end)
       << ',' << format_double(train.lambda_warmup) << ',' << format_double(train.lambda_plateau)
       << ',' << train.freeze_experts
       << ',' << format_double(train.validation_fraction) << ',' << train.class_weighting << ','
       << train.soft_gates << ',' << train.disc_hidden << ',' << train.lstm_hidden << ','
       << format_double(train.weight_decay) << ',' << format_double(train.disc_weight_decay) << ','
       << format_double(train.input_jitter) << ','
       << format_double(train.gate_value_weight) << '\n'
       << "cluster=" << (cluster.sigma ? format_double(*cluster.sigma) : "median") << ','
       << cluster.n_min << ',' << cluster.n_max << ',' << cluster.seed << ','
       << (cluster.average_over == AverageOver::Selected ? "selected" : "all") << ','
       << (cluster.kernel_input == KernelInput::Averaged ? "averaged" : "per_feature") << '\n'
       << "report=" << analysis::to_string(report.collapse) << ',' << report.raw_values << '\n'
       << "simulate=" << simulate.n_students << ',' << simulate.n_weeks << ',' << simulate.seed
       << '\n';
    return fnv1a64(ss.str());
}

std::string PipelineConfig::hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

std::string default_config_text() {
    return R"([paths]
# events/schedule/labels may point at the simulate outputs below
events = out/events.csv
schedule = out/schedule.txt
labels = out/labels.csv
output = out

[features]
weeks_used = 4
# "all" = every registered feature (nine behavioral + noise_features extras)
names = all
noise_features = 36
session_timeout = 1800
gap_cap = 3600

[train]
epochs = 50
batch_size = 32
learning_rate = 0.001
seed = 1
temperature_start = 1.0
temperature_end = 0.5
lambda_start = 0.0
lambda_end = 1.0
lambda_warmup = 0.5
lambda_plateau = 0.0
freeze_experts = true
validation_fraction = 0.2
class_weighting = false
soft_gates = false
disc_hidden = 64
lstm_hidden = 16
weight_decay = 0.001
disc_weight_decay = 0.0001
input_jitter = 0.3
gate_value_weight = 0.0

[clustering]
sigma = median
n_min = 3
n_max = 10
seed = 7
average_over = selected
kernel_input = averaged

[report]
collapse = mean
raw_values = false

[simulate]
n_students = 600
n_weeks = 10
seed = 42
)";
}

} // namespace i3c::config
