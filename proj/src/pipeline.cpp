#include "interpret3c/pipeline.hpp"

#include "interpret3c/analysis.hpp"
#include "interpret3c/clustering.hpp"
#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"
#include "interpret3c/features.hpp"
#include "interpret3c/ingest.hpp"
#include "interpret3c/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace i3c::pipeline {

namespace {

namespace fs = std::filesystem;
using config::PipelineConfig;

void write_stamp(const PipelineConfig& c, const std::string& stage) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["config_hash"] = c.hash_hex();
    j["train_seed"] = c.train.seed;
    j["cluster_seed"] = c.cluster.seed;
    std::ofstream out(c.output_dir + "/" + stage + ".stamp.json");
    if (!out) throw IoError("cannot write stamp for stage " + stage);
    out << j.dump(2) << '\n';
}

void require_stamp(const PipelineConfig& c, const std::string& stage) {
    const std::string path = c.output_dir + "/" + stage + ".stamp.json";
    std::ifstream in(path);
    if (!in)
        throw StaleArtifact("missing artifacts from stage '" + stage + "'; run it first");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("config_hash"))
        throw StaleArtifact("unreadable stamp " + path);
    if (j["config_hash"].get<std::string>() != c.hash_hex())
        throw StaleArtifact("config hash mismatch against stage '" + stage +
                            "' artifacts; re-run earlier stages");
}

features::FeatureRegistry registry_for(const PipelineConfig& c) {
    features::FeatureRegistry reg = features::standard_registry();
    features::add_noise_features(reg, c.noise_features);
    return reg;
}

std::vector<std::string> feature_list_for(const PipelineConfig& c,
                                          const features::FeatureRegistry& reg) {
    if (c.features.empty()) return reg.names();
    for (const auto& name : c.features) reg.get(name); // UnknownFeature early
    return c.features;
}

void save_scaling(const std::string& path, const features::FeatureCube& cube,
                  const features::ScalingReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    csv::write_row(out, {"feature", "scale", "zero_variance"});
    for (size_t f = 0; f < cube.n_features(); ++f) {
        bool zero = std::find(report.zero_variance.begin(), report.zero_variance.end(),
                              cube.feature_names[f]) != report.zero_variance.end();
        csv::write_row(out, {cube.feature_names[f], format_double(report.scale[f]),
                             zero ? "1" : "0"});
    }
}

std::vector<double> load_scaling(const std::string& path,
                                 const std::vector<std::string>& feature_names) {
    std::vector<std::string> header;
    auto rows = csv::read_file(path, header);
    std::map<std::string, double> by_name;
    for (const auto& row : rows) {
        if (row.fields.size() != 3) throw MalformedRow(path + ": expected 3 columns");
        by_name[trim(row.fields[0])] = parse_double(row.fields[1], "scale");
    }
    std::vector<double> out;
    for (const auto& name : feature_names) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw AlignmentError(path + ": no scale for feature " + name);
        out.push_back(it->second);
    }
    return out;
}

} // namespace

void simulate(const config::PipelineConfig& c) {
    auto archetypes = synth::default_benchmark_archetypes(c.simulate.n_weeks);
    synth::SyntheticCourse course = synth::generate_synthetic_course(
        archetypes, c.simulate.n_students, c.simulate.n_weeks, c.simulate.seed);
    synth::save_course(course, c.output_dir);
    write_stamp(c, "simulate");
}

void extract(const config::PipelineConfig& c) {
    if (c.events_path.empty() || c.schedule_path.empty())
        throw ConfigError("paths.events and paths.schedule are required for extract");
    fs::create_directories(c.output_dir);
    auto schedule = ingest::CourseSchedule::load_file(c.schedule_path);
    auto log = ingest::parse_events_file(c.events_path, schedule);
    auto sessions = ingest::sessionize_all(log, c.session_timeout, c.threads);

    auto registry = registry_for(c);
    auto names = feature_list_for(c, registry);
    auto raw = features::compute_weekly_features(log, schedule, sessions, registry, names,
                                                 c.weeks_used, c.gap_cap, c.threads);
    auto [scaled, scaling] = features::unit_norm_scale(raw);
    scaled.save(c.output_dir + "/cube");
    save_scaling(c.output_dir + "/scaling.csv", scaled, scaling);
    write_stamp(c, "extract");
}

void train(const config::PipelineConfig& c) {
    if (c.labels_path.empty()) throw ConfigError("paths.labels is required for train");
    require_stamp(c, "extract");
    auto cube = features::FeatureCube::load(c.output_dir + "/cube");
    auto labels = ingest::parse_labels_file(c.labels_path);
    gating::TrainResult result = gating::train(cube, labels, c.train);
    result.model.save(c.output_dir + "/model.params");
    result.history.save(c.output_dir + "/history.csv");
    gating::MaskMatrix masks = gating::extract_masks(result.model, cube, c.threads);
    masks.save(c.output_dir + "/masks.csv");
    write_stamp(c, "train");
}

void cluster(const config::PipelineConfig& c) {
    require_stamp(c, "extract");
    require_stamp(c, "train");
    auto cube = features::FeatureCube::load(c.output_dir + "/cube");
    auto masks = gating::MaskMatrix::load(c.output_dir + "/masks.csv");

    std::vector<size_t> active;
    auto rates = masks.selection_rates();
    for (size_t f = 0; f < cube.n_features(); ++f) {
        if (c.cluster.average_over == config::AverageOver::All || rates[f] > 0)
            active.push_back(f);
    }
    if (active.empty())
        throw EmptyActiveSet("cluster: no feature was selected by any student");

    std::vector<clustering::DistanceMatrix> per_feature(active.size());
    for (size_t i = 0; i < active.size(); ++i)
        per_feature[i] = clustering::masked_feature_distance(cube, masks, active[i], c.threads);
    clustering::DistanceMatrix averaged = clustering::average_distance(per_feature);

    clustering::SimilarityMatrix similarity;
    if (c.cluster.kernel_input == config::KernelInput::Averaged) {
        similarity = clustering::gaussian_similarity(averaged, c.cluster.sigma);
    } else {
        // Per-feature kernels averaged; a degenerate all-zero D_f has the
        // all-ones kernel as its limit for any bandwidth.
        similarity.ids = averaged.ids;
        similarity.values.assign(averaged.values.size(), 0.0);
        similarity.bandwidth = 0.0;
        for (const auto& d : per_feature) {
            clustering::SimilarityMatrix s_f;
            try {
                s_f = clustering::gaussian_similarity(d, c.cluster.sigma);
            } catch (const DegenerateBandwidth&) {
                s_f.ids = d.ids;
                s_f.values.assign(d.values.size(), 1.0);
            }
            for (size_t i = 0; i < similarity.values.size(); ++i)
                similarity.values[i] += s_f.values[i];
        }
        const double inv = 1.0 / static_cast<double>(per_feature.size());
        for (auto& v : similarity.values) v *= inv;
        for (size_t i = 0; i < similarity.n(); ++i) similarity.at(i, i) = 1.0;
    }

    clustering::EigengapDiagnostics diag =
        clustering::eigengap_select(similarity, c.cluster.n_min, c.cluster.n_max);
    clustering::ClusterAssignment assignment =
        clustering::spectral_cluster(similarity, diag.chosen, c.cluster.seed);
    assignment.diagnostics = diag;

    clustering::save_square_csv(c.output_dir + "/distances.csv", averaged.ids, averaged.values);
    clustering::save_square_csv(c.output_dir + "/similarity.csv", similarity.ids, similarity.values);
    diag.save(c.output_dir + "/eigengap.csv");
    assignment.save(c.output_dir + "/assignments.csv");
    write_stamp(c, "cluster");
}

void report(const config::PipelineConfig& c) {
    require_stamp(c, "extract");
    require_stamp(c, "train");
    require_stamp(c, "cluster");
    auto cube = features::FeatureCube::load(c.output_dir + "/cube");
    auto masks = gating::MaskMatrix::load(c.output_dir + "/masks.csv");
    auto assignment = clustering::ClusterAssignment::load(c.output_dir + "/assignments.csv");

    if (c.report.raw_values) {
        auto scale = load_scaling(c.output_dir + "/scaling.csv", cube.feature_names);
        for (size_t s = 0; s < cube.n_students(); ++s)
            for (size_t f = 0; f < cube.n_features(); ++f)
                for (int w = 0; w < cube.weeks_used; ++w) cube.at(s, f, w) *= scale[f];
        cube.scaled = false;
    }

    std::optional<std::map<std::string, int>> labels;
    if (!c.labels_path.empty()) labels = ingest::parse_labels_file(c.labels_path);

    analysis::ClusterReport rep = analysis::build_report(
        cube, masks, assignment, labels ? &*labels : nullptr, c.report.collapse);
    analysis::export_report(rep, c.output_dir);
    write_stamp(c, "report");
}

void run_pipeline(const config::PipelineConfig& c) {
    struct Step {
        const char* name;
        void (*fn)(const config::PipelineConfig&);
    };
    for (const Step& step : {Step{"extract", extract}, Step{"train", train},
                             Step{"cluster", cluster}, Step{"report", report}}) {
        try {
            step.fn(c);
        } catch (const Error& e) {
            throw StageFailure(step.name, e.what());
        }
    }
}

void run_stage(const std::string& name, const config::PipelineConfig& c) {
    try {
        if (name == "simulate") simulate(c);
        else if (name == "extract") extract(c);
        else if (name == "train") train(c);
        else if (name == "cluster") cluster(c);
        else if (name == "report") report(c);
        else if (name == "pipeline") run_pipeline(c);
        else throw ConfigError("unknown stage '" + name + "'");
    } catch (const StageFailure&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw StageFailure(name, e.what());
    } catch (const std::exception& e) {
        throw StageFailure(name, e.what());
    }
}

} // namespace i3c::pipeline
