#include "interpret3c/analysis.hpp"

#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace i3c::analysis {

using ordered_json = nlohmann::ordered_json;

Collapse collapse_from_string(const std::string& s) {
    if (s == "mean") return Collapse::Mean;
    if (s == "sum") return Collapse::Sum;
    if (s == "last") return Collapse::Last;
    throw ConfigError("collapse must be one of mean|sum|last, got '" + s + "'");
}

const char* to_string(Collapse c) {
    switch (c) {
    case Collapse::Mean: return "mean";
    case Collapse::Sum: return "sum";
    default: return "last";
    }
}

namespace {

void check_aligned(const std::vector<std::string>& a, const std::vector<std::string>& b,
                   const char* what) {
    if (a != b) throw AlignmentError(std::string("analysis: ") + what + " ids disagree");
}

double collapse_series(std::span<const double> series, Collapse mode) {
    switch (mode) {
    case Collapse::Sum: {
        double s = 0;
        for (double v : series) s += v;
        return s;
    }
    case Collapse::Last:
        return series.back();
    case Collapse::Mean:
    default: {
        double s = 0;
        for (double v : series) s += v;
        return s / static_cast<double>(series.size());
    }
    }
}

FeatureSummary five_point(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    FeatureSummary f;
    f.min = values.front();
    f.q25 = quantile_linear(values, 0.25);
    f.median = quantile_linear(values, 0.5);
    f.q75 = quantile_linear(values, 0.75);
    f.max = values.back();
    return f;
}

} // namespace

double quantile_linear(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InvalidSpec("quantile: empty sample");
    if (!(p >= 0 && p <= 1)) throw OutOfRange("quantile: p outside [0,1]");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<std::vector<double>> importance_by_cluster(const gating::MaskMatrix& masks,
                                                       const clustering::ClusterAssignment& assignment) {
    check_aligned(masks.student_ids, assignment.ids, "masks/assignment");
    const size_t F = masks.feature_names.size();
    std::vector<std::vector<double>> out(assignment.n_clusters, std::vector<double>(F, 0.0));
    std::vector<size_t> sizes(assignment.n_clusters, 0);
    for (size_t s = 0; s < masks.student_ids.size(); ++s) {
        int c = assignment.labels[s];
        sizes[c] += 1;
        for (size_t f = 0; f < F; ++f) out[c][f] += masks.at(s, f);
    }
    for (int c = 0; c < assignment.n_clusters; ++c) {
        if (sizes[c] == 0) throw InvalidSpec("importance_by_cluster: empty cluster");
        for (size_t f = 0; f < F; ++f) out[c][f] /= static_cast<double>(sizes[c]);
    }
    return out;
}

ValueDistributions value_distributions_by_cluster(const features::FeatureCube& cube,
                                                  const clustering::ClusterAssignment& assignment,
                                                  Collapse collapse) {
    check_aligned(cube.student_ids, assignment.ids, "cube/assignment");
    const size_t F = cube.n_features();
    const size_t S = cube.n_students();

    ValueDistributions dist;
    dist.per_cluster.resize(assignment.n_clusters, std::vector<FeatureSummary>(F));
    dist.overall.resize(F);

    std::vector<double> collapsed(S);
    std::vector<double> pool;
    for (size_t f = 0; f < F; ++f) {
        for (size_t s = 0; s < S; ++s) collapsed[s] = collapse_series(cube.series(s, f), collapse);
        for (int c = 0; c < assignment.n_clusters; ++c) {
            pool.clear();
            for (size_t s = 0; s < S; ++s)
                if (assignment.labels[s] == c) pool.push_back(collapsed[s]);
            if (pool.empty()) throw InvalidSpec("value_distributions: empty cluster");
            dist.per_cluster[c][f] = five_point(pool);
        }
        pool.assign(collapsed.begin(), collapsed.end());
        dist.overall[f] = five_point(pool);
    }
    return dist;
}

OutcomeRates outcome_rates(const clustering::ClusterAssignment& assignment,
                           const std::map<std::string, int>& labels) {
    OutcomeRates out;
    out.pass_rate.assign(assignment.n_clusters, 0.0);
    out.fraction.assign(assignment.n_clusters, 0.0);
    double total_pass = 0;
    for (size_t s = 0; s < assignment.ids.size(); ++s) {
        auto it = labels.find(assignment.ids[s]);
        if (it == labels.end())
            throw LabelMismatch("outcome_rates: no label for '" + assignment.ids[s] + "'");
        out.pass_rate[assignment.labels[s]] += it->second;
        out.fraction[assignment.labels[s]] += 1;
        total_pass += it->second;
    }
    const double n = static_cast<double>(assignment.ids.size());
    out.overall_pass_rate = total_pass / n;
    for (int c = 0; c < assignment.n_clusters; ++c) {
        if (out.fraction[c] == 0) throw InvalidSpec("outcome_rates: empty cluster");
        out.pass_rate[c] /= out.fraction[c];
        out.fraction[c] /= n;
    }
    return out;
}

ClusterReport build_report(const features::FeatureCube& cube, const gating::MaskMatrix& masks,
                           const clustering::ClusterAssignment& assignment,
                           const std::map<std::string, int>* labels, Collapse collapse) {
    check_aligned(cube.student_ids, masks.student_ids, "cube/masks");
    if (cube.feature_names != masks.feature_names)
        throw AlignmentError("analysis: cube/masks feature names disagree");

    auto importance = importance_by_cluster(masks, assignment);
    auto values = value_distributions_by_cluster(cube, assignment, collapse);
    std::optional<OutcomeRates> outcomes;
    if (labels) outcomes = outcome_rates(assignment, *labels);

    const size_t F = cube.n_features();
    const size_t S = cube.n_students();
    ClusterReport report;
    report.feature_names = cube.feature_names;

    std::vector<size_t> sizes(assignment.n_clusters, 0);
    for (int label : assignment.labels) sizes[label] += 1;

    for (int c = 0; c < assignment.n_clusters; ++c) {
        ClusterRow row;
        row.name = std::to_string(c);
        row.size = sizes[c];
        row.fraction = static_cast<double>(sizes[c]) / static_cast<double>(S);
        if (outcomes) row.pass_rate = outcomes->pass_rate[c];
        row.features.resize(F);
        for (size_t f = 0; f < F; ++f) {
            row.features[f] = values.per_cluster[c][f];
            row.features[f].importance = importance[c][f];
        }
        report.clusters.push_back(std::move(row));
    }

    report.overall.name = "Overall";
    report.overall.size = S;
    report.overall.fraction = 1.0;
    if (outcomes) report.overall.pass_rate = outcomes->overall_pass_rate;
    report.overall.features.resize(F);
    std::vector<double> overall_importance(F, 0.0);
    for (size_t s = 0; s < S; ++s)
        for (size_t f = 0; f < F; ++f) overall_importance[f] += masks.at(s, f);
    for (size_t f = 0; f < F; ++f) {
        report.overall.features[f] = values.overall[f];
        report.overall.features[f].importance = overall_importance[f] / static_cast<double>(S);
    }
    return report;
}

namespace {

ordered_json row_to_json(const ClusterRow& row, const std::vector<std::string>& names) {
    ordered_json j;
    j["name"] = row.name;
    j["size"] = row.size;
    j["fraction"] = row.fraction;
    if (row.pass_rate) j["pass_rate"] = *row.pass_rate;
    ordered_json feats;
    for (size_t f = 0; f < names.size(); ++f) {
        const FeatureSummary& s = row.features[f];
        feats[names[f]] = {{"importance", s.importance}, {"min", s.min},   {"q25", s.q25},
                           {"median", s.median},         {"q75", s.q75},   {"max", s.max}};
    }
    j["features"] = std::move(feats);
    return j;
}

ClusterRow row_from_json(const ordered_json& j, const std::vector<std::string>& names) {
    ClusterRow row;
    row.name = j.at("name").get<std::string>();
    row.size = j.at("size").get<size_t>();
    row.fraction = j.at("fraction").get<double>();
    if (j.contains("pass_rate")) row.pass_rate = j.at("pass_rate").get<double>();
    row.features.resize(names.size());
    for (size_t f = 0; f < names.size(); ++f) {
        const auto& s = j.at("features").at(names[f]);
        row.features[f] = {s.at("importance").get<double>(), s.at("min").get<double>(),
                           s.at("q25").get<double>(),        s.at("median").get<double>(),
                           s.at("q75").get<double>(),        s.at("max").get<double>()};
    }
    return row;
}

void write_csv_rows(std::ofstream& out, const ClusterRow& row,
                    const std::vector<std::string>& names, bool importance_file) {
    for (size_t f = 0; f < names.size(); ++f) {
        const FeatureSummary& s = row.features[f];
        if (importance_file) {
            csv::write_row(out, {row.name, names[f], format_double(s.importance)});
        } else {
            csv::write_row(out, {row.name, names[f], format_double(s.min), format_double(s.q25),
                                 format_double(s.median), format_double(s.q75),
                                 format_double(s.max)});
        }
    }
}

} // namespace

void export_report(const ClusterReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        ordered_json j;
        j["feature_names"] = report.feature_names;
        ordered_json clusters = ordered_json::array();
        for (const auto& c : report.clusters) clusters.push_back(row_to_json(c, report.feature_names));
        j["clusters"] = std::move(clusters);
        j["overall"] = row_to_json(report.overall, report.feature_names);
        std::ofstream out(dir + "/report.json");
        if (!out) throw IoError("cannot write " + dir + "/report.json");
        out << j.dump(2) << '\n';
    }
    {
        std::ofstream out(dir + "/report_importance.csv");
        if (!out) throw IoError("cannot write " + dir + "/report_importance.csv");
        csv::write_row(out, {"cluster", "feature", "importance"});
        for (const auto& c : report.clusters) write_csv_rows(out, c, report.feature_names, true);
        write_csv_rows(out, report.overall, report.feature_names, true);
    }
    {
        std::ofstream out(dir + "/report_values.csv");
        if (!out) throw IoError("cannot write " + dir + "/report_values.csv");
        csv::write_row(out, {"cluster", "feature", "min", "q25", "median", "q75", "max"});
        for (const auto& c : report.clusters) write_csv_rows(out, c, report.feature_names, false);
        write_csv_rows(out, report.overall, report.feature_names, false);
    }
}

ClusterReport import_report(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open " + json_path);
    ordered_json j = ordered_json::parse(in);
    ClusterReport report;
    report.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& c : j.at("clusters")) report.clusters.push_back(row_from_json(c, report.feature_names));
    report.overall = row_from_json(j.at("overall"), report.feature_names);
    return report;
}

} // namespace i3c::analysis
