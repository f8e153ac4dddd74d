#pragma once

#include "interpret3c/clustering.hpp"
#include "interpret3c/features.hpp"
#include "interpret3c/gating_model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace i3c::analysis {

struct FeatureSummary {
    double importance = 0; // fraction of members with mask = 1
    double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;

    bool operator==(const FeatureSummary&) const = default;
};

struct ClusterRow {
    std::string name; // cluster label as text, or "Overall"
    size_t size = 0;
    double fraction = 0;
    std::optional<double> pass_rate;
    std::vector<FeatureSummary> features;

    bool operator==(const ClusterRow&) const = default;
};

struct ClusterReport {
    std::vector<std::string> feature_names;
    std::vector<ClusterRow> clusters;
    ClusterRow overall;

    bool operator==(const ClusterReport&) const = default;
};

enum class Collapse { Mean, Sum, Last };
Collapse collapse_from_string(const std::string& s);
const char* to_string(Collapse c);

// Fraction of each cluster's members that selected each feature.
std::vector<std::vector<double>> importance_by_cluster(const gating::MaskMatrix& masks,
                                                       const clustering::ClusterAssignment& assignment);

// Linear-interpolation (type-7) quantile over a sorted sample.
double quantile_linear(std::span<const double> sorted, double p);

// Per (cluster, feature) five-point summaries of week-collapsed values, plus
// the pooled Overall row.
struct ValueDistributions {
    std::vector<std::vector<FeatureSummary>> per_cluster; // [cluster][feature], quartile fields only
    std::vector<FeatureSummary> overall;
};
ValueDistributions value_distributions_by_cluster(const features::FeatureCube& cube,
                                                  const clustering::ClusterAssignment& assignment,
                                                  Collapse collapse = Collapse::Mean);

struct OutcomeRates {
    std::vector<double> pass_rate; // per cluster
    std::vector<double> fraction;  // per cluster, sums to 1
    double overall_pass_rate = 0;
};
OutcomeRates outcome_rates(const clustering::ClusterAssignment& assignment,
                           const std::map<std::string, int>& labels);

ClusterReport build_report(const features::FeatureCube& cube, const gating::MaskMatrix& masks,
                           const clustering::ClusterAssignment& assignment,
                           const std::map<std::string, int>* labels,
                           Collapse collapse = Collapse::Mean);

// Writes report.json plus the flat plot-ready CSVs into `dir`.
void export_report(const ClusterReport& report, const std::string& dir);
ClusterReport import_report(const std::string& json_path);

} // namespace i3c::analysis
