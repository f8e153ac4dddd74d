#pragma once

#include "interpret3c/ingest.hpp"

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace i3c::features {

// Everything an extractor may look at for one student. Events and sessions
// belong to that student only and are sorted by time.
struct StudentContext {
    std::span<const ingest::Event> events;
    std::span<const ingest::Session> sessions;
    const ingest::CourseSchedule* schedule = nullptr;
    const std::string* student_id = nullptr;
    double gap_cap = 3600.0; // dwell-time cap per consecutive-event pair
};

using Extractor = std::function<double(const StudentContext&, int week)>;

struct FeatureSpec {
    std::string name;
    std::string description;
    Extractor extractor;
};

class FeatureRegistry {
  public:
    void add(FeatureSpec spec);
    const FeatureSpec& get(const std::string& name) const; // UnknownFeature
    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;
    size_t size() const { return specs_.size(); }

  private:
    std::vector<FeatureSpec> specs_;
    std::unordered_map<std::string, size_t> by_name_;
};

// The nine behavioral features computed by this pipeline.
FeatureRegistry standard_registry();

// Registers `count` deterministic pseudo-random features (Noise01, Noise02, ...).
// Values are a pure hash of (feature name, student id, week): reproducible and
// carrying no outcome signal, for selectivity benchmarks.
void add_noise_features(FeatureRegistry& registry, int count);

struct FeatureCube {
    std::vector<std::string> student_ids;
    std::vector<std::string> feature_names;
    int weeks_used = 0;
    bool scaled = false;
    std::vector<double> values; // [student][feature][week] row-major

    size_t n_students() const { return student_ids.size(); }
    size_t n_features() const { return feature_names.size(); }

    double& at(size_t s, size_t f, size_t w) {
        return values[(s * feature_names.size() + f) * weeks_used + w];
    }
    double at(size_t s, size_t f, size_t w) const {
        return values[(s * feature_names.size() + f) * weeks_used + w];
    }
    // Contiguous week series of one (student, feature).
    std::span<const double> series(size_t s, size_t f) const {
        return {values.data() + (s * feature_names.size() + f) * weeks_used,
                static_cast<size_t>(weeks_used)};
    }
    // Flattened feature-major view of one student (n_features * weeks_used).
    std::span<const double> student_slice(size_t s) const {
        return {values.data() + s * feature_names.size() * weeks_used,
                feature_names.size() * static_cast<size_t>(weeks_used)};
    }

    size_t student_pos(const std::string& id) const; // AlignmentError if absent
    size_t feature_pos(const std::string& name) const;

    void check_finite() const; // NonFinite on NaN/Inf

    void save(const std::string& dir) const; // cube.csv + meta
    static FeatureCube load(const std::string& dir);
};

struct ScalingReport {
    std::vector<double> scale; // per feature, aligned with cube feature order
    std::vector<std::string> zero_variance;
};

FeatureCube compute_weekly_features(
    const ingest::EventLog& log, const ingest::CourseSchedule& schedule,
    const std::unordered_map<std::string, std::vector<ingest::Session>>& sessions,
    const FeatureRegistry& registry, const std::vector<std::string>& feature_names,
    int weeks_used, double gap_cap = 3600.0, int threads = 1);

std::pair<FeatureCube, ScalingReport> unit_norm_scale(const FeatureCube& cube);

inline constexpr double kDefaultGapCap = 3600.0;

} // namespace i3c::features
