#pragma once

#include "interpret3c/ingest.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace i3c::synth {

// Weekly intensity knobs for one behavioral archetype. Vectors are indexed by
// week; constant_archetype broadcasts scalars.
struct WeeklyRates {
    std::vector<double> video_events;
    std::vector<double> problem_events;
    std::vector<double> sessions;
    std::vector<double> adherence; // probability a scheduled video is played in-week
};

struct ArchetypeSpec {
    std::string name;
    double fraction = 0;
    WeeklyRates rates;
    double pass_probability = 0;
};

ArchetypeSpec constant_archetype(std::string name, double fraction, double video_rate,
                                 double problem_rate, double session_rate, double adherence,
                                 double pass_probability, int n_weeks);

// Three-archetype plant used by the benchmark configuration.
std::vector<ArchetypeSpec> default_benchmark_archetypes(int n_weeks);

struct SyntheticCourse {
    ingest::EventLog log;
    ingest::CourseSchedule schedule;
    std::map<std::string, int> labels;
    std::vector<std::string> student_ids; // generation order == lexicographic order
    std::vector<int> archetype;           // per student, aligned with student_ids
    std::vector<std::string> archetype_names;
    uint64_t seed = 0;
};

SyntheticCourse generate_synthetic_course(const std::vector<ArchetypeSpec>& archetypes,
                                          int n_students, int n_weeks, uint64_t seed);

// events.csv / schedule.txt / labels.csv consumed by the ingest stage, plus
// archetypes.csv recording the plant.
void save_course(const SyntheticCourse& course, const std::string& dir);

// Planted archetype index per id, in the order of `id_order`.
std::vector<int> load_archetypes(const std::string& path, const std::vector<std::string>& id_order);

inline constexpr int kScheduledVideosPerWeek = 3;

} // namespace i3c::synth
