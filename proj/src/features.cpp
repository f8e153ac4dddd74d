#include "interpret3c/features.hpp"

#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace i3c::features {

using ingest::Event;
using ingest::EventKind;
using ingest::Session;

void FeatureRegistry::add(FeatureSpec spec) {
    if (by_name_.count(spec.name))
        throw InvalidSpec("feature '" + spec.name + "' registered twice");
    by_name_[spec.name] = specs_.size();
    specs_.push_back(std::move(spec));
}

const FeatureSpec& FeatureRegistry::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw UnknownFeature("unregistered feature '" + name + "'");
    return specs_[it->second];
}

bool FeatureRegistry::contains(const std::string& name) const { return by_name_.count(name) > 0; }

std::vector<std::string> FeatureRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(specs_.size());
    for (const auto& s : specs_) out.push_back(s.name);
    return out;
}

namespace {

int week_of(double t, const ingest::CourseSchedule& schedule) {
    return static_cast<int>(std::floor(t / schedule.week_length));
}

double count_kinds_in_week(const StudentContext& ctx, int week, bool (*pred)(EventKind)) {
    double n = 0;
    for (const auto& e : ctx.events)
        if (pred(e.kind) && week_of(e.timestamp, *ctx.schedule) == week) n += 1;
    return n;
}

// Dwell time: consecutive pairs inside a session; the gap belongs to the
// earlier event's activity and to the earlier event's week.
double dwell_time(const StudentContext& ctx, int week, bool (*first_is)(EventKind)) {
    double total = 0;
    for (const auto& sess : ctx.sessions) {
        for (size_t i = 0; i + 1 < sess.event_indices.size(); ++i) {
            const Event& a = ctx.events[sess.event_indices[i]];
            const Event& b = ctx.events[sess.event_indices[i + 1]];
            if (!first_is(a.kind)) continue;
            if (week_of(a.timestamp, *ctx.schedule) != week) continue;
            total += std::min(b.timestamp - a.timestamp, ctx.gap_cap);
        }
    }
    return total;
}

bool kind_is_video_play(EventKind k) { return k == EventKind::VideoPlay; }
bool kind_is_problem(EventKind k) { return ingest::is_problem(k); }

double total_clicks_video(const StudentContext& ctx, int week) {
    return count_kinds_in_week(ctx, week, ingest::is_video);
}

double total_clicks_video_load(const StudentContext& ctx, int week) {
    double n = 0;
    for (const auto& e : ctx.events)
        if (e.kind == EventKind::VideoLoad && week_of(e.timestamp, *ctx.schedule) == week) n += 1;
    return n;
}

double total_time_video(const StudentContext& ctx, int week) {
    return dwell_time(ctx, week, kind_is_video_play);
}

double time_in_problem_sum(const StudentContext& ctx, int week) {
    return dwell_time(ctx, week, kind_is_problem);
}

double student_speed(const StudentContext& ctx, int week) {
    double prev = -1;
    double sum = 0;
    long gaps = 0;
    for (const auto& e : ctx.events) {
        if (e.kind != EventKind::ProblemSubmit) continue;
        if (week_of(e.timestamp, *ctx.schedule) != week) continue;
        if (prev >= 0) {
            sum += e.timestamp - prev;
            ++gaps;
        }
        prev = e.timestamp;
    }
    return gaps == 0 ? 0.0 : sum / static_cast<double>(gaps);
}

double time_between_sessions_std(const StudentContext& ctx, int week) {
    // Idle gaps between consecutive sessions that start in this week.
    std::vector<const Session*> in_week;
    for (const auto& s : ctx.sessions)
        if (week_of(s.start, *ctx.schedule) == week) in_week.push_back(&s);
    if (in_week.size() < 2) return 0.0;
    std::vector<double> gaps;
    for (size_t i = 0; i + 1 < in_week.size(); ++i)
        gaps.push_back(in_week[i + 1]->start - in_week[i]->end);
    double mean = 0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(gaps.size());
    double var = 0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    var /= static_cast<double>(gaps.size()); // population variance
    return std::sqrt(var);
}

double total_time_sessions(const StudentContext& ctx, int week) {
    double total = 0;
    for (const auto& s : ctx.sessions)
        if (week_of(s.start, *ctx.schedule) == week) total += s.end - s.start;
    return total;
}

double content_alignment(const StudentContext& ctx, int week) {
    auto it = ctx.schedule->scheduled_videos.find(week);
    if (it == ctx.schedule->scheduled_videos.end() || it->second.empty()) return 0.0;
    std::set<std::string> watched;
    for (const auto& e : ctx.events) {
        if (e.kind != EventKind::VideoPlay) continue;
        if (week_of(e.timestamp, *ctx.schedule) != week) continue;
        if (it->second.count(e.object_id)) watched.insert(e.object_id);
    }
    return static_cast<double>(watched.size()) / static_cast<double>(it->second.size());
}

} // namespace

FeatureRegistry standard_registry() {
    FeatureRegistry r;
    r.add({"TotalClicksVideo", "count of video events in the week", total_clicks_video});
    r.add({"TotalClicksVideoLoad", "count of VideoLoad events in the week", total_clicks_video_load});
    r.add({"TotalTimeVideo", "capped dwell seconds following VideoPlay events", total_time_video});
    r.add({"TimeInProblemSum", "capped dwell seconds following problem events", time_in_problem_sum});
    r.add({"TotalTimeProblems", "alias of TimeInProblemSum", time_in_problem_sum});
    r.add({"StudentSpeed", "mean seconds between consecutive problem submits", student_speed});
    r.add({"TimeBetweenSessionsStd", "population std of idle gaps between sessions", time_between_sessions_std});
    r.add({"TotalTimeSessions", "summed session durations started in the week", total_time_sessions});
    r.add({"ContentAlignment", "fraction of the week's scheduled videos played in-week", content_alignment});
    return r;
}

void add_noise_features(FeatureRegistry& registry, int count) {
    for (int i = 1; i <= count; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "Noise%02d", i);
        std::string fname = name;
        registry.add({fname, "hash-derived pseudo-random feature",
                      [fname](const StudentContext& ctx, int week) {
                          std::string key = fname + '\0' + *ctx.student_id + '\0' + std::to_string(week);
                          return static_cast<double>(fnv1a64(key) >> 11) * 0x1.0p-53;
                      }});
    }
}

size_t FeatureCube::student_pos(const std::string& id) const {
    auto it = std::find(student_ids.begin(), student_ids.end(), id);
    if (it == student_ids.end()) throw AlignmentError("unknown student '" + id + "'");
    return static_cast<size_t>(it - student_ids.begin());
}

size_t FeatureCube::feature_pos(const std::string& name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw UnknownFeature("feature '" + name + "' not in cube");
    return static_cast<size_t>(it - feature_names.begin());
}

void FeatureCube::check_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) throw NonFinite("feature cube contains non-finite values");
}

FeatureCube compute_weekly_features(
    const ingest::EventLog& log, const ingest::CourseSchedule& schedule,
    const std::unordered_map<std::string, std::vector<Session>>& sessions,
    const FeatureRegistry& registry, const std::vector<std::string>& feature_names,
    int weeks_used, double gap_cap, int threads) {
    if (weeks_used < 1 || weeks_used > schedule.num_weeks)
        throw OutOfRange("weeks_used must be in [1, num_weeks]");
    std::vector<const FeatureSpec*> specs;
    specs.reserve(feature_names.size());
    for (const auto& name : feature_names) specs.push_back(&registry.get(name));

    FeatureCube cube;
    cube.student_ids = log.student_ids;
    cube.feature_names = feature_names;
    cube.weeks_used = weeks_used;
    cube.scaled = false;
    cube.values.assign(cube.n_students() * cube.n_features() * weeks_used, 0.0);

    static const std::vector<Session> kNoSessions;
    parallel_for(cube.n_students(), threads, [&](size_t s) {
        const std::string& id = cube.student_ids[s];
        auto sess_it = sessions.find(id);
        StudentContext ctx;
        ctx.events = log.events_of(id);
        ctx.sessions = sess_it == sessions.end() ? std::span<const Session>(kNoSessions)
                                                 : std::span<const Session>(sess_it->second);
        ctx.schedule = &schedule;
        ctx.student_id = &id;
        ctx.gap_cap = gap_cap;
        for (size_t f = 0; f < specs.size(); ++f)
            for (int w = 0; w < weeks_used; ++w)
                cube.at(s, f, w) = specs[f]->extractor(ctx, w);
    });
    cube.check_finite();
    return cube;
}

std::pair<FeatureCube, ScalingReport> unit_norm_scale(const FeatureCube& cube) {
    if (cube.scaled) throw InvalidSpec("unit_norm_scale: cube already scaled");
    cube.check_finite();
    FeatureCube out = cube;
    out.scaled = true;
    ScalingReport report;
    report.scale.assign(cube.n_features(), 1.0);
    for (size_t f = 0; f < cube.n_features(); ++f) {
        double sq = 0;
        for (size_t s = 0; s < cube.n_students(); ++s)
            for (int w = 0; w < cube.weeks_used; ++w) {
                double v = cube.at(s, f, w);
                sq += v * v;
            }
        double norm = std::sqrt(sq);
        if (norm == 0.0) {
            report.zero_variance.push_back(cube.feature_names[f]);
            continue; // slab left at zero, factor stays 1
        }
        report.scale[f] = norm;
        for (size_t s = 0; s < cube.n_students(); ++s)
            for (int w = 0; w < cube.weeks_used; ++w) out.at(s, f, w) = cube.at(s, f, w) / norm;
    }
    return {std::move(out), std::move(report)};
}

namespace {
std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ", ";
        out += parts[i];
    }
    return out;
}
} // namespace

void FeatureCube::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/cube.csv");
        if (!out) throw IoError("cannot write " + dir + "/cube.csv");
        csv::write_row(out, {"student_id", "feature", "week", "value"});
        for (size_t s = 0; s < n_students(); ++s)
            for (size_t f = 0; f < n_features(); ++f)
                for (int w = 0; w < weeks_used; ++w)
                    csv::write_row(out, {student_ids[s], feature_names[f], std::to_string(w),
                                         format_double(at(s, f, w))});
    }
    std::ofstream meta(dir + "/meta");
    if (!meta) throw IoError("cannot write " + dir + "/meta");
    meta << "students = " << join(student_ids) << '\n';
    meta << "features = " << join(feature_names) << '\n';
    meta << "weeks_used = " << weeks_used << '\n';
    meta << "scaled = " << (scaled ? "true" : "false") << '\n';
}

FeatureCube load_cube_meta(const std::string& dir, FeatureCube& cube) {
    std::ifstream meta(dir + "/meta");
    if (!meta) throw IoError("cannot open " + dir + "/meta");
    std::string line;
    while (std::getline(meta, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw MalformedRow("cube meta: expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key == "students") {
            for (const auto& s : split(value, ',')) cube.student_ids.push_back(trim(s));
        } else if (key == "features") {
            for (const auto& s : split(value, ',')) cube.feature_names.push_back(trim(s));
        } else if (key == "weeks_used") {
            cube.weeks_used = static_cast<int>(parse_long(value, "weeks_used"));
        } else if (key == "scaled") {
            cube.scaled = value == "true";
        } else {
            throw MalformedRow("cube meta: unknown key '" + key + "'");
        }
    }
    return cube;
}

FeatureCube FeatureCube::load(const std::string& dir) {
    FeatureCube cube;
    load_cube_meta(dir, cube);
    if (cube.weeks_used < 1) throw MalformedRow("cube meta: missing weeks_used");
    cube.values.assign(cube.n_students() * cube.n_features() * cube.weeks_used, 0.0);
    std::vector<char> seen(cube.values.size(), 0);

    std::unordered_map<std::string, size_t> spos, fpos;
    for (size_t i = 0; i < cube.student_ids.size(); ++i) spos[cube.student_ids[i]] = i;
    for (size_t i = 0; i < cube.feature_names.size(); ++i) fpos[cube.feature_names[i]] = i;

    std::vector<std::string> header;
    auto rows = csv::read_file(dir + "/cube.csv", header);
    if (header != std::vector<std::string>{"student_id", "feature", "week", "value"})
        throw MalformedRow("cube.csv: bad header");
    for (const auto& row : rows) {
        const std::string where = "cube.csv row " + std::to_string(row.line_number);
        if (row.fields.size() != 4) throw MalformedRow(where + ": expected 4 columns");
        auto s = spos.find(trim(row.fields[0]));
        auto f = fpos.find(trim(row.fields[1]));
        if (s == spos.end() || f == fpos.end())
            throw AlignmentError(where + ": id not listed in meta");
        long w = parse_long(row.fields[2], where);
        if (w < 0 || w >= cube.weeks_used) throw OutOfRange(where + ": week out of range");
        size_t idx = (s->second * cube.n_features() + f->second) * cube.weeks_used + w;
        cube.values[idx] = parse_double(row.fields[3], where);
        seen[idx] = 1;
    }
    for (char c : seen)
        if (!c) throw MalformedRow("cube.csv: missing entries for declared dimensions");
    cube.check_finite();
    return cube;
}

} // namespace i3c::features
