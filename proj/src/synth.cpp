#include "interpret3c/synth.hpp"

#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace i3c::synth {

using ingest::Event;
using ingest::EventKind;

ArchetypeSpec constant_archetype(std::string name, double fraction, double video_rate,
                                 double problem_rate, double session_rate, double adherence,
                                 double pass_probability, int n_weeks) {
    ArchetypeSpec a;
    a.name = std::move(name);
    a.fraction = fraction;
    a.pass_probability = pass_probability;
    a.rates.video_events.assign(n_weeks, video_rate);
    a.rates.problem_events.assign(n_weeks, problem_rate);
    a.rates.sessions.assign(n_weeks, session_rate);
    a.rates.adherence.assign(n_weeks, adherence);
    return a;
}

std::vector<ArchetypeSpec> default_benchmark_archetypes(int n_weeks) {
    return {
        constant_archetype("engaged-regular", 0.4, 20.0, 10.0, 5.0, 0.8, 0.85, n_weeks),
        constant_archetype("cramming-quiz-heavy", 0.2, 3.0, 25.0, 1.5, 0.1, 0.5, n_weeks),
        constant_archetype("disengaged", 0.4, 2.0, 2.0, 1.0, 0.05, 0.15, n_weeks),
    };
}

namespace {

void validate_specs(const std::vector<ArchetypeSpec>& archetypes, int n_students, int n_weeks) {
    if (archetypes.empty()) throw InvalidSpec("synth: need at least one archetype");
    if (n_students < 10) throw InvalidSpec("synth: need at least 10 students");
    if (n_weeks < 1) throw InvalidSpec("synth: need at least one week");
    double total = 0;
    for (const auto& a : archetypes) {
        if (a.fraction < 0) throw InvalidSpec("synth: negative fraction for " + a.name);
        if (!(a.pass_probability >= 0 && a.pass_probability <= 1))
            throw InvalidSpec("synth: pass probability outside [0,1] for " + a.name);
        const WeeklyRates& r = a.rates;
        for (const auto* v : {&r.video_events, &r.problem_events, &r.sessions, &r.adherence})
            if (static_cast<int>(v->size()) != n_weeks)
                throw InvalidSpec("synth: weekly rate vectors must have one entry per week (" +
                                  a.name + ")");
        for (double v : r.video_events)
            if (v < 0) throw InvalidSpec("synth: negative rate for " + a.name);
        for (double v : r.problem_events)
            if (v < 0) throw InvalidSpec("synth: negative rate for " + a.name);
        for (double v : r.sessions)
            if (v < 0) throw InvalidSpec("synth: negative rate for " + a.name);
        for (double v : r.adherence)
            if (!(v >= 0 && v <= 1)) throw InvalidSpec("synth: adherence outside [0,1] for " + a.name);
        total += a.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw InvalidSpec("synth: archetype fractions must sum to 1");
}

// Largest-remainder rounding of fractions into integer counts summing to n.
std::vector<int> apportion(const std::vector<ArchetypeSpec>& archetypes, int n) {
    std::vector<int> counts(archetypes.size());
    std::vector<std::pair<double, size_t>> remainders;
    int assigned = 0;
    for (size_t i = 0; i < archetypes.size(); ++i) {
        double quota = archetypes[i].fraction * n;
        counts[i] = static_cast<int>(std::floor(quota));
        assigned += counts[i];
        remainders.push_back({quota - counts[i], i});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < n - assigned; ++i) counts[remainders[i].second] += 1;
    return counts;
}

std::string video_id(int week, int slot) {
    return "vid_" + std::to_string(week) + "_" + std::to_string(slot);
}

struct Window {
    double start, end;
};

} // namespace

SyntheticCourse generate_synthetic_course(const std::vector<ArchetypeSpec>& archetypes,
                                          int n_students, int n_weeks, uint64_t seed) {
    validate_specs(archetypes, n_students, n_weeks);

    SyntheticCourse course;
    course.seed = seed;
    course.schedule.num_weeks = n_weeks;
    for (int w = 0; w < n_weeks; ++w) {
        std::set<std::string> vids;
        for (int v = 0; v < kScheduledVideosPerWeek; ++v) vids.insert(video_id(w, v));
        course.schedule.scheduled_videos[w] = std::move(vids);
    }
    for (const auto& a : archetypes) course.archetype_names.push_back(a.name);

    auto counts = apportion(archetypes, n_students);
    const double L = course.schedule.week_length;

    std::vector<Event> events;
    int arch_index = 0, remaining = counts.empty() ? 0 : counts[0];
    for (int s = 0; s < n_students; ++s) {
        while (remaining == 0 && arch_index + 1 < static_cast<int>(counts.size()))
            remaining = counts[++arch_index];
        remaining -= 1;
        const ArchetypeSpec& arch = archetypes[arch_index];

        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%05d", s);
        std::string id = buf;
        course.student_ids.push_back(id);
        course.archetype.push_back(arch_index);

        // Per-student stream: the course is reproducible even if students are
        // generated in parallel.
        Rng rng = Rng::derive(seed, static_cast<uint64_t>(s) + 1);
        course.labels[id] = rng.bernoulli(arch.pass_probability) ? 1 : 0;

        size_t events_before = events.size();
        for (int w = 0; w < n_weeks; ++w) {
            long n_sessions = rng.poisson(arch.rates.sessions[w]);
            long n_video = rng.poisson(arch.rates.video_events[w]);
            long n_problem = rng.poisson(arch.rates.problem_events[w]);
            std::vector<int> adhered;
            for (int v = 0; v < kScheduledVideosPerWeek; ++v)
                if (rng.bernoulli(arch.rates.adherence[w])) adhered.push_back(v);
            if (n_video + n_problem + static_cast<long>(adhered.size()) == 0) continue;
            if (n_sessions == 0) n_sessions = 1;

            std::vector<Window> windows(n_sessions);
            for (auto& win : windows) {
                double duration = rng.uniform(1200.0, 2400.0);
                win.start = rng.uniform(w * L, (w + 1) * L - duration);
                win.end = win.start + duration;
            }
            auto place = [&](EventKind kind, std::string object) {
                const Window& win = windows[rng.uniform_index(windows.size())];
                events.push_back({id, rng.uniform(win.start, win.end), kind, std::move(object)});
            };

            for (long i = 0; i < n_video; ++i) {
                double roll = rng.uniform();
                EventKind kind = roll < 0.30   ? EventKind::VideoLoad
                                 : roll < 0.65 ? EventKind::VideoPlay
                                 : roll < 0.80 ? EventKind::VideoPause
                                 : roll < 0.90 ? EventKind::VideoSeek
                                               : EventKind::VideoStop;
                int vw = static_cast<int>(rng.uniform_index(n_weeks));
                int slot = static_cast<int>(rng.uniform_index(kScheduledVideosPerWeek));
                place(kind, video_id(vw, slot));
            }
            for (long i = 0; i < n_problem; ++i) {
                EventKind kind = rng.bernoulli(0.5) ? EventKind::ProblemSubmit : EventKind::ProblemView;
                place(kind, "prob_" + std::to_string(w) + "_" +
                                std::to_string(rng.uniform_index(5)));
            }
            for (int v : adhered) place(EventKind::VideoPlay, video_id(w, v));
        }
        if (events.size() == events_before) {
            // Zero-rate archetypes still need one event; a lone ProblemView
            // yields an all-zero feature row.
            events.push_back({id, rng.uniform(0.0, L), EventKind::ProblemView, "prob_placeholder"});
        }
    }

    course.log = ingest::EventLog::from_events(std::move(events));
    return course;
}

void save_course(const SyntheticCourse& course, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/events.csv");
        if (!out) throw IoError("cannot write " + dir + "/events.csv");
        ingest::serialize_events(course.log, out);
    }
    course.schedule.save_file(dir + "/schedule.txt");
    {
        std::ofstream out(dir + "/labels.csv");
        if (!out) throw IoError("cannot write " + dir + "/labels.csv");
        ingest::serialize_labels(course.labels, out);
    }
    {
        std::ofstream out(dir + "/archetypes.csv");
        if (!out) throw IoError("cannot write " + dir + "/archetypes.csv");
        csv::write_row(out, {"student_id", "archetype", "archetype_name"});
        for (size_t i = 0; i < course.student_ids.size(); ++i)
            csv::write_row(out, {course.student_ids[i], std::to_string(course.archetype[i]),
                                 course.archetype_names[course.archetype[i]]});
    }
}

std::vector<int> load_archetypes(const std::string& path, const std::vector<std::string>& id_order) {
    std::vector<std::string> header;
    auto rows = csv::read_file(path, header);
    if (header.size() < 2 || header[0] != "student_id" || header[1] != "archetype")
        throw MalformedRow(path + ": expected student_id,archetype header");
    std::map<std::string, int> by_id;
    for (const auto& row : rows) {
        if (row.fields.size() < 2) throw MalformedRow(path + ": short row");
        by_id[trim(row.fields[0])] = static_cast<int>(parse_long(row.fields[1], "archetype"));
    }
    std::vector<int> out;
    out.reserve(id_order.size());
    for (const auto& id : id_order) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw AlignmentError(path + ": no archetype for '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

} // namespace i3c::synth
