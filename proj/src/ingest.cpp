#include "interpret3c/ingest.hpp"

#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace i3c::ingest {

namespace {
const char* kKindNames[] = {"VideoLoad",   "VideoPlay",   "VideoPause", "VideoSeek",
                            "VideoStop",   "ProblemView", "ProblemSubmit"};
} // namespace

bool is_video(EventKind k) {
    switch (k) {
    case EventKind::VideoLoad:
    case EventKind::VideoPlay:
    case EventKind::VideoPause:
    case EventKind::VideoSeek:
    case EventKind::VideoStop:
        return true;
    default:
        return false;
    }
}

bool is_problem(EventKind k) {
    return k == EventKind::ProblemView || k == EventKind::ProblemSubmit;
}

const char* to_string(EventKind k) { return kKindNames[static_cast<int>(k)]; }

std::optional<EventKind> kind_from_string(std::string_view s) {
    for (int i = 0; i < 7; ++i)
        if (s == kKindNames[i]) return static_cast<EventKind>(i);
    return std::nullopt;
}

void CourseSchedule::validate() const {
    if (num_weeks <= 0) throw InvalidSpec("schedule: num_weeks must be positive");
    if (week_length <= 0) throw InvalidSpec("schedule: week_length must be positive");
    for (const auto& [week, _] : scheduled_videos)
        if (week < 0 || week >= num_weeks)
            throw InvalidSpec("schedule: scheduled week " + std::to_string(week) +
                              " outside [0," + std::to_string(num_weeks) + ")");
}

CourseSchedule CourseSchedule::load(std::istream& in) {
    CourseSchedule s;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw MalformedRow("schedule line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key == "num_weeks") {
            s.num_weeks = static_cast<int>(parse_long(value, "num_weeks"));
        } else if (key == "week_length") {
            s.week_length = parse_double(value, "week_length");
        } else if (key.rfind("week.", 0) == 0) {
            int w = static_cast<int>(parse_long(key.substr(5), "week index"));
            std::set<std::string> vids;
            for (const auto& v : split(value, ',')) {
                std::string id = trim(v);
                if (!id.empty()) vids.insert(id);
            }
            s.scheduled_videos[w] = std::move(vids);
        } else {
            throw MalformedRow("schedule line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    s.validate();
    return s;
}

CourseSchedule CourseSchedule::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return load(in);
}

void CourseSchedule::save(std::ostream& out) const {
    out << "num_weeks = " << num_weeks << '\n';
    out << "week_length = " << format_double(week_length) << '\n';
    for (const auto& [week, vids] : scheduled_videos) {
        out << "week." << week << " = ";
        bool first = true;
        for (const auto& v : vids) {
            if (!first) out << ", ";
            out << v;
            first = false;
        }
        out << '\n';
    }
}

void CourseSchedule::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    save(out);
}

std::span<const Event> EventLog::events_of(const std::string& id) const {
    auto it = student_index.find(id);
    if (it == student_index.end()) return {};
    return std::span<const Event>(events.data() + it->second.begin,
                                  it->second.end - it->second.begin);
}

EventLog EventLog::from_events(std::vector<Event> events, size_t dropped) {
    EventLog log;
    log.events = std::move(events);
    log.dropped_rows = dropped;
    // Stable sort: simultaneous events keep their input order.
    std::stable_sort(log.events.begin(), log.events.end(), [](const Event& a, const Event& b) {
        if (a.student_id != b.student_id) return a.student_id < b.student_id;
        return a.timestamp < b.timestamp;
    });
    size_t i = 0;
    while (i < log.events.size()) {
        size_t j = i;
        while (j < log.events.size() && log.events[j].student_id == log.events[i].student_id) ++j;
        log.student_ids.push_back(log.events[i].student_id);
        log.student_index[log.events[i].student_id] = StudentSlice{i, j};
        i = j;
    }
    return log;
}

EventLog parse_events(std::istream& source, const CourseSchedule& schedule) {
    schedule.validate();
    csv::Reader reader(source);
    auto header = reader.header();
    const std::vector<std::string> expected = {"student_id", "timestamp", "kind", "object_id"};
    if (header != expected) {
        std::string got;
        for (const auto& h : header) got += (got.empty() ? "" : ",") + h;
        throw MalformedRow("event csv: bad header '" + got + "'");
    }

    std::vector<Event> events;
    size_t dropped = 0;
    const double end = schedule.course_end();
    csv::Row row;
    while (reader.next(row)) {
        const std::string where = "event csv row " + std::to_string(row.line_number);
        if (row.fields.size() != 4) throw MalformedRow(where + ": expected 4 columns");
        Event e;
        e.student_id = trim(row.fields[0]);
        if (e.student_id.empty()) throw MalformedRow(where + ": empty student_id");
        e.timestamp = parse_double(row.fields[1], where);
        if (!std::isfinite(e.timestamp) || e.timestamp < 0)
            throw MalformedRow(where + ": negative or non-finite timestamp");
        auto kind = kind_from_string(trim(row.fields[2]));
        if (!kind) throw MalformedRow(where + ": unknown kind '" + trim(row.fields[2]) + "'");
        e.kind = *kind;
        e.object_id = trim(row.fields[3]);
        if (e.timestamp >= end) {
            ++dropped;
            continue;
        }
        events.push_back(std::move(e));
    }
    if (events.empty()) throw EmptyLog("event csv: no valid rows");
    return EventLog::from_events(std::move(events), dropped);
}

EventLog parse_events_file(const std::string& path, const CourseSchedule& schedule) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_events(in, schedule);
}

void serialize_events(const EventLog& log, std::ostream& out) {
    csv::write_row(out, {"student_id", "timestamp", "kind", "object_id"});
    for (const auto& e : log.events)
        csv::write_row(out, {e.student_id, format_double(e.timestamp), to_string(e.kind), e.object_id});
}

int assign_week(double timestamp, const CourseSchedule& schedule) {
    if (!(timestamp >= 0) || timestamp >= schedule.course_end())
        throw OutOfRange("assign_week: timestamp " + format_double(timestamp) +
                         " outside [0, " + format_double(schedule.course_end()) + ")");
    return static_cast<int>(std::floor(timestamp / schedule.week_length));
}

std::vector<Session> sessionize(std::span<const Event> events, double session_timeout) {
    std::vector<Session> sessions;
    if (events.empty()) return sessions;
    Session current;
    current.student_id = events[0].student_id;
    current.start = events[0].timestamp;
    current.end = events[0].timestamp;
    current.event_indices.push_back(0);
    for (size_t i = 1; i < events.size(); ++i) {
        if (events[i].timestamp < events[i - 1].timestamp)
            throw OutOfRange("sessionize: events not sorted by timestamp");
        double gap = events[i].timestamp - events[i - 1].timestamp;
        if (gap > session_timeout) {
            sessions.push_back(std::move(current));
            current = Session{};
            current.student_id = events[i].student_id;
            current.start = events[i].timestamp;
        }
        current.end = events[i].timestamp;
        current.event_indices.push_back(i);
    }
    sessions.push_back(std::move(current));
    return sessions;
}

std::unordered_map<std::string, std::vector<Session>>
sessionize_all(const EventLog& log, double session_timeout, int threads) {
    std::unordered_map<std::string, std::vector<Session>> out;
    std::vector<std::vector<Session>> per_student(log.student_ids.size());
    parallel_for(log.student_ids.size(), threads, [&](size_t i) {
        per_student[i] = sessionize(log.events_of(log.student_ids[i]), session_timeout);
    });
    for (size_t i = 0; i < log.student_ids.size(); ++i)
        out[log.student_ids[i]] = std::move(per_student[i]);
    return out;
}

std::map<std::string, int> parse_labels(std::istream& in) {
    csv::Reader reader(in);
    auto header = reader.header();
    if (header != std::vector<std::string>{"student_id", "passed"})
        throw MalformedRow("labels csv: expected header student_id,passed");
    std::map<std::string, int> labels;
    csv::Row row;
    while (reader.next(row)) {
        const std::string where = "labels csv row " + std::to_string(row.line_number);
        if (row.fields.size() != 2) throw MalformedRow(where + ": expected 2 columns");
        long v = parse_long(row.fields[1], where);
        if (v != 0 && v != 1) throw MalformedRow(where + ": passed must be 0 or 1");
        labels[trim(row.fields[0])] = static_cast<int>(v);
    }
    return labels;
}

std::map<std::string, int> parse_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_labels(in);
}

void serialize_labels(const std::map<std::string, int>& labels, std::ostream& out) {
    csv::write_row(out, {"student_id", "passed"});
    for (const auto& [id, y] : labels) csv::write_row(out, {id, std::to_string(y)});
}

} // namespace i3c::ingest
