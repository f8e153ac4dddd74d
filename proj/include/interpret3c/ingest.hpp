#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace i3c::ingest {

enum class EventKind {
    VideoLoad,
    VideoPlay,
    VideoPause,
    VideoSeek,
    VideoStop,
    ProblemView,
    ProblemSubmit,
};

bool is_video(EventKind k);
bool is_problem(EventKind k);
const char* to_string(EventKind k);
std::optional<EventKind> kind_from_string(std::string_view s);

struct Event {
    std::string student_id;
    double timestamp = 0; // seconds since course start
    EventKind kind = EventKind::VideoLoad;
    std::string object_id;
};

struct CourseSchedule {
    int num_weeks = 0;
    double week_length = 604800.0;
    std::map<int, std::set<std::string>> scheduled_videos;

    double course_end() const { return num_weeks * week_length; }
    void validate() const;

    static CourseSchedule load(std::istream& in);
    static CourseSchedule load_file(const std::string& path);
    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
};

struct Session {
    std::string student_id;
    double start = 0;
    double end = 0;
    std::vector<size_t> event_indices; // into the student's own event slice
};

struct StudentSlice {
    size_t begin = 0;
    size_t end = 0;
};

struct EventLog {
    std::vector<Event> events; // sorted by (student_id, timestamp), ties stable
    std::vector<std::string> student_ids;
    std::unordered_map<std::string, StudentSlice> student_index;
    size_t dropped_rows = 0; // timestamps at or past course end

    std::span<const Event> events_of(const std::string& id) const;
    static EventLog from_events(std::vector<Event> events, size_t dropped = 0);
};

EventLog parse_events(std::istream& source, const CourseSchedule& schedule);
EventLog parse_events_file(const std::string& path, const CourseSchedule& schedule);
void serialize_events(const EventLog& log, std::ostream& out);

int assign_week(double timestamp, const CourseSchedule& schedule);

std::vector<Session> sessionize(std::span<const Event> events, double session_timeout);
std::unordered_map<std::string, std::vector<Session>>
sessionize_all(const EventLog& log, double session_timeout, int threads = 1);

// Labels CSV: student_id,passed with passed in {0,1}.
std::map<std::string, int> parse_labels(std::istream& in);
std::map<std::string, int> parse_labels_file(const std::string& path);
void serialize_labels(const std::map<std::string, int>& labels, std::ostream& out);

inline constexpr double kDefaultSessionTimeout = 1800.0;

} // namespace i3c::ingest
