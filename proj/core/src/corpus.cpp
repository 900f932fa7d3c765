#include "sitrec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sitrec/error.hpp"
#include "sitrec/log.hpp"
#include "sitrec/text.hpp"

namespace sitrec::corpus {

using nlohmann::json;

int CourseSchedule::week_at(Timestamp t) const {
  auto it = std::upper_bound(week_boundaries.begin(), week_boundaries.end(), t);
  if (it == week_boundaries.begin()) return 0;
  return static_cast<int>(std::distance(week_boundaries.begin(), it)) - 1;
}

void CourseSchedule::validate() const {
  if (week_boundaries.empty()) {
    throw IntegrityError("course schedule has no weeks");
  }
  if (week_docs.size() != week_boundaries.size()) {
    throw IntegrityError("course schedule: week_docs and week_boundaries differ in length");
  }
  for (std::size_t i = 1; i < week_boundaries.size(); ++i) {
    if (!(week_boundaries[i] > week_boundaries[i - 1])) {
      throw IntegrityError("course schedule: week boundaries must strictly increase (week " +
                           std::to_string(i) + ")");
    }
  }
}

void SplitSpec::validate() const {
  if (!(train_end > 0.0) || !(test_end > train_end)) {
    throw ConfigError("split requires 0 < train_end < test_end");
  }
}

Dataset::Dataset(std::vector<PostEvent> events, int num_students,
                 int num_threads, CourseSchedule course, IdMap ids)
    : Dataset(std::move(events), num_students, num_threads, std::move(course),
              std::move(ids), false) {}

Dataset::Dataset(std::vector<PostEvent> events, int num_students,
                 int num_threads, CourseSchedule course, IdMap ids,
                 bool allow_dangling_parents)
    : events_(std::move(events)),
      num_students_(num_students),
      num_threads_(num_threads),
      course_(std::move(course)),
      ids_(std::move(ids)) {
  build(allow_dangling_parents);
}

void Dataset::build(bool allow_dangling_parents) {
  if (num_students_ < 1 || num_threads_ < 1) {
    throw IntegrityError("dataset needs at least one student and one thread");
  }
  course_.validate();
  std::stable_sort(events_.begin(), events_.end(),
                   [](const PostEvent& a, const PostEvent& b) {
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.post_id < b.post_id;
                   });

  post_index_.clear();
  post_index_.reserve(events_.size());
  by_thread_.assign(num_threads_, {});
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if (!(e.timestamp >= 0.0) || !std::isfinite(e.timestamp)) {
      throw IntegrityError("post " + std::to_string(e.post_id) +
                           ": timestamp must be finite and non-negative");
    }
    if (e.student < 0 || e.student >= num_students_) {
      throw IntegrityError("post " + std::to_string(e.post_id) +
                           ": student index out of range");
    }
    if (e.thread < 0 || e.thread >= num_threads_) {
      throw IntegrityError("post " + std::to_string(e.post_id) +
                           ": thread index out of range");
    }
    post_index_.emplace_back(e.post_id, i);
    by_thread_[e.thread].push_back(i);
  }
  std::sort(post_index_.begin(), post_index_.end());
  for (std::size_t i = 1; i < post_index_.size(); ++i) {
    if (post_index_[i].first == post_index_[i - 1].first) {
      throw IntegrityError("duplicate post_id " +
                           std::to_string(post_index_[i].first));
    }
  }

  for (const auto& e : events_) {
    if (!e.parent_post_id) continue;
    const PostEvent* parent = find_post(*e.parent_post_id);
    if (parent == nullptr) {
      if (allow_dangling_parents) continue;
      throw IntegrityError("post " + std::to_string(e.post_id) +
                           " replies to missing post " +
                           std::to_string(*e.parent_post_id));
    }
    if (parent->thread != e.thread) {
      throw IntegrityError("post " + std::to_string(e.post_id) +
                           " replies to post " + std::to_string(parent->post_id) +
                           " in a different thread");
    }
    if (!(parent->timestamp < e.timestamp)) {
      throw IntegrityError("post " + std::to_string(e.post_id) +
                           " replies to post " + std::to_string(parent->post_id) +
                           " that is not strictly earlier");
    }
  }
}

std::span<const std::size_t> Dataset::thread_events(ThreadId thread) const {
  if (thread < 0 || thread >= num_threads_) return {};
  return by_thread_[thread];
}

const PostEvent* Dataset::find_post(PostId id) const {
  auto it = std::lower_bound(
      post_index_.begin(), post_index_.end(), id,
      [](const std::pair<PostId, std::size_t>& a, PostId b) { return a.first < b; });
  if (it == post_index_.end() || it->first != id) return nullptr;
  return &events_[it->second];
}

namespace {

std::int64_t require_int(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw ParseError(std::string("missing field '") + key + "'", line);
  }
  if (!it->is_number_integer()) {
    throw ParseError(std::string("field '") + key + "' must be an integer", line);
  }
  return it->get<std::int64_t>();
}

double require_number(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw ParseError(std::string("missing field '") + key + "'", line);
  }
  if (!it->is_number()) {
    throw ParseError(std::string("field '") + key + "' must be a number", line);
  }
  return it->get<double>();
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(std::string("missing or non-string field '") + key + "'", line);
  }
  return it->get<std::string>();
}

CourseSchedule read_schedule(const std::filesystem::path& path,
                             const text::Preprocessor& pre) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open schedule file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  if (!doc.is_object() || !doc.contains("weeks") || !doc["weeks"].is_array()) {
    throw ParseError(path.string() + ": expected object with a 'weeks' array", 0);
  }
  CourseSchedule course;
  std::size_t i = 0;
  for (const auto& week : doc["weeks"]) {
    ++i;
    if (!week.is_object()) throw ParseError("week entry must be an object", i);
    course.week_boundaries.push_back(require_number(week, "start_ts", i));
    course.week_docs.push_back(pre(require_string(week, "text", i)));
  }
  course.validate();
  return course;
}

struct RawPost {
  PostId post_id;
  std::int64_t student;
  std::int64_t thread;
  Timestamp timestamp;
  std::string text;
  std::optional<PostId> parent;
};

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

Dataset ingest_jsonl(const std::filesystem::path& posts_path,
                     const std::filesystem::path& schedule_path) {
  return ingest_jsonl(posts_path, schedule_path, text::Preprocessor::standard());
}

Dataset ingest_jsonl(const std::filesystem::path& posts_path,
                     const std::filesystem::path& schedule_path,
                     const text::Preprocessor& pre) {
  std::ifstream in(posts_path);
  if (!in) throw Error("cannot open post file " + posts_path.string());

  std::vector<RawPost> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    RawPost p;
    p.post_id = require_int(obj, "post_id", line_no);
    p.student = require_int(obj, "student_id", line_no);
    p.thread = require_int(obj, "thread_id", line_no);
    p.timestamp = require_number(obj, "timestamp", line_no);
    p.text = require_string(obj, "text", line_no);
    if (auto it = obj.find("parent_post_id"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) {
        throw ParseError("field 'parent_post_id' must be an integer", line_no);
      }
      p.parent = it->get<PostId>();
    }
    raw.push_back(std::move(p));
  }
  if (raw.empty()) {
    throw EmptyDatasetError("post file " + posts_path.string() + " contains no posts");
  }

  CourseSchedule course = read_schedule(schedule_path, pre);

  std::map<std::int64_t, int> student_ids;
  std::map<std::int64_t, int> thread_ids;
  for (const auto& p : raw) {
    student_ids.emplace(p.student, 0);
    thread_ids.emplace(p.thread, 0);
  }
  IdMap ids;
  for (auto& [ext, dense] : student_ids) {
    dense = static_cast<int>(ids.students.size());
    ids.students.push_back(ext);
  }
  for (auto& [ext, dense] : thread_ids) {
    dense = static_cast<int>(ids.threads.size());
    ids.threads.push_back(ext);
  }

  std::vector<PostEvent> events;
  events.reserve(raw.size());
  for (auto& p : raw) {
    PostEvent e;
    e.post_id = p.post_id;
    e.student = student_ids.at(p.student);
    e.thread = thread_ids.at(p.thread);
    e.timestamp = p.timestamp;
    e.tokens = pre(p.text);
    e.parent_post_id = p.parent;
    events.push_back(std::move(e));
  }
  const auto num_students = static_cast<int>(ids.students.size());
  const auto num_threads = static_cast<int>(ids.threads.size());
  return Dataset(std::move(events), num_students, num_threads, std::move(course),
                 std::move(ids));
}

void write_jsonl(const Dataset& ds, const std::filesystem::path& posts_path,
                 const std::filesystem::path& schedule_path) {
  const auto& ids = ds.ids();
  auto student_ext = [&](StudentId s) -> std::int64_t {
    return static_cast<std::size_t>(s) < ids.students.size() ? ids.students[s] : s;
  };
  auto thread_ext = [&](ThreadId t) -> std::int64_t {
    return static_cast<std::size_t>(t) < ids.threads.size() ? ids.threads[t] : t;
  };

  std::ofstream out(posts_path);
  if (!out) throw Error("cannot write " + posts_path.string());
  for (const auto& e : ds.events()) {
    json obj = {{"post_id", e.post_id},
                {"student_id", student_ext(e.student)},
                {"thread_id", thread_ext(e.thread)},
                {"timestamp", e.timestamp},
                {"text", join_tokens(e.tokens)}};
    if (e.parent_post_id) obj["parent_post_id"] = *e.parent_post_id;
    out << obj.dump() << '\n';
  }

  json weeks = json::array();
  const auto& course = ds.course();
  for (int i = 0; i < course.num_weeks(); ++i) {
    weeks.push_back({{"start_ts", course.week_boundaries[i]},
                     {"text", join_tokens(course.week_docs[i])}});
  }
  std::ofstream sched(schedule_path);
  if (!sched) throw Error("cannot write " + schedule_path.string());
  sched << json{{"weeks", weeks}}.dump(2) << '\n';
}

void write_id_map(const IdMap& ids, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "external_id,dense_id,kind\n";
  for (std::size_t i = 0; i < ids.students.size(); ++i) {
    out << ids.students[i] << ',' << i << ",student\n";
  }
  for (std::size_t i = 0; i < ids.threads.size(); ++i) {
    out << ids.threads[i] << ',' << i << ",thread\n";
  }
}

TimeSplit split_by_time(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  TimeSplit split{
      ds.filter([&](const PostEvent& e) { return e.timestamp < spec.train_end; }),
      ds.filter([&](const PostEvent& e) {
        return e.timestamp >= spec.train_end && e.timestamp < spec.test_end;
      })};
  if (split.train.empty()) {
    throw EmptyDatasetError("no events before train_end; the model cannot be fit");
  }
  if (split.test.empty()) {
    std::ostringstream msg;
    msg << "test window [" << spec.train_end << ", " << spec.test_end
        << ") contains no events";
    log::warn(msg.str());
  }
  return split;
}

ReplyHistory reply_history(const Dataset& ds, StudentId student,
                           ThreadId thread, Timestamp t_end) {
  ReplyHistory h;
  const auto& events = ds.events();
  const auto positions = ds.thread_events(thread);
  for (std::size_t pos : positions) {
    const auto& e = events[pos];
    if (e.timestamp >= t_end) break;
    if (e.student == student) h.last_own_post = e.timestamp;
  }
  if (!h.last_own_post) return h;

  const Timestamp t_up = *h.last_own_post;
  for (std::size_t pos : positions) {
    const auto& e = events[pos];
    if (e.timestamp >= t_end) break;
    if (e.timestamp <= t_up || e.student == student) continue;
    bool is_reply_to_student = false;
    if (e.parent_post_id) {
      const PostEvent* parent = ds.find_post(*e.parent_post_id);
      is_reply_to_student = parent != nullptr && parent->student == student &&
                            parent->thread == thread;
    }
    (is_reply_to_student ? h.reply_times : h.post_times).push_back(e.timestamp);
  }
  return h;
}

}  // namespace sitrec::corpus
