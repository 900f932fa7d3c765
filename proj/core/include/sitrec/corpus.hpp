#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sitrec::text {
class Preprocessor;
}

namespace sitrec::corpus {

using StudentId = int;
using ThreadId = int;
using PostId = std::int64_t;
// Seconds since course start.
using Timestamp = double;

inline constexpr Timestamp kSecondsPerDay = 86400.0;
inline constexpr Timestamp kSecondsPerWeek = 7.0 * kSecondsPerDay;

struct PostEvent {
  PostId post_id = 0;
  StudentId student = 0;
  ThreadId thread = 0;
  Timestamp timestamp = 0.0;
  std::vector<std::string> tokens;
  std::optional<PostId> parent_post_id;

  bool operator==(const PostEvent&) const = default;
};

struct CourseSchedule {
  std::vector<std::vector<std::string>> week_docs;
  std::vector<Timestamp> week_boundaries;

  int num_weeks() const { return static_cast<int>(week_boundaries.size()); }
  // Index of the week containing `t`; times before the first boundary map to
  // week 0.
  int week_at(Timestamp t) const;
  // Throws IntegrityError unless S >= 1, sizes agree and boundaries strictly
  // increase.
  void validate() const;

  bool operator==(const CourseSchedule&) const = default;
};

// Dense index -> external id, per entity kind.
struct IdMap {
  std::vector<std::int64_t> students;
  std::vector<std::int64_t> threads;

  bool operator==(const IdMap&) const = default;
};

struct SplitSpec {
  Timestamp train_end = 0.0;
  Timestamp test_end = 0.0;

  void validate() const;
};

// Chronologically ordered post log over a fixed student/thread registry.
// Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  // Sorts `events` by (timestamp, post_id) and checks every invariant:
  // index ranges, unique post ids, non-negative timestamps, reply links that
  // point to a strictly earlier post in the same thread.
  Dataset(std::vector<PostEvent> events, int num_students, int num_threads,
          CourseSchedule course, IdMap ids = {});

  const std::vector<PostEvent>& events() const { return events_; }
  int num_students() const { return num_students_; }
  int num_threads() const { return num_threads_; }
  const CourseSchedule& course() const { return course_; }
  const IdMap& ids() const { return ids_; }
  bool empty() const { return events_.empty(); }
  std::size_t size() const { return events_.size(); }

  // Positions into events() of every post on `thread`, chronological.
  std::span<const std::size_t> thread_events(ThreadId thread) const;
  const PostEvent* find_post(PostId id) const;

  // Keeps events matching `keep`, sharing this dataset's registry.
  template <typename Pred>
  Dataset filter(Pred keep) const {
    std::vector<PostEvent> kept;
    for (const auto& e : events_) {
      if (keep(e)) kept.push_back(e);
    }
    return Dataset(std::move(kept), num_students_, num_threads_, course_, ids_,
                   /*allow_dangling_parents=*/true);
  }

  bool operator==(const Dataset& other) const {
    return events_ == other.events_ && num_students_ == other.num_students_ &&
           num_threads_ == other.num_threads_ && course_ == other.course_ &&
           ids_ == other.ids_;
  }

 private:
  Dataset(std::vector<PostEvent> events, int num_students, int num_threads,
          CourseSchedule course, IdMap ids, bool allow_dangling_parents);
  void build(bool allow_dangling_parents);

  std::vector<PostEvent> events_;
  int num_students_ = 0;
  int num_threads_ = 0;
  CourseSchedule course_;
  IdMap ids_;
  std::vector<std::vector<std::size_t>> by_thread_;
  std::vector<std::pair<PostId, std::size_t>> post_index_;
};

// Reads a JSON-lines post file and a course schedule JSON file. Student and
// thread ids are re-indexed densely in ascending external-id order; raw text
// goes through `pre`.
Dataset ingest_jsonl(const std::filesystem::path& posts_path,
                     const std::filesystem::path& schedule_path,
                     const text::Preprocessor& pre);
Dataset ingest_jsonl(const std::filesystem::path& posts_path,
                     const std::filesystem::path& schedule_path);

// Writes the two input files back out, using external ids and tokens joined
// by single spaces as text.
void write_jsonl(const Dataset& ds, const std::filesystem::path& posts_path,
                 const std::filesystem::path& schedule_path);
// CSV with header `external_id,dense_id,kind`.
void write_id_map(const IdMap& ids, const std::filesystem::path& path);

struct TimeSplit {
  Dataset train;
  Dataset test;
};

// train: t < T1; test: T1 <= t < T2. Throws EmptyDatasetError when the
// training side is empty; an empty test side only logs a warning.
TimeSplit split_by_time(const Dataset& ds, const SplitSpec& spec);

struct ReplyHistory {
  std::vector<Timestamp> post_times;
  std::vector<Timestamp> reply_times;
  // Last time the student posted on the thread before t_end.
  std::optional<Timestamp> last_own_post;
};

// Activity by other students on `thread` strictly between the student's last
// own post there and `t_end`. A reply to one of the student's posts on the
// thread lands in reply_times only.
ReplyHistory reply_history(const Dataset& ds, StudentId student,
                           ThreadId thread, Timestamp t_end);

}  // namespace sitrec::corpus
