#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sitrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point behind the `sitrec` binary. `args` excludes the program name.
// Returns the process exit code; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// File names inside a dataset directory.
inline constexpr const char* kPostsFile = "posts.jsonl";
inline constexpr const char* kScheduleFile = "schedule.json";
// File names inside a topic directory.
inline constexpr const char* kLdaFile = "lda.csv";
inline constexpr const char* kCourseLdaFile = "course_lda.csv";
inline constexpr const char* kVocabFile = "vocab.tsv";
inline constexpr const char* kCourseTopicsFile = "course_topics.csv";
inline constexpr const char* kPostTopicsFile = "post_topics.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

}  // namespace sitrec::cli
