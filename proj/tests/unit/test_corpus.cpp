#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sitrec/corpus.hpp"
#include "sitrec/error.hpp"

namespace sitrec {
namespace {

using testing::Ev;
using testing::make_dataset;
using testing::TempDir;

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kSchedule = R"({"weeks": [{"start_ts": 0, "text": "Sorting algorithms"},
                                     {"start_ts": 604800, "text": "Graph search"}]})";

TEST(Ingest, ThreeLinesGiveThreeEventsAndDenseIds) {
  TempDir dir("ingest");
  write_file(dir / "p.jsonl",
             R"({"post_id": 7, "student_id": 100, "thread_id": 55, "timestamp": 30, "text": "Merge sort question"}
{"post_id": 8, "student_id": 200, "thread_id": 55, "timestamp": 40, "text": "Use recursion", "parent_post_id": 7}
{"post_id": 9, "student_id": 100, "thread_id": 12, "timestamp": 10, "text": "Graphs?"}
)");
  write_file(dir / "s.json", kSchedule);
  const auto ds = corpus::ingest_jsonl(dir / "p.jsonl", dir / "s.json");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.num_students(), 2);
  EXPECT_EQ(ds.num_threads(), 2);
  EXPECT_EQ(ds.ids().students, (std::vector<std::int64_t>{100, 200}));
  EXPECT_EQ(ds.ids().threads, (std::vector<std::int64_t>{12, 55}));
  // Sorted by time; external ids re-indexed in ascending order.
  EXPECT_EQ(ds.events()[0].post_id, 9);
  EXPECT_EQ(ds.events()[0].thread, 0);
  EXPECT_EQ(ds.events()[2].parent_post_id, 7);
  EXPECT_EQ(ds.events()[1].tokens, (std::vector<std::string>{"merg", "sort", "question"}));
  EXPECT_EQ(ds.course().num_weeks(), 2);
  EXPECT_EQ(ds.course().week_docs[1], (std::vector<std::string>{"graph", "search"}));
}

TEST(Ingest, MissingThreadIdNamesTheLine) {
  TempDir dir("ingest");
  write_file(dir / "p.jsonl",
             R"({"post_id": 1, "student_id": 1, "thread_id": 1, "timestamp": 1, "text": "a"}
{"post_id": 2, "student_id": 1, "timestamp": 2, "text": "b"}
)");
  write_file(dir / "s.json", kSchedule);
  try {
    corpus::ingest_jsonl(dir / "p.jsonl", dir / "s.json");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("thread_id"), std::string::npos);
  }
}

TEST(Ingest, MalformedJsonIsAParseError) {
  TempDir dir("ingest");
  write_file(dir / "p.jsonl", "{not json\n");
  write_file(dir / "s.json", kSchedule);
  EXPECT_THROW(corpus::ingest_jsonl(dir / "p.jsonl", dir / "s.json"), ParseError);
}

TEST(Ingest, ReplyAcrossThreadsIsAnIntegrityError) {
  TempDir dir("ingest");
  write_file(dir / "p.jsonl",
             R"({"post_id": 1, "student_id": 1, "thread_id": 1, "timestamp": 1, "text": "a"}
{"post_id": 2, "student_id": 2, "thread_id": 2, "timestamp": 2, "text": "b", "parent_post_id": 1}
)");
  write_file(dir / "s.json", kSchedule);
  EXPECT_THROW(corpus::ingest_jsonl(dir / "p.jsonl", dir / "s.json"), IntegrityError);
}

TEST(Ingest, ReplyToALaterOrMissingPostIsAnIntegrityError) {
  EXPECT_THROW(make_dataset({{0, 0, 5.0, 2}, {1, 0, 6.0}}, 2, 1), IntegrityError);
  EXPECT_THROW(make_dataset({{0, 0, 5.0, 99}}, 1, 1), IntegrityError);
  // Same timestamp is not strictly earlier.
  EXPECT_THROW(make_dataset({{0, 0, 5.0}, {1, 0, 5.0, 1}}, 2, 1), IntegrityError);
}

TEST(Ingest, EmptyFileIsAnEmptyDatasetError) {
  TempDir dir("ingest");
  write_file(dir / "p.jsonl", "\n\n");
  write_file(dir / "s.json", kSchedule);
  EXPECT_THROW(corpus::ingest_jsonl(dir / "p.jsonl", dir / "s.json"), EmptyDatasetError);
}

TEST(Ingest, RoundTripsThroughWriteJsonl) {
  TempDir dir("roundtrip");
  write_file(dir / "p.jsonl",
             R"({"post_id": 3, "student_id": 5, "thread_id": 9, "timestamp": 12.5, "text": "Dynamic programming tables"}
{"post_id": 4, "student_id": 6, "thread_id": 9, "timestamp": 13, "text": "Memoization works", "parent_post_id": 3}
{"post_id": 5, "student_id": 5, "thread_id": 2, "timestamp": 700000, "text": "Dijkstra and heaps"}
)");
  write_file(dir / "s.json", kSchedule);
  const auto a = corpus::ingest_jsonl(dir / "p.jsonl", dir / "s.json");
  corpus::write_jsonl(a, dir / "p2.jsonl", dir / "s2.json");
  const auto b = corpus::ingest_jsonl(dir / "p2.jsonl", dir / "s2.json");
  EXPECT_EQ(a, b);
}

TEST(Ingest, IdMapCsvHasHeaderAndOneRowPerEntity) {
  TempDir dir("idmap");
  corpus::IdMap ids{{10, 20}, {7}};
  corpus::write_id_map(ids, dir / "ids.csv");
  std::ifstream in(dir / "ids.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "external_id,dense_id,kind");
  EXPECT_EQ(lines[1], "10,0,student");
  EXPECT_EQ(lines[3], "7,0,thread");
}

TEST(Dataset, SortsByTimeThenPostId) {
  std::vector<corpus::PostEvent> evs(3);
  evs[0] = {5, 0, 0, 2.0, {}, std::nullopt};
  evs[1] = {3, 0, 0, 2.0, {}, std::nullopt};
  evs[2] = {9, 0, 0, 1.0, {}, std::nullopt};
  corpus::Dataset ds(evs, 1, 1, testing::one_week_course());
  EXPECT_EQ(ds.events()[0].post_id, 9);
  EXPECT_EQ(ds.events()[1].post_id, 3);
  EXPECT_EQ(ds.events()[2].post_id, 5);
}

TEST(Dataset, RejectsBadIndicesAndTimes) {
  EXPECT_THROW(make_dataset({{2, 0, 1.0}}, 2, 1), IntegrityError);
  EXPECT_THROW(make_dataset({{0, 0, -1.0}}, 1, 1), IntegrityError);
  EXPECT_THROW(make_dataset({}, 0, 1), IntegrityError);
  std::vector<corpus::PostEvent> dup(2);
  dup[0].post_id = dup[1].post_id = 4;
  dup[1].timestamp = 1.0;
  EXPECT_THROW(corpus::Dataset(dup, 1, 1, testing::one_week_course()), IntegrityError);
}

TEST(Schedule, WeekAtAndValidation) {
  corpus::CourseSchedule c{{{"a"}, {"b"}, {"c"}}, {10.0, 20.0, 30.0}};
  EXPECT_EQ(c.week_at(0.0), 0);
  EXPECT_EQ(c.week_at(19.9), 0);
  EXPECT_EQ(c.week_at(20.0), 1);
  EXPECT_EQ(c.week_at(1e9), 2);
  corpus::CourseSchedule bad{{{"a"}, {"b"}}, {5.0, 5.0}};
  EXPECT_THROW(bad.validate(), IntegrityError);
  EXPECT_THROW((corpus::CourseSchedule{{}, {}}).validate(), IntegrityError);
}

TEST(Split, ThresholdFilter) {
  const auto ds = make_dataset({{0, 0, 1.0}, {0, 0, 5.0}, {0, 0, 9.0}}, 1, 1);
  const auto s = corpus::split_by_time(ds, {6.0, 10.0});
  ASSERT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.train.events()[1].timestamp, 5.0);
  ASSERT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.test.events()[0].timestamp, 9.0);
  EXPECT_EQ(s.train.num_students(), ds.num_students());
  EXPECT_EQ(s.test.num_threads(), ds.num_threads());
}

TEST(Split, T1BeyondLastEventGivesEmptyTest) {
  const auto ds = make_dataset({{0, 0, 1.0}, {0, 0, 5.0}}, 1, 1);
  const auto s = corpus::split_by_time(ds, {100.0, 200.0});
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_TRUE(s.test.empty());
}

TEST(Split, EmptyTrainAndBadSpecThrow) {
  const auto ds = make_dataset({{0, 0, 50.0}}, 1, 1);
  EXPECT_THROW(corpus::split_by_time(ds, {10.0, 100.0}), EmptyDatasetError);
  EXPECT_THROW(corpus::split_by_time(ds, {100.0, 100.0}), ConfigError);
  EXPECT_THROW(corpus::split_by_time(ds, {0.0, 100.0}), ConfigError);
}

TEST(Split, PartitionsEventsBelowT2OnRandomLogs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto evs = testing::random_events(rng, 10, 3, 3);
    corpus::Dataset ds(evs, 3, 3, testing::one_week_course());
    const double last = ds.events().back().timestamp;
    std::uniform_real_distribution<double> pick(ds.events().front().timestamp + 1e-9, last + 5);
    const double t1 = pick(rng);
    const double t2 = t1 + std::uniform_real_distribution<double>(0.1, 30.0)(rng);
    const auto s = corpus::split_by_time(ds, {t1, t2});
    std::size_t below_t1 = 0, window = 0;
    for (const auto& e : ds.events()) {
      below_t1 += e.timestamp < t1;
      window += e.timestamp >= t1 && e.timestamp < t2;
    }
    EXPECT_EQ(s.train.size(), below_t1);
    EXPECT_EQ(s.test.size(), window);
    for (const auto& e : s.train.events()) EXPECT_LT(e.timestamp, t1);
    for (const auto& e : s.test.events()) {
      EXPECT_GE(e.timestamp, t1);
      EXPECT_LT(e.timestamp, t2);
    }
  }
}

TEST(ReplyHistory, NeverPostedIsEmpty) {
  const auto ds = make_dataset({{1, 0, 1.0}, {1, 0, 2.0}}, 2, 1);
  const auto h = corpus::reply_history(ds, 0, 0, 10.0);
  EXPECT_FALSE(h.last_own_post);
  EXPECT_TRUE(h.post_times.empty());
  EXPECT_TRUE(h.reply_times.empty());
}

TEST(ReplyHistory, PlainPostsAndRepliesAreDisjoint) {
  // u=0 posts at 2; a plain post at 3; a reply to u's post at 4.
  const auto ds = make_dataset({{0, 0, 2.0}, {1, 0, 3.0}, {2, 0, 4.0, 1}}, 3, 1);
  const auto h = corpus::reply_history(ds, 0, 0, 5.0);
  ASSERT_TRUE(h.last_own_post);
  EXPECT_EQ(*h.last_own_post, 2.0);
  EXPECT_EQ(h.post_times, (std::vector<double>{3.0}));
  EXPECT_EQ(h.reply_times, (std::vector<double>{4.0}));
}

TEST(ReplyHistory, WindowStartsAtLastOwnPost) {
  const auto ds = make_dataset({{0, 0, 2.0}, {1, 0, 4.0}, {0, 0, 6.0}}, 2, 1);
  const auto h = corpus::reply_history(ds, 0, 0, 8.0);
  EXPECT_EQ(*h.last_own_post, 6.0);
  EXPECT_TRUE(h.post_times.empty());
  EXPECT_TRUE(h.reply_times.empty());
}

TEST(ReplyHistory, ExcludesEventsAtOrAfterTEnd) {
  const auto ds = make_dataset({{0, 0, 2.0}, {1, 0, 5.0}, {1, 0, 7.0}}, 2, 1);
  const auto h = corpus::reply_history(ds, 0, 0, 5.0);
  EXPECT_TRUE(h.post_times.empty());
  EXPECT_EQ(corpus::reply_history(ds, 0, 0, 7.5).post_times, (std::vector<double>{5.0, 7.0}));
}

TEST(ReplyHistory, TimesStayInsideTheOpenWindowOnRandomLogs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto evs = testing::random_events(rng, 40, 4, 2);
    // Random replies to earlier posts on the same thread.
    for (std::size_t i = 1; i < evs.size(); ++i) {
      for (std::size_t j = i; j-- > 0;) {
        if (evs[j].thread == evs[i].thread && evs[j].timestamp < evs[i].timestamp &&
            rng() % 3 == 0) {
          evs[i].parent_post_id = evs[j].post_id;
          break;
        }
      }
    }
    corpus::Dataset ds(evs, 4, 2, testing::one_week_course());
    const double t_end = ds.events()[20].timestamp;
    for (int u = 0; u < 4; ++u) {
      for (int p = 0; p < 2; ++p) {
        const auto h = corpus::reply_history(ds, u, p, t_end);
        if (!h.last_own_post) {
          EXPECT_TRUE(h.post_times.empty() && h.reply_times.empty());
          continue;
        }
        std::size_t expected_total = 0;
        for (const auto& e : ds.events()) {
          if (e.thread == p && e.student != u && e.timestamp > *h.last_own_post &&
              e.timestamp < t_end) {
            ++expected_total;
          }
        }
        EXPECT_EQ(h.post_times.size() + h.reply_times.size(), expected_total);
        for (double t : h.post_times) {
          EXPECT_GT(t, *h.last_own_post);
          EXPECT_LT(t, t_end);
        }
        for (double t : h.reply_times) {
          EXPECT_GT(t, *h.last_own_post);
          EXPECT_LT(t, t_end);
        }
      }
    }
  }
}

}  // namespace
}  // namespace sitrec
