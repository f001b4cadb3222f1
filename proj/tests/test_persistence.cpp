#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "casewright/error.hpp"
#include "casewright/model_json.hpp"
#include "casewright/persistence.hpp"
#include "casewright/runtime.hpp"
#include "testkit.hpp"

using namespace casewright;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           (std::string("cw-persist-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

const char* kModel = R"({"id":"p","caseFile":[{"path":"doc"}],"plan":{"id":"r","children":[
    {"id":"t","kind":"human_task_blocking"},
    {"id":"tm","kind":"timer_listener","duration":2},
    {"id":"ms","kind":"milestone","repetition":true,"entryCriteria":[{"id":"s","on":[{"source":"doc","event":"update"}]}]}]}})";

const Actor kWorker{"w", {}};

void drive(Runtime& rt, const std::string& id) {
  rt.worker_action(id, kWorker, "t", "claim");
  rt.case_file_op(id, kWorker, "create", "doc", json{{"value", 0}});
  for (int i = 1; i <= 4; ++i) rt.case_file_op(id, kWorker, "update", "doc", json{{"value", i}});
  rt.advance_clock(id, 3);
  rt.worker_action(id, kWorker, "t", "complete");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Persistence, RestoreMatchesLive) {
  TempDir dir;
  auto store = std::make_shared<Store>(dir.path);
  Runtime rt(store);
  rt.register_model(kModel);
  const std::string id = rt.create_instance("p", "a");
  drive(rt, id);
  const std::string live = rt.instance(id).canonical_snapshot();
  EXPECT_EQ(store->restore(id).canonical_snapshot(), live);
  EXPECT_EQ(store->restore_from_log(id).canonical_snapshot(), live);
  EXPECT_EQ(store->restore(id).log(), rt.instance(id).log());
}

TEST(Persistence, SnapshotIntervalDoesNotChangeState) {
  std::vector<std::string> finals;
  for (std::uint64_t every : {1u, 5u, 0u}) {
    TempDir dir;
    auto store = std::make_shared<Store>(dir.path);
    Runtime rt(store, RuntimeOptions{every});
    rt.register_model(kModel);
    const std::string id = rt.create_instance("p", "a");
    drive(rt, id);
    if (every == 0) {
      EXPECT_TRUE(store->snapshot_seqs(id).empty());
    } else {
      EXPECT_FALSE(store->snapshot_seqs(id).empty());
    }
    rt.evict_all();
    finals.push_back(rt.instance(id).canonical_snapshot() + "\n" +
                     slurp(dir.path / "instances" / id / "log.jsonl"));
  }
  EXPECT_EQ(finals[0], finals[1]);
  EXPECT_EQ(finals[1], finals[2]);
}

TEST(Persistence, AppendRejectsGaps) {
  TempDir dir;
  Store store(dir.path);
  const CaseModel m = parse_model(kModel);
  store.put_model(m);
  store.create_instance("a", m, std::nullopt);
  Event e{1, "r", "create", "engine", 0, nullptr};
  store.append_event("a", e);
  e.seq = 3;
  try {
    store.append_event("a", e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::sequence_gap);
  }
  EXPECT_EQ(store.last_seq("a"), 1u);
}

TEST(Persistence, TamperedLogIsCorrupt) {
  TempDir dir;
  auto store = std::make_shared<Store>(dir.path);
  {
    Runtime rt(store);
    rt.register_model(kModel);
    drive(rt, rt.create_instance("p", "a"));
  }
  const auto log = dir.path / "instances" / "a" / "log.jsonl";
  std::string text = slurp(log);
  const auto pos = text.find("\"claim\"");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 7, "\"enable\"");
  std::ofstream(log, std::ios::binary | std::ios::trunc) << text;
  try {
    store->restore_from_log("a");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::corrupt_log);
  }

  std::ofstream(log, std::ios::binary | std::ios::app) << "{not json\n";
  try {
    store->read_log("a");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::corrupt_log);
  }
}

TEST(Persistence, IdempotencySurvivesRestart) {
  TempDir dir;
  auto store = std::make_shared<Store>(dir.path);
  int calls = 0;
  {
    Runtime rt(store);
    rt.register_model(kModel);
    rt.create_instance("p", "a");
    auto first = rt.idempotent("a", "k1", [&] { ++calls; return json{{"n", calls}}; });
    auto second = rt.idempotent("a", "k1", [&] { ++calls; return json{{"n", calls}}; });
    EXPECT_EQ(first, second);
  }
  Runtime again(store);
  auto third = again.idempotent("a", "k1", [&] { ++calls; return json{{"n", calls}}; });
  EXPECT_EQ(third, json({{"n", 1}}));
  EXPECT_EQ(calls, 1);
}

TEST(Persistence, ReplayDeterminismOverCorpus) {
  auto r = testkit::check_replay_determinism();
  EXPECT_TRUE(r.ok) << r.detail;
}
