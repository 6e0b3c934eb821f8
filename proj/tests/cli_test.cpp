#include <gtest/gtest.h>

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "arena3d/config.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/export.hpp"
#include "arena3d/simulator.hpp"
#include "arena3d/vote_store.hpp"
#include "support.hpp"

using namespace arena3d;
using namespace arena3d::testing;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

RunResult run_cli(const std::string& args) {
  const std::string cmd = quote(ARENA_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.out += buf.data();
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::vector<Json> read_jsonl(const fs::path& p) {
  std::vector<Json> rows;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(Json::parse(line));
  }
  return rows;
}

/// Four models, one prompt; m3 wins most, carol votes against the crowd and is flagged.
LogState rank_fixture() {
  LogState s = registry_state(4);
  std::int64_t t = 1717200000000;
  int id = 0;
  auto add = [&](const std::string& user, const std::string& a, const std::string& b, Slot w) {
    s.apply(vote("v" + std::to_string(id++), user, a, b, w, t++, "p0"));
  };
  for (int r = 0; r < 5; ++r) {
    add("alice", "m0", "m3", Slot::b);
    add("bob", "m1", "m3", Slot::b);
    add("alice", "m2", "m1", Slot::a);
    add("bob", "m0", "m2", Slot::b);
    add("carol", "m3", "m0", Slot::b);
    add("carol", "m3", "m1", Slot::b);
  }
  s.apply(FlagRecord{"carol", true, 1e-6, {t}});
  return s;
}

SimConfig fraud_sim(std::int64_t inverters) {
  SimConfig cfg;
  for (int i = 0; i < 5; ++i) cfg.models.push_back({.model_id = "m" + std::to_string(i), .true_elo = 1000.0 + 100.0 * i});
  cfg.prompts = 5;
  cfg.honest = {.count = 400};
  cfg.inverter = {.count = inverters, .min_votes = 60};
  cfg.seed = 5;
  return cfg;
}

std::int64_t flagged_count(const std::string& out) {
  std::smatch m;
  if (!std::regex_search(out, m, std::regex(R"(flagged (\d+) of (\d+) users)"))) return -1;
  return std::stoll(m[1]);
}

}  // namespace

TEST(CliRank, EmptyLogPrintsEmptyTable) {
  TempDir dir;
  write_file(dir / "empty.log", "");
  const RunResult r = run_cli("rank --log " + quote((dir / "empty.log").string()) + " --out-dir " +
                              quote(dir.path().string()));
  EXPECT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("Rank"), std::string::npos);
  EXPECT_NE(r.out.find("votes counted: 0 of 0; excluded users: 0"), std::string::npos) << r.out;
  EXPECT_TRUE(read_jsonl(dir / "leaderboard.jsonl").empty());
}

TEST(CliRank, SnapshotMatchesReplayOracle) {
  TempDir dir;
  const LogState state = rank_fixture();
  write_file(dir / "votes.log", serialize(state));
  const RunResult r = run_cli("rank --log " + quote((dir / "votes.log").string()) + " --out-dir " +
                              quote(dir.path().string()));
  ASSERT_EQ(r.exit_code, 0) << r.out;

  const RatingSnapshot oracle = replay_elo(state.votes(), state.flagged_users(), Mode::standard, EloConfig{});
  const auto rows = read_jsonl(dir / "snapshot.jsonl");
  ASSERT_EQ(rows.size(), oracle.ratings.size());
  for (const Json& row : rows) {
    const RatingState& want = oracle.ratings.at(row["model_id"].get<std::string>());
    EXPECT_DOUBLE_EQ(row["elo"].get<double>(), want.elo) << row.dump();
    EXPECT_EQ(row["votes"].get<std::int64_t>(), want.votes);
    EXPECT_EQ(row["wins"].get<std::int64_t>(), want.wins);
  }
  EXPECT_NE(r.out.find("votes counted: 20 of 30; excluded users: 1"), std::string::npos) << r.out;

  const auto board = read_jsonl(dir / "leaderboard.jsonl");
  ASSERT_EQ(board.size(), 4u);
  EXPECT_EQ(board[0]["model_id"], "m3");
  for (std::size_t i = 1; i < board.size(); ++i) EXPECT_GE(board[i - 1]["elo"], board[i]["elo"]);
}

TEST(CliRank, IncludeFlaggedChangesTotals) {
  TempDir dir;
  write_file(dir / "votes.log", serialize(rank_fixture()));
  const std::string log = quote((dir / "votes.log").string());
  const RunResult with = run_cli("rank --log " + log + " --include-flagged --out-dir " + quote(dir.path().string()));
  ASSERT_EQ(with.exit_code, 0) << with.out;
  EXPECT_NE(with.out.find("votes counted: 30 of 30; excluded users: 0"), std::string::npos) << with.out;
}

TEST(CliRank, CorruptLogIsADataError) {
  TempDir dir;
  std::string bytes = serialize(rank_fixture());
  bytes[bytes.size() / 2] = '{';
  write_file(dir / "votes.log", bytes);
  const RunResult r = run_cli("rank --log " + quote((dir / "votes.log").string()) + " --out-dir " +
                              quote(dir.path().string()));
  EXPECT_EQ(r.exit_code, 1) << r.out;
  EXPECT_NE(r.out.find("error:"), std::string::npos);

  const RunResult missing = run_cli("rank --log " + quote((dir / "nope.log").string()));
  EXPECT_EQ(missing.exit_code, 1) << missing.out;
}

TEST(CliRank, RecoverAcceptsTornTail) {
  TempDir dir;
  std::string bytes = serialize(rank_fixture());
  bytes.resize(bytes.rfind('\n', bytes.size() - 2) - 7);
  write_file(dir / "votes.log", bytes);
  const std::string args = "rank --log " + quote((dir / "votes.log").string()) + " --out-dir " +
                           quote(dir.path().string());
  EXPECT_EQ(run_cli(args).exit_code, 1);
  const RunResult r = run_cli(args + " --recover");
  EXPECT_EQ(r.exit_code, 0) << r.out;
}

TEST(CliRank, BadOptionIsAConfigError) {
  TempDir dir;
  write_file(dir / "empty.log", "");
  const std::string log = quote((dir / "empty.log").string());
  EXPECT_EQ(run_cli("rank --log " + log + " --mode sideways").exit_code, 2);
  EXPECT_EQ(run_cli("rank --log " + log + " --k -3").exit_code, 2);
  EXPECT_EQ(run_cli("rank").exit_code, 2);
  EXPECT_EQ(run_cli("").exit_code, 2);
}

TEST(CliFraud, HonestOnlyLogFlagsNobody) {
  TempDir dir;
  write_file(dir / "sim.log", serialize(simulate(fraud_sim(0)).state));
  const RunResult r = run_cli("fraud --log " + quote((dir / "sim.log").string()) + " --out " +
                              quote((dir / "fraud.jsonl").string()));
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_EQ(flagged_count(r.out), 0) << r.out;
  EXPECT_EQ(read_jsonl(dir / "fraud.jsonl").size(), 400u);
}

TEST(CliFraud, InvertersAreFlaggedAndLooserThresholdFlagsMore) {
  TempDir dir;
  const SimulatedLog sim = simulate(fraud_sim(10));
  write_file(dir / "sim.log", serialize(sim.state));
  const std::string log = quote((dir / "sim.log").string());
  const std::string out = " --out " + quote((dir / "fraud.jsonl").string());

  const RunResult strict = run_cli("fraud --log " + log + " --p 1e-5" + out);
  ASSERT_EQ(strict.exit_code, 0) << strict.out;
  std::set<std::string> flagged;
  for (const Json& row : read_jsonl(dir / "fraud.jsonl")) {
    if (row["flagged"].get<bool>()) flagged.insert(row["user_id"].get<std::string>());
  }
  EXPECT_EQ(static_cast<std::int64_t>(flagged.size()), flagged_count(strict.out));
  std::int64_t caught = 0;
  for (const auto& [user, persona] : sim.personas) {
    if (persona == Persona::inverter) caught += flagged.contains(user) ? 1 : 0;
  }
  EXPECT_GE(caught, 9);

  const RunResult loose = run_cli("fraud --log " + log + " --p 0.5" + out);
  ASSERT_EQ(loose.exit_code, 0) << loose.out;
  EXPECT_GT(flagged_count(loose.out), flagged_count(strict.out));
}

TEST(CliFraud, AppendFlagsWritesRecordsOnce) {
  TempDir dir;
  write_file(dir / "sim.log", serialize(simulate(fraud_sim(4)).state));
  const std::string args = "fraud --log " + quote((dir / "sim.log").string()) + " --append-flags --out " +
                           quote((dir / "fraud.jsonl").string());
  const RunResult first = run_cli(args);
  ASSERT_EQ(first.exit_code, 0) << first.out;
  const std::int64_t n = flagged_count(first.out);
  EXPECT_GT(n, 0);
  EXPECT_NE(first.out.find("; " + std::to_string(n) + " flag records appended"), std::string::npos);

  const ReplayResult after = replay_file(dir / "sim.log");
  EXPECT_TRUE(after.checksum_verified);
  EXPECT_EQ(static_cast<std::int64_t>(after.state.flagged_users().size()), n);

  const RunResult second = run_cli(args);
  EXPECT_NE(second.out.find("; 0 flag records appended"), std::string::npos) << second.out;
}

TEST(CliAnalyze, WritesReportsDeterministically) {
  TempDir dir;
  SimConfig cfg = fraud_sim(0);
  cfg.models[1].format = Format::splat;
  cfg.models[3].format = Format::splat;
  cfg.models[2].textured = false;
  write_file(dir / "sim.log", serialize(simulate(cfg).state));
  const std::string log = quote((dir / "sim.log").string());

  const RunResult a = run_cli("analyze --log " + log + " --out-dir " + quote((dir / "a").string()));
  ASSERT_EQ(a.exit_code, 0) << a.out;
  const RunResult b = run_cli("analyze --log " + log + " --out-dir " + quote((dir / "b").string()));
  ASSERT_EQ(b.exit_code, 0) << b.out;
  EXPECT_EQ(a.out, b.out);

  for (const char* name : {"participation.json", "segments.json", "polygon.json", "geometry.json", "leaderboard.jsonl",
                           "snapshot.jsonl", "fraud.jsonl", "analytics_input.jsonl", "manifest.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / name)) << name;
    EXPECT_EQ(read_file_bytes(dir / "a" / name), read_file_bytes(dir / "b" / name)) << name;
  }
  const Json part = Json::parse(read_file_bytes(dir / "a" / "participation.json"));
  EXPECT_EQ(part["users"], 400);
  const Json seg = Json::parse(read_file_bytes(dir / "a" / "segments.json"));
  EXPECT_TRUE(seg.contains("format"));
  EXPECT_TRUE(seg.contains("textured"));
  EXPECT_FALSE(seg["format"].contains("status")) << seg.dump();
  const Json poly = Json::parse(read_file_bytes(dir / "a" / "polygon.json"));
  EXPECT_FALSE(poly.contains("status")) << poly.dump();
}

TEST(CliAnalyze, EmptyLogReportsInsufficientData) {
  TempDir dir;
  write_file(dir / "empty.log", "");
  const RunResult r = run_cli("analyze --log " + quote((dir / "empty.log").string()) + " --out-dir " +
                              quote((dir / "out").string()));
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const Json poly = Json::parse(read_file_bytes(dir / "out" / "polygon.json"));
  EXPECT_EQ(poly["status"], "insufficient data");
  const Json seg = Json::parse(read_file_bytes(dir / "out" / "segments.json"));
  EXPECT_EQ(seg["format"]["status"], "insufficient data");
}

TEST(CliSimulate, WritesLogAndSummary) {
  TempDir dir;
  const Json cfg = {{"models",
                     {{{"model_id", "a"}, {"true_elo", 1300}},
                      {{"model_id", "b"}, {"true_elo", 1200}, {"format", "splat"}},
                      {{"model_id", "c"}, {"true_elo", 1100}}}},
                    {"prompts", 4},
                    {"personas", {{"honest", 200}, {"inverter", {{"count", 3}, {"min_votes", 40}}}}},
                    {"seed", 9}};
  write_file(dir / "sim.json", cfg.dump());
  const std::string args = "simulate --config " + quote((dir / "sim.json").string()) + " --out " +
                           quote((dir / "sim.log").string()) + " --summary " + quote((dir / "summary.json").string());
  const RunResult r = run_cli(args);
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("from 203 users"), std::string::npos) << r.out;

  const ReplayResult log = replay_file(dir / "sim.log");
  EXPECT_TRUE(log.checksum_verified);
  const Json summary = Json::parse(read_file_bytes(dir / "summary.json"));
  EXPECT_EQ(summary["votes"].get<std::size_t>(), log.state.votes().size());
  EXPECT_EQ(summary["users"], 203);
  EXPECT_EQ(summary["true_positives"].get<int>() + summary["false_negatives"].get<int>(), 3);

  const std::string first = read_file_bytes(dir / "sim.log");
  ASSERT_EQ(run_cli(args).exit_code, 0);
  EXPECT_EQ(read_file_bytes(dir / "sim.log"), first);
  ASSERT_EQ(run_cli(args + " --seed 10").exit_code, 0);
  EXPECT_NE(read_file_bytes(dir / "sim.log"), first);
}

TEST(CliSimulate, BadConfigExitsTwo) {
  TempDir dir;
  write_file(dir / "sim.json", R"({"models": [{"model_id": "solo", "true_elo": 1000}]})");
  const RunResult r = run_cli("simulate --config " + quote((dir / "sim.json").string()) + " --out " +
                              quote((dir / "x.log").string()));
  EXPECT_EQ(r.exit_code, 2) << r.out;
  EXPECT_NE(r.out.find("at least 2 models"), std::string::npos) << r.out;
}

namespace {

/// Runs `arena serve` as a child with stdout on a pipe.
class ServeProcess {
 public:
  explicit ServeProcess(const fs::path& config) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = ::fork();
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::dup2(fds[1], STDERR_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      ::execl(ARENA_CLI_PATH, ARENA_CLI_PATH, "serve", "--config", config.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    out_ = ::fdopen(fds[0], "r");
  }
  ~ServeProcess() {
    if (pid_ > 0 && !reaped_) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    if (out_ != nullptr) ::fclose(out_);
  }

  std::optional<std::string> read_line() {
    std::array<char, 1024> buf{};
    if (std::fgets(buf.data(), buf.size(), out_) == nullptr) return std::nullopt;
    return std::string(buf.data());
  }

  std::string read_rest() {
    std::string s;
    while (auto line = read_line()) s += *line;
    return s;
  }

  void signal(int sig) { ::kill(pid_, sig); }

  int wait() {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    reaped_ = true;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  pid_t pid_ = -1;
  bool reaped_ = false;
  FILE* out_ = nullptr;
};

}  // namespace

TEST(CliServe, SigtermClosesLogWithChecksum) {
  TempDir dir;
  const Json cfg = {{"host", "127.0.0.1"},
                    {"port", 0},
                    {"data_dir", "data"},
                    {"fsync", false},
                    {"identity", {{"kind", "static"}, {"tokens", {{"tok-admin", "admin"}}}}},
                    {"admin_users", {"admin"}}};
  write_file(dir / "serve.json", cfg.dump());

  ServeProcess proc(dir / "serve.json");
  const auto first = proc.read_line();
  ASSERT_TRUE(first.has_value());
  std::smatch m;
  ASSERT_TRUE(std::regex_search(*first, m, std::regex(R"(listening on 127\.0\.0\.1:(\d+))"))) << *first;
  const int port = std::stoi(m[1]);

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(5, 0);
  auto health = client.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  const httplib::Headers auth = {{"Authorization", "Bearer tok-admin"}};
  auto submit = client.Post("/api/models", auth,
                            R"({"model_id": "cli-model", "display_name": "CLI Model", "format": "mesh", "source_url": "https://example.org/cli"})",
                            "application/json");
  ASSERT_TRUE(submit);
  EXPECT_EQ(submit->status, 201) << submit->body;

  proc.signal(SIGTERM);
  const std::string rest = proc.read_rest();
  EXPECT_EQ(proc.wait(), 0) << rest;
  EXPECT_NE(rest.find("shutting down"), std::string::npos) << rest;
  EXPECT_NE(rest.find("log closed with checksum"), std::string::npos) << rest;

  const ReplayResult log = replay_file(dir / "data" / "votes.log");
  EXPECT_TRUE(log.checksum_verified);
  EXPECT_NE(log.state.registry.find_model("cli-model"), nullptr);
}

TEST(CliServe, BadConfigExitsTwoWithDiagnostic) {
  TempDir dir;
  write_file(dir / "serve.json", R"({"port": 70000})");
  const RunResult r = run_cli("serve --config " + quote((dir / "serve.json").string()));
  EXPECT_EQ(r.exit_code, 2) << r.out;
  EXPECT_NE(r.out.find("port"), std::string::npos) << r.out;

  write_file(dir / "bad.json", "{ not json");
  EXPECT_EQ(run_cli("serve --config " + quote((dir / "bad.json").string())).exit_code, 2);
}
