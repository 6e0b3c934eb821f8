// arena: replay logs, rank models, sweep for fraud, run analyses and
// simulations, and serve the HTTP API.
//
// Exit codes: 0 success, 1 data error, 2 config or usage error.

#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"

#include "arena3d/arena3d.hpp"
#include "arena3d/http.hpp"

namespace fs = std::filesystem;
using namespace arena3d;

namespace {

constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kConfigError = 2;

struct LogInput {
  std::string path;
  bool recover = false;
};

void add_log_options(CLI::App* cmd, LogInput& in) {
  cmd->add_option("--log", in.path, "Vote log path")->required();
  cmd->add_flag("--recover", in.recover, "Accept a log without trailer, dropping a torn tail");
}

ReplayResult load_log(const LogInput& in) {
  ReplayResult r = replay_file(in.path, {.recover = in.recover});
  if (r.dropped_reason) std::cerr << "warning: dropped " << r.dropped_bytes << " bytes: " << *r.dropped_reason << "\n";
  return r;
}

Mode mode_or_throw(const std::string& text) {
  auto mode = parse_mode(text);
  if (!mode) throw Error(ErrorCode::config_invalid, "mode must be standard or topology");
  return *mode;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_leaderboard(const std::vector<LeaderboardRow>& rows) {
  std::printf("%-5s %-32s %6s %7s %9s %-6s\n", "Rank", "Model", "ELO", "Votes", "Win Rate", "Format");
  for (const LeaderboardRow& r : rows) {
    std::printf("%-5d %-32s %6lld %7lld %9s %-6s%s\n", r.rank, r.display_name.c_str(), static_cast<long long>(r.elo),
                static_cast<long long>(r.votes), r.win_rate_text().c_str(), std::string(format_label(r.format)).c_str(),
                r.excluded_from_public ? "  (anonymous)" : "");
  }
}

// rank ---------------------------------------------------------------------

struct RankArgs {
  LogInput log;
  double k = EloConfig{}.k_factor;
  std::string mode = "standard";
  bool include_flagged = false;
  bool public_only = false;
  std::int64_t min_votes = 0;
  int bootstrap = 0;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int run_rank(const RankArgs& a) {
  EloConfig elo;
  elo.k_factor = a.k;
  elo.validate();
  const Mode mode = mode_or_throw(a.mode);
  const ReplayResult log = load_log(a.log);
  const LogState& state = log.state;
  const UserSet excluded = a.include_flagged ? UserSet{} : state.flagged_users();

  RatingSnapshot snapshot = replay_elo(state.votes(), excluded, mode, elo);
  attach_strengths(snapshot, fit_bradley_terry(state.votes(), excluded, BtConfig{}, mode));
  if (a.bootstrap > 0) attach_intervals(snapshot, bootstrap_ci(state.votes(), excluded, elo, a.bootstrap, a.seed, mode));

  const auto rows = build_leaderboard(state.registry, snapshot,
                                      {.public_only = a.public_only, .min_votes_display = a.min_votes,
                                       .initial_rating = elo.initial_rating});
  print_leaderboard(rows);
  std::printf("votes counted: %lld of %zu; excluded users: %zu\n",
              static_cast<long long>(snapshot.vote_count_processed), state.votes().size(), excluded.size());

  fs::create_directories(a.out_dir);
  std::vector<Json> lines;
  for (const LeaderboardRow& r : rows) lines.push_back(to_json(r));
  write_text_file(fs::path(a.out_dir) / "leaderboard.jsonl", to_jsonl(lines));
  write_text_file(fs::path(a.out_dir) / "snapshot.jsonl", snapshot_jsonl(snapshot));
  return kOk;
}

// fraud --------------------------------------------------------------------

struct FraudArgs {
  LogInput log;
  double p = 1e-5;
  std::int64_t min_pair = 10;
  std::int64_t min_user = 10;
  int iterations = 1;
  std::string null_agreement = "community_mean";
  std::string out = "fraud.jsonl";
  bool append_flags = false;
};

int run_fraud(const FraudArgs& a) {
  const FraudConfig cfg = parse_fraud_config({{"p_threshold", a.p},
                                              {"min_consensus_votes_per_pair", a.min_pair},
                                              {"min_scorable_votes_per_user", a.min_user},
                                              {"iterations", a.iterations},
                                              {"null_agreement", a.null_agreement}});
  const ReplayResult log = load_log(a.log);
  const FraudSweep sweep = run_fraud_sweep(log.state.votes(), cfg);
  write_text_file(a.out, fraud_jsonl(sweep.reports));

  std::int64_t appended = 0;
  if (a.append_flags) {
    LogWriter writer(a.log.path);
    const UserSet before = writer.state().flagged_users();
    const Timestamp at = writer.state().votes().empty() ? Timestamp{} : writer.state().votes().back().cast_at;
    for (const FraudReport& r : sweep.reports) {
      if (r.flagged != before.contains(r.user_id)) {
        writer.append(FlagRecord{r.user_id, r.flagged, r.p_value, at});
        ++appended;
      }
    }
    writer.close();
  }
  std::printf("flagged %zu of %zu users; authenticity rate %s; null agreement %.4f",
              sweep.flagged.size(), sweep.reports.size(),
              sweep.authenticity_rate ? fmt("%.2f%%", 100.0 * *sweep.authenticity_rate).c_str() : "n/a",
              sweep.null_p0);
  if (a.append_flags) std::printf("; %lld flag records appended", static_cast<long long>(appended));
  std::printf("\n");
  return kOk;
}

// analyze ------------------------------------------------------------------

struct AnalyzeArgs {
  LogInput log;
  double k = EloConfig{}.k_factor;
  bool include_flagged = false;
  std::vector<std::string> polygon_exclude;
  std::string out_dir = "analysis";
};

int run_analyze(const AnalyzeArgs& a) {
  EloConfig elo;
  elo.k_factor = a.k;
  elo.validate();
  const ReplayResult log = load_log(a.log);
  const LogState& state = log.state;
  const UserSet excluded = a.include_flagged ? UserSet{} : state.flagged_users();
  RatingSnapshot snapshot = replay_elo(state.votes(), excluded, Mode::standard, elo);
  attach_strengths(snapshot, fit_bradley_terry(state.votes(), excluded));
  const FraudSweep sweep = run_fraud_sweep(state.votes());
  fs::create_directories(a.out_dir);
  snapshot_export(state, snapshot, sweep.reports, a.out_dir, {.elo = elo});

  const ParticipationReport part = participation_stats(state.votes());
  write_text_file(fs::path(a.out_dir) / "participation.json", to_json(part).dump(2) + "\n");
  std::printf("participation: %lld users, %lld votes, median %s, mean %s\n", static_cast<long long>(part.users),
              static_cast<long long>(part.votes),
              part.median_votes ? std::to_string(*part.median_votes).c_str() : "n/a",
              part.mean_votes ? fmt("%.2f", *part.mean_votes).c_str() : "n/a");
  std::printf("  1-10 votes %.1f%%  11-50 votes %.1f%%  >50 votes %.1f%%\n", 100 * part.share_1_10,
              100 * part.share_11_50, 100 * part.share_over_50);

  Json segments = Json::object();
  for (SegmentKey key : {SegmentKey::format, SegmentKey::textured}) {
    const std::string name(to_string(key));
    try {
      const SegmentReport r = segment_effect(state.registry, snapshot, key);
      segments[name] = to_json(r);
      std::printf("%s: %s mean ELO %.1f (%lld models, win rate %.1f%%) vs %s %.1f (%lld models, %.1f%%); gap %.1f, "
                  "z %.3f, p %.3g%s\n",
                  name.c_str(), r.first.label.c_str(), r.first.mean_elo, static_cast<long long>(r.first.model_count),
                  100 * r.first.win_rate, r.second.label.c_str(), r.second.mean_elo,
                  static_cast<long long>(r.second.model_count), 100 * r.second.win_rate, r.elo_gap(), r.test.z,
                  r.test.p_value, r.test.exact ? " (exact)" : "");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::segment_empty) throw;
      segments[name] = {{"status", "insufficient data"}, {"reason", e.what()}};
      std::printf("%s: n/a (%s)\n", name.c_str(), e.what());
    }
  }
  write_text_file(fs::path(a.out_dir) / "segments.json", segments.dump(2) + "\n");

  PolygonOptions popts;
  popts.excluded_models.insert(a.polygon_exclude.begin(), a.polygon_exclude.end());
  Json polygon;
  try {
    const PolygonReport r = polygon_correlation(state.registry, snapshot, popts);
    polygon = to_json(r);
    std::printf("polygon count vs win rate: r = %s over %lld mesh models\n",
                r.pearson_r ? fmt("%.3f", *r.pearson_r).c_str() : "n/a", static_cast<long long>(r.model_count));
    for (const PolygonBin& b : r.bins) {
      std::printf("  [%lld, %s) models %lld, win rate %s\n", static_cast<long long>(b.lower),
                  b.upper ? std::to_string(*b.upper).c_str() : "inf", static_cast<long long>(b.model_count),
                  b.win_rate ? fmt("%.1f%%", 100 * *b.win_rate).c_str() : "n/a");
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::insufficient_data) throw;
    polygon = {{"status", "insufficient data"}, {"reason", e.what()}};
    std::printf("polygon count vs win rate: n/a (%s)\n", e.what());
  }
  write_text_file(fs::path(a.out_dir) / "polygon.json", polygon.dump(2) + "\n");

  const MeshGeometryStats geo = mesh_geometry_stats(state.registry);
  write_text_file(fs::path(a.out_dir) / "geometry.json", to_json(geo).dump(2) + "\n");
  std::printf("mesh files: %lld, mean polygons %s, median %s\n", static_cast<long long>(geo.file_count),
              geo.mean_polygons ? fmt("%.0f", *geo.mean_polygons).c_str() : "n/a",
              geo.median_polygons ? std::to_string(*geo.median_polygons).c_str() : "n/a");
  return kOk;
}

// simulate -----------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "simulated.log";
  std::string summary = "recovery.json";
};

int run_simulate(const SimulateArgs& a) {
  SimulationRun run = parse_simulation_config(load_json_file(a.config));
  if (a.seed) run.sim.seed = *a.seed;
  const SimulatedLog sim = simulate(run.sim, run.recovery.scheduler);
  write_text_file(a.out, serialize(sim.state));
  const RecoveryReport r = recovery_experiment(run.sim, sim, run.recovery);
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  const Json summary = {{"votes", r.votes},
                        {"users", sim.personas.size()},
                        {"spearman_true_elo", opt(r.spearman_elo)},
                        {"spearman_true_bt", opt(r.spearman_bt)},
                        {"kendall_elo_bt", opt(r.kendall_elo_bt)},
                        {"true_positives", r.true_positives},
                        {"false_positives", r.false_positives},
                        {"false_negatives", r.false_negatives},
                        {"true_negatives", r.true_negatives},
                        {"recall", opt(r.recall)},
                        {"false_positive_rate", opt(r.false_positive_rate)}};
  write_text_file(a.summary, summary.dump(2) + "\n");
  std::printf("simulated %lld votes from %zu users\n", static_cast<long long>(r.votes), sim.personas.size());
  std::printf("spearman(true, elo) %s  spearman(true, bt) %s  kendall(elo, bt) %s\n",
              r.spearman_elo ? fmt("%.4f", *r.spearman_elo).c_str() : "n/a",
              r.spearman_bt ? fmt("%.4f", *r.spearman_bt).c_str() : "n/a",
              r.kendall_elo_bt ? fmt("%.4f", *r.kendall_elo_bt).c_str() : "n/a");
  std::printf("fraud: tp %lld fp %lld fn %lld tn %lld; recall %s; fpr %s\n", static_cast<long long>(r.true_positives),
              static_cast<long long>(r.false_positives), static_cast<long long>(r.false_negatives),
              static_cast<long long>(r.true_negatives), r.recall ? fmt("%.3f", *r.recall).c_str() : "n/a",
              r.false_positive_rate ? fmt("%.4f", *r.false_positive_rate).c_str() : "n/a");
  return kOk;
}

// serve --------------------------------------------------------------------

int run_serve(const std::string& config_path) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const fs::path path(config_path);
  const ServiceConfig cfg = parse_service_config(load_json_file(path), path.parent_path());
  ArenaService service(cfg, make_identity_provider(cfg.identity));
  HttpServer http(service);
  const int port = http.start(cfg.host, cfg.port);
  if (port < 0) throw Error(ErrorCode::config_invalid, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  std::printf("listening on %s:%d\n", cfg.host.c_str(), port);
  std::fflush(stdout);

  std::jthread jobs([&](std::stop_token stop) {
    std::mutex mu;
    std::condition_variable_any cv;
    auto next_sweep = std::chrono::steady_clock::now() + std::chrono::seconds(cfg.fraud_sweep_interval_seconds);
    auto next_recompute = std::chrono::steady_clock::now() + std::chrono::seconds(cfg.recompute_interval_seconds);
    std::unique_lock lock(mu);
    while (!stop.stop_requested()) {
      cv.wait_for(lock, stop, std::chrono::seconds(1), [] { return false; });
      const auto now = std::chrono::steady_clock::now();
      try {
        if (cfg.fraud_sweep_interval_seconds > 0 && now >= next_sweep) {
          service.run_fraud_sweep_job();
          next_sweep = now + std::chrono::seconds(cfg.fraud_sweep_interval_seconds);
        }
        if (cfg.recompute_interval_seconds > 0 && now >= next_recompute) {
          service.recompute();
          next_recompute = now + std::chrono::seconds(cfg.recompute_interval_seconds);
        }
      } catch (const std::exception& e) {
        std::cerr << "job failed: " << e.what() << "\n";
      }
    }
  });

  int received = 0;
  sigwait(&signals, &received);
  std::printf("received signal %d, shutting down\n", received);
  jobs.request_stop();
  jobs.join();
  http.stop();
  service.close();
  std::printf("log closed with checksum\n");
  std::fflush(stdout);
  return kOk;
}

int exit_code_for(ErrorCode code) { return code == ErrorCode::config_invalid ? kConfigError : kDataError; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D generative model arena: ratings, fraud detection, analytics and service"};
  app.require_subcommand(1);

  RankArgs rank;
  auto* rank_cmd = app.add_subcommand("rank", "Replay a log into a leaderboard and snapshot");
  add_log_options(rank_cmd, rank.log);
  rank_cmd->add_option("--k", rank.k, "ELO K-factor")->capture_default_str();
  rank_cmd->add_option("--mode", rank.mode, "standard or topology")->capture_default_str();
  rank_cmd->add_flag("--include-flagged", rank.include_flagged, "Count votes from flagged users");
  rank_cmd->add_flag("--public-only", rank.public_only, "Drop anonymous models");
  rank_cmd->add_option("--min-votes", rank.min_votes, "Hide models with fewer votes");
  rank_cmd->add_option("--bootstrap", rank.bootstrap, "Bootstrap resamples for 95% intervals (0 = off)");
  rank_cmd->add_option("--seed", rank.seed, "Bootstrap seed");
  rank_cmd->add_option("--out-dir", rank.out_dir, "Directory for leaderboard.jsonl and snapshot.jsonl");

  FraudArgs fraud;
  auto* fraud_cmd = app.add_subcommand("fraud", "Score every voter against the consensus");
  add_log_options(fraud_cmd, fraud.log);
  fraud_cmd->add_option("--p", fraud.p, "Flagging threshold")->capture_default_str();
  fraud_cmd->add_option("--min-pair-votes", fraud.min_pair, "Consensus votes needed per pair");
  fraud_cmd->add_option("--min-user-votes", fraud.min_user, "Scorable votes needed per user");
  fraud_cmd->add_option("--iterations", fraud.iterations, "Sweep passes");
  fraud_cmd->add_option("--null", fraud.null_agreement, "community_mean or fixed_half");
  fraud_cmd->add_option("--out", fraud.out, "Report path (JSON lines)");
  fraud_cmd->add_flag("--append-flags", fraud.append_flags, "Append flag changes to the log");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Participation, segment and polygon reports");
  add_log_options(analyze_cmd, analyze.log);
  analyze_cmd->add_option("--k", analyze.k, "ELO K-factor")->capture_default_str();
  analyze_cmd->add_flag("--include-flagged", analyze.include_flagged, "Count votes from flagged users");
  analyze_cmd->add_option("--polygon-exclude", analyze.polygon_exclude, "Models left out of the polygon analysis");
  analyze_cmd->add_option("--out-dir", analyze.out_dir, "Report directory");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic log and measure recovery");
  sim_cmd->add_option("--config", sim.config, "Simulation config (JSON)")->required();
  sim_cmd->add_option("--seed", sim.seed, "Override the config seed");
  sim_cmd->add_option("--out", sim.out, "Log output path");
  sim_cmd->add_option("--summary", sim.summary, "Recovery summary path (JSON)");

  std::string serve_config;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service until SIGINT or SIGTERM");
  serve_cmd->add_option("--config", serve_config, "Service config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (rank_cmd->parsed()) return run_rank(rank);
    if (fraud_cmd->parsed()) return run_fraud(fraud);
    if (analyze_cmd->parsed()) return run_analyze(analyze);
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (serve_cmd->parsed()) return run_serve(serve_config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}
