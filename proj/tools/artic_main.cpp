#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "artic/harness.hpp"
#include "artic/qa_pipeline.hpp"

namespace fs = std::filesystem;
using namespace artic;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

harness::ScenarioConfig load_scenario(const std::string& path,
                                      const std::vector<std::string>& overrides) {
  harness::ScenarioConfig cfg;
  if (!path.empty()) cfg = harness::ScenarioConfig::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void print_summary(const harness::RunResult& r) {
  const auto& s = r.summary;
  std::printf("%-13s %-4s frames=%zu lost=%zu mean=%.1fms p95=%.1fms bitrate=%.0fkbps",
              r.stack.c_str(), r.cc.c_str(), s.frames, s.lost_frames,
              s.mean_latency_ms, s.p95_latency_ms, s.mean_bitrate_kbps);
  if (s.accuracy) std::printf(" accuracy=%.4f", *s.accuracy);
  else std::printf(" accuracy=n/a");
  std::printf("\n");
}

int cmd_run(const std::string& scenario, const std::string& out,
            const std::vector<std::string>& overrides) {
  const auto cfg = load_scenario(scenario, overrides);
  const auto result = harness::run(cfg);
  harness::write_outputs(result, out);
  print_summary(result);
  return 0;
}

int cmd_sweep(const std::string& scenario, const std::string& axis,
              const std::string& values, const std::string& stacks,
              const std::string& out, int threads,
              const std::vector<std::string>& overrides) {
  const auto base = load_scenario(scenario, overrides);
  const auto value_list = split_list(values);
  std::vector<std::string> stack_list = split_list(stacks);
  if (stack_list.empty()) stack_list.push_back(std::string(to_string(base.stack)));

  std::vector<harness::SweepPoint> all;
  for (const auto& stack : stack_list) {
    auto cfg = base;
    cfg.set("stack", stack);
    auto points = harness::sweep(cfg, axis, value_list, threads);
    for (auto& p : points) {
      harness::write_outputs(p.result, fs::path(out) / (p.result.stack + "_" + axis + "_" + p.value));
      std::printf("%s=%s ", axis.c_str(), p.value.c_str());
      print_summary(p.result);
      all.push_back(std::move(p));
    }
  }
  fs::create_directories(out);
  std::ofstream summary(fs::path(out) / "sweep_summary.csv");
  harness::write_sweep_summary(summary, axis, all);
  return 0;
}

struct PipelineArgs {
  std::string manifest;
  std::string stub_rates;
  std::string ledger;
  std::string out;
  std::size_t generate = 0;
  std::uint64_t seed = 1;
  int workers = 1;
  double failure_rate = 0.0;
  double original_accuracy = 1.0;
  std::string transcode;
  bool execute = false;
};

int cmd_pipeline(const PipelineArgs& a) {
  const auto rates = split_list(a.stub_rates);
  if (rates.size() != 2) throw ConfigError("--stub-rates expects p,q");
  const double p = std::stod(rates[0]);
  const double q = std::stod(rates[1]);
  if (!(p >= 0.0 && p <= a.original_accuracy && q >= 0.0 && q <= 1.0))
    throw ConfigError("stub rates must satisfy 0 <= p <= original accuracy, 0 <= q <= 1");

  std::vector<qa::CandidateQa> candidates;
  if (fs::exists(a.manifest)) {
    candidates = qa::load_manifest(a.manifest);
  } else if (a.generate > 0) {
    std::vector<std::string> videos;
    for (std::size_t v = 0; v < (a.generate + 99) / 100; ++v)
      videos.push_back("videos/clip" + std::to_string(v) + ".mp4");
    candidates = qa::generate_candidates(videos, 100);
    candidates.resize(a.generate);
    std::ofstream m(a.manifest);
    if (!m) throw ConfigError("cannot write manifest " + a.manifest);
    qa::write_manifest(m, candidates);
  } else {
    throw ConfigError("manifest not found: " + a.manifest + " (use --generate N)");
  }

  std::map<std::string, std::string> truth;
  for (const auto& c : candidates) truth[c.id] = c.answer;
  auto lookup = [&truth](const std::string& id) { return truth.at(id); };

  qa::PreprocessPlan plan;
  plan.transcode_template = a.transcode;
  plan.dry_run = !a.execute;
  for (const auto& cmd : plan.commands(candidates))
    std::printf("%s %s\n", plan.dry_run ? "[dry-run]" : "[exec]", cmd.c_str());
  if (const int failed = plan.run(candidates); failed > 0)
    throw ConfigError(std::to_string(failed) + " preprocessing commands failed");

  // The filter model answers the original correctly with the original
  // accuracy; on the degraded copy with accuracy 1 - p / original, so that
  // the filter accepts a fraction p.
  const std::string degraded_marker = plan.degraded_ref("");
  struct SplitModel final : qa::JudgeClient {
    qa::JudgeClient& original;
    qa::JudgeClient& degraded;
    std::string marker;
    SplitModel(qa::JudgeClient& o, qa::JudgeClient& d, std::string m)
        : original(o), degraded(d), marker(std::move(m)) {}
    qa::JudgeResponse ask(const qa::JudgeRequest& r) override {
      const bool is_degraded = r.video_ref.find(marker) != std::string::npos;
      return (is_degraded ? degraded : original).ask(r);
    }
  };
  qa::StubVideoModel original(a.original_accuracy, a.seed, lookup, a.failure_rate);
  qa::StubVideoModel degraded(1.0 - p / a.original_accuracy, a.seed + 1, lookup,
                              a.failure_rate);
  qa::StubVideoModel verifier(q, a.seed + 2, lookup, a.failure_rate);
  SplitModel filter_model(original, degraded, degraded_marker);
  qa::StubSemanticJudge judge;
  qa::RetryingClient filter_retry(filter_model);
  qa::RetryingClient verifier_retry(verifier);

  std::vector<qa::JudgeVerdict> replay;
  if (!a.ledger.empty() && fs::exists(a.ledger)) {
    std::ifstream in(a.ledger);
    replay = qa::VerdictLedger::read_jsonl(in);
  }
  qa::VerdictLedger ledger(std::move(replay));
  std::ofstream sink;
  if (!a.ledger.empty()) {
    sink.open(a.ledger, std::ios::app);
    if (!sink) throw ConfigError("cannot append to ledger " + a.ledger);
    ledger.set_sink(&sink);
  }

  qa::PipelineOptions opts;
  opts.workers = a.workers;
  const auto report = qa::run_pipeline(
      candidates, plan, {filter_retry, judge, verifier_retry}, ledger, opts);

  const std::string out_manifest = a.out.empty() ? a.manifest : a.out;
  std::ofstream m(out_manifest);
  if (!m) throw ConfigError("cannot write manifest " + out_manifest);
  qa::write_manifest(m, candidates);

  const auto& s = report.stats;
  std::printf("generated=%zu filter_accepted=%zu verified=%zu parked=%zu\n",
              s.n_generated, s.n_filter_accepted, s.n_verified, s.n_parked);
  std::printf("filter_rate=%.4f verify_rate=%.4f overall_rate=%.4f\n",
              s.filter_rate, s.verify_rate, s.overall_rate);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"artic: network-aware streaming simulator for video assistants"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out = "out";
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory");
  run->add_option("--set", overrides, "Override a scenario key (key=value)");

  std::string axis;
  std::string values;
  std::string stacks;
  int threads = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario across axis values");
  sweep->add_option("--axis", axis, "Scenario key, fluctuation_per_min or bitrate")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--scenario", scenario, "Base scenario file")->check(CLI::ExistingFile);
  sweep->add_option("--stacks", stacks, "Comma-separated stacks to compare");
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--threads", threads, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_option("--set", overrides, "Override a scenario key (key=value)");

  PipelineArgs pa;
  auto* pipeline = app.add_subcommand("pipeline", "QA benchmark construction");
  pipeline->require_subcommand(1);
  auto* prun = pipeline->add_subcommand("run", "Filter and cross-verify candidates");
  prun->add_option("--manifest", pa.manifest, "JSONL candidate manifest")->required();
  prun->add_option("--stub-rates", pa.stub_rates, "Stub filter and verify rates p,q")->required();
  prun->add_option("--generate", pa.generate, "Create N synthetic candidates if the manifest is missing");
  prun->add_option("--ledger", pa.ledger, "Append-only verdict ledger (JSONL)");
  prun->add_option("--out", pa.out, "Updated manifest path (default: in place)");
  prun->add_option("--seed", pa.seed, "Stub seed");
  prun->add_option("--workers", pa.workers, "Worker threads")->check(CLI::PositiveNumber);
  prun->add_option("--failure-rate", pa.failure_rate, "Stub call failure probability")
      ->check(CLI::Range(0.0, 1.0));
  prun->add_option("--original-accuracy", pa.original_accuracy,
                   "Stub accuracy on original videos")->check(CLI::Range(0.0, 1.0));
  prun->add_option("--transcode", pa.transcode, "Transcode command template ({in} {out} {kbps})");
  prun->add_flag("--execute", pa.execute, "Run preprocessing commands instead of printing them");

  auto* version = app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario, out, overrides);
    if (sweep->parsed())
      return cmd_sweep(scenario, axis, values, stacks, out, threads, overrides);
    if (prun->parsed()) return cmd_pipeline(pa);
    if (version->parsed()) {
      std::printf("artic %s\n", harness::kVersion);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvariantError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
