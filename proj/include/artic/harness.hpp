#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "artic/cc.hpp"
#include "artic/codec_model.hpp"
#include "artic/common.hpp"
#include "artic/oracle.hpp"
#include "artic/recap_abr.hpp"
#include "artic/trace_net.hpp"
#include "artic/zeco_stream.hpp"

namespace artic::harness {

inline constexpr const char* kVersion = "0.1.0";

enum class Stack { kWebrtc, kWebrtcRecap, kWebrtcZeco, kArtic };

Stack parse_stack(std::string_view name);
std::string_view to_string(Stack s);
bool uses_recap(Stack s);
bool uses_zeco(Stack s);

// auto: region-weighted QP only while the trigger is on; always: whenever
// a prediction is available.
enum class ZecoMode { kAuto, kAlways };

struct ScenarioConfig {
  // Path to a `time_ms,bandwidth_kbps` CSV, or a generator:
  //   constant:<kbps>
  //   step:<before>,<after>,<at_ms>[,<ramp_ms>]
  //   fluctuation:<switches_per_min>   (levels from fluctuation_levels)
  std::string trace = "constant:5000";
  bool trace_loop = false;
  std::vector<Kbps> fluctuation_levels = {1000, 1500, 2000, 3000, 4000, 5000};
  codec::FrameSpec frame;
  cc::CcKind cc = cc::CcKind::kGcc;
  cc::CcConfig cc_config;
  Stack stack = Stack::kWebrtc;
  oracle::OracleConfig oracle;
  zeco::ZecoConfig zeco;
  ZecoMode zeco_mode = ZecoMode::kAuto;
  abr::ControllerConfig controller;
  net::LinkConfig link;
  // Path to a script file, `generate` (script_gen fields) or `none`.
  std::string script = "generate";
  // script_count 0 sizes the script to the run duration.
  oracle::ScriptGenConfig script_gen = [] {
    oracle::ScriptGenConfig g;
    g.count = 0;
    return g;
  }();
  // Encoder target pinned regardless of the controller; 0 disables.
  Kbps fixed_bitrate_kbps = 0.0;
  int max_transmissions = 5;
  Millis drain_ms = 10000.0;
  Millis duration_ms = 10000.0;
  std::uint64_t seed = 1;
  // Relative paths are resolved against this directory.
  std::filesystem::path base_dir;

  // Sets one key; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();
  // All keys with defaults resolved, in a fixed order.
  std::vector<std::pair<std::string, std::string>> effective() const;
  void validate() const;

  static ScenarioConfig parse(std::istream& in,
                              const std::filesystem::path& base_dir = {});
  static ScenarioConfig load(const std::filesystem::path& path);
};

// Seed for an independent random stream of the scenario.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

net::BandwidthTrace make_trace(const ScenarioConfig& cfg);
oracle::ScenarioScript make_script(const ScenarioConfig& cfg);

struct FrameRow {
  FrameId frame_id = 0;
  Millis encode_ms = 0.0;
  std::optional<Millis> latency_ms;  // empty when lost
  Kbps bitrate_kbps = 0.0;
  std::size_t queue_len = 0;
  double mean_qp = 0.0;
  double crit_qp = 0.0;  // NaN without a critical region
  Kbps estimate_kbps = 0.0;
  std::size_t total_bytes = 0;
  bool used_qp_map = false;
};

struct QaOutcome {
  std::string id;
  Millis ask_ms = 0.0;
  FrameId frame_id = 0;
  double crit_qp = 0.0;
  bool correct = false;
};

struct FeedbackRecord {
  Millis emitted_ms = 0.0;
  Millis deliver_ms = 0.0;
  double confidence = 0.0;
  zeco::TrajectoryPrediction predictions;
};

struct Summary {
  std::size_t frames = 0;
  std::size_t lost_frames = 0;
  double mean_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  std::size_t qa_total = 0;
  std::size_t qa_correct = 0;
  std::optional<double> accuracy;  // empty when there were no QA samples
  double mean_bitrate_kbps = 0.0;
};

struct RunResult {
  std::string stack;
  std::string cc;
  std::vector<std::pair<std::string, std::string>> effective_config;
  std::vector<FrameRow> frames;  // sorted by frame_id
  std::vector<QaOutcome> qa;
  std::vector<FeedbackRecord> feedback;
  std::vector<net::DeliveryRecord> deliveries;  // departure/drop order
  std::uint64_t link_drops = 0;
  std::size_t max_queue_len = 0;
  Summary summary;
};

// Latencies over delivered frames, nearest-rank p95, mean frame bitrate.
Summary summarize(const std::vector<FrameRow>& rows,
                  const std::vector<QaOutcome>& qa);
double percentile(std::vector<double> values, double p);

// Deterministic given the scenario; throws InvariantError if a module
// invariant breaks mid-run.
RunResult run(const ScenarioConfig& cfg);

// Writes frames.csv, encoder.csv, delivery.csv, feedback.csv,
// confidence.csv, qa.csv and summary.csv, each with a commented header of
// the effective config.
void write_outputs(const RunResult& result, const std::filesystem::path& dir);
void write_frames_csv(std::ostream& out, const RunResult& result);
void write_summary_csv(std::ostream& out, const RunResult& result);
void write_config_header(std::ostream& out, const RunResult& result);

inline constexpr const char* kFramesHeader =
    "frame_id,encode_ms,latency_ms,bitrate_kbps,queue_len,mean_qp,crit_qp";
inline constexpr const char* kSummaryHeader =
    "stack,cc,mean_latency_ms,p95_latency_ms,accuracy,mean_bitrate_kbps";

struct SweepPoint {
  std::string value;
  ScenarioConfig scenario;
  RunResult result;
};

// One run per value of `axis` (any scenario key, or `fluctuation_per_min`
// and `bitrate`). All values are validated before any run starts; points
// run on up to `threads` threads and are returned in input order.
std::vector<SweepPoint> sweep(const ScenarioConfig& base, std::string_view axis,
                              const std::vector<std::string>& values,
                              int threads = 1);
ScenarioConfig apply_axis(const ScenarioConfig& base, std::string_view axis,
                          std::string_view value);

void write_sweep_summary(std::ostream& out, std::string_view axis,
                         const std::vector<SweepPoint>& points);

}  // namespace artic::harness
