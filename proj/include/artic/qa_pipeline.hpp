#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "artic/common.hpp"

namespace artic::qa {

enum class CandidateState {
  kGenerated,
  kFilteredAccept,
  kFilteredReject,
  kVerified,
  kRejected,
};

std::string_view to_string(CandidateState s);
CandidateState parse_state(std::string_view s);

struct CandidateQa {
  std::string id;
  std::string question;
  std::string answer;
  std::string source_video;
  std::string tag;
  CandidateState state = CandidateState::kGenerated;
};

// Moves a candidate forward; throws InvariantError on a backward or
// skipping transition.
void advance_state(CandidateQa& c, CandidateState next);

// filter_original / filter_degraded: was that answer judged correct.
// semantic_match: the filter decision. cross_verify: verifier agreed.
enum class JudgeStage { kFilterOriginal, kFilterDegraded, kSemanticMatch, kCrossVerify };

std::string_view to_string(JudgeStage s);
JudgeStage parse_stage(std::string_view s);

struct JudgeVerdict {
  std::string candidate_id;
  JudgeStage stage = JudgeStage::kFilterOriginal;
  bool verdict = false;
};

// Transport-agnostic model/judge request. `reference_answer` is only set
// for semantic-consistency judgements.
struct JudgeRequest {
  std::string candidate_id;
  std::string video_ref;
  std::string question;
  std::optional<std::string> reference_answer;
  std::optional<std::string> response;
};

struct JudgeResponse {
  std::string text;
  std::optional<bool> verdict;
};

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  // Throws JudgeError on failure or timeout.
  virtual JudgeResponse ask(const JudgeRequest& request) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_multiplier = 2.0;
};

// Retries a client with exponential backoff. The sleeper is injectable so
// tests run without waiting.
class RetryingClient final : public JudgeClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  RetryingClient(JudgeClient& inner, RetryPolicy policy = {},
                 Sleeper sleeper = {});
  JudgeResponse ask(const JudgeRequest& request) override;
  const std::vector<std::chrono::milliseconds>& backoffs() const {
    return backoffs_;
  }

 private:
  JudgeClient& inner_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::vector<std::chrono::milliseconds> backoffs_;
  std::mutex mu_;
};

// Stub answering model: answers correctly with probability `p_correct`,
// decided per (candidate, salt) so results do not depend on call order.
class StubVideoModel final : public JudgeClient {
 public:
  using TruthLookup = std::function<std::string(const std::string& id)>;
  StubVideoModel(double p_correct, std::uint64_t seed, TruthLookup truth,
                 double p_failure = 0.0);
  JudgeResponse ask(const JudgeRequest& request) override;

 private:
  double p_correct_;
  std::uint64_t seed_;
  TruthLookup truth_;
  double p_failure_;
  std::map<std::string, int> calls_;
  std::mutex mu_;
};

// Stub semantic judge: case/space-insensitive equality of response and
// reference answer.
class StubSemanticJudge final : public JudgeClient {
 public:
  JudgeResponse ask(const JudgeRequest& request) override;
};

// Deterministic uniform draw in [0, 1) from a seed and a key.
double keyed_uniform(std::uint64_t seed, std::string_view key);

struct FilterOutcome {
  bool original_correct = false;
  bool degraded_correct = false;
  bool accept() const { return original_correct && !degraded_correct; }
};

// Accept iff the original-video answer matches the reference and the
// degraded-video answer does not. Throws JudgeError on client failure.
FilterOutcome filter(const CandidateQa& candidate,
                     const std::string& degraded_video_ref,
                     JudgeClient& original_model, JudgeClient& degraded_model,
                     JudgeClient& matcher);

// Accept iff the verifier's own answer is consistent with the candidate's.
bool cross_verify(const CandidateQa& candidate, JudgeClient& verifier,
                  JudgeClient& matcher);

struct PipelineStats {
  std::size_t n_generated = 0;
  std::size_t n_filter_accepted = 0;
  std::size_t n_verified = 0;
  std::size_t n_parked = 0;
  double filter_rate = 0.0;
  double verify_rate = 0.0;
  double overall_rate = 0.0;
  bool empty = true;
};

PipelineStats stats_from_counts(std::size_t generated, std::size_t accepted,
                                std::size_t verified, std::size_t parked = 0);
PipelineStats stats(const std::vector<CandidateQa>& candidates,
                    std::size_t parked = 0);
// Pure aggregation over a verdict ledger.
PipelineStats stats(const std::vector<JudgeVerdict>& ledger,
                    std::size_t n_generated);

// Append-only verdict ledger; the single serialization point for
// concurrent stages. Optionally mirrored to a JSONL sink.
class VerdictLedger {
 public:
  VerdictLedger() = default;
  explicit VerdictLedger(std::vector<JudgeVerdict> replay);

  void set_sink(std::ostream* sink) { sink_ = sink; }
  void append(const JudgeVerdict& v);
  std::optional<bool> find(const std::string& id, JudgeStage stage) const;
  std::vector<JudgeVerdict> snapshot() const;

  static std::vector<JudgeVerdict> read_jsonl(std::istream& in);

 private:
  mutable std::mutex mu_;
  std::vector<JudgeVerdict> verdicts_;
  std::map<std::pair<std::string, JudgeStage>, bool> index_;
  std::ostream* sink_ = nullptr;
};

// Low-bitrate preprocessing is a manifest transformation: each source video
// gains a degraded copy and a side-by-side concatenation. Commands are only
// executed when a template is configured and dry_run is off.
struct PreprocessPlan {
  Kbps degraded_kbps = 200.0;
  // Placeholders: {in}, {out}, {kbps}.
  std::string transcode_template;
  bool dry_run = true;

  std::string degraded_ref(const std::string& video_ref) const;
  std::string concat_ref(const std::string& video_ref) const;
  std::vector<std::string> commands(
      const std::vector<CandidateQa>& candidates) const;
  // Runs the commands; returns the number that failed.
  int run(const std::vector<CandidateQa>& candidates) const;
};

struct PipelineClients {
  JudgeClient& filter_model;
  JudgeClient& judge;
  JudgeClient& verifier;
};

struct PipelineOptions {
  int workers = 1;
  int retry_rounds = 1;  // extra passes over parked candidates
};

struct PipelineReport {
  PipelineStats stats;
  std::vector<std::string> parked;
};

// Runs generated candidates through filter and cross-verification, updating
// their state in place. Verdicts already in the ledger are reused.
PipelineReport run_pipeline(std::vector<CandidateQa>& candidates,
                            const PreprocessPlan& plan,
                            PipelineClients clients, VerdictLedger& ledger,
                            const PipelineOptions& options = {});

// Synthetic candidates: `per_video` questions for each video.
std::vector<CandidateQa> generate_candidates(
    const std::vector<std::string>& videos, std::size_t per_video);

std::vector<CandidateQa> read_manifest(std::istream& in);
std::vector<CandidateQa> load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out,
                    const std::vector<CandidateQa>& candidates);

}  // namespace artic::qa
