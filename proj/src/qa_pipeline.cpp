#include "artic/qa_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "json.hpp"

namespace artic::qa {

namespace {

using nlohmann::json;

std::string normalize(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

std::string with_suffix(const std::string& ref, const std::string& suffix) {
  const auto slash = ref.find_last_of('/');
  const auto dot = ref.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return ref + suffix;
  return ref.substr(0, dot) + suffix + ref.substr(dot);
}

}  // namespace

std::string_view to_string(CandidateState s) {
  switch (s) {
    case CandidateState::kGenerated: return "generated";
    case CandidateState::kFilteredAccept: return "filtered_accept";
    case CandidateState::kFilteredReject: return "filtered_reject";
    case CandidateState::kVerified: return "verified";
    case CandidateState::kRejected: return "rejected";
  }
  return "generated";
}

CandidateState parse_state(std::string_view s) {
  for (auto st : {CandidateState::kGenerated, CandidateState::kFilteredAccept,
                  CandidateState::kFilteredReject, CandidateState::kVerified,
                  CandidateState::kRejected})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown candidate state '" + std::string(s) + "'");
}

void advance_state(CandidateQa& c, CandidateState next) {
  const bool ok =
      (c.state == CandidateState::kGenerated &&
       (next == CandidateState::kFilteredAccept ||
        next == CandidateState::kFilteredReject)) ||
      (c.state == CandidateState::kFilteredAccept &&
       (next == CandidateState::kVerified || next == CandidateState::kRejected));
  if (!ok)
    throw InvariantError("candidate " + c.id + ": illegal transition " +
                         std::string(to_string(c.state)) + " -> " +
                         std::string(to_string(next)));
  c.state = next;
}

std::string_view to_string(JudgeStage s) {
  switch (s) {
    case JudgeStage::kFilterOriginal: return "filter_original";
    case JudgeStage::kFilterDegraded: return "filter_degraded";
    case JudgeStage::kSemanticMatch: return "semantic_match";
    case JudgeStage::kCrossVerify: return "cross_verify";
  }
  return "filter_original";
}

JudgeStage parse_stage(std::string_view s) {
  for (auto st : {JudgeStage::kFilterOriginal, JudgeStage::kFilterDegraded,
                  JudgeStage::kSemanticMatch, JudgeStage::kCrossVerify})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown judge stage '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Clients

RetryingClient::RetryingClient(JudgeClient& inner, RetryPolicy policy,
                               Sleeper sleeper)
    : inner_(inner), policy_(policy), sleeper_(std::move(sleeper)) {
  if (policy_.attempts < 1) throw ConfigError("retry attempts must be >= 1");
  if (!sleeper_)
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

JudgeResponse RetryingClient::ask(const JudgeRequest& request) {
  auto backoff = policy_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return inner_.ask(request);
    } catch (const JudgeError&) {
      if (attempt >= policy_.attempts) throw;
    }
    {
      std::lock_guard lock(mu_);
      backoffs_.push_back(backoff);
    }
    sleeper_(backoff);
    backoff = std::chrono::milliseconds(static_cast<std::int64_t>(
        static_cast<double>(backoff.count()) * policy_.backoff_multiplier));
  }
}

double keyed_uniform(std::uint64_t seed, std::string_view key) {
  std::mt19937_64 rng(fnv1a(key, 1469598103934665603ULL ^ seed));
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

StubVideoModel::StubVideoModel(double p_correct, std::uint64_t seed,
                               TruthLookup truth, double p_failure)
    : p_correct_(p_correct),
      seed_(seed),
      truth_(std::move(truth)),
      p_failure_(p_failure) {
  if (!(p_correct_ >= 0.0 && p_correct_ <= 1.0))
    throw ConfigError("stub accuracy must be in [0, 1]");
}

JudgeResponse StubVideoModel::ask(const JudgeRequest& request) {
  const std::string key = request.candidate_id + "|" + request.video_ref;
  if (p_failure_ > 0.0) {
    int call;
    {
      std::lock_guard lock(mu_);
      call = calls_[key]++;
    }
    if (keyed_uniform(seed_ ^ 0x5bd1e995ULL, key + "#" + std::to_string(call)) <
        p_failure_)
      throw JudgeError("stub model unavailable");
  }
  const bool correct = keyed_uniform(seed_, key) < p_correct_;
  if (correct) return {truth_(request.candidate_id), std::nullopt};
  return {"unsure: cannot read the detail", std::nullopt};
}

JudgeResponse StubSemanticJudge::ask(const JudgeRequest& request) {
  if (!request.reference_answer || !request.response)
    throw JudgeError("semantic judge needs a response and a reference");
  const bool match =
      normalize(*request.response) == normalize(*request.reference_answer);
  return {match ? "consistent" : "inconsistent", match};
}

// ---------------------------------------------------------------------------
// Stages

namespace {

bool judged_match(JudgeClient& matcher, const CandidateQa& c,
                  const std::string& response) {
  JudgeRequest req;
  req.candidate_id = c.id;
  req.question = c.question;
  req.reference_answer = c.answer;
  req.response = response;
  const JudgeResponse r = matcher.ask(req);
  if (!r.verdict) throw JudgeError("judge returned no verdict");
  return *r.verdict;
}

std::string answer_of(JudgeClient& model, const CandidateQa& c,
                      const std::string& video_ref) {
  JudgeRequest req;
  req.candidate_id = c.id;
  req.video_ref = video_ref;
  req.question = c.question;
  return model.ask(req).text;
}

}  // namespace

FilterOutcome filter(const CandidateQa& candidate,
                     const std::string& degraded_video_ref,
                     JudgeClient& original_model, JudgeClient& degraded_model,
                     JudgeClient& matcher) {
  FilterOutcome out;
  out.original_correct = judged_match(
      matcher, candidate,
      answer_of(original_model, candidate, candidate.source_video));
  out.degraded_correct = judged_match(
      matcher, candidate,
      answer_of(degraded_model, candidate, degraded_video_ref));
  return out;
}

bool cross_verify(const CandidateQa& candidate, JudgeClient& verifier,
                  JudgeClient& matcher) {
  if (candidate.state != CandidateState::kFilteredAccept)
    throw InputError("cross_verify needs a filter-accepted candidate");
  return judged_match(matcher, candidate,
                      answer_of(verifier, candidate, candidate.source_video));
}

// ---------------------------------------------------------------------------
// Statistics

PipelineStats stats_from_counts(std::size_t generated, std::size_t accepted,
                                std::size_t verified, std::size_t parked) {
  PipelineStats s;
  s.n_parked = parked;
  if (generated == 0) return s;
  if (accepted > generated || verified > accepted)
    throw InvariantError("stage counts must be nonincreasing");
  s.empty = false;
  s.n_generated = generated;
  s.n_filter_accepted = accepted;
  s.n_verified = verified;
  s.filter_rate = static_cast<double>(accepted) / static_cast<double>(generated);
  s.verify_rate =
      accepted ? static_cast<double>(verified) / static_cast<double>(accepted) : 0.0;
  s.overall_rate = s.filter_rate * s.verify_rate;
  return s;
}

PipelineStats stats(const std::vector<CandidateQa>& candidates,
                    std::size_t parked) {
  std::size_t accepted = 0;
  std::size_t verified = 0;
  for (const auto& c : candidates) {
    if (c.state == CandidateState::kFilteredAccept ||
        c.state == CandidateState::kVerified ||
        c.state == CandidateState::kRejected)
      ++accepted;
    if (c.state == CandidateState::kVerified) ++verified;
  }
  return stats_from_counts(candidates.size(), accepted, verified, parked);
}

PipelineStats stats(const std::vector<JudgeVerdict>& ledger,
                    std::size_t n_generated) {
  std::size_t accepted = 0;
  std::size_t verified = 0;
  for (const auto& v : ledger) {
    if (v.stage == JudgeStage::kSemanticMatch && v.verdict) ++accepted;
    if (v.stage == JudgeStage::kCrossVerify && v.verdict) ++verified;
  }
  return stats_from_counts(n_generated, accepted, verified);
}

// ---------------------------------------------------------------------------
// Ledger

VerdictLedger::VerdictLedger(std::vector<JudgeVerdict> replay) {
  for (const auto& v : replay) append(v);
}

void VerdictLedger::append(const JudgeVerdict& v) {
  std::lock_guard lock(mu_);
  const auto key = std::make_pair(v.candidate_id, v.stage);
  if (index_.count(key))
    throw InvariantError("duplicate verdict for " + v.candidate_id + "/" +
                         std::string(to_string(v.stage)));
  index_.emplace(key, v.verdict);
  verdicts_.push_back(v);
  if (sink_ != nullptr) {
    json j = {{"candidate_id", v.candidate_id},
              {"stage", std::string(to_string(v.stage))},
              {"verdict", v.verdict}};
    *sink_ << j.dump() << '\n';
    sink_->flush();
  }
}

std::optional<bool> VerdictLedger::find(const std::string& id,
                                        JudgeStage stage) const {
  std::lock_guard lock(mu_);
  const auto it = index_.find({id, stage});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<JudgeVerdict> VerdictLedger::snapshot() const {
  std::lock_guard lock(mu_);
  return verdicts_;
}

std::vector<JudgeVerdict> VerdictLedger::read_jsonl(std::istream& in) {
  std::vector<JudgeVerdict> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("candidate_id").get<std::string>(),
                     parse_stage(j.at("stage").get<std::string>()),
                     j.at("verdict").get<bool>()});
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed ledger record: ") + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

std::string PreprocessPlan::degraded_ref(const std::string& video_ref) const {
  return with_suffix(video_ref,
                     "." + std::to_string(static_cast<long>(degraded_kbps)) + "kbps");
}

std::string PreprocessPlan::concat_ref(const std::string& video_ref) const {
  return with_suffix(video_ref, ".concat");
}

std::vector<std::string> PreprocessPlan::commands(
    const std::vector<CandidateQa>& candidates) const {
  std::vector<std::string> videos;
  for (const auto& c : candidates) videos.push_back(c.source_video);
  std::sort(videos.begin(), videos.end());
  videos.erase(std::unique(videos.begin(), videos.end()), videos.end());
  std::vector<std::string> out;
  if (transcode_template.empty()) return out;
  for (const auto& v : videos) {
    std::string cmd = transcode_template;
    replace_all(cmd, "{in}", v);
    replace_all(cmd, "{out}", degraded_ref(v));
    replace_all(cmd, "{kbps}", std::to_string(static_cast<long>(degraded_kbps)));
    out.push_back(std::move(cmd));
  }
  return out;
}

int PreprocessPlan::run(const std::vector<CandidateQa>& candidates) const {
  if (dry_run) return 0;
  int failures = 0;
  for (const auto& cmd : commands(candidates))
    if (std::system(cmd.c_str()) != 0) ++failures;
  return failures;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

// Returns the verdict for a stage, consulting the ledger before the client.
template <typename Fn>
bool staged(VerdictLedger& ledger, const std::string& id, JudgeStage stage,
            Fn&& compute) {
  if (auto known = ledger.find(id, stage)) return *known;
  const bool v = compute();
  ledger.append({id, stage, v});
  return v;
}

// Processes one candidate; false when a client failure parked it.
bool process(CandidateQa& c, const PreprocessPlan& plan, PipelineClients& cl,
             VerdictLedger& ledger) {
  try {
    if (c.state == CandidateState::kGenerated) {
      const bool orig = staged(ledger, c.id, JudgeStage::kFilterOriginal, [&] {
        return judged_match(cl.judge, c, answer_of(cl.filter_model, c, c.source_video));
      });
      bool degraded = false;
      if (orig) {
        degraded = staged(ledger, c.id, JudgeStage::kFilterDegraded, [&] {
          return judged_match(cl.judge, c,
                              answer_of(cl.filter_model, c,
                                        plan.degraded_ref(c.source_video)));
        });
      }
      const bool accept = staged(ledger, c.id, JudgeStage::kSemanticMatch,
                                 [&] { return orig && !degraded; });
      advance_state(c, accept ? CandidateState::kFilteredAccept
                              : CandidateState::kFilteredReject);
    }
    if (c.state == CandidateState::kFilteredAccept) {
      const bool ok = staged(ledger, c.id, JudgeStage::kCrossVerify, [&] {
        return cross_verify(c, cl.verifier, cl.judge);
      });
      advance_state(c, ok ? CandidateState::kVerified : CandidateState::kRejected);
    }
    return true;
  } catch (const JudgeError&) {
    return false;
  }
}

}  // namespace

PipelineReport run_pipeline(std::vector<CandidateQa>& candidates,
                            const PreprocessPlan& plan,
                            PipelineClients clients, VerdictLedger& ledger,
                            const PipelineOptions& options) {
  std::vector<std::size_t> pending(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) pending[i] = i;

  for (int round = 0; round <= options.retry_rounds && !pending.empty(); ++round) {
    std::vector<char> parked(pending.size(), 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < pending.size(); k = next++)
        parked[k] = process(candidates[pending[k]], plan, clients, ledger) ? 0 : 1;
    };
    const int n = std::max(1, options.workers);
    if (n == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < pending.size(); ++k)
      if (parked[k]) still.push_back(pending[k]);
    pending = std::move(still);
  }

  PipelineReport report;
  for (auto i : pending) report.parked.push_back(candidates[i].id);
  std::vector<CandidateQa> settled;
  for (const auto& c : candidates)
    if (std::find(report.parked.begin(), report.parked.end(), c.id) ==
        report.parked.end())
      settled.push_back(c);
  report.stats = stats(settled, report.parked.size());
  return report;
}

std::vector<CandidateQa> generate_candidates(
    const std::vector<std::string>& videos, std::size_t per_video) {
  std::vector<CandidateQa> out;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (std::size_t k = 0; k < per_video; ++k) {
      CandidateQa c;
      c.id = "v" + std::to_string(v) + "_q" + std::to_string(k);
      c.source_video = videos[v];
      c.question = "What detail #" + std::to_string(k) + " is visible in " +
                   videos[v] + "?";
      c.answer = "detail " + std::to_string(v) + "-" + std::to_string(k);
      c.tag = "text_rich";
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<CandidateQa> read_manifest(std::istream& in) {
  std::vector<CandidateQa> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      CandidateQa c;
      c.id = j.at("id").get<std::string>();
      c.source_video = j.at("video_ref").get<std::string>();
      c.question = j.at("question").get<std::string>();
      c.answer = j.at("answer").get<std::string>();
      c.state = parse_state(j.value("state", std::string("generated")));
      c.tag = j.value("tag", std::string());
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return out;
}

std::vector<CandidateQa> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  return read_manifest(in);
}

void write_manifest(std::ostream& out,
                    const std::vector<CandidateQa>& candidates) {
  for (const auto& c : candidates) {
    json j = {{"id", c.id},
              {"video_ref", c.source_video},
              {"question", c.question},
              {"answer", c.answer},
              {"state", std::string(to_string(c.state))},
              {"tag", c.tag}};
    out << j.dump() << '\n';
  }
}

}  // namespace artic::qa
