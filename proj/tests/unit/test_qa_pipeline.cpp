#include <map>
#include <sstream>

#include "artic/qa_pipeline.hpp"
#include "doctest.h"

using namespace artic;
using namespace artic::qa;

namespace {

using Table = std::map<std::string, std::string>;

// Answers from a table keyed by video_ref; "!" throws.
class TableModel final : public JudgeClient {
 public:
  explicit TableModel(std::map<std::string, std::string> table) : table_(std::move(table)) {}
  JudgeResponse ask(const JudgeRequest& r) override {
    ++calls;
    const auto& text = table_.at(r.video_ref);
    if (text == "!") throw JudgeError("down");
    return {text, std::nullopt};
  }
  int calls = 0;

 private:
  std::map<std::string, std::string> table_;
};

class FlakyClient final : public JudgeClient {
 public:
  explicit FlakyClient(int failures) : failures_(failures) {}
  JudgeResponse ask(const JudgeRequest&) override {
    if (calls++ < failures_) throw JudgeError("timeout");
    return {"ok", std::nullopt};
  }
  int calls = 0;

 private:
  int failures_;
};

CandidateQa candidate(CandidateState state = CandidateState::kGenerated) {
  CandidateQa c;
  c.id = "c1";
  c.question = "What does the sign say?";
  c.answer = "Exit 12";
  c.source_video = "v.mp4";
  c.state = state;
  return c;
}

std::map<std::string, std::string> truth_table(std::size_t videos, std::size_t per) {
  std::map<std::string, std::string> m;
  for (const auto& c : generate_candidates(std::vector<std::string>(videos, "x"), per))
    m[c.id] = c.answer;
  return m;
}

struct StubSet {
  explicit StubSet(double p_orig, double p_deg, double q, std::uint64_t seed,
                   std::map<std::string, std::string> truth, double fail = 0.0)
      : truth_(std::move(truth)),
        original(p_orig, seed, lookup(), fail),
        degraded(p_deg, seed + 1, lookup(), fail),
        verifier(q, seed + 2, lookup(), fail) {}

  StubVideoModel::TruthLookup lookup() {
    return [this](const std::string& id) { return truth_.at(id); };
  }

  // Routes degraded references to the degraded model.
  class Router final : public JudgeClient {
   public:
    Router(StubSet& s) : s_(s) {}
    JudgeResponse ask(const JudgeRequest& r) override {
      if (r.video_ref.find("kbps") != std::string::npos) return s_.degraded.ask(r);
      return s_.original.ask(r);
    }

   private:
    StubSet& s_;
  };

  std::map<std::string, std::string> truth_;
  StubVideoModel original;
  StubVideoModel degraded;
  StubVideoModel verifier;
  StubSemanticJudge judge;
};

std::vector<CandidateQa> synthetic(std::size_t videos, std::size_t per) {
  std::vector<std::string> refs;
  for (std::size_t v = 0; v < videos; ++v) refs.push_back("vid" + std::to_string(v) + ".mp4");
  return generate_candidates(refs, per);
}

}  // namespace

TEST_CASE("filter accepts only questions lost under degradation") {
  StubSemanticJudge judge;
  const auto c = candidate();
  TableModel right(Table{{"v.mp4", "exit 12"}, {"v.200kbps.mp4", "exit 12"}});
  TableModel wrong(Table{{"v.mp4", "exit 17"}, {"v.200kbps.mp4", "blurry"}});
  CHECK_FALSE(filter(c, "v.200kbps.mp4", right, right, judge).accept());
  CHECK(filter(c, "v.200kbps.mp4", right, wrong, judge).accept());
  CHECK_FALSE(filter(c, "v.200kbps.mp4", wrong, wrong, judge).accept());
  const auto out = filter(c, "v.200kbps.mp4", wrong, right, judge);
  CHECK_FALSE(out.accept());
  CHECK_FALSE(out.original_correct);
  CHECK(out.degraded_correct);
}

TEST_CASE("cross verification needs a filter-accepted candidate") {
  StubSemanticJudge judge;
  TableModel agree(Table{{"v.mp4", "  EXIT 12 "}});
  TableModel disagree(Table{{"v.mp4", "exit 21"}});
  CHECK(cross_verify(candidate(CandidateState::kFilteredAccept), agree, judge));
  CHECK_FALSE(cross_verify(candidate(CandidateState::kFilteredAccept), disagree, judge));
  CHECK_THROWS_AS(cross_verify(candidate(), agree, judge), InputError);
}

TEST_CASE("stats from stage counts") {
  const auto s = stats_from_counts(100, 50, 25);
  CHECK(s.filter_rate == 0.5);
  CHECK(s.verify_rate == 0.5);
  CHECK(s.overall_rate == 0.25);
  CHECK_FALSE(s.empty);
  const auto none = stats_from_counts(10, 0, 0);
  CHECK(none.filter_rate == 0.0);
  CHECK(none.verify_rate == 0.0);
  CHECK(none.overall_rate == 0.0);
  CHECK(stats_from_counts(0, 0, 0).empty);
  CHECK_THROWS_AS(stats_from_counts(10, 5, 6), InvariantError);
}

TEST_CASE("stats from candidates and from a ledger agree") {
  std::vector<CandidateQa> cs(4, candidate());
  cs[0].state = CandidateState::kVerified;
  cs[1].state = CandidateState::kRejected;
  cs[2].state = CandidateState::kFilteredReject;
  const auto a = stats(cs);
  CHECK(a.n_filter_accepted == 2);
  CHECK(a.n_verified == 1);
  std::vector<JudgeVerdict> ledger{{"a", JudgeStage::kSemanticMatch, true},
                                   {"b", JudgeStage::kSemanticMatch, true},
                                   {"c", JudgeStage::kSemanticMatch, false},
                                   {"a", JudgeStage::kCrossVerify, true},
                                   {"b", JudgeStage::kCrossVerify, false}};
  const auto b = stats(ledger, 4);
  CHECK(b.filter_rate == a.filter_rate);
  CHECK(b.verify_rate == a.verify_rate);
}

TEST_CASE("states only move forward") {
  auto c = candidate();
  advance_state(c, CandidateState::kFilteredAccept);
  advance_state(c, CandidateState::kVerified);
  CHECK(c.state == CandidateState::kVerified);
  CHECK_THROWS_AS(advance_state(c, CandidateState::kGenerated), InvariantError);
  auto d = candidate();
  CHECK_THROWS_AS(advance_state(d, CandidateState::kVerified), InvariantError);
  advance_state(d, CandidateState::kFilteredReject);
  CHECK_THROWS_AS(advance_state(d, CandidateState::kVerified), InvariantError);
  CHECK(parse_state(to_string(CandidateState::kRejected)) == CandidateState::kRejected);
  CHECK_THROWS(parse_state("done"));
}

TEST_CASE("retry with exponential backoff") {
  std::vector<std::chrono::milliseconds> slept;
  FlakyClient flaky(2);
  RetryingClient client(flaky, {}, [&](auto d) { slept.push_back(d); });
  CHECK(client.ask({}).text == "ok");
  CHECK(flaky.calls == 3);
  REQUIRE(slept.size() == 2);
  CHECK(slept[0].count() == 200);
  CHECK(slept[1].count() == 400);

  FlakyClient dead(10);
  RetryingClient gives_up(dead, {}, [](auto) {});
  CHECK_THROWS_AS(gives_up.ask({}), JudgeError);
  CHECK(dead.calls == 3);
}

TEST_CASE("overall yield follows the product of stage rates") {
  auto cs = synthetic(100, 100);
  StubSet stubs(0.9, 1 - 0.2525 / 0.9, 0.8937, 77, truth_table(100, 100));
  StubSet::Router router(stubs);
  VerdictLedger ledger;
  const auto report = run_pipeline(cs, PreprocessPlan{},
                                   {router, stubs.judge, stubs.verifier}, ledger);
  const auto& s = report.stats;
  CHECK(s.n_generated == 10000);
  CHECK(s.filter_rate == doctest::Approx(0.2525).epsilon(0.1));
  CHECK(std::abs(s.verify_rate - 0.8937) <= 0.02);
  CHECK(s.overall_rate == doctest::Approx(s.filter_rate * s.verify_rate).epsilon(1e-12));
  CHECK(std::abs(s.overall_rate - 0.2525 * 0.8937) <= 0.02);
  CHECK(report.parked.empty());
}

TEST_CASE("ledger replay reproduces the run without new queries") {
  auto cs = synthetic(10, 20);
  StubSet stubs(0.8, 0.4, 0.9, 5, truth_table(10, 20));
  StubSet::Router router(stubs);
  std::ostringstream sink;
  VerdictLedger ledger;
  ledger.set_sink(&sink);
  const auto first = run_pipeline(cs, PreprocessPlan{}, {router, stubs.judge, stubs.verifier}, ledger);

  std::istringstream in(sink.str());
  VerdictLedger replay(VerdictLedger::read_jsonl(in));
  auto again = synthetic(10, 20);
  TableModel offline(Table{});  // any query would throw std::out_of_range
  const auto second = run_pipeline(again, PreprocessPlan{}, {offline, offline, offline}, replay);
  CHECK(offline.calls == 0);
  CHECK(second.stats.n_verified == first.stats.n_verified);
  CHECK(second.stats.n_filter_accepted == first.stats.n_filter_accepted);
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(again[i].state == cs[i].state);
  CHECK(stats(ledger.snapshot(), 200).overall_rate == first.stats.overall_rate);
}

TEST_CASE("duplicate verdicts are rejected") {
  VerdictLedger ledger;
  ledger.append({"a", JudgeStage::kCrossVerify, true});
  CHECK_THROWS_AS(ledger.append({"a", JudgeStage::kCrossVerify, false}), InvariantError);
  CHECK(*ledger.find("a", JudgeStage::kCrossVerify));
  CHECK_FALSE(ledger.find("a", JudgeStage::kFilterOriginal));
  std::istringstream bad("{\"candidate_id\":\"a\"}\n");
  CHECK_THROWS(VerdictLedger::read_jsonl(bad));
}

TEST_CASE("persistent failures park candidates and leave them out of the stats") {
  auto cs = synthetic(1, 3);
  StubSet stubs(1.0, 0.0, 1.0, 1, truth_table(1, 3));
  StubSet::Router router(stubs);
  TableModel down(Table{{"vid0.mp4", "!"}});
  VerdictLedger ledger;
  const auto report = run_pipeline(cs, PreprocessPlan{}, {router, stubs.judge, down}, ledger);
  CHECK(report.parked.size() == 3);
  CHECK(report.stats.n_parked == 3);
  CHECK(report.stats.n_generated == 0);
  CHECK(report.stats.empty);
  for (const auto& c : cs) CHECK(c.state == CandidateState::kFilteredAccept);
}

TEST_CASE("transient failures are absorbed by retries") {
  auto cs = synthetic(20, 20);
  const auto truth = truth_table(20, 20);
  StubSet flaky(0.8, 0.3, 0.9, 3, truth, 0.3);
  StubSet clean(0.8, 0.3, 0.9, 3, truth);
  StubSet::Router flaky_router(flaky), clean_router(clean);
  RetryingClient::Sleeper no_wait = [](auto) {};
  RetryingClient retry_filter(flaky_router, {}, no_wait);
  RetryingClient retry_verify(flaky.verifier, {}, no_wait);
  VerdictLedger l1, l2;
  auto copy = cs;
  const auto a = run_pipeline(cs, PreprocessPlan{}, {retry_filter, flaky.judge, retry_verify}, l1,
                              {1, 3});
  const auto b = run_pipeline(copy, PreprocessPlan{}, {clean_router, clean.judge, clean.verifier}, l2);
  CHECK(a.parked.empty());
  CHECK(a.stats.n_verified == b.stats.n_verified);
  CHECK_FALSE(retry_filter.backoffs().empty());
}

TEST_CASE("worker count does not change the outcome") {
  const auto truth = truth_table(30, 30);
  std::size_t verified[2];
  int idx = 0;
  for (int workers : {1, 8}) {
    auto cs = synthetic(30, 30);
    StubSet stubs(0.7, 0.3, 0.85, 11, truth);
    StubSet::Router router(stubs);
    VerdictLedger ledger;
    verified[idx++] =
        run_pipeline(cs, PreprocessPlan{}, {router, stubs.judge, stubs.verifier}, ledger, {workers, 1})
            .stats.n_verified;
  }
  CHECK(verified[0] == verified[1]);
}

TEST_CASE("preprocess plan derives references and commands") {
  PreprocessPlan plan;
  CHECK(plan.degraded_ref("a/b.mp4") == "a/b.200kbps.mp4");
  CHECK(plan.concat_ref("a/b.mp4") == "a/b.concat.mp4");
  plan.transcode_template = "ffmpeg -i {in} -b:v {kbps}k {out}";
  auto cs = synthetic(2, 3);
  const auto cmds = plan.commands(cs);
  REQUIRE(cmds.size() == 2);
  CHECK(cmds[0] == "ffmpeg -i vid0.mp4 -b:v 200k vid0.200kbps.mp4");
  CHECK(plan.run(cs) == 0);  // dry run
}

TEST_CASE("manifest round trip") {
  auto cs = synthetic(2, 2);
  cs[1].state = CandidateState::kFilteredReject;
  cs[0].question = "Quote \"this\", please";
  std::ostringstream out;
  write_manifest(out, cs);
  std::istringstream in(out.str());
  const auto back = read_manifest(in);
  REQUIRE(back.size() == 4);
  CHECK(back[0].question == cs[0].question);
  CHECK(back[1].state == CandidateState::kFilteredReject);
  CHECK(back[3].answer == "detail 1-1");
  std::istringstream bad("{\"id\": 3}\n");
  CHECK_THROWS_AS(read_manifest(bad), ConfigError);
}
