#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "artic/codec_model.hpp"
#include "artic/common.hpp"
#include "artic/zeco_stream.hpp"

namespace artic::oracle {

// Question categories, with the share each has in the generated benchmark.
struct TagShare {
  const char* tag;
  double share;
};
inline constexpr TagShare kTagTaxonomy[] = {
    {"text_rich", 0.8186},   {"attribute", 0.1153}, {"object", 0.0356},
    {"counting", 0.0254},    {"action", 0.0036},    {"spatial", 0.0015},
};

struct QaSample {
  std::string id;
  Millis ask_at_ms = 0.0;
  zeco::BoundingBox critical_region;  // used when `object` is empty
  std::string object;                 // region follows this track if set
  double legibility_qp = 30.0;
  std::string tag;
};

// Linearly interpolated keyframes of one object's box.
struct ObjectTrack {
  std::string name;
  std::vector<zeco::BoundingBox> keyframes;  // valid_at_ms increasing

  zeco::BoundingBox box_at(Millis t) const;
};

struct ScenarioScript {
  std::vector<QaSample> samples;  // sorted by ask time
  std::map<std::string, ObjectTrack> tracks;

  zeco::BoundingBox region_at(const QaSample& sample, Millis t) const;
  // The sample the conversation is heading to at `t`: first with
  // ask >= t, else the last one. nullptr for an empty script.
  const QaSample* current_sample(Millis t) const;

  void validate(int width, int height) const;

  static ScenarioScript parse(std::istream& in);
  static ScenarioScript load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
};

struct ScriptGenConfig {
  std::size_t count = 200;
  Millis first_ask_ms = 3000.0;
  Millis spacing_ms = 3000.0;
  double max_area_fraction = 0.30;
  double min_area_fraction = 0.02;
  double legibility_min = 26.0;
  double legibility_max = 46.0;
  double moving_fraction = 0.0;  // share of samples on a moving track
  std::uint64_t seed = 1;
};

// Random QA script with tags drawn from kTagTaxonomy.
ScenarioScript generate_script(const ScriptGenConfig& cfg, int width,
                               int height);

struct OracleConfig {
  double sigmoid_scale = 2.0;
  Millis emit_period_ms = 1000.0;
  Millis min_feedback_latency_ms = 1200.0;
  Millis max_feedback_latency_ms = 1520.0;
  double prediction_noise_px = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FeedbackMessage {
  double confidence = 0.0;
  zeco::TrajectoryPrediction predictions;
  Millis emitted_at_ms = 0.0;
  Millis deliver_at_ms = 0.0;
};

// Correct iff the mean achieved QP over patches overlapping the critical
// region is <= the legibility QP. A lost frame (nullptr) is incorrect.
bool grade(const QaSample& sample, const zeco::BoundingBox& region,
           const codec::EncodedFrame* frame);
bool grade_qp(double critical_mean_qp, double legibility_qp);

// 1 / (1 + exp((crit_qp - legibility_qp) / s)).
double confidence_from_qp(const OracleConfig& cfg, double critical_mean_qp,
                          double legibility_qp);
double confidence(const OracleConfig& cfg, const QaSample& sample,
                  const zeco::BoundingBox& region,
                  const codec::EncodedFrame* frame);

// Simulated server-side model. Confidence is judged on the newest frame the
// server holds; predictions follow the scripted ground truth.
class Oracle {
 public:
  Oracle(OracleConfig cfg, const ScenarioScript& script,
         codec::FrameSpec frame);

  // Emits a message when at least one period has elapsed since the last.
  std::optional<FeedbackMessage> emit_feedback(
      Millis now, const codec::EncodedFrame* latest_delivered);

  Millis next_emission_ms() const { return next_emit_ms_; }
  static constexpr Millis kPredictionOffsetsMs[] = {0.0, 500.0, 1000.0,
                                                    1500.0};

 private:
  OracleConfig cfg_;
  const ScenarioScript& script_;
  codec::FrameSpec frame_;
  std::mt19937_64 rng_;
  Millis next_emit_ms_;
};

}  // namespace artic::oracle
