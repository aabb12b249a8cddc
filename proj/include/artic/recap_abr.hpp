#pragma once

#include <optional>

#include "artic/common.hpp"

namespace artic::abr {

struct ControllerConfig {
  double tau = 0.8;    // confidence threshold
  double gamma = 2.0;  // sensitivity exponent
  Kbps floor_kbps = 100.0;
  Kbps ceiling_kbps = 4000.0;
  Millis stale_after_ms = 3000.0;

  // Throws ConfigError when the invariants do not hold.
  void validate() const;
};

struct ConfidenceSample {
  double confidence = 0.0;
  Millis observed_at_ms = 0.0;
  Millis delivered_at_ms = 0.0;
};

struct BitrateDecision {
  Kbps rate_kbps = 0.0;
  double gap = 0.0;     // normalized confidence gap
  double weight = 0.0;  // signed |gap|^gamma
  bool capped_by_cc = false;
  bool estimator_fault = false;
};

// (tau - c) / tau. Throws InputError when c is outside [0, 1].
double confidence_gap(const ControllerConfig& cfg, double confidence);

// gap * |gap|^(gamma - 1): keeps the sign of the gap, magnitude |gap|^gamma.
double weight(const ControllerConfig& cfg, double gap);

bool is_stale(const ControllerConfig& cfg,
              const std::optional<ConfidenceSample>& latest, Millis now);

// One controller step. With fresh confidence the rate moves toward the CC
// estimate by the weighted gap and never exceeds it; without fresh
// confidence the controller tracks the CC estimate.
BitrateDecision next_bitrate(const ControllerConfig& cfg, Kbps current_kbps,
                             Kbps estimate_kbps,
                             const std::optional<ConfidenceSample>& latest,
                             Millis now);

// Periodic tick between feedback messages: applies only the estimate cap
// (or the CC fallback when confidence is stale).
BitrateDecision cap_bitrate(const ControllerConfig& cfg, Kbps current_kbps,
                            Kbps estimate_kbps,
                            const std::optional<ConfidenceSample>& latest,
                            Millis now);

// Stateful wrapper used by the simulator: holds the latest confidence
// (hold-last, no smoothing) and the controller's target rate.
class RecapController {
 public:
  explicit RecapController(ControllerConfig cfg);

  void on_confidence(const ConfidenceSample& sample, Kbps current_kbps,
                     Kbps estimate_kbps, Millis now);
  void on_tick(Kbps estimate_kbps, Millis now);
  // Rate for the next frame; always <= the estimate.
  Kbps sending_rate(Kbps estimate_kbps, Millis now) const;

  const std::optional<ConfidenceSample>& latest() const { return latest_; }
  const BitrateDecision& last_decision() const { return last_; }
  Kbps target_kbps() const { return target_kbps_; }

 private:
  ControllerConfig cfg_;
  std::optional<ConfidenceSample> latest_;
  BitrateDecision last_;
  Kbps target_kbps_;
};

}  // namespace artic::abr
