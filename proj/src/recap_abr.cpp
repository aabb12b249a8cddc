#include "artic/recap_abr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace artic::abr {

void ControllerConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");
  if (!(gamma >= 1.0)) throw ConfigError("gamma must be >= 1");
  if (!(floor_kbps > 0.0 && floor_kbps < ceiling_kbps))
    throw ConfigError("require 0 < floor_kbps < ceiling_kbps");
  if (!(stale_after_ms > 0.0)) throw ConfigError("stale_after_ms must be > 0");
}

double confidence_gap(const ControllerConfig& cfg, double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw InputError("confidence must be in [0, 1], got " +
                     std::to_string(confidence));
  return (cfg.tau - confidence) / cfg.tau;
}

double weight(const ControllerConfig& cfg, double gap) {
  if (gap == 0.0) return 0.0;
  return gap * std::pow(std::abs(gap), cfg.gamma - 1.0);
}

bool is_stale(const ControllerConfig& cfg,
              const std::optional<ConfidenceSample>& latest, Millis now) {
  return !latest || now - latest->delivered_at_ms > cfg.stale_after_ms;
}

namespace {

// Floor and ceiling first, then the estimate: headroom wins over the floor.
Kbps bound(const ControllerConfig& cfg, Kbps rate, Kbps estimate) {
  return std::min(std::clamp(rate, cfg.floor_kbps, cfg.ceiling_kbps), estimate);
}

BitrateDecision fault(const ControllerConfig& cfg) {
  BitrateDecision d;
  d.rate_kbps = cfg.floor_kbps;
  d.capped_by_cc = true;
  d.estimator_fault = true;
  return d;
}

}  // namespace

BitrateDecision next_bitrate(const ControllerConfig& cfg, Kbps current_kbps,
                             Kbps estimate_kbps,
                             const std::optional<ConfidenceSample>& latest,
                             Millis now) {
  if (!(estimate_kbps > 0.0)) return fault(cfg);
  BitrateDecision d;
  if (is_stale(cfg, latest, now)) {
    d.rate_kbps = bound(cfg, estimate_kbps, estimate_kbps);
    d.capped_by_cc = true;
    return d;
  }
  d.gap = confidence_gap(cfg, latest->confidence);
  d.weight = weight(cfg, d.gap);
  const Kbps moved = current_kbps + d.weight * (estimate_kbps - current_kbps);
  const Kbps raw = std::min(estimate_kbps, moved);
  d.capped_by_cc = estimate_kbps <= moved;
  d.rate_kbps = bound(cfg, raw, estimate_kbps);
  return d;
}

BitrateDecision cap_bitrate(const ControllerConfig& cfg, Kbps current_kbps,
                            Kbps estimate_kbps,
                            const std::optional<ConfidenceSample>& latest,
                            Millis now) {
  if (!(estimate_kbps > 0.0)) return fault(cfg);
  if (is_stale(cfg, latest, now))
    return next_bitrate(cfg, current_kbps, estimate_kbps, std::nullopt, now);
  BitrateDecision d;
  d.capped_by_cc = estimate_kbps < current_kbps;
  d.rate_kbps = bound(cfg, current_kbps, estimate_kbps);
  return d;
}

RecapController::RecapController(ControllerConfig cfg)
    : cfg_(cfg), target_kbps_(cfg.floor_kbps) {
  cfg_.validate();
}

void RecapController::on_confidence(const ConfidenceSample& sample,
                                    Kbps current_kbps, Kbps estimate_kbps,
                                    Millis now) {
  latest_ = sample;
  last_ = next_bitrate(cfg_, current_kbps, estimate_kbps, latest_, now);
  target_kbps_ = last_.rate_kbps;
}

void RecapController::on_tick(Kbps estimate_kbps, Millis now) {
  last_ = cap_bitrate(cfg_, target_kbps_, estimate_kbps, latest_, now);
  target_kbps_ = last_.rate_kbps;
}

Kbps RecapController::sending_rate(Kbps estimate_kbps, Millis now) const {
  if (!(estimate_kbps > 0.0)) return cfg_.floor_kbps;
  if (is_stale(cfg_, latest_, now)) return bound(cfg_, estimate_kbps, estimate_kbps);
  return bound(cfg_, target_kbps_, estimate_kbps);
}

}  // namespace artic::abr
