#include "artic/cc.hpp"

#include <algorithm>
#include <cmath>

namespace artic::cc {

CcKind parse_cc_kind(std::string_view name) {
  if (name == "gcc") return CcKind::kGcc;
  if (name == "bbr") return CcKind::kBbr;
  throw ConfigError("unknown cc '" + std::string(name) + "' (gcc | bbr)");
}

std::string_view to_string(CcKind kind) {
  return kind == CcKind::kGcc ? "gcc" : "bbr";
}

// ---------------------------------------------------------------------------
// DelayGradientEstimator

DelayGradientEstimator::DelayGradientEstimator(CcConfig config)
    : config_(config), estimate_kbps_(config.initial_kbps) {
  if (config_.window_groups < 2) throw ConfigError("trend window too small");
  if (config_.floor_kbps <= 0.0) throw ConfigError("cc floor must be > 0");
}

Kbps DelayGradientEstimator::apply_rate_control(const CcConfig& config,
                                                DelayMode mode, Kbps previous,
                                                Kbps receive_rate,
                                                double increase_multiplier) {
  Kbps next = previous;
  switch (mode) {
    case DelayMode::kDecrease:
      next = config.decrease_factor * receive_rate;
      break;
    case DelayMode::kHold:
      break;
    case DelayMode::kIncrease: {
      // The cap bounds growth; it never pulls an estimate down by itself.
      const Kbps cap = config.max_over_receive_rate * receive_rate;
      next = std::max(previous, std::min(previous * increase_multiplier, cap));
      break;
    }
  }
  return std::max(next, config.floor_kbps);
}

Kbps DelayGradientEstimator::receive_rate() const {
  return static_cast<double>(window_bytes_) * 8.0 / config_.receive_window_ms;
}

void DelayGradientEstimator::on_ack(const net::DeliveryRecord& record) {
  if (record.dropped) {
    loss_window_.push_back({record.enqueue_ms, true});
    ++losses_in_window_;
    return;
  }
  if (have_packet_id_ &&
      (record.packet_id <= last_packet_id_ ||
       record.arrive_ms < last_arrive_ms_)) {
    ++ignored_;
    return;
  }
  have_packet_id_ = true;
  last_packet_id_ = record.packet_id;
  initialized_ = true;
  last_arrive_ms_ = record.arrive_ms;

  arrivals_.push_back({record.arrive_ms, record.size_bytes});
  window_bytes_ += record.size_bytes;
  while (!arrivals_.empty() &&
         arrivals_.front().arrive_ms <=
             record.arrive_ms - config_.receive_window_ms) {
    window_bytes_ -= arrivals_.front().bytes;
    arrivals_.pop_front();
  }
  highest_receive_rate_ = std::max(highest_receive_rate_, receive_rate());

  loss_window_.push_back({record.enqueue_ms, false});

  if (open_group_ &&
      record.enqueue_ms - open_group_->send_ms <= config_.burst_ms) {
    open_group_->first_arrive_ms =
        std::min(open_group_->first_arrive_ms, record.arrive_ms);
    return;
  }
  if (open_group_) close_group(record.arrive_ms);
  open_group_ = Group{record.enqueue_ms, record.arrive_ms, true};
}

void DelayGradientEstimator::close_group(Millis now) {
  const Group group = *open_group_;
  open_group_.reset();
  if (previous_group_) {
    const double variation =
        (group.first_arrive_ms - previous_group_->first_arrive_ms) -
        (group.send_ms - previous_group_->send_ms);
    accumulated_delay_ms_ += variation;
    group_index_ += 1.0;
    window_.push_back({group_index_, accumulated_delay_ms_});
    while (window_.size() > config_.window_groups) window_.pop_front();
    update_trend();
    update_rate(now);
  }
  previous_group_ = group;
}

void DelayGradientEstimator::update_trend() {
  if (window_.size() < 2) {
    trend_ = 0.0;
    return;
  }
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (const auto& p : window_) {
    mean_x += p.index;
    mean_y += p.accumulated_ms;
  }
  const double n = static_cast<double>(window_.size());
  mean_x /= n;
  mean_y /= n;
  double num = 0.0;
  double den = 0.0;
  for (const auto& p : window_) {
    num += (p.index - mean_x) * (p.accumulated_ms - mean_y);
    den += (p.index - mean_x) * (p.index - mean_x);
  }
  trend_ = den > 0.0 ? num / den : 0.0;
}

double DelayGradientEstimator::loss_fraction(Millis now) const {
  (void)now;
  if (loss_window_.empty()) return 0.0;
  return static_cast<double>(losses_in_window_) /
         static_cast<double>(loss_window_.size());
}

void DelayGradientEstimator::update_rate(Millis now) {
  while (!loss_window_.empty() &&
         loss_window_.front().time_ms < now - config_.loss_window_ms) {
    if (loss_window_.front().lost) --losses_in_window_;
    loss_window_.pop_front();
  }
  const double threshold = config_.overuse_slope_ms_per_group;
  if (trend_ > threshold) {
    ++overuse_streak_;
  } else {
    overuse_streak_ = 0;
  }
  if (loss_fraction(now) > config_.loss_threshold ||
      overuse_streak_ >= config_.overuse_consecutive) {
    mode_ = DelayMode::kDecrease;
  } else if (trend_ < -threshold) {
    mode_ = DelayMode::kHold;
  } else if (trend_ > threshold) {
    mode_ = DelayMode::kHold;  // first overuse sample: wait for confirmation
  } else {
    mode_ = DelayMode::kIncrease;
  }
  if (mode_ == DelayMode::kDecrease) startup_ = false;

  double multiplier = config_.increase_factor;
  if (!startup_) {
    const Millis dt = have_update_ ? std::max(0.0, now - last_update_ms_) : 0.0;
    multiplier = std::pow(config_.increase_factor, std::min(dt, 1000.0) / 1000.0);
  }
  estimate_kbps_ = apply_rate_control(config_, mode_, estimate_kbps_,
                                      receive_rate(), multiplier);
  last_update_ms_ = now;
  have_update_ = true;
}

CcEstimate DelayGradientEstimator::estimate(Millis now) const {
  return {std::max(estimate_kbps_, config_.floor_kbps), now};
}

// ---------------------------------------------------------------------------
// DeliveryRateEstimator

DeliveryRateEstimator::DeliveryRateEstimator(CcConfig config)
    : config_(config) {
  if (config_.rate_sample_packets < 2)
    throw ConfigError("rate sample needs at least two packets");
}

void DeliveryRateEstimator::push_rate_sample(Millis t, Kbps rate) {
  while (!max_rate_.empty() && max_rate_.back().value <= rate)
    max_rate_.pop_back();
  max_rate_.push_back({t, rate});
  while (!max_rate_.empty() &&
         max_rate_.front().time_ms < t - config_.max_filter_window_ms)
    max_rate_.pop_front();
}

void DeliveryRateEstimator::push_rtt_sample(Millis t, Millis rtt) {
  while (!min_rtt_.empty() && min_rtt_.back().value >= rtt)
    min_rtt_.pop_back();
  min_rtt_.push_back({t, rtt});
  while (!min_rtt_.empty() &&
         min_rtt_.front().time_ms < t - config_.min_rtt_window_ms)
    min_rtt_.pop_front();
}

void DeliveryRateEstimator::on_ack(const net::DeliveryRecord& record) {
  if (record.dropped) return;
  if (have_packet_id_ && (record.packet_id <= last_packet_id_ ||
                          (!recent_.empty() &&
                           record.arrive_ms < recent_.back().arrive_ms))) {
    ++ignored_;
    return;
  }
  have_packet_id_ = true;
  last_packet_id_ = record.packet_id;
  const Millis t = record.arrive_ms;

  push_rtt_sample(t, record.arrive_ms - record.enqueue_ms);

  // Sliding-interval sample over the most recent acks.
  recent_.push_back({t, record.size_bytes});
  while (recent_.size() > config_.rate_sample_packets) recent_.pop_front();
  if (recent_.size() == config_.rate_sample_packets) {
    const Millis span = recent_.back().arrive_ms - recent_.front().arrive_ms;
    if (span >= 1.0) {
      std::size_t bytes = 0;
      for (std::size_t i = 1; i < recent_.size(); ++i) bytes += recent_[i].bytes;
      push_rate_sample(t, static_cast<double>(bytes) * 8.0 / span);
    }
  }

  // Dispersion of a frame's back-to-back packets.
  if (burst_open_ && record.frame_id == burst_frame_) {
    burst_bytes_after_first_ += record.size_bytes;
    burst_last_arrive_ = t;
    const Millis span = burst_last_arrive_ - burst_first_arrive_;
    if (span > 0.0)
      push_rate_sample(
          t, static_cast<double>(burst_bytes_after_first_) * 8.0 / span);
  } else {
    burst_open_ = true;
    burst_frame_ = record.frame_id;
    burst_first_arrive_ = t;
    burst_last_arrive_ = t;
    burst_bytes_after_first_ = 0;
  }
}

std::optional<Kbps> DeliveryRateEstimator::max_delivery_rate() const {
  if (max_rate_.empty()) return std::nullopt;
  return max_rate_.front().value;
}

std::optional<Millis> DeliveryRateEstimator::min_rtt() const {
  if (min_rtt_.empty()) return std::nullopt;
  return min_rtt_.front().value;
}

CcEstimate DeliveryRateEstimator::estimate(Millis now) const {
  // The front of the monotone deque that is still inside the window is the
  // windowed maximum as of `now`.
  for (const auto& v : max_rate_) {
    if (v.time_ms >= now - config_.max_filter_window_ms)
      return {std::max(v.value, config_.floor_kbps), now};
  }
  if (!max_rate_.empty()) return {std::max(max_rate_.back().value, config_.floor_kbps), now};
  return {std::max(config_.initial_kbps, config_.floor_kbps), now};
}

std::unique_ptr<BandwidthEstimator> make_estimator(CcKind kind,
                                                   const CcConfig& config) {
  if (kind == CcKind::kGcc)
    return std::make_unique<DelayGradientEstimator>(config);
  return std::make_unique<DeliveryRateEstimator>(config);
}

}  // namespace artic::cc
