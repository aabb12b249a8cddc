#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "artic/common.hpp"
#include "artic/trace_net.hpp"

namespace artic::cc {

struct CcEstimate {
  Kbps bandwidth_kbps = 0.0;
  Millis at_time_ms = 0.0;
};

struct CcConfig {
  Kbps initial_kbps = 300.0;
  Kbps floor_kbps = 50.0;
  // Delay-gradient estimator.
  std::size_t window_groups = 20;
  Millis burst_ms = 5.0;
  double overuse_slope_ms_per_group = 1.0;
  int overuse_consecutive = 2;
  double decrease_factor = 0.85;
  double increase_factor = 1.08;  // per update in startup, per second after
  double max_over_receive_rate = 1.5;
  Millis receive_window_ms = 500.0;
  double loss_threshold = 0.10;
  Millis loss_window_ms = 1000.0;
  // Delivery-rate estimator.
  Millis max_filter_window_ms = 10000.0;
  Millis min_rtt_window_ms = 10000.0;
  std::size_t rate_sample_packets = 8;
};

enum class CcKind { kGcc, kBbr };

CcKind parse_cc_kind(std::string_view name);
std::string_view to_string(CcKind kind);

// Bandwidth estimate B_t derived purely from the delivery record stream.
class BandwidthEstimator {
 public:
  virtual ~BandwidthEstimator() = default;
  // Records must arrive in delivery order; dropped records are loss notices.
  virtual void on_ack(const net::DeliveryRecord& record) = 0;
  virtual CcEstimate estimate(Millis now) const = 0;
  virtual std::string_view name() const = 0;

  std::uint64_t ignored_records() const { return ignored_; }

 protected:
  std::uint64_t ignored_ = 0;
};

enum class DelayMode { kIncrease, kHold, kDecrease };

// GCC-like: least-squares trend of accumulated inter-group delay variation
// drives an AIMD-style rate controller around the measured receive rate.
class DelayGradientEstimator final : public BandwidthEstimator {
 public:
  explicit DelayGradientEstimator(CcConfig config = {});

  void on_ack(const net::DeliveryRecord& record) override;
  CcEstimate estimate(Millis now) const override;
  std::string_view name() const override { return "gcc"; }

  DelayMode mode() const { return mode_; }
  double trend() const { return trend_; }
  Kbps receive_rate() const;
  Kbps highest_receive_rate() const { return highest_receive_rate_; }
  bool in_startup() const { return startup_; }

  // The rate-control step in isolation, exposed for testing the law.
  static Kbps apply_rate_control(const CcConfig& config, DelayMode mode,
                                 Kbps previous, Kbps receive_rate,
                                 double increase_multiplier);

 private:
  struct Group {
    Millis send_ms = 0.0;
    Millis first_arrive_ms = 0.0;
    bool has_arrival = false;
  };
  struct TrendPoint {
    double index = 0.0;
    double accumulated_ms = 0.0;
  };
  struct Arrival {
    Millis arrive_ms;
    std::size_t bytes;
  };
  struct LossSample {
    Millis time_ms;
    bool lost;
  };

  void close_group(Millis now);
  void update_trend();
  void update_rate(Millis now);
  double loss_fraction(Millis now) const;

  CcConfig config_;
  bool initialized_ = false;
  PacketId last_packet_id_ = 0;
  bool have_packet_id_ = false;

  std::optional<Group> open_group_;
  std::optional<Group> previous_group_;
  double accumulated_delay_ms_ = 0.0;
  double group_index_ = 0.0;
  std::deque<TrendPoint> window_;
  double trend_ = 0.0;
  int overuse_streak_ = 0;
  DelayMode mode_ = DelayMode::kIncrease;
  bool startup_ = true;

  std::deque<Arrival> arrivals_;
  std::size_t window_bytes_ = 0;
  Millis last_arrive_ms_ = 0.0;
  Kbps highest_receive_rate_ = 0.0;
  std::deque<LossSample> loss_window_;
  std::size_t losses_in_window_ = 0;

  Kbps estimate_kbps_;
  Millis last_update_ms_ = 0.0;
  bool have_update_ = false;
};

// BBR-like: windowed maximum of delivery-rate samples plus a windowed
// minimum RTT. No pacing-gain cycling.
class DeliveryRateEstimator final : public BandwidthEstimator {
 public:
  explicit DeliveryRateEstimator(CcConfig config = {});

  void on_ack(const net::DeliveryRecord& record) override;
  CcEstimate estimate(Millis now) const override;
  std::string_view name() const override { return "bbr"; }

  std::optional<Millis> min_rtt() const;
  std::optional<Kbps> max_delivery_rate() const;

 private:
  struct TimedValue {
    Millis time_ms;
    double value;
  };
  struct Ack {
    Millis arrive_ms;
    std::size_t bytes;
  };
  void push_rate_sample(Millis t, Kbps rate);
  void push_rtt_sample(Millis t, Millis rtt);

  CcConfig config_;
  PacketId last_packet_id_ = 0;
  bool have_packet_id_ = false;
  std::deque<Ack> recent_;  // last `rate_sample_packets` acks
  // Monotonic deques implementing time-bounded max/min filters.
  std::deque<TimedValue> max_rate_;
  std::deque<TimedValue> min_rtt_;
  // Per-frame dispersion: first arrival and bytes after the first packet.
  FrameId burst_frame_ = 0;
  bool burst_open_ = false;
  Millis burst_first_arrive_ = 0.0;
  std::size_t burst_bytes_after_first_ = 0;
  Millis burst_last_arrive_ = 0.0;
};

std::unique_ptr<BandwidthEstimator> make_estimator(CcKind kind,
                                                   const CcConfig& config);

}  // namespace artic::cc
