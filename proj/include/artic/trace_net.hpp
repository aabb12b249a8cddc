#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "artic/common.hpp"

namespace artic::net {

inline constexpr std::size_t kDefaultQueuePackets = 60;
inline constexpr std::size_t kDefaultMtuBytes = 1200;
inline constexpr Millis kDefaultPropDelayMs = 20.0;

struct TraceSample {
  Millis time_ms = 0.0;
  Kbps capacity_kbps = 0.0;
};

// Piecewise-constant uplink capacity. Sample i holds from its time up to
// (excluding) the next sample's time; the last sample holds until the
// trace duration. A looped trace repeats with period duration_ms().
class BandwidthTrace {
 public:
  // When `duration_ms` is omitted the last sample lasts as long as the gap
  // before it (a single-sample trace never ends).
  BandwidthTrace(std::vector<TraceSample> samples, bool loop,
                 std::optional<Millis> duration_ms = std::nullopt);

  static BandwidthTrace constant(Kbps capacity_kbps);
  // Reads the `time_ms,bandwidth_kbps` CSV format.
  static BandwidthTrace load_csv(const std::filesystem::path& path, bool loop);
  static BandwidthTrace parse_csv(std::istream& in, bool loop);
  void write_csv(std::ostream& out) const;

  Kbps capacity_at(Millis t) const;
  // First instant strictly after `t` at which the capacity may change;
  // +inf when it never does.
  Millis next_change_after(Millis t) const;

  const std::vector<TraceSample>& samples() const { return samples_; }
  bool loop() const { return loop_; }
  Millis duration_ms() const { return duration_ms_; }

 private:
  std::size_t index_at(Millis t_in_cycle) const;
  Millis to_cycle(Millis t) const;

  std::vector<TraceSample> samples_;
  bool loop_;
  Millis duration_ms_;
};

Kbps capacity_at(const BandwidthTrace& trace, Millis t);

struct Packet {
  PacketId id = 0;
  FrameId frame_id = 0;
  std::uint32_t seq_in_frame = 0;
  std::uint32_t packets_in_frame = 1;
  std::size_t size_bytes = 0;
  Millis enqueue_time_ms = 0.0;
  std::uint32_t attempt = 0;  // 0 for the first transmission
};

struct DeliveryRecord {
  PacketId packet_id = 0;
  FrameId frame_id = 0;
  std::uint32_t seq_in_frame = 0;
  std::uint32_t packets_in_frame = 1;
  std::size_t size_bytes = 0;
  Millis enqueue_ms = 0.0;
  Millis depart_ms = 0.0;
  Millis arrive_ms = 0.0;
  bool dropped = false;
};

DeliveryRecord drop_record(const Packet& pkt);

// Splits a frame into ceil(bytes / mtu) packets; ids are taken from
// `next_id`, which is advanced.
std::vector<Packet> packetize(FrameId frame_id, std::size_t frame_bytes,
                              Millis now, PacketId& next_id,
                              std::size_t mtu = kDefaultMtuBytes);

struct LinkConfig {
  std::size_t queue_packets = kDefaultQueuePackets;
  Millis prop_delay_ms = kDefaultPropDelayMs;
  std::size_t mtu_bytes = kDefaultMtuBytes;
};

// Drop-tail bottleneck served at the trace capacity. The packet currently
// being serialized still occupies a queue slot.
class Link {
 public:
  explicit Link(LinkConfig config = {});

  // Appends `pkt` unless the queue is full. The link must already have been
  // advanced to `now` when it holds packets.
  bool enqueue(const Packet& pkt, Millis now);

  // Serves the queue in FIFO order up to `until` and returns the packets
  // that departed in (now, until].
  std::vector<DeliveryRecord> advance(const BandwidthTrace& trace,
                                      Millis until);

  std::size_t queue_length() const { return queue_.size(); }
  std::uint64_t drops() const { return drops_; }
  std::uint64_t accepted() const { return accepted_; }
  std::uint64_t delivered() const { return delivered_; }
  Millis now() const { return clock_ms_; }
  const LinkConfig& config() const { return config_; }

 private:
  void check_invariants() const;

  LinkConfig config_;
  std::deque<Packet> queue_;
  double head_remaining_bits_ = 0.0;
  bool head_in_service_ = false;
  Millis clock_ms_ = 0.0;
  std::uint64_t drops_ = 0;
  std::uint64_t accepted_ = 0;
  std::uint64_t delivered_ = 0;
};

// Outcome of a frame: latency when every packet eventually arrived,
// otherwise a loss (no latency value).
struct FrameOutcome {
  std::optional<Millis> latency_ms;
  bool lost() const { return !latency_ms.has_value(); }
};

// `records` holds every record (delivered or dropped) for one frame.
FrameOutcome frame_latency(std::span<const DeliveryRecord> records,
                           Millis encode_time_ms);

inline constexpr const char* kDeliveryLogHeader =
    "packet_id,frame_id,enqueue_ms,depart_ms,arrive_ms,dropped";

void write_delivery_row(std::ostream& out, const DeliveryRecord& rec);

}  // namespace artic::net
