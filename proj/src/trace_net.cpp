#include "artic/trace_net.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace artic {

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  std::string s(buf);
  if (s == "-0.000" || s == "-0") s.erase(0, 1);
  return s;
}

}  // namespace artic

namespace artic::net {

namespace {

constexpr Millis kInfinity = std::numeric_limits<Millis>::infinity();

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

BandwidthTrace::BandwidthTrace(std::vector<TraceSample> samples, bool loop,
                               std::optional<Millis> duration_ms)
    : samples_(std::move(samples)), loop_(loop) {
  if (samples_.empty()) throw ConfigError("bandwidth trace is empty");
  if (samples_.front().time_ms < 0.0)
    throw ConfigError("bandwidth trace starts before t=0");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!(samples_[i].capacity_kbps >= 0.0))
      throw ConfigError("bandwidth trace has a negative capacity");
    if (i > 0 && !(samples_[i].time_ms > samples_[i - 1].time_ms))
      throw ConfigError("bandwidth trace times must be strictly increasing");
  }
  if (duration_ms) {
    duration_ms_ = *duration_ms;
  } else if (samples_.size() == 1) {
    duration_ms_ = kInfinity;
  } else {
    const auto n = samples_.size();
    duration_ms_ = samples_[n - 1].time_ms +
                   (samples_[n - 1].time_ms - samples_[n - 2].time_ms);
  }
  if (!(duration_ms_ > samples_.back().time_ms))
    throw ConfigError("bandwidth trace duration must exceed the last sample");
}

BandwidthTrace BandwidthTrace::constant(Kbps capacity_kbps) {
  return BandwidthTrace({{0.0, capacity_kbps}}, false);
}

BandwidthTrace BandwidthTrace::parse_csv(std::istream& in, bool loop) {
  std::string line;
  std::vector<TraceSample> samples;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "time_ms,bandwidth_kbps")
        throw ConfigError("trace CSV must start with header "
                          "'time_ms,bandwidth_kbps'");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ConfigError("trace CSV line " + std::to_string(line_no) +
                        ": expected two columns");
    try {
      std::size_t used = 0;
      const std::string t_str = trim(line.substr(0, comma));
      const std::string c_str = trim(line.substr(comma + 1));
      const double t = std::stod(t_str, &used);
      if (used != t_str.size()) throw std::invalid_argument("t");
      const double c = std::stod(c_str, &used);
      if (used != c_str.size()) throw std::invalid_argument("c");
      samples.push_back({t, c});
    } catch (const std::logic_error&) {
      throw ConfigError("trace CSV line " + std::to_string(line_no) +
                        ": not numeric");
    }
  }
  if (!header_seen) throw ConfigError("trace CSV has no header");
  return BandwidthTrace(std::move(samples), loop);
}

BandwidthTrace BandwidthTrace::load_csv(const std::filesystem::path& path,
                                        bool loop) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path.string());
  return parse_csv(in, loop);
}

void BandwidthTrace::write_csv(std::ostream& out) const {
  out << "time_ms,bandwidth_kbps\n";
  for (const auto& s : samples_)
    out << format_fixed(s.time_ms) << ',' << format_fixed(s.capacity_kbps)
        << '\n';
}

Millis BandwidthTrace::to_cycle(Millis t) const {
  if (!loop_ || std::isinf(duration_ms_)) return t;
  return std::fmod(t, duration_ms_);
}

std::size_t BandwidthTrace::index_at(Millis t_in_cycle) const {
  // Last sample whose time <= t; times before the first sample map to it.
  auto it = std::upper_bound(
      samples_.begin(), samples_.end(), t_in_cycle,
      [](Millis t, const TraceSample& s) { return t < s.time_ms; });
  if (it == samples_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(samples_.begin(), it)) - 1;
}

Kbps BandwidthTrace::capacity_at(Millis t) const {
  if (t < 0.0) throw InputError("capacity_at: negative time");
  return samples_[index_at(to_cycle(t))].capacity_kbps;
}

Millis BandwidthTrace::next_change_after(Millis t) const {
  const Millis phase = to_cycle(t);
  const std::size_t i = index_at(phase);
  Millis boundary;
  if (phase < samples_.front().time_ms) {
    boundary = samples_.front().time_ms;
  } else if (i + 1 < samples_.size()) {
    boundary = samples_[i + 1].time_ms;
  } else if (loop_ && !std::isinf(duration_ms_)) {
    boundary = duration_ms_;
  } else {
    return kInfinity;
  }
  const Millis next = t + (boundary - phase);
  // Guard against fmod rounding landing exactly on the boundary.
  return next > t ? next : std::nextafter(t, kInfinity);
}

Kbps capacity_at(const BandwidthTrace& trace, Millis t) {
  return trace.capacity_at(t);
}

DeliveryRecord drop_record(const Packet& pkt) {
  DeliveryRecord rec;
  rec.packet_id = pkt.id;
  rec.frame_id = pkt.frame_id;
  rec.seq_in_frame = pkt.seq_in_frame;
  rec.packets_in_frame = pkt.packets_in_frame;
  rec.size_bytes = pkt.size_bytes;
  rec.enqueue_ms = pkt.enqueue_time_ms;
  rec.depart_ms = std::numeric_limits<double>::quiet_NaN();
  rec.arrive_ms = std::numeric_limits<double>::quiet_NaN();
  rec.dropped = true;
  return rec;
}

std::vector<Packet> packetize(FrameId frame_id, std::size_t frame_bytes,
                              Millis now, PacketId& next_id,
                              std::size_t mtu) {
  if (mtu == 0) throw ConfigError("MTU must be positive");
  if (frame_bytes == 0) return {};
  const std::size_t count = (frame_bytes + mtu - 1) / mtu;
  std::vector<Packet> packets;
  packets.reserve(count);
  std::size_t remaining = frame_bytes;
  for (std::size_t i = 0; i < count; ++i) {
    Packet p;
    p.id = next_id++;
    p.frame_id = frame_id;
    p.seq_in_frame = static_cast<std::uint32_t>(i);
    p.packets_in_frame = static_cast<std::uint32_t>(count);
    p.size_bytes = std::min(mtu, remaining);
    p.enqueue_time_ms = now;
    remaining -= p.size_bytes;
    packets.push_back(p);
  }
  return packets;
}

Link::Link(LinkConfig config) : config_(config) {
  if (config_.queue_packets == 0) throw ConfigError("queue must hold packets");
  if (config_.prop_delay_ms < 0.0)
    throw ConfigError("propagation delay must be non-negative");
}

bool Link::enqueue(const Packet& pkt, Millis now) {
  if (pkt.size_bytes == 0 || pkt.size_bytes > config_.mtu_bytes)
    throw InputError("packet size outside (0, MTU]");
  if (now < clock_ms_)
    throw InvariantError("enqueue into the link's past");
  if (queue_.empty()) {
    clock_ms_ = now;
  } else if (now > clock_ms_) {
    throw InvariantError("link must be advanced before enqueueing");
  }
  if (queue_.size() >= config_.queue_packets) {
    ++drops_;
    return false;
  }
  queue_.push_back(pkt);
  ++accepted_;
  check_invariants();
  return true;
}

std::vector<DeliveryRecord> Link::advance(const BandwidthTrace& trace,
                                          Millis until) {
  if (until < clock_ms_) throw InvariantError("advance into the past");
  std::vector<DeliveryRecord> out;
  while (!queue_.empty()) {
    const Packet& head = queue_.front();
    if (!head_in_service_) {
      head_remaining_bits_ = static_cast<double>(head.size_bytes) * 8.0;
      head_in_service_ = true;
    }
    const Kbps cap = trace.capacity_at(clock_ms_);
    const Millis change = trace.next_change_after(clock_ms_);
    const Millis horizon = std::min(change, until);
    if (cap <= 0.0) {
      clock_ms_ = horizon;
      if (horizon >= until) break;
      continue;
    }
    const Millis finish = clock_ms_ + head_remaining_bits_ / cap;
    if (finish <= horizon) {
      DeliveryRecord rec;
      rec.packet_id = head.id;
      rec.frame_id = head.frame_id;
      rec.seq_in_frame = head.seq_in_frame;
      rec.packets_in_frame = head.packets_in_frame;
      rec.size_bytes = head.size_bytes;
      rec.enqueue_ms = head.enqueue_time_ms;
      rec.depart_ms = finish;
      rec.arrive_ms = finish + config_.prop_delay_ms;
      out.push_back(rec);
      queue_.pop_front();
      head_in_service_ = false;
      ++delivered_;
      clock_ms_ = finish;
      check_invariants();
      continue;
    }
    head_remaining_bits_ -= cap * (horizon - clock_ms_);
    clock_ms_ = horizon;
    if (horizon >= until) break;
  }
  if (queue_.empty()) clock_ms_ = std::max(clock_ms_, until);
  return out;
}

void Link::check_invariants() const {
  if (queue_.size() > config_.queue_packets)
    throw InvariantError("queue occupancy exceeds capacity");
  if (accepted_ != delivered_ + queue_.size())
    throw InvariantError("packet conservation violated");
}

FrameOutcome frame_latency(std::span<const DeliveryRecord> records,
                           Millis encode_time_ms) {
  if (records.empty()) return {};
  const std::uint32_t expected = records.front().packets_in_frame;
  std::map<std::uint32_t, Millis> arrivals;
  for (const auto& r : records) {
    if (r.dropped) {
      arrivals.try_emplace(r.seq_in_frame,
                           std::numeric_limits<Millis>::quiet_NaN());
      continue;
    }
    auto [it, inserted] = arrivals.try_emplace(r.seq_in_frame, r.arrive_ms);
    if (!inserted && (std::isnan(it->second) || r.arrive_ms < it->second))
      it->second = r.arrive_ms;
  }
  if (arrivals.size() != expected) return {};
  Millis last = -std::numeric_limits<Millis>::infinity();
  for (const auto& [seq, t] : arrivals) {
    if (std::isnan(t)) return {};
    last = std::max(last, t);
  }
  return FrameOutcome{last - encode_time_ms};
}

void write_delivery_row(std::ostream& out, const DeliveryRecord& rec) {
  out << rec.packet_id << ',' << rec.frame_id << ','
      << format_fixed(rec.enqueue_ms) << ',';
  if (rec.dropped) {
    out << ",,1\n";
  } else {
    out << format_fixed(rec.depart_ms) << ',' << format_fixed(rec.arrive_ms)
        << ",0\n";
  }
}

}  // namespace artic::net
