#include "artic/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <queue>
#include <thread>
#include <variant>

namespace artic::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Ordering of simultaneous events: receiver-side work first so that a frame
// completing at time t is visible to an oracle emission at t.
enum class EventKind {
  kArrival = 0,
  kAck = 1,
  kLossNotice = 2,
  kFeedback = 3,
  kControllerTick = 4,
  kOracleEmit = 5,
  kFrameTick = 6,
};

struct Event {
  Millis time = 0.0;
  EventKind kind = EventKind::kFrameTick;
  std::uint64_t order = 0;
  std::variant<std::monostate, net::DeliveryRecord, net::Packet, std::size_t> payload;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.order > b.order;
  }
};

struct FrameState {
  Millis encode_ms = 0.0;
  std::shared_ptr<const codec::EncodedFrame> encoded;
  std::vector<net::DeliveryRecord> records;
  std::uint32_t packets = 0;
  std::uint32_t delivered = 0;
  std::vector<char> seq_done;
  bool resolved = false;
  std::optional<Millis> latency_ms;
};

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg)
      : cfg_(cfg),
        trace_(make_trace(cfg)),
        script_(make_script(cfg)),
        link_(cfg.link),
        estimator_(cc::make_estimator(cfg.cc, cfg.cc_config)),
        controller_(cfg.controller),
        oracle_(seeded_oracle(cfg), script_, cfg.frame),
        grid_(cfg.frame.grid()) {}

  RunResult run() {
    result_.stack = std::string(to_string(cfg_.stack));
    result_.cc = std::string(cc::to_string(cfg_.cc));
    result_.effective_config = cfg_.effective();

    push(0.0, EventKind::kFrameTick, std::size_t{0});
    if (cfg_.oracle.emit_period_ms < cfg_.duration_ms)
      push(cfg_.oracle.emit_period_ms, EventKind::kOracleEmit, {});
    if (1000.0 < cfg_.duration_ms) push(1000.0, EventKind::kControllerTick, {});

    const Millis horizon = cfg_.duration_ms + cfg_.drain_ms;
    while (true) {
      if (events_.empty()) {
        // Nothing scheduled but packets still queued: serve them.
        if (link_.queue_length() == 0 || link_.now() >= horizon) break;
        serve_link(std::min(horizon, link_.now() + 100.0));
        continue;
      }
      const Millis t = events_.top().time;
      if (t > horizon) break;
      if (t > link_.now() && serve_link(t)) continue;
      const Event ev = events_.top();
      events_.pop();
      dispatch(ev);
    }

    finish();
    return std::move(result_);
  }

 private:
  static oracle::OracleConfig seeded_oracle(const ScenarioConfig& cfg) {
    oracle::OracleConfig o = cfg.oracle;
    o.seed = derive_seed(cfg.seed, "oracle");
    return o;
  }

  void push(Millis t, EventKind kind,
            std::variant<std::monostate, net::DeliveryRecord, net::Packet,
                         std::size_t>
                payload) {
    events_.push(Event{t, kind, next_order_++, std::move(payload)});
  }

  // Advances the link; returns true when departures created new events.
  bool serve_link(Millis until) {
    const auto departed = link_.advance(trace_, until);
    for (const auto& rec : departed) {
      result_.deliveries.push_back(rec);
      push(rec.arrive_ms, EventKind::kArrival, rec);
      push(rec.arrive_ms + cfg_.link.prop_delay_ms, EventKind::kAck, rec);
    }
    return !departed.empty();
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EventKind::kFrameTick:
        on_frame(ev.time, std::get<std::size_t>(ev.payload));
        break;
      case EventKind::kArrival:
        on_arrival(std::get<net::DeliveryRecord>(ev.payload));
        break;
      case EventKind::kAck:
        estimator_->on_ack(std::get<net::DeliveryRecord>(ev.payload));
        break;
      case EventKind::kLossNotice:
        on_loss(ev.time, std::get<net::Packet>(ev.payload));
        break;
      case EventKind::kFeedback:
        on_feedback(ev.time, std::get<std::size_t>(ev.payload));
        break;
      case EventKind::kControllerTick:
        if (uses_recap(cfg_.stack))
          controller_.on_tick(estimate(ev.time), ev.time);
        if (ev.time + 1000.0 < cfg_.duration_ms)
          push(ev.time + 1000.0, EventKind::kControllerTick, {});
        break;
      case EventKind::kOracleEmit:
        on_emit(ev.time);
        break;
    }
  }

  Millis frame_time(std::size_t index) const {
    return static_cast<double>(index) * cfg_.frame.frame_interval_ms();
  }

  Kbps estimate(Millis now) const {
    return estimator_->estimate(now).bandwidth_kbps;
  }

  Kbps target_rate(Millis now, Kbps est) {
    if (cfg_.fixed_bitrate_kbps > 0.0) return cfg_.fixed_bitrate_kbps;
    if (uses_recap(cfg_.stack)) {
      const Kbps r = controller_.sending_rate(est, now);
      if (r > est)
        throw InvariantError("sending rate " + format_fixed(r) +
                             " exceeds estimate " + format_fixed(est));
      return r;
    }
    // Plain WebRTC tracks the estimate within the same floor/ceiling.
    return abr::next_bitrate(cfg_.controller, last_rate_, est, std::nullopt, now)
        .rate_kbps;
  }

  codec::EncodedFrame encode(Millis now, Kbps rate, FrameId id) {
    if (uses_zeco(cfg_.stack)) {
      trigger_ = zeco::trigger(cfg_.zeco, rate, latest_confidence_,
                               cfg_.controller.tau, now, trigger_);
      const bool shape = cfg_.zeco_mode == ZecoMode::kAlways || trigger_.enabled;
      if (shape && latest_prediction_) {
        const auto boxes = zeco::boxes_for_now(*latest_prediction_, now);
        if (auto imp = zeco::importance_map(cfg_.zeco, cfg_.frame.width,
                                            cfg_.frame.height, boxes)) {
          return codec::encode_with_map(cfg_.frame, model_, rate,
                                        zeco::qp_map(cfg_.zeco, *imp), id);
        }
      }
    }
    return codec::encode_uniform(cfg_.frame, model_, rate, id);
  }

  void on_frame(Millis now, std::size_t index) {
    const Kbps est = estimate(now);
    const Kbps rate = target_rate(now, est);
    last_rate_ = rate;
    const FrameId id = index;
    auto encoded = std::make_shared<const codec::EncodedFrame>(encode(now, rate, id));

    FrameState fs;
    fs.encode_ms = now;
    fs.encoded = encoded;
    auto packets = net::packetize(id, encoded->total_bytes, now, next_packet_id_,
                                  cfg_.link.mtu_bytes);
    fs.packets = static_cast<std::uint32_t>(packets.size());
    fs.seq_done.assign(packets.size(), 0);
    frames_.push_back(std::move(fs));
    for (const auto& pkt : packets) send(pkt, now);

    FrameRow row;
    row.frame_id = id;
    row.encode_ms = now;
    row.bitrate_kbps = rate;
    row.estimate_kbps = est;
    row.queue_len = link_.queue_length();
    row.mean_qp = encoded->mean_qp();
    row.crit_qp = kNaN;
    if (const auto* s = script_.current_sample(now))
      row.crit_qp = encoded->region_mean_qp(script_.region_at(*s, now));
    row.total_bytes = encoded->total_bytes;
    row.used_qp_map = encoded->used_qp_map;
    result_.frames.push_back(row);
    result_.max_queue_len = std::max(result_.max_queue_len, row.queue_len);

    grade_samples(id, *encoded);

    const Millis next = frame_time(index + 1);
    if (next < cfg_.duration_ms) push(next, EventKind::kFrameTick, index + 1);
  }

  // Samples whose latest frame at ask time is this one.
  void grade_samples(FrameId id, const codec::EncodedFrame& frame) {
    const Millis next = frame_time(id + 1);
    while (next_sample_ < script_.samples.size()) {
      const auto& s = script_.samples[next_sample_];
      if (s.ask_at_ms >= next || s.ask_at_ms >= cfg_.duration_ms) break;
      ++next_sample_;
      QaOutcome q;
      q.id = s.id;
      q.ask_ms = s.ask_at_ms;
      q.frame_id = id;
      const auto region = script_.region_at(s, s.ask_at_ms);
      q.crit_qp = frame.region_mean_qp(region);
      q.correct = oracle::grade(s, region, &frame);
      result_.qa.push_back(q);
    }
  }

  void send(net::Packet pkt, Millis now) {
    pkt.enqueue_time_ms = now;
    if (!link_.enqueue(pkt, now)) {
      auto rec = net::drop_record(pkt);
      result_.deliveries.push_back(rec);
      frames_[pkt.frame_id].records.push_back(rec);
      push(now + 2.0 * cfg_.link.prop_delay_ms, EventKind::kLossNotice, pkt);
    }
  }

  void on_arrival(const net::DeliveryRecord& rec) {
    FrameState& fs = frames_[rec.frame_id];
    if (fs.resolved || fs.seq_done[rec.seq_in_frame]) return;
    fs.records.push_back(rec);
    fs.seq_done[rec.seq_in_frame] = 1;
    if (++fs.delivered < fs.packets) return;
    if (!latest_delivered_ || rec.frame_id > latest_delivered_->frame_id)
      latest_delivered_ = fs.encoded;
    const auto outcome = net::frame_latency(fs.records, fs.encode_ms);
    resolve(rec.frame_id, outcome.latency_ms);
  }

  void on_loss(Millis now, net::Packet pkt) {
    estimator_->on_ack(net::drop_record(pkt));
    FrameState& fs = frames_[pkt.frame_id];
    if (fs.resolved) return;
    if (static_cast<int>(pkt.attempt) + 1 >= cfg_.max_transmissions) {
      resolve(pkt.frame_id, std::nullopt);
      return;
    }
    pkt.id = next_packet_id_++;
    ++pkt.attempt;
    send(pkt, now);
  }

  void resolve(FrameId id, std::optional<Millis> latency) {
    FrameState& fs = frames_[id];
    fs.resolved = true;
    fs.latency_ms = latency;
    fs.records.clear();
    fs.records.shrink_to_fit();
    fs.seq_done.clear();
    fs.seq_done.shrink_to_fit();
    fs.encoded.reset();
  }

  void on_emit(Millis now) {
    const auto msg = oracle_.emit_feedback(now, latest_delivered_.get());
    if (msg) {
      const Millis latency = msg->deliver_at_ms - msg->emitted_at_ms;
      if (latency < cfg_.oracle.min_feedback_latency_ms ||
          latency > cfg_.oracle.max_feedback_latency_ms)
        throw InvariantError("feedback latency outside the configured range");
      result_.feedback.push_back(
          {msg->emitted_at_ms, msg->deliver_at_ms, msg->confidence, msg->predictions});
      push(msg->deliver_at_ms, EventKind::kFeedback, result_.feedback.size() - 1);
    }
    const Millis next = oracle_.next_emission_ms();
    if (next < cfg_.duration_ms) push(next, EventKind::kOracleEmit, {});
  }

  void on_feedback(Millis now, std::size_t index) {
    const FeedbackRecord& fb = result_.feedback[index];
    latest_confidence_ = fb.confidence;
    latest_prediction_ = fb.predictions;
    if (uses_recap(cfg_.stack)) {
      const Kbps current = last_rate_ > 0.0 ? last_rate_ : estimate(now);
      controller_.on_confidence({fb.confidence, fb.emitted_ms, now}, current,
                                estimate(now), now);
    }
  }

  void finish() {
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      if (!frames_[i].resolved) resolve(i, std::nullopt);
      result_.frames[i].latency_ms = frames_[i].latency_ms;
    }
    // A sample graded on a frame that never arrived is incorrect.
    for (auto& q : result_.qa)
      if (!frames_[q.frame_id].latency_ms) q.correct = false;
    result_.link_drops = link_.drops();
    result_.summary = summarize(result_.frames, result_.qa);
  }

  const ScenarioConfig& cfg_;
  net::BandwidthTrace trace_;
  oracle::ScenarioScript script_;
  net::Link link_;
  std::unique_ptr<cc::BandwidthEstimator> estimator_;
  abr::RecapController controller_;
  oracle::Oracle oracle_;
  zeco::PatchGrid grid_;
  codec::RateModel model_;

  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t next_order_ = 0;
  PacketId next_packet_id_ = 0;
  std::vector<FrameState> frames_;
  std::shared_ptr<const codec::EncodedFrame> latest_delivered_;
  std::optional<double> latest_confidence_;
  std::optional<zeco::TrajectoryPrediction> latest_prediction_;
  zeco::TriggerState trigger_;
  Kbps last_rate_ = 0.0;
  std::size_t next_sample_ = 0;
  RunResult result_;
};

void write_optional(std::ostream& out, double v, int decimals = 3) {
  if (!std::isnan(v)) out << format_fixed(v, decimals);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

Summary summarize(const std::vector<FrameRow>& rows,
                  const std::vector<QaOutcome>& qa) {
  Summary s;
  s.frames = rows.size();
  std::vector<double> latencies;
  double bitrate_sum = 0.0;
  for (const auto& r : rows) {
    bitrate_sum += r.bitrate_kbps;
    if (r.latency_ms) latencies.push_back(*r.latency_ms);
    else ++s.lost_frames;
  }
  if (!rows.empty()) s.mean_bitrate_kbps = bitrate_sum / static_cast<double>(rows.size());
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double l : latencies) sum += l;
    s.mean_latency_ms = sum / static_cast<double>(latencies.size());
    s.p95_latency_ms = percentile(latencies, 95.0);
  }
  s.qa_total = qa.size();
  for (const auto& q : qa) s.qa_correct += q.correct ? 1 : 0;
  if (s.qa_total > 0)
    s.accuracy = static_cast<double>(s.qa_correct) / static_cast<double>(s.qa_total);
  return s;
}

RunResult run(const ScenarioConfig& cfg) {
  cfg.validate();
  Simulation sim(cfg);
  return sim.run();
}

void write_config_header(std::ostream& out, const RunResult& result) {
  out << "# artic " << kVersion << '\n';
  for (const auto& [k, v] : result.effective_config) out << "# " << k << '=' << v << '\n';
}

void write_frames_csv(std::ostream& out, const RunResult& result) {
  write_config_header(out, result);
  out << kFramesHeader << '\n';
  for (const auto& r : result.frames) {
    out << r.frame_id << ',' << format_fixed(r.encode_ms) << ',';
    if (r.latency_ms) out << format_fixed(*r.latency_ms);
    else out << "lost";
    out << ',' << format_fixed(r.bitrate_kbps) << ',' << r.queue_len << ','
        << format_fixed(r.mean_qp) << ',';
    write_optional(out, r.crit_qp);
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const RunResult& result) {
  write_config_header(out, result);
  out << kSummaryHeader << '\n';
  const auto& s = result.summary;
  out << result.stack << ',' << result.cc << ',' << format_fixed(s.mean_latency_ms)
      << ',' << format_fixed(s.p95_latency_ms) << ',';
  if (s.accuracy) out << format_fixed(*s.accuracy, 4);
  out << ',' << format_fixed(s.mean_bitrate_kbps) << '\n';
}

void write_outputs(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_csv(dir / "frames.csv");
    write_frames_csv(out, result);
  }
  {
    auto out = open_csv(dir / "encoder.csv");
    write_config_header(out, result);
    out << codec::kEncoderLogHeader << '\n';
    for (const auto& r : result.frames) {
      out << r.frame_id << ',' << r.total_bytes << ',' << format_fixed(r.mean_qp) << ',';
      write_optional(out, r.crit_qp);
      out << '\n';
    }
  }
  {
    auto out = open_csv(dir / "delivery.csv");
    write_config_header(out, result);
    out << net::kDeliveryLogHeader << '\n';
    for (const auto& rec : result.deliveries) net::write_delivery_row(out, rec);
  }
  {
    auto out = open_csv(dir / "feedback.csv");
    write_config_header(out, result);
    out << zeco::kRegionFeedbackHeader << '\n';
    for (const auto& fb : result.feedback)
      zeco::write_region_feedback_rows(out, fb.predictions);
  }
  {
    auto out = open_csv(dir / "confidence.csv");
    write_config_header(out, result);
    out << "emitted_ms,deliver_ms,confidence\n";
    for (const auto& fb : result.feedback)
      out << format_fixed(fb.emitted_ms) << ',' << format_fixed(fb.deliver_ms) << ','
          << format_fixed(fb.confidence, 6) << '\n';
  }
  {
    auto out = open_csv(dir / "qa.csv");
    write_config_header(out, result);
    out << "id,ask_ms,frame_id,crit_qp,correct\n";
    for (const auto& q : result.qa) {
      out << q.id << ',' << format_fixed(q.ask_ms) << ',' << q.frame_id << ',';
      write_optional(out, q.crit_qp);
      out << ',' << (q.correct ? 1 : 0) << '\n';
    }
  }
  {
    auto out = open_csv(dir / "summary.csv");
    write_summary_csv(out, result);
  }
}

ScenarioConfig apply_axis(const ScenarioConfig& base, std::string_view axis,
                          std::string_view value) {
  ScenarioConfig cfg = base;
  if (axis == "fluctuation_per_min") {
    cfg.set("trace", "fluctuation:" + std::string(value));
  } else if (axis == "bitrate") {
    cfg.set("fixed_bitrate_kbps", value);
  } else {
    cfg.set(axis, value);
  }
  cfg.validate();
  make_trace(cfg);
  return cfg;
}

std::vector<SweepPoint> sweep(const ScenarioConfig& base, std::string_view axis,
                              const std::vector<std::string>& values,
                              int threads) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepPoint> points;
  for (const auto& v : values) points.push_back({v, apply_axis(base, axis, v), {}});

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(points.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        points[i].result = run(points[i].scenario);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::clamp(threads, 1, static_cast<int>(points.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return points;
}

void write_sweep_summary(std::ostream& out, std::string_view axis,
                         const std::vector<SweepPoint>& points) {
  out << "# artic " << kVersion << '\n';
  out << "axis,value," << kSummaryHeader << '\n';
  for (const auto& p : points) {
    const auto& s = p.result.summary;
    out << axis << ',' << p.value << ',' << p.result.stack << ',' << p.result.cc
        << ',' << format_fixed(s.mean_latency_ms) << ','
        << format_fixed(s.p95_latency_ms) << ',';
    if (s.accuracy) out << format_fixed(*s.accuracy, 4);
    out << ',' << format_fixed(s.mean_bitrate_kbps) << '\n';
  }
}

}  // namespace artic::harness
