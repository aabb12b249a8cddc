#include <random>
#include <sstream>

#include "artic/trace_net.hpp"
#include "doctest.h"

using namespace artic;
using namespace artic::net;

namespace {

BandwidthTrace two_step(bool loop) {
  return BandwidthTrace({{0, 5000}, {10000, 1230}}, loop, 20000.0);
}

Packet make_packet(PacketId id, std::size_t bytes, Millis t = 0.0) {
  Packet p;
  p.id = id;
  p.frame_id = id;
  p.size_bytes = bytes;
  p.enqueue_time_ms = t;
  return p;
}

LinkConfig wide_mtu() {
  LinkConfig c;
  c.mtu_bytes = 1500;
  return c;
}

}  // namespace

TEST_CASE("capacity_at picks the interval containing t") {
  const auto trace = two_step(false);
  CHECK(capacity_at(trace, 500) == 5000);
  CHECK(capacity_at(trace, 9999.999) == 5000);
  CHECK(capacity_at(trace, 10000) == 1230);
  CHECK(capacity_at(trace, 1e7) == 1230);
}

TEST_CASE("looped trace wraps modulo its duration") {
  const auto trace = two_step(true);
  CHECK(trace.duration_ms() == 20000);
  CHECK(capacity_at(trace, 20500) == 5000);
  CHECK(capacity_at(trace, 30000) == 1230);
  CHECK(trace.next_change_after(15000) == doctest::Approx(20000));
}

TEST_CASE("default duration repeats the last gap") {
  const BandwidthTrace trace({{0, 5000}, {10000, 1230}}, true);
  CHECK(trace.duration_ms() == 20000);
}

TEST_CASE("trace validation") {
  CHECK_THROWS_AS(BandwidthTrace({}, false), ConfigError);
  CHECK_THROWS_AS(BandwidthTrace({{0, 100}, {0, 200}}, false), ConfigError);
  CHECK_THROWS_AS(BandwidthTrace({{0, 100}, {10, -1}}, false), ConfigError);
  CHECK_THROWS_AS(capacity_at(two_step(false), -1.0), InputError);
}

TEST_CASE("trace csv round trip") {
  std::istringstream in("time_ms,bandwidth_kbps\n0,5000\n10000,1230\n");
  const auto trace = BandwidthTrace::parse_csv(in, false);
  REQUIRE(trace.samples().size() == 2);
  std::ostringstream out;
  trace.write_csv(out);
  std::istringstream again(out.str());
  const auto copy = BandwidthTrace::parse_csv(again, false);
  CHECK(copy.samples()[1].time_ms == 10000);
  CHECK(copy.samples()[1].capacity_kbps == 1230);

  std::istringstream bad_header("t,bw\n0,1\n");
  CHECK_THROWS_AS(BandwidthTrace::parse_csv(bad_header, false), ConfigError);
  std::istringstream bad_row("time_ms,bandwidth_kbps\n0,abc\n");
  CHECK_THROWS_AS(BandwidthTrace::parse_csv(bad_row, false), ConfigError);
}

TEST_CASE("enqueue accepts until the queue is full") {
  Link link;
  CHECK(link.enqueue(make_packet(0, 1000), 0.0));
  for (PacketId i = 1; i < 60; ++i) CHECK(link.enqueue(make_packet(i, 1000), 0.0));
  CHECK(link.queue_length() == 60);
  CHECK_FALSE(link.enqueue(make_packet(60, 1000), 0.0));
  CHECK(link.drops() == 1);
}

TEST_CASE("120 back-to-back enqueues with no service accept exactly 60") {
  Link link;
  int accepted = 0;
  for (PacketId i = 0; i < 120; ++i) accepted += link.enqueue(make_packet(i, 1200), 0.0);
  CHECK(accepted == 60);
  CHECK(link.drops() == 60);
  CHECK(link.accepted() + link.drops() == 120);
}

TEST_CASE("packet size must be within (0, MTU]") {
  Link link;
  CHECK_THROWS_AS(link.enqueue(make_packet(0, 0), 0.0), InputError);
  CHECK_THROWS_AS(link.enqueue(make_packet(0, 1201), 0.0), InputError);
}

TEST_CASE("advance on an empty queue yields nothing") {
  Link link;
  CHECK(link.advance(BandwidthTrace::constant(1000), 100).empty());
}

TEST_CASE("single packet serialization and propagation") {
  Link link(wide_mtu());
  const auto trace = BandwidthTrace::constant(1000);
  REQUIRE(link.enqueue(make_packet(0, 1250), 0.0));
  const auto recs = link.advance(trace, 100);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].depart_ms == doctest::Approx(10.0));
  CHECK(recs[0].arrive_ms == doctest::Approx(30.0));
}

TEST_CASE("60 packets of 1250 bytes at 1000 kbps finish at 600 ms") {
  Link link(wide_mtu());
  const auto trace = BandwidthTrace::constant(1000);
  for (PacketId i = 0; i < 60; ++i) REQUIRE(link.enqueue(make_packet(i, 1250), 0.0));
  const auto recs = link.advance(trace, 1000);
  REQUIRE(recs.size() == 60);
  CHECK(recs.back().depart_ms == doctest::Approx(600.0).epsilon(1e-12));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].packet_id == i);
    CHECK(recs[i].arrive_ms >= recs[i].depart_ms + 20.0 - 1e-9);
  }
}

TEST_CASE("service spans a capacity change") {
  // 1000 bytes = 8000 bits: 2 ms at 1000 kbps would finish at 8 ms, but the
  // capacity doubles at 4 ms: 4000 bits left at 2000 kbps = 2 ms more.
  const BandwidthTrace trace({{0, 1000}, {4, 2000}}, false, 100.0);
  Link link;
  REQUIRE(link.enqueue(make_packet(0, 1000), 0.0));
  const auto recs = link.advance(trace, 50);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].depart_ms == doctest::Approx(6.0));
}

TEST_CASE("zero capacity holds packets until capacity returns") {
  const BandwidthTrace trace({{0, 0}, {100, 1000}}, false, 1000.0);
  Link link;
  REQUIRE(link.enqueue(make_packet(0, 1000), 0.0));
  CHECK(link.advance(trace, 99).empty());
  const auto recs = link.advance(trace, 200);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].depart_ms == doctest::Approx(108.0));
}

TEST_CASE("enqueue requires the link to be advanced first") {
  Link link;
  REQUIRE(link.enqueue(make_packet(0, 1000), 0.0));
  CHECK_THROWS_AS(link.enqueue(make_packet(1, 1000), 5.0), InvariantError);
  CHECK_THROWS_AS(link.advance(BandwidthTrace::constant(1000), -1.0), InvariantError);
}

TEST_CASE("packetize splits frames at the MTU") {
  PacketId next = 7;
  const auto pkts = packetize(3, 2500, 10.0, next);
  REQUIRE(pkts.size() == 3);
  CHECK(next == 10);
  CHECK(pkts[0].size_bytes == 1200);
  CHECK(pkts[2].size_bytes == 100);
  CHECK(pkts[2].seq_in_frame == 2);
  CHECK(pkts[0].packets_in_frame == 3);
  CHECK(packetize(0, 0, 0.0, next).empty());
}

TEST_CASE("frame_latency is last arrival minus encode time") {
  DeliveryRecord r;
  r.packets_in_frame = 1;
  r.arrive_ms = 30;
  CHECK(*frame_latency(std::vector{r}, 0.0).latency_ms == doctest::Approx(30));

  std::vector<DeliveryRecord> recs(3);
  const double arrivals[] = {30, 42, 55};
  for (std::uint32_t i = 0; i < 3; ++i) {
    recs[i].seq_in_frame = i;
    recs[i].packets_in_frame = 3;
    recs[i].arrive_ms = arrivals[i];
  }
  CHECK(*frame_latency(recs, 5.0).latency_ms == doctest::Approx(50));
}

TEST_CASE("frame_latency reports loss for an unretransmitted drop") {
  Packet p;
  p.packets_in_frame = 2;
  p.seq_in_frame = 1;
  DeliveryRecord ok;
  ok.packets_in_frame = 2;
  ok.arrive_ms = 20;
  CHECK(frame_latency(std::vector{ok, drop_record(p)}, 0.0).lost());

  // A later retransmission of the same sequence number recovers the frame.
  DeliveryRecord again = ok;
  again.seq_in_frame = 1;
  again.arrive_ms = 80;
  const auto out = frame_latency(std::vector{ok, drop_record(p), again}, 0.0);
  REQUIRE_FALSE(out.lost());
  CHECK(*out.latency_ms == doctest::Approx(80));

  CHECK(frame_latency(std::vector{ok}, 0.0).lost());  // missing sequence
}

TEST_CASE("delivery log rows") {
  DeliveryRecord r;
  r.packet_id = 4;
  r.frame_id = 1;
  r.enqueue_ms = 1;
  r.depart_ms = 11;
  r.arrive_ms = 31;
  std::ostringstream out;
  write_delivery_row(out, r);
  Packet p;
  p.id = 5;
  p.frame_id = 1;
  p.size_bytes = 10;
  p.enqueue_time_ms = 2;
  write_delivery_row(out, drop_record(p));
  CHECK(out.str() == "4,1,1.000,11.000,31.000,0\n5,1,2.000,,,1\n");
}

TEST_CASE("randomized link keeps occupancy, FIFO and conservation") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> gap(0.0, 3.0);
  std::uniform_int_distribution<std::size_t> size(1, 1200);
  std::vector<TraceSample> samples;
  for (int k = 0; k < 200; ++k)
    samples.push_back({k * 50.0, (k % 7 == 3) ? 0.0 : 300.0 + 4000.0 * (k % 5) / 4.0});
  const BandwidthTrace trace(samples, true);

  Link link;
  Millis now = 0.0;
  PacketId next = 0;
  PacketId expected = 0;
  std::vector<PacketId> accepted;
  std::uint64_t offered = 0;
  for (int i = 0; i < 50000; ++i) {
    now += gap(rng);
    for (const auto& rec : link.advance(trace, now)) {
      REQUIRE(expected < accepted.size());
      CHECK(rec.packet_id == accepted[expected++]);
    }
    ++offered;
    Packet p = make_packet(next++, size(rng), now);
    if (link.enqueue(p, now)) accepted.push_back(p.id);
    REQUIRE(link.queue_length() <= 60);
  }
  CHECK(link.accepted() + link.drops() == offered);
  CHECK(link.accepted() == link.delivered() + link.queue_length());
}
