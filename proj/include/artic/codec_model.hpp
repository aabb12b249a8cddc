#pragma once

#include <cstddef>
#include <vector>

#include "artic/common.hpp"
#include "artic/zeco_stream.hpp"

namespace artic::codec {

struct FrameSpec {
  int width = 1280;
  int height = 720;
  double fps = 30.0;
  int patch_px = 64;

  void validate() const;
  zeco::PatchGrid grid() const;
  Millis frame_interval_ms() const { return 1000.0 / fps; }
};

struct PatchCoding {
  double qp = 0.0;  // achieved (effective) QP
  double bits = 0.0;
};

struct EncodedFrame {
  FrameId frame_id = 0;
  std::size_t total_bytes = 0;
  zeco::PatchGrid grid;
  std::vector<PatchCoding> patches;
  bool budget_floored = false;
  bool used_qp_map = false;

  double mean_qp() const;
  // Mean achieved QP over patches overlapping `region`; NaN if none do.
  double region_mean_qp(const zeco::BoundingBox& region) const;
  double total_patch_bits() const;
};

// bits = b_ref * 2^(-(qp - qp_ref) / 6).
double bits_for_qp(double qp, double b_ref_bits, double qp_ref);

// Rate model: at qp_ref a frame spends `ref_bits_per_pixel` bits per pixel.
// The default calibration makes a 1280x720 frame at QP 32 cost 1000 kbps at
// 30 fps.
struct RateModel {
  double qp_ref = 32.0;
  double ref_bits_per_pixel = 1.0e6 / 30.0 / (1280.0 * 720.0);

  double patch_ref_bits(const zeco::PatchGrid& grid, int i, int j) const {
    return ref_bits_per_pixel * grid.area(i, j);
  }
};

std::size_t budget_bytes(const FrameSpec& spec, Kbps target_kbps);

// Single QP for the whole frame: the real-valued QP that spends the budget,
// rounded half-up and clamped to [0, 51]. Bits split by patch area.
EncodedFrame encode_uniform(const FrameSpec& spec, const RateModel& model,
                            Kbps target_kbps, FrameId frame_id = 0);

// Spends the same budget shaped by `map`: patch bits proportional to
// bits_for_qp(map QP), achieved QP = map QP + common offset.
EncodedFrame encode_with_map(const FrameSpec& spec, const RateModel& model,
                             Kbps target_kbps, const zeco::QpMap& map,
                             FrameId frame_id = 0);

inline constexpr const char* kEncoderLogHeader =
    "frame_id,total_bytes,mean_qp,crit_region_mean_qp";

}  // namespace artic::codec
