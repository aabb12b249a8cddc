#include "artic/codec_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace artic::codec {

namespace {

constexpr double kMinQp = 0.0;
constexpr double kMaxQp = 51.0;

struct Budget {
  std::size_t bytes;
  bool floored;
};

Budget make_budget(const FrameSpec& spec, Kbps target_kbps,
                   std::size_t patches) {
  if (!(target_kbps > 0.0)) throw InputError("target bitrate must be > 0");
  if (patches == 0) throw InputError("frame has zero patches");
  std::size_t bytes = budget_bytes(spec, target_kbps);
  if (bytes < patches) return {patches, true};
  return {bytes, false};
}

}  // namespace

void FrameSpec::validate() const {
  if (width <= 0 || height <= 0 || !(fps > 0.0) || patch_px <= 0)
    throw ConfigError("frame spec fields must be positive");
}

zeco::PatchGrid FrameSpec::grid() const {
  validate();
  return zeco::PatchGrid::make(width, height, patch_px);
}

double EncodedFrame::mean_qp() const {
  if (patches.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& p : patches) sum += p.qp;
  return sum / static_cast<double>(patches.size());
}

double EncodedFrame::region_mean_qp(const zeco::BoundingBox& region) const {
  double sum = 0.0;
  int count = 0;
  for (int j = 0; j < grid.rows; ++j) {
    for (int i = 0; i < grid.cols; ++i) {
      if (!grid.intersects(i, j, region)) continue;
      sum += patches[grid.index(i, j)].qp;
      ++count;
    }
  }
  return count ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

double EncodedFrame::total_patch_bits() const {
  double sum = 0.0;
  for (const auto& p : patches) sum += p.bits;
  return sum;
}

double bits_for_qp(double qp, double b_ref_bits, double qp_ref) {
  return b_ref_bits * std::exp2(-(qp - qp_ref) / 6.0);
}

std::size_t budget_bytes(const FrameSpec& spec, Kbps target_kbps) {
  return static_cast<std::size_t>(
      std::llround(target_kbps * 1000.0 / (8.0 * spec.fps)));
}

EncodedFrame encode_uniform(const FrameSpec& spec, const RateModel& model,
                            Kbps target_kbps, FrameId frame_id) {
  const zeco::PatchGrid grid = spec.grid();
  const Budget budget = make_budget(spec, target_kbps, grid.size());
  const double total_bits = static_cast<double>(budget.bytes) * 8.0;

  double ref_bits = 0.0;
  double total_area = 0.0;
  for (int j = 0; j < grid.rows; ++j)
    for (int i = 0; i < grid.cols; ++i) {
      ref_bits += model.patch_ref_bits(grid, i, j);
      total_area += grid.area(i, j);
    }
  const double exact_qp = model.qp_ref - 6.0 * std::log2(total_bits / ref_bits);
  const double qp =
      std::clamp(std::floor(exact_qp + 0.5), kMinQp, kMaxQp);

  EncodedFrame frame;
  frame.frame_id = frame_id;
  frame.total_bytes = budget.bytes;
  frame.grid = grid;
  frame.budget_floored = budget.floored;
  frame.patches.resize(grid.size());
  for (int j = 0; j < grid.rows; ++j)
    for (int i = 0; i < grid.cols; ++i)
      frame.patches[grid.index(i, j)] = {qp,
                                         total_bits * grid.area(i, j) / total_area};
  return frame;
}

EncodedFrame encode_with_map(const FrameSpec& spec, const RateModel& model,
                             Kbps target_kbps, const zeco::QpMap& map,
                             FrameId frame_id) {
  const zeco::PatchGrid grid = spec.grid();
  if (map.grid.cols != grid.cols || map.grid.rows != grid.rows ||
      map.qp.size() != grid.size())
    throw InputError("QP map dimensions do not match the frame");
  const Budget budget = make_budget(spec, target_kbps, grid.size());
  const double total_bits = static_cast<double>(budget.bytes) * 8.0;

  std::vector<double> weights(grid.size());
  double weight_sum = 0.0;
  for (int j = 0; j < grid.rows; ++j)
    for (int i = 0; i < grid.cols; ++i) {
      const std::size_t k = grid.index(i, j);
      weights[k] = bits_for_qp(map.qp[k], model.patch_ref_bits(grid, i, j),
                               model.qp_ref);
      weight_sum += weights[k];
    }
  // Common offset that makes the shaped map spend exactly the budget.
  const double offset = -6.0 * std::log2(total_bits / weight_sum);

  EncodedFrame frame;
  frame.frame_id = frame_id;
  frame.total_bytes = budget.bytes;
  frame.grid = grid;
  frame.budget_floored = budget.floored;
  frame.used_qp_map = true;
  frame.patches.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    frame.patches[k].qp = std::clamp(map.qp[k] + offset, kMinQp, kMaxQp);
    frame.patches[k].bits = total_bits * weights[k] / weight_sum;
  }
  return frame;
}

}  // namespace artic::codec
