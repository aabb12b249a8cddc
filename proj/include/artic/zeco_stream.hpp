#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "artic/common.hpp"

namespace artic::zeco {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned box in pixels, top-left origin, covering [x, x+w] x [y, y+h].
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  Millis valid_at_ms = 0.0;

  bool contains(Point p) const {
    return p.x >= x && p.x <= x + w && p.y >= y && p.y <= y + h;
  }
  // Clamps the box into a W x H frame; throws InputError when nothing is left.
  BoundingBox clamped(int width, int height) const;
};

struct PredictionStep {
  Millis valid_at_ms = 0.0;
  std::vector<BoundingBox> boxes;
};

struct TrajectoryPrediction {
  Millis emitted_at_ms = 0.0;
  std::vector<PredictionStep> steps;

  void validate() const;
};

inline constexpr Millis kMaxPredictionHorizonMs = 1500.0;
inline constexpr Millis kPredictionExpiryGraceMs = 500.0;

struct ZecoConfig {
  double mu = 0.5;
  int q_min = 20;
  int q_max = 51;
  int patch_px = 64;
  Kbps trigger_rate_kbps = 500.0;
  double exit_factor = 1.2;
  Millis exit_hold_ms = 2000.0;

  void validate() const;
};

// Row-major grid of patches: `cols` = ceil(W/patch), `rows` = ceil(H/patch).
struct PatchGrid {
  int width = 0;
  int height = 0;
  int patch_px = 64;
  int cols = 0;
  int rows = 0;

  static PatchGrid make(int width, int height, int patch_px);
  std::size_t size() const { return static_cast<std::size_t>(cols) * rows; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * cols + i;
  }
  // Center of patch (i, j), clamped into the frame for edge patches.
  Point center(int i, int j) const;
  // Pixel area of patch (i, j) after clipping to the frame.
  double area(int i, int j) const;
  // True when patch (i, j) overlaps the box with positive area.
  bool intersects(int i, int j, const BoundingBox& box) const;
};

struct ImportanceMap {
  PatchGrid grid;
  std::vector<double> rho;
  double at(int i, int j) const { return rho[grid.index(i, j)]; }
};

struct QpMap {
  PatchGrid grid;
  std::vector<int> qp;
  int at(int i, int j) const { return qp[grid.index(i, j)]; }
  static QpMap uniform(const PatchGrid& grid, int qp);
};

// Euclidean distance from `p` to the nearest box (0 inside any box).
// std::nullopt when there are no boxes ("no context").
std::optional<double> distance_to_boxes(Point p,
                                        std::span<const BoundingBox> boxes);

// rho = max(0, 1 - d / (mu * diag)) per patch center.
// std::nullopt when `boxes` is empty.
std::optional<ImportanceMap> importance_map(const ZecoConfig& cfg, int width,
                                            int height,
                                            std::span<const BoundingBox> boxes);

double importance_from_distance(const ZecoConfig& cfg, int width, int height,
                                double distance);

// Q = q_min + (q_max - q_min) * (1 - rho)^2, rounded half-up.
int qp_from_importance(const ZecoConfig& cfg, double rho);
QpMap qp_map(const ZecoConfig& cfg, const ImportanceMap& imp);

// Boxes of the step nearest to `now` (earlier step on ties); empty once
// `now` is more than the grace period past the last step.
std::vector<BoundingBox> boxes_for_now(const TrajectoryPrediction& pred,
                                       Millis now);

struct TriggerState {
  bool enabled = false;
  std::optional<Millis> above_exit_since_ms;
};

// Enables when rate < trigger_rate and confidence < tau; once enabled it
// stays on until the rate has exceeded exit_factor * trigger_rate
// continuously for exit_hold_ms.
TriggerState trigger(const ZecoConfig& cfg, Kbps current_rate_kbps,
                     std::optional<double> latest_confidence, double tau,
                     Millis now, const TriggerState& prev);

inline constexpr const char* kQpMapHeader = "frame_id,patch_i,patch_j,qp";
void write_qp_map_rows(std::ostream& out, FrameId frame_id, const QpMap& map);

// Region feedback file: `emitted_ms,valid_ms,x,y,w,h`, one row per box.
inline constexpr const char* kRegionFeedbackHeader =
    "emitted_ms,valid_ms,x,y,w,h";
void write_region_feedback_rows(std::ostream& out,
                                const TrajectoryPrediction& pred);
std::vector<TrajectoryPrediction> read_region_feedback(std::istream& in);

}  // namespace artic::zeco
