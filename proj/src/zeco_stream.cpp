#include "artic/zeco_stream.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace artic::zeco {

BoundingBox BoundingBox::clamped(int width, int height) const {
  const double x0 = std::clamp(x, 0.0, static_cast<double>(width));
  const double y0 = std::clamp(y, 0.0, static_cast<double>(height));
  const double x1 = std::clamp(x + w, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(y + h, 0.0, static_cast<double>(height));
  if (!(x1 > x0 && y1 > y0)) throw InputError("box lies outside the frame");
  return {x0, y0, x1 - x0, y1 - y0, valid_at_ms};
}

void TrajectoryPrediction::validate() const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0 && !(steps[i].valid_at_ms > steps[i - 1].valid_at_ms))
      throw InputError("prediction steps must be strictly increasing");
    if (steps[i].valid_at_ms - emitted_at_ms > kMaxPredictionHorizonMs + 1e-9)
      throw InputError("prediction horizon exceeds 1500 ms");
    for (const auto& b : steps[i].boxes)
      if (!(b.w > 0.0 && b.h > 0.0))
        throw InputError("prediction box must have positive size");
  }
}

void ZecoConfig::validate() const {
  if (!(0 <= q_min && q_min < q_max && q_max <= 51))
    throw ConfigError("require 0 <= q_min < q_max <= 51");
  if (!(mu > 0.0)) throw ConfigError("mu must be > 0");
  if (patch_px <= 0) throw ConfigError("patch size must be > 0");
  if (!(exit_factor >= 1.0)) throw ConfigError("exit_factor must be >= 1");
}

PatchGrid PatchGrid::make(int width, int height, int patch_px) {
  if (width <= 0 || height <= 0) throw InputError("frame size must be > 0");
  if (patch_px <= 0) throw InputError("patch size must be > 0");
  PatchGrid g;
  g.width = width;
  g.height = height;
  g.patch_px = patch_px;
  g.cols = (width + patch_px - 1) / patch_px;
  g.rows = (height + patch_px - 1) / patch_px;
  return g;
}

Point PatchGrid::center(int i, int j) const {
  const double half = patch_px / 2.0;
  return {std::min(i * patch_px + half, static_cast<double>(width)),
          std::min(j * patch_px + half, static_cast<double>(height))};
}

double PatchGrid::area(int i, int j) const {
  const int w = std::min(patch_px, width - i * patch_px);
  const int h = std::min(patch_px, height - j * patch_px);
  return static_cast<double>(w) * h;
}

bool PatchGrid::intersects(int i, int j, const BoundingBox& box) const {
  const double px0 = i * patch_px;
  const double py0 = j * patch_px;
  const double px1 = std::min<double>(px0 + patch_px, width);
  const double py1 = std::min<double>(py0 + patch_px, height);
  const double ox = std::min(px1, box.x + box.w) - std::max(px0, box.x);
  const double oy = std::min(py1, box.y + box.h) - std::max(py0, box.y);
  return ox > 0.0 && oy > 0.0;
}

QpMap QpMap::uniform(const PatchGrid& grid, int qp) {
  return {grid, std::vector<int>(grid.size(), qp)};
}

std::optional<double> distance_to_boxes(Point p,
                                        std::span<const BoundingBox> boxes) {
  if (boxes.empty()) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : boxes) {
    const double dx = std::max({b.x - p.x, 0.0, p.x - (b.x + b.w)});
    const double dy = std::max({b.y - p.y, 0.0, p.y - (b.y + b.h)});
    best = std::min(best, std::hypot(dx, dy));
  }
  return best;
}

double importance_from_distance(const ZecoConfig& cfg, int width, int height,
                                double distance) {
  const double diag = std::hypot(static_cast<double>(width),
                                 static_cast<double>(height));
  return std::max(0.0, 1.0 - distance / (cfg.mu * diag));
}

std::optional<ImportanceMap> importance_map(
    const ZecoConfig& cfg, int width, int height,
    std::span<const BoundingBox> boxes) {
  const PatchGrid grid = PatchGrid::make(width, height, cfg.patch_px);
  if (boxes.empty()) return std::nullopt;
  ImportanceMap imp{grid, std::vector<double>(grid.size())};
  for (int j = 0; j < grid.rows; ++j) {
    for (int i = 0; i < grid.cols; ++i) {
      const double d = *distance_to_boxes(grid.center(i, j), boxes);
      imp.rho[grid.index(i, j)] =
          importance_from_distance(cfg, width, height, d);
    }
  }
  return imp;
}

int qp_from_importance(const ZecoConfig& cfg, double rho) {
  const double r = std::clamp(rho, 0.0, 1.0);
  const double q = cfg.q_min + (cfg.q_max - cfg.q_min) * (1.0 - r) * (1.0 - r);
  const int rounded = static_cast<int>(std::floor(q + 0.5));
  return std::clamp(rounded, cfg.q_min, cfg.q_max);
}

QpMap qp_map(const ZecoConfig& cfg, const ImportanceMap& imp) {
  QpMap map{imp.grid, std::vector<int>(imp.rho.size())};
  for (std::size_t k = 0; k < imp.rho.size(); ++k)
    map.qp[k] = qp_from_importance(cfg, imp.rho[k]);
  return map;
}

std::vector<BoundingBox> boxes_for_now(const TrajectoryPrediction& pred,
                                       Millis now) {
  if (pred.steps.empty()) throw InputError("empty trajectory prediction");
  if (now - pred.steps.back().valid_at_ms > kPredictionExpiryGraceMs)
    return {};
  const PredictionStep* best = &pred.steps.front();
  double best_gap = std::abs(now - best->valid_at_ms);
  for (const auto& step : pred.steps) {
    const double gap = std::abs(now - step.valid_at_ms);
    if (gap < best_gap) {
      best = &step;
      best_gap = gap;
    }
  }
  return best->boxes;
}

TriggerState trigger(const ZecoConfig& cfg, Kbps current_rate_kbps,
                     std::optional<double> latest_confidence, double tau,
                     Millis now, const TriggerState& prev) {
  TriggerState next = prev;
  if (!prev.enabled) {
    next.above_exit_since_ms.reset();
    if (current_rate_kbps < cfg.trigger_rate_kbps && latest_confidence &&
        *latest_confidence < tau)
      next.enabled = true;
    return next;
  }
  if (current_rate_kbps > cfg.exit_factor * cfg.trigger_rate_kbps) {
    if (!next.above_exit_since_ms) next.above_exit_since_ms = now;
    if (now - *next.above_exit_since_ms >= cfg.exit_hold_ms) {
      next.enabled = false;
      next.above_exit_since_ms.reset();
    }
  } else {
    next.above_exit_since_ms.reset();
  }
  return next;
}

void write_qp_map_rows(std::ostream& out, FrameId frame_id, const QpMap& map) {
  for (int j = 0; j < map.grid.rows; ++j)
    for (int i = 0; i < map.grid.cols; ++i)
      out << frame_id << ',' << i << ',' << j << ',' << map.at(i, j) << '\n';
}

void write_region_feedback_rows(std::ostream& out,
                                const TrajectoryPrediction& pred) {
  for (const auto& step : pred.steps)
    for (const auto& b : step.boxes)
      out << format_fixed(pred.emitted_at_ms) << ','
          << format_fixed(step.valid_at_ms) << ',' << format_fixed(b.x) << ','
          << format_fixed(b.y) << ',' << format_fixed(b.w) << ','
          << format_fixed(b.h) << '\n';
}

std::vector<TrajectoryPrediction> read_region_feedback(std::istream& in) {
  std::vector<TrajectoryPrediction> out;
  std::string line;
  bool header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kRegionFeedbackHeader)
        throw ConfigError("region feedback must start with header '" +
                          std::string(kRegionFeedbackHeader) + "'");
      header = true;
      continue;
    }
    std::istringstream row(line);
    double v[6];
    char comma = 0;
    for (int k = 0; k < 6; ++k) {
      if (!(row >> v[k]) || (k < 5 && !(row >> comma && comma == ',')))
        throw ConfigError("region feedback line " + std::to_string(line_no) +
                          ": expected six numeric columns");
    }
    if (out.empty() || out.back().emitted_at_ms != v[0])
      out.push_back(TrajectoryPrediction{v[0], {}});
    auto& steps = out.back().steps;
    if (steps.empty() || steps.back().valid_at_ms != v[1])
      steps.push_back(PredictionStep{v[1], {}});
    steps.back().boxes.push_back({v[2], v[3], v[4], v[5], v[1]});
  }
  for (const auto& p : out) p.validate();
  return out;
}

}  // namespace artic::zeco
