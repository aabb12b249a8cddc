#include "artic/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace artic::oracle {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("scenario script line " + std::to_string(line_no) +
                    ": '" + s + "' is not a number");
}

}  // namespace

zeco::BoundingBox ObjectTrack::box_at(Millis t) const {
  if (keyframes.empty()) throw ConfigError("track '" + name + "' is empty");
  if (t <= keyframes.front().valid_at_ms) {
    auto b = keyframes.front();
    b.valid_at_ms = t;
    return b;
  }
  if (t >= keyframes.back().valid_at_ms) {
    auto b = keyframes.back();
    b.valid_at_ms = t;
    return b;
  }
  auto hi = std::upper_bound(
      keyframes.begin(), keyframes.end(), t,
      [](Millis v, const zeco::BoundingBox& k) { return v < k.valid_at_ms; });
  auto lo = hi - 1;
  const double a = (t - lo->valid_at_ms) / (hi->valid_at_ms - lo->valid_at_ms);
  auto lerp = [a](double x, double y) { return x + a * (y - x); };
  return {lerp(lo->x, hi->x), lerp(lo->y, hi->y), lerp(lo->w, hi->w),
          lerp(lo->h, hi->h), t};
}

zeco::BoundingBox ScenarioScript::region_at(const QaSample& sample,
                                            Millis t) const {
  if (sample.object.empty()) {
    auto b = sample.critical_region;
    b.valid_at_ms = t;
    return b;
  }
  const auto it = tracks.find(sample.object);
  if (it == tracks.end())
    throw ConfigError("sample '" + sample.id + "' references unknown track '" +
                      sample.object + "'");
  return it->second.box_at(t);
}

const QaSample* ScenarioScript::current_sample(Millis t) const {
  if (samples.empty()) return nullptr;
  auto it = std::lower_bound(
      samples.begin(), samples.end(), t,
      [](const QaSample& s, Millis v) { return s.ask_at_ms < v; });
  return it == samples.end() ? &samples.back() : &*it;
}

void ScenarioScript::validate(int width, int height) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!(s.legibility_qp >= 0.0 && s.legibility_qp <= 51.0))
      throw ConfigError("sample '" + s.id + "': legibility_qp outside [0,51]");
    if (i > 0 && s.ask_at_ms < samples[i - 1].ask_at_ms)
      throw ConfigError("samples must be sorted by ask time");
    const auto region = region_at(s, s.ask_at_ms);
    if (!(region.w > 0.0 && region.h > 0.0) || region.x < 0.0 ||
        region.y < 0.0 || region.x + region.w > width ||
        region.y + region.h > height)
      throw ConfigError("sample '" + s.id + "': critical region outside frame");
  }
  for (const auto& [name, track] : tracks)
    for (std::size_t k = 1; k < track.keyframes.size(); ++k)
      if (!(track.keyframes[k].valid_at_ms > track.keyframes[k - 1].valid_at_ms))
        throw ConfigError("track '" + name + "' times must increase");
}

ScenarioScript ScenarioScript::parse(std::istream& in) {
  ScenarioScript script;
  enum class Section { kNone, kQa, kTracks } section = Section::kNone;
  bool expect_header = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line == "[qa]") {
      section = Section::kQa;
      expect_header = true;
      continue;
    }
    if (line == "[tracks]") {
      section = Section::kTracks;
      expect_header = true;
      continue;
    }
    if (expect_header) {
      const char* want = section == Section::kQa
                             ? "id,ask_ms,region,legibility_qp,tag"
                             : "object,t_ms,x,y,w,h";
      if (line != want)
        throw ConfigError("scenario script line " + std::to_string(line_no) +
                          ": expected header '" + want + "'");
      expect_header = false;
      continue;
    }
    const auto cols = split(line, ',');
    if (section == Section::kQa) {
      if (cols.size() != 5)
        throw ConfigError("scenario script line " + std::to_string(line_no) +
                          ": qa rows need 5 columns");
      QaSample s;
      s.id = trim(cols[0]);
      s.ask_at_ms = to_double(trim(cols[1]), line_no);
      const std::string region = trim(cols[2]);
      if (!region.empty() && region[0] == '@') {
        s.object = region.substr(1);
      } else {
        std::istringstream r(region);
        if (!(r >> s.critical_region.x >> s.critical_region.y >>
              s.critical_region.w >> s.critical_region.h))
          throw ConfigError("scenario script line " + std::to_string(line_no) +
                            ": region must be 'x y w h' or '@track'");
      }
      s.legibility_qp = to_double(trim(cols[3]), line_no);
      s.tag = trim(cols[4]);
      script.samples.push_back(std::move(s));
    } else if (section == Section::kTracks) {
      if (cols.size() != 6)
        throw ConfigError("scenario script line " + std::to_string(line_no) +
                          ": track rows need 6 columns");
      const std::string name = trim(cols[0]);
      zeco::BoundingBox b{to_double(trim(cols[2]), line_no),
                          to_double(trim(cols[3]), line_no),
                          to_double(trim(cols[4]), line_no),
                          to_double(trim(cols[5]), line_no),
                          to_double(trim(cols[1]), line_no)};
      auto& track = script.tracks[name];
      track.name = name;
      track.keyframes.push_back(b);
    } else {
      throw ConfigError("scenario script line " + std::to_string(line_no) +
                        ": row outside a [qa] or [tracks] section");
    }
  }
  std::stable_sort(script.samples.begin(), script.samples.end(),
                   [](const QaSample& a, const QaSample& b) {
                     return a.ask_at_ms < b.ask_at_ms;
                   });
  return script;
}

ScenarioScript ScenarioScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario script " + path.string());
  return parse(in);
}

void ScenarioScript::write(std::ostream& out) const {
  out << "[qa]\nid,ask_ms,region,legibility_qp,tag\n";
  for (const auto& s : samples) {
    out << s.id << ',' << format_fixed(s.ask_at_ms) << ',';
    if (!s.object.empty()) {
      out << '@' << s.object;
    } else {
      const auto& r = s.critical_region;
      out << format_fixed(r.x) << ' ' << format_fixed(r.y) << ' '
          << format_fixed(r.w) << ' ' << format_fixed(r.h);
    }
    out << ',' << format_fixed(s.legibility_qp) << ',' << s.tag << '\n';
  }
  if (tracks.empty()) return;
  out << "[tracks]\nobject,t_ms,x,y,w,h\n";
  for (const auto& [name, track] : tracks)
    for (const auto& k : track.keyframes)
      out << name << ',' << format_fixed(k.valid_at_ms) << ','
          << format_fixed(k.x) << ',' << format_fixed(k.y) << ','
          << format_fixed(k.w) << ',' << format_fixed(k.h) << '\n';
}

ScenarioScript generate_script(const ScriptGenConfig& cfg, int width,
                               int height) {
  if (!(cfg.min_area_fraction > 0.0 &&
        cfg.min_area_fraction <= cfg.max_area_fraction &&
        cfg.max_area_fraction <= 1.0))
    throw ConfigError("area fractions must satisfy 0 < min <= max <= 1");
  if (!(cfg.legibility_min <= cfg.legibility_max))
    throw ConfigError("legibility range is inverted");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> shares;
  for (const auto& t : kTagTaxonomy) shares.push_back(t.share);
  std::discrete_distribution<std::size_t> tag_dist(shares.begin(),
                                                   shares.end());
  const double frame_area = static_cast<double>(width) * height;

  ScenarioScript script;
  for (std::size_t n = 0; n < cfg.count; ++n) {
    QaSample s;
    s.id = "q" + std::to_string(n + 1);
    s.ask_at_ms = cfg.first_ask_ms + cfg.spacing_ms * static_cast<double>(n);
    const double area =
        frame_area * (cfg.min_area_fraction +
                      unit(rng) * (cfg.max_area_fraction - cfg.min_area_fraction));
    const double aspect = 0.5 + 1.5 * unit(rng);
    const double w = std::min(std::sqrt(area * aspect), static_cast<double>(width));
    const double h = std::min(area / w, static_cast<double>(height));
    const double x = unit(rng) * (width - w);
    const double y = unit(rng) * (height - h);
    s.critical_region = {x, y, w, h, s.ask_at_ms};
    s.legibility_qp =
        cfg.legibility_min + unit(rng) * (cfg.legibility_max - cfg.legibility_min);
    s.tag = kTagTaxonomy[tag_dist(rng)].tag;
    if (unit(rng) < cfg.moving_fraction) {
      // Drift across part of the frame, arriving at the ask-time box.
      ObjectTrack track;
      track.name = "obj_" + s.id;
      const double x0 = unit(rng) * (width - w);
      const double y0 = unit(rng) * (height - h);
      track.keyframes.push_back({x0, y0, w, h, s.ask_at_ms - cfg.spacing_ms});
      track.keyframes.push_back({x, y, w, h, s.ask_at_ms});
      s.object = track.name;
      script.tracks.emplace(track.name, std::move(track));
    }
    script.samples.push_back(std::move(s));
  }
  return script;
}

void OracleConfig::validate() const {
  if (!(sigmoid_scale > 0.0)) throw ConfigError("sigmoid scale must be > 0");
  if (!(emit_period_ms > 0.0)) throw ConfigError("emit period must be > 0");
  if (!(min_feedback_latency_ms <= max_feedback_latency_ms))
    throw ConfigError("feedback latency range is inverted");
  if (!(prediction_noise_px >= 0.0))
    throw ConfigError("prediction noise must be >= 0");
}

bool grade_qp(double critical_mean_qp, double legibility_qp) {
  return critical_mean_qp <= legibility_qp;
}

bool grade(const QaSample& sample, const zeco::BoundingBox& region,
           const codec::EncodedFrame* frame) {
  if (frame == nullptr) return false;
  const double qp = frame->region_mean_qp(region);
  if (std::isnan(qp)) return false;
  return grade_qp(qp, sample.legibility_qp);
}

double confidence_from_qp(const OracleConfig& cfg, double critical_mean_qp,
                          double legibility_qp) {
  return 1.0 /
         (1.0 + std::exp((critical_mean_qp - legibility_qp) / cfg.sigmoid_scale));
}

double confidence(const OracleConfig& cfg, const QaSample& sample,
                  const zeco::BoundingBox& region,
                  const codec::EncodedFrame* frame) {
  if (frame == nullptr) return 0.0;
  const double qp = frame->region_mean_qp(region);
  if (std::isnan(qp)) return 0.0;
  return confidence_from_qp(cfg, qp, sample.legibility_qp);
}

Oracle::Oracle(OracleConfig cfg, const ScenarioScript& script,
               codec::FrameSpec frame)
    : cfg_(cfg),
      script_(script),
      frame_(frame),
      rng_(cfg.seed),
      next_emit_ms_(cfg.emit_period_ms) {
  cfg_.validate();
  frame_.validate();
}

std::optional<FeedbackMessage> Oracle::emit_feedback(
    Millis now, const codec::EncodedFrame* latest_delivered) {
  if (now < next_emit_ms_) return std::nullopt;
  next_emit_ms_ = now + cfg_.emit_period_ms;

  FeedbackMessage msg;
  msg.emitted_at_ms = now;
  msg.predictions.emitted_at_ms = now;
  const QaSample* sample = script_.current_sample(now);
  msg.confidence = 1.0;
  if (sample != nullptr)
    msg.confidence = confidence(cfg_, *sample, script_.region_at(*sample, now),
                                latest_delivered);

  std::normal_distribution<double> noise(0.0, 1.0);
  for (const Millis offset : kPredictionOffsetsMs) {
    zeco::PredictionStep step;
    step.valid_at_ms = now + offset;
    if (sample != nullptr) {
      auto box = script_.region_at(*sample, step.valid_at_ms);
      if (cfg_.prediction_noise_px > 0.0) {
        box.x += cfg_.prediction_noise_px * noise(rng_);
        box.y += cfg_.prediction_noise_px * noise(rng_);
        box.x = std::clamp(box.x, 0.0, std::max(0.0, frame_.width - box.w));
        box.y = std::clamp(box.y, 0.0, std::max(0.0, frame_.height - box.h));
      }
      step.boxes.push_back(box.clamped(frame_.width, frame_.height));
    }
    msg.predictions.steps.push_back(std::move(step));
  }

  std::uniform_real_distribution<double> latency(cfg_.min_feedback_latency_ms,
                                                 cfg_.max_feedback_latency_ms);
  msg.deliver_at_ms = now + latency(rng_);
  return msg;
}

}  // namespace artic::oracle
