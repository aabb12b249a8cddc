#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "artic/harness.hpp"

namespace artic::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() ||
      !std::isfinite(out))
    throw ConfigError(std::string(key) + ": expected a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(std::string(key) + ": expected an integer, got '" + v + "'");
  return out;
}

std::size_t to_count(std::string_view key, std::string_view text) {
  const auto v = to_int(key, text);
  if (v < 0) throw ConfigError(std::string(key) + ": must be >= 0");
  return static_cast<std::size_t>(v);
}

bool to_bool(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": expected a boolean, got '" + v + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string levels_text(const std::vector<Kbps>& levels) {
  std::string out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i) out += ',';
    out += num(levels[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, std::string_view)> set;
};

#define ARTIC_DOUBLE(name, member)                                        \
  Field {                                                                 \
    name, [](const ScenarioConfig& c) { return num(c.member); },          \
        [](ScenarioConfig& c, std::string_view v) {                       \
          c.member = to_double(name, v);                                  \
        }                                                                 \
  }
#define ARTIC_INT(name, member, type)                                     \
  Field {                                                                 \
    name, [](const ScenarioConfig& c) { return std::to_string(c.member); }, \
        [](ScenarioConfig& c, std::string_view v) {                       \
          c.member = static_cast<type>(to_int(name, v));                  \
        }                                                                 \
  }
#define ARTIC_COUNT(name, member)                                         \
  Field {                                                                 \
    name, [](const ScenarioConfig& c) { return std::to_string(c.member); }, \
        [](ScenarioConfig& c, std::string_view v) {                       \
          c.member = to_count(name, v);                                   \
        }                                                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"trace", [](const ScenarioConfig& c) { return c.trace; },
       [](ScenarioConfig& c, std::string_view v) { c.trace = trim(v); }},
      {"trace_loop",
       [](const ScenarioConfig& c) { return std::string(c.trace_loop ? "true" : "false"); },
       [](ScenarioConfig& c, std::string_view v) { c.trace_loop = to_bool("trace_loop", v); }},
      {"fluctuation_levels",
       [](const ScenarioConfig& c) { return levels_text(c.fluctuation_levels); },
       [](ScenarioConfig& c, std::string_view v) {
         c.fluctuation_levels.clear();
         for (const auto& item : split(v, ','))
           c.fluctuation_levels.push_back(to_double("fluctuation_levels", item));
       }},
      ARTIC_INT("width", frame.width, int),
      ARTIC_INT("height", frame.height, int),
      ARTIC_DOUBLE("fps", frame.fps),
      {"patch_px", [](const ScenarioConfig& c) { return std::to_string(c.frame.patch_px); },
       [](ScenarioConfig& c, std::string_view v) {
         c.frame.patch_px = static_cast<int>(to_int("patch_px", v));
         c.zeco.patch_px = c.frame.patch_px;
       }},
      {"cc", [](const ScenarioConfig& c) { return std::string(cc::to_string(c.cc)); },
       [](ScenarioConfig& c, std::string_view v) { c.cc = cc::parse_cc_kind(trim(v)); }},
      ARTIC_DOUBLE("cc_initial_kbps", cc_config.initial_kbps),
      ARTIC_DOUBLE("cc_floor_kbps", cc_config.floor_kbps),
      {"stack", [](const ScenarioConfig& c) { return std::string(to_string(c.stack)); },
       [](ScenarioConfig& c, std::string_view v) { c.stack = parse_stack(trim(v)); }},
      ARTIC_DOUBLE("tau", controller.tau),
      ARTIC_DOUBLE("gamma", controller.gamma),
      ARTIC_DOUBLE("floor_kbps", controller.floor_kbps),
      ARTIC_DOUBLE("ceiling_kbps", controller.ceiling_kbps),
      ARTIC_DOUBLE("stale_after_ms", controller.stale_after_ms),
      ARTIC_DOUBLE("mu", zeco.mu),
      ARTIC_INT("q_min", zeco.q_min, int),
      ARTIC_INT("q_max", zeco.q_max, int),
      ARTIC_DOUBLE("trigger_rate_kbps", zeco.trigger_rate_kbps),
      ARTIC_DOUBLE("exit_factor", zeco.exit_factor),
      ARTIC_DOUBLE("exit_hold_ms", zeco.exit_hold_ms),
      {"zeco_mode",
       [](const ScenarioConfig& c) {
         return std::string(c.zeco_mode == ZecoMode::kAlways ? "always" : "auto");
       },
       [](ScenarioConfig& c, std::string_view v) {
         const std::string s = trim(v);
         if (s == "auto") c.zeco_mode = ZecoMode::kAuto;
         else if (s == "always") c.zeco_mode = ZecoMode::kAlways;
         else throw ConfigError("zeco_mode: expected auto or always, got '" + s + "'");
       }},
      ARTIC_DOUBLE("sigmoid_scale", oracle.sigmoid_scale),
      ARTIC_DOUBLE("emit_period_ms", oracle.emit_period_ms),
      ARTIC_DOUBLE("feedback_latency_min_ms", oracle.min_feedback_latency_ms),
      ARTIC_DOUBLE("feedback_latency_max_ms", oracle.max_feedback_latency_ms),
      ARTIC_DOUBLE("prediction_noise_px", oracle.prediction_noise_px),
      ARTIC_COUNT("queue_packets", link.queue_packets),
      ARTIC_DOUBLE("prop_delay_ms", link.prop_delay_ms),
      ARTIC_COUNT("mtu_bytes", link.mtu_bytes),
      {"script", [](const ScenarioConfig& c) { return c.script; },
       [](ScenarioConfig& c, std::string_view v) { c.script = trim(v); }},
      ARTIC_COUNT("script_count", script_gen.count),
      ARTIC_DOUBLE("script_first_ask_ms", script_gen.first_ask_ms),
      ARTIC_DOUBLE("script_spacing_ms", script_gen.spacing_ms),
      ARTIC_DOUBLE("script_min_area", script_gen.min_area_fraction),
      ARTIC_DOUBLE("script_max_area", script_gen.max_area_fraction),
      ARTIC_DOUBLE("legibility_min", script_gen.legibility_min),
      ARTIC_DOUBLE("legibility_max", script_gen.legibility_max),
      ARTIC_DOUBLE("moving_fraction", script_gen.moving_fraction),
      ARTIC_DOUBLE("fixed_bitrate_kbps", fixed_bitrate_kbps),
      ARTIC_INT("max_transmissions", max_transmissions, int),
      ARTIC_DOUBLE("drain_ms", drain_ms),
      ARTIC_DOUBLE("duration_ms", duration_ms),
      {"seed", [](const ScenarioConfig& c) { return std::to_string(c.seed); },
       [](ScenarioConfig& c, std::string_view v) {
         const auto s = to_int("seed", v);
         if (s < 0) throw ConfigError("seed: must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       }},
  };
  return table;
}

#undef ARTIC_DOUBLE
#undef ARTIC_INT
#undef ARTIC_COUNT

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError("unknown scenario key '" + std::string(key) + "'");
}

std::filesystem::path resolve(const ScenarioConfig& cfg, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !cfg.base_dir.empty()) return cfg.base_dir / path;
  return path;
}

bool is_generator(const std::string& spec, std::string_view prefix) {
  return spec.rfind(prefix, 0) == 0;
}

}  // namespace

Stack parse_stack(std::string_view name) {
  if (name == "webrtc") return Stack::kWebrtc;
  if (name == "webrtc+recap") return Stack::kWebrtcRecap;
  if (name == "webrtc+zeco") return Stack::kWebrtcZeco;
  if (name == "artic") return Stack::kArtic;
  throw ConfigError("unknown stack '" + std::string(name) +
                    "' (webrtc, webrtc+recap, webrtc+zeco, artic)");
}

std::string_view to_string(Stack s) {
  switch (s) {
    case Stack::kWebrtc: return "webrtc";
    case Stack::kWebrtcRecap: return "webrtc+recap";
    case Stack::kWebrtcZeco: return "webrtc+zeco";
    case Stack::kArtic: return "artic";
  }
  return "webrtc";
}

bool uses_recap(Stack s) {
  return s == Stack::kWebrtcRecap || s == Stack::kArtic;
}

bool uses_zeco(Stack s) { return s == Stack::kWebrtcZeco || s == Stack::kArtic; }

void ScenarioConfig::set(std::string_view key, std::string_view value) {
  field(key).set(*this, value);
}

std::string ScenarioConfig::get(std::string_view key) const {
  return field(key).get(*this);
}

const std::vector<std::string>& ScenarioConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
  }();
  return names;
}

std::vector<std::pair<std::string, std::string>> ScenarioConfig::effective()
    const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void ScenarioConfig::validate() const {
  if (!(duration_ms > 0.0)) throw ConfigError("duration_ms must be > 0");
  if (!(drain_ms >= 0.0)) throw ConfigError("drain_ms must be >= 0");
  if (max_transmissions < 1) throw ConfigError("max_transmissions must be >= 1");
  if (!(fixed_bitrate_kbps >= 0.0))
    throw ConfigError("fixed_bitrate_kbps must be >= 0");
  frame.validate();
  if (frame.patch_px != zeco.patch_px)
    throw ConfigError("frame and zeco patch sizes differ");
  zeco.validate();
  controller.validate();
  oracle.validate();
  if (link.queue_packets == 0) throw ConfigError("queue_packets must be > 0");
  if (link.mtu_bytes == 0) throw ConfigError("mtu_bytes must be > 0");
  if (!(link.prop_delay_ms >= 0.0)) throw ConfigError("prop_delay_ms must be >= 0");
  if (!(cc_config.initial_kbps > 0.0 && cc_config.floor_kbps > 0.0))
    throw ConfigError("cc rates must be > 0");
  if (fluctuation_levels.empty())
    throw ConfigError("fluctuation_levels must not be empty");
  for (const Kbps l : fluctuation_levels)
    if (!(l > 0.0)) throw ConfigError("fluctuation levels must be > 0");

  const bool generated_trace = is_generator(trace, "constant:") ||
                               is_generator(trace, "step:") ||
                               is_generator(trace, "fluctuation:");
  if (!generated_trace && !std::filesystem::exists(resolve(*this, trace)))
    throw ConfigError("trace file not found: " + resolve(*this, trace).string());
  if (script != "generate" && script != "none" &&
      !std::filesystem::exists(resolve(*this, script)))
    throw ConfigError("script file not found: " + resolve(*this, script).string());
}

ScenarioConfig ScenarioConfig::parse(std::istream& in,
                                     const std::filesystem::path& base_dir) {
  ScenarioConfig cfg;
  cfg.base_dir = base_dir;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("scenario line " + std::to_string(line_no) +
                        ": expected key = value");
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw ConfigError("scenario line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return cfg;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  return parse(in, path.parent_path());
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // splitmix64 over the seed mixed with an FNV-1a hash of the stream name.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

net::BandwidthTrace make_trace(const ScenarioConfig& cfg) {
  const std::string& spec = cfg.trace;
  const Millis horizon = cfg.duration_ms + cfg.drain_ms;

  if (is_generator(spec, "constant:"))
    return net::BandwidthTrace::constant(to_double("trace", spec.substr(9)));

  if (is_generator(spec, "step:")) {
    const auto parts = split(spec.substr(5), ',');
    if (parts.size() != 3 && parts.size() != 4)
      throw ConfigError("trace: step:<before>,<after>,<at_ms>[,<ramp_ms>]");
    const Kbps before = to_double("trace", parts[0]);
    const Kbps after = to_double("trace", parts[1]);
    const Millis at = to_double("trace", parts[2]);
    const Millis ramp = parts.size() == 4 ? to_double("trace", parts[3]) : 0.0;
    if (!(at > 0.0) || !(ramp >= 0.0))
      throw ConfigError("trace: step time must be > 0 and ramp >= 0");
    std::vector<net::TraceSample> samples{{0.0, before}};
    // A ramp is a staircase of 100 ms steps ending at `after`.
    const int steps = std::max(1, static_cast<int>(std::ceil(ramp / 100.0)));
    for (int k = 0; k < steps; ++k) {
      const double frac = static_cast<double>(k + 1) / steps;
      samples.push_back({at + ramp * k / steps, before + (after - before) * frac});
    }
    return net::BandwidthTrace(std::move(samples), false,
                               std::max(horizon, samples.back().time_ms + 1.0));
  }

  if (is_generator(spec, "fluctuation:")) {
    const double per_min = to_double("trace", spec.substr(12));
    if (!(per_min > 0.0)) throw ConfigError("trace: fluctuation rate must be > 0");
    const auto& levels = cfg.fluctuation_levels;
    const Millis interval = 60000.0 / per_min;
    // The level sequence depends only on the seed, so runs at different
    // frequencies see the same levels in the same order.
    std::mt19937_64 rng(derive_seed(cfg.seed, "trace"));
    std::size_t current =
        std::uniform_int_distribution<std::size_t>(0, levels.size() - 1)(rng);
    std::vector<net::TraceSample> samples;
    for (Millis t = 0.0; t < horizon; t += interval) {
      samples.push_back({t, levels[current]});
      if (levels.size() > 1) {
        const std::size_t pick =
            std::uniform_int_distribution<std::size_t>(0, levels.size() - 2)(rng);
        current = pick >= current ? pick + 1 : pick;
      }
    }
    return net::BandwidthTrace(std::move(samples), false, horizon);
  }

  return net::BandwidthTrace::load_csv(resolve(cfg, spec), cfg.trace_loop);
}

oracle::ScenarioScript make_script(const ScenarioConfig& cfg) {
  oracle::ScenarioScript script;
  if (cfg.script == "none") return script;
  if (cfg.script == "generate") {
    oracle::ScriptGenConfig gen = cfg.script_gen;
    gen.seed = derive_seed(cfg.seed, "script");
    if (gen.count == 0 && cfg.duration_ms > gen.first_ask_ms && gen.spacing_ms > 0.0)
      gen.count = static_cast<std::size_t>(
          std::floor((cfg.duration_ms - gen.first_ask_ms) / gen.spacing_ms));
    script = oracle::generate_script(gen, cfg.frame.width, cfg.frame.height);
  } else {
    script = oracle::ScenarioScript::load(resolve(cfg, cfg.script));
  }
  script.validate(cfg.frame.width, cfg.frame.height);
  return script;
}

}  // namespace artic::harness
