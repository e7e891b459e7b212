#pragma once

// Flat `section.key = value` configuration files.
//
//   # comment
//   cavity.mirror_reflectivity = 0.995
//   cavity.extinction_pbs_db = inf
//   run.seed = 7
//
// Every key is optional (defaults are the bench component values); unknown keys,
// duplicate keys and malformed numbers are rejected with the offending line.

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "loopmem/errors.hpp"
#include "loopmem/memory_loop.hpp"
#include "loopmem/source_detector.hpp"

namespace loopmem {

inline constexpr std::string_view kConfigSchema = "loopmem-config/1";

/// Cavity, source and detector settings for one simulated bench.
struct SimulationConfig {
  CavityConfig cavity;
  SourceConfig source;
  DetectorConfig detector;

  void validate() const {
    cavity.validate();
    source.validate();
    detector.validate();
    dark_click_probability(detector, source);
  }
};

inline SimulationConfig noiseless(SimulationConfig config) {
  config.cavity = noiseless(config.cavity);
  return config;
}

struct RunConfig {
  SimulationConfig sim;
  std::uint64_t seed = 1;
  std::string output_dir = ".";

  void validate() const { sim.validate(); }
};

/// %.17g, with "inf" for infinities so values round-trip exactly.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view text, std::size_t line) {
  const std::string s(trim(text));
  if (s == "inf" || s == "+inf" || s == "infinity") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("expected a number, got '" + s + "'", line);
  }
  return v;
}

inline std::int64_t parse_int(std::string_view text, std::size_t line) {
  const std::string s(trim(text));
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("expected an integer, got '" + s + "'", line);
  }
  return v;
}

namespace detail {

struct ConfigField {
  std::function<void(RunConfig&, std::string_view, std::size_t)> read;
  std::function<std::string(const RunConfig&)> write;
};

inline const std::map<std::string, ConfigField, std::less<>>& config_fields() {
  auto number = [](auto accessor) {
    return ConfigField{
        [accessor](RunConfig& c, std::string_view v, std::size_t line) {
          accessor(c) = parse_double(v, line);
        },
        [accessor](const RunConfig& c) {
          RunConfig copy = c;
          return format_double(accessor(copy));
        }};
  };
  static const std::map<std::string, ConfigField, std::less<>> fields = {
      {"cavity.mirror_reflectivity", number([](RunConfig& c) -> double& { return c.sim.cavity.mirror_reflectivity; })},
      {"cavity.pc_transmission", number([](RunConfig& c) -> double& { return c.sim.cavity.pc_transmission; })},
      {"cavity.extinction_pbs_db", number([](RunConfig& c) -> double& { return c.sim.cavity.extinction_pbs_db; })},
      {"cavity.extinction_hwp_db", number([](RunConfig& c) -> double& { return c.sim.cavity.extinction_hwp_db; })},
      {"cavity.extinction_pc_db", number([](RunConfig& c) -> double& { return c.sim.cavity.extinction_pc_db; })},
      {"cavity.hwp_angle_deg", number([](RunConfig& c) -> double& { return c.sim.cavity.hwp_angle_deg; })},
      {"cavity.round_trip_ns", number([](RunConfig& c) -> double& { return c.sim.cavity.round_trip_ns; })},
      {"cavity.residual_loss", number([](RunConfig& c) -> double& { return c.sim.cavity.residual_loss; })},
      {"cavity.phase_jitter_sigma", number([](RunConfig& c) -> double& { return c.sim.cavity.phase_jitter_sigma; })},
      {"cavity.loop_length_m", number([](RunConfig& c) -> double& { return c.sim.cavity.loop_length_m; })},
      {"cavity.bin_separation_ns", number([](RunConfig& c) -> double& { return c.sim.cavity.bin_separation_ns; })},
      {"source.mean_photon_number", number([](RunConfig& c) -> double& { return c.sim.source.mean_photon_number; })},
      {"source.rep_rate_hz", number([](RunConfig& c) -> double& { return c.sim.source.rep_rate_hz; })},
      {"source.pulse_width_ps", number([](RunConfig& c) -> double& { return c.sim.source.pulse_width_ps; })},
      {"source.collection_time_s", number([](RunConfig& c) -> double& { return c.sim.source.collection_time_s; })},
      {"detector.dark_rate_hz", number([](RunConfig& c) -> double& { return c.sim.detector.dark_rate_hz; })},
      {"detector.window_ns", number([](RunConfig& c) -> double& { return c.sim.detector.window_ns; })},
      {"detector.detection_efficiency", number([](RunConfig& c) -> double& { return c.sim.detector.detection_efficiency; })},
      {"detector.dark_count_model",
       {[](RunConfig& c, std::string_view v, std::size_t line) {
          try {
            c.sim.detector.dark_count_model = parse_dark_count_model(std::string(trim(v)));
          } catch (const InvalidInput& e) {
            throw ParseError(e.what(), line);
          }
        },
        [](const RunConfig& c) { return to_string(c.sim.detector.dark_count_model); }}},
      {"detector.reference_windows",
       {[](RunConfig& c, std::string_view v, std::size_t line) {
          c.sim.detector.reference_windows = parse_int(v, line);
        },
        [](const RunConfig& c) { return std::to_string(c.sim.detector.reference_windows); }}},
      {"run.seed",
       {[](RunConfig& c, std::string_view v, std::size_t line) {
          const auto s = parse_int(v, line);
          if (s < 0) throw ParseError("run.seed must be >= 0", line);
          c.seed = static_cast<std::uint64_t>(s);
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"run.output_dir",
       {[](RunConfig& c, std::string_view v, std::size_t) { c.output_dir = std::string(trim(v)); },
        [](const RunConfig& c) { return c.output_dir; }}},
  };
  return fields;
}

}  // namespace detail

/// Parses a config stream over the defaults, then validates the result.
inline RunConfig parse_config(std::istream& in) {
  RunConfig config;
  const auto& fields = detail::config_fields();
  std::map<std::string, std::size_t, std::less<>> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view text = raw;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line);
    const std::string key(trim(text.substr(0, eq)));
    const auto it = fields.find(key);
    if (it == fields.end()) throw ParseError("unknown key '" + key + "'", line);
    if (auto [pos, fresh] = seen.emplace(key, line); !fresh) {
      throw ParseError("duplicate key '" + key + "' (first set on line " +
                           std::to_string(pos->second) + ")",
                       line);
    }
    it->second.read(config, text.substr(eq + 1), line);
  }
  try {
    config.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), 0);
  }
  return config;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  out << "# " << kConfigSchema << "\n";
  std::string section;
  for (const auto& [key, field] : detail::config_fields()) {
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      if (!section.empty()) out << "\n";
      section = key.substr(0, dot);
    }
    out << key << " = " << field.write(config) << "\n";
  }
  return out.str();
}

}  // namespace loopmem
