#pragma once

// On-demand storage in the butterfly loop (PBS, two mirrors, Pockels cell, HWP).
//
// A stored pulse sits in the V mode at the PBS reflected port. Each round it
// passes mirror, mirror, Pockels cell, HWP(45) and the PBS. With the cell
// switched on the two 90-degree rotations cancel (V -> H -> V) and the pulse
// is reflected back into the loop; with the cell off the HWP alone turns V into
// H and the pulse leaves through the transmitted port.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "loopmem/errors.hpp"
#include "loopmem/optics.hpp"
#include "loopmem/random.hpp"

namespace loopmem {

inline constexpr double kDefaultMirrorReflectivity = 0.995;
inline constexpr double kDefaultPcTransmission = 0.983;
inline constexpr double kDefaultExtinctionDb = 30.0;
inline constexpr double kDefaultRoundTripNs = 13.0;
inline constexpr double kTargetPerRoundSurvival = 0.950;

/// Lumped coupling loss that brings the composed round (components plus extinction
/// leakage at the default 30 dB) to exactly kTargetPerRoundSurvival.
inline double default_residual_loss() {
  const double leak = std::pow(10.0, -kDefaultExtinctionDb / 10.0);
  // Retained V power of one round with unit residual: r^2 T (1 - l)(1 - 2l)^2.
  const double retained = kDefaultMirrorReflectivity * kDefaultMirrorReflectivity *
                          kDefaultPcTransmission * (1.0 - leak) * (1.0 - 2.0 * leak) *
                          (1.0 - 2.0 * leak);
  return kTargetPerRoundSurvival / retained;
}

/// Relative early/late phase noise per round giving a worst-case six-state fidelity of
/// 0.9915 after 40 rounds: (1 + exp(-40 sigma^2 / 2)) / 2 = 0.9915.
inline double default_phase_jitter_sigma() {
  return std::sqrt(-2.0 * std::log(2.0 * 0.9915 - 1.0) / 40.0);
}

struct CavityConfig {
  double mirror_reflectivity = kDefaultMirrorReflectivity;
  double pc_transmission = kDefaultPcTransmission;
  double extinction_pbs_db = kDefaultExtinctionDb;
  double extinction_hwp_db = kDefaultExtinctionDb;
  double extinction_pc_db = kDefaultExtinctionDb;
  double hwp_angle_deg = 45.0;
  double round_trip_ns = kDefaultRoundTripNs;
  double residual_loss = default_residual_loss();
  double phase_jitter_sigma = default_phase_jitter_sigma();  // rad per round
  double loop_length_m = 4.0;                                // informational
  double bin_separation_ns = kDefaultBinSeparationNs;

  void set_extinction_db(double db) {
    extinction_pbs_db = db;
    extinction_hwp_db = db;
    extinction_pc_db = db;
  }

  /// mirror^2 x PC transmission x residual; the round's survival without leakage.
  double component_survival() const {
    return mirror_reflectivity * mirror_reflectivity * pc_transmission * residual_loss;
  }

  void validate() const {
    auto efficiency = [](double v, const char* name) {
      if (!(v > 0.0 && v <= 1.0)) {
        throw InvalidInput(std::string("cavity.") + name + " must lie in (0, 1], got " +
                           std::to_string(v));
      }
    };
    efficiency(mirror_reflectivity, "mirror_reflectivity");
    efficiency(pc_transmission, "pc_transmission");
    efficiency(residual_loss, "residual_loss");
    for (double db : {extinction_pbs_db, extinction_hwp_db, extinction_pc_db}) {
      if (std::isnan(db) || db <= 0.0) throw InvalidInput("cavity extinction ratios must be > 0 dB");
    }
    if (!std::isfinite(hwp_angle_deg)) throw InvalidInput("cavity.hwp_angle_deg must be finite");
    if (!(bin_separation_ns > 0.0)) throw InvalidInput("cavity.bin_separation_ns must be > 0");
    if (!(round_trip_ns > 2.0 * bin_separation_ns) || !std::isfinite(round_trip_ns)) {
      throw InvalidInput("cavity.round_trip_ns must exceed twice the time-bin separation");
    }
    if (!(phase_jitter_sigma >= 0.0) || !std::isfinite(phase_jitter_sigma)) {
      throw InvalidInput("cavity.phase_jitter_sigma must be finite and >= 0");
    }
    if (!(loop_length_m > 0.0)) throw InvalidInput("cavity.loop_length_m must be > 0");
  }
};

/// Zero phase jitter and ideal extinction; component losses are kept.
inline CavityConfig noiseless(CavityConfig config) {
  config.phase_jitter_sigma = 0.0;
  config.set_extinction_db(kInfiniteExtinction);
  return config;
}

struct ControlSchedule {
  double high_start_ns = 0.0;
  double high_width_ns = 0.0;
  int n_rounds = 0;

  bool has_high_window() const { return n_rounds > 0; }
};

/// High-voltage window for n storage rounds. The cell is switched on half a period after
/// the pulse first passes it, so the rise falls inside the first loop period.
inline ControlSchedule build_schedule(int n_rounds, const CavityConfig& config) {
  if (n_rounds < 0) throw InvalidInput("n_rounds must be >= 0, got " + std::to_string(n_rounds));
  ControlSchedule schedule;
  schedule.n_rounds = n_rounds;
  if (n_rounds > 0) {
    schedule.high_start_ns = 0.5 * config.round_trip_ns;
    schedule.high_width_ns = n_rounds * config.round_trip_ns;
  }
  return schedule;
}

struct RoundTripOutcome {
  PolTimeBinState retained;   // V mode at the reflected port: stays in the loop
  PolTimeBinState exit_port;  // everything at the transmitted port
  double input_power = 0.0;
  double retained_power = 0.0;
  // Light leaving the stored mode this round: the transmitted port plus H light
  // misrouted into the reflected port (it exits on the next pass).
  double emitted_power = 0.0;
  double absorbed_power = 0.0;
  double jitter_rad = 0.0;

  double survival() const { return input_power > 0.0 ? retained_power / input_power : 0.0; }
};

/// One pass of the loop. The late bin picks up a N(0, sigma) phase relative to the early
/// bin before the optics; both bins see identical element settings.
inline RoundTripOutcome round_trip(const PolTimeBinState& state, const CavityConfig& config,
                                   bool pc_high, Rng& rng) {
  RoundTripOutcome out;
  out.input_power = state.power();

  PolTimeBinState s = state;
  if (config.phase_jitter_sigma > 0.0) {
    std::normal_distribution<double> jitter(0.0, config.phase_jitter_sigma);
    out.jitter_rad = jitter(rng);
    s.slots[1] *= std::polar(1.0, out.jitter_rad);
  }

  const OpticalElement m = mirror(config.mirror_reflectivity);
  s = apply_element(s, m);
  s = apply_element(s, m);
  s = apply_element(s, scalar_loss(config.residual_loss, "residual"));
  s = apply_element(s, jones_pockels(pc_high, config.pc_transmission, config.extinction_pc_db));
  s = apply_element(s, jones_hwp(config.hwp_angle_deg, config.extinction_hwp_db));

  PbsOutput ports = pbs_route(s, config.extinction_pbs_db);
  out.retained = ports.reflected.project(Pol::V);
  out.exit_port = ports.transmitted;
  out.retained_power = out.retained.power();
  out.emitted_power = ports.transmitted.power() + ports.reflected.power(Pol::H);
  out.absorbed_power = out.input_power - out.retained_power - out.emitted_power;
  return out;
}

/// Retained power fraction of one stored round (noise-free), i.e. exp(-alpha).
inline double per_round_survival(const CavityConfig& config) {
  CavityConfig quiet = config;
  quiet.phase_jitter_sigma = 0.0;
  Rng rng(0);
  const auto stored = PolTimeBinState::from_time_bin({1.0, 0.0}, Pol::V, config.bin_separation_ns);
  return round_trip(stored, quiet, true, rng).survival();
}

/// residual_loss that makes per_round_survival equal target; throws when it would exceed 1.
inline double residual_loss_for(const CavityConfig& config, double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw InvalidInput("per-round survival target must lie in (0, 1]");
  }
  CavityConfig unit = config;
  unit.residual_loss = 1.0;
  const double residual = target / per_round_survival(unit);
  if (residual > 1.0 + 1e-15) {
    throw InvalidInput("per-round survival " + std::to_string(target) +
                       " exceeds what the lossy components allow (" +
                       std::to_string(per_round_survival(unit)) + ")");
  }
  return std::min(residual, 1.0);
}

struct LeakEvent {
  int round_index = 0;
  double time_ns = 0.0;
  double power = 0.0;
};

struct MemoryTrace {
  PolTimeBinState released_state;  // H mode, renormalized to unit power
  double survival_probability = 1.0;
  std::vector<LeakEvent> leak_events;
  double absorbed_power = 0.0;
  double input_time_ns = 0.0;
  double release_time_ns = 0.0;
  int n_rounds = 0;
  ControlSchedule schedule;
  double accumulated_phase_rad = 0.0;  // this trajectory's total early/late jitter
  double phase_variance = 0.0;         // n sigma^2, ensemble variance of that phase

  double total_leak_power() const {
    return std::accumulate(leak_events.begin(), leak_events.end(), 0.0,
                           [](double acc, const LeakEvent& e) { return acc + e.power; });
  }

  /// Leak power whose timestamp falls inside a window of width window_ns centred on t_ns.
  double leak_power_near(double t_ns, double window_ns) const {
    double p = 0.0;
    for (const auto& e : leak_events) {
      if (std::abs(e.time_ns - t_ns) <= 0.5 * window_ns) p += e.power;
    }
    return p;
  }

  TimeBinAmplitudes released_qubit() const { return released_state.time_bin(Pol::H); }
};

/// Stores a unit-power pulse for n_rounds and releases it. Injection and release
/// passes are treated as lossless coupling, so survival is the product of the n
/// stored rounds. Leak events are stamped at the round boundary where they exit.
inline MemoryTrace run_memory(const TimeBinAmplitudes& input, int n_rounds,
                              const CavityConfig& config, std::uint64_t seed,
                              double input_time_ns = 0.0) {
  config.validate();
  MemoryTrace trace;
  trace.schedule = build_schedule(n_rounds, config);
  trace.n_rounds = n_rounds;
  trace.input_time_ns = input_time_ns;
  trace.release_time_ns = input_time_ns + n_rounds * config.round_trip_ns;
  trace.phase_variance = n_rounds * config.phase_jitter_sigma * config.phase_jitter_sigma;

  const double norm = std::sqrt(input.norm_squared());
  if (!(norm > 0.0)) throw InvalidInput("input state has zero norm");
  const TimeBinAmplitudes unit{input.early / norm, input.late / norm};

  Rng rng = make_stream(seed, {0x6d656d6fu});
  PolTimeBinState stored = PolTimeBinState::from_time_bin(unit, Pol::V, config.bin_separation_ns);
  for (int k = 1; k <= n_rounds; ++k) {
    RoundTripOutcome r = round_trip(stored, config, true, rng);
    trace.leak_events.push_back({k, input_time_ns + k * config.round_trip_ns, r.emitted_power});
    trace.absorbed_power += r.absorbed_power;
    trace.accumulated_phase_rad += r.jitter_rad;
    stored = std::move(r.retained);
  }
  trace.survival_probability = stored.power();

  const TimeBinAmplitudes kept = stored.time_bin(Pol::V);
  const double kept_norm = std::sqrt(kept.norm_squared());
  trace.released_state = PolTimeBinState::from_time_bin(
      {kept.early / kept_norm, kept.late / kept_norm}, Pol::H, config.bin_separation_ns);
  return trace;
}

}  // namespace loopmem
