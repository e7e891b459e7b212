#pragma once

// Jones-calculus model of the loop's polarization optics and the six-state
// time-bin encoder.
//
// Basis conventions used throughout the library:
//   polarization vectors are (H, V);
//   time-bin qubits are (early, late), so |e> = (1, 0) and |l> = (0, 1).
// States are compared up to a global phase.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "loopmem/errors.hpp"

namespace loopmem {

using Complex = std::complex<double>;
using JonesMatrix = Eigen::Matrix2cd;
using JonesVector = Eigen::Vector2cd;

inline constexpr double kInfiniteExtinction = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultBinSeparationNs = 1.5;

enum class StateLabel { e, l, plus, minus, L, R };

inline constexpr std::array<StateLabel, 6> kAllStates = {
    StateLabel::e, StateLabel::l, StateLabel::plus, StateLabel::minus, StateLabel::L, StateLabel::R};

inline std::string_view to_string(StateLabel label) {
  switch (label) {
    case StateLabel::e: return "e";
    case StateLabel::l: return "l";
    case StateLabel::plus: return "plus";
    case StateLabel::minus: return "minus";
    case StateLabel::L: return "L";
    case StateLabel::R: return "R";
  }
  return "?";
}

inline StateLabel parse_state_label(std::string_view name) {
  for (auto label : kAllStates) {
    if (to_string(label) == name) return label;
  }
  throw InvalidInput("unknown state label '" + std::string(name) +
                     "' (expected one of e, l, plus, minus, L, R)");
}

/// Amplitudes of a time-bin qubit over {early, late}.
struct TimeBinAmplitudes {
  Complex early{1.0, 0.0};
  Complex late{0.0, 0.0};

  double norm_squared() const { return std::norm(early) + std::norm(late); }
};

/// |<a|b>|^2, the global-phase-insensitive overlap.
inline double overlap_probability(const TimeBinAmplitudes& a, const TimeBinAmplitudes& b) {
  return std::norm(std::conj(a.early) * b.early + std::conj(a.late) * b.late);
}

inline TimeBinAmplitudes encode_time_bin(StateLabel label) {
  const double h = std::numbers::sqrt2 / 2.0;
  const Complex i{0.0, 1.0};
  switch (label) {
    case StateLabel::e: return {1.0, 0.0};
    case StateLabel::l: return {0.0, 1.0};
    case StateLabel::plus: return {h, h};
    case StateLabel::minus: return {h, -h};
    case StateLabel::L: return {h, i * h};
    case StateLabel::R: return {h, -i * h};
  }
  throw InvalidInput("unknown state label");
}

inline TimeBinAmplitudes encode_time_bin(std::string_view label) {
  return encode_time_bin(parse_state_label(label));
}

enum class Pol { H = 0, V = 1 };
enum class TimeSlot { early = 0, late = 1 };

/// A weak pulse over {early, late} x {H, V}. Power below one encodes loss.
struct PolTimeBinState {
  std::array<JonesVector, 2> slots{JonesVector::Zero(), JonesVector::Zero()};
  double bin_separation_ns = kDefaultBinSeparationNs;

  static PolTimeBinState from_time_bin(const TimeBinAmplitudes& qubit, Pol pol,
                                       double bin_separation_ns = kDefaultBinSeparationNs) {
    PolTimeBinState s;
    s.bin_separation_ns = bin_separation_ns;
    const int p = static_cast<int>(pol);
    s.slots[0](p) = qubit.early;
    s.slots[1](p) = qubit.late;
    return s;
  }

  Complex& amp(TimeSlot slot, Pol pol) {
    return slots[static_cast<int>(slot)](static_cast<int>(pol));
  }
  Complex amp(TimeSlot slot, Pol pol) const {
    return slots[static_cast<int>(slot)](static_cast<int>(pol));
  }

  double power() const { return slots[0].squaredNorm() + slots[1].squaredNorm(); }

  double power(Pol pol) const {
    const int p = static_cast<int>(pol);
    return std::norm(slots[0](p)) + std::norm(slots[1](p));
  }

  /// Time-bin amplitudes carried in one polarization mode (not renormalized).
  TimeBinAmplitudes time_bin(Pol pol) const {
    const int p = static_cast<int>(pol);
    return {slots[0](p), slots[1](p)};
  }

  /// Keeps only one polarization mode.
  PolTimeBinState project(Pol pol) const {
    PolTimeBinState out;
    out.bin_separation_ns = bin_separation_ns;
    const int p = static_cast<int>(pol);
    out.slots[0](p) = slots[0](p);
    out.slots[1](p) = slots[1](p);
    return out;
  }
};

/// A polarization element. leak_fraction is the misrouted power fraction set by
/// the element's extinction ratio.
struct OpticalElement {
  JonesMatrix jones = JonesMatrix::Identity();
  double leak_fraction = 0.0;
  std::string label = "identity";
};

/// 10^(-dB/10); infinite extinction means no leakage.
inline double leak_fraction_from_db(double extinction_db) {
  if (std::isnan(extinction_db) || extinction_db <= 0.0) {
    throw InvalidInput("extinction ratio must be positive, got " + std::to_string(extinction_db));
  }
  if (std::isinf(extinction_db)) return 0.0;
  return std::pow(10.0, -extinction_db / 10.0);
}

inline bool is_unitary(const JonesMatrix& m, double tol = 1e-12) {
  return (m.adjoint() * m - JonesMatrix::Identity()).cwiseAbs().maxCoeff() <= tol;
}

/// Largest singular value; <= 1 for any passive element.
inline double max_gain(const JonesMatrix& m) {
  Eigen::JacobiSVD<JonesMatrix> svd(m);
  return svd.singularValues()(0);
}

inline OpticalElement identity_element() { return {}; }

/// Polarization-independent power transmission (mirror reflection, lumped loss).
inline OpticalElement scalar_loss(double efficiency, std::string label) {
  if (!(efficiency > 0.0 && efficiency <= 1.0)) {
    throw InvalidInput(label + " efficiency must lie in (0, 1], got " + std::to_string(efficiency));
  }
  return {std::sqrt(efficiency) * JonesMatrix::Identity(), 0.0, std::move(label)};
}

inline OpticalElement mirror(double reflectivity) { return scalar_loss(reflectivity, "mirror"); }

namespace detail {

// Reflection of the polarization about the axis at theta: [[c, s], [s, -c]] with
// c = cos 2theta, s = sin 2theta. Hermitian, unitary, squares to identity.
inline JonesMatrix axis_flip(double theta_rad) {
  const double c = std::cos(2.0 * theta_rad);
  const double s = std::sin(2.0 * theta_rad);
  JonesMatrix m;
  m << c, s, s, -c;
  return m;
}

// Imperfect half-wave action: sqrt(1-leak) * flip + i sqrt(leak) * I. Unitary for
// every leak in [0, 1]; the unswitched amplitude stays coherent with the input.
inline JonesMatrix leaky_half_wave(const JonesMatrix& flip, double leak) {
  const Complex i{0.0, 1.0};
  return std::sqrt(1.0 - leak) * flip + i * std::sqrt(leak) * JonesMatrix::Identity();
}

}  // namespace detail

/// Half-wave plate with fast axis at theta_deg. Ideal form [[cos 2t, sin 2t], [sin 2t, -cos 2t]]
/// (determinant -1): at 45 deg it exchanges H and V exactly. A finite extinction_db leaves a
/// coherent unrotated component of power 10^(-dB/10).
inline OpticalElement jones_hwp(double theta_deg, double extinction_db = kInfiniteExtinction) {
  if (!std::isfinite(theta_deg)) throw InvalidInput("HWP angle must be finite");
  const double leak = leak_fraction_from_db(extinction_db);
  const double theta = theta_deg * std::numbers::pi / 180.0;
  return {detail::leaky_half_wave(detail::axis_flip(theta), leak), leak, "hwp"};
}

/// Pockels cell. With high voltage it acts as a 90-degree rotator (H <-> V) leaving a
/// coherent unrotated residue of power 10^(-dB/10); without voltage it only attenuates.
inline OpticalElement jones_pockels(bool high_voltage, double transmission, double extinction_db) {
  if (!(transmission > 0.0 && transmission <= 1.0)) {
    throw InvalidInput("Pockels cell transmission must lie in (0, 1], got " +
                       std::to_string(transmission));
  }
  const double leak = leak_fraction_from_db(extinction_db);
  const double scale = std::sqrt(transmission);
  if (!high_voltage) {
    return {scale * JonesMatrix::Identity(), leak, "pc_low"};
  }
  JonesMatrix swap;
  swap << 0.0, 1.0, 1.0, 0.0;
  return {scale * detail::leaky_half_wave(swap, leak), leak, "pc_high"};
}

/// Applies the element's Jones matrix to each time slot independently.
inline PolTimeBinState apply_element(const PolTimeBinState& state, const OpticalElement& element) {
  PolTimeBinState out = state;
  for (auto& slot : out.slots) slot = element.jones * slot;
  return out;
}

struct PbsOutput {
  PolTimeBinState transmitted;
  PolTimeBinState reflected;
};

/// Polarizing beam splitter: H transmits, V reflects. A fraction 10^(-dB/10) of each
/// polarization's power goes to the wrong port with its amplitude and phase kept.
/// Lossless, so the two port powers always sum to the input power.
inline PbsOutput pbs_route(const PolTimeBinState& state, double extinction_db) {
  const double leak = leak_fraction_from_db(extinction_db);
  const double keep = std::sqrt(1.0 - leak);
  const double cross = std::sqrt(leak);
  PbsOutput out{state, state};
  for (int t = 0; t < 2; ++t) {
    const Complex h = state.slots[t](0);
    const Complex v = state.slots[t](1);
    out.transmitted.slots[t] << keep * h, cross * v;
    out.reflected.slots[t] << cross * h, keep * v;
  }
  return out;
}

}  // namespace loopmem
