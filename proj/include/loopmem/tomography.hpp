#pragma once

// Decoding of released time-bin qubits in an unbalanced (Faraday-Michelson)
// interferometer, Pauli estimation from slot counts, density-matrix
// reconstruction and Uhlmann fidelity.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loopmem/config.hpp"
#include "loopmem/errors.hpp"
#include "loopmem/memory_loop.hpp"
#include "loopmem/optics.hpp"
#include "loopmem/random.hpp"
#include "loopmem/source_detector.hpp"

namespace loopmem {

using Matrix2c = Eigen::Matrix2cd;

struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

namespace pauli {
inline Matrix2c x() { return (Matrix2c() << 0, 1, 1, 0).finished(); }
inline Matrix2c y() {
  const Complex i{0.0, 1.0};
  return (Matrix2c() << 0, -i, i, 0).finished();
}
inline Matrix2c z() { return (Matrix2c() << 1, 0, 0, -1).finished(); }
}  // namespace pauli

/// 2x2 operator on the (early, late) qubit space.
class DensityMatrix {
public:
  DensityMatrix() : m_(0.5 * Matrix2c::Identity()) {}
  explicit DensityMatrix(const Matrix2c& m) : m_(m) {}

  static DensityMatrix pure(const TimeBinAmplitudes& psi) {
    const double n = psi.norm_squared();
    if (!(n > 0.0)) throw InvalidInput("cannot build a density matrix from a zero vector");
    Eigen::Vector2cd v(psi.early, psi.late);
    return DensityMatrix(v * v.adjoint() / n);
  }

  const Matrix2c& matrix() const { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  Complex trace() const { return m_.trace(); }

  bool is_hermitian(double tol = 1e-12) const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= tol;
  }

  /// Ascending eigenvalues of the Hermitian part.
  Eigen::Vector2d eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Matrix2c> es(hermitian_part(), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  bool is_physical(double tol = 1e-9) const {
    return is_hermitian(tol) && std::abs(trace() - 1.0) <= tol && eigenvalues()(0) >= -tol;
  }

  BlochVector bloch() const {
    return {2.0 * m_(0, 1).real(), -2.0 * m_(0, 1).imag(), (m_(0, 0) - m_(1, 1)).real()};
  }

  Matrix2c hermitian_part() const { return 0.5 * (m_ + m_.adjoint()); }

private:
  Matrix2c m_;
};

/// rho = (I + r . sigma) / 2
inline DensityMatrix bloch_to_rho(const BlochVector& r) {
  if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.z)) {
    throw InvalidInput("Bloch vector must be finite");
  }
  return DensityMatrix(0.5 * (Matrix2c::Identity() + r.x * pauli::x() + r.y * pauli::y() +
                              r.z * pauli::z()));
}

inline BlochVector rho_to_bloch(const DensityMatrix& rho) { return rho.bloch(); }

namespace detail {

// Euclidean projection of v onto the probability simplex.
inline Eigen::Vector2d project_to_simplex(const Eigen::Vector2d& v) {
  std::array<double, 2> u{v(0), v(1)};
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (int j = 0; j < 2; ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / (j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

// Matrix square root of a PSD Hermitian matrix. Eigenvalues within roundoff of zero
// are treated as exact zeros so pure states keep rank one.
inline Matrix2c psd_sqrt(const Matrix2c& m) {
  Eigen::SelfAdjointEigenSolver<Matrix2c> es(0.5 * (m + m.adjoint()));
  Eigen::Vector2d lambda = es.eigenvalues();
  const double cutoff = 1e-13 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (int k = 0; k < 2; ++k) lambda(k) = lambda(k) <= cutoff ? 0.0 : std::sqrt(lambda(k));
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

/// Closest (Frobenius) positive-semidefinite, trace-one matrix: eigenvalues are projected
/// onto the probability simplex in the input's eigenbasis. Physical inputs come back as is.
inline DensityMatrix project_physical(const DensityMatrix& rho) {
  if (!rho.is_hermitian(1e-9) || std::abs(rho.trace() - 1.0) > 1e-9) {
    throw InvalidInput("project_physical expects a Hermitian, trace-one matrix");
  }
  Eigen::SelfAdjointEigenSolver<Matrix2c> es(rho.hermitian_part());
  if (es.eigenvalues()(0) >= 0.0) return rho;
  const Eigen::Vector2d mu = detail::project_to_simplex(es.eigenvalues());
  Matrix2c out = es.eigenvectors() * mu.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  out = 0.5 * (out + out.adjoint());
  return DensityMatrix(out);
}

/// Uhlmann fidelity (Tr sqrt(sqrt(rho_in) rho_out sqrt(rho_in)))^2, evaluated as the squared
/// trace norm of sqrt(rho_in) sqrt(rho_out).
inline double fidelity(const DensityMatrix& rho_in, const DensityMatrix& rho_out) {
  if (!rho_in.is_physical() || !rho_out.is_physical()) {
    throw InvalidInput("fidelity needs physical density matrices");
  }
  const Matrix2c a = detail::psd_sqrt(rho_in.hermitian_part()) *
                     detail::psd_sqrt(rho_out.hermitian_part());
  Eigen::JacobiSVD<Matrix2c> svd(a);
  const double f = svd.singularValues().sum();
  return std::clamp(f * f, 0.0, 1.0);
}

enum class Basis { Z, X, Y };

inline constexpr std::array<Basis, 3> kAllBases = {Basis::Z, Basis::X, Basis::Y};

inline std::string to_string(Basis b) {
  switch (b) {
    case Basis::Z: return "Z";
    case Basis::X: return "X";
    case Basis::Y: return "Y";
  }
  return "?";
}

/// Phase-modulator setting of the decoder for each measurement basis. With +pi/2 the
/// state (|e> + i|l>)/sqrt2 gives r_y = +1.
inline double decoder_phase(Basis b) { return b == Basis::Y ? std::numbers::pi / 2.0 : 0.0; }

/// Slot probabilities at the two decoder outputs. The first and last slots carry the
/// early bin through the short arm and the late bin through the long arm; the middle
/// slot is where the two paths overlap and interfere.
struct FmiOutput {
  SlotTriple monitored;
  SlotTriple complementary;

  double total() const { return monitored.sum() + complementary.sum(); }
};

inline FmiOutput fmi_decode(const DensityMatrix& rho, double phase) {
  const double pe = rho(0, 0).real();
  const double pl = rho(1, 1).real();
  const double cross = 2.0 * (std::polar(1.0, phase) * rho(0, 1)).real();
  return {{pe / 4.0, (pe + pl + cross) / 4.0, pl / 4.0},
          {pe / 4.0, (pe + pl - cross) / 4.0, pl / 4.0}};
}

inline FmiOutput fmi_decode(const TimeBinAmplitudes& state, double phase) {
  if (std::abs(state.norm_squared() - 1.0) > 1e-9) {
    throw InvalidInput("fmi_decode expects a normalized state");
  }
  const Complex shifted = state.early * std::polar(1.0, phase);
  return {{std::norm(state.early) / 4.0, std::norm(shifted + state.late) / 4.0,
           std::norm(state.late) / 4.0},
          {std::norm(state.early) / 4.0, std::norm(shifted - state.late) / 4.0,
           std::norm(state.late) / 4.0}};
}

/// Pauli expectation from mean photon numbers in the monitored port's slots. Z compares
/// the first and last slots; X and Y compare the middle slot against the first + last
/// satellites of the same run, which carry a quarter of the throughput:
/// r = 4 P_mid - 1 = middle / (first + last) - 1.
inline double pauli_expectation(Basis basis, const SlotTriple& slots, bool clamp = true) {
  const double reference = slots.first + slots.last;
  if (!(reference > 0.0)) {
    throw InsufficientStatistics("no counts in the first/last slots for the " + to_string(basis) +
                                 " estimate");
  }
  double r = basis == Basis::Z ? (slots.first - slots.last) / reference
                               : slots.middle / reference - 1.0;
  if (clamp) r = std::clamp(r, -1.0, 1.0);
  return r;
}

enum class CountSource { sampled, expected };

/// Inverts the threshold-detector response slot by slot: a click frequency p over W windows
/// with dark probability p_d gives mean photon number -ln(1 - p) + ln(1 - p_d). The dark
/// level comes from the histogram's off-signal reference windows when present.
inline SlotTriple mean_photons_from_counts(const CountHistogram& h,
                                           CountSource source = CountSource::sampled) {
  auto frequency = [&](const SlotCount& c) {
    if (c.windows < 1) throw InsufficientStatistics("slot has no examined windows");
    const double n = source == CountSource::sampled ? static_cast<double>(c.counts) : c.expected;
    // A fully saturated slot carries no intensity information beyond "at least one".
    return std::min(n / static_cast<double>(c.windows), 1.0 - 0.5 / static_cast<double>(c.windows));
  };
  const double dark =
      h.has(slot::kDarkReference) ? frequency(h.at(slot::kDarkReference)) : 0.0;
  auto mu = [&](const std::string& label) {
    return -std::log1p(-frequency(h.at(label))) + std::log1p(-dark);
  };
  return {mu(slot::kFirst), mu(slot::kMiddle), mu(slot::kLast)};
}

inline double pauli_expectation_from_counts(Basis basis, const CountHistogram& h,
                                            bool clamp = true,
                                            CountSource source = CountSource::sampled) {
  return pauli_expectation(basis, mean_photons_from_counts(h, source), clamp);
}

/// Released qubit averaged over the phase jitter. Each trigger window sees its own
/// Gaussian phase walk, so the ensemble keeps the jitter-free state with its coherence
/// reduced by exp(-n sigma^2 / 2).
inline DensityMatrix ensemble_released_state(const MemoryTrace& trace) {
  TimeBinAmplitudes q = trace.released_qubit();
  q.late *= std::polar(1.0, -trace.accumulated_phase_rad);
  Matrix2c m = DensityMatrix::pure(q).matrix();
  const double coherence = std::exp(-0.5 * trace.phase_variance);
  m(0, 1) *= coherence;
  m(1, 0) *= coherence;
  return DensityMatrix(m);
}

enum class Reconstruction {
  projected,  // clamp each estimate to [-1, 1], then project onto physical states
  linear      // bare linear inversion
};

struct TomographyOptions {
  std::int64_t shots_per_basis = 100000;  // trigger windows per basis setting
  bool exact = false;                     // use expected counts instead of sampling
  Reconstruction reconstruction = Reconstruction::projected;
  int bootstrap_replicas = 1000;
};

struct TomographyResult {
  StateLabel label = StateLabel::e;
  int n_rounds = 0;
  std::int64_t shots_per_basis = 0;
  std::map<Basis, CountHistogram> counts;
  BlochVector bloch;
  DensityMatrix rho;
  double fidelity = 0.0;
  double fidelity_err = 0.0;
  double survival = 0.0;
};

namespace detail {

struct Reconstructed {
  BlochVector bloch;
  DensityMatrix rho;
  double fidelity = 0.0;
};

inline Reconstructed reconstruct(const std::map<Basis, CountHistogram>& counts,
                                 const DensityMatrix& target, Reconstruction mode,
                                 CountSource source) {
  const bool clamp = mode == Reconstruction::projected;
  Reconstructed r;
  r.bloch = {pauli_expectation_from_counts(Basis::X, counts.at(Basis::X), clamp, source),
             pauli_expectation_from_counts(Basis::Y, counts.at(Basis::Y), clamp, source),
             pauli_expectation_from_counts(Basis::Z, counts.at(Basis::Z), clamp, source)};
  r.rho = bloch_to_rho(r.bloch);
  if (mode == Reconstruction::projected) {
    r.rho = project_physical(r.rho);
    r.bloch = r.rho.bloch();
  }
  r.fidelity = fidelity(target, r.rho);
  return r;
}

inline CountHistogram poisson_resample(const CountHistogram& h, Rng& rng) {
  CountHistogram out = h;
  for (auto& [label, c] : out.slots) c.counts = sample_poisson(rng, static_cast<double>(c.counts));
  return out;
}

}  // namespace detail

/// Full pipeline for one input state: encode, store for n_rounds, decode in the Z, X and Y
/// settings, count (or take expectations), estimate, reconstruct and compare with the ideal
/// input. The fidelity error is the spread over Poisson-bootstrap replicas of the counts.
inline TomographyResult tomography_run(StateLabel label, int n_rounds,
                                       const SimulationConfig& config, std::uint64_t seed,
                                       const TomographyOptions& options = {}) {
  config.validate();
  if (options.shots_per_basis < 1) throw InvalidInput("shots_per_basis must be >= 1");
  const auto label_id = static_cast<std::uint64_t>(label);
  const auto round_id = static_cast<std::uint64_t>(n_rounds);

  const TimeBinAmplitudes input = encode_time_bin(label);
  const MemoryTrace trace =
      run_memory(input, n_rounds, config.cavity, make_stream(seed, {label_id, round_id, 1})());
  const DensityMatrix released = ensemble_released_state(trace);

  // Leak light sharing the release window is a copy of the stored pulse and decodes the same way.
  const double power =
      trace.survival_probability + trace.leak_power_near(trace.release_time_ns,
                                                         config.detector.window_ns);
  const double scale =
      config.source.mean_photon_number * config.detector.detection_efficiency * power;

  TomographyResult result;
  result.label = label;
  result.n_rounds = n_rounds;
  result.shots_per_basis = options.shots_per_basis;
  result.survival = trace.survival_probability;
  for (Basis b : kAllBases) {
    const FmiOutput decoded = fmi_decode(released, decoder_phase(b));
    const SlotTriple mean_photons{scale * decoded.monitored.first, scale * decoded.monitored.middle,
                                  scale * decoded.monitored.last};
    result.counts[b] = simulate_counts(
        mean_photons, options.shots_per_basis, config.source, config.detector,
        make_stream(seed, {label_id, round_id, 2, static_cast<std::uint64_t>(b)})());
  }

  const DensityMatrix target = DensityMatrix::pure(input);
  const CountSource source = options.exact ? CountSource::expected : CountSource::sampled;
  const auto estimate = detail::reconstruct(result.counts, target, options.reconstruction, source);
  result.bloch = estimate.bloch;
  result.rho = estimate.rho;
  result.fidelity = estimate.fidelity;

  if (!options.exact && options.bootstrap_replicas > 1) {
    Rng rng = make_stream(seed, {label_id, round_id, 3});
    std::vector<double> replicas;
    replicas.reserve(options.bootstrap_replicas);
    for (int k = 0; k < options.bootstrap_replicas; ++k) {
      std::map<Basis, CountHistogram> resampled;
      for (const auto& [b, h] : result.counts) resampled[b] = detail::poisson_resample(h, rng);
      try {
        replicas.push_back(
            detail::reconstruct(resampled, target, options.reconstruction, source).fidelity);
      } catch (const InsufficientStatistics&) {
      } catch (const InvalidInput&) {
        // linear inversion can leave the physical set on a replica
      }
    }
    if (replicas.size() > 1) {
      const double mean = std::accumulate(replicas.begin(), replicas.end(), 0.0) / replicas.size();
      double ss = 0.0;
      for (double f : replicas) ss += (f - mean) * (f - mean);
      result.fidelity_err = std::sqrt(ss / (replicas.size() - 1));
    }
  }
  return result;
}

}  // namespace loopmem
