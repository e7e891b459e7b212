#pragma once

// Weak-coherent pulses, threshold detection with dark counts, and per-slot count
// histograms as recorded by the TDC.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loopmem/errors.hpp"
#include "loopmem/memory_loop.hpp"
#include "loopmem/random.hpp"

namespace loopmem {

struct SourceConfig {
  double mean_photon_number = 0.1;
  double rep_rate_hz = 100e3;
  double pulse_width_ps = 50.0;  // informational
  double collection_time_s = 1.0;

  std::int64_t trigger_windows() const {
    return static_cast<std::int64_t>(std::llround(rep_rate_hz * collection_time_s));
  }

  void validate() const {
    if (!(mean_photon_number >= 0.0) || !std::isfinite(mean_photon_number)) {
      throw InvalidInput("source.mean_photon_number must be finite and >= 0");
    }
    if (!(rep_rate_hz > 0.0) || !std::isfinite(rep_rate_hz)) {
      throw InvalidInput("source.rep_rate_hz must be > 0");
    }
    if (!(collection_time_s > 0.0) || !std::isfinite(collection_time_s)) {
      throw InvalidInput("source.collection_time_s must be > 0");
    }
    if (!(pulse_width_ps > 0.0)) throw InvalidInput("source.pulse_width_ps must be > 0");
  }
};

/// How dark_rate_hz converts to a per-window click probability.
///   gated:        dark_rate_hz is the count rate seen inside the detection window at the
///                 trigger rate, so p = dark_rate / rep_rate.
///   free_running: dark_rate_hz is a continuous rate, so p = dark_rate x window.
enum class DarkCountModel { gated, free_running };

inline std::string to_string(DarkCountModel m) {
  return m == DarkCountModel::gated ? "gated" : "free_running";
}

inline DarkCountModel parse_dark_count_model(const std::string& s) {
  if (s == "gated") return DarkCountModel::gated;
  if (s == "free_running") return DarkCountModel::free_running;
  throw InvalidInput("detector.dark_count_model must be 'gated' or 'free_running', got '" + s + "'");
}

struct DetectorConfig {
  double dark_rate_hz = 15.0;
  double window_ns = 1.0;
  double detection_efficiency = 1.0;
  DarkCountModel dark_count_model = DarkCountModel::gated;
  // Off-signal windows examined per trigger to estimate the dark level.
  std::int64_t reference_windows = 100;

  void validate() const {
    if (!(dark_rate_hz >= 0.0) || !std::isfinite(dark_rate_hz)) {
      throw InvalidInput("detector.dark_rate_hz must be finite and >= 0");
    }
    if (!(window_ns > 0.0) || !std::isfinite(window_ns)) {
      throw InvalidInput("detector.window_ns must be > 0");
    }
    if (!(detection_efficiency >= 0.0 && detection_efficiency <= 1.0)) {
      throw InvalidInput("detector.detection_efficiency must lie in [0, 1]");
    }
    if (reference_windows < 1) throw InvalidInput("detector.reference_windows must be >= 1");
  }
};

inline double dark_click_probability(const DetectorConfig& det, const SourceConfig& source) {
  const double p = det.dark_count_model == DarkCountModel::gated
                       ? det.dark_rate_hz / source.rep_rate_hz
                       : det.dark_rate_hz * det.window_ns * 1e-9;
  if (p > 1.0) throw InvalidInput("dark count probability per window exceeds 1");
  return p;
}

/// Probability that a Poissonian pulse with mean mu_eff fires a threshold detector.
inline double wcs_click_probability(double mu_eff) {
  if (std::isnan(mu_eff) || mu_eff < 0.0) {
    throw InvalidInput("mean photon number must be >= 0, got " + std::to_string(mu_eff));
  }
  return -std::expm1(-mu_eff);
}

struct SlotCount {
  std::int64_t counts = 0;
  std::int64_t windows = 0;  // detection windows examined for this slot
  double expected = 0.0;
};

struct CountHistogram {
  std::map<std::string, SlotCount> slots;
  std::int64_t n_trigger_windows = 0;
  double dark_probability = 0.0;
  SourceConfig source;
  DetectorConfig detector;

  bool has(const std::string& label) const { return slots.count(label) != 0; }

  const SlotCount& at(const std::string& label) const {
    auto it = slots.find(label);
    if (it == slots.end()) throw InvalidInput("histogram has no slot '" + label + "'");
    return it->second;
  }

  std::int64_t counts(const std::string& label) const { return at(label).counts; }
};

namespace slot {
inline const std::string kSignal = "signal";  // released pulse, release window
inline const std::string kLeak = "leak";      // leak light inside the release window
inline const std::string kDark = "dark";      // dark clicks inside the release window
inline const std::string kWindow = "window";  // everything recorded in the release window
inline const std::string kFirst = "first";
inline const std::string kMiddle = "middle";
inline const std::string kLast = "last";
inline const std::string kDarkReference = "dark_ref";

inline std::string leak_at(int round) { return "leak@" + std::to_string(round); }
}  // namespace slot

/// Expected counts in the release window of one trace over the configured collection.
struct ReleaseWindowExpectation {
  double signal = 0.0;
  double leak = 0.0;
  double dark = 0.0;

  double background() const { return leak + dark; }
};

inline ReleaseWindowExpectation expected_release_counts(const MemoryTrace& trace,
                                                        const SourceConfig& source,
                                                        const DetectorConfig& det) {
  const double n = static_cast<double>(source.trigger_windows());
  const double scale = source.mean_photon_number * det.detection_efficiency;
  const double leak_power = trace.leak_power_near(trace.release_time_ns, det.window_ns);
  return {n * wcs_click_probability(scale * trace.survival_probability),
          n * wcs_click_probability(scale * leak_power), n * dark_click_probability(det, source)};
}

/// Samples the TDC record of one collection run: the release window (signal, coincident
/// leak, dark), plus one window per leak event. Clicks are tagged by origin; the
/// "window" slot is their sum.
inline CountHistogram simulate_counts(const MemoryTrace& trace, const SourceConfig& source,
                                      const DetectorConfig& det, std::uint64_t seed) {
  source.validate();
  det.validate();
  CountHistogram h;
  h.source = source;
  h.detector = det;
  h.n_trigger_windows = source.trigger_windows();
  h.dark_probability = dark_click_probability(det, source);

  const std::int64_t n = h.n_trigger_windows;
  const double scale = source.mean_photon_number * det.detection_efficiency;
  Rng rng = make_stream(seed, {0x636f756eu});

  const double p_signal = wcs_click_probability(scale * trace.survival_probability);
  h.slots[slot::kSignal] = {sample_binomial(rng, n, p_signal), n, n * p_signal};

  SlotCount leak_in_window{0, n, 0.0};
  for (const auto& e : trace.leak_events) {
    const double p = wcs_click_probability(scale * e.power);
    SlotCount c{sample_binomial(rng, n, p), n, n * p};
    if (std::abs(e.time_ns - trace.release_time_ns) <= 0.5 * det.window_ns) {
      leak_in_window.counts += c.counts;
      leak_in_window.expected += c.expected;
    }
    h.slots[slot::leak_at(e.round_index)] = c;
  }
  h.slots[slot::kLeak] = leak_in_window;

  h.slots[slot::kDark] = {sample_binomial(rng, n, h.dark_probability), n, n * h.dark_probability};

  const auto& sig = h.slots[slot::kSignal];
  const auto& dark = h.slots[slot::kDark];
  h.slots[slot::kWindow] = {sig.counts + leak_in_window.counts + dark.counts, n,
                            sig.expected + leak_in_window.expected + dark.expected};
  return h;
}

/// Mean photon number reaching the detector in each decoder output slot.
struct SlotTriple {
  double first = 0.0;
  double middle = 0.0;
  double last = 0.0;

  double sum() const { return first + middle + last; }
};

/// Samples the three decoder slots (monitored port) over `windows` triggers, with dark
/// clicks, plus `det.reference_windows` off-signal windows per trigger for the dark level.
inline CountHistogram simulate_counts(const SlotTriple& mean_photons, std::int64_t windows,
                                      const SourceConfig& source, const DetectorConfig& det,
                                      std::uint64_t seed) {
  source.validate();
  det.validate();
  if (windows < 1) throw InvalidInput("shots must be >= 1");
  CountHistogram h;
  h.source = source;
  h.detector = det;
  h.n_trigger_windows = windows;
  h.dark_probability = dark_click_probability(det, source);
  Rng rng = make_stream(seed, {0x736c6f74u});

  auto sample_slot = [&](const std::string& label, double mu) {
    if (!(mu >= 0.0)) throw InvalidInput("slot mean photon number must be >= 0");
    // Either a photon or a dark count fires the window.
    const double p = 1.0 - std::exp(-mu) * (1.0 - h.dark_probability);
    h.slots[label] = {sample_binomial(rng, windows, p), windows, windows * p};
  };
  sample_slot(slot::kFirst, mean_photons.first);
  sample_slot(slot::kMiddle, mean_photons.middle);
  sample_slot(slot::kLast, mean_photons.last);
  const std::int64_t ref = windows * det.reference_windows;
  h.slots[slot::kDarkReference] = {sample_binomial(rng, ref, h.dark_probability), ref,
                                   ref * h.dark_probability};
  return h;
}

/// 10 log10(signal / background).
inline double snr_db(double signal, double background) {
  if (!(background > 0.0)) throw UndefinedSnr("SNR undefined for zero background");
  if (signal < 0.0) throw InvalidInput("signal counts must be >= 0");
  return 10.0 * std::log10(signal / background);
}

}  // namespace loopmem
