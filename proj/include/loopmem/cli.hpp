#pragma once

// Subcommand implementations behind the `loopmem` executable. Argument parsing lives in
// tools/loopmem.cpp; everything here takes already-parsed options and writes files through
// atomic_write, so commands are testable in-process.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "loopmem/analysis.hpp"
#include "loopmem/config.hpp"
#include "loopmem/errors.hpp"
#include "loopmem/memory_loop.hpp"
#include "loopmem/optics.hpp"
#include "loopmem/records.hpp"
#include "loopmem/source_detector.hpp"
#include "loopmem/tomography.hpp"

namespace loopmem::cli {

enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,
  kUsage = 2,
  kInvalid = 3,
  kCalibrationFailed = 4,
};

/// Bad invocation: missing or unreadable config, unknown label, malformed flag value.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool noiseless = false;
  bool exact = false;
};

inline RunConfig load_run_config(const CommonOptions& opts) {
  RunConfig config;
  if (opts.config_path) {
    if (!std::filesystem::is_regular_file(*opts.config_path)) {
      throw UsageError("config file not found: " + *opts.config_path);
    }
    config = parse_config(read_file(*opts.config_path));
  }
  if (opts.seed) config.seed = *opts.seed;
  if (opts.noiseless) config.sim.cavity = noiseless(config.sim.cavity);
  return config;
}

/// "30", "0,3,10", "3..40", "3:40:1" and comma-separated mixtures of those.
inline std::vector<int> parse_rounds(const std::string& text) {
  std::vector<int> rounds;
  auto number = [&](std::string_view s) {
    try {
      const auto v = parse_int(s, 0);
      if (v < 0 || v > 100000) throw UsageError("round out of range: " + std::string(trim(s)));
      return static_cast<int>(v);
    } catch (const ParseError&) {
      throw UsageError("bad --rounds value '" + text + "'");
    }
  };
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    if (item.empty()) throw UsageError("bad --rounds value '" + text + "'");
    int first = 0;
    int last = 0;
    int step = 1;
    if (auto dots = item.find(".."); dots != std::string_view::npos) {
      first = number(item.substr(0, dots));
      last = number(item.substr(dots + 2));
    } else if (auto colon = item.find(':'); colon != std::string_view::npos) {
      first = number(item.substr(0, colon));
      const std::string_view tail = item.substr(colon + 1);
      const auto colon2 = tail.find(':');
      last = number(tail.substr(0, colon2));
      if (colon2 != std::string_view::npos) step = number(tail.substr(colon2 + 1));
    } else {
      first = last = number(item);
    }
    if (last < first || step < 1) throw UsageError("bad --rounds range '" + std::string(item) + "'");
    for (int n = first; n <= last; n += step) rounds.push_back(n);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return rounds;
}

/// "1+0i", "0-0.70710678i": %.8g parts, negative zero printed as 0.
inline std::string format_complex(Complex z) {
  const double re = z.real() + 0.0;
  const double im = z.imag() + 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8g%c%.8gi", re, im < 0.0 ? '-' : '+', std::abs(im));
  return buf;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------- encode

inline int cmd_encode(const std::string& label, std::ostream& out) {
  StateLabel s;
  try {
    s = parse_state_label(label);
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  const TimeBinAmplitudes a = encode_time_bin(s);
  out << format_complex(a.early) << ", " << format_complex(a.late) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- memory

struct MemoryOptions {
  CommonOptions common;
  std::string rounds = "3..40";
  std::string state = "e";
};

inline int cmd_memory(const MemoryOptions& opts, std::ostream& out) {
  const RunConfig config = load_run_config(opts.common);
  const std::vector<int> rounds = parse_rounds(opts.rounds);
  StateLabel label;
  try {
    label = parse_state_label(opts.state);
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  const SimulationConfig& sim = config.sim;

  CountsTable table;
  table.meta["state"] = std::string(to_string(label));
  table.meta["seed"] = std::to_string(config.seed);
  table.meta["trigger_windows"] = std::to_string(sim.source.trigger_windows());
  table.meta["dark_probability"] = format_double(dark_click_probability(sim.detector, sim.source));
  table.meta["mode"] = opts.common.exact ? "exact" : "sampled";

  Record trace_record;
  trace_record.kind = "memory_trace";
  trace_record.add("run")
      .set("state", std::string(to_string(label)))
      .set("seed", config.seed)
      .set("mode", opts.common.exact ? "exact" : "sampled")
      .set("per_round_survival", per_round_survival(sim.cavity))
      .set("round_trip_ns", sim.cavity.round_trip_ns);

  out << "round  survival      signal      leak      dark    snr_db\n";
  for (int n : rounds) {
    const auto round_id = static_cast<std::uint64_t>(n);
    const MemoryTrace trace =
        run_memory(encode_time_bin(label), n, sim.cavity, make_stream(config.seed, {round_id, 1})());
    const CountHistogram h =
        simulate_counts(trace, sim.source, sim.detector, make_stream(config.seed, {round_id, 2})());
    for (const std::string& s : {slot::kSignal, slot::kLeak, slot::kDark, slot::kWindow}) {
      const SlotCount& c = h.at(s);
      const double counts = opts.common.exact ? c.expected : static_cast<double>(c.counts);
      table.rows.push_back({n, s, counts, c.expected, std::sqrt(counts)});
    }

    const auto expected = expected_release_counts(trace, sim.source, sim.detector);
    auto& section = trace_record.add("round");
    section.set("n_rounds", n)
        .set("storage_time_ns", trace.schedule.high_width_ns)
        .set("release_time_ns", trace.release_time_ns)
        .set("survival", trace.survival_probability)
        .set("total_leak_power", trace.total_leak_power())
        .set("absorbed_power", trace.absorbed_power)
        .set("accumulated_phase_rad", trace.accumulated_phase_rad)
        .set("leak_in_window_power", trace.leak_power_near(trace.release_time_ns,
                                                           sim.detector.window_ns));
    std::string snr_text = "undefined";
    try {
      const double snr = snr_db(expected.signal, expected.background());
      section.set("expected_snr_db", snr);
      snr_text = format_fixed(snr, 2);
    } catch (const UndefinedSnr&) {
      section.set("expected_snr_db", "undefined");
    }
    const double background = static_cast<double>(h.counts(slot::kLeak) + h.counts(slot::kDark));
    if (!opts.common.exact && background > 0.0) {
      section.set("observed_snr_db",
                  snr_db(static_cast<double>(h.counts(slot::kSignal)), background));
    } else {
      section.set("observed_snr_db", opts.common.exact ? "n/a" : "undefined");
    }

    char line[160];
    std::snprintf(line, sizeof line, "%5d  %8.6f  %10.0f  %8.0f  %8.0f  %8s\n", n,
                  trace.survival_probability, table.rows[table.rows.size() - 4].counts,
                  table.rows[table.rows.size() - 3].counts, table.rows[table.rows.size() - 2].counts,
                  snr_text.c_str());
    out << line;
  }

  const std::filesystem::path dir = opts.common.out_dir;
  atomic_write(dir / "counts.csv", write_counts_csv(table));
  atomic_write(dir / "memory_trace.txt", write_record(trace_record));
  out << "wrote " << (dir / "counts.csv").string() << " and " << (dir / "memory_trace.txt").string()
      << '\n';
  return kOk;
}

// ---------------------------------------------------------------- tomography

struct TomographyCommandOptions {
  CommonOptions common;
  std::string rounds = "0,3,10,20,30,40";
  std::int64_t shots = 100000;
  std::optional<std::string> state;  // all six when unset
  int bootstrap_replicas = 1000;
};

inline void add_tomography_section(Record& record, const TomographyResult& r) {
  auto& s = record.add("tomography");
  s.set("label", std::string(to_string(r.label)))
      .set("n_rounds", r.n_rounds)
      .set("shots_per_basis", r.shots_per_basis)
      .set("survival", r.survival)
      .set("r_x", r.bloch.x)
      .set("r_y", r.bloch.y)
      .set("r_z", r.bloch.z);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const Complex z = r.rho(i, j);
      s.set("rho_" + std::to_string(i) + std::to_string(j),
            "(" + format_double(z.real() + 0.0) + ", " + format_double(z.imag() + 0.0) + ")");
    }
  }
  s.set("fidelity", r.fidelity).set("fidelity_err", r.fidelity_err);
  for (const auto& [basis, h] : r.counts) {
    for (const std::string& slot_name : {slot::kFirst, slot::kMiddle, slot::kLast}) {
      s.set("counts_" + to_string(basis) + "_" + slot_name, h.counts(slot_name));
    }
  }
}

struct FidelitySummary {
  int n_rounds = 0;
  double min_fidelity = 0.0;
  double min_fidelity_err = 0.0;
  std::string min_label;
  double mean_fidelity = 0.0;
  double mean_fidelity_err = 0.0;
};

inline std::vector<FidelitySummary> summarize(const std::vector<TomographyResult>& results) {
  std::map<int, std::vector<const TomographyResult*>> by_round;
  for (const auto& r : results) by_round[r.n_rounds].push_back(&r);
  std::vector<FidelitySummary> out;
  for (const auto& [n, rs] : by_round) {
    FidelitySummary s;
    s.n_rounds = n;
    s.min_fidelity = std::numeric_limits<double>::infinity();
    double var = 0.0;
    for (const auto* r : rs) {
      s.mean_fidelity += r->fidelity;
      var += r->fidelity_err * r->fidelity_err;
      if (r->fidelity < s.min_fidelity) {
        s.min_fidelity = r->fidelity;
        s.min_fidelity_err = r->fidelity_err;
        s.min_label = std::string(to_string(r->label));
      }
    }
    s.mean_fidelity /= static_cast<double>(rs.size());
    s.mean_fidelity_err = std::sqrt(var) / static_cast<double>(rs.size());
    out.push_back(s);
  }
  return out;
}

inline std::vector<TomographyResult> run_tomography_sweep(const TomographyCommandOptions& opts,
                                                          const RunConfig& config) {
  std::vector<StateLabel> states(kAllStates.begin(), kAllStates.end());
  if (opts.state) {
    try {
      states = {parse_state_label(*opts.state)};
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
  }
  if (opts.shots < 1) throw UsageError("--shots must be >= 1");
  TomographyOptions options;
  options.shots_per_basis = opts.shots;
  options.exact = opts.common.exact;
  options.bootstrap_replicas = opts.bootstrap_replicas;
  std::vector<TomographyResult> results;
  for (int n : parse_rounds(opts.rounds)) {
    for (StateLabel s : states) {
      results.push_back(tomography_run(s, n, config.sim, config.seed, options));
    }
  }
  return results;
}

inline int cmd_tomography(const TomographyCommandOptions& opts, std::ostream& out) {
  const RunConfig config = load_run_config(opts.common);
  const std::vector<TomographyResult> results = run_tomography_sweep(opts, config);

  Record record;
  record.kind = "tomography";
  record.add("run")
      .set("seed", config.seed)
      .set("mode", opts.common.exact ? "exact" : "sampled")
      .set("shots_per_basis", opts.shots)
      .set("bootstrap_replicas", opts.bootstrap_replicas);
  for (const auto& r : results) add_tomography_section(record, r);

  out << "round  state   fidelity     error\n";
  for (const auto& r : results) {
    char line[128];
    std::snprintf(line, sizeof line, "%5d  %-5s  %9.6f  %8.6f\n", r.n_rounds,
                  std::string(to_string(r.label)).c_str(), r.fidelity, r.fidelity_err);
    out << line;
  }
  for (const auto& s : summarize(results)) {
    record.add("summary")
        .set("n_rounds", s.n_rounds)
        .set("min_fidelity", s.min_fidelity)
        .set("min_fidelity_err", s.min_fidelity_err)
        .set("min_label", s.min_label)
        .set("mean_fidelity", s.mean_fidelity)
        .set("mean_fidelity_err", s.mean_fidelity_err);
    char line[160];
    std::snprintf(line, sizeof line, "round %d: min %.6f +- %.6f (%s), mean %.6f +- %.6f\n",
                  s.n_rounds, s.min_fidelity, s.min_fidelity_err, s.min_label.c_str(),
                  s.mean_fidelity, s.mean_fidelity_err);
    out << line;
  }
  const auto path = std::filesystem::path(opts.common.out_dir) / "tomography.txt";
  atomic_write(path, write_record(record));
  out << "wrote " << path.string() << '\n';
  return kOk;
}

/// Reads back the per-state sections of a tomography record.
inline std::vector<TomographyResult> read_tomography_results(const Record& record) {
  std::vector<TomographyResult> results;
  for (const auto* s : record.all("tomography")) {
    TomographyResult r;
    try {
      r.label = parse_state_label(s->get("label"));
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), s->line);
    }
    r.n_rounds = static_cast<int>(s->integer("n_rounds"));
    r.fidelity = s->number("fidelity");
    r.fidelity_err = s->number("fidelity_err");
    r.bloch = {s->number("r_x"), s->number("r_y"), s->number("r_z")};
    results.push_back(r);
  }
  return results;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::string input;
  std::string slot = slot::kWindow;
  bool threshold_correction = true;
  std::string out_dir = ".";
};

inline DecayFit fit_counts_table(const CountsTable& table, const std::string& slot_name,
                                 bool threshold_correction) {
  std::vector<double> rounds, counts;
  for (const auto* r : table.slot_rows(slot_name)) {
    rounds.push_back(r->round);
    counts.push_back(r->counts);
  }
  if (rounds.empty()) throw InvalidInput("no rows for slot '" + slot_name + "'");
  if (!threshold_correction) return fit_exponential(rounds, counts);
  const CorrectedSeries series = threshold_corrected(counts, table.meta_number("trigger_windows"));
  return fit_exponential(rounds, series.values, series.weights);
}

inline int cmd_fit(const FitOptions& opts, std::ostream& out) {
  if (!std::filesystem::is_regular_file(opts.input)) {
    throw UsageError("input file not found: " + opts.input);
  }
  const CountsTable table = parse_counts_csv(read_file(opts.input));
  const DecayFit fit = fit_counts_table(table, opts.slot, opts.threshold_correction);

  Record record;
  record.kind = "fit";
  record.add("fit")
      .set("slot", opts.slot)
      .set("threshold_correction", opts.threshold_correction ? "true" : "false")
      .set("n_points", fit.n_points)
      .set("alpha", fit.alpha)
      .set("alpha_err", fit.alpha_err)
      .set("beta", fit.beta)
      .set("beta_err", fit.beta_err)
      .set("cov_alpha_alpha", fit.covariance(0, 0))
      .set("cov_alpha_beta", fit.covariance(0, 1))
      .set("cov_beta_beta", fit.covariance(1, 1))
      .set("residual_norm", fit.residual_norm)
      .set("per_round_efficiency", fit.per_round_efficiency);
  const auto path = std::filesystem::path(opts.out_dir) / "fit.txt";
  atomic_write(path, write_record(record));

  char line[200];
  std::snprintf(line, sizeof line,
                "alpha = %.5f +- %.5f, beta = %.6g +- %.3g, per-round efficiency = %.5f\n",
                fit.alpha, fit.alpha_err, fit.beta, fit.beta_err, fit.per_round_efficiency);
  out << line << "wrote " << path.string() << '\n';
  return kOk;
}

inline DecayFit read_fit(const Record& record) {
  const auto& s = record.first("fit");
  DecayFit fit;
  fit.alpha = s.number("alpha");
  fit.alpha_err = s.number("alpha_err");
  fit.beta = s.number("beta");
  fit.beta_err = s.number("beta_err");
  fit.n_points = static_cast<int>(s.integer("n_points"));
  fit.per_round_efficiency = per_round_efficiency(fit.alpha);
  return fit;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions {
  CommonOptions common;
  std::string targets;  // "per_round=0.95,snr3=24.5,snr30=21.9,fidelity40=0.9915"
};

/// Keys: per_round, snr<N>, fidelity<N>. The lower/higher snr rounds are the early/late pair.
inline CalibrationTargets parse_targets(const std::string& text) {
  CalibrationTargets t;
  if (trim(text).empty()) return t;
  std::vector<std::pair<int, double>> snrs;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw UsageError("bad target '" + std::string(item) + "'");
    const std::string key(trim(item.substr(0, eq)));
    double value = 0.0;
    try {
      value = parse_double(item.substr(eq + 1), 0);
    } catch (const ParseError&) {
      throw UsageError("bad target value in '" + std::string(item) + "'");
    }
    auto round_suffix = [&](std::size_t prefix) {
      try {
        return static_cast<int>(parse_int(std::string_view(key).substr(prefix), 0));
      } catch (const ParseError&) {
        throw UsageError("target '" + key + "' needs a round number suffix");
      }
    };
    if (key == "per_round") {
      t.per_round = value;
    } else if (key.rfind("snr", 0) == 0) {
      snrs.emplace_back(round_suffix(3), value);
    } else if (key.rfind("fidelity", 0) == 0) {
      t.fidelity_round = round_suffix(8);
      t.min_fidelity = value;
    } else {
      throw UsageError("unknown target '" + key + "'");
    }
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (!snrs.empty()) {
    if (snrs.size() != 2) throw UsageError("give both SNR targets (e.g. snr3=24.5,snr30=21.9)");
    std::sort(snrs.begin(), snrs.end());
    t.snr_early_round = snrs[0].first;
    t.snr_early_db = snrs[0].second;
    t.snr_late_round = snrs[1].first;
    t.snr_late_db = snrs[1].second;
  }
  return t;
}

inline int cmd_calibrate(const CalibrateOptions& opts, std::ostream& out) {
  RunConfig config = load_run_config(opts.common);
  const CalibrationTargets targets = parse_targets(opts.targets);
  config.sim = calibrate(targets, config.sim);

  const auto residuals = detail::calibration_residuals(config.sim, targets);
  out << "calibrated:\n"
      << "  cavity.residual_loss      = " << format_double(config.sim.cavity.residual_loss) << '\n'
      << "  cavity.extinction_*_db    = " << format_double(config.sim.cavity.extinction_pbs_db) << '\n'
      << "  source.mean_photon_number = " << format_double(config.sim.source.mean_photon_number)
      << '\n'
      << "  cavity.phase_jitter_sigma = " << format_double(config.sim.cavity.phase_jitter_sigma)
      << '\n'
      << "residuals (achieved - target):\n";
  for (const auto& [name, value] : residuals) out << "  " << name << " = " << format_double(value) << '\n';

  const auto path = std::filesystem::path(opts.common.out_dir) / "calibrated.cfg";
  atomic_write(path, serialize_config(config));
  out << "wrote " << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- report

struct ReportOptions {
  CommonOptions common;
  std::string fit_path;
  std::optional<std::string> tomo_path;
  int n_rounds = 40;
};

inline int cmd_report(const ReportOptions& opts, std::ostream& out) {
  const RunConfig config = load_run_config(opts.common);
  if (!std::filesystem::is_regular_file(opts.fit_path)) {
    throw UsageError("fit file not found: " + opts.fit_path);
  }
  const DecayFit fit = read_fit(parse_record(read_file(opts.fit_path)));
  std::optional<double> min_fid;
  if (opts.tomo_path) {
    if (!std::filesystem::is_regular_file(*opts.tomo_path)) {
      throw UsageError("tomography file not found: " + *opts.tomo_path);
    }
    min_fid = min_fidelity_at(read_tomography_results(parse_record(read_file(*opts.tomo_path))),
                              opts.n_rounds);
  }
  const ReportRow row =
      report_table(fit, min_fid.value_or(0.0), opts.n_rounds, config.sim.cavity.round_trip_ns);

  Record record;
  record.kind = "report";
  auto& s = record.add("report");
  s.set("n_rounds", row.n_rounds)
      .set("storage_time_ns", row.storage_time_ns)
      .set("per_round_efficiency", fit.per_round_efficiency)
      .set("total_efficiency", row.total_efficiency);
  if (min_fid) {
    s.set("min_fidelity", row.min_fidelity);
  } else {
    s.set("min_fidelity", "n/a");
  }
  s.set("bandwidth", row.bandwidth_note);
  for (const auto& c : comparison_rows()) {
    record.add("comparison")
        .set("id", c.id)
        .set("storage_time", c.storage_time)
        .set("efficiency", c.efficiency)
        .set("fidelity", c.fidelity)
        .set("bandwidth", c.bandwidth);
  }
  const auto path = std::filesystem::path(opts.common.out_dir) / "report.txt";
  atomic_write(path, write_record(record));

  char line[64];
  out << "                   storage time  efficiency  fidelity  bandwidth\n";
  std::snprintf(line, sizeof line, "%9.0f ns", row.storage_time_ns);
  out << "simulated          " << line << "   " << format_fixed(100.0 * row.total_efficiency, 1)
      << "%       " << (min_fid ? format_fixed(100.0 * row.min_fidelity, 1) + "%" : std::string("-"))
      << "     " << row.bandwidth_note << '\n';
  for (const auto& c : comparison_rows()) {
    std::snprintf(line, sizeof line, "%-17s  %12s  %10s  %8s  %s\n", c.id.c_str(),
                  c.storage_time.c_str(), c.efficiency.c_str(), c.fidelity.c_str(),
                  c.bandwidth.c_str());
    out << line;
  }
  out << "wrote " << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- errors

/// Maps a command's exception to its exit code, printing the message to err.
template <typename F>
int run_guarded(F&& command, std::ostream& err) {
  try {
    return command();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const CalibrationFailure& e) {
    err << "calibration failed: " << e.what() << '\n';
    for (const auto& [name, value] : e.residuals()) {
      err << "  residual " << name << " = " << format_double(value) << '\n';
    }
    return kCalibrationFailed;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kInvalid;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const InsufficientStatistics& e) {
    err << "insufficient statistics: " << e.what() << '\n';
    return kInvalid;
  } catch (const UndefinedSnr& e) {
    err << "undefined SNR: " << e.what() << '\n';
    return kInvalid;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace loopmem::cli
