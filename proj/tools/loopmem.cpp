// loopmem: command-line front end for the loop-memory simulator.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "loopmem/cli.hpp"

namespace {

using namespace loopmem::cli;

void add_common(CLI::App* cmd, CommonOptions& c, bool with_exact = true) {
  cmd->add_option("--config", c.config_path, "config file (key = value)");
  cmd->add_option("--seed", c.seed, "random seed (overrides run.seed)");
  cmd->add_option("--out", c.out_dir, "output directory")->capture_default_str();
  cmd->add_flag("--noiseless", c.noiseless, "zero phase jitter and ideal extinction");
  if (with_exact) cmd->add_flag("--exact", c.exact, "use expectation values instead of sampling");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop quantum memory simulator for time-bin qubits"};
  app.require_subcommand(1);

  std::string encode_label;
  auto* encode = app.add_subcommand("encode", "print the amplitudes of an encoder state");
  encode->add_option("state", encode_label, "e, l, plus, minus, L or R")->required();

  MemoryOptions memory_opts;
  auto* memory = app.add_subcommand("memory", "store a state and record release-window counts");
  add_common(memory, memory_opts.common);
  memory->add_option("--rounds", memory_opts.rounds, "N, list a,b,c or range a..b / a:b[:step]")
      ->capture_default_str();
  memory->add_option("--state", memory_opts.state, "input state")->capture_default_str();

  TomographyCommandOptions tomo_opts;
  auto* tomo = app.add_subcommand("tomography", "six-state tomography of released qubits");
  add_common(tomo, tomo_opts.common);
  tomo->add_option("--rounds", tomo_opts.rounds, "storage rounds")->capture_default_str();
  tomo->add_option("--shots", tomo_opts.shots, "trigger windows per basis")->capture_default_str();
  tomo->add_option("--state", tomo_opts.state, "restrict to one state");
  tomo->add_option("--bootstrap", tomo_opts.bootstrap_replicas, "resampling replicas")
      ->capture_default_str();

  FitOptions fit_opts;
  auto* fit = app.add_subcommand("fit", "fit beta exp(-alpha n) to a counts CSV");
  fit->add_option("--input", fit_opts.input, "counts CSV from `memory`")->required();
  fit->add_option("--slot", fit_opts.slot, "slot to fit")->capture_default_str();
  bool raw_counts = false;
  fit->add_flag("--raw", raw_counts, "fit raw counts without the threshold-detector correction");
  fit->add_option("--out", fit_opts.out_dir, "output directory")->capture_default_str();

  CalibrateOptions cal_opts;
  auto* cal = app.add_subcommand("calibrate", "solve for the free noise parameters");
  add_common(cal, cal_opts.common, false);
  cal->add_option("--targets", cal_opts.targets,
                  "e.g. per_round=0.95,snr3=24.5,snr30=21.9,fidelity40=0.9915");

  ReportOptions report_opts;
  auto* report = app.add_subcommand("report", "storage summary and comparison table");
  add_common(report, report_opts.common, false);
  report->add_option("--fit", report_opts.fit_path, "fit record")->required();
  report->add_option("--tomo", report_opts.tomo_path, "tomography record");
  report->add_option("--rounds", report_opts.n_rounds, "storage rounds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto& out = std::cout;
  auto& err = std::cerr;
  if (*encode) return run_guarded([&] { return cmd_encode(encode_label, out); }, err);
  if (*memory) return run_guarded([&] { return cmd_memory(memory_opts, out); }, err);
  if (*tomo) return run_guarded([&] { return cmd_tomography(tomo_opts, out); }, err);
  if (*fit) {
    fit_opts.threshold_correction = !raw_counts;
    return run_guarded([&] { return cmd_fit(fit_opts, out); }, err);
  }
  if (*cal) return run_guarded([&] { return cmd_calibrate(cal_opts, out); }, err);
  if (*report) return run_guarded([&] { return cmd_report(report_opts, out); }, err);
  return kUsage;
}
