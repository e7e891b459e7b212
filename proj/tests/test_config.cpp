#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "loopmem/analysis.hpp"
#include "loopmem/config.hpp"
#include "loopmem/records.hpp"

using namespace loopmem;

TEST(Config, DefaultsAreBenchValues) {
  const RunConfig c = parse_config(std::string("# nothing set\n"));
  EXPECT_DOUBLE_EQ(c.sim.cavity.mirror_reflectivity, 0.995);
  EXPECT_DOUBLE_EQ(c.sim.cavity.pc_transmission, 0.983);
  EXPECT_DOUBLE_EQ(c.sim.cavity.round_trip_ns, 13.0);
  EXPECT_DOUBLE_EQ(c.sim.detector.dark_rate_hz, 15.0);
  EXPECT_DOUBLE_EQ(c.sim.detector.window_ns, 1.0);
  EXPECT_DOUBLE_EQ(c.sim.source.rep_rate_hz, 100e3);
  EXPECT_EQ(c.seed, 1u);
}

TEST(Config, ParsesKeysCommentsAndInfinity) {
  const RunConfig c = parse_config(std::string(
      "  # header\n"
      "cavity.mirror_reflectivity = 0.99   # trailing\n"
      "\n"
      "cavity.extinction_pbs_db=inf\n"
      "detector.dark_count_model = free_running\n"
      "run.seed = 42\n"
      "run.output_dir = out/x\n"));
  EXPECT_DOUBLE_EQ(c.sim.cavity.mirror_reflectivity, 0.99);
  EXPECT_TRUE(std::isinf(c.sim.cavity.extinction_pbs_db));
  EXPECT_EQ(c.sim.detector.dark_count_model, DarkCountModel::free_running);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.output_dir, "out/x");
}

TEST(Config, RoundTripsExactly) {
  RunConfig c;
  c.sim = calibrate(CalibrationTargets{});
  c.sim.cavity.extinction_hwp_db = kInfiniteExtinction;
  c.seed = 987654321;
  c.sim.detector.dark_count_model = DarkCountModel::free_running;
  const std::string text = serialize_config(c);
  EXPECT_EQ(text.rfind("# loopmem-config/1", 0), 0u);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(back.sim.cavity.residual_loss, c.sim.cavity.residual_loss);
  EXPECT_EQ(back.sim.cavity.phase_jitter_sigma, c.sim.cavity.phase_jitter_sigma);
  EXPECT_EQ(back.sim.cavity.extinction_pbs_db, c.sim.cavity.extinction_pbs_db);
  EXPECT_EQ(back.sim.cavity.extinction_hwp_db, c.sim.cavity.extinction_hwp_db);
  EXPECT_EQ(back.sim.source.mean_photon_number, c.sim.source.mean_photon_number);
  EXPECT_EQ(back.sim.detector.dark_count_model, c.sim.detector.dark_count_model);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(serialize_config(back), text);
}

TEST(Config, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 0.97839581440093071, 1e-300, 123456.789e10}) {
    EXPECT_EQ(parse_double(format_double(v), 1), v);
  }
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config(std::string("cavity.mirror_reflectivity = 0.99\ncavity.bogus = 1\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Config, DuplicateKeyRejected) {
  try {
    parse_config(std::string("run.seed = 1\n# c\nrun.seed = 2\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Config, MalformedValues) {
  EXPECT_THROW(parse_config(std::string("cavity.residual_loss = abc\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("cavity.residual_loss = 0.9x\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("cavity.residual_loss\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("run.seed = -3\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("run.seed = 1.5\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("detector.dark_count_model = maybe\n")), ParseError);
}

TEST(Config, ValidationFailuresAreParseErrors) {
  EXPECT_THROW(parse_config(std::string("cavity.mirror_reflectivity = 1.5\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("cavity.round_trip_ns = 2\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("detector.detection_efficiency = -0.1\n")), ParseError);
  EXPECT_THROW(parse_config(std::string("source.rep_rate_hz = 0\n")), ParseError);
}

TEST(Records, CountsCsvRoundTrip) {
  CountsTable t;
  t.meta["trigger_windows"] = "100000";
  t.meta["state"] = "e";
  t.rows.push_back({3, "signal", 13764, 13736.4, std::sqrt(13764.0)});
  t.rows.push_back({3, "dark", 9, 15.0, 3.0});
  const std::string text = write_counts_csv(t);
  EXPECT_EQ(text.rfind("# loopmem-counts/1", 0), 0u);
  EXPECT_NE(text.find("\nround,slot,counts,expected,poisson_err\n"), std::string::npos);
  const auto back = parse_counts_csv(text);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].round, 3);
  EXPECT_EQ(back.rows[0].slot, "signal");
  EXPECT_EQ(back.rows[0].counts, 13764.0);
  EXPECT_EQ(back.rows[0].expected, 13736.4);
  EXPECT_EQ(back.meta_number("trigger_windows"), 1e5);
  EXPECT_EQ(write_counts_csv(back), text);
}

TEST(Records, MalformedCsvNamesLine) {
  const std::string base = "# loopmem-counts/1 trigger_windows=10\nround,slot,counts,expected,poisson_err\n";
  try {
    parse_counts_csv(base + "3,signal,10,10,3\n4,signal,ten,10,3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  try {
    parse_counts_csv(base + "3,signal,10,10\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_counts_csv(std::string("round,slot,counts,expected,poisson_err\n")), ParseError);
  EXPECT_THROW(parse_counts_csv(std::string("# loopmem-counts/1\nr,s,c\n")), ParseError);
  EXPECT_THROW(parse_counts_csv(base + "-1,signal,10,10,3\n"), ParseError);
}

TEST(Records, SectionedRecordRoundTrip) {
  Record r;
  r.kind = "tomography";
  r.add("tomography").set("label", "plus").set("n_rounds", 30).set("fidelity", 0.9923);
  r.add("tomography").set("label", "e").set("n_rounds", 30).set("fidelity", 1.0);
  r.add("summary").set("min_fidelity", 0.9923);
  const std::string text = write_record(r);
  EXPECT_EQ(text.rfind("# loopmem-record/1 tomography", 0), 0u);
  const Record back = parse_record(text);
  EXPECT_EQ(back.kind, "tomography");
  ASSERT_EQ(back.all("tomography").size(), 2u);
  EXPECT_EQ(back.all("tomography")[1]->get("label"), "e");
  EXPECT_EQ(back.first("summary").number("min_fidelity"), 0.9923);
  EXPECT_EQ(back.first("tomography").integer("n_rounds"), 30);
  EXPECT_THROW(back.first("nope"), ParseError);
  EXPECT_THROW(back.first("summary").get("missing"), ParseError);
  EXPECT_EQ(write_record(back), text);
}

TEST(Records, MalformedRecord) {
  EXPECT_THROW(parse_record(std::string("[fit]\nalpha = 1\n")), ParseError);
  try {
    parse_record(std::string("# loopmem-record/1 fit\n[fit]\nalpha 1\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_record(std::string("# loopmem-record/1 fit\nalpha = 1\n")), ParseError);
}
