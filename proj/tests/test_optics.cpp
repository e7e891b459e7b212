#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "loopmem/optics.hpp"
#include "test_support.hpp"

using namespace loopmem;
using C = std::complex<double>;

namespace {

const double kH = 1.0 / std::sqrt(2.0);

JonesVector jv(C h, C v) { return JonesVector(h, v); }

// |<a|b>|^2 / (|a|^2 |b|^2)
double pol_overlap(const JonesVector& a, const JonesVector& b) {
  return std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm());
}

// Rotation conjugation of diag(1, -1): an independent route to the HWP matrix.
JonesMatrix hwp_by_rotation(double theta_deg) {
  const double t = theta_deg * std::numbers::pi / 180.0;
  Eigen::Matrix2d rot;
  rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  const Eigen::Matrix2d d = Eigen::Vector2d(1.0, -1.0).asDiagonal();
  return (rot * d * rot.transpose()).cast<C>();
}

PolTimeBinState pol_state(JonesVector early, JonesVector late = JonesVector::Zero()) {
  PolTimeBinState s;
  s.slots[0] = early;
  s.slots[1] = late;
  return s;
}

}  // namespace

TEST(Encoder, ZBasisEarly) {
  const auto a = encode_time_bin("e");
  EXPECT_EQ(a.early, C(1, 0));
  EXPECT_EQ(a.late, C(0, 0));
}

TEST(Encoder, PlusIsEqualSuperposition) {
  const auto a = encode_time_bin("plus");
  EXPECT_NEAR(std::abs(a.early - C(kH, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a.late - C(kH, 0)), 0.0, 1e-15);
}

TEST(Encoder, RCarriesMinusI) {
  const auto a = encode_time_bin("R");
  EXPECT_NEAR(std::abs(a.early - C(kH, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a.late - C(0, -kH)), 0.0, 1e-15);
}

TEST(Encoder, RelativePhases) {
  const std::pair<const char*, C> cases[] = {
      {"plus", C(1, 0)}, {"minus", C(-1, 0)}, {"L", C(0, 1)}, {"R", C(0, -1)}};
  for (const auto& [label, phase] : cases) {
    const auto a = encode_time_bin(label);
    EXPECT_NEAR(std::abs(a.early), kH, 1e-15) << label;
    EXPECT_NEAR(std::abs(a.late / a.early - phase), 0.0, 1e-15) << label;
  }
}

TEST(Encoder, NormalizedAndPairsOrthogonal) {
  for (auto s : kAllStates) EXPECT_NEAR(encode_time_bin(s).norm_squared(), 1.0, 1e-12);
  EXPECT_NEAR(overlap_probability(encode_time_bin("e"), encode_time_bin("l")), 0.0, 1e-12);
  EXPECT_NEAR(overlap_probability(encode_time_bin("plus"), encode_time_bin("minus")), 0.0, 1e-12);
  EXPECT_NEAR(overlap_probability(encode_time_bin("L"), encode_time_bin("R")), 0.0, 1e-12);
  // mutually unbiased bases
  EXPECT_NEAR(overlap_probability(encode_time_bin("e"), encode_time_bin("L")), 0.5, 1e-12);
  EXPECT_NEAR(overlap_probability(encode_time_bin("plus"), encode_time_bin("R")), 0.5, 1e-12);
}

TEST(Encoder, UnknownLabelRejected) {
  EXPECT_THROW(encode_time_bin("x"), InvalidInput);
  EXPECT_THROW(parse_state_label("Plus"), InvalidInput);
  EXPECT_THROW(parse_state_label(""), InvalidInput);
}

TEST(Hwp, At45SwapsHtoV) {
  const JonesVector out = jones_hwp(45.0).jones * jv(1, 0);
  EXPECT_NEAR(pol_overlap(out, jv(0, 1)), 1.0, 1e-12);
}

TEST(Hwp, At0KeepsVUpToSign) {
  const JonesVector out = jones_hwp(0.0).jones * jv(0, 1);
  EXPECT_NEAR(std::abs(out(0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(out(1) - C(-1, 0)), 0.0, 1e-15);
}

TEST(Hwp, At22p5RotatesHToDiagonal) {
  const JonesVector out = jones_hwp(22.5).jones * jv(1, 0);
  EXPECT_NEAR(pol_overlap(out, jv(kH, kH)), 1.0, 1e-12);
}

TEST(Hwp, MatchesRotatedRetarderAndIsUnitary) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-360.0, 360.0);
  for (int i = 0; i < 200; ++i) {
    const double t = angle(rng);
    const auto e = jones_hwp(t);
    EXPECT_LT((e.jones - hwp_by_rotation(t)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(is_unitary(e.jones, 1e-12));
    EXPECT_NEAR(std::abs(e.jones.determinant() - C(-1, 0)), 0.0, 1e-12);
  }
  EXPECT_THROW(jones_hwp(std::nan("")), InvalidInput);
}

TEST(Hwp, FiniteExtinctionStaysUnitary) {
  for (double db : {20.0, 30.0, 45.0}) {
    const auto e = jones_hwp(45.0, db);
    EXPECT_TRUE(is_unitary(e.jones, 1e-12));
    const JonesVector out = e.jones * jv(1, 0);
    EXPECT_NEAR(std::norm(out(0)), std::pow(10.0, -db / 10.0), 1e-15);
  }
}

TEST(Pockels, IdealHighSwitchesHtoV) {
  const auto e = jones_pockels(true, 1.0, kInfiniteExtinction);
  const JonesVector out = e.jones * jv(1, 0);
  EXPECT_EQ(out(0), C(0, 0));
  EXPECT_NEAR(std::abs(out(1) - C(1, 0)), 0.0, 1e-15);
  EXPECT_TRUE(is_unitary(e.jones));
}

TEST(Pockels, LowVoltageTransmits983) {
  const auto e = jones_pockels(false, 0.983, 30.0);
  for (const auto& in : {jv(1, 0), jv(0, 1), jv(kH, C(0, kH))}) {
    EXPECT_NEAR((e.jones * in).squaredNorm(), 0.983, 1e-12);
    EXPECT_NEAR(pol_overlap(e.jones * in, in), 1.0, 1e-12);
  }
}

TEST(Pockels, HighAt30dBLeavesOnePerMilleUnrotated) {
  const auto e = jones_pockels(true, 1.0, 30.0);
  const JonesVector out = e.jones * jv(1, 0);
  EXPECT_NEAR(std::norm(out(0)) / out.squaredNorm(), 1e-3, 1e-15);
  EXPECT_NEAR(e.leak_fraction, 1e-3, 1e-18);
}

TEST(Pockels, RejectsBadArguments) {
  EXPECT_THROW(jones_pockels(true, 0.0, 30.0), InvalidInput);
  EXPECT_THROW(jones_pockels(true, 1.01, 30.0), InvalidInput);
  EXPECT_THROW(jones_pockels(false, -0.5, 30.0), InvalidInput);
  EXPECT_THROW(jones_pockels(true, 0.9, 0.0), InvalidInput);
  EXPECT_THROW(jones_pockels(true, 0.9, -3.0), InvalidInput);
}

TEST(LeakFraction, FromDecibels) {
  EXPECT_DOUBLE_EQ(leak_fraction_from_db(30.0), 1e-3);
  EXPECT_DOUBLE_EQ(leak_fraction_from_db(kInfiniteExtinction), 0.0);
  for (double db = 30.0; db <= 80.0; db += 2.5) EXPECT_LE(leak_fraction_from_db(db), 1e-3);
  EXPECT_THROW(leak_fraction_from_db(0.0), InvalidInput);
}

TEST(Pbs, IdealRouting) {
  const auto h = pbs_route(pol_state(jv(1, 0)), kInfiniteExtinction);
  EXPECT_DOUBLE_EQ(h.transmitted.power(), 1.0);
  EXPECT_DOUBLE_EQ(h.reflected.power(), 0.0);
  const auto v = pbs_route(pol_state(jv(0, 1)), kInfiniteExtinction);
  EXPECT_DOUBLE_EQ(v.transmitted.power(), 0.0);
  EXPECT_DOUBLE_EQ(v.reflected.power(), 1.0);
  const auto d = pbs_route(pol_state(jv(kH, kH)), kInfiniteExtinction);
  EXPECT_NEAR(d.transmitted.power(), 0.5, 1e-15);
  EXPECT_NEAR(d.reflected.power(), 0.5, 1e-15);
}

TEST(Pbs, ConservesPowerForAnyExtinction) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double db : {0.5, 3.0, 10.0, 20.0, 30.0, 33.4, 50.0, kInfiniteExtinction}) {
    for (int i = 0; i < 50; ++i) {
      PolTimeBinState s = pol_state(jv(C(n(rng), n(rng)), C(n(rng), n(rng))),
                                    jv(C(n(rng), n(rng)), C(n(rng), n(rng))));
      const double scale = 1.0 / std::sqrt(s.power() * 1.7);
      for (auto& slot : s.slots) slot *= scale;
      const auto out = pbs_route(s, db);
      EXPECT_NEAR(out.transmitted.power() + out.reflected.power(), s.power(), 1e-12);
    }
  }
}

TEST(Pbs, WrongPortFractionMatchesExtinction) {
  const auto v = pbs_route(pol_state(jv(0, 1)), 30.0);
  EXPECT_NEAR(v.transmitted.power(), 1e-3, 1e-15);
  EXPECT_NEAR(v.reflected.power(Pol::V), 1.0 - 1e-3, 1e-15);
}

TEST(ApplyElement, IdentityLeavesStateUnchanged) {
  const auto s = PolTimeBinState::from_time_bin(encode_time_bin("L"), Pol::V);
  const auto out = apply_element(s, identity_element());
  for (int t = 0; t < 2; ++t) EXPECT_EQ(out.slots[t], s.slots[t]);
}

TEST(ApplyElement, MirrorScalesPower) {
  const auto s = PolTimeBinState::from_time_bin(encode_time_bin("plus"), Pol::H);
  EXPECT_NEAR(apply_element(s, mirror(0.995)).power(), 0.995, 1e-15);
}

TEST(ApplyElement, TwoHalfWavePlatesRestore) {
  const auto s = PolTimeBinState::from_time_bin(encode_time_bin("R"), Pol::H);
  const auto hwp = jones_hwp(45.0);
  const auto out = apply_element(apply_element(s, hwp), hwp);
  for (int t = 0; t < 2; ++t) EXPECT_LT((out.slots[t] - s.slots[t]).norm(), 1e-15);
}

TEST(ApplyElement, PockelsThenHwpReturnsH) {
  const auto s = PolTimeBinState::from_time_bin({1.0, 0.0}, Pol::H);
  const auto after_pc = apply_element(s, jones_pockels(true, 1.0, kInfiniteExtinction));
  EXPECT_NEAR(after_pc.power(Pol::V), 1.0, 1e-15);  // H -> V
  const auto after_hwp = apply_element(after_pc, jones_hwp(45.0));
  EXPECT_NEAR(after_hwp.power(Pol::H), 1.0, 1e-15);  // V -> H
}

TEST(ApplyElement, NeverIncreasesPower) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::uniform_real_distribution<double> ang(0.0, 180.0);
  std::uniform_real_distribution<double> db(1.0, 60.0);
  for (int i = 0; i < 300; ++i) {
    auto s = PolTimeBinState::from_time_bin(encode_time_bin(kAllStates[i % 6]), Pol::H);
    s = apply_element(s, jones_hwp(ang(rng)));
    const OpticalElement elements[] = {mirror(u(rng)), scalar_loss(u(rng), "residual"),
                                       jones_pockels(i % 2 == 0, u(rng), db(rng)),
                                       jones_hwp(ang(rng), db(rng))};
    for (const auto& e : elements) {
      EXPECT_LE(max_gain(e.jones), 1.0 + 1e-12) << e.label;
      EXPECT_LE(apply_element(s, e).power(), s.power() + 1e-12) << e.label;
    }
  }
}

TEST(ApplyElement, LosslessElementsAreUnitary) {
  EXPECT_TRUE(is_unitary(identity_element().jones));
  EXPECT_TRUE(is_unitary(mirror(1.0).jones));
  EXPECT_TRUE(is_unitary(jones_pockels(true, 1.0, 30.0).jones));
  EXPECT_TRUE(is_unitary(jones_pockels(false, 1.0, 30.0).jones));
  EXPECT_FALSE(is_unitary(mirror(0.995).jones));
}
