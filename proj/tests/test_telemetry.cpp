#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ruleprompt/random.hpp"
#include "ruleprompt/telemetry.hpp"
#include "support.hpp"

using namespace ruleprompt;
using rptest::error_kind_of;

namespace {

// Two-pass population mean/std, kept independent of the Welford code under test.
SensorStats two_pass_stats(const std::vector<Snapshot>& xs) {
  const std::size_t n = xs.size();
  const std::size_t d = xs.front().size();
  SensorStats s;
  s.means.assign(d, 0.0);
  s.stds.assign(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i) s.means[i] += x.values[i];
  for (auto& m : s.means) m /= static_cast<double>(n);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i) s.stds[i] += (x.values[i] - s.means[i]) * (x.values[i] - s.means[i]);
  for (auto& v : s.stds) v = std::sqrt(v / static_cast<double>(n));
  s.sample_count = n;
  return s;
}

Label max_scan_oracle(const std::vector<double>& z, double tau) {
  double m = -1.0;
  for (double v : z) m = v > m ? v : m;
  return m >= tau ? Label::Anomaly : Label::Nominal;
}

ZScoreVector random_z(RandomStream& rng, std::size_t n, double scale) {
  ZScoreVector z;
  for (std::size_t i = 0; i < n; ++i) z.abs_z.push_back(std::abs(rng.normal()) * scale);
  return z;
}

}  // namespace

TEST_CASE("estimate_stats: constant series") {
  std::vector<Snapshot> xs(3, Snapshot{{1.0, 1.0}});
  const SensorStats s = estimate_stats(xs);
  CHECK(s.means == std::vector<double>{1.0, 1.0});
  CHECK(s.stds == std::vector<double>{0.0, 0.0});
  CHECK(s.sample_count == 3);
}

TEST_CASE("estimate_stats: population std of {0, 2} is 1") {
  std::vector<Snapshot> xs{{{0.0}}, {{2.0}}};
  const SensorStats s = estimate_stats(xs);
  CHECK(s.means[0] == doctest::Approx(1.0));
  CHECK(s.stds[0] == doctest::Approx(1.0));
}

TEST_CASE("estimate_stats: errors") {
  CHECK(error_kind_of([] { estimate_stats(std::vector<Snapshot>{}); }) == ErrorKind::EmptyInput);
  CHECK(error_kind_of([] {
          std::vector<Snapshot> xs{{{1.0, 2.0}}, {{1.0}}};
          estimate_stats(xs);
        }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("estimate_stats matches a two-pass recomputation on 500 seeded snapshots") {
  RandomStream rng(1234);
  std::vector<Snapshot> xs;
  for (int k = 0; k < 500; ++k) {
    Snapshot x;
    for (int i = 0; i < 17; ++i) x.values.push_back(10.0 * i + (0.5 + i) * rng.normal());
    xs.push_back(std::move(x));
  }
  const SensorStats got = estimate_stats(xs);
  const SensorStats want = two_pass_stats(xs);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got.means[i] - want.means[i]) <= 1e-9);
    CHECK(std::abs(got.stds[i] - want.stds[i]) <= 1e-9);
  }
}

TEST_CASE("normalize examples") {
  const RuleConfig cfg;
  SensorStats s{{1.0}, {0.1}, 1};
  CHECK(normalize(Snapshot{{1.0}}, s, cfg).abs_z[0] == 0.0);
  CHECK(normalize(Snapshot{{1.35}}, s, cfg).abs_z[0] == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(normalize(Snapshot{{0.65}}, s, cfg).abs_z[0] == doctest::Approx(3.5).epsilon(1e-12));

  SensorStats zero{{5.0}, {0.0}, 1};
  const double z = normalize(Snapshot{{5.0}}, zero, cfg).abs_z[0];
  CHECK(z == 0.0);
  CHECK(std::isfinite(normalize(Snapshot{{5.1}}, zero, cfg).abs_z[0]));

  CHECK(error_kind_of([&] { normalize(Snapshot{{1.0, 2.0}}, s, cfg); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("flag_sensor boundary is inclusive") {
  constexpr RuleConfig cfg;
  static_assert(flag_sensor(3.0, cfg) == 1);
  CHECK(flag_sensor(3.0, cfg) == 1);
  CHECK(flag_sensor(2.999, cfg) == 0);
  const SensorStats s{{0.0}, {1.0}, 1};
  CHECK(flag_sensor(normalize(Snapshot{{-3.2}}, s, cfg).abs_z[0], cfg) == 1);
}

TEST_CASE("apply_rule examples") {
  const RuleConfig cfg;
  ZScoreVector z;
  z.abs_z.assign(255, 1.0);
  CHECK(apply_rule(z, cfg) == RuleVerdict{Label::Nominal, {}});
  z.abs_z[254] = 3.5;
  CHECK(apply_rule(z, cfg) == RuleVerdict{Label::Anomaly, {254}});
  CHECK(error_kind_of([&] { apply_rule(ZScoreVector{}, cfg); }) == ErrorKind::EmptyInput);
}

TEST_CASE("RuleConfig validation") {
  CHECK(error_kind_of([] { RuleConfig{0.0, 1e-9}.validate(); }) == ErrorKind::InvalidArgument);
  CHECK(error_kind_of([] { RuleConfig{3.0, 0.0}.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("property: apply_rule agrees with a max-scan oracle") {
  RandomStream rng(77);
  const RuleConfig cfg;
  for (int trial = 0; trial < 2000; ++trial) {
    ZScoreVector z = random_z(rng, 1 + rng.uniform_index(300), 1.2);
    if (trial % 10 == 0) z.abs_z[rng.uniform_index(z.size())] = cfg.tau;
    const RuleVerdict v = apply_rule(z, cfg);
    REQUIRE(v.label == max_scan_oracle(z.abs_z, cfg.tau));
    std::vector<SensorId> expect;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (z.abs_z[i] >= cfg.tau) expect.push_back(i);
    REQUIRE(v.flagged_ids == expect);
  }
}

TEST_CASE("property: verdict is scale invariant") {
  RandomStream rng(5);
  const RuleConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 20;
    SensorStats s;
    Snapshot x;
    for (std::size_t i = 0; i < d; ++i) {
      s.means.push_back(rng.normal() * 50.0);
      s.stds.push_back(0.1 + rng.uniform());
      x.values.push_back(s.means[i] + s.stds[i] * rng.normal() * 2.0);
    }
    const double c = 0.01 + 100.0 * rng.uniform();
    SensorStats s2 = s;
    Snapshot x2 = x;
    for (std::size_t i = 0; i < d; ++i) {
      s2.stds[i] = c * s.stds[i];
      x2.values[i] = s.means[i] + c * (x.values[i] - s.means[i]);
    }
    const ZScoreVector a = normalize(x, s, cfg);
    const ZScoreVector b = normalize(x2, s2, cfg);
    for (std::size_t i = 0; i < d; ++i) REQUIRE(std::abs(a.abs_z[i] - b.abs_z[i]) <= 1e-12 * (1.0 + a.abs_z[i]));
    // Values right at tau can straddle by one ulp; only compare away from the boundary.
    bool near = false;
    for (std::size_t i = 0; i < d; ++i) near = near || std::abs(a.abs_z[i] - cfg.tau) < 1e-9;
    if (!near) REQUIRE(apply_rule(a, cfg) == apply_rule(b, cfg));
  }
}

TEST_CASE("property: raising an abs_z never clears an anomaly") {
  RandomStream rng(9);
  const RuleConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    ZScoreVector z = random_z(rng, 30, 1.5);
    const Label before = apply_rule(z, cfg).label;
    z.abs_z[rng.uniform_index(30)] += 5.0 * rng.uniform();
    if (before == Label::Anomaly) REQUIRE(apply_rule(z, cfg).label == Label::Anomaly);
  }
}

TEST_CASE("property: fitting set standardizes to mean 0, std 1") {
  RandomStream rng(31);
  std::vector<Snapshot> xs;
  for (int k = 0; k < 300; ++k) {
    Snapshot x;
    for (int i = 0; i < 6; ++i) x.values.push_back(i * 3.0 + (1.0 + i) * rng.normal());
    xs.push_back(std::move(x));
  }
  const SensorStats s = estimate_stats(xs);
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0, sq = 0.0;
    for (const auto& x : xs) {
      const double signed_z = (x.values[i] - s.means[i]) / s.stds[i];
      sum += signed_z;
      sq += signed_z * signed_z;
    }
    const double mean = sum / xs.size();
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(sq / xs.size() - mean * mean) - 1.0) <= 1e-9);
  }
}

TEST_CASE("labels and display names") {
  CHECK(to_string(Label::Nominal) == "normal");
  CHECK(to_string(Label::Anomaly) == "anomaly");
  CHECK(label_from_string("anomaly") == Label::Anomaly);
  CHECK_FALSE(label_from_string("abnormal").has_value());
  CHECK(sensor_display_name(254) == "Sensor 255");
  const auto metas = make_sensor_set(255);
  CHECK(metas.front().kind == SensorKind::ActiveInjection);
  CHECK(metas.back().kind == SensorKind::VoltageMagnitude);
}

TEST_CASE("content_hash separates snapshots") {
  CHECK(content_hash(Snapshot{{1.0, 2.0}}) == content_hash(Snapshot{{1.0, 2.0}}));
  CHECK(content_hash(Snapshot{{1.0, 2.0}}) != content_hash(Snapshot{{2.0, 1.0}}));
}
