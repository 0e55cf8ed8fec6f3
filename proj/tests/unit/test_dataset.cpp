#include "generators.hpp"
#include "uqf/dataset.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace uqf;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

double sample_std(const Vector& v) { return std::sqrt((v.array() - v.mean()).square().sum() / double(v.size() - 1)); }

bool same(const Dataset& a, const Dataset& b) {
  if (a.x != b.x || a.y.has_value() != b.y.has_value() || a.z.has_value() != b.z.has_value()) return false;
  if (a.y && *a.y != *b.y) return false;
  if (a.z) {
    if ((a.z_mask != b.z_mask).any()) return false;
    for (Index i = 0; i < a.rows(); ++i)
      if (a.z_mask(i) && (*a.z)(i) != (*b.z)(i)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("white noise: 100 rows with sample mean near zero") {
  GeneratorConfig c;
  c.n_points = 100;
  c.seed = 11;
  const Dataset d = generate(c);
  CHECK(d.rows() == 100);
  REQUIRE(d.has_y());
  CHECK_FALSE(d.has_z());
  CHECK(std::abs(d.y->mean()) < 3.0 / std::sqrt(100.0));
}

TEST_CASE("generated X is an even grid over [x_min, x_max]") {
  GeneratorConfig c;
  c.n_points = 11;
  c.x_min = -2.0;
  c.x_max = 3.0;
  c.kind = TargetKind::linear_plus_noise;
  const Dataset d = generate(c);
  CHECK(d.x(0, 0) == -2.0);
  CHECK(d.x(10, 0) == 3.0);
  for (Index i = 1; i < 11; ++i) CHECK(d.x(i, 0) - d.x(i - 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cos2 mediated at X = -1 gives Y = Z = 1 with Z present") {
  const Dataset d = generate(cos2_config(TargetKind::cos2_mediated, 1.0, 3));
  REQUIRE(d.x(0, 0) == -1.0);
  CHECK((*d.y)(0) == 1.0);
  CHECK((*d.z)(0) == 1.0);
  CHECK(d.z_mask(0));
  for (Index i = 0; i < d.rows(); ++i) CHECK(d.z_mask(i) == (d.x(i, 0) <= 0.0));
}

TEST_CASE("cos2 sigma-encoded at X = -0.5 has exactly zero Y") {
  const Dataset d = generate(cos2_config(TargetKind::cos2_sigma_encoded, 1.0, 3));
  Index hit = -1;
  for (Index i = 0; i < d.rows(); ++i)
    if (d.x(i, 0) == -0.5) hit = i;
  REQUIRE(hit >= 0);
  CHECK((*d.z)(hit) == 0.0);
  CHECK((*d.y)(hit) == 0.0);
}

TEST_CASE("cos2 combined with b = 0 reproduces Z exactly") {
  GeneratorConfig c = cos2_config(TargetKind::cos2_combined, 2.0, 5);
  c.b = 0.0;
  const Dataset d = generate(c);
  CHECK(*d.y == *d.z);
}

TEST_CASE("sigma-encoded Y spread matches |Z| at its extrema") {
  for (double centre : {-1.0, 0.0}) {
    GeneratorConfig c;
    c.kind = TargetKind::cos2_sigma_encoded;
    c.n_points = 20000;
    c.x_min = centre - 0.002;
    c.x_max = centre + 0.002;
    c.seed = 17;
    const Dataset d = generate(c);
    CHECK(sample_std(*d.y) == doctest::Approx(1.0).epsilon(0.03));
  }
}

TEST_CASE("generation is deterministic per seed") {
  for (auto kind : {TargetKind::white_noise, TargetKind::linear_plus_noise, TargetKind::cos2_sigma_encoded,
                    TargetKind::cos2_combined}) {
    GeneratorConfig c = kind == TargetKind::white_noise || kind == TargetKind::linear_plus_noise
                            ? GeneratorConfig{}
                            : cos2_config(kind, 1.0, 0);
    c.kind = kind;
    c.seed = 99;
    c.b = 0.4;
    const Dataset a = generate(c), b = generate(c);
    CHECK(same(a, b));
    c.seed = 100;
    CHECK_FALSE(*generate(c).y == *a.y);
  }
}

TEST_CASE("invalid generator configs are rejected") {
  GeneratorConfig c;
  c.n_points = 1;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = {};
  c.x_min = 1.0;
  c.x_max = 1.0;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = {};
  c.noise.scale = -1.0;
  CHECK_THROWS_AS(generate(c), ConfigError);
}

TEST_CASE("sample_noise moments") {
  SUBCASE("zero scale gives zeros") {
    const Vector v = sample_noise({NoiseDistribution::gaussian, 0.0, 0.0}, 5, 1);
    CHECK(v == Vector::Zero(5));
  }
  SUBCASE("uniform has the requested std") {
    const Vector v = sample_noise({NoiseDistribution::uniform, 0.0, 1.0}, 100000, 2);
    CHECK(sample_std(v) == doctest::Approx(1.0).epsilon(0.02));
    // Support is mean +- sqrt(3) sigma.
    CHECK(v.cwiseAbs().maxCoeff() <= std::sqrt(3.0));
  }
  SUBCASE("exponential has mean = location and std = scale") {
    const Vector v = sample_noise({NoiseDistribution::exponential, 1.0, 1.0}, 100000, 3);
    CHECK(v.mean() == doctest::Approx(1.0).epsilon(0.02));
    CHECK(sample_std(v) == doctest::Approx(1.0).epsilon(0.03));
    CHECK(v.minCoeff() >= 0.0);
  }
  SUBCASE("gaussian") {
    const Vector v = sample_noise({NoiseDistribution::gaussian, 2.0, 0.5}, 100000, 4);
    CHECK(v.mean() == doctest::Approx(2.0).epsilon(0.01));
    CHECK(sample_std(v) == doctest::Approx(0.5).epsilon(0.02));
  }
  SUBCASE("cauchy median and quartiles") {
    Vector v = sample_noise({NoiseDistribution::cauchy, 1.0, 2.0}, 100001, 5);
    std::sort(v.data(), v.data() + v.size());
    CHECK(v(50000) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(v(75000) - v(25000) == doctest::Approx(4.0).epsilon(0.05));
  }
  CHECK_THROWS_AS(sample_noise({NoiseDistribution::gaussian, 0.0, -1.0}, 3, 0), ConfigError);
  CHECK(sample_noise({}, 10, 8) == sample_noise({}, 10, 8));
}

TEST_CASE("read_csv masks and errors") {
  const auto dir = testing::scratch_dir("csv");
  CsvSchema schema;
  schema.z_column = "z";

  write_text(dir / "full.csv", "x,y,z\n1,2,3\n4,5,6\n7,8,9\n");
  Dataset d = read_csv(dir / "full.csv", schema);
  CHECK(d.rows() == 3);
  CHECK(d.z_mask.all());
  CHECK((*d.y)(1) == 5.0);

  write_text(dir / "gaps.csv", "x,y,z\n1,2,3\n4,5,\n7,8,\n");
  d = read_csv(dir / "gaps.csv", schema);
  CHECK(d.z_mask(0));
  CHECK_FALSE(d.z_mask(1));
  CHECK_FALSE(d.z_mask(2));
  CHECK_NOTHROW(d.validate());

  write_text(dir / "nox.csv", "a,y,z\n1,2,3\n");
  CHECK_THROWS_AS(read_csv(dir / "nox.csv", schema), SchemaError);

  write_text(dir / "bad.csv", "x,y,z\n1,2,3\n4,oops,6\n");
  try {
    read_csv(dir / "bad.csv", schema);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row == 2);
  }
  write_text(dir / "badx.csv", "x,y\n1,2\nnan?,6\n");
  CHECK_THROWS_AS(read_csv(dir / "badx.csv", {}), ParseError);

  CHECK_THROWS_AS(read_csv(dir / "absent.csv", schema), IoError);
}

TEST_CASE("read_csv honours column names and order") {
  const auto dir = testing::scratch_dir("csv_named");
  write_text(dir / "d.csv", "amp,angle,count\n0.5,-10,3\n0.7,0,4\n");
  const Dataset d = read_csv(dir / "d.csv", {{"angle"}, "count", "amp"});
  CHECK(d.x(0, 0) == -10.0);
  CHECK((*d.y)(1) == 4.0);
  CHECK((*d.z)(1) == 0.7);
}

TEST_CASE("CSV round trip") {
  const auto dir = testing::scratch_dir("roundtrip");
  SUBCASE("generated cos2 data with a partial mask") {
    const Dataset d = generate(cos2_config(TargetKind::cos2_sigma_encoded, 2.0, 21));
    write_csv(d, dir / "d.csv");
    const Dataset back = read_csv(dir / "d.csv", default_schema(d));
    CHECK(same(d, back));
    double worst = 0.0;
    for (Index i = 0; i < d.rows(); ++i)
      if (d.z_mask(i)) worst = std::max(worst, std::abs((*d.z)(i) - (*back.z)(i)));
    CHECK(worst < 1e-9);
  }
  SUBCASE("dataset with Z present everywhere") {
    Dataset d = generate(cos2_config(TargetKind::cos2_mediated, 1.0, 0));
    d.z_mask.setConstant(true);
    write_csv(d, dir / "e.csv");
    CHECK(same(d, read_csv(dir / "e.csv", default_schema(d))));
  }
  SUBCASE("random multi-feature data") {
    testing::Gen g(5);
    for (int trial = 0; trial < 20; ++trial) {
      Dataset d;
      const Index n = g.integer(1, 30);
      d.x = g.features(n, g.integer(1, 3), false) * 1e-3;
      d.y = g.targets(n) * 1e7;
      d.z = g.targets(n);
      d.z_mask.resize(n);
      for (Index i = 0; i < n; ++i) d.z_mask(i) = g.coin();
      write_csv(d, dir / "r.csv");
      CHECK(same(d, read_csv(dir / "r.csv", default_schema(d))));
    }
  }
  SUBCASE("no rows") {
    Dataset d;
    d.x.resize(0, 1);
    CHECK_THROWS_AS(write_csv(d, dir / "none.csv"), IoError);
  }
  SUBCASE("unwritable path") {
    const Dataset d = generate(GeneratorConfig{});
    CHECK_THROWS_AS(write_csv(d, dir / "missing_dir" / "x.csv"), IoError);
  }
}

TEST_CASE("kind and distribution names round trip") {
  for (auto k : {TargetKind::white_noise, TargetKind::linear_plus_noise, TargetKind::cos2_mediated,
                 TargetKind::cos2_sigma_encoded, TargetKind::cos2_combined})
    CHECK(parse_target_kind(to_string(k)) == k);
  for (auto n : {NoiseDistribution::gaussian, NoiseDistribution::cauchy, NoiseDistribution::uniform,
                 NoiseDistribution::exponential})
    CHECK(parse_noise_distribution(to_string(n)) == n);
  CHECK_THROWS_AS(parse_target_kind("sine"), ConfigError);
}
