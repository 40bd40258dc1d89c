#include <doctest.h>

#include <cmath>
#include <random>

#include "psr/evaluation.hpp"
#include "support.hpp"

using namespace psr;

namespace {

const Grid2D kGrid{40, 20, 1e-4, 1e-4};

// Defect covering the inclusive pixel range [x0, x1] x [y0, y1].
DefectRect px_rect(double x0, double x1, double y0, double y1, double zeta = 0.5) {
  const double d = kGrid.dx;
  return {{(x0 - 0.5) * d, (y0 - 0.5) * d, (x1 - x0 + 1.0) * d, (y1 - y0 + 1.0) * d}, zeta};
}

DefectMap two_defects() {
  return DefectMap::from_rects(kGrid, {px_rect(10, 13, 8, 11), px_rect(18, 21, 8, 11)});
}

Field mask_field(const Mask& m) { return m.cast<double>(); }

// Smooth bump at each defect centre.
Field bumps(const DefectMap& truth, double sigma_px) {
  Field f = kGrid.zeros();
  for (const auto& d : truth.defects) {
    const Point c = d.rect.center();
    for (std::size_t y = 0; y < kGrid.n_y; ++y)
      for (std::size_t x = 0; x < kGrid.n_x; ++x) {
        const double r2 = (std::pow(kGrid.x(x) - c.x, 2) + std::pow(kGrid.y(y) - c.y, 2)) / (kGrid.dx * kGrid.dx);
        f(y, x) += std::exp(-r2 / (2.0 * sigma_px * sigma_px));
      }
  }
  return f;
}

}  // namespace

TEST_CASE("disjoint equal activations with an empty gap are separated") {
  const DefectMap truth = two_defects();
  const SeparabilityReport r = separability(mask_field(truth_mask(truth)), truth, 0.5);
  REQUIRE(r.pairs.size() == 1);
  const PairSeparation& p = r.pairs[0];
  CHECK(p.separated);
  CHECK(p.valley_ratio == 0.0);
  CHECK(p.peak_first == 1.0);
  CHECK(p.peak_second == 1.0);
  CHECK(p.gap == doctest::Approx(4e-4));
  CHECK(r.find(1, 0) == &r.pairs[0]);
  CHECK(r.find(0, 2) == nullptr);
}

TEST_CASE("a single blob across both defects is not separated") {
  const DefectMap truth = two_defects();
  Field map = kGrid.zeros();
  map.block(8, 10, 4, 12) = 1.0;
  const SeparabilityReport r = separability(map, truth, 0.5);
  CHECK_FALSE(r.pairs[0].separated);
  CHECK(r.pairs[0].valley_ratio == 1.0);
}

TEST_CASE("a shallow dip is separated only above the valley threshold") {
  const DefectMap truth = two_defects();
  Field map = mask_field(truth_mask(truth));
  map.block(8, 14, 4, 4) = 0.6;
  CHECK_FALSE(separability(map, truth, 0.5).pairs[0].separated);
  CHECK(separability(map, truth, 0.7).pairs[0].separated);
  CHECK(separability(map, truth, 0.5).pairs[0].valley_ratio == doctest::Approx(0.6));
}

TEST_CASE("peaks under the noise floor do not count") {
  const DefectMap truth = two_defects();
  std::mt19937_64 rng(1);
  Field map = test::random_field(20, 40, rng, 0.0, 1.0);
  map += 0.01 * mask_field(truth_mask(truth));
  CHECK_FALSE(separability(map, truth, 0.5).pairs[0].separated);
}

TEST_CASE("separability ignores positive affine rescaling") {
  const DefectMap truth = DefectMap::from_rects(kGrid, {px_rect(5, 7, 4, 6), px_rect(10, 12, 4, 6),
                                                        px_rect(25, 27, 12, 15)});
  std::mt19937_64 rng(2);
  const Field map = bumps(truth, 1.5) + test::random_field(20, 40, rng, 0.0, 0.02);
  const SeparabilityReport a = separability(map, truth, 0.5);
  REQUIRE(a.pairs.size() == 3);
  for (auto [s, t] : {std::pair{3.0, -7.0}, std::pair{1e-4, 2.5}, std::pair{250.0, 0.0}}) {
    const SeparabilityReport b = separability(s * map + t, truth, 0.5);
    for (std::size_t k = 0; k < a.pairs.size(); ++k) {
      CHECK(b.pairs[k].separated == a.pairs[k].separated);
      CHECK(b.pairs[k].valley_ratio == doctest::Approx(a.pairs[k].valley_ratio).epsilon(1e-9));
    }
    CHECK(b.noise_floor == doctest::Approx(s * a.noise_floor + t).epsilon(1e-9));
  }
}

TEST_CASE("valley ratio stays in [0, 1]") {
  const DefectMap truth = two_defects();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Field map = test::random_field(20, 40, rng, -1.0, 1.0) + 2.0 * bumps(truth, 1.0 + 0.05 * trial);
    const double v = separability(map, truth, 0.5).pairs[0].valley_ratio;
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("the truth mask scores full support and zero localization error") {
  const DefectMap truth = two_defects();
  const SupportMetrics s = support_metrics(mask_field(truth_mask(truth)), truth, 0.5);
  CHECK(s.support_iou >= 0.8);
  CHECK(s.components == 2);
  REQUIRE(s.localization_error.size() == 2);
  for (const auto& e : s.localization_error) {
    REQUIRE(e.has_value());
    CHECK(*e == doctest::Approx(0.0).scale(1e-12));
  }
}

TEST_CASE("an all-zero map has no support") {
  const DefectMap truth = two_defects();
  const SupportMetrics s = support_metrics(kGrid.zeros(), truth, 0.5);
  CHECK(s.support_iou == 0.0);
  CHECK(s.components == 0);
  REQUIRE(s.localization_error.size() == 2);
  CHECK_FALSE(s.localization_error[0].has_value());
  CHECK_FALSE(s.localization_error[1].has_value());
}

TEST_CASE("a flat map scores the tolerated area fraction") {
  const DefectMap truth = two_defects();
  const Mask band = dilate(truth_mask(truth));
  const double expected = double(band.count()) / double(kGrid.size());
  CHECK(support_metrics(Field::Constant(20, 40, 3.0), truth, 0.5).support_iou == doctest::Approx(expected));
  // 2 x (6 x 6) tolerated pixels of 800
  CHECK(expected == doctest::Approx(72.0 / 800.0));
}

TEST_CASE("a flat map scores the truth area fraction" * doctest::may_fail()) {
  const DefectMap truth = two_defects();
  const double fraction = double(truth_mask(truth).count()) / double(kGrid.size());
  CHECK(support_metrics(Field::Constant(20, 40, 3.0), truth, 0.5).support_iou == doctest::Approx(fraction));
}

TEST_CASE("a shifted activation reports its offset") {
  const DefectMap truth = DefectMap::from_rects(kGrid, {px_rect(10, 13, 8, 11)});
  Field map = kGrid.zeros();
  map.block(8, 12, 4, 4) = 1.0;
  const SupportMetrics s = support_metrics(map, truth, 0.5);
  REQUIRE(s.localization_error[0].has_value());
  CHECK(*s.localization_error[0] == doctest::Approx(2e-4));
  // two columns stay inside the tolerance band, two fall outside it
  CHECK(s.support_iou == doctest::Approx(12.0 / (12.0 + 4.0 + 8.0)));
}

TEST_CASE("support IoU does not grow with the activation threshold") {
  const DefectMap truth = two_defects();
  std::mt19937_64 rng(4);
  const Field map = bumps(truth, 2.0) + test::random_field(20, 40, rng, 0.0, 0.05);
  double prev = 2.0;
  for (double f = 0.3; f < 0.99; f += 0.02) {
    const double iou = support_metrics(map, truth, f).support_iou;
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    // Once the activation sits inside the tolerance band, raising the threshold only loses pixels.
    if (f > 0.5) CHECK(iou <= prev + 1e-12);
    prev = iou;
  }
}

TEST_CASE("threshold and shape checks") {
  const DefectMap truth = two_defects();
  CHECK_THROWS_AS(support_metrics(kGrid.zeros(), truth, 0.0), ParameterError);
  CHECK_THROWS_AS(support_metrics(kGrid.zeros(), truth, 1.0), ParameterError);
  CHECK_THROWS_AS(separability(kGrid.zeros(), truth, 1.0), ParameterError);
  CHECK_THROWS_AS(separability(Field::Zero(3, 3), truth, 0.5), ShapeError);
}

TEST_CASE("noise floor is median plus three MAD outside the defects") {
  const DefectMap truth = two_defects();
  Field map = kGrid.zeros();
  // every off-defect pixel is 1 or 3 in equal numbers except one extra 1
  const Mask near = dilate(truth_mask(truth));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < map.size(); ++i)
    if (!near.data()[i]) map.data()[i] = (k++ % 2) ? 3.0 : 1.0;
    else map.data()[i] = 100.0;
  REQUIRE(k % 2 == 0);
  double base = 0.0;
  const double nf = noise_floor(map, truth, &base);
  CHECK(base == 2.0);
  CHECK(nf == 5.0);
}

TEST_CASE("components are 8-connected") {
  Mask m = Mask::Constant(4, 4, false);
  m(0, 0) = m(1, 1) = m(3, 3) = true;
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
  CHECK(label_components(m, labels) == 2);
  CHECK(labels(0, 0) == labels(1, 1));
  CHECK(labels(3, 3) != labels(0, 0));
  CHECK(labels(2, 2) == 0);
}

TEST_CASE("pearson correlation") {
  std::mt19937_64 rng(5);
  const Field a = test::random_field(6, 7, rng);
  CHECK(pearson(a, 2.0 * a + 1.0) == doctest::Approx(1.0));
  CHECK(pearson(a, -a) == doctest::Approx(-1.0));
  CHECK(pearson(a, Field::Constant(6, 7, 1.0)) == 0.0);
  CHECK_THROWS_AS(pearson(a, Field::Zero(7, 6)), ShapeError);
}
