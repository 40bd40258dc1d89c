#include "psr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace psr {

namespace {

using Labels = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

double rect_gap(const Rect& a, const Rect& b) {
  const double gx = std::max({0.0, b.x - (a.x + a.width), a.x - (b.x + b.width)});
  const double gy = std::max({0.0, b.y - (a.y + a.height), a.y - (b.y + b.height)});
  return std::hypot(gx, gy);
}

// Centroid of the pixels of one defect in metres; falls back to the rectangle
// centre when no pixel centre is covered.
Point mask_centroid(const DefectMap& truth, std::size_t i) {
  const Mask m = truth.mask(i);
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (Eigen::Index iy = 0; iy < m.rows(); ++iy)
    for (Eigen::Index ix = 0; ix < m.cols(); ++ix)
      if (m(iy, ix)) {
        sx += truth.grid.x(static_cast<std::size_t>(ix));
        sy += truth.grid.y(static_cast<std::size_t>(iy));
        ++n;
      }
  if (n == 0) return truth.defects[i].rect.center();
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

double sample_nearest(const Field& map, const Grid2D& g, double x, double y) {
  const auto ix = std::clamp<long>(std::lround(x / g.dx), 0, static_cast<long>(g.n_x) - 1);
  const auto iy = std::clamp<long>(std::lround(y / g.dy), 0, static_cast<long>(g.n_y) - 1);
  return map(iy, ix);
}

}  // namespace

const PairSeparation* SeparabilityReport::find(std::size_t i, std::size_t j) const {
  for (const auto& p : pairs)
    if ((p.first == i && p.second == j) || (p.first == j && p.second == i)) return &p;
  return nullptr;
}

Mask dilate(const Mask& mask) {
  Mask out = mask;
  const Eigen::Index ny = mask.rows(), nx = mask.cols();
  for (Eigen::Index iy = 0; iy < ny; ++iy)
    for (Eigen::Index ix = 0; ix < nx; ++ix) {
      if (!mask(iy, ix)) continue;
      for (Eigen::Index oy = std::max<Eigen::Index>(iy - 1, 0); oy <= std::min(iy + 1, ny - 1); ++oy)
        for (Eigen::Index ox = std::max<Eigen::Index>(ix - 1, 0); ox <= std::min(ix + 1, nx - 1); ++ox)
          out(oy, ox) = true;
    }
  return out;
}

Mask truth_mask(const DefectMap& truth) {
  Mask m = Mask::Constant(static_cast<Eigen::Index>(truth.grid.n_y), static_cast<Eigen::Index>(truth.grid.n_x), false);
  for (std::size_t i = 0; i < truth.defects.size(); ++i) m = m || truth.mask(i);
  return m;
}

double noise_floor(const Field& map, const DefectMap& truth, double* baseline) {
  require_shape(map, truth.grid, "noise_floor");
  const Mask near = dilate(truth_mask(truth));
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(map.size()));
  for (Eigen::Index i = 0; i < map.size(); ++i)
    if (!near.data()[i]) off.push_back(map.data()[i]);
  if (off.empty()) off.assign(map.data(), map.data() + map.size());
  const double med = median(off);
  for (auto& v : off) v = std::abs(v - med);
  const double mad = median(std::move(off));
  if (baseline) *baseline = med;
  return med + 3.0 * mad;
}

std::size_t label_components(const Mask& mask, Labels& labels) {
  const Eigen::Index ny = mask.rows(), nx = mask.cols();
  labels = Labels::Zero(ny, nx);
  int next = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index iy = 0; iy < ny; ++iy)
    for (Eigen::Index ix = 0; ix < nx; ++ix) {
      if (!mask(iy, ix) || labels(iy, ix)) continue;
      labels(iy, ix) = ++next;
      stack.assign(1, {iy, ix});
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        for (Eigen::Index oy = std::max<Eigen::Index>(cy - 1, 0); oy <= std::min(cy + 1, ny - 1); ++oy)
          for (Eigen::Index ox = std::max<Eigen::Index>(cx - 1, 0); ox <= std::min(cx + 1, nx - 1); ++ox)
            if (mask(oy, ox) && !labels(oy, ox)) {
              labels(oy, ox) = next;
              stack.push_back({oy, ox});
            }
      }
    }
  return static_cast<std::size_t>(next);
}

SupportMetrics support_metrics(const Field& map, const DefectMap& truth, double activation_threshold_frac) {
  if (!(activation_threshold_frac > 0.0 && activation_threshold_frac < 1.0))
    throw ParameterError("activation_threshold_frac must lie in (0, 1)");
  require_shape(map, truth.grid, "support_metrics");
  SupportMetrics out;
  const Mask t = truth_mask(truth);
  const Mask band = dilate(t);
  const double peak = map.maxCoeff();
  const Mask act = peak > 0.0 ? Mask(map > activation_threshold_frac * peak)
                              : Mask::Constant(map.rows(), map.cols(), false);

  const double tp = static_cast<double>((act && band).count());
  const double fp = static_cast<double>((act && !band).count());
  const double fn = static_cast<double>((t && !act).count());
  out.support_iou = tp + fp + fn > 0.0 ? tp / (tp + fp + fn) : 0.0;

  Labels labels;
  out.components = label_components(act, labels);
  std::vector<double> cx(out.components, 0.0), cy(out.components, 0.0), cnt(out.components, 0.0);
  for (Eigen::Index iy = 0; iy < labels.rows(); ++iy)
    for (Eigen::Index ix = 0; ix < labels.cols(); ++ix)
      if (const int l = labels(iy, ix)) {
        cx[l - 1] += truth.grid.x(static_cast<std::size_t>(ix));
        cy[l - 1] += truth.grid.y(static_cast<std::size_t>(iy));
        cnt[l - 1] += 1.0;
      }
  out.localization_error.resize(truth.defects.size());
  for (std::size_t i = 0; i < truth.defects.size(); ++i) {
    if (out.components == 0) continue;
    const Point c = mask_centroid(truth, i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < out.components; ++k)
      best = std::min(best, std::hypot(cx[k] / cnt[k] - c.x, cy[k] / cnt[k] - c.y));
    out.localization_error[i] = best;
  }
  return out;
}

SeparabilityReport separability(const Field& map, const DefectMap& truth, double valley_threshold,
                                double activation_threshold_frac) {
  if (!(valley_threshold > 0.0 && valley_threshold < 1.0)) throw ParameterError("valley_threshold must lie in (0, 1)");
  require_shape(map, truth.grid, "separability");
  SeparabilityReport rep;
  rep.noise_floor = noise_floor(map, truth, &rep.baseline);
  const double base = rep.baseline;
  const Grid2D& g = truth.grid;

  for (std::size_t i = 0; i < truth.defects.size(); ++i)
    for (std::size_t j = i + 1; j < truth.defects.size(); ++j) {
      PairSeparation p;
      p.first = i;
      p.second = j;
      const Rect& ra = truth.defects[i].rect;
      const Rect& rb = truth.defects[j].rect;
      p.gap = rect_gap(ra, rb);
      const Point a = mask_centroid(truth, i);
      const Point b = mask_centroid(truth, j);
      const double len = std::hypot(b.x - a.x, b.y - a.y);
      if (len == 0.0) {
        rep.pairs.push_back(p);
        continue;
      }
      const double ux = (b.x - a.x) / len, uy = (b.y - a.y) / len;
      // Half-extent of each rectangle along the joining direction.
      const double ext_a = 0.5 * (ra.width * std::abs(ux) + ra.height * std::abs(uy));
      const double ext_b = 0.5 * (rb.width * std::abs(ux) + rb.height * std::abs(uy));
      const double step = 0.25 * std::min(g.dx, g.dy);
      const double s0 = -ext_a, s1 = len + ext_b, mid = 0.5 * len;
      const auto n = static_cast<std::size_t>(std::ceil((s1 - s0) / step)) + 1;
      std::size_t split = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const double s = std::min(s0 + static_cast<double>(k) * step, s1);
        if (s <= mid) split = k + 1;
        p.profile.push_back(sample_nearest(map, g, a.x + s * ux, a.y + s * uy));
      }
      const auto first_end = p.profile.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(split, 1));
      const auto pa = std::max_element(p.profile.begin(), first_end);
      const auto pb = std::max_element(first_end == p.profile.end() ? first_end - 1 : first_end, p.profile.end());
      p.peak_first = *pa;
      p.peak_second = *pb;
      p.valley = *std::min_element(pa, pb + 1);
      const double lower = std::min(p.peak_first, p.peak_second) - base;
      const double dip = p.valley - base;
      p.valley_ratio = lower > 0.0 ? std::clamp(dip / lower, 0.0, 1.0) : 1.0;
      p.separated = p.peak_first > rep.noise_floor && p.peak_second > rep.noise_floor && lower > 0.0 &&
                    dip < valley_threshold * lower;
      rep.pairs.push_back(std::move(p));
    }

  const SupportMetrics sm = support_metrics(map, truth, activation_threshold_frac);
  rep.support_iou = sm.support_iou;
  rep.localization_error = sm.localization_error;
  return rep;
}

double pearson(const Field& a, const Field& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("pearson: shapes differ");
  const double ma = a.mean(), mb = b.mean();
  const double cov = ((a - ma) * (b - mb)).sum();
  const double va = (a - ma).square().sum(), vb = (b - mb).square().sum();
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace psr
