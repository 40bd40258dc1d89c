// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "acceptance_phantom.hpp"
#include "psr/baseline.hpp"
#include "psr/dataset_io.hpp"
#include "psr/evaluation.hpp"
#include "psr/recon_fft.hpp"
#include "psr/recon_sms.hpp"
#include "support.hpp"

using namespace psr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "NOT ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

PsfField field_psf(const Field& values) {
  PsfField psf;
  psf.grid = Grid2D{std::size_t(values.cols()), std::size_t(values.rows()), 1.0, 1.0};
  psf.values = values;
  psf.center = psf.grid.center();
  return psf;
}

double sig4(double v) {
  const double e = std::floor(std::log10(std::abs(v)));
  const double s = std::pow(10.0, 3.0 - e);
  return std::round(v * s) / s;
}

// Small phantom inside a margin as wide as the kernel support that matters, so
// the periodic extension used by the spectral method and the zero extension
// of the stacked system see the same data.
struct PaddedPhantom {
  static constexpr std::size_t kMargin = 12;
  Grid2D grid;
  MeasurementSet data;
  PsfField psf;
  DefectMap truth;

  PaddedPhantom() {
    const PlateSpec plate = PlateSpec::stainless_316l();
    const ExcitationTemporal ex{};
    const double dx = fwhm_diameter(plate, 0.5) / 8.0;
    const double m = double(kMargin);
    grid = Grid2D{24 + 2 * kMargin, 8 + 2 * kMargin, dx, dx};
    const ScanPlan plan = plan_triangular_grid(Rect{m * dx, m * dx, 23.0 * dx, 7.0 * dx}, 8.0 * dx, dx);
    auto rect = [&](double x0, double x1, double y0, double y1) {
      return DefectRect{{(x0 + m - 0.5) * dx, (y0 + m - 0.5) * dx, (x1 - x0 + 1.0) * dx, (y1 - y0 + 1.0) * dx}, 0.5};
    };
    truth = DefectMap::from_rects(grid, {rect(6, 8, 2, 5), rect(13, 15, 2, 5)});
    ForwardOptions o;
    o.snr_db = 40.0;
    data = forward_simulate(plate, ex, plan, truth, 0.5, 0.0, 7, o);
    psf = synth_centered_psf(plate, ex, grid, 0.5);
  }
};

// 16 spots on an n x n grid.
struct TimingFixture {
  MeasurementSet data;
  PsfField psf;

  explicit TimingFixture(std::size_t n) {
    const PlateSpec plate = PlateSpec::stainless_316l();
    const ExcitationTemporal ex{};
    const double dx = fwhm_diameter(plate, 0.5) / 8.0;
    const Grid2D g{n, n, dx, dx};
    ScanPlan plan;
    const double step = double(n) / 4.0;
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i)
        plan.positions.push_back({std::floor(step * (i + 0.5)) * dx, std::floor(step * (j + 0.5)) * dx});
    plan.spot_diameter = dx;
    plan.pitch = step * dx;
    plan.rows = 4;
    plan.roi = Rect{0.0, 0.0, double(n - 1) * dx, double(n - 1) * dx};
    const double c = double(n / 2);
    const DefectMap t = DefectMap::from_rects(g, {{Rect{(c - 2.0) * dx, (c - 1.0) * dx, 2.0 * dx, 2.0 * dx}, 0.5}});
    ForwardOptions o;
    o.snr_db = 40.0;
    data = forward_simulate(plate, ex, plan, t, 0.5, 0.0, 3, o);
    psf = synth_centered_psf(plate, ex, g, 0.5);
  }
};

// Reconstructions shared between criteria.
struct Runs {
  std::optional<ReconResult> phantom_sms, phantom_fft, padded_sms, padded_fft;
};

Runs g_runs;

Verdict operators() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> side(1, 32);
  double worst_conv = 0.0, worst_spec = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int ny = side(rng), nx = side(rng);
    const Eigen::VectorXd g = test::random_vector(ny * nx, rng), a = test::random_vector(ny * nx, rng);
    const Eigen::VectorXd ref = test::brute_conv1d(g, a);
    worst_conv = std::max(worst_conv, (build_conv_matrix(g).apply(a) - ref).norm() / ref.norm());

    const Field k = test::symmetrize(test::random_field(ny, nx, rng));
    const Field f = test::random_field(ny, nx, rng);
    const Field got = spectral_forward(make_spectral_operator(field_psf(k)), f);
    worst_spec = std::max(worst_spec, test::rel_err(got, test::brute_circular_conv(k, f)));
  }
  const double elapsed = seconds_since(t0);
  v.require(worst_conv <= 1e-9, fmt("conv matrix rel err %.2e <= 1e-9", worst_conv));
  v.require(worst_spec <= 1e-9, fmt("spectral rel err %.2e <= 1e-9", worst_spec));
  v.require(elapsed < 30.0, fmt("%.1f s < 30 s", elapsed));
  return v;
}

Verdict prox() {
  Verdict v;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> weight(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd l = 2.0 * Eigen::MatrixXd::Random(40, 1 + trial % 9);
    const double l21 = weight(rng), l2 = weight(rng);
    const GroupMatrix p = prox_l21_l2(l, l21, l2);
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      const double g = l.row(r).norm();
      const double factor = g > 0.0 ? std::max(0.0, 1.0 - l21 / g) : 0.0;
      worst = std::max(worst, (p.row(r) - factor * l.row(r) / (1.0 + l2)).lpNorm<Eigen::Infinity>());
    }
  }
  v.require(worst <= 1e-12, fmt("closed form max err %.2e <= 1e-12", worst));
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random(6, 4), b = Eigen::MatrixXd::Random(6, 4);
    const double l21 = weight(rng), l2 = weight(rng);
    const double lhs = (prox_l21_l2(a, l21, l2) - prox_l21_l2(b, l21, l2)).norm();
    if (lhs > (a - b).norm() * (1.0 + 1e-12)) ++violations;
  }
  v.require(violations == 0, fmt("non-expansive on 1e4 pairs (%g violations)", double(violations)));
  return v;
}

Verdict psf_validity() {
  Verdict v;
  const PlateSpec steel = PlateSpec::stainless_316l();
  const ExcitationTemporal pulse{};

  bool converges = true;
  for (double t : {0.1, 0.5, 2.0, 10.0}) {
    double prev = image_series(steel, t, 0);
    for (std::size_t n = 1; n <= 30; ++n) {
      const double s = image_series(steel, t, n);
      if (s < prev) converges = false;
      prev = s;
    }
    const double full = image_series(steel, t, 200);
    if (std::abs(prev - full) > 1e-12 * full) converges = false;
  }
  const double one = image_series(steel, 0.5, 1), full = image_series(steel, 0.5, 200);
  converges = converges && std::abs(one - full) / full < 1e-4;
  v.require(converges, "image series converges monotonically, one term within 1e-4 at 0.5 s");

  std::vector<PlateSpec> plates{steel};
  PlateSpec thin = steel;
  thin.thickness = 1e-3;
  plates.push_back(thin);
  PlateSpec lossy = steel;
  lossy.reflection_coeff = 0.6;
  plates.push_back(lossy);
  PlateSpec fast = steel;
  fast.diffusivity = 1.2e-5;
  fast.conductivity = 0.0;
  plates.push_back(fast);
  std::size_t kernels = 0, bad = 0;
  for (const auto& plate : plates)
    for (double t : {0.05, 0.2, 0.5, 0.7, 2.0})
      for (int n_dim : {1, 2, 3}) {
        PsfOptions opt;
        opt.n_dim = n_dim;
        const double dx = fwhm_diameter(plate, t) / 6.0;
        const Grid2D g{15, 15, dx, dx};
        const Field k = synth_centered_psf(plate, pulse, g, t, opt).values;
        Eigen::Index py = 0, px = 0;
        k.maxCoeff(&py, &px);
        const double tol = 1e-12 * k.maxCoeff();
        const bool sym = (k - Field(k.rowwise().reverse())).abs().maxCoeff() <= tol &&
                         (k - Field(k.colwise().reverse())).abs().maxCoeff() <= tol;
        // off-node centroid: peak in the pixel that holds it
        const PsfField off = synth_psf(plate, pulse, g, {6.3 * dx, 8.2 * dx}, t, opt);
        Eigen::Index oy = 0, ox = 0;
        off.values.maxCoeff(&oy, &ox);
        if (!(sym && py == 7 && px == 7 && oy == 8 && ox == 6 && (k >= 0.0).all())) ++bad;
        ++kernels;
      }
  v.require(bad == 0, fmt("symmetric with peak at the centroid on %g kernels", double(kernels)));

  const double d = fwhm_diameter(steel, 0.5), l = diffusion_length(steel, 0.5);
  v.require(sig4(d) == 4.566e-3, fmt("d_FWHM(0.5 s) = %.4g m", d));
  v.require(sig4(l) == 1.371e-3, fmt("L_diff(0.5 s) = %.4g m", l));
  return v;
}

Verdict super_resolution() {
  Verdict v;
  const test::AcceptancePhantom ph;
  const ReconConfig cfg = test::AcceptancePhantom::config();
  auto separated = [&](const Field& map, std::size_t i, std::size_t j, double* ratio) {
    const SeparabilityReport r = separability(map, ph.truth, 0.5);
    const PairSeparation* p = r.find(i, j);
    *ratio = p->valley_ratio;
    return p->separated;
  };
  v.require(ph.plan.positions.size() == 24, fmt("n_m = %g", double(ph.plan.positions.size())));
  for (const char* method : {"sms", "fft"}) {
    const auto t0 = Clock::now();
    ReconResult r = std::string(method) == "sms" ? reconstruct_sms(ph.data, ph.psf, cfg)
                                                 : reconstruct_fft(ph.data, ph.psf, cfg);
    const double elapsed = seconds_since(t0);
    double r1 = 0.0, r4 = 0.0;
    const bool s1 = separated(r.a_rec, 0, 1, &r1), s4 = separated(r.a_rec, 2, 3, &r4);
    v.require(s1, std::string(method) + fmt(" separates the 1 px gap (valley ratio %.3f)", r1));
    v.require(s4, std::string(method) + fmt(" separates the 4 px gap (valley ratio %.3f)", r4));
    v.require(elapsed < 300.0, std::string(method) + fmt(" %.1f s < 300 s", elapsed));
    (std::string(method) == "sms" ? g_runs.phantom_sms : g_runs.phantom_fft) = std::move(r);
  }
  double rh = 0.0;
  const bool sh = separated(ph.homogeneous_sum(), 0, 1, &rh);
  v.require(!sh, fmt("homogeneous sum leaves the 1 px gap unresolved (valley ratio %.3f)", rh));
  return v;
}

Verdict agreement() {
  Verdict v;
  const PaddedPhantom ph;
  const ReconConfig cfg = test::AcceptancePhantom::config();
  g_runs.padded_sms = reconstruct_sms(ph.data, ph.psf, cfg);
  g_runs.padded_fft = reconstruct_fft(ph.data, ph.psf, cfg);
  const double r = pearson(g_runs.padded_sms->a_rec, g_runs.padded_fft->a_rec);
  v.require(r > 0.95, fmt("pearson r = %.4f > 0.95", r));
  return v;
}

Verdict speedup() {
  Verdict v;
  ReconConfig cfg = test::AcceptancePhantom::config();
  cfg.n_iter = 100;
  auto best_of = [&](auto&& fn, int reps) {
    double best = 1e300;
    for (int k = 0; k < reps; ++k) {
      const auto t0 = Clock::now();
      fn();
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  const TimingFixture fx(32);
  const double t_sms = best_of([&] { reconstruct_sms(fx.data, fx.psf, cfg); }, 1);
  const double t_fft = best_of([&] { reconstruct_fft(fx.data, fx.psf, cfg); }, 3);
  v.require(t_sms >= 5.0 * t_fft, fmt2("32x32x16: sms %.3f s, fft %.4f s", t_sms, t_fft) +
                                      fmt(", speedup %.1f >= 5", t_sms / t_fft));

  std::vector<double> work, time;
  for (std::size_t n : {16, 32, 64}) {
    const TimingFixture f(n);
    const double m = double(n * n);
    work.push_back(m * std::log(m));
    time.push_back(best_of([&] { reconstruct_fft(f.data, f.psf, cfg); }, 5));
  }
  // least-squares line time = a + b * M log M
  const double k = double(work.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    sx += work[i];
    sy += time[i];
    sxx += work[i] * work[i];
    sxy += work[i] * time[i];
  }
  const double b = (k * sxy - sx * sy) / (k * sxx - sx * sx), a = (sy - b * sx) / k;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    ss_res += std::pow(time[i] - a - b * work[i], 2);
    ss_tot += std::pow(time[i] - sy / k, 2);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  v.require(r2 > 0.9, fmt("M log M fit over 16^2, 32^2, 64^2: R^2 = %.4f > 0.9", r2) +
                          fmt2(" (%.4f s .. %.4f s)", time.front(), time.back()));
  return v;
}

Verdict convergence() {
  Verdict v;
  const std::pair<const char*, const std::optional<ReconResult>*> runs[] = {
      {"phantom sms", &g_runs.phantom_sms},
      {"phantom fft", &g_runs.phantom_fft},
      {"padded sms", &g_runs.padded_sms},
      {"padded fft", &g_runs.padded_fft}};
  for (const auto& [name, run] : runs) {
    if (!run->has_value()) {
      v.require(false, std::string(name) + " available");
      continue;
    }
    const SolveDiagnostics& d = (*run)->diagnostics;
    const double final_obj = d.objective_per_iter.back();
    v.require(final_obj <= d.objective_initial,
              std::string(name) + fmt2(" objective %.4g <= initial %.4g", final_obj, d.objective_initial));
    double best = 1e300;
    for (std::size_t k = 0; k < d.relative_primal_per_iter.size() && k < 400; ++k)
      best = std::min(best, d.relative_primal_per_iter[k]);
    v.require(best < 1e-6, std::string(name) + fmt(" relative primal residual %.2e < 1e-6", best));
  }
  return v;
}

Verdict homogeneity() {
  Verdict v;
  const PlateSpec steel = PlateSpec::stainless_316l();
  for (double t : {0.2, 0.5, 0.7}) {
    const double d = fwhm_diameter(steel, t);
    const Rect roi{0.0, 0.0, 8.0 * d, 4.0 * d};
    const Grid2D g{161, 81, 8.0 * d / 160.0, 4.0 * d / 80.0};
    for (double f : {0.5, 0.4, 1.0 / 3.0, 0.25}) {
      const HomogeneityReport r = homogeneity_check(plan_triangular_grid(roi, f * d), steel, t, g);
      if (!(r.coefficient_of_variation < 0.05 && r.interior_mask.count() > 0))
        v.require(false, fmt2("r_d = %.3f d_FWHM at %.1f s", f, t) + fmt(" cv %.4f < 0.05", r.coefficient_of_variation));
    }
  }
  if (v.pass) v.require(true, "r_d <= d_FWHM/2 plans have interior cv < 0.05");
  const double d = fwhm_diameter(steel, 0.5);
  ScanPlan one;
  one.positions = {{4.0 * d, 2.0 * d}};
  one.roi = Rect{0.0, 0.0, 8.0 * d, 4.0 * d};
  const HomogeneityReport r = homogeneity_check(one, steel, 0.5, Grid2D{161, 81, 8.0 * d / 160.0, 4.0 * d / 80.0});
  v.require(!r.uniform, fmt("single spot fails (cv %.3f)", r.coefficient_of_variation));
  return v;
}

Verdict baselines() {
  Verdict v;
  const std::size_t n_t = 64, k = 5;
  std::vector<Field> s;
  for (std::size_t n = 0; n < n_t; ++n)
    s.push_back(Field::Constant(3, 4, 2.0 * std::cos(2.0 * std::numbers::pi * double(k * n) / double(n_t) + 0.3)));
  const PptResult r = ppt(s, 16.0, 1.25);
  const double ea = (r.amplitude - 2.0).abs().maxCoeff(), ep = (r.phase - 0.3).abs().maxCoeff();
  v.require(ea <= 1e-9 && ep <= 1e-9, fmt2("ppt tone amplitude err %.1e, phase err %.1e <= 1e-9", ea, ep));
  std::mt19937_64 rng(13);
  const Field a = test::random_field(20, 30, rng, -1e3, 1e3);
  v.require((difference_thermogram(a, a) == 0.0).all(), "difference of identical frames is exactly zero");
  return v;
}


Verdict reproducibility() {
  Verdict v;
  test::TempDir tmp("acceptance");
  const test::AcceptancePhantom ph;
  write_dataset(ph.data, tmp / "ds");
  const MeasurementSet back = read_dataset(tmp / "ds");
  bool same = back.n_m() == ph.data.n_m();
  for (std::size_t m = 0; same && m < back.n_m(); ++m)
    same = std::memcmp(back.frames[m].data(), ph.data.frames[m].data(), sizeof(float) * back.frames[m].size()) == 0;
  v.require(same, "dataset round trip is bitwise exact");

  const PaddedPhantom pp;
  ReconConfig cfg = test::AcceptancePhantom::config();
  cfg.n_iter = 100;
  const ReconResult s1 = reconstruct_sms(pp.data, pp.psf, cfg), s2 = reconstruct_sms(pp.data, pp.psf, cfg);
  const ReconResult f1 = reconstruct_fft(pp.data, pp.psf, cfg), f2 = reconstruct_fft(pp.data, pp.psf, cfg);
  v.require((s1.a_rec == s2.a_rec).all() && (f1.a_rec == f2.a_rec).all(), "reconstructions repeat bitwise");

  auto fresh = [&](const std::string& name) {
    const fs::path d = tmp / name;
    fs::copy(tmp / "ds", d);
    return d;
  };
  auto manifest = [](const fs::path& d) {
    std::ifstream in(d / kManifestName);
    return nlohmann::json::parse(in);
  };
  auto store = [](const fs::path& d, const nlohmann::json& j) {
    std::ofstream out(d / kManifestName, std::ios::trunc);
    out << j.dump(2);
  };
  auto raises = [](const fs::path& d, auto tag) {
    try {
      read_dataset(d);
    } catch (const decltype(tag)&) {
      return true;
    } catch (...) {
    }
    return false;
  };

  const fs::path count = fresh("count");
  auto m = manifest(count);
  m["n_m"] = m["n_m"].get<int>() + 1;
  store(count, m);
  const fs::path truncated = fresh("truncated");
  fs::resize_file(truncated / "frame_00003.f32", fs::file_size(truncated / "frame_00003.f32") - 4);
  bool named = false;
  try {
    read_dataset(truncated);
  } catch (const CorruptDatasetError& e) {
    named = e.file() == "frame_00003.f32";
  }
  const fs::path version = fresh("version");
  m = manifest(version);
  m["format_version"] = kFormatVersion + 1;
  store(version, m);
  const fs::path missing = fresh("missing");
  fs::remove(missing / "frame_00000.f32");
  v.require(raises(count, CorruptDatasetError("", "")) && named && raises(version, VersionError("")) &&
                raises(missing, CorruptDatasetError("", "")),
            "count mismatch, truncated payload, missing file and unknown version raise their errors");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"operator correctness", operators},
      {"prox correctness", prox},
      {"kernel validity", psf_validity},
      {"super-resolution at desk scale", super_resolution},
      {"method agreement", agreement},
      {"speedup and scaling", speedup},
      {"convergence diagnostics", convergence},
      {"homogeneity condition", homogeneity},
      {"baselines", baselines},
      {"reproducibility and I/O", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %2zu %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, seconds_since(t0),
                v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
