#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "psr/grid.hpp"
#include "psr/phantom.hpp"

namespace psr {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PairSeparation {
  std::size_t first = 0;
  std::size_t second = 0;
  double gap = 0.0;          // edge-to-edge distance of the truth rectangles, m
  bool separated = false;
  double valley_ratio = 1.0;  // (valley - baseline) / (lower peak - baseline), clamped to [0, 1]
  double peak_first = 0.0;
  double peak_second = 0.0;
  double valley = 0.0;
  std::vector<double> profile;
};

struct SupportMetrics {
  double support_iou = 0.0;
  // Distance from each truth centroid to the nearest activated component; empty
  // when nothing is activated.
  std::vector<std::optional<double>> localization_error;
  std::size_t components = 0;
};

struct SeparabilityReport {
  std::vector<PairSeparation> pairs;  // every i < j pair of truth defects
  double baseline = 0.0;              // median of off-defect pixels
  double noise_floor = 0.0;           // baseline + 3 MAD
  double support_iou = 0.0;
  std::vector<std::optional<double>> localization_error;

  const PairSeparation* find(std::size_t i, std::size_t j) const;
};

// Pixels within one pixel (8-neighbourhood) of `mask`.
Mask dilate(const Mask& mask);

// Union of all defect masks.
Mask truth_mask(const DefectMap& truth);

// Median + 3 MAD of pixels outside the dilated truth (all pixels when none
// remain); `baseline` receives the median.
double noise_floor(const Field& map, const DefectMap& truth, double* baseline = nullptr);

// Profile along the segment joining the truth centroids, extended to cover
// both rectangles, with nearest-pixel sampling at quarter-pixel steps.
// A pair is separated when both peaks (maxima on either side of the midpoint)
// exceed the noise floor and the minimum between them lies below
// valley_threshold times the lower peak, all measured from the baseline.
SeparabilityReport separability(const Field& map, const DefectMap& truth, double valley_threshold = 0.5,
                                double activation_threshold_frac = 0.5);

// Binarise at frac * max(map) (strictly above). With T the truth pixels and D
// its one-pixel dilation: IoU = |act & D| / (|act & D| + |act \ D| + |T \ act|),
// so activations within one pixel of a defect are not penalised.
SupportMetrics support_metrics(const Field& map, const DefectMap& truth, double activation_threshold_frac);

// 8-connected component labels (0 = background), returns the count.
std::size_t label_components(const Mask& mask, Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& labels);

double pearson(const Field& a, const Field& b);

}  // namespace psr
