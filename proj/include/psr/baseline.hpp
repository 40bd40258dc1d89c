#pragma once

#include <vector>

#include "psr/grid.hpp"

namespace psr {

Field difference_thermogram(const Field& data, const Field& reference);

struct PptResult {
  Field amplitude;  // single-sided: 2 |X_k| / n_t
  Field phase;      // arg X_k in (-pi, pi]
  double frequency = 0.0;  // centre of the selected bin, Hz
  std::size_t bin = 0;
};

struct PptOptions {
  bool half_cosine_window = false;
};

// Pulse-phase thermography: per-pixel DFT of the transient at the bin nearest
// to `frequency`, X_k = sum_n x_n exp(-2 pi i k n / n_t).
PptResult ppt(const std::vector<Field>& series, double frame_rate, double frequency, const PptOptions& options = {});

}  // namespace psr
