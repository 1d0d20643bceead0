#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oct1d {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t shapes = 5;  // random shapes per family
  std::uint64_t seed = 0;
  std::vector<std::string> families;  // empty: all
};

struct GradCheckResult {
  std::string family;
  std::size_t shapes = 0;
  std::size_t entries = 0;  // gradient elements compared
  double max_rel_error = 0.0;
  std::string worst;  // location of max_rel_error
  bool passed = false;
};

/// conv1d, avg_pool1d, upsample1d, batch_norm1d, lstm, attention, dense,
/// octconv.hh, octconv.hl, octconv.lh, octconv.ll, softmax_cross_entropy.
const std::vector<std::string>& gradcheck_families();

/// Central finite differences against the tape gradient of a random linear
/// functional of each op's output, in double precision. The error of one
/// element is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {});

/// One line per family: name, shapes, entries, max relative error, PASS/FAIL.
std::string gradcheck_report(const std::vector<GradCheckResult>& results);

}  // namespace oct1d
