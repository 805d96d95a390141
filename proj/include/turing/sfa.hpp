#ifndef TURING_SFA_HPP
#define TURING_SFA_HPP

#include <string>
#include <vector>

#include "turing/attack.hpp"
#include "turing/fourier.hpp"

namespace turing::fourier {

struct SfaRow {
  std::string rule;
  std::vector<int> kept;  // surviving coefficients per channel
  int kept_total = 0;
  double fr_before = 0;
  double fr_after = 0;
  double max_imag_residue = 0;
  Tensor3 filtered;  // rescaled to ||.||_inf = budget
};

struct SfaReport {
  double budget = 0;
  double fr_before = 0;
  std::vector<SfaRow> rows;
};

// Rescales a non-zero tensor so its largest magnitude equals `budget`.
Perturbation scale_to_budget(const Tensor3& pattern, double budget);

// Compares the pattern against its Fourier-thresholded versions, each scaled
// to the same max-norm budget before measuring the fooling rate.
SfaReport sfa_report(const Tensor3& pattern, const attack::FoolingRateEvaluator& evaluator,
                     const std::vector<ThresholdRule>& rules, double budget);

}  // namespace turing::fourier

#endif  // TURING_SFA_HPP
