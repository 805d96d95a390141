#include "turing/sfa.hpp"

#include "turing/error.hpp"

namespace turing::fourier {

Perturbation scale_to_budget(const Tensor3& pattern, double budget) {
  require(budget > 0.0, "sfa: budget must be positive");
  const double peak = pattern.max_abs();
  if (peak == 0.0) throw NumericalError("sfa: cannot rescale an all-zero pattern");
  Perturbation eps = pattern;
  eps.flat() *= budget / peak;
  return eps;
}

SfaReport sfa_report(const Tensor3& pattern, const attack::FoolingRateEvaluator& evaluator,
                     const std::vector<ThresholdRule>& rules, double budget) {
  require(!rules.empty(), "sfa: no threshold rules");
  SfaReport report;
  report.budget = budget;
  report.fr_before = evaluator.evaluate(scale_to_budget(pattern, budget)).fooling_rate;
  for (const ThresholdRule& rule : rules) {
    const FilterResult filtered = threshold_filter(pattern, rule);
    SfaRow row;
    row.rule = rule.name();
    row.kept = filtered.kept;
    for (int k : filtered.kept) row.kept_total += k;
    row.max_imag_residue = filtered.max_imag_residue;
    row.filtered = scale_to_budget(filtered.pattern, budget);
    row.fr_before = report.fr_before;
    row.fr_after = evaluator.evaluate(row.filtered).fooling_rate;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace turing::fourier
