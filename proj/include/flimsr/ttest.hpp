#pragma once

#include <span>
#include <string>

namespace flimsr {

/// Regularized incomplete beta I_x(a, b), evaluated with a Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

enum class MetricDirection { higher_is_better, lower_is_better };

enum class Verdict { significant_improvement, significant_degradation, not_significant };

std::string to_string(Verdict v);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  Verdict verdict = Verdict::not_significant;
  bool zero_variance = false;  // p reported as the 0 sentinel
};

inline constexpr double kSignificance = 0.05;

/// Paired two-sided t-test on d = a - b. The verdict reads "a is better than b":
/// p <= 0.05 with t > 0 is an improvement for higher-is-better metrics, and t < 0
/// is an improvement for lower-is-better metrics. A constant nonzero difference
/// has no sampling variance; it is reported as significant with p = 0.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b,
                         MetricDirection direction = MetricDirection::higher_is_better);

}  // namespace flimsr
