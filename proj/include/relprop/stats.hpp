#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relprop/tensor.hpp"

namespace relprop::stats {

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction,
/// switching to 1 - I_{1-x}(b, a) on the slowly converging side.
/// Throws NumericError if the fraction fails to converge.
double regularized_incomplete_beta(double a, double b, double x);

/// Upper tail P(T > t) of Student's t with df degrees of freedom.
double student_t_sf(double t, double df);
/// Two-sided p-value P(|T| >= |t|).
double student_t_two_sided(double t, double df);
/// Upper tail P(F > f) of the F distribution.
double f_sf(double f, double df1, double df2);

struct TestResult {
  std::string effect;
  double statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;  // 0 for single-df statistics (t)
  double p_value = 1.0;
  /// Zero-variance data: statistic reported as 0 and p as 1.
  bool degenerate = false;
};

/// Sample correlation, clamped to [-1, 1]. Returns 0 when exactly one input
/// is constant; throws UndefinedStatistic when both are.
double pearson(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const float> x, std::span<const float> y);

/// Student one-sample t-test, two-sided. Throws UndefinedStatistic on zero
/// sample variance.
TestResult t_test_one_sample(std::span<const double> samples, double mu0);
/// Same test from summary numbers (sem = sd / sqrt(n)).
TestResult t_test_from_summary(double mean, double sem, std::size_t n, double mu0);
/// Paired t-test: one-sample test on x - y against 0.
TestResult t_test_paired(std::span<const double> x, std::span<const double> y);
/// Pooled-variance two-sample t-test.
TestResult t_test_two_sample(std::span<const double> x, std::span<const double> y);

/// Balanced two-factor table: values[a][b][replicate].
using Table3 = std::vector<std::vector<std::vector<double>>>;

struct AnovaSums {
  double ss_a = 0.0, ss_b = 0.0, ss_ab = 0.0, ss_error = 0.0, ss_total = 0.0;
};

struct TwoWayResult {
  TestResult factor_a;
  TestResult factor_b;
  TestResult interaction;
  AnovaSums sums;
};

/// Fixed-effects two-way ANOVA with interaction. Needs a balanced table
/// with at least 2 levels per factor and 2 replicates per cell.
TwoWayResult anova_two_way(const Table3& values);

/// One-way ANOVA over k groups, each with at least 2 samples.
TestResult anova_one_way(const std::vector<std::vector<double>>& groups);

/// min(1, p * m) for each of the m p-values.
std::vector<double> bonferroni(std::span<const double> p_values);

struct SimilarityMatrix {
  std::vector<std::string> model_ids;
  std::vector<double> values;  // row-major n x n

  std::size_t size() const { return model_ids.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * model_ids.size() + j]; }
};

/// maps[m][i] is model m's relevance map for image i. Entry (m, n) is the
/// mean over images of pearson(map_m_i, map_n_i). Identical vectors score 1
/// and pairs of distinct constant maps score 0.
SimilarityMatrix similarity_matrix(const std::vector<std::string>& model_ids,
                                   const std::vector<std::vector<Tensor>>& maps);

}  // namespace relprop::stats
