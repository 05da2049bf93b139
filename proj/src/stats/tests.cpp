#include <algorithm>
#include <cmath>

#include "relprop/error.hpp"
#include "relprop/stats.hpp"

namespace relprop::stats {
namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double ss = 0.0;  // sum of squared deviations
};

Moments moments(std::span<const double> x) {
  Moments m;
  m.n = x.size();
  if (x.empty()) return m;
  double total = 0.0;
  for (double v : x) total += v;
  m.mean = total / static_cast<double>(x.size());
  for (double v : x) m.ss += (v - m.mean) * (v - m.mean);
  return m;
}

TestResult degenerate(std::string effect, double df1, double df2) {
  return {std::move(effect), 0.0, df1, df2, 1.0, true};
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("pearson needs equal-length vectors");
  if (x.size() < 2) throw InvalidInput("pearson needs at least 2 observations");
  // Single pass with running co-moments.
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (x[i] - mx);
    syy += dy * (y[i] - my);
    sxy += dx * (y[i] - my);
  }
  const bool x_const = sxx == 0.0;
  const bool y_const = syy == 0.0;
  if (x_const && y_const) throw UndefinedStatistic("correlation of two constant vectors");
  if (x_const || y_const) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(std::span<const float> x, std::span<const float> y) {
  std::vector<double> xd(x.begin(), x.end()), yd(y.begin(), y.end());
  return pearson(std::span<const double>(xd), std::span<const double>(yd));
}

TestResult t_test_one_sample(std::span<const double> samples, double mu0) {
  if (samples.size() < 2) throw InvalidInput("t-test needs at least 2 samples");
  const auto m = moments(samples);
  if (m.ss == 0.0) throw UndefinedStatistic("t-test on samples with zero variance");
  const double n = static_cast<double>(m.n);
  const double sem = std::sqrt(m.ss / (n - 1.0)) / std::sqrt(n);
  return t_test_from_summary(m.mean, sem, m.n, mu0);
}

TestResult t_test_from_summary(double mean, double sem, std::size_t n, double mu0) {
  if (n < 2) throw InvalidInput("t-test needs at least 2 samples");
  if (!(sem > 0.0)) throw UndefinedStatistic("t-test with zero standard error");
  const double t = (mean - mu0) / sem;
  const double df = static_cast<double>(n - 1);
  return {"one-sample t", t, df, 0.0, student_t_two_sided(t, df), false};
}

TestResult t_test_paired(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("paired t-test needs equal-length samples");
  std::vector<double> diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
  auto r = t_test_one_sample(diff, 0.0);
  r.effect = "paired t";
  return r;
}

TestResult t_test_two_sample(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) throw InvalidInput("two-sample t-test needs 2+ per group");
  const auto mx = moments(x);
  const auto my = moments(y);
  const double df = static_cast<double>(x.size() + y.size() - 2);
  const double pooled = (mx.ss + my.ss) / df;
  if (pooled == 0.0) throw UndefinedStatistic("two-sample t-test with zero pooled variance");
  const double se = std::sqrt(pooled * (1.0 / static_cast<double>(x.size()) +
                                        1.0 / static_cast<double>(y.size())));
  const double t = (mx.mean - my.mean) / se;
  return {"two-sample t", t, df, 0.0, student_t_two_sided(t, df), false};
}

TwoWayResult anova_two_way(const Table3& values) {
  const std::size_t a = values.size();
  if (a < 2) throw InvalidInput("two-way ANOVA needs at least 2 levels of factor A");
  const std::size_t b = values[0].size();
  if (b < 2) throw InvalidInput("two-way ANOVA needs at least 2 levels of factor B");
  const std::size_t r = values[0][0].size();
  if (r < 2) throw InvalidInput("two-way ANOVA needs at least 2 replicates per cell");
  for (const auto& row : values) {
    if (row.size() != b) throw InvalidInput("unbalanced ANOVA table: ragged factor B levels");
    for (const auto& cell : row) {
      if (cell.size() != r) throw InvalidInput("unbalanced ANOVA table: unequal replicates");
    }
  }

  const double na = static_cast<double>(a), nb = static_cast<double>(b),
               nr = static_cast<double>(r);
  std::vector<double> cell(a * b, 0.0), mean_a(a, 0.0), mean_b(b, 0.0);
  double grand = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0.0;
      for (double v : values[i][j]) {
        s += v;
        scale += v * v;
      }
      cell[i * b + j] = s / nr;
      mean_a[i] += s;
      mean_b[j] += s;
      grand += s;
    }
  }
  for (auto& m : mean_a) m /= nb * nr;
  for (auto& m : mean_b) m /= na * nr;
  grand /= na * nb * nr;

  AnovaSums sums;
  for (std::size_t i = 0; i < a; ++i) sums.ss_a += (mean_a[i] - grand) * (mean_a[i] - grand);
  sums.ss_a *= nb * nr;
  for (std::size_t j = 0; j < b; ++j) sums.ss_b += (mean_b[j] - grand) * (mean_b[j] - grand);
  sums.ss_b *= na * nr;
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double inter = cell[i * b + j] - mean_a[i] - mean_b[j] + grand;
      sums.ss_ab += inter * inter;
      for (double v : values[i][j]) {
        sums.ss_error += (v - cell[i * b + j]) * (v - cell[i * b + j]);
        sums.ss_total += (v - grand) * (v - grand);
      }
    }
  }
  sums.ss_ab *= nr;

  const double df_a = na - 1.0, df_b = nb - 1.0, df_ab = df_a * df_b;
  const double df_e = na * nb * (nr - 1.0);
  TwoWayResult out;
  out.sums = sums;
  // Residual variance at round-off level means the F ratios are meaningless.
  if (sums.ss_error <= 1e-24 * std::max(scale, 1e-300)) {
    out.factor_a = degenerate("A", df_a, df_e);
    out.factor_b = degenerate("B", df_b, df_e);
    out.interaction = degenerate("AxB", df_ab, df_e);
    return out;
  }
  const double mse = sums.ss_error / df_e;
  auto effect = [&](const char* name, double ss, double df) {
    const double f = (ss / df) / mse;
    return TestResult{name, f, df, df_e, f_sf(f, df, df_e), false};
  };
  out.factor_a = effect("A", sums.ss_a, df_a);
  out.factor_b = effect("B", sums.ss_b, df_b);
  out.interaction = effect("AxB", sums.ss_ab, df_ab);
  return out;
}

TestResult anova_one_way(const std::vector<std::vector<double>>& groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw InvalidInput("one-way ANOVA needs at least 2 groups");
  std::vector<Moments> m;
  std::size_t total = 0;
  double scale = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw InvalidInput("one-way ANOVA needs at least 2 samples per group");
    m.push_back(moments(g));
    total += g.size();
    for (double v : g) scale += v * v;
  }
  // Between-group sum of squares from pairwise mean differences:
  // sum_g n_g (m_g - G)^2 == (1/N) sum_{g<h} n_g n_h (m_g - m_h)^2.
  double ss_between = 0.0;
  for (std::size_t g = 0; g < k; ++g) {
    for (std::size_t h = g + 1; h < k; ++h) {
      const double d = m[g].mean - m[h].mean;
      ss_between += static_cast<double>(m[g].n) * static_cast<double>(m[h].n) * d * d;
    }
  }
  ss_between /= static_cast<double>(total);
  double ss_within = 0.0;
  for (const auto& g : m) ss_within += g.ss;

  const double df1 = static_cast<double>(k - 1);
  const double df2 = static_cast<double>(total - k);
  if (ss_within <= 1e-24 * std::max(scale, 1e-300)) return degenerate("group", df1, df2);
  const double f = (ss_between / df1) / (ss_within / df2);
  return {"group", f, df1, df2, f_sf(f, df1, df2), false};
}

std::vector<double> bonferroni(std::span<const double> p_values) {
  std::vector<double> out(p_values.size());
  const auto m = static_cast<double>(p_values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(1.0, p_values[i] * m);
  return out;
}

}  // namespace relprop::stats
