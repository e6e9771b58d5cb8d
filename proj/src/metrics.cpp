#include "linex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace linex {

void ExplainedSet::validate() const {
  if (examples.empty()) throw ConfigError("explained set is empty");
  if (attributions.size() != examples.size() || blackbox_values.size() != examples.size())
    throw ConfigError("explained set needs one attribution and one black-box value per example");
  if (!neighbors.empty() && neighbors.size() != examples.size())
    throw ConfigError("explained set neighbor lists do not match examples");
}

std::vector<std::vector<std::size_t>> exemplar_neighbors(const std::vector<Vector>& points, std::size_t k) {
  const std::size_t n = points.size();
  if (k >= n) throw ConfigError("exemplar neighborhood size must be smaller than the test set");
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dist.emplace_back((points[i] - points[j]).squaredNorm(), j);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t m = 0; m < k; ++m) out[i].push_back(dist[m].second);
  }
  return out;
}

std::vector<std::vector<std::size_t>> exemplar_neighbors(const Dataset& test, std::size_t k) {
  std::vector<Vector> pts;
  pts.reserve(test.size());
  for (const auto& ex : test.examples) pts.push_back(ex.features);
  return exemplar_neighbors(pts, k);
}

namespace {

void require_neighbors(const ExplainedSet& es) {
  es.validate();
  if (es.neighbors.empty()) throw ConfigError("metric needs exemplar neighborhoods");
  for (const auto& nb : es.neighbors)
    if (nb.empty()) throw ConfigError("every exemplar neighborhood must be nonempty");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> infd_terms(const ExplainedSet& es) {
  es.validate();
  std::vector<double> out(es.size());
  for (std::size_t i = 0; i < es.size(); ++i)
    out[i] = std::abs(es.blackbox_values[i] - es.attributions[i].predict(es.examples[i].features));
  return out;
}

std::vector<double> gi_terms(const ExplainedSet& es) {
  require_neighbors(es);
  std::vector<double> out(es.size());
  for (std::size_t i = 0; i < es.size(); ++i) {
    double s = 0.0;
    for (auto j : es.neighbors[i]) s += std::abs(es.blackbox_values[i] - es.attributions[j].predict(es.examples[i].features));
    out[i] = s / static_cast<double>(es.neighbors[i].size());
  }
  return out;
}

std::vector<double> ci_terms(const ExplainedSet& es) {
  require_neighbors(es);
  std::vector<double> out(es.size());
  for (std::size_t i = 0; i < es.size(); ++i) {
    double s = 0.0;
    for (auto j : es.neighbors[i]) s += (es.attributions[i].coefficients - es.attributions[j].coefficients).lpNorm<1>();
    out[i] = s / static_cast<double>(es.neighbors[i].size());
  }
  return out;
}

double infd(const ExplainedSet& es) { return mean_of(infd_terms(es)); }
double gi(const ExplainedSet& es) { return mean_of(gi_terms(es)); }
double ci(const ExplainedSet& es) { return mean_of(ci_terms(es)); }

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) throw DegenerateClass("correlation needs two equal-length vectors of length >= 2");
  Vector da = a.array() - a.mean();
  Vector db = b.array() - b.mean();
  double na = da.norm(), nb = db.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateClass("correlation undefined for a constant vector");
  return std::clamp(da.dot(db) / (na * nb), -1.0, 1.0);
}

CacResult cac(const ExplainedSet& es, const std::vector<std::size_t>& labels) {
  es.validate();
  if (es.task != Task::classification) throw ConfigError("CAC applies to classification only");
  if (labels.size() != es.size()) throw ConfigError("CAC needs one label per example");

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  const std::size_t classes = by_class.empty() ? 0 : by_class.rbegin()->first + 1;

  CacResult r;
  r.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    auto it = by_class.find(c);
    if (it == by_class.end() || it->second.size() < 2) {
      r.skipped_classes.push_back(c);
      continue;
    }
    const auto d = es.examples.front().features.size();
    Vector mean_x = Vector::Zero(d), mean_e = Vector::Zero(d);
    for (auto i : it->second) {
      mean_x += es.examples[i].features;
      mean_e += es.attributions[i].coefficients;
    }
    mean_x /= static_cast<double>(it->second.size());
    mean_e /= static_cast<double>(it->second.size());
    try {
      double rho = pearson(mean_e, mean_x);
      r.per_class[c] = rho;
      sum += rho;
      ++used;
    } catch (const DegenerateClass&) {
      r.skipped_classes.push_back(c);
    }
  }
  if (used == 0) throw DegenerateClass("every class is degenerate for CAC");
  r.value = sum / static_cast<double>(used);
  return r;
}

double upsilon(const std::vector<Vector>& attributions) {
  if (attributions.empty()) throw ConfigError("unidirectionality needs at least one attribution");
  const auto d = attributions.front().size();
  if (d == 0) throw ConfigError("unidirectionality needs d >= 1");
  double total = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    int signed_count = 0;
    for (const auto& a : attributions) {
      if (a.size() != d) throw ConfigError("attributions differ in length");
      signed_count += (a[j] > 0.0) - (a[j] < 0.0);
    }
    total += std::abs(signed_count);
  }
  return total / (static_cast<double>(attributions.size()) * static_cast<double>(d));
}

std::vector<double> upsilon_neighbor_terms(const ExplainedSet& es) {
  require_neighbors(es);
  std::vector<double> out(es.size());
  for (std::size_t i = 0; i < es.size(); ++i) {
    std::vector<Vector> group{es.attributions[i].coefficients};
    for (auto j : es.neighbors[i]) group.push_back(es.attributions[j].coefficients);
    out[i] = upsilon(group);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ConfigError("incomplete beta needs positive shape parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw ConfigError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

double paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("paired t-test needs equal-length samples of size >= 2");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  double mean = mean_of(diff);
  double ss = 0.0;
  for (double v : diff) ss += (v - mean) * (v - mean);
  double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) throw DegenerateVariance("all paired differences are equal");
  double t = mean / std::sqrt(var / static_cast<double>(n));
  return student_t_two_sided(t, static_cast<double>(n - 1));
}

MeanSem mean_sem(const std::vector<double>& values) {
  MeanSem r;
  if (values.empty()) return r;
  r.mean = mean_of(values);
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.sem = std::sqrt(ss / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
  return r;
}

}  // namespace linex
