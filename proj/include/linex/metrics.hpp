#pragma once

#include <optional>
#include <vector>

#include "linex/core.hpp"

namespace linex {

/// Explanations of a test set plus everything the stability metrics need.
/// Features are in the standardized space the attributions live in.
struct ExplainedSet {
  std::vector<Example> examples;
  std::vector<Attribution> attributions;
  std::vector<double> blackbox_values;          // y_b(x)
  std::vector<std::vector<std::size_t>> neighbors;  // exemplar neighborhoods, self excluded
  Task task = Task::classification;

  std::size_t size() const { return examples.size(); }
  void validate() const;
};

/// Indices of the k nearest other points by Euclidean distance; ties go to the
/// lower index.
std::vector<std::vector<std::size_t>> exemplar_neighbors(const std::vector<Vector>& points, std::size_t k);
std::vector<std::vector<std::size_t>> exemplar_neighbors(const Dataset& test, std::size_t k);

/// Per-example terms; the metric is their mean.
std::vector<double> infd_terms(const ExplainedSet& es);
std::vector<double> gi_terms(const ExplainedSet& es);
std::vector<double> ci_terms(const ExplainedSet& es);

double infd(const ExplainedSet& es);
double gi(const ExplainedSet& es);
double ci(const ExplainedSet& es);

struct CacResult {
  double value = 0.0;
  std::vector<std::size_t> skipped_classes;  // degenerate: correlation undefined
  std::vector<double> per_class;             // NaN for skipped classes
};

/// Mean over classes of the Pearson correlation between the class-mean
/// attribution and the class-mean input. Throws DegenerateClass only when
/// every class is degenerate.
CacResult cac(const ExplainedSet& es, const std::vector<std::size_t>& labels);

/// Pearson correlation; throws DegenerateClass when either side is constant.
double pearson(const Vector& a, const Vector& b);

/// Sign agreement across m attributions: (1/(m d)) sum_i |sum_j sgn(w_j[i])|.
double upsilon(const std::vector<Vector>& attributions);

/// Per-example unidirectionality over the example's own attribution and those
/// of its exemplar neighbors.
std::vector<double> upsilon_neighbor_terms(const ExplainedSet& es);

/// Two-sided paired t-test p-value. Throws DegenerateVariance when every
/// difference is equal.
double paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Two-sided tail P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};
/// Mean and standard error (sample std / sqrt(m)); sem is 0 for one value.
MeanSem mean_sem(const std::vector<double>& values);

}  // namespace linex
