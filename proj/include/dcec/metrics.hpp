#ifndef DCEC_METRICS_HPP
#define DCEC_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "dcec/tensor.hpp"

namespace dcec {

namespace detail {

// Remaps arbitrary non-negative ids onto 0..k-1 in order of first appearance.
inline std::vector<int> compact_ids(const std::vector<int>& ids, int* k_out) {
  std::unordered_map<int, int> remap;
  std::vector<int> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) throw ShapeError("cluster/label ids must be non-negative");
    auto [it, fresh] = remap.emplace(ids[i], static_cast<int>(remap.size()));
    (void)fresh;
    out[i] = it->second;
  }
  *k_out = static_cast<int>(remap.size());
  return out;
}

}  // namespace detail

// Evaluation summary for one clustering run over n points.
struct MetricsReport {
  int k = 0;
  Index n = 0;
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  std::optional<double> accuracy;  // present only when ground-truth labels exist
};

// Minimum-cost one-to-one assignment on a square cost matrix (Kuhn-Munkres
// with potentials, O(k^3)). Returns the column assigned to each row.
inline std::vector<int> optimal_assignment(const MatrixXdRM& cost) {
  const Index n = cost.rows();
  if (n < 1 || cost.cols() != n) throw ShapeError("optimal_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw NumericError("optimal_assignment: costs must be finite");

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> min_reduced(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = match[j0];
      Index j1 = 0;
      double delta = kInf;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < min_reduced[j]) {
          min_reduced[j] = cur;
          way[j] = j0;
        }
        if (min_reduced[j] < delta) {
          delta = min_reduced[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          min_reduced[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    while (j0 != 0) {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    }
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(match[j] - 1)] =
      static_cast<int>(j - 1);
  return row_to_col;
}

// Best accuracy over one-to-one cluster-to-label mappings: assignment on the
// negated confusion matrix, zero-padded to square when counts differ.
inline double unsupervised_accuracy(const std::vector<int>& true_labels,
                                    const std::vector<int>& cluster_labels) {
  if (true_labels.size() != cluster_labels.size())
    throw ShapeError("unsupervised_accuracy: label vectors differ in length");
  if (true_labels.empty()) throw ShapeError("unsupervised_accuracy: empty input");

  int k_true = 0, k_cluster = 0;
  const std::vector<int> t = detail::compact_ids(true_labels, &k_true);
  const std::vector<int> c = detail::compact_ids(cluster_labels, &k_cluster);
  const Index m = std::max(k_true, k_cluster);

  MatrixXdRM counts = MatrixXdRM::Zero(m, m);
  for (std::size_t i = 0; i < t.size(); ++i) counts(c[i], t[i]) += 1.0;

  const std::vector<int> mapping = optimal_assignment(-counts);
  double matched = 0.0;
  for (Index q = 0; q < m; ++q) matched += counts(q, mapping[static_cast<std::size_t>(q)]);
  return matched / static_cast<double>(t.size());
}

// Mean silhouette coefficient over all points, exact pairwise Euclidean
// distances. Singletons and a==b ties contribute 0.
template <typename Derived>
double silhouette(const Eigen::MatrixBase<Derived>& points, const std::vector<int>& labels) {
  const Index n = points.rows();
  if (static_cast<Index>(labels.size()) != n)
    throw ShapeError("silhouette: labels do not match point count");
  int k = 0;
  const std::vector<int> lab = detail::compact_ids(labels, &k);
  if (k < 2) throw ShapeError("silhouette: needs at least 2 clusters");

  std::vector<Index> count(static_cast<std::size_t>(k), 0);
  for (int l : lab) ++count[static_cast<std::size_t>(l)];

  double total = 0.0;
  std::vector<double> dist_sum(static_cast<std::size_t>(k));
  for (Index i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (points.row(i) - points.row(j)).template cast<double>().norm();
      dist_sum[static_cast<std::size_t>(lab[static_cast<std::size_t>(j)])] += d;
    }
    const int own = lab[static_cast<std::size_t>(i)];
    if (count[static_cast<std::size_t>(own)] < 2) continue;  // singleton: s_i = 0
    const double a =
        dist_sum[static_cast<std::size_t>(own)] / double(count[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int q = 0; q < k; ++q) {
      if (q == own) continue;
      b = std::min(b, dist_sum[static_cast<std::size_t>(q)] /
                          double(count[static_cast<std::size_t>(q)]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

// Calinski-Harabasz index: between/within dispersion ratio scaled by
// (n-k)/(k-1), traces taken as plain sums of squared deviations.
template <typename Derived>
double calinski_harabasz(const Eigen::MatrixBase<Derived>& points,
                         const std::vector<int>& labels) {
  const Index n = points.rows();
  const Index d = points.cols();
  if (static_cast<Index>(labels.size()) != n)
    throw ShapeError("calinski_harabasz: labels do not match point count");
  int k = 0;
  const std::vector<int> lab = detail::compact_ids(labels, &k);
  if (k < 2 || static_cast<Index>(k) >= n)
    throw ShapeError("calinski_harabasz: needs 2 <= k < n");

  MatrixXdRM centroid = MatrixXdRM::Zero(k, d);
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (Index i = 0; i < n; ++i) {
    centroid.row(lab[static_cast<std::size_t>(i)]) += points.row(i).template cast<double>();
    count[static_cast<std::size_t>(lab[static_cast<std::size_t>(i)])] += 1.0;
  }
  const Eigen::RowVectorXd global = centroid.colwise().sum() / static_cast<double>(n);
  for (int q = 0; q < k; ++q) centroid.row(q) /= count[static_cast<std::size_t>(q)];

  double within = 0.0;
  for (Index i = 0; i < n; ++i)
    within += (points.row(i).template cast<double>() - centroid.row(lab[static_cast<std::size_t>(i)]))
                  .squaredNorm();
  double between = 0.0;
  for (int q = 0; q < k; ++q) between += (centroid.row(q) - global).squaredNorm();

  if (within == 0.0)
    throw NumericError("calinski_harabasz: zero within-cluster dispersion");
  return (between / within) * (static_cast<double>(n - k) / static_cast<double>(k - 1));
}

}  // namespace dcec

#endif  // DCEC_METRICS_HPP
