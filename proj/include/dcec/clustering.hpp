#ifndef DCEC_CLUSTERING_HPP
#define DCEC_CLUSTERING_HPP

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dcec/tensor.hpp"

namespace dcec {

// Cluster centroids in embedding space, shape [k, embed_dim].
struct ClusterHead {
  TensorF centroids;

  int k() const { return static_cast<int>(centroids.dim(0)); }
  Index embed_dim() const { return centroids.dim(1); }
};

template <typename Scalar>
struct KmeansResult {
  MatrixRM<Scalar> centroids;          // [k, d]
  std::vector<int> labels;             // [n]
  double inertia = 0.0;                // sum of squared distances, winning restart
  std::vector<double> inertia_trace;   // per Lloyd iteration of the winning restart
};

namespace detail {

template <typename Scalar>
MatrixRM<Scalar> kmeanspp_seed(const MatrixRM<Scalar>& pts, Index k, std::mt19937& rng) {
  const Index n = pts.rows();
  MatrixRM<Scalar> centroids(k, pts.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = pts.row(first(rng));

  Eigen::VectorXd dist2(n);
  for (Index i = 0; i < n; ++i)
    dist2[i] = (pts.row(i) - centroids.row(0)).template cast<double>().squaredNorm();

  for (Index j = 1; j < k; ++j) {
    const double total = dist2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (Index i = 0; i < n; ++i) {
        r -= dist2[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
        pick = i;  // numeric slack: fall back to the last point
      }
    } else {
      pick = first(rng);  // all remaining distances zero (duplicate points)
    }
    centroids.row(j) = pts.row(pick);
    for (Index i = 0; i < n; ++i)
      dist2[i] = std::min(
          dist2[i], (pts.row(i) - centroids.row(j)).template cast<double>().squaredNorm());
  }
  return centroids;
}

// One full Lloyd descent from a k-means++ seed drawn from `rng`.
template <typename Scalar>
KmeansResult<Scalar> lloyd_once(const MatrixRM<Scalar>& pts, Index k, std::mt19937& rng,
                                int max_iter) {
  const Index n = pts.rows();
  const Index d = pts.cols();
  KmeansResult<Scalar> res;
  res.centroids = kmeanspp_seed(pts, k, rng);
  res.labels.assign(static_cast<std::size_t>(n), -1);

  std::vector<Index> count(static_cast<std::size_t>(k), 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment: nearest centroid, ties to the lowest index.
    bool changed = false;
    double inertia = 0.0;
    std::fill(count.begin(), count.end(), Index{0});
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < k; ++j) {
        const double dd = (pts.row(i) - res.centroids.row(j)).template cast<double>().squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<int>(j);
        }
      }
      if (res.labels[static_cast<std::size_t>(i)] != best) changed = true;
      res.labels[static_cast<std::size_t>(i)] = best;
      ++count[static_cast<std::size_t>(best)];
      inertia += best_d;
    }

    // Repair empty clusters: re-seed each on the point farthest from its
    // current centroid, skipping clusters that would empty in turn.
    for (Index j = 0; j < k; ++j) {
      if (count[static_cast<std::size_t>(j)] != 0) continue;
      Index worst = -1;
      double worst_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int owner = res.labels[static_cast<std::size_t>(i)];
        if (count[static_cast<std::size_t>(owner)] < 2) continue;
        const double dd =
            (pts.row(i) - res.centroids.row(owner)).template cast<double>().squaredNorm();
        if (dd > worst_d) {
          worst_d = dd;
          worst = i;
        }
      }
      if (worst < 0) continue;  // nothing stealable; leave the cluster empty
      --count[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(worst)])];
      res.labels[static_cast<std::size_t>(worst)] = static_cast<int>(j);
      ++count[static_cast<std::size_t>(j)];
      res.centroids.row(j) = pts.row(worst);
      inertia -= worst_d;  // the stolen point now sits exactly on its centroid
      changed = true;
    }

    res.inertia = inertia;
    res.inertia_trace.push_back(inertia);
    if (!changed) break;

    // Update: centroid = mean of assigned points (all clusters non-empty here
    // unless repair found nothing stealable, in which case keep the old row).
    MatrixRM<double> sums = MatrixRM<double>::Zero(k, d);
    for (Index i = 0; i < n; ++i)
      sums.row(res.labels[static_cast<std::size_t>(i)]) += pts.row(i).template cast<double>();
    for (Index j = 0; j < k; ++j)
      if (count[static_cast<std::size_t>(j)] > 0)
        res.centroids.row(j) =
            (sums.row(j) / double(count[static_cast<std::size_t>(j)])).template cast<Scalar>();
  }
  return res;
}

}  // namespace detail

// Lloyd's k-means with k-means++ seeding; `restarts` independent descents
// drawn from one sequential seed stream, keeping the minimum-inertia run
// (so restart r of a longer run reproduces restart r of a shorter one).
template <typename Derived>
KmeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k,
                                              int restarts, std::uint64_t seed,
                                              int max_iter = 100) {
  using Scalar = typename Derived::Scalar;
  const MatrixRM<Scalar> pts = points.derived();
  if (k < 1) throw ShapeError("kmeans: k must be >= 1");
  if (restarts < 1) throw ShapeError("kmeans: restarts must be >= 1");
  if (pts.rows() < k)
    throw ShapeError("kmeans: " + std::to_string(pts.rows()) + " points cannot fill k=" +
                     std::to_string(k) + " clusters");

  std::mt19937 rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
  KmeansResult<Scalar> best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KmeansResult<Scalar> run = detail::lloyd_once(pts, k, rng, max_iter);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

// Student's-t (degree 1) soft assignment: q_ij proportional to
// 1 / (1 + |z_i - mu_j|^2), rows normalized.
template <typename DerivedZ, typename DerivedC>
MatrixRM<typename DerivedZ::Scalar> soft_assign(const Eigen::MatrixBase<DerivedZ>& z,
                                                const Eigen::MatrixBase<DerivedC>& centroids) {
  using Scalar = typename DerivedZ::Scalar;
  if (z.cols() != centroids.cols())
    throw ShapeError("soft_assign: embedding dim " + std::to_string(z.cols()) +
                     " vs centroid dim " + std::to_string(centroids.cols()));
  const Index n = z.rows(), k = centroids.rows();
  MatrixRM<Scalar> q(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j)
      q(i, j) = Scalar(1) / (Scalar(1) + (z.row(i) - centroids.row(j)).squaredNorm());
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

// Auxiliary target: p_ij = (q_ij^2 / f_j) / sum_j'(q_ij'^2 / f_j'),
// f_j = sum_i q_ij (soft cluster frequency).
template <typename Derived>
MatrixRM<typename Derived::Scalar> target_distribution(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  MatrixRM<Scalar> p = q.derived().array().square().matrix();
  const Eigen::RowVectorX<Scalar> freq = q.colwise().sum();
  p.array().rowwise() /= freq.array();
  for (Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  return p;
}

// KL divergence sum_ij p log(p/q); zero p entries contribute nothing.
template <typename DerivedP, typename DerivedQ>
double kl_loss(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols())
    throw ShapeError("kl_loss: P and Q shapes differ");
  double total = 0.0;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      const double pij = static_cast<double>(p(i, j));
      if (pij > 0.0) total += pij * std::log(pij / static_cast<double>(q(i, j)));
    }
  return total;
}

template <typename Scalar>
struct ClusteringGrads {
  MatrixRM<Scalar> d_z, d_centroids;
};

// Exact gradients of kl_loss(P, soft_assign(Z, centroids)) with P constant:
// dL/dz_i = 2 sum_j (1+|z_i-mu_j|^2)^-1 (p_ij - q_ij)(z_i - mu_j), and the
// centroid gradient is the negated sum of the same terms over i.
template <typename Scalar>
ClusteringGrads<Scalar> clustering_gradients(const MatrixRM<Scalar>& z,
                                             const MatrixRM<Scalar>& centroids,
                                             const MatrixRM<Scalar>& p,
                                             const MatrixRM<Scalar>& q) {
  const Index n = z.rows(), k = centroids.rows();
  if (z.cols() != centroids.cols() || p.rows() != n || q.rows() != n || p.cols() != k ||
      q.cols() != k)
    throw ShapeError("clustering_gradients: inconsistent operand shapes");

  ClusteringGrads<Scalar> g{MatrixRM<Scalar>::Zero(n, z.cols()),
                            MatrixRM<Scalar>::Zero(k, z.cols())};
  Eigen::RowVectorX<Scalar> diff(z.cols());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) {
      diff = z.row(i) - centroids.row(j);
      const Scalar kernel = Scalar(1) / (Scalar(1) + diff.squaredNorm());
      const Scalar w = Scalar(2) * kernel * (p(i, j) - q(i, j));
      g.d_z.row(i) += w * diff;
      g.d_centroids.row(j) -= w * diff;
    }
  }
  return g;
}

// Row-wise argmax; ties go to the lowest cluster index.
template <typename Derived>
std::vector<int> hard_assign(const Eigen::MatrixBase<Derived>& q) {
  std::vector<int> labels(static_cast<std::size_t>(q.rows()));
  for (Index i = 0; i < q.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < q.cols(); ++j)
      if (q(i, j) > q(i, best)) best = j;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace dcec

#endif  // DCEC_CLUSTERING_HPP
