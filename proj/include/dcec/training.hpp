#ifndef DCEC_TRAINING_HPP
#define DCEC_TRAINING_HPP
// Self-training clustering loops: the joint reconstruction+clustering
// optimizer, the encoder-only variant, and the k-means-on-embeddings baseline.

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dcec/adamax.hpp"
#include "dcec/autoencoder.hpp"
#include "dcec/batching.hpp"
#include "dcec/clustering.hpp"
#include "dcec/tensor.hpp"

namespace dcec {

struct TrainConfig {
  double lambda = 0.1;          // weight of the reconstruction term in the joint loss
  long update_interval = 140;   // mini-batch steps between full-dataset target refreshes
  double tolerance = 1e-3;      // stop when the label-change fraction drops below this
  int pretrain_epochs = 200;    // used by pipelines that pretrain before clustering
  Index batch_size = 128;
  int kmeans_restarts = 20;
  long max_iterations = 20000;
  std::uint64_t seed = 0;
};

// Full-dataset snapshot taken at every target refresh.
struct RefreshPoint {
  long iteration = 0;
  double total_loss = 0.0;
  double rec_loss = 0.0;      // NaN when the decoder is not part of training
  double clu_loss = 0.0;      // mean per-sample KL against the freshly computed target
  double label_change = 0.0;  // NaN at the first refresh (no predecessor to compare with)
};

struct TrainResult {
  ClusterHead head;
  std::vector<int> labels;
  std::vector<RefreshPoint> history;
  long iterations = 0;
  bool converged = false;
};

namespace detail {

// Shared engine behind joint_train and dec_train. `with_decoder` selects the
// joint objective lambda*L_rec + (1-lambda)*L_clu over all parameters; without
// it the objective is the clustering term alone over encoder + centroids, and
// decoder parameters are never touched. When the clustering term has zero
// weight the centroids are left out of the optimizer entirely, so they stay
// bit-identical to their k-means initialization.
inline TrainResult self_train(CaeModel<float>& model, const TensorF& images, int k,
                              const TrainConfig& cfg, bool with_decoder) {
  const char* tag = with_decoder ? "joint_train" : "dec_train";
  if (images.rank() != 4 || images.dim(0) < 1)
    throw ShapeError(std::string(tag) + ": images must be a non-empty [n,s,s,c] tensor");
  const Index n = images.dim(0);
  if (n < k) throw ShapeError(std::string(tag) + ": dataset smaller than k");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0)
    throw ShapeError(std::string(tag) + ": lambda must lie in [0,1]");
  if (cfg.update_interval < 1) throw ShapeError(std::string(tag) + ": update_interval must be >= 1");
  if (cfg.max_iterations < 0) throw ShapeError(std::string(tag) + ": negative max_iterations");

  TrainResult out;
  {
    const TensorF z0 = encode_all(model, images, cfg.batch_size);
    const KmeansResult<float> km = kmeans(z0.matrix(), k, cfg.kmeans_restarts, cfg.seed);
    out.head.centroids = TensorF({static_cast<Index>(k), z0.dim(1)});
    out.head.centroids.matrix() = km.centroids;
  }

  const bool use_clustering_term = !with_decoder || cfg.lambda < 1.0;
  std::vector<TensorF*> params = with_decoder ? model.params() : model.encoder_params();
  if (use_clustering_term) params.push_back(&out.head.centroids);
  AdamaxState<float> opt(params);

  const auto nan = std::numeric_limits<double>::quiet_NaN();
  MatrixXfRM p_full;  // frozen targets, one row per sample, refreshed every update_interval
  std::vector<int> prev_labels;

  // Recomputes Q, P and hard labels over the whole dataset, appends a history
  // row, and returns the fraction of labels that moved since the last refresh.
  const auto refresh = [&](long iteration) {
    const TensorF z = encode_all(model, images, cfg.batch_size);
    const MatrixXfRM q = soft_assign(z.matrix(), out.head.centroids.matrix());
    p_full = target_distribution(q);
    std::vector<int> labels = hard_assign(q);

    double change = nan;
    if (!prev_labels.empty()) {
      Index moved = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) moved += labels[i] != prev_labels[i];
      change = static_cast<double>(moved) / static_cast<double>(n);
    }

    const double clu = kl_loss(p_full, q) / static_cast<double>(n);
    double rec = nan;
    if (with_decoder) {
      rec = 0.0;
      for (const auto& batch : epoch_batches(n, cfg.batch_size, /*shuffle=*/false, 0, 0)) {
        const TensorF xb = gather_rows(images, batch);
        const TensorF zb = gather_rows(z, batch);
        rec += reconstruction_loss(decode(model, zb), xb) * static_cast<double>(batch.size());
      }
      rec /= static_cast<double>(n);
    }
    const double total = with_decoder ? cfg.lambda * rec + (1.0 - cfg.lambda) * clu : clu;
    if (!std::isfinite(total))
      throw NumericError(std::string(tag) + ": loss diverged at iteration " +
                         std::to_string(iteration));

    out.history.push_back({iteration, total, rec, clu, change});
    out.labels = labels;
    prev_labels = std::move(labels);
    return change;
  };

  long it = 0;
  bool done = false;
  for (std::uint64_t epoch = 0; it < cfg.max_iterations && !done; ++epoch) {
    for (const auto& batch : epoch_batches(n, cfg.batch_size, /*shuffle=*/true, cfg.seed, epoch)) {
      if (it >= cfg.max_iterations) break;
      if (it % cfg.update_interval == 0) {
        const double change = refresh(it);
        if (!std::isnan(change) && change < cfg.tolerance) {
          out.converged = true;
          out.iterations = it;
          done = true;
          break;
        }
      }

      const Index b = static_cast<Index>(batch.size());
      const TensorF xb = gather_rows(images, batch);
      CaeForward<float> fwd;
      const TensorF z = encode(model, xb, &fwd);

      const MatrixXfRM zm = z.matrix();
      const MatrixXfRM cm = out.head.centroids.matrix();
      const MatrixXfRM qb = soft_assign(zm, cm);
      MatrixXfRM pb(b, static_cast<Index>(k));
      for (Index r = 0; r < b; ++r) pb.row(r) = p_full.row(batch[static_cast<std::size_t>(r)]);

      TensorF d_z({b, z.dim(1)});
      TensorF d_centroids({static_cast<Index>(k), z.dim(1)});
      double clu_b = 0.0;
      if (use_clustering_term) {
        const float cscale = static_cast<float>(
            (with_decoder ? 1.0 - cfg.lambda : 1.0) / static_cast<double>(b));
        const ClusteringGrads<float> cg = clustering_gradients(zm, cm, pb, qb);
        d_z.matrix() = cg.d_z * cscale;
        d_centroids.matrix() = cg.d_centroids * cscale;
        clu_b = kl_loss(pb, qb) / static_cast<double>(b);
      }

      const TensorF* d_embed = use_clustering_term ? &d_z : nullptr;
      CaeGrads<float> grads;
      double rec_b = 0.0;
      if (with_decoder && cfg.lambda > 0.0) {
        const TensorF x_hat = decode(model, z, &fwd);
        const TensorF d_out = reconstruction_loss_grad(x_hat, xb, static_cast<float>(cfg.lambda));
        rec_b = reconstruction_loss(x_hat, xb);
        grads = cae_backward(model, fwd, &d_out, d_embed);
      } else {
        grads = cae_backward(model, fwd, nullptr, d_embed);
      }
      const double batch_loss =
          with_decoder ? cfg.lambda * rec_b + (1.0 - cfg.lambda) * clu_b : clu_b;
      if (!std::isfinite(batch_loss))
        throw NumericError(std::string(tag) + ": loss diverged at iteration " +
                           std::to_string(it));

      std::vector<const TensorF*> gptrs = with_decoder ? grads.list() : grads.encoder_list();
      if (use_clustering_term) gptrs.push_back(&d_centroids);
      adamax_step(params, gptrs, opt);
      ++it;
    }
  }

  if (!done) {
    out.iterations = cfg.max_iterations;
    const double change = refresh(cfg.max_iterations);
    out.converged = !std::isnan(change) && change < cfg.tolerance;
  }
  return out;
}

}  // namespace detail

// Joint self-training: k-means-initialized centroids, then mini-batch AdaMax
// on lambda*L_rec + (1-lambda)*L_clu over autoencoder weights and centroids.
// Q is recomputed from the live embedding per batch; P rows are the frozen
// full-dataset targets indexed by sample id and refreshed, together with hard
// labels and a history row, every update_interval steps (first at step 0).
// Training stops once the fraction of labels changed between two consecutive
// refreshes falls below tolerance, or at max_iterations (with a final refresh).
inline TrainResult joint_train(CaeModel<float>& model, const TensorF& images, int k,
                               const TrainConfig& cfg) {
  return detail::self_train(model, images, k, cfg, /*with_decoder=*/true);
}

// Encoder-only self-training: same loop, but the decoder is dropped after
// initialization and the objective is the clustering term alone. Decoder
// parameters are left bit-identical; history rec_loss is NaN.
inline TrainResult dec_train(CaeModel<float>& model, const TensorF& images, int k,
                             const TrainConfig& cfg) {
  return detail::self_train(model, images, k, cfg, /*with_decoder=*/false);
}

// Baseline: k-means on the embeddings of a (pre)trained model, no fine-tuning.
inline TrainResult cae_kmeans(const CaeModel<float>& model, const TensorF& images, int k,
                              int restarts, std::uint64_t seed) {
  if (images.rank() != 4 || images.dim(0) < 1)
    throw ShapeError("cae_kmeans: images must be a non-empty [n,s,s,c] tensor");
  const TensorF z = encode_all(model, images, 256);
  const KmeansResult<float> km = kmeans(z.matrix(), k, restarts, seed);
  TrainResult out;
  out.head.centroids = TensorF({static_cast<Index>(k), z.dim(1)});
  out.head.centroids.matrix() = km.centroids;
  out.labels = km.labels;
  out.converged = true;
  return out;
}

}  // namespace dcec

#endif  // DCEC_TRAINING_HPP
