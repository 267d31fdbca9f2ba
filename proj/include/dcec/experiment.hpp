#ifndef DCEC_EXPERIMENT_HPP
#define DCEC_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcec/metrics.hpp"
#include "dcec/training.hpp"

namespace dcec {

// One cell of a sweep or ablation table. Failed cells keep their error text
// and leave the numeric fields untouched so the rest of the table survives.
struct RunRecord {
  std::string method;  // dcec | dec | cae-kmeans
  int k = 0;
  double lambda = 0.0;
  double silhouette = 0.0;
  double chi = 0.0;             // raw Calinski-Harabasz index
  double chi_normalized = 0.0;  // chi / max chi over the table's succeeded rows
  std::optional<double> accuracy;
  long iterations = 0;
  bool converged = false;
  double wall_time_s = 0.0;
  std::string error;  // empty on success
};

// Per-lambda aggregate over the swept k range (succeeded cells only).
struct AblationRow {
  double lambda = 0.0;
  double avg_silhouette = 0.0;
  double avg_chi = 0.0;
  double avg_iterations = 0.0;
  std::optional<double> avg_accuracy;
  int cells = 0;     // cells averaged
  int failures = 0;  // cells that errored
};

// Everything a command needs; the CLI fills this from flags plus an optional
// key=value config file (flags win).
struct ExperimentSpec {
  std::string manifest;
  std::string checkpoint;  // input checkpoint for cluster / sweep / ablate / export
  std::string out_dir;
  std::string method = "dcec";  // one name, or a comma list for sweep-k
  int k = 3;
  int k_min = 2;
  int k_max = 9;
  std::vector<double> lambdas{0.1, 0.5, 0.9, 1.0};
  Index image_size = 32;
  Index embed_dim = 32;
  int jobs = 1;  // sweep/ablation cells run concurrently when > 1
  TrainConfig train;
};

// Result of cmd_cluster, mirroring what lands in metrics.json.
struct ClusterOutcome {
  MetricsReport metrics;
  long iterations = 0;
  bool converged = false;
};

// Commands write their artifacts under spec.out_dir (created on demand) and
// throw DatasetError / CheckpointError / ShapeError / NumericError on failure.
//
// pretrain:           checkpoint.dcec + pretrain_loss.csv (one row per epoch)
// cluster:            assignments.csv + metrics.json + run_record.csv +
//                     history.csv + clustered.dcec
// sweep_k:            sweep.csv (one row per method per k)
// ablate_lambda:      ablation.csv (one row per lambda) + ablation_cells.csv
// export_embeddings:  embeddings.csv (path, cluster, embedding values)
void cmd_pretrain(const ExperimentSpec& spec);
ClusterOutcome cmd_cluster(const ExperimentSpec& spec);
std::vector<RunRecord> cmd_sweep_k(const ExperimentSpec& spec);
std::vector<AblationRow> cmd_ablate_lambda(const ExperimentSpec& spec);
void cmd_export_embeddings(const ExperimentSpec& spec);

// Labeled synthetic corpus: `classes` hue families, each with its own motif
// (disc / stripes / checkerboard), written as PNGs plus manifest.csv under
// out_dir. Byte-identical output for identical arguments.
void make_synthetic_corpus(const std::string& out_dir, int classes, int per_class,
                           Index image_size, std::uint64_t seed);

}  // namespace dcec

#endif  // DCEC_EXPERIMENT_HPP
