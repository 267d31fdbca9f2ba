// Experiment-layer tests: synthetic corpus generation, the five commands and
// their artifacts, byte determinism, and failure recording in sweep tables.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dcec/checkpoint.hpp"
#include "dcec/dataset.hpp"
#include "dcec/experiment.hpp"

using namespace dcec;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Shared corpus + pretrained checkpoint, built once and removed at exit.
struct Env {
  fs::path root = fs::temp_directory_path() / "dcec_experiment_test";
  ExperimentSpec spec;

  Env() {
    fs::remove_all(root);
    fs::create_directories(root);
    make_synthetic_corpus((root / "corpus").string(), 3, 10, 16, 5);

    spec.manifest = (root / "corpus" / "manifest.csv").string();
    spec.image_size = 16;
    spec.train.pretrain_epochs = 3;
    spec.train.batch_size = 10;
    spec.train.kmeans_restarts = 3;
    spec.train.update_interval = 10;
    spec.train.max_iterations = 40;
    spec.train.seed = 11;

    ExperimentSpec pre = spec;
    pre.out_dir = (root / "pre").string();
    cmd_pretrain(pre);
    spec.checkpoint = (root / "pre" / "checkpoint.dcec").string();
  }
  ~Env() { fs::remove_all(root); }
};

const Env& env() {
  static Env instance;
  return instance;
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic, labeled, and separable") {
  const fs::path dir = env().root / "corpus_check";
  make_synthetic_corpus((dir / "a").string(), 3, 6, 16, 42);
  make_synthetic_corpus((dir / "b").string(), 3, 6, 16, 42);
  make_synthetic_corpus((dir / "c").string(), 3, 6, 16, 43);

  CHECK(slurp(dir / "a" / "manifest.csv") == slurp(dir / "b" / "manifest.csv"));
  CHECK(slurp(dir / "a" / "images" / "img_00000.png") ==
        slurp(dir / "b" / "images" / "img_00000.png"));
  CHECK(slurp(dir / "a" / "images" / "img_00017.png") ==
        slurp(dir / "b" / "images" / "img_00017.png"));
  CHECK(slurp(dir / "a" / "images" / "img_00000.png") !=
        slurp(dir / "c" / "images" / "img_00000.png"));

  const Dataset ds = load_dataset((dir / "a" / "manifest.csv").string(), 16);
  CHECK(ds.size() == 18);
  CHECK(ds.has_labels());
  CHECK(ds.n_classes() == 3);
  CHECK(ds.entries[0].group.has_value());

  // Hue families should be recoverable from raw pixels alone.
  const Dataset big = load_dataset(env().spec.manifest, 16);
  const auto flat = big.images.matrix(big.size(), 16 * 16 * 3);
  const KmeansResult<float> km = kmeans(flat, 3, 5, 0);
  CHECK(unsupervised_accuracy(big.labels(), km.labels) >= 0.8);

  CHECK_THROWS_AS(make_synthetic_corpus((dir / "x").string(), 1, 5, 16, 0), ShapeError);
  CHECK_THROWS_AS(make_synthetic_corpus((dir / "x").string(), 3, 0, 16, 0), ShapeError);
  CHECK_THROWS_AS(make_synthetic_corpus((dir / "x").string(), 3, 5, 4, 0), ShapeError);
}

TEST_CASE("pretrain writes a loadable checkpoint and a per-epoch loss table") {
  const std::string loss_csv = slurp(env().root / "pre" / "pretrain_loss.csv");
  const std::vector<std::string> rows = lines_of(loss_csv);
  REQUIRE(rows.size() == 4);  // header + one row per epoch
  CHECK(rows[0] == "epoch,loss");
  double prev = 1e30;
  for (std::size_t e = 1; e < rows.size(); ++e) {
    const auto fields = split_csv(rows[e]);
    REQUIRE(fields.size() == 2);
    CHECK(fields[0] == std::to_string(e));
    const double loss = std::stod(fields[1]);
    CHECK(std::isfinite(loss));
    CHECK(loss < prev);  // three epochs on an easy corpus should descend
    prev = loss;
  }

  const CheckpointContents contents = load_checkpoint(env().spec.checkpoint);
  CHECK(contents.model.arch.input_size == 16);
  CHECK(contents.model.arch.embed_dim == 32);
  CHECK_FALSE(contents.head.has_value());

  ExperimentSpec missing = env().spec;
  missing.manifest = (env().root / "nope.csv").string();
  missing.out_dir = (env().root / "pre_missing").string();
  CHECK_THROWS_WITH_AS(cmd_pretrain(missing),
                       doctest::Contains("nope.csv"), DatasetError);
}

TEST_CASE("cluster emits assignments, metrics, history, run record, checkpoint") {
  ExperimentSpec spec = env().spec;
  spec.method = "dcec";
  spec.k = 3;
  spec.out_dir = (env().root / "clu_a").string();
  const ClusterOutcome out = cmd_cluster(spec);

  CHECK(out.metrics.k == 3);
  CHECK(out.metrics.n == 30);
  CHECK(out.metrics.silhouette >= -1.0);
  CHECK(out.metrics.silhouette <= 1.0);
  CHECK(out.metrics.calinski_harabasz > 0.0);
  REQUIRE(out.metrics.accuracy.has_value());
  CHECK(*out.metrics.accuracy >= 1.0 / 3.0);
  CHECK(out.iterations <= spec.train.max_iterations);

  const auto assign_rows = lines_of(slurp(fs::path(spec.out_dir) / "assignments.csv"));
  REQUIRE(assign_rows.size() == 31);
  CHECK(assign_rows[0] == "path,cluster,confidence");
  for (std::size_t i = 1; i < assign_rows.size(); ++i) {
    const auto f = split_csv(assign_rows[i]);
    REQUIRE(f.size() == 3);
    const int cluster = std::stoi(f[1]);
    CHECK(cluster >= 0);
    CHECK(cluster < 3);
    const double conf = std::stod(f[2]);
    CHECK(conf > 0.0);
    CHECK(conf <= 1.0);
  }

  const nlohmann::json j = nlohmann::json::parse(slurp(fs::path(spec.out_dir) / "metrics.json"));
  CHECK(j.at("method") == "dcec");
  CHECK(j.at("k") == 3);
  CHECK(j.at("n") == 30);
  CHECK(j.at("lambda") == 0.1);
  CHECK(j.at("silhouette").get<double>() == doctest::Approx(out.metrics.silhouette));
  CHECK(j.at("calinski_harabasz").get<double>() ==
        doctest::Approx(out.metrics.calinski_harabasz));
  CHECK(j.at("accuracy").get<double>() == doctest::Approx(*out.metrics.accuracy));
  CHECK(j.at("iterations").get<long>() == out.iterations);
  CHECK(j.at("converged").get<bool>() == out.converged);

  const auto hist_rows = lines_of(slurp(fs::path(spec.out_dir) / "history.csv"));
  CHECK(hist_rows[0] == "iteration,total_loss,rec_loss,clu_loss,label_change");
  CHECK(hist_rows.size() >= 2);

  const auto rec_rows = lines_of(slurp(fs::path(spec.out_dir) / "run_record.csv"));
  REQUIRE(rec_rows.size() == 2);
  const auto rec = split_csv(rec_rows[1]);
  REQUIRE(rec.size() == 11);
  CHECK(rec[0] == "dcec");
  CHECK(rec[1] == "3");
  CHECK(std::stod(rec[5]) == 1.0);  // sole row normalizes to the table max
  CHECK(rec[10].empty());

  const CheckpointContents clustered =
      load_checkpoint((fs::path(spec.out_dir) / "clustered.dcec").string());
  REQUIRE(clustered.head.has_value());
  CHECK(clustered.head->k() == 3);
  CHECK(clustered.head->embed_dim() == 32);

  // Same seed, fresh output directory: artifact bytes must match exactly.
  ExperimentSpec again = spec;
  again.out_dir = (env().root / "clu_b").string();
  cmd_cluster(again);
  CHECK(slurp(fs::path(spec.out_dir) / "assignments.csv") ==
        slurp(fs::path(again.out_dir) / "assignments.csv"));
  CHECK(slurp(fs::path(spec.out_dir) / "metrics.json") ==
        slurp(fs::path(again.out_dir) / "metrics.json"));
  CHECK(slurp(fs::path(spec.out_dir) / "history.csv") ==
        slurp(fs::path(again.out_dir) / "history.csv"));
}

TEST_CASE("cluster validates inputs") {
  ExperimentSpec spec = env().spec;
  spec.out_dir = (env().root / "clu_bad").string();

  spec.k = 1;
  CHECK_THROWS_AS(cmd_cluster(spec), ShapeError);
  spec.k = 30;  // n = 30 requires k <= 29; boundary holds, 30 does not
  CHECK_THROWS_AS(cmd_cluster(spec), ShapeError);
  spec.k = 3;
  spec.method = "dcec,dec";
  CHECK_THROWS_AS(cmd_cluster(spec), ShapeError);
  spec.method = "spectral";
  CHECK_THROWS_AS(cmd_cluster(spec), ShapeError);
  spec.method = "dcec";
  spec.image_size = 32;  // checkpoint was trained at 16
  CHECK_THROWS_AS(cmd_cluster(spec), ShapeError);
}

TEST_CASE("sweep runs every method-k cell and normalizes chi to the table max") {
  ExperimentSpec spec = env().spec;
  spec.method = "dcec,cae-kmeans";
  spec.k_min = 2;
  spec.k_max = 4;
  spec.train.max_iterations = 20;
  spec.out_dir = (env().root / "swp_a").string();
  const std::vector<RunRecord> rows = cmd_sweep_k(spec);

  REQUIRE(rows.size() == 6);
  double max_norm = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RunRecord& r = rows[i];
    CHECK(r.method == (i < 3 ? "dcec" : "cae-kmeans"));
    CHECK(r.k == static_cast<int>(2 + i % 3));
    REQUIRE(r.error.empty());
    CHECK(r.silhouette >= -1.0);
    CHECK(r.silhouette <= 1.0);
    CHECK(r.chi > 0.0);
    CHECK(r.chi_normalized > 0.0);
    CHECK(r.chi_normalized <= 1.0);
    REQUIRE(r.accuracy.has_value());
    CHECK(r.wall_time_s >= 0.0);
    max_norm = std::max(max_norm, r.chi_normalized);
  }
  CHECK(max_norm == 1.0);

  const auto csv_rows = lines_of(slurp(fs::path(spec.out_dir) / "sweep.csv"));
  REQUIRE(csv_rows.size() == 7);
  CHECK(split_csv(csv_rows[0]).size() == 11);

  // Cells carry pre-assigned seeds, so scheduling must not affect results.
  ExperimentSpec par = spec;
  par.jobs = 3;
  par.out_dir = (env().root / "swp_b").string();
  const std::vector<RunRecord> prows = cmd_sweep_k(par);
  REQUIRE(prows.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(prows[i].method == rows[i].method);
    CHECK(prows[i].k == rows[i].k);
    CHECK(prows[i].silhouette == rows[i].silhouette);
    CHECK(prows[i].chi == rows[i].chi);
    CHECK(prows[i].chi_normalized == rows[i].chi_normalized);
    CHECK(prows[i].accuracy == rows[i].accuracy);
    CHECK(prows[i].iterations == rows[i].iterations);
    CHECK(prows[i].converged == rows[i].converged);
  }
}

TEST_CASE("sweep records per-cell failures and keeps going") {
  ExperimentSpec spec = env().spec;
  spec.method = "dcec,cae-kmeans";
  spec.k_min = 2;
  spec.k_max = 3;
  spec.train.lambda = 1.5;  // invalid for dcec cells; cae-kmeans ignores it
  spec.train.max_iterations = 20;
  spec.out_dir = (env().root / "swp_fail").string();
  const std::vector<RunRecord> rows = cmd_sweep_k(spec);

  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].method == "dcec") {
      CHECK_FALSE(rows[i].error.empty());
      CHECK(rows[i].chi_normalized == 0.0);
    } else {
      CHECK(rows[i].error.empty());
      CHECK(rows[i].chi > 0.0);
    }
  }
  // Normalization happens over the surviving rows.
  const double max_norm = std::max(rows[2].chi_normalized, rows[3].chi_normalized);
  CHECK(max_norm == 1.0);

  const auto csv_rows = lines_of(slurp(fs::path(spec.out_dir) / "sweep.csv"));
  REQUIRE(csv_rows.size() == 5);
  const auto failed = split_csv(csv_rows[1]);
  CHECK(failed[3].empty());          // silhouette left blank
  CHECK_FALSE(failed[10].empty());   // error message recorded
}

TEST_CASE("lambda ablation averages cells per lambda over the k range") {
  ExperimentSpec spec = env().spec;
  spec.lambdas = {0.1, 1.0};
  spec.k_min = 2;
  spec.k_max = 3;
  spec.train.max_iterations = 20;
  spec.jobs = 2;
  spec.out_dir = (env().root / "abl_a").string();
  const std::vector<AblationRow> table = cmd_ablate_lambda(spec);

  REQUIRE(table.size() == 2);
  CHECK(table[0].lambda == 0.1);
  CHECK(table[1].lambda == 1.0);
  for (const AblationRow& row : table) {
    CHECK(row.cells == 2);
    CHECK(row.failures == 0);
    CHECK(std::isfinite(row.avg_silhouette));
    CHECK(row.avg_chi > 0.0);
    CHECK(row.avg_iterations >= 0.0);
    REQUIRE(row.avg_accuracy.has_value());
  }

  const auto rows = lines_of(slurp(fs::path(spec.out_dir) / "ablation.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "lambda,avg_silhouette,avg_chi,avg_iterations,avg_accuracy,cells,failures");
  const auto cells = lines_of(slurp(fs::path(spec.out_dir) / "ablation_cells.csv"));
  CHECK(cells.size() == 5);

  // Averages must match the cell table they came from (to %.9g print precision).
  double sum_chi = 0.0;
  for (std::size_t i = 1; i <= 2; ++i) sum_chi += std::stod(split_csv(cells[i])[4]);
  CHECK(table[0].avg_chi == doctest::Approx(sum_chi / 2.0).epsilon(1e-8));

  ExperimentSpec bad = spec;
  bad.method = "dec";
  CHECK_THROWS_AS(cmd_ablate_lambda(bad), ShapeError);
  bad = spec;
  bad.lambdas = {};
  CHECK_THROWS_AS(cmd_ablate_lambda(bad), ShapeError);
  bad = spec;
  bad.lambdas = {0.5, 1.2};
  CHECK_THROWS_AS(cmd_ablate_lambda(bad), ShapeError);
}

TEST_CASE("export round-trips embeddings exactly") {
  ExperimentSpec clu = env().spec;
  clu.method = "cae-kmeans";
  clu.k = 3;
  clu.out_dir = (env().root / "clu_export").string();
  cmd_cluster(clu);

  ExperimentSpec spec = env().spec;
  spec.checkpoint = (fs::path(clu.out_dir) / "clustered.dcec").string();
  spec.out_dir = (env().root / "exp_a").string();
  cmd_export_embeddings(spec);

  const auto rows = lines_of(slurp(fs::path(spec.out_dir) / "embeddings.csv"));
  REQUIRE(rows.size() == 31);
  const auto header = split_csv(rows[0]);
  REQUIRE(header.size() == 34);  // path, cluster, 32 embedding columns
  CHECK(header[0] == "path");
  CHECK(header[1] == "cluster");
  CHECK(header[2] == "e0");
  CHECK(header[33] == "e31");

  // Parsing the printed floats back must reproduce the hard assignment: the
  // text format round-trips float32 exactly.
  const CheckpointContents contents = load_checkpoint(spec.checkpoint);
  REQUIRE(contents.head.has_value());
  MatrixXfRM z(30, 32);
  std::vector<int> clusters(30);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split_csv(rows[i]);
    REQUIRE(f.size() == 34);
    clusters[i - 1] = std::stoi(f[1]);
    for (int j = 0; j < 32; ++j)
      z(static_cast<Index>(i - 1), j) = std::stof(f[static_cast<std::size_t>(j) + 2]);
  }
  const std::vector<int> oracle = hard_assign(soft_assign(z, contents.head->centroids.matrix()));
  CHECK(oracle == clusters);

  ExperimentSpec again = spec;
  again.out_dir = (env().root / "exp_b").string();
  cmd_export_embeddings(again);
  CHECK(slurp(fs::path(spec.out_dir) / "embeddings.csv") ==
        slurp(fs::path(again.out_dir) / "embeddings.csv"));

  // A bare pretraining checkpoint carries no cluster head to export.
  ExperimentSpec headless = env().spec;
  headless.out_dir = (env().root / "exp_c").string();
  CHECK_THROWS_AS(cmd_export_embeddings(headless), ShapeError);
}
