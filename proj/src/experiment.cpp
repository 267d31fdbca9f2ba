#include "dcec/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dcec/checkpoint.hpp"
#include "dcec/dataset.hpp"

namespace dcec {

namespace {

namespace fs = std::filesystem;

// %.9g everywhere: compact, and round-trips float32 values exactly.
std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    quoted += ch;
    if (ch == '"') quoted += '"';
  }
  quoted += '"';
  return quoted;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content))
    throw DatasetError(DatasetErrorKind::kIo, "cannot write " + path.string());
}

fs::path ensure_out_dir(const ExperimentSpec& spec) {
  if (spec.out_dir.empty()) throw ShapeError("no output directory given");
  const fs::path dir(spec.out_dir);
  fs::create_directories(dir);
  return dir;
}

CheckpointContents load_and_check(const std::string& path, const Dataset& ds) {
  if (path.empty()) throw ShapeError("no checkpoint path given");
  CheckpointContents contents = load_checkpoint(path);
  if (contents.model.arch.input_size != ds.image_size)
    throw ShapeError("checkpoint expects input size " +
                     std::to_string(contents.model.arch.input_size) + " but dataset images are " +
                     std::to_string(ds.image_size));
  return contents;
}

std::vector<std::string> split_methods(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      if (cur != "dcec" && cur != "dec" && cur != "cae-kmeans")
        throw ShapeError("unknown method '" + cur + "' (expected dcec, dec, or cae-kmeans)");
      out.push_back(cur);
      cur.clear();
    } else {
      cur += text[i];
    }
  }
  return out;
}

TrainResult run_method(const std::string& method, CaeModel<float>& model, const TensorF& images,
                       int k, const TrainConfig& cfg) {
  if (method == "dcec") return joint_train(model, images, k, cfg);
  if (method == "dec") return dec_train(model, images, k, cfg);
  if (method == "cae-kmeans")
    return cae_kmeans(model, images, k, cfg.kmeans_restarts, cfg.seed);
  throw ShapeError("unknown method '" + method + "' (expected dcec, dec, or cae-kmeans)");
}

// Reconstruction weight actually used by the training objective.
double effective_lambda(const std::string& method, double lambda) {
  return method == "dcec" ? lambda : 0.0;
}

MetricsReport compute_metrics(const TensorF& z, const std::vector<int>& labels, const Dataset& ds,
                              int k) {
  MetricsReport report;
  report.k = k;
  report.n = z.dim(0);
  report.silhouette = silhouette(z.matrix(), labels);
  report.calinski_harabasz = calinski_harabasz(z.matrix(), labels);
  if (ds.has_labels()) report.accuracy = unsupervised_accuracy(ds.labels(), labels);
  return report;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_k_range(int k_min, int k_max, Index n) {
  if (k_min < 2 || k_max < k_min || static_cast<Index>(k_max) > n - 1)
    throw ShapeError("k range must satisfy 2 <= k_min <= k_max <= n-1, got [" +
                     std::to_string(k_min) + ", " + std::to_string(k_max) + "] with n = " +
                     std::to_string(n));
}

// Runs `count` independent cells, concurrently when jobs > 1. Each cell's
// seed is fixed before scheduling, so results do not depend on jobs.
void run_cells(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  const int workers = std::max(1, std::min(jobs, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) body(i);
    });
  for (std::thread& t : pool) t.join();
}

RunRecord run_cell(const std::string& method, int k, const TrainConfig& cfg,
                   const CaeModel<float>& base, const Dataset& ds) {
  RunRecord rec;
  rec.method = method;
  rec.k = k;
  rec.lambda = effective_lambda(method, cfg.lambda);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    CaeModel<float> model = base;
    const TrainResult res = run_method(method, model, ds.images, k, cfg);
    const TensorF z = encode_all(model, ds.images, cfg.batch_size);
    const MetricsReport report = compute_metrics(z, res.labels, ds, k);
    rec.silhouette = report.silhouette;
    rec.chi = report.calinski_harabasz;
    rec.accuracy = report.accuracy;
    rec.iterations = res.iterations;
    rec.converged = res.converged;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_time_s = elapsed_s(t0);
  return rec;
}

void normalize_chi(std::vector<RunRecord>& rows) {
  double max_chi = 0.0;
  for (const RunRecord& r : rows)
    if (r.error.empty()) max_chi = std::max(max_chi, r.chi);
  if (max_chi <= 0.0) return;
  for (RunRecord& r : rows)
    if (r.error.empty()) r.chi_normalized = r.chi / max_chi;
}

std::string run_record_header() {
  return "method,k,lambda,silhouette,chi,chi_normalized,accuracy,iterations,converged,"
         "wall_time_s,error\n";
}

std::string run_record_row(const RunRecord& r) {
  std::string row = csv_field(r.method) + "," + std::to_string(r.k) + "," + fmt_g(r.lambda) + ",";
  if (r.error.empty()) {
    row += fmt_g(r.silhouette) + "," + fmt_g(r.chi) + "," + fmt_g(r.chi_normalized) + ",";
    if (r.accuracy) row += fmt_g(*r.accuracy);
    row += "," + std::to_string(r.iterations) + "," + (r.converged ? std::string("1") : std::string("0")) + ",";
  } else {
    row += ",,,,,,";
  }
  row += fmt_g(r.wall_time_s) + "," + csv_field(r.error) + "\n";
  return row;
}

std::string run_record_table(const std::vector<RunRecord>& rows) {
  std::string csv = run_record_header();
  for (const RunRecord& r : rows) csv += run_record_row(r);
  return csv;
}

}  // namespace

void cmd_pretrain(const ExperimentSpec& spec) {
  const fs::path dir = ensure_out_dir(spec);
  const Dataset ds = load_dataset(spec.manifest, spec.image_size);

  CaeArchitecture arch;
  arch.input_size = spec.image_size;
  arch.embed_dim = spec.embed_dim;
  arch.validate();

  CaeModel<float> model = build_model(arch, spec.train.seed);
  const std::vector<double> losses =
      pretrain(model, ds.images, spec.train.pretrain_epochs, spec.train.batch_size,
               spec.train.seed);
  save_checkpoint((dir / "checkpoint.dcec").string(), model);

  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e)
    csv += std::to_string(e + 1) + "," + fmt_g(losses[e]) + "\n";
  write_file(dir / "pretrain_loss.csv", csv);
}

ClusterOutcome cmd_cluster(const ExperimentSpec& spec) {
  const fs::path dir = ensure_out_dir(spec);
  const Dataset ds = load_dataset(spec.manifest, spec.image_size);
  CheckpointContents contents = load_and_check(spec.checkpoint, ds);
  if (spec.method.find(',') != std::string::npos)
    throw ShapeError("cluster takes a single method, got '" + spec.method + "'");
  split_methods(spec.method);  // validates the name
  check_k_range(spec.k, spec.k, ds.size());

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = run_method(spec.method, contents.model, ds.images, spec.k, spec.train);
  const double wall = elapsed_s(t0);

  const TensorF z = encode_all(contents.model, ds.images, spec.train.batch_size);
  const MatrixXfRM q = soft_assign(z.matrix(), res.head.centroids.matrix());
  const MetricsReport report = compute_metrics(z, res.labels, ds, spec.k);

  std::string assignments = "path,cluster,confidence\n";
  for (Index i = 0; i < ds.size(); ++i)
    assignments += csv_field(ds.entries[static_cast<std::size_t>(i)].path) + "," +
                   std::to_string(res.labels[static_cast<std::size_t>(i)]) + "," +
                   fmt_g(q.row(i).maxCoeff()) + "\n";
  write_file(dir / "assignments.csv", assignments);

  std::string hist = "iteration,total_loss,rec_loss,clu_loss,label_change\n";
  for (const RefreshPoint& r : res.history)
    hist += std::to_string(r.iteration) + "," + fmt_g(r.total_loss) + "," + fmt_g(r.rec_loss) +
            "," + fmt_g(r.clu_loss) + "," + fmt_g(r.label_change) + "\n";
  write_file(dir / "history.csv", hist);

  nlohmann::json j;
  j["method"] = spec.method;
  j["k"] = report.k;
  j["n"] = report.n;
  j["lambda"] = effective_lambda(spec.method, spec.train.lambda);
  j["silhouette"] = report.silhouette;
  j["calinski_harabasz"] = report.calinski_harabasz;
  if (report.accuracy) j["accuracy"] = *report.accuracy;
  j["iterations"] = res.iterations;
  j["converged"] = res.converged;
  write_file(dir / "metrics.json", j.dump(2) + "\n");

  RunRecord rec;
  rec.method = spec.method;
  rec.k = spec.k;
  rec.lambda = effective_lambda(spec.method, spec.train.lambda);
  rec.silhouette = report.silhouette;
  rec.chi = report.calinski_harabasz;
  rec.chi_normalized = 1.0;  // sole row of its table
  rec.accuracy = report.accuracy;
  rec.iterations = res.iterations;
  rec.converged = res.converged;
  rec.wall_time_s = wall;
  write_file(dir / "run_record.csv", run_record_table({rec}));

  save_checkpoint((dir / "clustered.dcec").string(), contents.model, &res.head);
  return {report, res.iterations, res.converged};
}

std::vector<RunRecord> cmd_sweep_k(const ExperimentSpec& spec) {
  const fs::path dir = ensure_out_dir(spec);
  const Dataset ds = load_dataset(spec.manifest, spec.image_size);
  const CheckpointContents base = load_and_check(spec.checkpoint, ds);
  const std::vector<std::string> methods = split_methods(spec.method);
  check_k_range(spec.k_min, spec.k_max, ds.size());

  const std::size_t nk = static_cast<std::size_t>(spec.k_max - spec.k_min + 1);
  const std::size_t cells = methods.size() * nk;
  std::vector<RunRecord> rows(cells);
  run_cells(cells, spec.jobs, [&](std::size_t cell) {
    const std::string& method = methods[cell / nk];
    const int k = spec.k_min + static_cast<int>(cell % nk);
    TrainConfig cfg = spec.train;
    cfg.seed = spec.train.seed + cell;
    rows[cell] = run_cell(method, k, cfg, base.model, ds);
  });
  normalize_chi(rows);
  write_file(dir / "sweep.csv", run_record_table(rows));
  return rows;
}

std::vector<AblationRow> cmd_ablate_lambda(const ExperimentSpec& spec) {
  const fs::path dir = ensure_out_dir(spec);
  const Dataset ds = load_dataset(spec.manifest, spec.image_size);
  const CheckpointContents base = load_and_check(spec.checkpoint, ds);
  if (spec.method != "dcec")
    throw ShapeError("lambda ablation runs the dcec method only, got '" + spec.method + "'");
  if (spec.lambdas.empty()) throw ShapeError("no lambda values given");
  for (double l : spec.lambdas)
    if (!(l >= 0.0 && l <= 1.0))
      throw ShapeError("lambda must lie in [0, 1], got " + fmt_g(l));
  check_k_range(spec.k_min, spec.k_max, ds.size());

  const std::size_t nk = static_cast<std::size_t>(spec.k_max - spec.k_min + 1);
  const std::size_t cells = spec.lambdas.size() * nk;
  std::vector<RunRecord> rows(cells);
  run_cells(cells, spec.jobs, [&](std::size_t cell) {
    TrainConfig cfg = spec.train;
    cfg.lambda = spec.lambdas[cell / nk];
    cfg.seed = spec.train.seed + cell;
    const int k = spec.k_min + static_cast<int>(cell % nk);
    rows[cell] = run_cell("dcec", k, cfg, base.model, ds);
  });
  normalize_chi(rows);
  write_file(dir / "ablation_cells.csv", run_record_table(rows));

  std::vector<AblationRow> table;
  table.reserve(spec.lambdas.size());
  std::string csv = "lambda,avg_silhouette,avg_chi,avg_iterations,avg_accuracy,cells,failures\n";
  for (std::size_t li = 0; li < spec.lambdas.size(); ++li) {
    AblationRow row;
    row.lambda = spec.lambdas[li];
    double sum_sil = 0.0, sum_chi = 0.0, sum_it = 0.0, sum_acc = 0.0;
    int acc_n = 0;
    for (std::size_t ki = 0; ki < nk; ++ki) {
      const RunRecord& r = rows[li * nk + ki];
      if (!r.error.empty()) {
        ++row.failures;
        continue;
      }
      ++row.cells;
      sum_sil += r.silhouette;
      sum_chi += r.chi;
      sum_it += static_cast<double>(r.iterations);
      if (r.accuracy) {
        sum_acc += *r.accuracy;
        ++acc_n;
      }
    }
    if (row.cells > 0) {
      row.avg_silhouette = sum_sil / row.cells;
      row.avg_chi = sum_chi / row.cells;
      row.avg_iterations = sum_it / row.cells;
    }
    if (acc_n > 0) row.avg_accuracy = sum_acc / acc_n;

    csv += fmt_g(row.lambda) + ",";
    csv += (row.cells > 0 ? fmt_g(row.avg_silhouette) : std::string()) + ",";
    csv += (row.cells > 0 ? fmt_g(row.avg_chi) : std::string()) + ",";
    csv += (row.cells > 0 ? fmt_g(row.avg_iterations) : std::string()) + ",";
    csv += (row.avg_accuracy ? fmt_g(*row.avg_accuracy) : std::string()) + ",";
    csv += std::to_string(row.cells) + "," + std::to_string(row.failures) + "\n";
    table.push_back(row);
  }
  write_file(dir / "ablation.csv", csv);
  return table;
}

void cmd_export_embeddings(const ExperimentSpec& spec) {
  const fs::path dir = ensure_out_dir(spec);
  const Dataset ds = load_dataset(spec.manifest, spec.image_size);
  const CheckpointContents contents = load_and_check(spec.checkpoint, ds);
  if (!contents.head)
    throw ShapeError("export-embeddings: checkpoint has no cluster head; run cluster first");

  const TensorF z = encode_all(contents.model, ds.images, spec.train.batch_size);
  const MatrixXfRM q = soft_assign(z.matrix(), contents.head->centroids.matrix());
  const std::vector<int> labels = hard_assign(q);
  const Index d = z.dim(1);

  std::string csv = "path,cluster";
  for (Index j = 0; j < d; ++j) csv += ",e" + std::to_string(j);
  csv += "\n";
  const auto zm = z.matrix();
  for (Index i = 0; i < ds.size(); ++i) {
    csv += csv_field(ds.entries[static_cast<std::size_t>(i)].path) + "," +
           std::to_string(labels[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < d; ++j) csv += "," + fmt_g(zm(i, j));
    csv += "\n";
  }
  write_file(dir / "embeddings.csv", csv);
}

}  // namespace dcec
