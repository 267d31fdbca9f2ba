// Command-line front end: pretrain / cluster / sweep-k / ablate-lambda /
// export-embeddings / make-synthetic. Exit codes: 0 success, 2 usage or
// input error, 3 numerical failure.

#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"

#include "dcec/checkpoint.hpp"
#include "dcec/dataset.hpp"
#include "dcec/experiment.hpp"

namespace {

// Flat key=value file, one pair per line; '#' or ';' starts a comment.
// Values may be wrapped in double quotes.
std::map<std::string, std::string> read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    const std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.resize(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

// Fills options the command line left untouched; flags always win.
void apply_config(CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : read_flat_config(path)) {
    if (key == "config") throw std::runtime_error("config: key 'config' cannot nest");
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw std::runtime_error("config: unknown key '" + key + "' for subcommand " +
                               sub->get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require_value(const std::string& value, const std::string& flag) {
  if (value.empty())
    throw std::runtime_error("missing required value for " + flag +
                             " (pass the flag or set it in the config file)");
}

void add_config_flag(CLI::App* sub, std::string* config_path) {
  sub->add_option("--config", *config_path,
                  "Flat key=value file mirroring the flags; flags win");
}

void add_common(CLI::App* sub, dcec::ExperimentSpec* spec, std::string* config_path) {
  sub->add_option("--out", spec->out_dir, "Output directory (created on demand)");
  sub->add_option("--seed", spec->train.seed, "Master RNG seed");
  sub->add_option("--image-size", spec->image_size, "Square side images are resized to");
  sub->add_option("--batch-size", spec->train.batch_size, "Mini-batch size");
  sub->add_option("--manifest", spec->manifest, "Dataset manifest CSV");
  add_config_flag(sub, config_path);
}

void add_train_knobs(CLI::App* sub, dcec::ExperimentSpec* spec) {
  sub->add_option("--checkpoint", spec->checkpoint, "Input model checkpoint");
  sub->add_option("--lambda", spec->train.lambda, "Reconstruction weight in the joint loss");
  sub->add_option("--update-interval", spec->train.update_interval,
                  "Mini-batch steps between target refreshes");
  sub->add_option("--delta", spec->train.tolerance,
                  "Stop when the label-change fraction drops below this");
  sub->add_option("--kmeans-restarts", spec->train.kmeans_restarts,
                  "k-means restarts for centroid initialization");
  sub->add_option("--max-iterations", spec->train.max_iterations,
                  "Hard cap on self-training mini-batch steps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep embedded clustering toolkit"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 2 usage or input error, 3 numerical failure.");

  dcec::ExperimentSpec spec;
  std::string config_path;
  std::string corpus_out;
  int classes = 3;
  int per_class = 100;
  std::uint64_t corpus_seed = 0;
  dcec::Index corpus_size = 32;

  CLI::App* pre = app.add_subcommand("pretrain", "Train the autoencoder and save a checkpoint");
  add_common(pre, &spec, &config_path);
  pre->add_option("--epochs", spec.train.pretrain_epochs, "Pretraining epochs");
  pre->add_option("--embed-dim", spec.embed_dim, "Embedding width");

  CLI::App* clu = app.add_subcommand("cluster", "Run one clustering method on a pretrained model");
  add_common(clu, &spec, &config_path);
  add_train_knobs(clu, &spec);
  clu->add_option("--k", spec.k, "Number of clusters");
  clu->add_option("--method", spec.method, "dcec | dec | cae-kmeans");

  CLI::App* swp = app.add_subcommand("sweep-k", "Run methods over a k range, one row per cell");
  add_common(swp, &spec, &config_path);
  add_train_knobs(swp, &spec);
  swp->add_option("--k-min", spec.k_min, "Smallest k (inclusive)");
  swp->add_option("--k-max", spec.k_max, "Largest k (inclusive)");
  swp->add_option("--method", spec.method, "Comma list of dcec, dec, cae-kmeans");
  swp->add_option("--jobs", spec.jobs, "Concurrent cells (outputs are jobs-independent)");

  CLI::App* abl = app.add_subcommand("ablate-lambda", "Average dcec over a k range per lambda");
  add_common(abl, &spec, &config_path);
  add_train_knobs(abl, &spec);
  abl->add_option("--k-min", spec.k_min, "Smallest k (inclusive)");
  abl->add_option("--k-max", spec.k_max, "Largest k (inclusive)");
  abl->add_option("--lambdas", spec.lambdas, "Comma list of lambda values")->delimiter(',');
  abl->add_option("--jobs", spec.jobs, "Concurrent cells (outputs are jobs-independent)");

  CLI::App* exp = app.add_subcommand("export-embeddings",
                                     "Write per-image embeddings and cluster ids");
  add_common(exp, &spec, &config_path);
  exp->add_option("--checkpoint", spec.checkpoint, "Input model checkpoint");

  CLI::App* syn = app.add_subcommand("make-synthetic", "Generate a labeled synthetic corpus");
  syn->add_option("--out", corpus_out, "Corpus directory (created on demand)");
  syn->add_option("--classes", classes, "Number of classes");
  syn->add_option("--per-class", per_class, "Images per class");
  syn->add_option("--image-size", corpus_size, "Square image side");
  syn->add_option("--seed", corpus_seed, "Corpus RNG seed");
  add_config_flag(syn, &config_path);

  try {
    app.parse(argc, argv);

    for (CLI::App* sub : {pre, clu, swp, abl, exp, syn})
      if (sub->parsed() && !config_path.empty()) apply_config(sub, config_path);

    if (*syn) {
      require_value(corpus_out, "--out");
      dcec::make_synthetic_corpus(corpus_out, classes, per_class, corpus_size, corpus_seed);
      std::printf("wrote %d images and manifest.csv under %s\n", classes * per_class,
                  corpus_out.c_str());
      return 0;
    }

    require_value(spec.out_dir, "--out");
    require_value(spec.manifest, "--manifest");
    if (*clu || *swp || *abl || *exp) require_value(spec.checkpoint, "--checkpoint");

    if (*pre) {
      cmd_pretrain(spec);
      std::printf("wrote %s/checkpoint.dcec and pretrain_loss.csv\n", spec.out_dir.c_str());
    } else if (*clu) {
      const dcec::ClusterOutcome out = cmd_cluster(spec);
      std::printf("method=%s k=%d n=%ld silhouette=%.9g chi=%.9g", spec.method.c_str(),
                  out.metrics.k, static_cast<long>(out.metrics.n), out.metrics.silhouette,
                  out.metrics.calinski_harabasz);
      if (out.metrics.accuracy) std::printf(" accuracy=%.9g", *out.metrics.accuracy);
      std::printf(" iterations=%ld converged=%d\n", out.iterations, out.converged ? 1 : 0);
      std::printf("wrote assignments.csv, metrics.json, history.csv, run_record.csv, "
                  "clustered.dcec under %s\n",
                  spec.out_dir.c_str());
    } else if (*swp) {
      const auto rows = cmd_sweep_k(spec);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
      std::printf("wrote %s/sweep.csv (%zu rows, %zu failed)\n", spec.out_dir.c_str(), rows.size(),
                  failed);
    } else if (*abl) {
      const auto rows = cmd_ablate_lambda(spec);
      std::printf("wrote %s/ablation.csv (%zu lambda rows) and ablation_cells.csv\n",
                  spec.out_dir.c_str(), rows.size());
    } else if (*exp) {
      cmd_export_embeddings(spec);
      std::printf("wrote %s/embeddings.csv\n", spec.out_dir.c_str());
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const dcec::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
