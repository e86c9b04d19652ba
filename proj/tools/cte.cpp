// Command-line surface: train, evaluate, benchmark latency, sweep
// speed-accuracy points, plus a synthetic-dataset generator for smoke
// testing. Machine-readable outputs: JSON records and a versioned CSV.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "cte/config.hpp"
#include "cte/data.hpp"
#include "cte/ensemble.hpp"
#include "cte/model_io.hpp"
#include "cte/pareto.hpp"
#include "cte/train.hpp"

using json = nlohmann::json;

namespace {

struct CommonArgs {
  std::string data_dir;
  std::string dataset = "cted";
};

cte::DatasetKind dataset_kind(const std::string& name) {
  if (name == "mnist") return cte::DatasetKind::Mnist;
  if (name == "cifar10") return cte::DatasetKind::Cifar10;
  if (name == "cted") return cte::DatasetKind::Cted;
  throw std::runtime_error("unknown dataset kind: " + name);
}

json eval_record(const cte::Ensemble& ens, const cte::LabeledDataset& ds) {
  const int C = ens.class_count;
  std::vector<std::vector<int64_t>> confusion(
      size_t(C), std::vector<int64_t>(size_t(C), 0));
  int64_t wrong = 0;
  for (int64_t i = 0; i < ds.size(); ++i) {
    const int predicted = cte::classify(ens, ds.images[size_t(i)]);
    const int truth = ds.labels[size_t(i)];
    ++confusion[size_t(truth - 1)][size_t(predicted - 1)];
    if (predicted != truth) ++wrong;
  }
  json out;
  out["schema"] = "cte-eval-v1";
  out["examples"] = ds.size();
  out["error_rate"] = double(wrong) / double(std::max<int64_t>(ds.size(), 1));
  out["confusion"] = confusion;
  return out;
}

json bench_record(const cte::Ensemble& ens,
                  const std::vector<cte::RawImage>& images, int reps) {
  const cte::BatchTiming bt = cte::classify_batch_timed(ens, images, reps);
  json out;
  out["schema"] = "cte-bench-v1";
  out["examples"] = images.size();
  out["reps"] = reps;
  out["vote_us"] = {{"median", bt.vote.median_us}, {"p95", bt.vote.p95_us}};
  out["prep_us"] = {{"median", bt.prep.median_us}, {"p95", bt.prep.p95_us}};
  out["total_us"] = {{"median", bt.total.median_us}, {"p95", bt.total.p95_us}};
  return out;
}

void write_output(const json& record, const std::string& out_path) {
  std::cout << record.dump(2) << std::endl;
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + out_path);
    out << record.dump(2) << "\n";
  }
}

struct SweepPoint {
  std::string id;
  int tables = 0;
  int bits = 0;
  std::string shape;  // "fern" or "tree:K1,..:q1,.."
};

std::vector<SweepPoint> parse_sweep(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep file: " + path);
  std::vector<SweepPoint> points;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    SweepPoint p;
    if (!(ss >> p.id)) continue;  // blank line
    if (!(ss >> p.tables >> p.bits >> p.shape))
      throw std::runtime_error("sweep file line " + std::to_string(lineno) +
                               ": expected 'id M K shape'");
    points.push_back(std::move(p));
  }
  if (points.empty()) throw std::runtime_error("sweep file lists no points");
  return points;
}

void apply_shape(cte::TrainConfig& cfg, const SweepPoint& p) {
  cfg.tables = p.tables;
  cfg.bits = p.bits;
  if (p.shape == "fern") {
    cfg.tree = false;
    return;
  }
  if (p.shape.rfind("tree:", 0) != 0)
    throw std::runtime_error("bad shape (want fern or tree:K1,..:q1,..): " +
                             p.shape);
  const std::string spec = p.shape.substr(5);
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("tree shape needs stage bits and split factors");
  auto parse_list = [](const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
  };
  cfg.tree = true;
  cfg.tree_stage_bits = parse_list(spec.substr(0, colon));
  cfg.tree_split_factors = parse_list(spec.substr(colon + 1));
}

// Class-dependent blobs over a noisy background; labels round robin.
cte::LabeledDataset synth_dataset(uint64_t seed, int n, int classes, int w,
                                  int h, int depth) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(-0.05f, 0.05f);
  cte::LabeledDataset ds;
  ds.class_count = classes;
  ds.provenance = "synthetic";
  for (int i = 0; i < n; ++i) {
    const int label = i % classes + 1;
    cte::RawImage img = cte::RawImage::zeros(w, h, depth);
    for (auto& v : img.data) v = 0.4f + noise(rng);
    if (label > 1) {
      const int bx = (label - 1) * w / classes;
      for (int d = 0; d < depth; ++d)
        for (int y = h / 3; y < 2 * h / 3; ++y)
          for (int x = bx; x < std::min(w, bx + w / classes); ++x)
            img.at(x, y, d) = 0.9f + noise(rng);
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

int run(int argc, char** argv) {
  CLI::App app{"convolutional tables ensemble toolchain"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  std::string config_path, out_path, log_path;
  CommonArgs train_common;
  int64_t seed_override = -1;
  int threads_override = -1;
  train_cmd->add_option("--config", config_path, "training config file")
      ->required();
  train_cmd->add_option("--data-dir", train_common.data_dir,
                        "dataset root (or CTE_DATA_DIR)");
  train_cmd->add_option("--out", out_path, "output model path")->required();
  train_cmd->add_option("--seed", seed_override, "override the config seed");
  train_cmd->add_option("--threads", threads_override,
                        "override the config thread count");
  train_cmd->add_option("--log", log_path, "write the training log here too");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model");
  std::string model_path, eval_out;
  CommonArgs eval_common;
  eval_cmd->add_option("--model", model_path, "model file")->required();
  eval_cmd->add_option("--data-dir", eval_common.data_dir, "dataset root");
  eval_cmd->add_option("--dataset", eval_common.dataset,
                       "dataset kind: mnist|cifar10|cted");
  eval_cmd->add_option("--out", eval_out, "write the JSON record here too");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "measure per-image latency");
  std::string bench_model, bench_out;
  CommonArgs bench_common;
  int reps = 5;
  int64_t limit = 200;
  bench_cmd->add_option("--model", bench_model, "model file")->required();
  bench_cmd->add_option("--data-dir", bench_common.data_dir, "dataset root");
  bench_cmd->add_option("--dataset", bench_common.dataset,
                        "dataset kind: mnist|cifar10|cted");
  bench_cmd->add_option("--reps", reps, "timed repetitions per image");
  bench_cmd->add_option("--limit", limit, "max images to time");
  bench_cmd->add_option("--out", bench_out, "write the JSON record here too");

  // pareto
  auto* pareto_cmd =
      app.add_subcommand("pareto", "train a sweep and emit (latency, error) CSV");
  std::string sweep_path, pareto_config, pareto_out;
  CommonArgs pareto_common;
  int pareto_reps = 3;
  pareto_cmd->add_option("--sweep", sweep_path, "sweep spec: lines 'id M K shape'")
      ->required();
  pareto_cmd->add_option("--config", pareto_config, "base training config")
      ->required();
  pareto_cmd->add_option("--data-dir", pareto_common.data_dir, "dataset root");
  pareto_cmd->add_option("--out", pareto_out, "output CSV path")->required();
  pareto_cmd->add_option("--reps", pareto_reps, "timed repetitions per image");

  // synth
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic CTED dataset");
  std::string synth_out;
  int synth_n = 200, synth_classes = 2, synth_w = 16, synth_h = 16,
      synth_d = 1;
  uint64_t synth_seed = 1;
  synth_cmd->add_option("--out", synth_out, "output .cted path")->required();
  synth_cmd->add_option("--n", synth_n, "examples");
  synth_cmd->add_option("--classes", synth_classes, "class count");
  synth_cmd->add_option("--width", synth_w, "image width");
  synth_cmd->add_option("--height", synth_h, "image height");
  synth_cmd->add_option("--depth", synth_d, "channels");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  if (*train_cmd) {
    cte::FileConfig fc = cte::load_train_config(config_path);
    if (seed_override >= 0) fc.train.seed = uint64_t(seed_override);
    if (threads_override >= 0) fc.train.threads = threads_override;
    const std::string dir = cte::resolve_data_dir(train_common.data_dir);
    cte::LabeledDataset train = cte::load_dataset(fc.dataset, dir, true);
    std::ofstream log_file;
    if (!log_path.empty()) {
      log_file.open(log_path, std::ios::trunc);
      if (!log_file) throw std::runtime_error("cannot write: " + log_path);
    }
    std::ostream* log = &std::cout;
    fc.train.validate();
    cte::TrainResult result = cte::train_ensemble(train, fc.train, log);
    if (log_file) {
      for (const auto& e : result.log)
        log_file << "table " << e.table << " R=" << e.r_score
                 << " loss=" << e.objective << " train_err=" << e.train_error
                 << " val_err=" << e.val_error << " seconds=" << e.seconds
                 << "\n";
    }
    cte::save_model(result.ensemble, out_path);
    std::cout << "model written to " << out_path << std::endl;
    return 0;
  }

  if (*eval_cmd) {
    const cte::Ensemble ens = cte::load_model(model_path);
    const std::string dir = cte::resolve_data_dir(eval_common.data_dir);
    const cte::LabeledDataset test =
        cte::load_dataset(dataset_kind(eval_common.dataset), dir, false);
    write_output(eval_record(ens, test), eval_out);
    return 0;
  }

  if (*bench_cmd) {
    const cte::Ensemble ens = cte::load_model(bench_model);
    const std::string dir = cte::resolve_data_dir(bench_common.data_dir);
    cte::LabeledDataset test =
        cte::load_dataset(dataset_kind(bench_common.dataset), dir, false);
    std::vector<cte::RawImage> images = std::move(test.images);
    if (int64_t(images.size()) > limit) images.resize(size_t(limit));
    write_output(bench_record(ens, images, reps), bench_out);
    return 0;
  }

  if (*pareto_cmd) {
    const std::vector<SweepPoint> points = parse_sweep(sweep_path);
    const cte::FileConfig base = cte::load_train_config(pareto_config);
    const std::string dir = cte::resolve_data_dir(pareto_common.data_dir);
    const cte::LabeledDataset train = cte::load_dataset(base.dataset, dir, true);
    cte::LabeledDataset test = cte::load_dataset(base.dataset, dir, false);
    std::vector<cte::RawImage> bench_images = test.images;
    if (bench_images.size() > 100) bench_images.resize(100);

    struct Row {
      SweepPoint point;
      bool ok = false;
      double latency = std::nan("");
      double error = std::nan("");
      std::string message;
    };
    std::vector<Row> rows;
    for (const auto& p : points) {
      Row row;
      row.point = p;
      try {
        cte::TrainConfig cfg = base.train;
        apply_shape(cfg, p);
        cfg.validate();
        cte::TrainResult r = cte::train_ensemble(train, cfg, &std::cerr);
        int64_t wrong = 0;
        for (int64_t i = 0; i < test.size(); ++i)
          if (cte::classify(r.ensemble, test.images[size_t(i)]) !=
              test.labels[size_t(i)])
            ++wrong;
        row.error = double(wrong) / double(test.size());
        const cte::BatchTiming bt =
            cte::classify_batch_timed(r.ensemble, bench_images, pareto_reps);
        row.latency = bt.vote.median_us;
        row.ok = true;
      } catch (const std::exception& e) {
        row.message = e.what();
        std::cerr << "point " << p.id << " failed: " << e.what() << std::endl;
      }
      rows.push_back(std::move(row));
    }

    std::vector<cte::ParetoPoint> ok_points;
    for (const auto& r : rows)
      if (r.ok) ok_points.push_back({r.latency, r.error});
    const std::vector<bool> frontier = cte::pareto_frontier(ok_points);

    std::ofstream out(pareto_out, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + pareto_out);
    out << "# cte-pareto-v1\n";
    out << "config-id,M,K,tree-shape,latency-us,error,frontier\n";
    size_t ok_index = 0;
    for (const auto& r : rows) {
      const bool on_frontier = r.ok && frontier[ok_index];
      if (r.ok) ++ok_index;
      out << r.point.id << ',' << r.point.tables << ',' << r.point.bits << ','
          << r.point.shape << ',';
      if (r.ok)
        out << r.latency << ',' << r.error;
      else
        out << "nan,nan";
      out << ',' << (on_frontier ? 1 : 0) << '\n';
    }
    std::cout << "sweep written to " << pareto_out << std::endl;
    return 0;
  }

  if (*synth_cmd) {
    cte::save_cted(synth_dataset(synth_seed, synth_n, synth_classes, synth_w,
                                 synth_h, synth_d),
                   synth_out);
    std::cout << "dataset written to " << synth_out << std::endl;
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
