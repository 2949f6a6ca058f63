#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gazedetr/config.hpp"
#include "gazedetr/train.hpp"

namespace fs = std::filesystem;
using namespace gazedetr;

namespace {

void print_report(const EvalReport& r) {
  auto fmt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("n/a (no ground truth)");
  };
  std::cout << "AP_{0.2:0.5}:   " << fmt(r.ap_range) << "\n";
  std::cout << "AP_{0.2}:       " << fmt(r.ap_02) << "\n";
  std::cout << "AP_{0.5}:       " << fmt(r.ap_05) << "\n";
  std::cout << "AR:             " << fmt(r.ar) << "\n";
  std::cout << "confounder_fp:  " << fmt(r.confounder_fp) << "\n";
  std::cout << "tp/fp/fn @0.5:  " << r.tp_05 << "/" << r.fp_05 << "/"
            << r.fn_05 << "\n";
  std::cout << "per-threshold AP:\n";
  for (const auto& [t, ap] : r.per_threshold_ap) {
    std::cout << "  " << t << ": " << fmt(ap) << "\n";
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, ',')) {
    if (cur.empty()) continue;
    seeds.push_back(detail::parse_u64("seeds", cur));
  }
  require(!seeds.empty(), "ablate: no seeds given");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaze-guided candida detection"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, ckpt, split = "val", runs_dir,
              seeds_csv = "1";

  auto* gen = app.add_subcommand("gen-data", "synthesize a dataset");
  gen->add_option("--config", config_path, "generator config file")
      ->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* gb = app.add_subcommand(
      "gaze-boxes", "compute and cache gaze-only boxes for a dataset");
  gb->add_option("--data", data_dir, "dataset directory")->required();
  gb->add_option("--config", config_path,
                 "optional train config supplying gaze parameters");

  auto* tr = app.add_subcommand("train", "train a detector");
  tr->add_option("--config", config_path, "train config file")->required();
  tr->add_option("--out", out_dir, "run output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ev->add_option("--split", split, "train, val, or test")->required();

  auto* ab = app.add_subcommand("ablate", "run the four-row ablation grid");
  ab->add_option("--config", config_path, "base train config file")
      ->required();
  ab->add_option("--seeds", seeds_csv, "comma-separated seeds")->required();
  ab->add_option("--out", out_dir, "ablation output directory")->required();

  auto* rp = app.add_subcommand("report",
                                "render tables and PR-curve CSVs from runs");
  rp->add_option("--runs", runs_dir, "ablation output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const DataGenConfig cfg = load_datagen_config(config_path);
      const Dataset ds = build_dataset(cfg.scene, cfg.sim, cfg.n_scenes);
      write_dataset(ds, out_dir);
      std::cout << "wrote " << ds.records.size() << " scenes to " << out_dir
                << " (train/val/test = " << ds.train.size() << "/"
                << ds.val.size() << "/" << ds.test.size() << ")\n";
    } else if (gb->parsed()) {
      GazeParams gp;
      if (!config_path.empty()) gp = load_train_config(config_path).gaze;
      const Dataset ds = read_dataset(data_dir);
      bool recomputed = false;
      const auto boxes =
          load_or_compute_gaze_boxes(ds, gp, data_dir, &recomputed);
      std::size_t total = 0;
      for (const auto& [id, v] : boxes) total += v.size();
      std::cout << (recomputed ? "computed" : "cache hit: loaded") << " "
                << total << " gaze-only boxes across " << boxes.size()
                << " images\n";
    } else if (tr->parsed()) {
      const TrainConfig cfg = load_train_config(config_path);
      const TrainResult res = train(cfg, out_dir, &std::cout);
      std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
      if (!res.records.empty()) {
        std::cout << "final validation metrics:\n";
        print_report(res.records.back().val);
      }
    } else if (ev->parsed()) {
      CheckpointMeta meta;
      Detector<float> det = load_checkpoint<float>(ckpt, &meta);
      check_state(!meta.dataset.empty(),
                  "eval: checkpoint has no dataset path: " + ckpt);
      const Dataset ds = read_dataset(meta.dataset);
      const EvalReport r = evaluate_split(det, ds, split_of(ds, split));
      std::cout << "checkpoint " << ckpt << " on split '" << split << "' ("
                << split_of(ds, split).size() << " images)\n";
      print_report(r);
    } else if (ab->parsed()) {
      const TrainConfig cfg = load_train_config(config_path);
      ablate(cfg, parse_seeds(seeds_csv), out_dir, &std::cout);
      std::cout << "ablation written to " << out_dir << "\n";
    } else if (rp->parsed()) {
      std::cout << report(runs_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
