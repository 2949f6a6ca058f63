#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazedetr/config.hpp"
#include "gazedetr/detector.hpp"
#include "gazedetr/gaze.hpp"
#include "gazedetr/loss.hpp"
#include "gazedetr/metrics.hpp"
#include "gazedetr/rectify.hpp"
#include "gazedetr/synth.hpp"

namespace gazedetr {

// ---------------------------------------------------------------------------
// per-epoch record

struct RunRecord {
  int epoch = 0;
  std::string phase;  // "warmup" or "main"
  double loss_total = 0, loss_class = 0, loss_l1 = 0, loss_giou = 0,
         loss_gaze = 0;
  long gaze_queries_used = 0;        // summed over the epoch
  std::vector<int> positive_classes; // class ids that received targets
  EvalReport val;
  double wall_seconds = 0;  // informational; excluded from equality
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline nlohmann::json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [t, ap] : r.per_threshold_ap)
    per.push_back({t, ap ? nlohmann::json(*ap) : nlohmann::json(nullptr)});
  return nlohmann::json{{"ap_range", opt(r.ap_range)},
                        {"ap_02", opt(r.ap_02)},
                        {"ap_05", opt(r.ap_05)},
                        {"ar", opt(r.ar)},
                        {"confounder_fp", opt(r.confounder_fp)},
                        {"per_threshold_ap", per},
                        {"tp_05", r.tp_05},
                        {"fp_05", r.fp_05},
                        {"fn_05", r.fn_05}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* k) -> std::optional<double> {
    if (j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  EvalReport r;
  r.ap_range = opt("ap_range");
  r.ap_02 = opt("ap_02");
  r.ap_05 = opt("ap_05");
  r.ar = opt("ar");
  r.confounder_fp = opt("confounder_fp");
  for (const auto& e : j.at("per_threshold_ap"))
    r.per_threshold_ap.emplace_back(
        e.at(0).get<double>(),
        e.at(1).is_null() ? std::nullopt
                          : std::optional<double>(e.at(1).get<double>()));
  r.tp_05 = j.at("tp_05").get<long>();
  r.fp_05 = j.at("fp_05").get<long>();
  r.fn_05 = j.at("fn_05").get<long>();
  return r;
}

inline nlohmann::json to_json(const RunRecord& r) {
  return nlohmann::json{{"epoch", r.epoch},
                        {"phase", r.phase},
                        {"loss_total", r.loss_total},
                        {"loss_class", r.loss_class},
                        {"loss_l1", r.loss_l1},
                        {"loss_giou", r.loss_giou},
                        {"loss_gaze", r.loss_gaze},
                        {"gaze_queries_used", r.gaze_queries_used},
                        {"positive_classes", r.positive_classes},
                        {"val", to_json(r.val)},
                        {"wall_seconds", r.wall_seconds},
                        {"seed", r.seed},
                        {"config_hash", r.config_hash}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.phase = j.at("phase").get<std::string>();
  r.loss_total = j.at("loss_total").get<double>();
  r.loss_class = j.at("loss_class").get<double>();
  r.loss_l1 = j.at("loss_l1").get<double>();
  r.loss_giou = j.at("loss_giou").get<double>();
  r.loss_gaze = j.at("loss_gaze").get<double>();
  r.gaze_queries_used = j.at("gaze_queries_used").get<long>();
  r.positive_classes = j.at("positive_classes").get<std::vector<int>>();
  r.val = eval_report_from_json(j.at("val"));
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

// equality used by the reproducibility checks: everything but wall-clock
inline bool records_equal(const RunRecord& a, const RunRecord& b) {
  nlohmann::json ja = to_json(a), jb = to_json(b);
  ja.erase("wall_seconds");
  jb.erase("wall_seconds");
  return ja == jb;
}

// ---------------------------------------------------------------------------
// gaze-only box cache: <dataset>/gaze_boxes.json, keyed by the GazeParams hash

inline std::map<std::string, std::vector<Box>> load_or_compute_gaze_boxes(
    const Dataset& ds, const GazeParams& gp, const std::string& dir,
    bool* recomputed = nullptr) {
  namespace fs = std::filesystem;
  validate(gp);
  const std::string path = (fs::path(dir) / "gaze_boxes.json").string();
  char key[17];
  std::snprintf(key, sizeof key, "%016llx",
                static_cast<unsigned long long>(gaze_params_hash(gp)));

  if (fs::exists(path)) {
    std::ifstream in(path);
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    check_state(!j.is_discarded(), "corrupt gaze box cache: " + path);
    if (j.value("gaze_params_hash", std::string()) == key) {
      std::map<std::string, std::vector<Box>> out;
      for (const auto& [id, arr] : j.at("boxes").items()) {
        std::vector<Box>& v = out[id];
        for (const auto& e : arr)
          v.push_back({e.at(0).get<double>(), e.at(1).get<double>(),
                       e.at(2).get<double>(), e.at(3).get<double>()});
      }
      bool covers_all = true;
      for (const auto& rec : ds.records) covers_all &= out.count(rec.id) > 0;
      if (covers_all) {
        if (recomputed) *recomputed = false;
        return out;
      }
    }
  }

  std::map<std::string, std::vector<Box>> out;
  nlohmann::json boxes_j = nlohmann::json::object();
  for (const auto& rec : ds.records) {
    std::vector<Box> cand;
    for (const auto& lb : rec.scene.candida) cand.push_back(lb.box);
    const auto labeled = process_gaze(rec.scene.gaze, cand, gp,
                                      rec.scene.image.h, rec.scene.image.w);
    std::vector<Box> boxes;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& lb : labeled) {
      arr.push_back({lb.box.cx, lb.box.cy, lb.box.w, lb.box.h});
      boxes.push_back(lb.box);
    }
    boxes_j[rec.id] = std::move(arr);
    out[rec.id] = std::move(boxes);
  }
  const nlohmann::json j{{"gaze_params_hash", key}, {"boxes", boxes_j}};
  std::ofstream outf(path);
  check_state(outf.good(), "cannot write gaze box cache: " + path);
  outf << j.dump(2) << "\n";
  check_state(outf.good(), "write failed: " + path);
  if (recomputed) *recomputed = true;
  return out;
}

// ---------------------------------------------------------------------------
// evaluation: predict over a split, score against annotations

inline EvalReport evaluate_split(Detector<float>& det, const Dataset& ds,
                                 const std::vector<int>& idx,
                                 double score_thresh = 0.5) {
  std::vector<DetectionSet> dets;
  std::vector<std::vector<Box>> gts, confounders;
  for (int i : idx) {
    const SceneRecord& rec = ds.records.at(static_cast<std::size_t>(i));
    dets.push_back(det.predict(rec.scene.image, 0.0, rec.id));
    std::vector<Box> g;
    for (const auto& lb : rec.scene.candida) g.push_back(lb.box);
    gts.push_back(std::move(g));
    confounders.push_back(rec.scene.confounders);
  }
  return evaluate_detections(dets, gts, confounders, score_thresh);
}

inline std::vector<int> split_of(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "val") return ds.val;
  if (name == "test") return ds.test;
  throw std::invalid_argument("unknown split '" + name +
                              "' (want train, val, or test)");
}

// ---------------------------------------------------------------------------
// training loop

struct TrainResult {
  std::vector<RunRecord> records;
  std::string final_checkpoint;
};

namespace detail {

inline void shuffle_indices(std::vector<int>* v, Rng* rng) {
  for (std::size_t i = v->size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng->uniform_int(0, static_cast<long>(i) - 1));
    std::swap((*v)[i - 1], (*v)[j]);
  }
}

inline std::string epoch_dir(const std::string& out_dir, int epoch) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
  return (std::filesystem::path(out_dir) / buf).string();
}

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                         std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  validate(cfg);
  require(!cfg.dataset.empty(), "train: config has no dataset path");
  const Dataset ds = read_dataset(cfg.dataset);
  require(!ds.train.empty(), "train: dataset has an empty train split");

  const auto gaze_boxes =
      load_or_compute_gaze_boxes(ds, cfg.gaze, cfg.dataset);
  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out(fs::path(out_dir) / "config.txt");
    check_state(cfg_out.good(), "cannot write config copy: " + out_dir);
    cfg_out << serialize(cfg);
  }
  std::ofstream records_out(fs::path(out_dir) / "records.jsonl");
  check_state(records_out.good(),
              "cannot open records stream: " + out_dir + "/records.jsonl");

  Detector<float> det(cfg.model, cfg.seed);
  const std::string hash = config_hash(cfg);
  const int q_budget = cfg.model.query_budget;
  const int n_train = static_cast<int>(ds.train.size());
  const int batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps =
      static_cast<long>(cfg.total_epochs) * batches_per_epoch;

  TrainResult result;
  long global_step = 0;
  for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const Phase phase =
        epoch <= cfg.warmup_epochs ? Phase::warmup : Phase::main;
    const Phase target_phase =
        (phase == Phase::warmup && cfg.ggw_enabled) ? Phase::warmup
                                                    : Phase::main;
    const bool inject_gaze = phase == Phase::main && cfg.ggr_enabled;

    std::vector<int> order = ds.train;
    Rng shuffle_rng = derive_rng(cfg.seed, hash_combine(0x0dddULL,
                                                        std::uint64_t(epoch)));
    detail::shuffle_indices(&order, &shuffle_rng);
    Rng jitter_rng = derive_rng(cfg.seed, hash_combine(0x11f7ULL,
                                                       std::uint64_t(epoch)));

    RunRecord rec;
    rec.epoch = epoch;
    rec.phase = phase_name(phase);
    rec.seed = cfg.seed;
    rec.config_hash = hash;
    std::set<int> positive;

    for (int b = 0; b < batches_per_epoch; ++b) {
      const int begin = b * cfg.batch_size;
      const int end = std::min(begin + cfg.batch_size, n_train);
      const int n_in_batch = end - begin;
      auto grads = zero_grads(det.params);

      for (int k = begin; k < end; ++k) {
        const SceneRecord& sr =
            ds.records.at(static_cast<std::size_t>(order[std::size_t(k)]));
        try {
          Tape<float> t;
          const auto bound = bind_params(t, det.params);
          const auto mem = det.backbone_encode(t, bound, sr.scene.image);
          const auto props = det.init_learnable_queries(t, bound, mem);

          const auto it = gaze_boxes.find(sr.id);
          check_state(it != gaze_boxes.end(),
                      "train: no gaze boxes cached for " + sr.id);
          QuerySet<float> qs;
          if (inject_gaze && !it->second.empty()) {
            const auto jittered =
                replicate_and_jitter(it->second, cfg.jitter, jitter_rng);
            const auto contents = flip_class_content(
                t, det.label_embedding(bound),
                static_cast<int>(jittered.size()));
            qs = select_queries(t, props, jittered, contents, q_budget);
          } else {
            qs = det.plain_queries(t, props);
          }
          check_state(qs.size() == q_budget,
                      "train: query budget violated in batch");
          if (phase == Phase::warmup)
            for (const auto& o : qs.origin)
              check_state(o == QueryOrigin::learnable,
                          "train: gaze query during warm-up");

          const auto targets =
              assemble_targets(sr.scene.candida, it->second, target_phase);
          if (phase == Phase::main)
            for (const auto& tt : targets)
              check_state(tt.category == Category::candida,
                          "train: gaze_only target after warm-up");
          for (const auto& tt : targets) positive.insert(int(tt.category));

          const auto dec = det.decode(t, bound, qs, mem);
          const auto loss = detection_loss(t, dec, qs, targets, phase, cfg.loss);
          for (int qi : loss.matched_queries)
            check_state(qs.origin[std::size_t(qi)] == QueryOrigin::learnable,
                        "train: gaze query in the assignment");

          const double lv = double(t.value(loss.total)(0, 0));
          for (const auto& [name, v] :
               {std::pair<const char*, double>{"class", loss.class_term},
                {"l1", loss.l1_term},
                {"giou", loss.giou_term},
                {"gaze", loss.gaze_term},
                {"total", lv}})
            check_state(std::isfinite(v),
                        std::string("train: non-finite ") + name + " loss");

          t.backward(loss.total);
          accumulate_grads(t, bound, &grads);

          rec.loss_total += lv;
          rec.loss_class += loss.class_term;
          rec.loss_l1 += loss.l1_term;
          rec.loss_giou += loss.giou_term;
          rec.loss_gaze += loss.gaze_term;
          long n_gaze_q = 0;
          for (const auto& o : qs.origin) n_gaze_q += o == QueryOrigin::gaze;
          rec.gaze_queries_used += n_gaze_q;
        } catch (const std::exception& e) {
          throw std::runtime_error(
              "train: aborted at epoch " + std::to_string(epoch) + " batch " +
              std::to_string(b) + " image " + sr.id + ": " + e.what());
        }
      }

      const float inv = 1.0f / float(n_in_batch);
      for (auto& g : grads) g *= inv;
      AdamConfig ac;
      ac.lr = cfg.lr * 0.5 *
              (1.0 + std::cos(M_PI * double(global_step) / double(total_steps)));
      ac.beta1 = cfg.beta1;
      ac.beta2 = cfg.beta2;
      adam_step(det.params, grads, ac, ++det.adam_step);
      for (std::size_t i = 0; i < det.params.count(); ++i)
        if (!det.params.values[i].allFinite())
          throw std::runtime_error(
              "train: aborted at epoch " + std::to_string(epoch) + " batch " +
              std::to_string(b) + ": optimizer produced a non-finite value "
              "in parameter " + det.params.names[i]);
      ++global_step;
    }

    const double inv_n = 1.0 / double(n_train);
    rec.loss_total *= inv_n;
    rec.loss_class *= inv_n;
    rec.loss_l1 *= inv_n;
    rec.loss_giou *= inv_n;
    rec.loss_gaze *= inv_n;
    rec.positive_classes.assign(positive.begin(), positive.end());
    try {
      rec.val = evaluate_split(det, ds, ds.val);
    } catch (const std::exception& e) {
      throw std::runtime_error(
          "train: aborted during validation after epoch " +
          std::to_string(epoch) + " (parameters may have diverged): " +
          e.what());
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    CheckpointMeta meta;
    meta.config = cfg.model;
    meta.epoch = epoch;
    meta.phase = rec.phase;
    meta.rng_state = "";  // per-epoch streams are re-derived from (seed, epoch)
    meta.adam_step = det.adam_step;
    meta.dataset = cfg.dataset;
    save_checkpoint(detail::epoch_dir(out_dir, epoch), det, meta);
    if (epoch == cfg.total_epochs)
      save_checkpoint((fs::path(out_dir) / "final").string(), det, meta);

    records_out << to_json(rec).dump() << "\n";
    records_out.flush();
    check_state(records_out.good(), "records stream write failed");
    if (log)
      (*log) << "epoch " << epoch << " (" << rec.phase
             << ") loss=" << rec.loss_total << " val_ap="
             << (rec.val.ap_range ? std::to_string(*rec.val.ap_range) : "n/a")
             << " wall=" << rec.wall_seconds << "s\n";
    result.records.push_back(std::move(rec));
  }

  result.final_checkpoint = (fs::path(out_dir) / "final").string();
  return result;
}

// ---------------------------------------------------------------------------
// ablation: the four-row grid over {ggw, ggr}, several seeds each

struct AblationCell {
  double mean = 0, stddev = 0;
  std::vector<double> per_seed;
};

struct AblationRow {
  std::string name;
  bool ggw = false, ggr = false;
  AblationCell ap_range, ap_02, ap_05, ar, confounder_fp;
  std::vector<std::uint64_t> seeds;
};

inline AblationCell make_cell(const std::vector<double>& xs) {
  AblationCell c;
  c.per_seed = xs;
  if (xs.empty()) return c;
  c.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - c.mean) * (x - c.mean);
    c.stddev = std::sqrt(ss / double(xs.size() - 1));
  }
  return c;
}

inline nlohmann::json to_json(const AblationCell& c) {
  return nlohmann::json{{"mean", c.mean},
                        {"stddev", c.stddev},
                        {"per_seed", c.per_seed}};
}

inline AblationCell ablation_cell_from_json(const nlohmann::json& j) {
  AblationCell c;
  c.mean = j.at("mean").get<double>();
  c.stddev = j.at("stddev").get<double>();
  c.per_seed = j.at("per_seed").get<std::vector<double>>();
  return c;
}

inline nlohmann::json to_json(const AblationRow& r) {
  return nlohmann::json{{"name", r.name},
                        {"ggw", r.ggw},
                        {"ggr", r.ggr},
                        {"ap_range", to_json(r.ap_range)},
                        {"ap_02", to_json(r.ap_02)},
                        {"ap_05", to_json(r.ap_05)},
                        {"ar", to_json(r.ar)},
                        {"confounder_fp", to_json(r.confounder_fp)},
                        {"seeds", r.seeds}};
}

inline AblationRow ablation_row_from_json(const nlohmann::json& j) {
  AblationRow r;
  r.name = j.at("name").get<std::string>();
  r.ggw = j.at("ggw").get<bool>();
  r.ggr = j.at("ggr").get<bool>();
  r.ap_range = ablation_cell_from_json(j.at("ap_range"));
  r.ap_02 = ablation_cell_from_json(j.at("ap_02"));
  r.ap_05 = ablation_cell_from_json(j.at("ap_05"));
  r.ar = ablation_cell_from_json(j.at("ar"));
  r.confounder_fp = ablation_cell_from_json(j.at("confounder_fp"));
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  return r;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o << "config      GGW GGR  AP_{0.2:0.5}      AP_{0.2}          AP_{0.5}"
       "          AR                confounder_fp\n";
  auto cell = [](const AblationCell& c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", c.mean, c.stddev);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-11s %-3s %-3s  %-17s %-17s %-17s %-17s %s\n",
                  r.name.c_str(), r.ggw ? "yes" : "no", r.ggr ? "yes" : "no",
                  cell(r.ap_range).c_str(), cell(r.ap_02).c_str(),
                  cell(r.ap_05).c_str(), cell(r.ar).c_str(),
                  cell(r.confounder_fp).c_str());
    o << line;
  }
  return o.str();
}

// Trains rows x seeds into out_dir/<row>/seed_<s>/ and aggregates the final
// epoch's validation report per run. Row order is fixed.
inline std::vector<AblationRow> ablate(const TrainConfig& base,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::string& out_dir,
                                       std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  require(!seeds.empty(), "ablate: need at least one seed");
  const std::vector<std::tuple<std::string, bool, bool>> grid = {
      {"baseline", false, false},
      {"ggw", true, false},
      {"ggr", false, true},
      {"ggw_ggr", true, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& [name, ggw, ggr] : grid) {
    AblationRow row;
    row.name = name;
    row.ggw = ggw;
    row.ggr = ggr;
    row.seeds = seeds;
    std::vector<double> ap_range, ap_02, ap_05, ar, cfp;
    for (std::uint64_t s : seeds) {
      TrainConfig cfg = base;
      cfg.ggw_enabled = ggw;
      cfg.ggr_enabled = ggr;
      cfg.seed = s;
      const std::string run_dir =
          (fs::path(out_dir) / name / ("seed_" + std::to_string(s))).string();
      if (log) (*log) << "=== " << name << " seed " << s << " ===\n";
      const TrainResult res = train(cfg, run_dir, log);
      const EvalReport& val = res.records.back().val;
      check_state(val.ap_range && val.ap_02 && val.ap_05 && val.ar &&
                      val.confounder_fp,
                  "ablate: validation split produced no-GT metrics");
      ap_range.push_back(*val.ap_range);
      ap_02.push_back(*val.ap_02);
      ap_05.push_back(*val.ap_05);
      ar.push_back(*val.ar);
      cfp.push_back(*val.confounder_fp);
    }
    row.ap_range = make_cell(ap_range);
    row.ap_02 = make_cell(ap_02);
    row.ap_05 = make_cell(ap_05);
    row.ar = make_cell(ar);
    row.confounder_fp = make_cell(cfp);
    rows.push_back(std::move(row));
  }

  fs::create_directories(out_dir);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  std::ofstream jf(fs::path(out_dir) / "ablation.json");
  check_state(jf.good(), "cannot write ablation.json in " + out_dir);
  jf << nlohmann::json{{"rows", arr}}.dump(2) << "\n";
  std::ofstream tf(fs::path(out_dir) / "table.txt");
  tf << ablation_table(rows);
  if (log) (*log) << ablation_table(rows);
  return rows;
}

// ---------------------------------------------------------------------------
// report: comparison table + PR-curve plot data from the stored runs

// pooled PR points at one IoU threshold, in descending score order
inline std::vector<std::pair<double, double>> pr_curve_points(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts, double iou_thresh) {
  const auto pooled = detail::pool_detections(dets, gts, iou_thresh, -1);
  const std::size_t n_gt = detail::total_gt(gts);
  std::vector<std::pair<double, double>> pts;
  if (n_gt == 0) return pts;
  long tp = 0, fp = 0;
  for (const auto& d : pooled) {
    d.tp ? ++tp : ++fp;
    pts.emplace_back(double(tp) / double(n_gt), double(tp) / double(tp + fp));
  }
  return pts;
}

inline std::vector<AblationRow> load_ablation(const std::string& runs_dir) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(runs_dir) / "ablation.json").string();
  std::ifstream in(path);
  check_state(in.good(), "missing ablation results: " + path);
  const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  check_state(!j.is_discarded(), "corrupt ablation results: " + path);
  std::vector<AblationRow> rows;
  for (const auto& e : j.at("rows")) rows.push_back(ablation_row_from_json(e));
  return rows;
}

// Renders table.txt-style output and one PR CSV per row (first seed's final
// checkpoint, validation split, IoU 0.5).
inline std::string report(const std::string& runs_dir,
                          std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const auto rows = load_ablation(runs_dir);
  std::string out = ablation_table(rows);

  for (const auto& row : rows) {
    check_state(!row.seeds.empty(), "report: row without seeds");
    const std::string ckpt =
        (fs::path(runs_dir) / row.name /
         ("seed_" + std::to_string(row.seeds.front())) / "final")
            .string();
    CheckpointMeta meta;
    Detector<float> det = load_checkpoint<float>(ckpt, &meta);
    check_state(!meta.dataset.empty(),
                "report: checkpoint lacks a dataset path: " + ckpt);
    const Dataset ds = read_dataset(meta.dataset);
    std::vector<DetectionSet> dets;
    std::vector<std::vector<Box>> gts;
    for (int i : ds.val) {
      const SceneRecord& rec = ds.records.at(static_cast<std::size_t>(i));
      dets.push_back(det.predict(rec.scene.image, 0.0, rec.id));
      std::vector<Box> g;
      for (const auto& lb : rec.scene.candida) g.push_back(lb.box);
      gts.push_back(std::move(g));
    }
    const auto pts = pr_curve_points(dets, gts, 0.5);
    const std::string csv_path =
        (fs::path(runs_dir) / ("pr_" + row.name + ".csv")).string();
    std::ofstream csv(csv_path);
    check_state(csv.good(), "cannot write " + csv_path);
    csv << "recall,precision\n";
    csv.precision(10);
    for (const auto& [r, p] : pts) csv << r << "," << p << "\n";
    out += "pr curve: " + csv_path + " (" + std::to_string(pts.size()) +
           " points)\n";
  }
  std::ofstream rf(fs::path(runs_dir) / "report.txt");
  rf << out;
  if (log) (*log) << out;
  return out;
}

}  // namespace gazedetr
