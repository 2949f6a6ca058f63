#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gazedetr/common.hpp"
#include "gazedetr/detector.hpp"
#include "gazedetr/gaze.hpp"
#include "gazedetr/loss.hpp"
#include "gazedetr/rectify.hpp"
#include "gazedetr/synth.hpp"

namespace gazedetr {

struct TrainConfig {
  double lr = 3e-4;
  std::string optimizer = "adam";
  std::string schedule = "cosine";
  double beta1 = 0.9, beta2 = 0.999;
  int total_epochs = 50;
  int warmup_epochs = 5;
  int batch_size = 8;
  std::uint64_t seed = 1;
  bool ggw_enabled = true;
  bool ggr_enabled = true;
  std::string dataset;
  ModelConfig model;
  GazeParams gaze;
  JitterParams jitter;
  LossWeights loss;

  // Training needs one proposal per budget slot on the gaze-free path, so
  // the trainable default raises the proposal count to the budget.
  TrainConfig() { model.n_learnable_queries = model.query_budget; }
};

inline void validate(const TrainConfig& c) {
  require(c.lr > 0, "TrainConfig: lr must be > 0");
  require(c.optimizer == "adam", "TrainConfig: unsupported optimizer '" +
                                     c.optimizer + "' (only adam)");
  require(c.schedule == "cosine", "TrainConfig: unsupported schedule '" +
                                      c.schedule + "' (only cosine)");
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1,
          "TrainConfig: betas must lie in [0, 1)");
  require(c.total_epochs >= 1, "TrainConfig: total_epochs must be >= 1");
  require(c.warmup_epochs >= 0, "TrainConfig: warmup_epochs must be >= 0");
  require(c.warmup_epochs < c.total_epochs,
          "TrainConfig: warmup_epochs must be < total_epochs");
  require(c.batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  validate(c.model);
  validate(c.gaze);
  validate(c.jitter);
  validate(c.loss);
  require(c.jitter.max_gaze_queries < c.model.query_budget,
          "TrainConfig: jitter.max_gaze_queries must be below the query "
          "budget");
  require(c.model.n_learnable_queries >= c.model.query_budget,
          "TrainConfig: n_learnable_queries must cover query_budget so the "
          "gaze-free query path can fill the budget");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(),
          "config: key '" + key + "' needs a number, got '" + v + "'");
  return out;
}

inline long parse_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(),
          "config: key '" + key + "' needs an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(),
          "config: key '" + key + "' needs an unsigned integer, got '" + v +
              "'");
  return static_cast<std::uint64_t>(out);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key +
                              "' needs true/false, got '" + v + "'");
}

// key=value lines; '#' starts a comment; blank lines are skipped
template <typename Setter>
void parse_flat_text(const std::string& text, const Setter& set) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config: line " + std::to_string(line_no) +
                                         " is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    require(!key.empty(),
            "config: empty key on line " + std::to_string(line_no));
    set(key, val, line_no);
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_state(in.good(), "cannot open config file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace detail

inline TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig c;
  using Set = std::function<void(TrainConfig&, const std::string&,
                                 const std::string&)>;
  static const std::map<std::string, Set> setters = {
      {"lr", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.lr = detail::parse_double(k, v);
       }},
      {"optimizer",
       [](TrainConfig& c, const std::string&, const std::string& v) {
         c.optimizer = v;
       }},
      {"schedule",
       [](TrainConfig& c, const std::string&, const std::string& v) {
         c.schedule = v;
       }},
      {"beta1", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.beta1 = detail::parse_double(k, v);
       }},
      {"beta2", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.beta2 = detail::parse_double(k, v);
       }},
      {"total_epochs",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.total_epochs = static_cast<int>(detail::parse_long(k, v));
       }},
      {"warmup_epochs",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.warmup_epochs = static_cast<int>(detail::parse_long(k, v));
       }},
      {"batch_size",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.batch_size = static_cast<int>(detail::parse_long(k, v));
       }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.seed = detail::parse_u64(k, v);
       }},
      {"ggw_enabled",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.ggw_enabled = detail::parse_bool(k, v);
       }},
      {"ggr_enabled",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.ggr_enabled = detail::parse_bool(k, v);
       }},
      {"dataset", [](TrainConfig& c, const std::string&, const std::string& v) {
         c.dataset = v;
       }},
      {"model.d_model",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.d_model = static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.n_heads",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.n_heads = static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.n_encoder_layers",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.n_encoder_layers = static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.n_decoder_layers",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.n_decoder_layers = static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.n_learnable_queries",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.n_learnable_queries =
             static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.query_budget",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.query_budget = static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.feature_stride",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.feature_stride = static_cast<int>(detail::parse_long(k, v));
       }},
      {"model.n_classes",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.n_classes = static_cast<int>(detail::parse_long(k, v));
       }},
      {"gaze.sigma_px",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.gaze.sigma_px = detail::parse_double(k, v);
       }},
      {"gaze.tau_rel",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.gaze.tau_rel = detail::parse_double(k, v);
       }},
      {"gaze.min_area_px",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.gaze.min_area_px = detail::parse_double(k, v);
       }},
      {"gaze.overlap_tau",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.gaze.overlap_tau = detail::parse_double(k, v);
       }},
      {"jitter.sigma_x",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.jitter.sigma_x = detail::parse_double(k, v);
       }},
      {"jitter.sigma_y",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.jitter.sigma_y = detail::parse_double(k, v);
       }},
      {"jitter.sigma_w",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.jitter.sigma_w = detail::parse_double(k, v);
       }},
      {"jitter.sigma_h",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.jitter.sigma_h = detail::parse_double(k, v);
       }},
      {"jitter.k",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.jitter.k = static_cast<int>(detail::parse_long(k, v));
       }},
      {"jitter.max_gaze_queries",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.jitter.max_gaze_queries = static_cast<int>(detail::parse_long(k, v));
       }},
      {"loss.w_class",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.loss.w_class = detail::parse_double(k, v);
       }},
      {"loss.w_l1",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.loss.w_l1 = detail::parse_double(k, v);
       }},
      {"loss.w_giou",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.loss.w_giou = detail::parse_double(k, v);
       }},
      {"loss.w_noobj",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.loss.w_noobj = detail::parse_double(k, v);
       }},
      {"loss.w_gazequery",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.loss.w_gazequery = detail::parse_double(k, v);
       }},
  };

  detail::parse_flat_text(text, [&](const std::string& key,
                                    const std::string& val, int line_no) {
    const auto it = setters.find(key);
    require(it != setters.end(), "config: unknown key '" + key + "' on line " +
                                     std::to_string(line_no));
    it->second(c, key, val);
  });
  validate(c);
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  try {
    return parse_train_config_text(detail::read_text_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

// canonical form: one key per line, fixed order — also the hash input
inline std::string serialize(const TrainConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "lr = " << c.lr << "\n";
  o << "optimizer = " << c.optimizer << "\n";
  o << "schedule = " << c.schedule << "\n";
  o << "beta1 = " << c.beta1 << "\n";
  o << "beta2 = " << c.beta2 << "\n";
  o << "total_epochs = " << c.total_epochs << "\n";
  o << "warmup_epochs = " << c.warmup_epochs << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "seed = " << c.seed << "\n";
  o << "ggw_enabled = " << (c.ggw_enabled ? "true" : "false") << "\n";
  o << "ggr_enabled = " << (c.ggr_enabled ? "true" : "false") << "\n";
  o << "dataset = " << c.dataset << "\n";
  o << "model.d_model = " << c.model.d_model << "\n";
  o << "model.n_heads = " << c.model.n_heads << "\n";
  o << "model.n_encoder_layers = " << c.model.n_encoder_layers << "\n";
  o << "model.n_decoder_layers = " << c.model.n_decoder_layers << "\n";
  o << "model.n_learnable_queries = " << c.model.n_learnable_queries << "\n";
  o << "model.query_budget = " << c.model.query_budget << "\n";
  o << "model.feature_stride = " << c.model.feature_stride << "\n";
  o << "model.n_classes = " << c.model.n_classes << "\n";
  o << "gaze.sigma_px = " << c.gaze.sigma_px << "\n";
  o << "gaze.tau_rel = " << c.gaze.tau_rel << "\n";
  o << "gaze.min_area_px = " << c.gaze.min_area_px << "\n";
  o << "gaze.overlap_tau = " << c.gaze.overlap_tau << "\n";
  o << "jitter.sigma_x = " << c.jitter.sigma_x << "\n";
  o << "jitter.sigma_y = " << c.jitter.sigma_y << "\n";
  o << "jitter.sigma_w = " << c.jitter.sigma_w << "\n";
  o << "jitter.sigma_h = " << c.jitter.sigma_h << "\n";
  o << "jitter.k = " << c.jitter.k << "\n";
  o << "jitter.max_gaze_queries = " << c.jitter.max_gaze_queries << "\n";
  o << "loss.w_class = " << c.loss.w_class << "\n";
  o << "loss.w_l1 = " << c.loss.w_l1 << "\n";
  o << "loss.w_giou = " << c.loss.w_giou << "\n";
  o << "loss.w_noobj = " << c.loss.w_noobj << "\n";
  o << "loss.w_gazequery = " << c.loss.w_gazequery << "\n";
  return o.str();
}

inline std::string config_hash(const TrainConfig& c) {
  const std::string s = serialize(c);
  std::uint64_t h = 0x6a7a64657472ULL;
  for (unsigned char ch : s) h = hash_combine(h, ch);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::uint64_t gaze_params_hash(const GazeParams& p) {
  std::uint64_t h = 0x67617a65ULL;
  for (double d : {p.sigma_px, p.tau_rel, p.min_area_px, p.overlap_tau})
    h = hash_combine(h, std::bit_cast<std::uint64_t>(d));
  return h;
}

// generator settings for `gen-data`: scene statistics plus the gaze simulator
struct DataGenConfig {
  int n_scenes = 500;
  SceneSpec scene;
  GazeSimParams sim;
};

inline void validate(const DataGenConfig& c) {
  require(c.n_scenes >= 0, "DataGenConfig: n_scenes must be >= 0");
  validate(c.scene);
  validate(c.sim);
}

inline DataGenConfig parse_datagen_config_text(const std::string& text) {
  DataGenConfig c;
  using Set = std::function<void(DataGenConfig&, const std::string&,
                                 const std::string&)>;
  static const std::map<std::string, Set> setters = {
      {"n_scenes",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.n_scenes = static_cast<int>(detail::parse_long(k, v));
       }},
      {"seed", [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.seed = detail::parse_u64(k, v);
       }},
      {"h", [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.h = static_cast<int>(detail::parse_long(k, v));
       }},
      {"w", [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.w = static_cast<int>(detail::parse_long(k, v));
       }},
      {"n_candida_min",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.n_candida_min = static_cast<int>(detail::parse_long(k, v));
       }},
      {"n_candida_max",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.n_candida_max = static_cast<int>(detail::parse_long(k, v));
       }},
      {"n_confounder_min",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.n_confounder_min = static_cast<int>(detail::parse_long(k, v));
       }},
      {"n_confounder_max",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.n_confounder_max = static_cast<int>(detail::parse_long(k, v));
       }},
      {"n_cells_min",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.n_cells_min = static_cast<int>(detail::parse_long(k, v));
       }},
      {"n_cells_max",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.n_cells_max = static_cast<int>(detail::parse_long(k, v));
       }},
      {"noise_std",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.scene.noise_std = detail::parse_double(k, v);
       }},
      {"dwell_ms_candida",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.sim.dwell_ms_candida = detail::parse_double(k, v);
       }},
      {"dwell_ms_confounder",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.sim.dwell_ms_confounder = detail::parse_double(k, v);
       }},
      {"fix_per_object",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.sim.fix_per_object = static_cast<int>(detail::parse_long(k, v));
       }},
      {"jitter_px",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.sim.jitter_px = detail::parse_double(k, v);
       }},
      {"background_fix_rate",
       [](DataGenConfig& c, const std::string& k, const std::string& v) {
         c.sim.background_fix_rate = detail::parse_double(k, v);
       }},
  };
  detail::parse_flat_text(text, [&](const std::string& key,
                                    const std::string& val, int line_no) {
    const auto it = setters.find(key);
    require(it != setters.end(), "config: unknown key '" + key + "' on line " +
                                     std::to_string(line_no));
    it->second(c, key, val);
  });
  validate(c);
  return c;
}

inline DataGenConfig load_datagen_config(const std::string& path) {
  try {
    return parse_datagen_config_text(detail::read_text_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

}  // namespace gazedetr
