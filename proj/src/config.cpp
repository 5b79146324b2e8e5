#include "gelfab/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "gelfab/binio.hpp"
#include "gelfab/errors.hpp"

namespace gelfab {

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d = {
      {"world.seed", "1"},
      {"world.n_fabrics", "118"},
      {"world.noise_std", "0.05"},
      {"world.feature_dim", "32"},
      {"world.nuisance_rank", "4"},
      {"world.nuisance_scale", "0.5"},
      {"world.instances.depth", "10"},
      {"world.instances.color", "10"},
      {"world.instances.touch_flat", "10"},
      {"world.instances.touch_fold", "15"},
      {"split.n_test", "18"},
      {"cluster.k", "8"},
      {"train.learning_rate", "0.001"},
      {"train.batch_size", "32"},
      {"train.iterations", "2000"},
      {"train.margin", "2"},
      {"train.negative_ratio", "0.5"},
      {"train.aux_weight", "1"},
      {"train.master_seed", "1"},
      {"eval.n_candidates", "10"},
      {"eval.n_distractor_fabrics", "9"},
      {"eval.repetitions", "10"},
      {"eval.prob_coefficient", "0.085"},
      {"eval.top_ks", "1,3"},
      {"eval.seed", "1"},
      {"eval.split", "test"},
      {"eval.query_modality", "touch_fold"},
      {"eval.candidate_modality", "depth"},
      {"model.arch", "cross_modal"},
      {"model.embedding_dim", "64"},
      {"model.hidden_dims", "64"},
      {"model.touch_modality", "touch_fold"},
      {"model.snn_modalities", "depth,depth"},
      {"model.touch_presses", "3"},
      {"ingest.augment", "false"},
      {"ingest.color_variants", "2"},
      {"ingest.backbone_seed", "7"},
      {"paths.dataset", "dataset.gfds"},
      {"paths.checkpoint", "model.gfab"},
      {"paths.loss_csv", "loss.csv"},
      {"paths.report", "precision.csv"},
      {"paths.confusion", "confusion.csv"},
      {"paths.cluster_confusion", "cluster_confusion.csv"},
      {"paths.heatmap", "confusion.pgm"},
  };
  return d;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint32_t as_u32(const std::string& key, const std::string& v) {
  const auto x = as_u64(key, v);
  if (x > UINT32_MAX) throw ConfigError(key + ": value too large");
  return static_cast<std::uint32_t>(x);
}

int as_int(const std::string& key, const std::string& v) {
  const auto x = as_u64(key, v);
  if (x > 1'000'000'000) throw ConfigError(key + ": value too large");
  return static_cast<int>(x);
}

double as_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

Modality as_modality(const std::string& key, const std::string& v) {
  try {
    return parse_modality(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

// Runs a typed constructor and reports std::invalid_argument as ConfigError.
template <class Fn>
auto checked(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    cfg.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return parse(binio::read_file(path)); }

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

GenerateOptions RunConfig::generate_options() const {
  GenerateOptions o;
  o.n_fabrics = as_int("world.n_fabrics", get("world.n_fabrics"));
  o.n_test = n_test();
  o.cluster_k = static_cast<int>(cluster_k());
  o.world.seed = as_u64("world.seed", get("world.seed"));
  o.world.noise_std = as_real("world.noise_std", get("world.noise_std"));
  o.world.feature_dim = as_u32("world.feature_dim", get("world.feature_dim"));
  o.world.nuisance_rank = as_u32("world.nuisance_rank", get("world.nuisance_rank"));
  o.world.nuisance_scale = as_real("world.nuisance_scale", get("world.nuisance_scale"));
  o.counts.depth = as_int("world.instances.depth", get("world.instances.depth"));
  o.counts.color = as_int("world.instances.color", get("world.instances.color"));
  o.counts.touch_flat = as_int("world.instances.touch_flat", get("world.instances.touch_flat"));
  o.counts.touch_fold = as_int("world.instances.touch_fold", get("world.instances.touch_fold"));
  if (o.n_fabrics < 1) throw ConfigError("world.n_fabrics must be >= 1");
  if (o.world.noise_std < 0.0) throw ConfigError("world.noise_std must be >= 0");
  if (o.world.feature_dim < 1) throw ConfigError("world.feature_dim must be >= 1");
  if (o.world.nuisance_scale < 0.0) throw ConfigError("world.nuisance_scale must be >= 0");
  if (o.cluster_k > o.n_fabrics) {
    throw ConfigError("cluster.k (" + std::to_string(o.cluster_k) +
                      ") must not exceed world.n_fabrics (" + std::to_string(o.n_fabrics) + ")");
  }
  if (o.n_test >= o.n_fabrics) {
    throw ConfigError("split.n_test (" + std::to_string(o.n_test) +
                      ") must be smaller than world.n_fabrics (" + std::to_string(o.n_fabrics) + ")");
  }
  return o;
}

ModelOptions RunConfig::model_options(std::size_t feature_dim) const {
  ModelOptions o;
  o.arch = checked([&] { return parse_architecture(get("model.arch")); });
  o.feature_dim = feature_dim;
  o.embedding_dim = as_u32("model.embedding_dim", get("model.embedding_dim"));
  o.hidden_dims.clear();
  if (!get("model.hidden_dims").empty()) {
    for (const auto& h : split_list(get("model.hidden_dims")))
      o.hidden_dims.push_back(as_u32("model.hidden_dims", h));
  }
  for (auto h : o.hidden_dims)
    if (h < 1) throw ConfigError("model.hidden_dims entries must be >= 1");
  if (o.embedding_dim < 1) throw ConfigError("model.embedding_dim must be >= 1");
  o.touch_modality = as_modality("model.touch_modality", get("model.touch_modality"));
  if (!is_touch(o.touch_modality)) throw ConfigError("model.touch_modality must be a touch modality");
  const auto snn = split_list(get("model.snn_modalities"));
  if (snn.size() != 2) throw ConfigError("model.snn_modalities needs two modalities");
  o.snn_first = as_modality("model.snn_modalities", snn[0]);
  o.snn_second = as_modality("model.snn_modalities", snn[1]);
  o.touch_presses = as_u32("model.touch_presses", get("model.touch_presses"));
  if (o.touch_presses < 2) throw ConfigError("model.touch_presses must be >= 2");
  o.classes = cluster_k();
  const auto tc = train_config();
  o.margin = tc.margin;
  o.aux_weight = tc.aux_weight;
  return o;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.learning_rate = as_real("train.learning_rate", get("train.learning_rate"));
  c.batch_size = as_u32("train.batch_size", get("train.batch_size"));
  c.iterations = as_u32("train.iterations", get("train.iterations"));
  c.margin = as_real("train.margin", get("train.margin"));
  c.negative_ratio = as_real("train.negative_ratio", get("train.negative_ratio"));
  c.aux_weight = as_real("train.aux_weight", get("train.aux_weight"));
  c.master_seed = as_u64("train.master_seed", get("train.master_seed"));
  checked([&] {
    c.validate();
    return 0;
  });
  return c;
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig c;
  c.n_candidates = as_u32("eval.n_candidates", get("eval.n_candidates"));
  c.n_distractor_fabrics = as_u32("eval.n_distractor_fabrics", get("eval.n_distractor_fabrics"));
  c.repetitions = as_u32("eval.repetitions", get("eval.repetitions"));
  c.prob_coefficient = as_real("eval.prob_coefficient", get("eval.prob_coefficient"));
  c.top_ks.clear();
  for (const auto& k : split_list(get("eval.top_ks"))) c.top_ks.push_back(as_u32("eval.top_ks", k));
  c.seed = as_u64("eval.seed", get("eval.seed"));
  const auto& split = get("eval.split");
  if (split != "test" && split != "train" && split != "all") {
    throw ConfigError("eval.split must be test, train or all");
  }
  as_modality("eval.query_modality", get("eval.query_modality"));
  as_modality("eval.candidate_modality", get("eval.candidate_modality"));
  checked([&] {
    c.validate();
    return 0;
  });
  return c;
}

IngestOptions RunConfig::ingest_options() const {
  IngestOptions o;
  o.augment = as_bool("ingest.augment", get("ingest.augment"));
  o.color_variants = as_int("ingest.color_variants", get("ingest.color_variants"));
  o.backbone_seed = as_u64("ingest.backbone_seed", get("ingest.backbone_seed"));
  o.augment_seed = derive_seed(o.backbone_seed, "augment");
  return o;
}

int RunConfig::n_test() const { return as_int("split.n_test", get("split.n_test")); }

std::size_t RunConfig::cluster_k() const {
  const auto k = as_u32("cluster.k", get("cluster.k"));
  if (k < 1) throw ConfigError("cluster.k must be >= 1");
  return k;
}

void RunConfig::validate() const {
  generate_options();
  model_options(1);
  train_config();
  eval_config();
  ingest_options();
}

std::vector<std::string> RunConfig::echo() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k + " = " + v);
  return out;
}

}  // namespace gelfab
