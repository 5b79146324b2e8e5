#include "gelfab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gelfab/errors.hpp"

namespace gelfab {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be positive");
  if (!(margin > 0.0)) throw std::invalid_argument("train.margin must be positive");
  if (!(negative_ratio > 0.0 && negative_ratio < 1.0)) {
    throw std::invalid_argument("train.negative_ratio must lie in (0, 1)");
  }
  if (!(aux_weight >= 0.0)) throw std::invalid_argument("train.aux_weight must be non-negative");
}

std::uint32_t TrainConfig::negatives_per_batch() const {
  return static_cast<std::uint32_t>(std::lround(batch_size * negative_ratio));
}

GroupSampler::GroupSampler(const Dataset& ds, const JointModel& model, std::vector<int> fabric_ids,
                           const std::vector<bool>* allowed)
    : ds_(&ds), modalities_(model.branch_modalities), fabric_ids_(std::move(fabric_ids)) {
  if (fabric_ids_.empty()) throw std::invalid_argument("sampler needs at least one fabric");
  if (allowed && allowed->size() != ds.observations.size()) {
    throw std::invalid_argument("observation filter length differs from dataset");
  }
  for (std::size_t b = 0; b < modalities_.size(); ++b) {
    const bool multi = model.arch == Architecture::MultiInput && b == 2;
    presses_.push_back(multi ? model.touch_presses : 1);
  }
  std::map<int, bool> wanted;
  for (int id : fabric_ids_) wanted[id] = true;
  for (const auto& f : ds.fabrics) {
    if (wanted.count(f.id)) cluster_of_[f.id] = f.cluster_id.value_or(0);
  }
  for (int id : fabric_ids_) {
    if (!cluster_of_.count(id)) throw std::invalid_argument("unknown fabric id " + std::to_string(id));
  }
  for (std::size_t i = 0; i < ds.observations.size(); ++i) {
    const auto& o = ds.observations[i];
    if (!wanted.count(o.fabric_id) || (allowed && !(*allowed)[i])) continue;
    pool_[{o.fabric_id, o.modality}].push_back(&o);
  }
  for (int id : fabric_ids_) {
    for (Modality m : modalities_) {
      if (pool_[{id, m}].empty()) {
        throw std::invalid_argument("fabric " + std::to_string(id) + " has no " +
                                    std::string(modality_name(m)) + " observations");
      }
    }
  }
}

const Observation* GroupSampler::pick(Rng& rng, int fabric, std::size_t branch) const {
  const auto& v = pool_.at({fabric, modalities_[branch]});
  return v[rng.below(v.size())];
}

std::vector<const Observation*> GroupSampler::pick_presses(Rng& rng, int fabric,
                                                           std::size_t branch) const {
  const std::size_t want = presses_[branch];
  if (want == 1) return {pick(rng, fabric, branch)};
  auto v = pool_.at({fabric, modalities_[branch]});
  std::vector<const Observation*> out;
  if (v.size() >= want) {
    // partial Fisher-Yates: distinct presses
    for (std::size_t i = 0; i < want; ++i) {
      std::swap(v[i], v[i + rng.below(v.size() - i)]);
      out.push_back(v[i]);
    }
  } else {
    for (std::size_t i = 0; i < want; ++i) out.push_back(v[rng.below(v.size())]);
  }
  return out;
}

TripletGroup GroupSampler::sample(Rng& rng, int y) const {
  const std::size_t nb = modalities_.size();
  std::vector<int> fabrics(nb);
  if (y == 0) {
    const int f = fabric_ids_[rng.below(fabric_ids_.size())];
    std::fill(fabrics.begin(), fabrics.end(), f);
  } else if (y == 1) {
    if (fabric_ids_.size() < 2) throw std::invalid_argument("negative groups need two fabrics");
    bool all_equal = true;
    while (all_equal) {
      for (auto& f : fabrics) f = fabric_ids_[rng.below(fabric_ids_.size())];
      all_equal = std::all_of(fabrics.begin(), fabrics.end(), [&](int f) { return f == fabrics[0]; });
    }
  } else {
    throw std::invalid_argument("label Y must be 0 or 1");
  }
  TripletGroup g;
  g.y = y;
  for (std::size_t b = 0; b < nb; ++b) {
    g.branches.push_back(pick_presses(rng, fabrics[b], b));
    g.cluster_labels.push_back(cluster_of_.at(fabrics[b]));
  }
  return g;
}

TripletGroup sample_group(const GroupSampler& sampler, Rng& rng, double negative_ratio) {
  const int y = rng.uniform() < negative_ratio ? 1 : 0;
  return sampler.sample(rng, y);
}

std::vector<TripletGroup> make_batch(const GroupSampler& sampler, Rng& rng, const TrainConfig& config) {
  const std::uint32_t negatives = config.negatives_per_batch();
  std::vector<TripletGroup> batch;
  batch.reserve(config.batch_size);
  for (std::uint32_t i = 0; i < config.batch_size; ++i) batch.push_back(sampler.sample(rng, i < negatives ? 1 : 0));
  return batch;
}

TrainResult train(JointModel model, const GroupSampler& sampler, const TrainConfig& config) {
  config.validate();
  model.margin = config.margin;
  model.aux_weight = config.aux_weight;

  std::vector<AdamState> enc_state, head_state;
  for (const auto& e : model.encoders) enc_state.emplace_back(e.parameter_count(), config.learning_rate);
  for (const auto& h : model.heads) head_state.emplace_back(h.params.size(), config.learning_rate);

  Rng rng(derive_seed(config.master_seed, "sample"));
  const double inv_batch = 1.0 / config.batch_size;

  TrainResult result;
  result.loss_history.reserve(config.iterations);
  for (std::uint32_t it = 0; it < config.iterations; ++it) {
    std::vector<Vector> enc_grad, head_grad;
    for (const auto& e : model.encoders) enc_grad.emplace_back(e.parameter_count(), 0.0);
    for (const auto& h : model.heads) head_grad.emplace_back(h.params.size(), 0.0);
    double loss = 0.0;
    for (const auto& group : make_batch(sampler, rng, config)) {
      const auto out = model_forward(model, group);
      loss += out.total;
      for (std::size_t e = 0; e < enc_grad.size(); ++e)
        for (std::size_t p = 0; p < enc_grad[e].size(); ++p) enc_grad[e][p] += out.grads.encoders[e][p];
      for (std::size_t h = 0; h < head_grad.size(); ++h)
        for (std::size_t p = 0; p < head_grad[h].size(); ++p) head_grad[h][p] += out.grads.heads[h][p];
    }
    loss *= inv_batch;
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite training loss at iteration " + std::to_string(it));
    }
    result.loss_history.push_back(loss);
    for (std::size_t e = 0; e < enc_grad.size(); ++e) {
      for (auto& g : enc_grad[e]) g *= inv_batch;
      adam_step(model.encoders[e].params(), enc_grad[e], enc_state[e]);
    }
    for (std::size_t h = 0; h < head_grad.size(); ++h) {
      for (auto& g : head_grad[h]) g *= inv_batch;
      adam_step(model.heads[h].params, head_grad[h], head_state[h]);
    }
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(JointModel model, const Dataset& ds, const TrainConfig& config) {
  GroupSampler sampler(ds, model, ds.train_ids());
  return train(std::move(model), sampler, config);
}

std::string loss_history_csv(const std::vector<double>& history,
                             const std::vector<std::string>& comment_lines) {
  std::string out;
  for (const auto& c : comment_lines) out += "# " + c + "\n";
  out += "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, history[i]);
    out += buf;
  }
  return out;
}

}  // namespace gelfab
