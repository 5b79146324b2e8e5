#include "gelfab/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "gelfab/rng.hpp"

namespace gelfab {

void EvalConfig::validate() const {
  if (n_candidates != n_distractor_fabrics + 1) {
    throw std::invalid_argument("eval.n_candidates must equal eval.n_distractor_fabrics + 1");
  }
  if (!(prob_coefficient > 0.0)) throw std::invalid_argument("eval.prob_coefficient must be positive");
  if (repetitions < 1) throw std::invalid_argument("eval.repetitions must be positive");
  if (top_ks.empty()) throw std::invalid_argument("eval.top_ks must not be empty");
  for (auto k : top_ks)
    if (k < 1) throw std::invalid_argument("eval.top_ks entries must be positive");
}

std::vector<std::size_t> pick_one_of_n(const Vector& query, const std::vector<Vector>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to rank");
  Vector d(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) d[i] = pair_distance(query, candidates[i]);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  return order;
}

Vector match_probability(const Vector& target, const std::vector<Vector>& candidates, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("probability coefficient must be positive");
  if (candidates.empty()) throw std::invalid_argument("no candidates for match probability");
  Vector logp(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = pair_distance(target, candidates[i]);
    logp[i] = -c * d * d;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double sum = 0.0;
  for (auto& v : logp) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : logp) v /= sum;
  return logp;
}

EmbeddingBank embed_bank(const JointModel& model, const Dataset& ds, const std::vector<int>& fabric_ids,
                         Modality m, bool fuse_presses) {
  const auto branch = model.branch_of(m);
  if (!branch) {
    throw std::invalid_argument("model has no branch for modality " + std::string(modality_name(m)));
  }
  const Encoder& enc = model.branch_encoder(*branch);
  DatasetIndex index(ds);
  EmbeddingBank bank;
  for (int id : fabric_ids) {
    std::vector<Vector> es;
    for (std::size_t i : index.of(id, m)) es.push_back(encoder_embed(enc, ds.observations[i].features));
    if (es.empty()) {
      throw std::invalid_argument("fabric " + std::to_string(id) + " has no " +
                                  std::string(modality_name(m)) + " observations");
    }
    if (fuse_presses && es.size() > 1) {
      std::vector<Vector> fused;
      for (std::size_t i = 0; i < es.size(); ++i) {
        std::vector<Vector> presses;
        for (std::size_t p = 0; p < model.touch_presses; ++p) presses.push_back(es[(i + p) % es.size()]);
        fused.push_back(fuse_max(presses).value);
      }
      es = std::move(fused);
    }
    bank[id] = std::move(es);
  }
  return bank;
}

EmbeddingBank query_bank(const JointModel& model, const Dataset& ds, const std::vector<int>& fabric_ids,
                         Modality m) {
  const bool fuse = model.arch == Architecture::MultiInput && model.branch_modalities.size() == 3 &&
                    model.branch_modalities[2] == m;
  return embed_bank(model, ds, fabric_ids, m, fuse);
}

double PrecisionCell::at(std::uint32_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return precision[i];
  throw std::out_of_range("no precision recorded for top-" + std::to_string(k));
}

namespace {

template <class Fn>
void parallel_for(std::size_t n, std::uint32_t workers, Fn&& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace

PrecisionCell topk_precision(const EmbeddingBank& queries, const EmbeddingBank& candidates,
                             bool same_modality, const EvalConfig& config) {
  config.validate();
  struct Query {
    int fabric;
    std::size_t instance;
  };
  std::vector<Query> qs;
  for (const auto& [f, es] : queries) {
    if (!candidates.count(f)) throw std::invalid_argument("query fabric missing from candidates");
    for (std::size_t i = 0; i < es.size(); ++i) qs.push_back({f, i});
  }
  std::vector<int> cand_fabrics;
  for (const auto& [f, es] : candidates) cand_fabrics.push_back(f);
  if (cand_fabrics.size() < config.n_distractor_fabrics + 1) {
    throw std::invalid_argument("need " + std::to_string(config.n_distractor_fabrics) +
                                " distractor fabrics, only " + std::to_string(cand_fabrics.size() - 1) +
                                " other fabrics available");
  }

  const std::size_t nk = config.top_ks.size();
  std::vector<std::vector<std::uint64_t>> hits(qs.size(), std::vector<std::uint64_t>(nk, 0));
  parallel_for(qs.size(), config.workers, [&](std::size_t qi) {
    const auto& q = qs[qi];
    const Vector& qe = queries.at(q.fabric)[q.instance];
    Rng rng(derive_seed(derive_seed(config.seed, static_cast<std::uint64_t>(q.fabric)), q.instance));
    std::vector<int> others;
    for (int f : cand_fabrics)
      if (f != q.fabric) others.push_back(f);
    for (std::uint32_t rep = 0; rep < config.repetitions; ++rep) {
      for (std::size_t i = 0; i < config.n_distractor_fabrics; ++i)
        std::swap(others[i], others[i + rng.below(others.size() - i)]);

      const auto& truth = candidates.at(q.fabric);
      std::size_t ti;
      if (same_modality && truth.size() > 1 && q.instance < truth.size()) {
        ti = rng.below(truth.size() - 1);
        if (ti >= q.instance) ++ti;
      } else {
        ti = rng.below(truth.size());
      }
      std::vector<const Vector*> set{&truth[ti]};
      for (std::size_t i = 0; i < config.n_distractor_fabrics; ++i) {
        const auto& es = candidates.at(others[i]);
        set.push_back(&es[rng.below(es.size())]);
      }
      std::vector<std::size_t> pos(set.size());
      std::iota(pos.begin(), pos.end(), 0);
      for (std::size_t i = pos.size(); i > 1; --i) std::swap(pos[i - 1], pos[rng.below(i)]);
      std::vector<Vector> shuffled;
      std::size_t truth_slot = 0;
      for (std::size_t s = 0; s < pos.size(); ++s) {
        shuffled.push_back(*set[pos[s]]);
        if (pos[s] == 0) truth_slot = s;
      }
      const auto ranking = pick_one_of_n(qe, shuffled);
      const auto rank = static_cast<std::size_t>(
          std::find(ranking.begin(), ranking.end(), truth_slot) - ranking.begin());
      for (std::size_t k = 0; k < nk; ++k)
        if (rank < config.top_ks[k]) hits[qi][k] += 1;
    }
  });

  PrecisionCell cell;
  cell.ks = config.top_ks;
  cell.trials = qs.size() * static_cast<std::uint64_t>(config.repetitions);
  cell.precision.assign(nk, 0.0);
  for (std::size_t k = 0; k < nk; ++k) {
    std::uint64_t total = 0;
    for (const auto& h : hits) total += h[k];
    cell.precision[k] = cell.trials ? static_cast<double>(total) / static_cast<double>(cell.trials) : 0.0;
  }
  return cell;
}

PrecisionCell topk_precision(const JointModel& model, const Dataset& ds,
                             const std::vector<int>& fabric_ids, Modality query, Modality candidate,
                             const EvalConfig& config) {
  const auto qb = query_bank(model, ds, fabric_ids, query);
  const auto cb = embed_bank(model, ds, fabric_ids, candidate);
  auto cell = topk_precision(qb, cb, query == candidate, config);
  cell.query = query;
  cell.candidate = candidate;
  return cell;
}

std::vector<CellSpec> standard_cells(Modality touch) {
  return {{"Depth2Gel", touch, Modality::Depth},
          {"Color2Gel", touch, Modality::Color},
          {"Depth2Color", Modality::Color, Modality::Depth},
          {"Color2Depth", Modality::Depth, Modality::Color},
          {"Dep2Dep", Modality::Depth, Modality::Depth},
          {"Color2Color", Modality::Color, Modality::Color},
          {"Gel2Gel", touch, touch}};
}

std::vector<PrecisionCell> precision_grid(const JointModel& model, const Dataset& ds,
                                          const std::vector<int>& fabric_ids, const EvalConfig& config) {
  Modality touch = Modality::TouchFold;
  for (Modality m : model.branch_modalities)
    if (is_touch(m)) touch = m;
  std::vector<PrecisionCell> out;
  for (const auto& spec : standard_cells(touch)) {
    if (!model.branch_of(spec.query) || !model.branch_of(spec.candidate)) continue;
    auto cell = topk_precision(model, ds, fabric_ids, spec.query, spec.candidate, config);
    cell.label = spec.label;
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<int> similarity_order(const Dataset& ds, const std::vector<int>& fabric_ids) {
  std::vector<int> order = fabric_ids;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& fa = ds.fabric(a);
    const auto& fb = ds.fabric(b);
    const int ca = fa.cluster_id.value_or(-1), cb = fb.cluster_id.value_or(-1);
    if (ca != cb) return ca < cb;
    if (fa.stiffness_score != fb.stiffness_score) return fa.stiffness_score < fb.stiffness_score;
    return a < b;
  });
  return order;
}

ConfusionMatrix confusion_matrix(const EmbeddingBank& queries, const EmbeddingBank& candidates,
                                 const std::vector<int>& order, bool same_modality, double c) {
  if (order.empty()) throw std::invalid_argument("confusion matrix over no fabrics");
  const std::size_t n = order.size();
  std::vector<Vector> all;
  std::vector<std::size_t> owner;
  std::vector<std::size_t> instance;
  for (std::size_t j = 0; j < n; ++j) {
    auto it = candidates.find(order[j]);
    if (it == candidates.end() || it->second.empty()) {
      throw std::invalid_argument("fabric " + std::to_string(order[j]) + " has no candidate observations");
    }
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      all.push_back(it->second[i]);
      owner.push_back(j);
      instance.push_back(i);
    }
  }
  ConfusionMatrix cm;
  cm.fabric_ids = order;
  cm.values.assign(n, Vector(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    auto it = queries.find(order[i]);
    if (it == queries.end() || it->second.empty()) {
      throw std::invalid_argument("fabric " + std::to_string(order[i]) + " has no query observations");
    }
    const auto& qs = it->second;
    for (std::size_t q = 0; q < qs.size(); ++q) {
      std::vector<Vector> cands;
      std::vector<std::size_t> cand_owner;
      for (std::size_t a = 0; a < all.size(); ++a) {
        if (same_modality && owner[a] == i && instance[a] == q) continue;
        cands.push_back(all[a]);
        cand_owner.push_back(owner[a]);
      }
      const auto p = match_probability(qs[q], cands, c);
      for (std::size_t a = 0; a < p.size(); ++a) cm.values[i][cand_owner[a]] += p[a];
    }
    for (auto& v : cm.values[i]) v /= static_cast<double>(qs.size());
  }
  return cm;
}

ConfusionMatrix confusion_matrix(const JointModel& model, const Dataset& ds,
                                 const std::vector<int>& fabric_ids, Modality query,
                                 Modality candidate, const EvalConfig& config) {
  config.validate();
  const auto order = similarity_order(ds, fabric_ids);
  return confusion_matrix(query_bank(model, ds, order, query), embed_bank(model, ds, order, candidate),
                          order, query == candidate, config.prob_coefficient);
}

std::vector<Vector> aggregate_by_cluster(const ConfusionMatrix& cm, const Dataset& ds, std::size_t k) {
  std::vector<Vector> sum(k, Vector(k, 0.0));
  std::vector<Vector> count(k, Vector(k, 0.0));
  const std::size_t n = cm.fabric_ids.size();
  std::vector<std::size_t> cl(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = ds.fabric(cm.fabric_ids[i]).cluster_id.value_or(0);
    if (c < 0 || static_cast<std::size_t>(c) >= k) {
      throw std::invalid_argument("cluster id " + std::to_string(c) + " outside [0, " +
                                  std::to_string(k) + ")");
    }
    cl[i] = static_cast<std::size_t>(c);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      sum[cl[i]][cl[j]] += cm.values[i][j];
      count[cl[i]][cl[j]] += 1.0;
    }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      if (count[a][b] > 0.0) sum[a][b] /= count[a][b];
  return sum;
}

}  // namespace gelfab
