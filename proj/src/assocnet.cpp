#include "gelfab/assocnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gelfab/errors.hpp"
#include "gelfab/rng.hpp"

namespace gelfab {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::CrossModal: return "cross_modal";
    case Architecture::Auxiliary: return "auxiliary";
    case Architecture::MultiInput: return "multi_input";
    case Architecture::SNN2: return "snn2";
  }
  throw std::invalid_argument("unknown architecture");
}

Architecture parse_architecture(std::string_view name) {
  for (auto a : {Architecture::CrossModal, Architecture::Auxiliary, Architecture::MultiInput,
                 Architecture::SNN2}) {
    if (architecture_name(a) == name) return a;
  }
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

double pair_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("embedding lengths differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double d3_distance(std::span<const double> e1, std::span<const double> e2,
                   std::span<const double> e3) {
  return pair_distance(e1, e2) + pair_distance(e2, e3) + pair_distance(e3, e1);
}

namespace {

LossValue contrastive(double d, int y, double margin) {
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be positive");
  if (std::isnan(d)) throw NumericError("distance is NaN");
  if (!(d >= 0.0)) throw std::invalid_argument("distance must be non-negative");
  if (y == 0) return {0.5 * d * d, d};
  if (y == 1) {
    const double gap = std::max(0.0, margin - d);
    return {0.5 * gap * gap, -gap};
  }
  throw std::invalid_argument("label Y must be 0 or 1");
}

}  // namespace

LossValue contrastive_loss3(double d3, int y, double margin) { return contrastive(d3, y, margin); }
LossValue contrastive_loss2(double d, int y, double margin) { return contrastive(d, y, margin); }

ClassifierHead head_init(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  ClassifierHead h(classes, dim);
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(dim));
  for (std::size_t i = 0; i < classes * dim; ++i) h.params[i] = rng.normal(0.0, stddev);
  return h;
}

ClassifyResult classify_cluster(const ClassifierHead& head, std::span<const double> e, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= head.classes) {
    throw std::invalid_argument("cluster label " + std::to_string(label) + " outside [0, " +
                                std::to_string(head.classes) + ")");
  }
  if (e.size() != head.dim) throw std::invalid_argument("head input dim mismatch");
  const std::size_t k = head.classes, d = head.dim;
  const double* w = head.params.data();
  const double* b = w + k * d;

  ClassifyResult r;
  r.logits.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    double acc = b[c];
    for (std::size_t j = 0; j < d; ++j) acc += w[c * d + j] * e[j];
    r.logits[c] = acc;
  }
  const double mx = *std::max_element(r.logits.begin(), r.logits.end());
  double sum = 0.0;
  for (double l : r.logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  const auto lab = static_cast<std::size_t>(label);
  r.loss = lse - r.logits[lab];

  r.grad_params.assign(head.params.size(), 0.0);
  r.grad_embedding.assign(d, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double g = std::exp(r.logits[c] - lse) - (c == lab ? 1.0 : 0.0);
    r.grad_params[k * d + c] = g;
    for (std::size_t j = 0; j < d; ++j) {
      r.grad_params[c * d + j] = g * e[j];
      r.grad_embedding[j] += g * w[c * d + j];
    }
  }
  return r;
}

FusedEmbedding fuse_max(const std::vector<Vector>& embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("fuse_max needs at least one embedding");
  const std::size_t n = embeddings.front().size();
  for (const auto& e : embeddings)
    if (e.size() != n) throw std::invalid_argument("fuse_max: embedding lengths differ");
  FusedEmbedding f{embeddings.front(), std::vector<std::size_t>(n, 0)};
  for (std::size_t i = 1; i < embeddings.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (embeddings[i][j] > f.value[j]) {
        f.value[j] = embeddings[i][j];
        f.source[j] = i;
      }
    }
  }
  return f;
}

std::optional<std::size_t> JointModel::branch_of(Modality m) const {
  for (std::size_t b = 0; b < branch_modalities.size(); ++b)
    if (branch_modalities[b] == m) return b;
  return std::nullopt;
}

JointModel make_model(const ModelOptions& opts, std::uint64_t seed) {
  JointModel m;
  m.arch = opts.arch;
  m.margin = opts.margin;
  m.aux_weight = opts.aux_weight;
  m.touch_presses = opts.touch_presses;
  if (opts.arch == Architecture::SNN2) {
    m.branch_modalities = {opts.snn_first, opts.snn_second};
  } else {
    if (!is_touch(opts.touch_modality)) throw std::invalid_argument("touch branch needs a touch modality");
    m.branch_modalities = {Modality::Depth, Modality::Color, opts.touch_modality};
  }
  if (opts.arch == Architecture::MultiInput && opts.touch_presses < 2) {
    throw std::invalid_argument("multi-input model needs at least two touch presses");
  }
  EncoderSpec spec;
  spec.layer_dims.push_back(opts.feature_dim);
  spec.layer_dims.insert(spec.layer_dims.end(), opts.hidden_dims.begin(), opts.hidden_dims.end());
  spec.layer_dims.push_back(opts.embedding_dim);
  spec.validate();

  const bool shared = opts.arch == Architecture::SNN2 && opts.snn_first == opts.snn_second;
  const std::size_t n_enc = shared ? 1 : m.branch_modalities.size();
  for (std::size_t b = 0; b < n_enc; ++b)
    m.encoders.push_back(encoder_init(spec, derive_seed(derive_seed(seed, "encoder"), b)));
  if (opts.arch == Architecture::Auxiliary || opts.arch == Architecture::MultiInput) {
    if (opts.classes < 1) throw std::invalid_argument("classifier needs at least one class");
    for (std::size_t b = 0; b < m.branch_modalities.size(); ++b)
      m.heads.push_back(head_init(opts.classes, opts.embedding_dim, derive_seed(derive_seed(seed, "head"), b)));
  }
  return m;
}

namespace {

void validate_group(const JointModel& model, const TripletGroup& g) {
  if (g.branches.size() != model.branch_count()) {
    throw std::invalid_argument("group has " + std::to_string(g.branches.size()) +
                                " branches, model " + std::string(architecture_name(model.arch)) +
                                " expects " + std::to_string(model.branch_count()));
  }
  for (std::size_t b = 0; b < g.branches.size(); ++b) {
    const bool multi = model.arch == Architecture::MultiInput && b == 2;
    const std::size_t want = multi ? model.touch_presses : 1;
    if (g.branches[b].size() != want) {
      throw std::invalid_argument("branch " + std::to_string(b) + " has " +
                                  std::to_string(g.branches[b].size()) + " observations, expected " +
                                  std::to_string(want));
    }
    for (const Observation* o : g.branches[b]) {
      if (o == nullptr || o->modality != model.branch_modalities[b]) {
        throw std::invalid_argument("branch " + std::to_string(b) + " expects " +
                                    std::string(modality_name(model.branch_modalities[b])) +
                                    " observations");
      }
    }
    if (multi) {
      for (const Observation* o : g.branches[b])
        if (o->fabric_id != g.branches[b][0]->fabric_id)
          throw std::invalid_argument("multi-input presses must share one fabric");
    }
  }
  if (model.has_heads() && g.cluster_labels.size() != model.branch_count()) {
    throw std::invalid_argument("group lacks per-branch cluster labels");
  }
}

// Adds dL/d(distance) * d(distance)/d(ei, ej) for one pair.
void add_pair_grad(const Vector& a, const Vector& b, double scale, Vector& ga, Vector& gb) {
  const double n = pair_distance(a, b);
  if (n == 0.0) return;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double g = scale * (a[i] - b[i]) / n;
    ga[i] += g;
    gb[i] -= g;
  }
}

}  // namespace

ModelOutput model_forward(const JointModel& model, const TripletGroup& group, bool want_grads) {
  validate_group(model, group);
  const std::size_t nb = model.branch_count();

  std::vector<std::vector<ForwardPass>> passes(nb);
  std::vector<std::vector<std::size_t>> sources(nb);
  ModelOutput out;
  out.embeddings.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const Encoder& enc = model.branch_encoder(b);
    for (const Observation* o : group.branches[b]) passes[b].push_back(encoder_forward(enc, o->features));
    if (passes[b].size() == 1) {
      out.embeddings[b] = passes[b][0].embedding;
    } else {
      std::vector<Vector> es;
      for (const auto& p : passes[b]) es.push_back(p.embedding);
      auto fused = fuse_max(es);
      out.embeddings[b] = std::move(fused.value);
      sources[b] = std::move(fused.source);
    }
  }

  LossValue lv;
  if (nb == 3) {
    out.distance = d3_distance(out.embeddings[0], out.embeddings[1], out.embeddings[2]);
    lv = contrastive_loss3(out.distance, group.y, model.margin);
  } else {
    out.distance = pair_distance(out.embeddings[0], out.embeddings[1]);
    lv = contrastive_loss2(out.distance, group.y, model.margin);
  }
  out.contrastive = lv.loss;

  std::vector<ClassifyResult> cls;
  if (model.has_heads()) {
    for (std::size_t b = 0; b < nb; ++b) {
      cls.push_back(classify_cluster(model.heads[b], out.embeddings[b], group.cluster_labels[b]));
      out.auxiliary += cls.back().loss;
    }
    out.total = out.contrastive + model.aux_weight * out.auxiliary;
  } else {
    out.total = out.contrastive;
  }
  if (!want_grads) return out;

  const std::size_t dim = model.embedding_dim();
  std::vector<Vector> de(nb, Vector(dim, 0.0));
  if (nb == 3) {
    add_pair_grad(out.embeddings[0], out.embeddings[1], lv.grad, de[0], de[1]);
    add_pair_grad(out.embeddings[1], out.embeddings[2], lv.grad, de[1], de[2]);
    add_pair_grad(out.embeddings[2], out.embeddings[0], lv.grad, de[2], de[0]);
  } else {
    add_pair_grad(out.embeddings[0], out.embeddings[1], lv.grad, de[0], de[1]);
  }
  for (std::size_t b = 0; b < cls.size(); ++b) {
    for (std::size_t j = 0; j < dim; ++j) de[b][j] += model.aux_weight * cls[b].grad_embedding[j];
    Vector hg = cls[b].grad_params;
    for (auto& v : hg) v *= model.aux_weight;
    out.grads.heads.push_back(std::move(hg));
  }

  out.grads.encoders.assign(model.encoders.size(), Vector{});
  for (std::size_t e = 0; e < model.encoders.size(); ++e)
    out.grads.encoders[e].assign(model.encoders[e].parameter_count(), 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    const Encoder& enc = model.branch_encoder(b);
    Vector& acc = out.grads.encoders[model.encoder_index(b)];
    for (std::size_t p = 0; p < passes[b].size(); ++p) {
      Vector routed = de[b];
      if (passes[b].size() > 1) {
        for (std::size_t j = 0; j < dim; ++j)
          if (sources[b][j] != p) routed[j] = 0.0;
      }
      const auto g = encoder_backward(enc, passes[b][p].cache, routed);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.params[i];
    }
  }
  return out;
}

Vector model_params(const JointModel& model) {
  Vector out;
  for (const auto& e : model.encoders) out.insert(out.end(), e.params().begin(), e.params().end());
  for (const auto& h : model.heads) out.insert(out.end(), h.params.begin(), h.params.end());
  return out;
}

void set_model_params(JointModel& model, std::span<const double> params) {
  std::size_t total = 0;
  for (const auto& e : model.encoders) total += e.parameter_count();
  for (const auto& h : model.heads) total += h.params.size();
  if (params.size() != total) throw std::invalid_argument("parameter vector length mismatch");
  std::size_t pos = 0;
  for (auto& e : model.encoders) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), e.parameter_count(), e.params().begin());
    pos += e.parameter_count();
  }
  for (auto& h : model.heads) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), h.params.size(), h.params.begin());
    pos += h.params.size();
  }
}

Vector flatten_gradients(const ModelGradients& g) {
  Vector out;
  for (const auto& e : g.encoders) out.insert(out.end(), e.begin(), e.end());
  for (const auto& h : g.heads) out.insert(out.end(), h.begin(), h.end());
  return out;
}

Vector embed_observation(const JointModel& model, const Observation& obs) {
  const auto b = model.branch_of(obs.modality);
  if (!b) {
    throw std::invalid_argument("model has no branch for modality " +
                                std::string(modality_name(obs.modality)));
  }
  return encoder_embed(model.branch_encoder(*b), obs.features);
}

}  // namespace gelfab
