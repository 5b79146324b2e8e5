#pragma once

// Cross-modal association: embedding distances, contrastive losses, the
// cluster classifier head, max fusion of touch presses, and the joint
// models built from them.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gelfab/dataplane.hpp"
#include "gelfab/numcore.hpp"

namespace gelfab {

enum class Architecture : std::uint32_t { CrossModal = 0, Auxiliary = 1, MultiInput = 2, SNN2 = 3 };

std::string_view architecture_name(Architecture a);  // "cross_modal", "auxiliary", "multi_input", "snn2"
Architecture parse_architecture(std::string_view name);

double pair_distance(std::span<const double> a, std::span<const double> b);

/// ||e1 - e2|| + ||e2 - e3|| + ||e3 - e1||
double d3_distance(std::span<const double> e1, std::span<const double> e2,
                   std::span<const double> e3);

struct LossValue {
  double loss = 0.0;
  double grad = 0.0;  // dLoss / d(distance)
};

/// Y = 0 (same fabric): d^2 / 2.  Y = 1: max(0, m - d)^2 / 2.
LossValue contrastive_loss3(double d3, int y, double margin);
LossValue contrastive_loss2(double d, int y, double margin);

// Affine map embedding -> k logits; params are [W (k x dim, row-major), b (k)].
struct ClassifierHead {
  std::size_t classes = 0;
  std::size_t dim = 0;
  Vector params;

  ClassifierHead() = default;
  ClassifierHead(std::size_t k, std::size_t d) : classes(k), dim(d), params(k * d + k, 0.0) {}

  bool operator==(const ClassifierHead&) const = default;
};

ClassifierHead head_init(std::size_t classes, std::size_t dim, std::uint64_t seed);

struct ClassifyResult {
  double loss = 0.0;
  Vector logits;
  Vector grad_params;     // same layout as ClassifierHead::params
  Vector grad_embedding;
};

/// Softmax cross-entropy with log-sum-exp stabilization.
ClassifyResult classify_cluster(const ClassifierHead& head, std::span<const double> e, int label);

struct FusedEmbedding {
  Vector value;
  std::vector<std::size_t> source;  // which input supplied each component
};

/// Component-wise maximum; ties go to the lowest input index.
FusedEmbedding fuse_max(const std::vector<Vector>& embeddings);

struct TripletGroup {
  // One list per branch. Single-observation branches hold one entry; the
  // multi-input touch branch holds one per press.
  std::vector<std::vector<const Observation*>> branches;
  int y = 0;
  std::vector<int> cluster_labels;  // one per branch
};

struct JointModel {
  Architecture arch = Architecture::CrossModal;
  std::vector<Modality> branch_modalities;
  std::vector<Encoder> encoders;  // one per branch, or one shared by both SNN2 branches
  std::vector<ClassifierHead> heads;  // Auxiliary and MultiInput only
  double margin = 2.0;
  double aux_weight = 1.0;
  std::uint32_t touch_presses = 3;
  std::uint64_t backbone_seed = 0;

  std::size_t branch_count() const { return branch_modalities.size(); }
  const Encoder& branch_encoder(std::size_t b) const {
    return encoders.size() == 1 ? encoders[0] : encoders[b];
  }
  std::size_t encoder_index(std::size_t b) const { return encoders.size() == 1 ? 0 : b; }
  std::size_t embedding_dim() const { return encoders.front().spec().output_dim(); }
  std::size_t input_dim() const { return encoders.front().spec().input_dim(); }
  /// First branch reading modality m, if any.
  std::optional<std::size_t> branch_of(Modality m) const;
  bool has_heads() const { return !heads.empty(); }

  bool operator==(const JointModel&) const = default;
};

struct ModelOptions {
  Architecture arch = Architecture::CrossModal;
  std::size_t feature_dim = 32;
  std::vector<std::size_t> hidden_dims = {64};
  std::size_t embedding_dim = 64;
  Modality touch_modality = Modality::TouchFold;
  Modality snn_first = Modality::Depth;
  Modality snn_second = Modality::Depth;
  std::size_t classes = 8;
  double margin = 2.0;
  double aux_weight = 1.0;
  std::uint32_t touch_presses = 3;
};

/// Branches are (Depth, Color, touch) for the three-branch models and
/// (snn_first, snn_second) for SNN2; equal SNN2 modalities share one encoder.
JointModel make_model(const ModelOptions& opts, std::uint64_t seed);

struct ModelGradients {
  std::vector<Vector> encoders;
  std::vector<Vector> heads;
};

struct ModelOutput {
  std::vector<Vector> embeddings;  // per branch, after fusion
  double distance = 0.0;           // D3, or pairwise D for SNN2
  double contrastive = 0.0;
  double auxiliary = 0.0;          // unweighted sum of head losses
  double total = 0.0;
  ModelGradients grads;            // filled when requested
};

ModelOutput model_forward(const JointModel& model, const TripletGroup& group, bool want_grads = true);

/// All trainable parameters, encoders then heads.
Vector model_params(const JointModel& model);
void set_model_params(JointModel& model, std::span<const double> params);
Vector flatten_gradients(const ModelGradients& g);

/// Embedding of one observation through the encoder of its modality.
Vector embed_observation(const JointModel& model, const Observation& obs);

}  // namespace gelfab
