#pragma once

// Retrieval evaluation: pick-one-of-N ranking, top-k precision, the
// normalized match probability and fabric confusion matrices.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gelfab/assocnet.hpp"
#include "gelfab/dataplane.hpp"
#include "gelfab/ingest.hpp"

namespace gelfab {

struct EvalConfig {
  std::uint32_t n_candidates = 10;
  std::uint32_t n_distractor_fabrics = 9;
  std::uint32_t repetitions = 10;
  double prob_coefficient = 8.5e-2;
  std::vector<std::uint32_t> top_ks = {1, 3};
  std::uint64_t seed = 1;
  std::uint32_t workers = 1;

  void validate() const;
};

/// Candidate indices by ascending distance to the query; ties keep index order.
std::vector<std::size_t> pick_one_of_n(const Vector& query, const std::vector<Vector>& candidates);

/// p_i proportional to exp(-c * d(target, e_i)^2), normalized to sum 1.
Vector match_probability(const Vector& target, const std::vector<Vector>& candidates, double c);

/// Embeddings of one modality, per fabric, in instance order.
using EmbeddingBank = std::map<int, std::vector<Vector>>;

/// Embeds every observation of `m` for the given fabrics. With
/// `fuse_presses`, entry i is the max-fusion of instances i, i+1, ...
/// (cyclic, model.touch_presses of them).
EmbeddingBank embed_bank(const JointModel& model, const Dataset& ds, const std::vector<int>& fabric_ids,
                         Modality m, bool fuse_presses = false);

/// Bank for a modality, fused when the model is multi-input and `m` is its
/// touch modality.
EmbeddingBank query_bank(const JointModel& model, const Dataset& ds, const std::vector<int>& fabric_ids,
                         Modality m);

struct PrecisionCell {
  std::string label;
  Modality query = Modality::Depth;
  Modality candidate = Modality::Depth;
  std::vector<std::uint32_t> ks;
  std::vector<double> precision;  // aligned with ks
  std::uint64_t trials = 0;

  double at(std::uint32_t k) const;
};

/// Every query embedding of every fabric, `repetitions` trials each: the true
/// fabric plus n_distractor_fabrics others drawn without replacement, one
/// candidate embedding per fabric, shuffled. When `same_modality`, the true
/// candidate is never the query instance itself.
PrecisionCell topk_precision(const EmbeddingBank& queries, const EmbeddingBank& candidates,
                             bool same_modality, const EvalConfig& config);

/// Model-level wrapper over the given fabrics.
PrecisionCell topk_precision(const JointModel& model, const Dataset& ds,
                             const std::vector<int>& fabric_ids, Modality query, Modality candidate,
                             const EvalConfig& config);

struct CellSpec {
  std::string label;
  Modality query;
  Modality candidate;
};

/// Cross-modal and same-modality cells. A label "A2B" scores queries of
/// modality B against candidates of modality A; "Gel" is the touch modality.
std::vector<CellSpec> standard_cells(Modality touch);

/// All standard cells whose modalities the model can embed.
std::vector<PrecisionCell> precision_grid(const JointModel& model, const Dataset& ds,
                                          const std::vector<int>& fabric_ids, const EvalConfig& config);

struct ConfusionMatrix {
  std::vector<int> fabric_ids;    // row/column order
  std::vector<Vector> values;     // values[i][j]: mean probability query fabric i -> fabric j
};

/// Fabric order for display: cluster id, then stiffness, then id.
std::vector<int> similarity_order(const Dataset& ds, const std::vector<int>& fabric_ids);

ConfusionMatrix confusion_matrix(const EmbeddingBank& queries, const EmbeddingBank& candidates,
                                 const std::vector<int>& order, bool same_modality, double c);

ConfusionMatrix confusion_matrix(const JointModel& model, const Dataset& ds,
                                 const std::vector<int>& fabric_ids, Modality query,
                                 Modality candidate, const EvalConfig& config);

/// k x k mean of member entries; clusters with no members give 0.
std::vector<Vector> aggregate_by_cluster(const ConfusionMatrix& cm, const Dataset& ds, std::size_t k);

// Report export.
std::string precision_csv(const std::vector<PrecisionCell>& cells, const std::vector<std::uint32_t>& ks,
                          const std::vector<std::string>& comment_lines = {});
std::vector<PrecisionCell> parse_precision_csv(const std::string& text);
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& comment_lines = {});
std::string matrix_csv(const std::vector<Vector>& m, const std::vector<std::string>& comment_lines = {});
/// 8-bit grayscale, pixel = round(255 * p / row max); a zero row stays black.
PixelImage heatmap(const std::vector<Vector>& m);

void write_text(const std::string& path, const std::string& contents);

}  // namespace gelfab
