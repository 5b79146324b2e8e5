#pragma once

// Synthetic fabric world: latent physical attributes, per-modality
// observations, attribute normalization, k-means clustering and the
// cluster-stratified train/test split.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gelfab/numcore.hpp"

namespace gelfab {

enum class Modality : std::uint32_t { Depth = 0, Color = 1, TouchFlat = 2, TouchFold = 3 };

inline constexpr std::array<Modality, 4> kAllModalities = {
    Modality::Depth, Modality::Color, Modality::TouchFlat, Modality::TouchFold};

/// "depth", "color", "touch_flat", "touch_fold".
std::string_view modality_name(Modality m);
/// Inverse of modality_name; also accepts "touch" for TouchFold.
Modality parse_modality(std::string_view name);
bool is_touch(Modality m);

struct FabricRecord {
  int id = 0;
  double thickness_mm = 1.0;
  double stiffness_score = 0.0;  // [0, 6]
  int stretch_level = 0;         // 0 non-stretchable, 1 stretchable, 2 extremely stretchable
  double density_gsm = 100.0;
  std::optional<int> cluster_id;

  bool operator==(const FabricRecord&) const = default;
};

struct Observation {
  int fabric_id = 0;
  Modality modality = Modality::Depth;
  int instance_index = 0;
  Vector features;

  bool operator==(const Observation&) const = default;
};

struct InstanceCounts {
  int depth = 10;
  int color = 10;
  int touch_flat = 10;
  int touch_fold = 15;

  int of(Modality m) const;
};

struct Dataset {
  std::vector<FabricRecord> fabrics;
  std::vector<Observation> observations;
  std::size_t feature_dim = 0;
  std::vector<int> test_ids;  // every other fabric is a training fabric
  std::uint64_t world_seed = 0;
  std::uint64_t fabric_seed = 0;
  std::uint32_t cluster_count = 0;

  const FabricRecord& fabric(int id) const;
  bool is_test(int id) const;
  std::vector<int> train_ids() const;
  std::vector<int> all_ids() const;

  bool operator==(const Dataset&) const = default;
};

/// Lookup of observation indices by (fabric, modality).
class DatasetIndex {
 public:
  explicit DatasetIndex(const Dataset& ds);

  /// Observation indices, ordered by instance_index. Empty if none.
  const std::vector<std::size_t>& of(int fabric_id, Modality m) const;
  std::size_t count(Modality m) const;

 private:
  std::map<std::pair<int, Modality>, std::vector<std::size_t>> by_key_;
  std::map<Modality, std::size_t> per_modality_;
  std::vector<std::size_t> empty_;
};

/// Draws n fabrics with ids 0..n-1: thickness 0.1-5 mm and density 30-600 g/m^2
/// log-uniform, stiffness uniform on [0, 6], stretch level with weights
/// 0.5/0.35/0.15.
std::vector<FabricRecord> generate_fabrics(int n, std::uint64_t seed);

inline constexpr std::size_t kLatentDim = 4;
using Latents = std::array<double, kLatentDim>;

/// Attributes mapped to roughly [-1, 1]: log thickness, stiffness,
/// stretch level, log density.
Latents normalized_latents(const FabricRecord& f);

/// Which latents a modality exposes, in the order of Latents.
std::array<bool, kLatentDim> modality_mask(Modality m);

struct WorldParams {
  std::uint64_t seed = 1;
  std::size_t feature_dim = 32;
  double noise_std = 0.05;
  std::size_t hidden_width = 32;
  double nuisance_scale = 0.5;
  std::size_t nuisance_rank = 4;
};

// Each modality owns a fixed two-layer tanh network from the masked latents
// (plus a hue input for Color) to feature space. Depth and touch get an
// additive per-instance nuisance spanned by a few fixed directions (drape, press pose).
class SynthWorld {
 public:
  explicit SynthWorld(WorldParams params);

  const WorldParams& params() const { return params_; }

  /// Noiseless, nuisance-free observation of a fabric.
  Vector clean_features(const FabricRecord& f, Modality m) const;

  /// Length of the per-instance nuisance vector: 1 (hue) for Color, else nuisance_rank.
  std::size_t nuisance_dim(Modality m) const;

  /// Features with a given nuisance vector and no sensor noise.
  Vector features_with_nuisance(const FabricRecord& f, Modality m, std::span<const double> nuisance) const;

 private:
  struct ObservationMap {
    Vector w1, b1, w2, b2, nuisance_dirs;  // nuisance_dirs: rank x F
  };

  const ObservationMap& map(Modality m) const { return maps_[static_cast<std::size_t>(m)]; }

  WorldParams params_;
  std::array<ObservationMap, 4> maps_;
};

/// One observation; features are rounded to 32-bit precision so that the
/// in-memory dataset equals its file form.
Observation synth_observe(const SynthWorld& world, const FabricRecord& fabric, Modality m,
                          std::uint64_t instance_seed);

/// Per-instance seed used by synthesize_observations.
std::uint64_t instance_seed(std::uint64_t world_seed, int fabric_id, Modality m, int instance);

std::vector<Observation> synthesize_observations(const SynthWorld& world,
                                                 const std::vector<FabricRecord>& fabrics,
                                                 const InstanceCounts& counts);

struct NormalizedAttributes {
  std::vector<Vector> rows;               // n x 4
  std::array<bool, 4> zero_variance{};    // flagged columns are all zeros
};

/// Per-column z-score with sample standard deviation.
NormalizedAttributes normalize_attributes(const std::vector<FabricRecord>& fabrics);

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<Vector> centroids;
  double wcss = 0.0;
};

inline constexpr int kKMeansRestarts = 20;

/// Lloyd's algorithm with k-means++ seeding and a single-point transfer
/// polish, best of kKMeansRestarts runs.
KMeansResult kmeans_cluster(const std::vector<Vector>& points, int k, std::uint64_t seed);

/// Within-cluster sum of squares of an assignment against given centroids.
double within_cluster_ss(const std::vector<Vector>& points, const std::vector<int>& assignments,
                         const std::vector<Vector>& centroids);

/// Index of the nearest centroid (lowest index on ties).
int nearest_centroid(const Vector& point, const std::vector<Vector>& centroids);

struct Split {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

/// Test quota per cluster: proportional to size, largest-remainder rounding,
/// ties broken by cluster index.
std::vector<int> allocate_test_counts(const std::vector<int>& cluster_sizes, int n_test);

Split split_dataset(const std::vector<FabricRecord>& fabrics, int n_test, std::uint64_t seed);

struct GenerateOptions {
  int n_fabrics = 118;
  int n_test = 18;
  int cluster_k = 8;
  WorldParams world;
  InstanceCounts counts;
};

/// Fabrics, clusters, split and observations from a single world seed.
Dataset generate_dataset(const GenerateOptions& opts);

/// Binary dataset file ("GFDS"), little-endian. Attributes are 64-bit
/// reals, features 32-bit.
std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace gelfab
