#include "gelfab/dataplane.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gelfab/errors.hpp"
#include "gelfab/rng.hpp"

namespace gelfab {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Depth: return "depth";
    case Modality::Color: return "color";
    case Modality::TouchFlat: return "touch_flat";
    case Modality::TouchFold: return "touch_fold";
  }
  throw std::invalid_argument("unknown modality");
}

Modality parse_modality(std::string_view name) {
  if (name == "depth") return Modality::Depth;
  if (name == "color") return Modality::Color;
  if (name == "touch_flat") return Modality::TouchFlat;
  if (name == "touch_fold" || name == "touch") return Modality::TouchFold;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

bool is_touch(Modality m) { return m == Modality::TouchFlat || m == Modality::TouchFold; }

int InstanceCounts::of(Modality m) const {
  switch (m) {
    case Modality::Depth: return depth;
    case Modality::Color: return color;
    case Modality::TouchFlat: return touch_flat;
    case Modality::TouchFold: return touch_fold;
  }
  throw std::invalid_argument("unknown modality");
}

const FabricRecord& Dataset::fabric(int id) const {
  auto it = std::find_if(fabrics.begin(), fabrics.end(), [&](const auto& f) { return f.id == id; });
  if (it == fabrics.end()) throw std::out_of_range("no fabric with id " + std::to_string(id));
  return *it;
}

bool Dataset::is_test(int id) const {
  return std::find(test_ids.begin(), test_ids.end(), id) != test_ids.end();
}

std::vector<int> Dataset::train_ids() const {
  std::vector<int> out;
  for (const auto& f : fabrics)
    if (!is_test(f.id)) out.push_back(f.id);
  return out;
}

std::vector<int> Dataset::all_ids() const {
  std::vector<int> out;
  for (const auto& f : fabrics) out.push_back(f.id);
  return out;
}

DatasetIndex::DatasetIndex(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.observations.size(); ++i) {
    const auto& o = ds.observations[i];
    by_key_[{o.fabric_id, o.modality}].push_back(i);
    per_modality_[o.modality] += 1;
  }
  for (auto& [key, idx] : by_key_) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ds.observations[a].instance_index < ds.observations[b].instance_index;
    });
  }
}

const std::vector<std::size_t>& DatasetIndex::of(int fabric_id, Modality m) const {
  auto it = by_key_.find({fabric_id, m});
  return it == by_key_.end() ? empty_ : it->second;
}

std::size_t DatasetIndex::count(Modality m) const {
  auto it = per_modality_.find(m);
  return it == per_modality_.end() ? 0 : it->second;
}

namespace {

constexpr double kThicknessLo = 0.1, kThicknessHi = 5.0;
constexpr double kDensityLo = 30.0, kDensityHi = 600.0;
constexpr double kStiffnessMax = 6.0;

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

double log_unit(double v, double lo, double hi) {
  const double a = std::log(lo), b = std::log(hi);
  return (std::log(v) - 0.5 * (a + b)) / (0.5 * (b - a));
}

}  // namespace

std::vector<FabricRecord> generate_fabrics(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one fabric");
  Rng rng(seed);
  std::vector<FabricRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    FabricRecord f;
    f.id = i;
    f.thickness_mm = log_uniform(rng, kThicknessLo, kThicknessHi);
    f.stiffness_score = rng.uniform(0.0, kStiffnessMax);
    const double u = rng.uniform();
    f.stretch_level = u < 0.5 ? 0 : (u < 0.85 ? 1 : 2);
    f.density_gsm = log_uniform(rng, kDensityLo, kDensityHi);
    out.push_back(f);
  }
  return out;
}

Latents normalized_latents(const FabricRecord& f) {
  return {log_unit(f.thickness_mm, kThicknessLo, kThicknessHi),
          f.stiffness_score / (0.5 * kStiffnessMax) - 1.0,
          static_cast<double>(f.stretch_level) - 1.0,
          log_unit(f.density_gsm, kDensityLo, kDensityHi)};
}

std::array<bool, kLatentDim> modality_mask(Modality m) {
  //       thickness stiffness stretch density
  switch (m) {
    case Modality::Depth: return {true, true, true, true};
    case Modality::Color: return {true, false, true, true};
    case Modality::TouchFlat: return {false, false, true, true};
    case Modality::TouchFold: return {true, true, true, true};
  }
  throw std::invalid_argument("unknown modality");
}

namespace {
constexpr std::size_t kMapInputs = kLatentDim + 1;  // latents + hue
}

SynthWorld::SynthWorld(WorldParams params) : params_(params) {
  if (params_.feature_dim < 1 || params_.hidden_width < 1) {
    throw std::invalid_argument("world dims must be >= 1");
  }
  if (!(params_.noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
  const std::size_t h = params_.hidden_width;
  const std::size_t f = params_.feature_dim;
  for (Modality m : kAllModalities) {
    Rng rng(derive_seed(params_.seed, std::string("world/") + std::string(modality_name(m))));
    auto& om = maps_[static_cast<std::size_t>(m)];
    om.w1.resize(h * kMapInputs);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < kLatentDim; ++c) om.w1[r * kMapInputs + c] = rng.normal(0.0, 1.0);
      const double hue = rng.normal(0.0, 0.5);
      om.w1[r * kMapInputs + kLatentDim] = m == Modality::Color ? hue : 0.0;
    }
    om.b1.resize(h);
    for (auto& v : om.b1) v = rng.normal(0.0, 0.3);
    om.w2.resize(f * h);
    const double s2 = 1.5 / std::sqrt(static_cast<double>(h));
    for (auto& v : om.w2) v = rng.normal(0.0, s2);
    om.b2.resize(f);
    for (auto& v : om.b2) v = rng.normal(0.0, 0.1);
    om.nuisance_dirs.resize(params_.nuisance_rank * f);
    for (auto& v : om.nuisance_dirs) v = rng.normal(0.0, params_.nuisance_scale);
  }
}

std::size_t SynthWorld::nuisance_dim(Modality m) const {
  return m == Modality::Color ? 1 : params_.nuisance_rank;
}

Vector SynthWorld::features_with_nuisance(const FabricRecord& fab, Modality m,
                                          std::span<const double> nuisance) const {
  if (nuisance.size() != nuisance_dim(m)) throw std::invalid_argument("nuisance length does not match modality");
  const auto& om = map(m);
  const auto mask = modality_mask(m);
  const auto lat = normalized_latents(fab);
  std::array<double, kMapInputs> in{};
  for (std::size_t i = 0; i < kLatentDim; ++i) in[i] = mask[i] ? lat[i] : 0.0;
  const bool hue_input = m == Modality::Color;
  in[kLatentDim] = hue_input ? nuisance[0] : 0.0;

  const std::size_t h = params_.hidden_width;
  const std::size_t f = params_.feature_dim;
  Vector hidden(h);
  for (std::size_t r = 0; r < h; ++r) {
    double acc = om.b1[r];
    for (std::size_t c = 0; c < kMapInputs; ++c) acc += om.w1[r * kMapInputs + c] * in[c];
    hidden[r] = std::tanh(acc);
  }
  Vector out(f);
  for (std::size_t r = 0; r < f; ++r) {
    double acc = om.b2[r];
    for (std::size_t c = 0; c < h; ++c) acc += om.w2[r * h + c] * hidden[c];
    out[r] = acc;
  }
  if (!hue_input) {
    for (std::size_t k = 0; k < nuisance.size(); ++k)
      for (std::size_t r = 0; r < f; ++r) out[r] += nuisance[k] * om.nuisance_dirs[k * f + r];
  }
  return out;
}

Vector SynthWorld::clean_features(const FabricRecord& f, Modality m) const {
  return features_with_nuisance(f, m, Vector(nuisance_dim(m), 0.0));
}

Observation synth_observe(const SynthWorld& world, const FabricRecord& fabric, Modality m,
                          std::uint64_t instance_seed) {
  if (static_cast<std::uint32_t>(m) > 3) throw std::invalid_argument("unknown modality");
  Rng rng(instance_seed);
  Vector nuisance(world.nuisance_dim(m));
  for (auto& v : nuisance) v = m == Modality::Color ? rng.uniform(-1.0, 1.0) : rng.normal();
  Observation obs;
  obs.fabric_id = fabric.id;
  obs.modality = m;
  obs.features = world.features_with_nuisance(fabric, m, nuisance);
  const double noise = world.params().noise_std;
  for (auto& v : obs.features) {
    if (noise > 0.0) v += rng.normal(0.0, noise);
    v = static_cast<double>(static_cast<float>(v));
  }
  return obs;
}

std::uint64_t instance_seed(std::uint64_t world_seed, int fabric_id, Modality m, int instance) {
  const std::uint64_t base = derive_seed(world_seed, "instances");
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(fabric_id)) << 32) |
                            (static_cast<std::uint64_t>(m) << 24) |
                            static_cast<std::uint32_t>(instance);
  return derive_seed(base, key);
}

std::vector<Observation> synthesize_observations(const SynthWorld& world,
                                                 const std::vector<FabricRecord>& fabrics,
                                                 const InstanceCounts& counts) {
  std::vector<Observation> out;
  for (const auto& f : fabrics) {
    for (Modality m : kAllModalities) {
      for (int i = 0; i < counts.of(m); ++i) {
        auto obs = synth_observe(world, f, m, instance_seed(world.params().seed, f.id, m, i));
        obs.instance_index = i;
        out.push_back(std::move(obs));
      }
    }
  }
  return out;
}

NormalizedAttributes normalize_attributes(const std::vector<FabricRecord>& fabrics) {
  const std::size_t n = fabrics.size();
  if (n < 2) throw std::invalid_argument("normalization needs at least two fabrics");
  NormalizedAttributes out;
  out.rows.assign(n, Vector(4, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = fabrics[i];
    out.rows[i] = {f.thickness_mm, f.stiffness_score, static_cast<double>(f.stretch_level),
                   f.density_gsm};
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (const auto& r : out.rows) mean += r[c];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : out.rows) ss += (r[c] - mean) * (r[c] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
      out.zero_variance[c] = true;
      for (auto& r : out.rows) r[c] = 0.0;
      continue;
    }
    for (auto& r : out.rows) r[c] = (r[c] - mean) / sd;
  }
  return out;
}

namespace {

double sq_dist(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<Vector> cluster_means(const std::vector<Vector>& points, const std::vector<int>& assign,
                                  std::size_t k) {
  const std::size_t d = points.front().size();
  std::vector<Vector> means(k, Vector(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto c = static_cast<std::size_t>(assign[i]);
    counts[c] += 1;
    for (std::size_t j = 0; j < d; ++j) means[c][j] += points[i][j];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0)
      for (auto& v : means[c]) v /= static_cast<double>(counts[c]);
  return means;
}

std::vector<int> assign_all(const std::vector<Vector>& points, const std::vector<Vector>& centroids) {
  std::vector<int> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = nearest_centroid(points[i], centroids);
  return out;
}

// Nearest centroid, but a point stays put when its current centroid ties the minimum.
std::vector<int> reassign(const std::vector<Vector>& points, const std::vector<Vector>& centroids,
                          const std::vector<int>& current) {
  std::vector<int> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int best = nearest_centroid(points[i], centroids);
    const auto cur = static_cast<std::size_t>(current[i]);
    out[i] = sq_dist(points[i], centroids[cur]) <= sq_dist(points[i], centroids[static_cast<std::size_t>(best)])
                 ? current[i]
                 : best;
  }
  return out;
}

// Hartigan single-point transfers: move a point whenever that lowers the
// total WCSS, accounting for the shift of both centroids. Stops when no move
// helps; the result is then also stable under Lloyd re-assignment.
void hartigan_refine(const std::vector<Vector>& points, std::vector<int>& assign, std::size_t k) {
  constexpr int kMaxSweeps = 100;
  std::vector<Vector> centroids = cluster_means(points, assign, k);
  std::vector<double> counts(k, 0.0);
  for (int a : assign) counts[static_cast<std::size_t>(a)] += 1.0;
  const std::size_t d = points.front().size();
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto from = static_cast<std::size_t>(assign[i]);
      if (counts[from] < 2.0) continue;
      const double removal = counts[from] / (counts[from] - 1.0) * sq_dist(points[i], centroids[from]);
      double best_gain = 1e-12 * (1.0 + removal);
      std::size_t best_to = from;
      for (std::size_t to = 0; to < k; ++to) {
        if (to == from) continue;
        const double add = counts[to] / (counts[to] + 1.0) * sq_dist(points[i], centroids[to]);
        if (removal - add > best_gain) {
          best_gain = removal - add;
          best_to = to;
        }
      }
      if (best_to == from) continue;
      for (std::size_t j = 0; j < d; ++j) {
        centroids[from][j] = (centroids[from][j] * counts[from] - points[i][j]) / (counts[from] - 1.0);
        centroids[best_to][j] = (centroids[best_to][j] * counts[best_to] + points[i][j]) / (counts[best_to] + 1.0);
      }
      counts[from] -= 1.0;
      counts[best_to] += 1.0;
      assign[i] = static_cast<int>(best_to);
      moved = true;
    }
    if (!moved) break;
  }
}

std::vector<Vector> plus_plus_seed(const std::vector<Vector>& points, std::size_t k, Rng& rng) {
  std::vector<Vector> centers;
  centers.push_back(points[rng.below(points.size())]);
  Vector d2(points.size());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(points.size());
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

// Moves the farthest point of a multi-member cluster into each empty cluster.
void fill_empty_clusters(const std::vector<Vector>& points, std::vector<int>& assign,
                         const std::vector<Vector>& centroids, std::size_t k) {
  std::vector<std::size_t> counts(k, 0);
  for (int a : assign) counts[static_cast<std::size_t>(a)] += 1;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    double far = -1.0;
    std::size_t pick = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto a = static_cast<std::size_t>(assign[i]);
      if (counts[a] < 2) continue;
      const double d = sq_dist(points[i], centroids[a]);
      if (d > far) {
        far = d;
        pick = i;
      }
    }
    counts[static_cast<std::size_t>(assign[pick])] -= 1;
    assign[pick] = static_cast<int>(c);
    counts[c] = 1;
  }
}

KMeansResult lloyd(const std::vector<Vector>& points, std::size_t k, Rng& rng) {
  constexpr int kMaxIterations = 300;
  std::vector<Vector> centroids = plus_plus_seed(points, k, rng);
  std::vector<int> assign = assign_all(points, centroids);
  for (int it = 0; it < kMaxIterations; ++it) {
    fill_empty_clusters(points, assign, centroids, k);
    centroids = cluster_means(points, assign, k);
    auto next = reassign(points, centroids, assign);
    if (next == assign) break;
    assign = std::move(next);
  }
  fill_empty_clusters(points, assign, centroids, k);
  hartigan_refine(points, assign, k);
  centroids = cluster_means(points, assign, k);
  KMeansResult r;
  r.wcss = within_cluster_ss(points, assign, centroids);
  r.assignments = std::move(assign);
  r.centroids = std::move(centroids);
  return r;
}

}  // namespace

int nearest_centroid(const Vector& point, const std::vector<Vector>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(point, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

double within_cluster_ss(const std::vector<Vector>& points, const std::vector<int>& assignments,
                         const std::vector<Vector>& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    s += sq_dist(points[i], centroids[static_cast<std::size_t>(assignments[i])]);
  return s;
}

KMeansResult kmeans_cluster(const std::vector<Vector>& points, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k-means needs k >= 1");
  if (static_cast<std::size_t>(k) > points.size()) {
    throw std::invalid_argument("k-means needs k <= number of points (k = " + std::to_string(k) +
                                ", n = " + std::to_string(points.size()) + ")");
  }
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw std::invalid_argument("k-means: ragged points");
  }
  Rng rng(seed);
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < kKMeansRestarts; ++restart) {
    auto r = lloyd(points, static_cast<std::size_t>(k), rng);
    if (r.wcss < best.wcss) best = std::move(r);
  }
  return best;
}

std::vector<int> allocate_test_counts(const std::vector<int>& cluster_sizes, int n_test) {
  const int n = std::accumulate(cluster_sizes.begin(), cluster_sizes.end(), 0);
  if (n_test < 0 || n_test >= n) {
    throw std::invalid_argument("test count must be in [0, n) (n_test = " + std::to_string(n_test) +
                                ", n = " + std::to_string(n) + ")");
  }
  const std::size_t k = cluster_sizes.size();
  std::vector<int> quota(k);
  std::vector<double> frac(k);
  int assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double exact = static_cast<double>(n_test) * cluster_sizes[c] / n;
    quota[c] = static_cast<int>(std::floor(exact));
    frac[c] = exact - quota[c];
    assigned += quota[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (int r = 0; r < n_test - assigned; ++r) quota[order[static_cast<std::size_t>(r)]] += 1;
  return quota;
}

Split split_dataset(const std::vector<FabricRecord>& fabrics, int n_test, std::uint64_t seed) {
  std::map<int, std::vector<int>> members;
  for (const auto& f : fabrics) {
    if (!f.cluster_id) {
      throw std::invalid_argument("fabric " + std::to_string(f.id) + " has no cluster assignment");
    }
    members[*f.cluster_id].push_back(f.id);
  }
  std::vector<int> sizes;
  for (const auto& [c, ids] : members) sizes.push_back(static_cast<int>(ids.size()));
  const auto quota = allocate_test_counts(sizes, n_test);

  Rng rng(seed);
  Split s;
  std::size_t ci = 0;
  for (auto& [c, ids] : members) {
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    const auto q = static_cast<std::size_t>(quota[ci++]);
    s.test_ids.insert(s.test_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(q));
    s.train_ids.insert(s.train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(q), ids.end());
  }
  std::sort(s.test_ids.begin(), s.test_ids.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  return s;
}

Dataset generate_dataset(const GenerateOptions& opts) {
  if (opts.cluster_k < 1 || opts.cluster_k > opts.n_fabrics) {
    throw std::invalid_argument("cluster.k must satisfy 1 <= k <= world.n_fabrics (k = " +
                                std::to_string(opts.cluster_k) +
                                ", n_fabrics = " + std::to_string(opts.n_fabrics) + ")");
  }
  const std::uint64_t seed = opts.world.seed;
  Dataset ds;
  ds.world_seed = seed;
  ds.fabric_seed = derive_seed(seed, "fabrics");
  ds.feature_dim = opts.world.feature_dim;
  ds.cluster_count = static_cast<std::uint32_t>(opts.cluster_k);
  ds.fabrics = generate_fabrics(opts.n_fabrics, ds.fabric_seed);

  if (opts.n_fabrics >= 2) {
    const auto norm = normalize_attributes(ds.fabrics);
    const auto km = kmeans_cluster(norm.rows, opts.cluster_k, derive_seed(seed, "kmeans"));
    for (std::size_t i = 0; i < ds.fabrics.size(); ++i) ds.fabrics[i].cluster_id = km.assignments[i];
  } else {
    ds.fabrics[0].cluster_id = 0;
  }
  ds.test_ids = split_dataset(ds.fabrics, opts.n_test, derive_seed(seed, "split")).test_ids;

  SynthWorld world(opts.world);
  ds.observations = synthesize_observations(world, ds.fabrics, opts.counts);
  return ds;
}

}  // namespace gelfab
