// Dataset file layout (little-endian):
//
//   "GFDS" u32 version
//   u32 n_fabrics  u32 n_observations  u32 feature_dim  u32 cluster_count  u32 n_test
//   u64 world_seed u64 fabric_seed
//   n_fabrics x { i32 id, f64 thickness_mm, f64 stiffness, i32 stretch, f64 density, i32 cluster (-1 = none) }
//   n_test x i32 test fabric id
//   n_observations x { i32 fabric_id, u32 modality, i32 instance }
//   n_observations x feature_dim x f32 features

#include <bit>
#include <cmath>
#include <set>

#include "gelfab/binio.hpp"
#include "gelfab/dataplane.hpp"

namespace gelfab {

namespace {

constexpr std::string_view kMagic = "GFDS";
constexpr std::uint32_t kVersion = 1;

void f64(binio::Writer& w, double v) { w.u64(std::bit_cast<std::uint64_t>(v)); }
double f64(binio::Reader& r) { return std::bit_cast<double>(r.u64()); }

}  // namespace

std::string encode_dataset(const Dataset& ds) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(ds.fabrics.size()));
  w.u32(static_cast<std::uint32_t>(ds.observations.size()));
  w.u32(static_cast<std::uint32_t>(ds.feature_dim));
  w.u32(ds.cluster_count);
  w.u32(static_cast<std::uint32_t>(ds.test_ids.size()));
  w.u64(ds.world_seed);
  w.u64(ds.fabric_seed);
  for (const auto& f : ds.fabrics) {
    w.i32(f.id);
    f64(w, f.thickness_mm);
    f64(w, f.stiffness_score);
    w.i32(f.stretch_level);
    f64(w, f.density_gsm);
    w.i32(f.cluster_id.value_or(-1));
  }
  for (int id : ds.test_ids) w.i32(id);
  for (const auto& o : ds.observations) {
    w.i32(o.fabric_id);
    w.u32(static_cast<std::uint32_t>(o.modality));
    w.i32(o.instance_index);
  }
  for (const auto& o : ds.observations) {
    if (o.features.size() != ds.feature_dim) {
      throw std::invalid_argument("observation feature length differs from dataset feature_dim");
    }
    for (double v : o.features) w.f32(v);
  }
  return w.data();
}

Dataset decode_dataset(std::string_view bytes) {
  binio::Reader r(bytes, "dataset");
  if (bytes.size() < 4 || r.bytes(4) != kMagic) throw BadMagicError("dataset: bad magic");
  const auto version = r.u32();
  if (version != kVersion) {
    throw VersionMismatchError("dataset: version " + std::to_string(version) + ", expected " +
                               std::to_string(kVersion));
  }
  Dataset ds;
  const auto n_fab = r.u32();
  const auto n_obs = r.u32();
  ds.feature_dim = r.u32();
  ds.cluster_count = r.u32();
  const auto n_test = r.u32();
  ds.world_seed = r.u64();
  ds.fabric_seed = r.u64();
  std::set<int> ids;
  for (std::uint32_t i = 0; i < n_fab; ++i) {
    FabricRecord f;
    f.id = r.i32();
    f.thickness_mm = f64(r);
    f.stiffness_score = f64(r);
    f.stretch_level = r.i32();
    f.density_gsm = f64(r);
    const int c = r.i32();
    if (c >= 0) f.cluster_id = c;
    if (!ids.insert(f.id).second) throw FormatError("dataset: duplicate fabric id");
    ds.fabrics.push_back(f);
  }
  for (std::uint32_t i = 0; i < n_test; ++i) {
    const int id = r.i32();
    if (!ids.count(id)) throw FormatError("dataset: test id names no fabric");
    ds.test_ids.push_back(id);
  }
  ds.observations.resize(n_obs);
  for (auto& o : ds.observations) {
    o.fabric_id = r.i32();
    const auto m = r.u32();
    if (m > 3) throw FormatError("dataset: unknown modality tag " + std::to_string(m));
    o.modality = static_cast<Modality>(m);
    o.instance_index = r.i32();
    if (!ids.count(o.fabric_id)) throw FormatError("dataset: observation of unknown fabric");
  }
  for (auto& o : ds.observations) {
    o.features.resize(ds.feature_dim);
    for (auto& v : o.features) {
      v = r.f32();
      if (!std::isfinite(v)) throw FormatError("dataset: non-finite feature");
    }
  }
  if (!r.at_end()) throw FormatError("dataset: trailing bytes after payload");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  binio::write_file(path, encode_dataset(ds));
}

Dataset load_dataset(const std::string& path) { return decode_dataset(binio::read_file(path)); }

}  // namespace gelfab
