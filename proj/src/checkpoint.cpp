// Checkpoint layout (little-endian):
//
//   "GFAB" u32 version
//   u32 architecture  u32 n_branches  n_branches x u32 modality
//   u32 touch_presses  f64 margin  f64 aux_weight  u64 backbone_seed
//   u32 n_encoders
//     per encoder: u32 n_dims, n_dims x u32 dim, then f32 params
//     (layer by layer: weights out x in row-major, then biases)
//   u32 n_heads
//     per head: u32 classes, u32 dim, f32 params (weights classes x dim, then biases)
//   training config: f64 learning_rate, u32 batch_size, u32 iterations,
//                    f64 margin, f64 negative_ratio, f64 aux_weight, u64 master_seed

#include <bit>

#include "gelfab/binio.hpp"
#include "gelfab/errors.hpp"
#include "gelfab/trainer.hpp"

namespace gelfab {

namespace {

constexpr std::string_view kMagic = "GFAB";

void f64(binio::Writer& w, double v) { w.u64(std::bit_cast<std::uint64_t>(v)); }
double f64(binio::Reader& r) { return std::bit_cast<double>(r.u64()); }

void read_reals(binio::Reader& r, std::span<double> out) {
  if (r.remaining() / 4 < out.size()) throw TruncatedError("checkpoint: truncated in weights");
  for (auto& v : out) v = r.f32();
}

}  // namespace

std::string encode_checkpoint(const JointModel& model, const TrainConfig& config) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.arch));
  w.u32(static_cast<std::uint32_t>(model.branch_modalities.size()));
  for (Modality m : model.branch_modalities) w.u32(static_cast<std::uint32_t>(m));
  w.u32(model.touch_presses);
  f64(w, model.margin);
  f64(w, model.aux_weight);
  w.u64(model.backbone_seed);
  w.u32(static_cast<std::uint32_t>(model.encoders.size()));
  for (const auto& e : model.encoders) {
    w.u32(static_cast<std::uint32_t>(e.spec().layer_dims.size()));
    for (auto d : e.spec().layer_dims) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.params()) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(model.heads.size()));
  for (const auto& h : model.heads) {
    w.u32(static_cast<std::uint32_t>(h.classes));
    w.u32(static_cast<std::uint32_t>(h.dim));
    for (double v : h.params) w.f32(v);
  }
  f64(w, config.learning_rate);
  w.u32(config.batch_size);
  w.u32(config.iterations);
  f64(w, config.margin);
  f64(w, config.negative_ratio);
  f64(w, config.aux_weight);
  w.u64(config.master_seed);
  return w.data();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (bytes.size() < 4 || r.bytes(4) != kMagic) throw BadMagicError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint: version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  JointModel& m = ck.model;
  const auto arch = r.u32();
  if (arch > 3) throw FormatError("checkpoint: unknown architecture tag");
  m.arch = static_cast<Architecture>(arch);
  const auto nb = r.u32();
  if (nb != (m.arch == Architecture::SNN2 ? 2u : 3u)) throw FormatError("checkpoint: bad branch count");
  for (std::uint32_t b = 0; b < nb; ++b) {
    const auto mod = r.u32();
    if (mod > 3) throw FormatError("checkpoint: unknown modality tag");
    m.branch_modalities.push_back(static_cast<Modality>(mod));
  }
  m.touch_presses = r.u32();
  m.margin = f64(r);
  m.aux_weight = f64(r);
  m.backbone_seed = r.u64();

  const auto n_enc = r.u32();
  if (n_enc != 1 && n_enc != nb) throw FormatError("checkpoint: bad encoder count");
  for (std::uint32_t e = 0; e < n_enc; ++e) {
    const auto n_dims = r.u32();
    if (n_dims < 2 || n_dims > 64) throw FormatError("checkpoint: bad layer count");
    EncoderSpec spec;
    for (std::uint32_t i = 0; i < n_dims; ++i) {
      const auto d = r.u32();
      if (d < 1 || d > (1u << 20)) throw FormatError("checkpoint: bad layer width");
      spec.layer_dims.push_back(d);
    }
    if (!m.encoders.empty() && (spec.input_dim() != m.input_dim() ||
                                spec.output_dim() != m.embedding_dim())) {
      throw FormatError("checkpoint: encoders disagree on input or embedding dim");
    }
    Encoder enc(spec);
    read_reals(r, enc.params());
    m.encoders.push_back(std::move(enc));
  }
  const auto n_heads = r.u32();
  if (n_heads != 0 && n_heads != nb) throw FormatError("checkpoint: bad head count");
  for (std::uint32_t h = 0; h < n_heads; ++h) {
    const auto classes = r.u32();
    const auto dim = r.u32();
    if (classes < 1 || classes > 4096 || dim != m.embedding_dim()) {
      throw FormatError("checkpoint: bad classifier head shape");
    }
    ClassifierHead head(classes, dim);
    read_reals(r, head.params);
    m.heads.push_back(std::move(head));
  }
  ck.config.learning_rate = f64(r);
  ck.config.batch_size = r.u32();
  ck.config.iterations = r.u32();
  ck.config.margin = f64(r);
  ck.config.negative_ratio = f64(r);
  ck.config.aux_weight = f64(r);
  ck.config.master_seed = r.u64();
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after payload");
  return ck;
}

void save_checkpoint(const JointModel& model, const TrainConfig& config, const std::string& path) {
  binio::write_file(path, encode_checkpoint(model, config));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace gelfab
