#pragma once

// Image ingestion: binary PNM (P5/P6) I/O, color augmentations and a frozen
// random-projection featurizer in place of a pretrained backbone.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gelfab/dataplane.hpp"
#include "gelfab/numcore.hpp"

namespace gelfab {

struct PixelImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 (P5) or 3 (P6)
  std::uint32_t max_value = 255;
  std::vector<std::uint16_t> pixels;  // row-major, channel-interleaved

  std::uint16_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }

  bool operator==(const PixelImage&) const = default;
};

/// Parses binary PNM. Throws FormatError (BadMagicError, TruncatedError) on
/// malformed input.
PixelImage parse_pnm(std::string_view bytes);
std::string serialize_pnm(const PixelImage& img);

PixelImage read_pnm(const std::filesystem::path& path);
void write_pnm(const PixelImage& img, const std::filesystem::path& path);

/// s -> round(max * (s / max)^gamma), gamma in [0.5, 2].
PixelImage gamma_correct(const PixelImage& img, double gamma);

/// Output channel i takes input channel perm[i].
PixelImage permute_channels(const PixelImage& img, const std::array<int, 3>& perm);

inline constexpr std::size_t kBackboneSide = 64;
inline constexpr std::size_t kBackboneFeatures = 256;

// Fixed Gaussian projection of a 64x64 downsampled image, followed by a
// rectifier. Never trained.
class FrozenBackbone {
 public:
  FrozenBackbone(std::uint64_t seed, std::size_t channels);

  std::uint64_t seed() const { return seed_; }
  std::size_t channels() const { return channels_; }
  std::size_t input_dim() const { return kBackboneSide * kBackboneSide * channels_; }

  /// Projection row r (length input_dim()).
  std::span<const double> row(std::size_t r) const {
    return {projection_.data() + r * input_dim(), input_dim()};
  }

 private:
  std::uint64_t seed_;
  std::size_t channels_;
  Vector projection_;
};

/// Box-filter downsample to 64x64, samples scaled to [0, 1], flattened.
Vector downsample(const PixelImage& img);

Vector featurize(const PixelImage& img, const FrozenBackbone& backbone);

/// Index of the frame with the largest mean absolute deviation from frame 0
/// (deepest press in a tactile sequence). Frames must share shape.
std::size_t select_press_frame(const std::vector<PixelImage>& frames);

struct IngestOptions {
  std::uint64_t backbone_seed = 7;
  bool augment = false;
  int color_variants = 2;  // extra augmented copies per color image
  std::uint64_t augment_seed = 11;
};

struct IngestReport {
  Dataset dataset;
  std::vector<std::string> errors;  // one entry per malformed path
};

/// Reads <root>/<fabric_id>/<modality>/<instance>.pnm (or .pgm/.ppm). A touch instance may
/// instead be a directory of frames, reduced with select_press_frame.
/// Optional <root>/attributes.csv supplies fabric attributes
/// (id,thickness_mm,stiffness,stretch_level,density_gsm).
IngestReport ingest_directory(const std::filesystem::path& root, const IngestOptions& opts);

}  // namespace gelfab
