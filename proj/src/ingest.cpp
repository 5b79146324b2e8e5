#include "gelfab/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gelfab/binio.hpp"
#include "gelfab/errors.hpp"
#include "gelfab/rng.hpp"

namespace gelfab {

namespace fs = std::filesystem;

namespace {

class HeaderScanner {
 public:
  explicit HeaderScanner(std::string_view s) : s_(s) {}

  void skip_space_and_comments() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= s_.size()) throw TruncatedError(std::string("pnm: header ends before ") + what);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc() || ptr == s_.data() + pos_) {
      throw FormatError(std::string("pnm: malformed ") + what);
    }
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return v;
  }

  void single_whitespace() {
    if (pos_ >= s_.size()) throw TruncatedError("pnm: header ends before pixel data");
    if (!std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      throw FormatError("pnm: expected whitespace after maxval");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

PixelImage parse_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw BadMagicError("pnm: unsupported magic (expected P5 or P6)");
  }
  PixelImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderScanner hs(bytes);
  hs.advance(2);
  img.width = hs.number("width");
  img.height = hs.number("height");
  const auto maxval = hs.number("maxval");
  if (img.width == 0 || img.height == 0) throw FormatError("pnm: zero image dimension");
  if (maxval < 1 || maxval > 65535) throw FormatError("pnm: maxval outside [1, 65535]");
  img.max_value = static_cast<std::uint32_t>(maxval);
  hs.single_whitespace();

  const std::size_t samples = img.width * img.height * img.channels;
  const std::size_t bps = img.max_value > 255 ? 2 : 1;
  if (bytes.size() - hs.pos() < samples * bps) throw TruncatedError("pnm: truncated pixel data");
  img.pixels.resize(samples);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + hs.pos());
  for (std::size_t i = 0; i < samples; ++i) {
    const std::uint32_t v = bps == 2 ? (static_cast<std::uint32_t>(p[2 * i]) << 8) | p[2 * i + 1]
                                     : p[i];
    if (v > img.max_value) throw FormatError("pnm: sample exceeds maxval");
    img.pixels[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

std::string serialize_pnm(const PixelImage& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("pnm: 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw std::invalid_argument("pnm: pixel count does not match shape");
  }
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n" + std::to_string(img.max_value) + "\n";
  const bool wide = img.max_value > 255;
  out.reserve(out.size() + img.pixels.size() * (wide ? 2 : 1));
  for (auto v : img.pixels) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

PixelImage read_pnm(const fs::path& path) { return parse_pnm(binio::read_file(path.string())); }

void write_pnm(const PixelImage& img, const fs::path& path) {
  binio::write_file(path.string(), serialize_pnm(img));
}

PixelImage gamma_correct(const PixelImage& img, double gamma) {
  if (!(gamma >= 0.5 && gamma <= 2.0)) throw std::invalid_argument("gamma must lie in [0.5, 2.0]");
  PixelImage out = img;
  const double mx = img.max_value;
  for (auto& s : out.pixels) s = static_cast<std::uint16_t>(std::lround(mx * std::pow(s / mx, gamma)));
  return out;
}

PixelImage permute_channels(const PixelImage& img, const std::array<int, 3>& perm) {
  if (img.channels != 3) throw std::invalid_argument("channel permutation needs a 3-channel image");
  std::array<bool, 3> seen{};
  for (int p : perm) {
    if (p < 0 || p > 2 || seen[static_cast<std::size_t>(p)]) {
      throw std::invalid_argument("invalid channel permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  PixelImage out = img;
  for (std::size_t i = 0; i < img.width * img.height; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.pixels[i * 3 + c] = img.pixels[i * 3 + static_cast<std::size_t>(perm[c])];
  return out;
}

FrozenBackbone::FrozenBackbone(std::uint64_t seed, std::size_t channels)
    : seed_(seed), channels_(channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("backbone: 1 or 3 channels");
  Rng rng(derive_seed(seed, channels));
  const double stddev = 1.0 / std::sqrt(static_cast<double>(input_dim()));
  projection_.resize(kBackboneFeatures * input_dim());
  for (auto& v : projection_) v = rng.normal(0.0, stddev);
}

Vector downsample(const PixelImage& img) {
  const std::size_t side = kBackboneSide;
  const std::size_t ch = img.channels;
  Vector out(side * side * ch, 0.0);
  auto span_of = [side](std::size_t o, std::size_t n) {
    std::size_t lo = o * n / side;
    std::size_t hi = ((o + 1) * n + side - 1) / side;
    hi = std::max(hi, lo + 1);
    return std::pair{lo, std::min(hi, n)};
  };
  const double scale = 1.0 / img.max_value;
  for (std::size_t oy = 0; oy < side; ++oy) {
    const auto [y0, y1] = span_of(oy, img.height);
    for (std::size_t ox = 0; ox < side; ++ox) {
      const auto [x0, x1] = span_of(ox, img.width);
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) acc += img.at(x, y, c);
        out[(oy * side + ox) * ch + c] = acc * scale / count;
      }
    }
  }
  return out;
}

Vector featurize(const PixelImage& img, const FrozenBackbone& backbone) {
  if (img.channels != backbone.channels()) {
    throw std::invalid_argument("image has " + std::to_string(img.channels) +
                                " channels, backbone expects " + std::to_string(backbone.channels()));
  }
  const Vector x = downsample(img);
  Vector f(kBackboneFeatures);
  for (std::size_t r = 0; r < kBackboneFeatures; ++r) {
    const auto row = backbone.row(r);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += row[i] * x[i];
    f[r] = acc > 0.0 ? acc : 0.0;
  }
  return f;
}

std::size_t select_press_frame(const std::vector<PixelImage>& frames) {
  if (frames.empty()) throw std::invalid_argument("press sequence has no frames");
  const auto& first = frames.front();
  std::size_t best = 0;
  double best_dev = -1.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.width != first.width || f.height != first.height || f.channels != first.channels) {
      throw std::invalid_argument("press sequence frames differ in shape");
    }
    double dev = 0.0;
    for (std::size_t k = 0; k < f.pixels.size(); ++k)
      dev += std::abs(static_cast<double>(f.pixels[k]) - first.pixels[k]);
    dev /= static_cast<double>(f.pixels.size());
    if (dev > best_dev) {
      best_dev = dev;
      best = i;
    }
  }
  return best;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

bool is_pnm_name(const fs::path& p) {
  const auto ext = p.extension();
  return ext == ".pnm" || ext == ".pgm" || ext == ".ppm";
}

bool parse_int(const std::string& s, int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::map<int, FabricRecord> read_attributes(const fs::path& file) {
  std::map<int, FabricRecord> out;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("id", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    FabricRecord f;
    if (!(ss >> f.id >> f.thickness_mm >> f.stiffness_score >> f.stretch_level >> f.density_gsm)) {
      throw FormatError("attributes.csv: malformed line '" + line + "'");
    }
    out[f.id] = f;
  }
  return out;
}

PixelImage load_instance(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<PixelImage> frames;
    for (const auto& f : sorted_entries(p))
      if (is_pnm_name(f)) frames.push_back(read_pnm(f));
    if (frames.empty()) throw FormatError("no frames in sequence directory");
    return frames[select_press_frame(frames)];
  }
  return read_pnm(p);
}

std::array<int, 3> random_permutation(Rng& rng) {
  std::array<int, 3> p{0, 1, 2};
  for (std::size_t i = 2; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
  return p;
}

}  // namespace

IngestReport ingest_directory(const fs::path& root, const IngestOptions& opts) {
  if (!fs::is_directory(root)) throw IoError("ingest root '" + root.string() + "' is not a directory");
  const FrozenBackbone gray(opts.backbone_seed, 1);
  const FrozenBackbone rgb(opts.backbone_seed, 3);
  auto backbone_for = [&](const PixelImage& img) -> const FrozenBackbone& {
    return img.channels == 1 ? gray : rgb;
  };

  std::map<int, FabricRecord> attrs;
  if (fs::exists(root / "attributes.csv")) attrs = read_attributes(root / "attributes.csv");

  IngestReport rep;
  rep.dataset.feature_dim = kBackboneFeatures;
  rep.dataset.world_seed = opts.backbone_seed;
  std::set<Modality> seen_modalities;
  std::map<int, std::set<Modality>> fabric_modalities;

  for (const auto& fabric_dir : sorted_entries(root)) {
    if (!fs::is_directory(fabric_dir)) continue;
    int id = 0;
    if (!parse_int(fabric_dir.filename().string(), id)) {
      rep.errors.push_back(fabric_dir.string() + ": directory name is not a fabric id");
      continue;
    }
    FabricRecord rec;
    if (auto it = attrs.find(id); it != attrs.end()) rec = it->second;
    rec.id = id;
    rep.dataset.fabrics.push_back(rec);
    fabric_modalities[id];

    for (const auto& mod_dir : sorted_entries(fabric_dir)) {
      if (!fs::is_directory(mod_dir)) continue;
      Modality m;
      try {
        m = parse_modality(mod_dir.filename().string());
      } catch (const std::invalid_argument& e) {
        rep.errors.push_back(mod_dir.string() + ": " + e.what());
        continue;
      }
      int instance = 0;
      std::vector<Observation> augmented;
      for (const auto& inst : sorted_entries(mod_dir)) {
        if (!fs::is_directory(inst) && !is_pnm_name(inst)) continue;
        PixelImage img;
        try {
          img = load_instance(inst);
          Observation o{id, m, instance, featurize(img, backbone_for(img))};
          rep.dataset.observations.push_back(std::move(o));
        } catch (const std::exception& e) {
          rep.errors.push_back(inst.string() + ": " + e.what());
          continue;
        }
        if (opts.augment && m == Modality::Color && img.channels == 3) {
          Rng rng(derive_seed(derive_seed(opts.augment_seed, static_cast<std::uint64_t>(id)),
                              static_cast<std::uint64_t>(instance)));
          for (int v = 0; v < opts.color_variants; ++v) {
            const double gamma = rng.uniform(0.5, 2.0);
            const auto perm = random_permutation(rng);
            const auto aug = permute_channels(gamma_correct(img, gamma), perm);
            augmented.push_back({id, m, 0, featurize(aug, rgb)});
          }
        }
        ++instance;
        seen_modalities.insert(m);
        fabric_modalities[id].insert(m);
      }
      for (auto& o : augmented) {
        o.instance_index = instance++;
        rep.dataset.observations.push_back(std::move(o));
      }
    }
  }

  if (rep.dataset.fabrics.empty() || rep.dataset.observations.empty()) {
    throw IoError("ingest: no fabric observations found under '" + root.string() + "'");
  }
  for (const auto& [id, mods] : fabric_modalities) {
    for (Modality m : seen_modalities) {
      if (!mods.count(m)) {
        throw FormatError("ingest: fabric " + std::to_string(id) + " has no " +
                          std::string(modality_name(m)) + " observations");
      }
    }
  }
  for (auto& o : rep.dataset.observations)
    for (auto& v : o.features) v = static_cast<double>(static_cast<float>(v));
  return rep;
}

}  // namespace gelfab
