#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gelfab/errors.hpp"
#include "gelfab/ingest.hpp"
#include "gelfab/rng.hpp"

using namespace gelfab;
namespace fs = std::filesystem;

namespace {

PixelImage random_image(Rng& rng, std::size_t w, std::size_t h, std::size_t ch, std::uint32_t maxv) {
  PixelImage img{w, h, ch, maxv, {}};
  for (std::size_t i = 0; i < w * h * ch; ++i) img.pixels.push_back(static_cast<std::uint16_t>(rng.below(maxv + 1)));
  return img;
}

double norm(const Vector& a, const Vector& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("parse_pnm") {
  SUBCASE("8-bit color") {
    std::string bytes = "P6 2 1 255\n";
    bytes += std::string("\xff\x00\x00\x00\xff\x00", 6);
    const auto img = parse_pnm(bytes);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.channels == 3);
    CHECK(img.at(0, 0, 0) == 255);
    CHECK(img.at(0, 0, 1) == 0);
    CHECK(img.at(0, 0, 2) == 0);
    CHECK(img.at(1, 0, 1) == 255);
  }
  SUBCASE("16-bit samples are big-endian") {
    std::string bytes = "P5 1 1 65535\n";
    bytes += std::string("\x01\x00", 2);
    CHECK(parse_pnm(bytes).pixels == std::vector<std::uint16_t>{256});
  }
  SUBCASE("header comments") {
    std::string bytes = "P5\n# depth frame\n2 1\n255\n";
    bytes += std::string("\x07\x09", 2);
    CHECK(parse_pnm(bytes).pixels == std::vector<std::uint16_t>{7, 9});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_pnm("P7 1 1 255\n\x01"), BadMagicError);
    CHECK_THROWS_AS(parse_pnm("P5 2 2 255\n\x01\x02"), TruncatedError);
    CHECK_THROWS_AS(parse_pnm("P5 1 1 70000\n\x01\x02"), FormatError);
    CHECK_THROWS_AS(parse_pnm("P5 1 1 0\n\x01"), FormatError);
    CHECK_THROWS_AS(parse_pnm("P5 1 1 10\n\x0b"), FormatError);
  }
}

TEST_CASE("pnm round-trip over random images") {
  Rng rng(4);
  for (int t = 0; t < 40; ++t) {
    const std::size_t ch = rng.below(2) ? 3 : 1;
    const std::uint32_t maxv = rng.below(2) ? 255 : static_cast<std::uint32_t>(1 + rng.below(65535));
    const auto img = random_image(rng, 1 + rng.below(9), 1 + rng.below(9), ch, maxv);
    CHECK(parse_pnm(serialize_pnm(img)) == img);
  }
}

TEST_CASE("gamma_correct") {
  const PixelImage img{1, 1, 1, 255, {64}};
  CHECK(gamma_correct(img, 1.0) == img);
  CHECK(gamma_correct(img, 2.0).pixels[0] == 16);
  CHECK(gamma_correct(img, 0.5).pixels[0] == 128);
  CHECK_THROWS_AS(gamma_correct(img, 0.4), std::invalid_argument);
  CHECK_THROWS_AS(gamma_correct(img, 2.1), std::invalid_argument);

  Rng rng(1);
  const auto big = random_image(rng, 5, 4, 3, 1023);
  const auto g = gamma_correct(big, 1.7);
  CHECK(g.width == big.width);
  CHECK(g.height == big.height);
  CHECK(g.max_value == big.max_value);
  for (auto v : g.pixels) CHECK(v <= 1023);
}

TEST_CASE("permute_channels") {
  const PixelImage px{1, 1, 3, 255, {10, 20, 30}};
  CHECK(permute_channels(px, {2, 0, 1}).pixels == std::vector<std::uint16_t>{30, 10, 20});
  CHECK(permute_channels(px, {0, 1, 2}) == px);

  Rng rng(2);
  const auto img = random_image(rng, 6, 3, 3, 255);
  const std::array<int, 3> perm{1, 2, 0};
  std::array<int, 3> inv{};
  for (int i = 0; i < 3; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  CHECK(permute_channels(permute_channels(img, perm), inv) == img);

  CHECK_THROWS_AS(permute_channels(PixelImage{1, 1, 1, 255, {3}}, {0, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(permute_channels(px, {0, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(permute_channels(px, {0, 1, 3}), std::invalid_argument);
}

TEST_CASE("featurize") {
  const FrozenBackbone rgb(7, 3);
  const PixelImage black{10, 12, 3, 255, std::vector<std::uint16_t>(360, 0)};
  const auto f0 = featurize(black, rgb);
  CHECK(f0.size() == kBackboneFeatures);
  for (double v : f0) CHECK(v == 0.0);

  Rng rng(3);
  const auto img = random_image(rng, 70, 66, 3, 255);
  CHECK(featurize(img, rgb) == featurize(img, FrozenBackbone(7, 3)));
  auto tweaked = img;
  tweaked.pixels[100] = static_cast<std::uint16_t>(255 - tweaked.pixels[100]);
  CHECK(featurize(img, rgb) != featurize(tweaked, rgb));

  CHECK_THROWS_AS(featurize(img, FrozenBackbone(7, 1)), std::invalid_argument);
}

TEST_CASE("downsample averages boxes") {
  PixelImage img{128, 128, 1, 255, std::vector<std::uint16_t>(128 * 128, 0)};
  img.pixels[0] = 255;  // top-left 2x2 box holds one bright pixel
  const auto d = downsample(img);
  CHECK(d.size() == 64 * 64);
  CHECK(d[0] == doctest::Approx(0.25));
  CHECK(d[1] == 0.0);

  const PixelImage tiny{2, 2, 1, 100, {0, 100, 50, 100}};
  const auto t = downsample(tiny);
  CHECK(t[0] == doctest::Approx(0.0));
  CHECK(t[63] == doctest::Approx(1.0));
  CHECK(t[64 * 63] == doctest::Approx(0.5));
}

TEST_CASE("featurize perturbation is bounded by the projection norm") {
  const FrozenBackbone gray(5, 1);
  // Frobenius norm bounds the operator norm.
  double frob = 0;
  for (std::size_t r = 0; r < kBackboneFeatures; ++r)
    for (double v : gray.row(r)) frob += v * v;
  frob = std::sqrt(frob);
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    const auto a = random_image(rng, 64, 64, 1, 255);
    const auto b = random_image(rng, 64, 64, 1, 255);
    const double in = norm(downsample(a), downsample(b));
    const double out = norm(featurize(a, gray), featurize(b, gray));
    CHECK(out <= frob * in + 1e-9);
  }
}

TEST_CASE("select_press_frame picks the largest deviation") {
  std::vector<PixelImage> frames;
  for (std::uint16_t v : {10, 30, 90, 40}) frames.push_back(PixelImage{2, 2, 1, 255, std::vector<std::uint16_t>(4, v)});
  CHECK(select_press_frame(frames) == 2);
  CHECK_THROWS_AS(select_press_frame({}), std::invalid_argument);
}

TEST_CASE("ingest_directory") {
  const fs::path root = fs::temp_directory_path() / "gelfab_ingest_test";
  fs::remove_all(root);
  Rng rng(6);
  for (int id : {0, 1}) {
    for (const char* m : {"depth", "color", "touch"}) fs::create_directories(root / std::to_string(id) / m);
    write_pnm(random_image(rng, 8, 8, 1, 65535), root / std::to_string(id) / "depth" / "0.pnm");
    write_pnm(random_image(rng, 8, 8, 3, 255), root / std::to_string(id) / "color" / "0.pnm");
    write_pnm(random_image(rng, 8, 8, 3, 255), root / std::to_string(id) / "touch" / "0.pnm");
  }
  SUBCASE("counts") {
    const auto rep = ingest_directory(root, {});
    CHECK(rep.dataset.fabrics.size() == 2);
    CHECK(rep.dataset.observations.size() == 6);
    CHECK(rep.dataset.feature_dim == kBackboneFeatures);
    CHECK(rep.errors.empty());
  }
  SUBCASE("augmentation triples color observations") {
    IngestOptions opts;
    opts.augment = true;
    opts.color_variants = 2;
    const auto rep = ingest_directory(root, opts);
    int color = 0;
    for (const auto& o : rep.dataset.observations) color += o.modality == Modality::Color;
    CHECK(color == 6);
    CHECK(rep.dataset.observations.size() == 10);
  }
  SUBCASE("malformed files are reported and skipped") {
    fs::create_directories(root / "1" / "depth");
    {
      std::ofstream(root / "1" / "depth" / "1.pnm") << "P9 junk";
    }
    const auto rep = ingest_directory(root, {});
    CHECK(rep.errors.size() == 1);
    CHECK(rep.dataset.observations.size() == 6);
  }
  SUBCASE("attributes file") {
    std::ofstream(root / "attributes.csv") << "id,thickness,stiffness,stretch,density\n0,1.5,2.0,1,120\n1,0.4,4.5,0,300\n";
    const auto rep = ingest_directory(root, {});
    CHECK(rep.dataset.fabric(1).thickness_mm == 0.4);
    CHECK(rep.dataset.fabric(1).stiffness_score == 4.5);
    CHECK(rep.dataset.fabric(0).stretch_level == 1);
    CHECK(rep.dataset.fabric(0).density_gsm == 120.0);
  }
  SUBCASE("malformed attributes file") {
    std::ofstream(root / "attributes.csv") << "0,1.5,oops\n";
    CHECK_THROWS_AS(ingest_directory(root, {}), FormatError);
  }
  SUBCASE("a fabric missing a modality aborts") {
    fs::remove_all(root / "1" / "color");
    CHECK_THROWS_AS(ingest_directory(root, {}), FormatError);
  }
  SUBCASE("touch sequence directories reduce to one frame") {
    const auto seq = root / "0" / "touch" / "1";
    fs::create_directories(seq);
    for (int i = 0; i < 3; ++i) write_pnm(random_image(rng, 8, 8, 3, 255), seq / (std::to_string(i) + ".pnm"));
    const auto rep = ingest_directory(root, {});
    CHECK(rep.dataset.observations.size() == 7);
  }
  fs::remove_all(root);

  const fs::path empty = fs::temp_directory_path() / "gelfab_ingest_empty";
  fs::create_directories(empty);
  CHECK_THROWS_AS(ingest_directory(empty, {}), IoError);
  fs::remove_all(empty);
}
