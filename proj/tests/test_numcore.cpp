#include <doctest.h>

#include <cmath>

#include "gelfab/errors.hpp"
#include "gelfab/numcore.hpp"
#include "gelfab/rng.hpp"

using namespace gelfab;

namespace {

Vector random_vector(Rng& rng, std::size_t n) {
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Loss used by the gradient checks: <c, enc(x)> + 0.5 |enc(x)|^2.
double probe_loss(const Encoder& enc, const Vector& x, const Vector& c) {
  const auto e = encoder_embed(enc, x);
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += c[i] * e[i] + 0.5 * e[i] * e[i];
  return s;
}

Vector probe_grad(const Encoder& enc, const Vector& x, const Vector& c) {
  auto fp = encoder_forward(enc, x);
  Vector g(c.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = c[i] + fp.embedding[i];
  return encoder_backward(enc, fp.cache, g).params;
}

}  // namespace

TEST_CASE("encoder_init is deterministic and shaped") {
  EncoderSpec spec{{4, 2}};
  const auto a = encoder_init(spec, 7);
  const auto b = encoder_init(spec, 7);
  CHECK(a == b);
  CHECK(a.parameter_count() == 2 * 4 + 2);
  CHECK(a.bias(0, 0) == 0.0);
  CHECK(a.bias(0, 1) == 0.0);

  const auto c = encoder_init(spec, 8);
  bool differs = false;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < 4; ++k) differs |= a.weight(0, r, k) != c.weight(0, r, k);
  CHECK(differs);
}

TEST_CASE("encoder_init draws at the He scale") {
  EncoderSpec spec{{200, 300}};
  const auto enc = encoder_init(spec, 3);
  double ss = 0.0;
  for (std::size_t r = 0; r < 300; ++r)
    for (std::size_t c = 0; c < 200; ++c) ss += enc.weight(0, r, c) * enc.weight(0, r, c);
  const double var = ss / (200.0 * 300.0);
  CHECK(var == doctest::Approx(2.0 / 200.0).epsilon(0.03));
}

TEST_CASE("invalid encoder specs are rejected") {
  CHECK_THROWS_AS(encoder_init(EncoderSpec{{4}}, 1), std::invalid_argument);
  CHECK_THROWS_AS(encoder_init(EncoderSpec{{4, 0, 2}}, 1), std::invalid_argument);
}

TEST_CASE("encoder_forward basics") {
  SUBCASE("zero weights give a zero embedding") {
    Encoder enc(EncoderSpec{{3, 5, 2}});
    const auto fp = encoder_forward(enc, Vector{1.0, -4.0, 2.5});
    CHECK(fp.embedding == Vector{0.0, 0.0});
  }
  SUBCASE("identity single layer is linear") {
    Encoder enc(EncoderSpec{{2, 2}});
    enc.weight(0, 0, 0) = 1.0;
    enc.weight(0, 1, 1) = 1.0;
    const auto fp = encoder_forward(enc, Vector{1.0, -2.0});
    CHECK(fp.embedding == Vector{1.0, -2.0});
  }
  SUBCASE("dimension mismatch") {
    Encoder enc(EncoderSpec{{2, 2}});
    CHECK_THROWS_AS(encoder_forward(enc, Vector{1.0}), std::invalid_argument);
  }
}

TEST_CASE("encoder_forward matches a hand-written forward pass") {
  const auto enc = encoder_init(EncoderSpec{{3, 4, 2}}, 42);
  const Vector x{0.5, -1.25, 2.0};
  // Independent arithmetic through the accessors.
  double h[4];
  for (int r = 0; r < 4; ++r) {
    double z = enc.bias(0, r);
    for (int c = 0; c < 3; ++c) z += enc.weight(0, r, c) * x[c];
    h[r] = z > 0 ? z : 0;
  }
  double out[2];
  for (int r = 0; r < 2; ++r) {
    out[r] = enc.bias(1, r);
    for (int c = 0; c < 4; ++c) out[r] += enc.weight(1, r, c) * h[c];
  }
  const auto fp = encoder_forward(enc, x);
  CHECK(fp.embedding[0] == doctest::Approx(out[0]).epsilon(1e-14));
  CHECK(fp.embedding[1] == doctest::Approx(out[1]).epsilon(1e-14));
  CHECK(encoder_embed(enc, x) == fp.embedding);
}

TEST_CASE("encoder_backward analytic cases") {
  SUBCASE("zero upstream gradient") {
    const auto enc = encoder_init(EncoderSpec{{3, 4, 2}}, 5);
    const auto fp = encoder_forward(enc, Vector{1, 2, 3});
    const auto g = encoder_backward(enc, fp.cache, Vector{0, 0});
    for (double v : g.params) CHECK(v == 0.0);
    for (double v : g.input) CHECK(v == 0.0);
  }
  SUBCASE("single linear layer gives the outer product") {
    const auto enc = encoder_init(EncoderSpec{{3, 2}}, 5);
    const Vector x{1.0, -2.0, 0.5};
    const Vector go{0.3, -0.7};
    const auto g = encoder_backward(enc, encoder_forward(enc, x).cache, go);
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 3; ++c) CHECK(g.params[r * 3 + c] == doctest::Approx(go[r] * x[c]));
      CHECK(g.params[6 + r] == doctest::Approx(go[r]));
    }
  }
  SUBCASE("rectifier mask equals positive pre-activation") {
    const auto enc = encoder_init(EncoderSpec{{4, 6, 3}}, 11);
    Rng rng(2);
    const auto x = random_vector(rng, 4);
    const auto fp = encoder_forward(enc, x);
    const auto g = encoder_backward(enc, fp.cache, Vector{1.0, 1.0, 1.0});
    for (std::size_t r = 0; r < 6; ++r) {
      const bool active = fp.cache.pre_activations[0][r] > 0.0;
      const double gb = g.params[enc.bias_offset(0) + r];
      if (!active) CHECK(gb == 0.0);
      CHECK(fp.cache.activations[1][r] == (active ? fp.cache.pre_activations[0][r] : 0.0));
    }
  }
  SUBCASE("mismatched cache is rejected") {
    const auto a = encoder_init(EncoderSpec{{3, 4, 2}}, 1);
    const auto b = encoder_init(EncoderSpec{{3, 5, 2}}, 1);
    const auto fp = encoder_forward(a, Vector{1, 2, 3});
    CHECK_THROWS_AS(encoder_backward(b, fp.cache, Vector{1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(encoder_backward(a, fp.cache, Vector{1, 1, 1}), std::invalid_argument);
  }
}

TEST_CASE("finite_diff_grad oracle") {
  SUBCASE("quadratic") {
    const auto g = finite_diff_grad([](std::span<const double> w) { return 0.5 * w[0] * w[0]; },
                                    Vector{3.0}, 1e-5);
    CHECK(std::abs(g[0] - 3.0) <= 1e-6);
  }
  SUBCASE("constant") {
    const auto g = finite_diff_grad([](std::span<const double>) { return 4.0; }, Vector{1.0, 2.0}, 1e-5);
    CHECK(g == Vector{0.0, 0.0});
  }
  SUBCASE("non-finite loss") {
    CHECK_THROWS_AS(finite_diff_grad([](std::span<const double>) { return NAN; }, Vector{1.0}, 1e-5),
                    NumericError);
  }
}

TEST_CASE("backward matches central differences on 3-layer encoders at 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const auto enc = encoder_init(EncoderSpec{{5, 7, 6, 3}}, seed);
    Rng rng(seed + 100);
    const auto x = random_vector(rng, 5);
    const auto c = random_vector(rng, 3);
    const auto analytic = probe_grad(enc, x, c);
    const auto numeric =
        finite_diff_grad([&](const Encoder& e) { return probe_loss(e, x, c); }, enc, 1e-5);
    CHECK(max_relative_error(analytic, numeric, 1e-6) <= 1e-4);
  }
}

TEST_CASE("input gradient matches central differences") {
  const auto enc = encoder_init(EncoderSpec{{4, 8, 2}}, 9);
  Rng rng(1);
  const auto x = random_vector(rng, 4);
  const Vector c{0.4, -1.1};
  auto fp = encoder_forward(enc, x);
  Vector go{c[0] + fp.embedding[0], c[1] + fp.embedding[1]};
  const auto g = encoder_backward(enc, fp.cache, go);
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> xi) { return probe_loss(enc, Vector(xi.begin(), xi.end()), c); }, x,
      1e-5);
  CHECK(max_relative_error(g.input, numeric, 1e-6) <= 1e-4);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves params unchanged") {
    Vector p{1.0, -2.0};
    AdamState st(2, 0.001);
    adam_step(p, Vector{0.0, 0.0}, st);
    CHECK(p == Vector{1.0, -2.0});
    CHECK(st.step_count == 1);
  }
  SUBCASE("closed-form first step") {
    Vector p{1.0};
    AdamState st(1, 0.001);
    adam_step(p, Vector{2.0}, st);
    CHECK(p[0] == doctest::Approx(1.0 - 0.001 * (2.0 / (2.0 + 1e-8))).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(0.999));
  }
  SUBCASE("converges on a quadratic") {
    Vector w{0.0};
    AdamState st(1, 0.1);
    for (int i = 0; i < 200; ++i) adam_step(w, Vector{2.0 * (w[0] - 5.0)}, st);
    CHECK(std::abs(w[0] - 5.0) <= 1e-2);
    CHECK(st.step_count == 200);
  }
  SUBCASE("shape mismatch") {
    Vector p{1.0};
    AdamState st(2, 0.1);
    CHECK_THROWS_AS(adam_step(p, Vector{1.0}, st), std::invalid_argument);
  }
}
