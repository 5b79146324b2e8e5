#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gelfab/errors.hpp"
#include "gelfab/evalsuite.hpp"
#include "gelfab/rng.hpp"

using namespace gelfab;

namespace {

Vector random_vec(Rng& rng, std::size_t n) {
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

EmbeddingBank latent_bank(const std::vector<FabricRecord>& fabrics, int instances) {
  EmbeddingBank bank;
  for (const auto& f : fabrics) {
    const auto l = normalized_latents(f);
    bank[f.id] = std::vector<Vector>(static_cast<std::size_t>(instances), Vector(l.begin(), l.end()));
  }
  return bank;
}

EmbeddingBank noise_bank(Rng& rng, int fabrics, int instances, std::size_t dim) {
  EmbeddingBank bank;
  for (int f = 0; f < fabrics; ++f)
    for (int i = 0; i < instances; ++i) bank[f].push_back(random_vec(rng, dim));
  return bank;
}

// exp(-c d^2) summed per candidate fabric, averaged over query images
Vector oracle_row(const std::vector<Vector>& queries, const EmbeddingBank& cands, const std::vector<int>& order, double c) {
  Vector row(order.size(), 0.0);
  for (const auto& q : queries) {
    Vector w(order.size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < order.size(); ++j)
      for (const auto& e : cands.at(order[j])) {
        double d2 = 0;
        for (std::size_t k = 0; k < q.size(); ++k) d2 += (q[k] - e[k]) * (q[k] - e[k]);
        w[j] += std::exp(-c * d2);
        total += std::exp(-c * d2);
      }
    for (std::size_t j = 0; j < order.size(); ++j) row[j] += w[j] / total / static_cast<double>(queries.size());
  }
  return row;
}

}  // namespace

TEST_CASE("EvalConfig validation") {
  EvalConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_candidates = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  EvalConfig p;
  p.prob_coefficient = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("pick_one_of_n") {
  const Vector q{0, 0};
  CHECK(pick_one_of_n(q, {{3, 4}, {0.5, 0}, {0, 2}}) == std::vector<std::size_t>{1, 2, 0});
  CHECK(pick_one_of_n(q, {{1, 0}, {0, 1}, {-1, 0}}) == std::vector<std::size_t>{0, 1, 2});
  CHECK(pick_one_of_n(q, {{2, 0}, {0, 1}, {5, 5}, {0, 0}})[0] == 3);
  CHECK_THROWS_AS(pick_one_of_n(q, {}), std::invalid_argument);
  CHECK_THROWS_AS(pick_one_of_n(q, {{1, 2, 3}}), std::invalid_argument);

  // candidates along distinct axes at distance d_i, then at d_i^2
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<Vector> near, squared;
    for (std::size_t i = 0; i < 6; ++i) {
      const double d = 0.1 + 3.0 * rng.uniform();
      Vector a(6, 0.0), b(6, 0.0);
      a[i] = d;
      b[i] = d * d;
      near.push_back(a);
      squared.push_back(b);
    }
    CHECK(pick_one_of_n(Vector(6, 0.0), near) == pick_one_of_n(Vector(6, 0.0), squared));
  }
}

TEST_CASE("match_probability") {
  const Vector q{0, 0};
  const auto uni = match_probability(q, {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}, 0.085);
  for (double p : uni) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  const auto two = match_probability(q, {{0, 0}, {10, 0}}, 0.085);
  CHECK(two[0] == doctest::Approx(1.0 / (1.0 + std::exp(-8.5))).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(std::exp(-8.5) / (1.0 + std::exp(-8.5))).epsilon(1e-12));

  // far candidates would underflow without max subtraction
  const auto far = match_probability(q, {{100, 0}, {101, 0}}, 1.0);
  CHECK(far[0] + far[1] == doctest::Approx(1.0));
  CHECK(far[0] > 0.99);

  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto target = random_vec(rng, 3);
    std::vector<Vector> cands, lifted;
    const double shift = 5.0 * rng.uniform();
    for (int i = 0; i < 8; ++i) {
      auto e = random_vec(rng, 3);
      cands.push_back(e);
      e.push_back(std::sqrt(shift));  // adds `shift` to every squared distance
      lifted.push_back(e);
    }
    auto t4 = target;
    t4.push_back(0.0);
    const auto p = match_probability(target, cands, 0.3);
    const auto ps = match_probability(t4, lifted, 0.3);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - ps[i]) <= 1e-12);
  }
  CHECK_THROWS_AS(match_probability(q, {}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(match_probability(q, {{1, 1}}, 0.0), std::invalid_argument);
}

TEST_CASE("topk precision") {
  EvalConfig cfg;
  const auto fabrics = generate_fabrics(30, 5);

  SUBCASE("latent oracle is perfect") {
    const auto bank = latent_bank(fabrics, 3);
    const auto cell = topk_precision(bank, bank, false, cfg);
    CHECK(cell.at(1) == 1.0);
    CHECK(cell.at(3) == 1.0);
    CHECK(cell.trials == 30u * 3u * 10u);
  }
  SUBCASE("random embeddings sit at chance") {
    Rng rng(12);
    const auto q = noise_bank(rng, 30, 5, 4);
    const auto c = noise_bank(rng, 30, 5, 4);
    const auto cell = topk_precision(q, c, false, cfg);
    CHECK(cell.trials >= 1000u);
    CHECK(cell.at(1) >= 0.05);
    CHECK(cell.at(1) <= 0.17);
    CHECK(cell.at(3) >= cell.at(1));
  }
  SUBCASE("same-modality queries never retrieve themselves") {
    Rng rng(13);
    const auto bank = noise_bank(rng, 30, 2, 4);
    const auto cell = topk_precision(bank, bank, true, cfg);
    CHECK(cell.at(1) <= 0.17);
  }
  SUBCASE("deterministic and worker independent") {
    Rng rng(14);
    const auto q = noise_bank(rng, 30, 4, 3);
    const auto c = noise_bank(rng, 30, 4, 3);
    const auto a = topk_precision(q, c, false, cfg);
    CHECK(topk_precision(q, c, false, cfg).precision == a.precision);
    EvalConfig par = cfg;
    par.workers = 4;
    CHECK(topk_precision(q, c, false, par).precision == a.precision);
    par.seed = 2;
    CHECK(topk_precision(q, c, false, par).precision != a.precision);
  }
  SUBCASE("too few fabrics") {
    const auto bank = latent_bank(std::vector<FabricRecord>(fabrics.begin(), fabrics.begin() + 9), 1);
    CHECK_THROWS_AS(topk_precision(bank, bank, false, cfg), std::invalid_argument);
  }
  SUBCASE("top-3 dominates top-1 on partially informative embeddings") {
    Rng rng(15);
    for (int rep = 0; rep < 5; ++rep) {
      auto bank = latent_bank(fabrics, 3);
      for (auto& [id, list] : bank)
        for (auto& e : list)
          for (auto& v : e) v += 0.5 * rng.normal();
      EvalConfig c = cfg;
      c.seed = static_cast<std::uint64_t>(rep);
      const auto cell = topk_precision(bank, bank, true, c);
      CHECK(cell.at(3) >= cell.at(1));
    }
  }
}

TEST_CASE("model-level precision grid") {
  GenerateOptions o;
  o.n_fabrics = 14;
  o.n_test = 0;
  o.cluster_k = 2;
  o.world.feature_dim = 8;
  o.counts = {2, 2, 2, 3};
  const auto ds = generate_dataset(o);
  ModelOptions mo;
  mo.feature_dim = 8;
  mo.hidden_dims = {8};
  mo.embedding_dim = 4;
  const auto cross = make_model(mo, 1);
  EvalConfig cfg;
  cfg.repetitions = 2;
  const auto grid = precision_grid(cross, ds, ds.all_ids(), cfg);
  CHECK(grid.size() == 7);
  CHECK(grid[0].label == "Depth2Gel");
  CHECK(grid[0].query == Modality::TouchFold);
  CHECK(grid[0].candidate == Modality::Depth);

  mo.arch = Architecture::SNN2;
  const auto snn = make_model(mo, 1);
  const auto only = precision_grid(snn, ds, ds.all_ids(), cfg);
  REQUIRE(only.size() == 1);
  CHECK(only[0].label == "Dep2Dep");
  CHECK_THROWS_AS(topk_precision(snn, ds, ds.all_ids(), Modality::Color, Modality::Depth, cfg), std::invalid_argument);

  mo.arch = Architecture::MultiInput;
  const auto multi = make_model(mo, 1);
  const auto fused = query_bank(multi, ds, ds.all_ids(), Modality::TouchFold);
  const auto plain = embed_bank(multi, ds, ds.all_ids(), Modality::TouchFold);
  REQUIRE(fused.at(0).size() == 3);
  const auto expect = fuse_max({plain.at(0)[1], plain.at(0)[2], plain.at(0)[0]}).value;
  CHECK(fused.at(0)[1] == expect);
  CHECK(query_bank(multi, ds, ds.all_ids(), Modality::Depth) == embed_bank(multi, ds, ds.all_ids(), Modality::Depth));
}

TEST_CASE("confusion matrix") {
  SUBCASE("hand-computed two-fabric case") {
    EmbeddingBank q{{0, {{0.0}}}, {1, {{1.5}, {2.5}}}};
    EmbeddingBank c{{0, {{0.0}}}, {1, {{1.0}, {2.0}}}};
    const std::vector<int> order{0, 1};
    const auto cm = confusion_matrix(q, c, order, false, 1.0);
    const double z = 1.0 + std::exp(-1.0) + std::exp(-4.0);
    CHECK(cm.values[0][0] == doctest::Approx(1.0 / z).epsilon(1e-14));
    CHECK(cm.values[0][1] == doctest::Approx((std::exp(-1.0) + std::exp(-4.0)) / z).epsilon(1e-14));
    for (std::size_t i = 0; i < 2; ++i) {
      const auto row = oracle_row(q.at(order[i]), c, order, 1.0);
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(cm.values[i][j] - row[j]) <= 1e-14);
    }
  }
  SUBCASE("identical embeddings give uniform rows") {
    EmbeddingBank bank;
    for (int f = 0; f < 6; ++f) bank[f] = {{1.0, 2.0}, {1.0, 2.0}};
    const auto cm = confusion_matrix(bank, bank, {0, 1, 2, 3, 4, 5}, false, 0.085);
    for (const auto& row : cm.values)
      for (double v : row) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  }
  SUBCASE("latent oracle is diagonal-dominant") {
    const auto fabrics = generate_fabrics(20, 9);
    const auto bank = latent_bank(fabrics, 2);
    std::vector<int> order;
    for (const auto& f : fabrics) order.push_back(f.id);
    const auto cm = confusion_matrix(bank, bank, order, false, 0.085);
    for (std::size_t i = 0; i < order.size(); ++i) {
      CHECK(std::abs(std::accumulate(cm.values[i].begin(), cm.values[i].end(), 0.0) - 1.0) <= 1e-9);
      for (std::size_t j = 0; j < order.size(); ++j) {
        CHECK(cm.values[i][j] >= 0.0);
        if (j != i) CHECK(cm.values[i][i] > cm.values[i][j]);
      }
    }
  }
  SUBCASE("random rows against the brute-force oracle") {
    Rng rng(2);
    const auto q = noise_bank(rng, 7, 3, 2);
    const auto c = noise_bank(rng, 7, 4, 2);
    const std::vector<int> order{3, 1, 4, 0, 6, 5, 2};
    const auto cm = confusion_matrix(q, c, order, false, 0.4);
    CHECK(cm.fabric_ids == order);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto row = oracle_row(q.at(order[i]), c, order, 0.4);
      for (std::size_t j = 0; j < order.size(); ++j) CHECK(std::abs(cm.values[i][j] - row[j]) <= 1e-12);
    }
  }
}

TEST_CASE("similarity order and cluster aggregation") {
  Dataset ds;
  ds.fabrics = {{0, 1.0, 3.0, 0, 100.0, 1}, {1, 1.0, 1.0, 0, 100.0, 0}, {2, 1.0, 2.0, 0, 100.0, 1},
                {3, 1.0, 0.5, 0, 100.0, 1}};
  CHECK(similarity_order(ds, {0, 1, 2, 3}) == std::vector<int>{1, 3, 2, 0});

  ConfusionMatrix cm{{1, 3, 2, 0}, {{0.7, 0.1, 0.1, 0.1}, {0.2, 0.4, 0.2, 0.2}, {0.1, 0.3, 0.3, 0.3}, {0.0, 0.2, 0.2, 0.6}}};
  const auto agg = aggregate_by_cluster(cm, ds, 3);
  REQUIRE(agg.size() == 3);
  CHECK(agg[0][0] == doctest::Approx(0.7));
  CHECK(agg[0][1] == doctest::Approx(0.1));
  CHECK(agg[1][0] == doctest::Approx(0.1));
  CHECK(agg[1][1] == doctest::Approx((0.4 + 0.2 + 0.2 + 0.3 + 0.3 + 0.3 + 0.2 + 0.2 + 0.6) / 9));
  CHECK(agg[2] == Vector{0, 0, 0});
  CHECK(agg[0][2] == 0.0);
}

TEST_CASE("report export") {
  const auto img = heatmap({{0.9, 0.1}, {0.4, 0.6}});
  CHECK(img.channels == 1);
  CHECK(img.max_value == 255);
  CHECK(img.pixels == std::vector<std::uint16_t>{255, 28, 170, 255});
  CHECK(heatmap({{0.0, 0.0}}).pixels == std::vector<std::uint16_t>{0, 0});

  PrecisionCell a{"Depth2Gel", Modality::TouchFold, Modality::Depth, {1, 3}, {0.4291666, 0.71}, 1800};
  PrecisionCell b{"Color2Color", Modality::Color, Modality::Color, {1, 3}, {1.0 / 3.0, 0.9999994}, 1000};
  const std::string csv = precision_csv({a, b}, {1, 3}, {"seed=1"});
  CHECK(csv.rfind("# seed=1\nlabel,query_modality,candidate_modality,top1,top3,trials\n", 0) == 0);
  const auto back = parse_precision_csv(csv);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& orig = i == 0 ? a : b;
    CHECK(back[i].label == orig.label);
    CHECK(back[i].query == orig.query);
    CHECK(back[i].candidate == orig.candidate);
    CHECK(back[i].trials == orig.trials);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(std::round(back[i].precision[k] * 1e6) == std::round(orig.precision[k] * 1e6));
  }
  CHECK(precision_csv({}, {1, 3}) == "label,query_modality,candidate_modality,top1,top3,trials\n");
  CHECK(parse_precision_csv(precision_csv({}, {1, 3})).empty());
  CHECK_THROWS_AS(parse_precision_csv("nonsense\n"), FormatError);

  const ConfusionMatrix cm{{5, 2}, {{0.25, 0.75}, {0.5, 0.5}}};
  CHECK(confusion_csv(cm) == "fabric,5,2\n5,0.250000000,0.750000000\n2,0.500000000,0.500000000\n");
}
