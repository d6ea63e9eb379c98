#include <doctest.h>

#include <numeric>
#include <set>

#include "fusegen/selection.hpp"
#include "test_helpers.hpp"

using namespace fusegen;
using testutil::make_sample;
using testutil::sentiment_schema;

namespace {

// Test-side population standard deviation, written independently of the
// library path (long double accumulation, index-free).
double oracle_population_std(const std::vector<double>& xs) {
  long double mean = 0.0L;
  for (double x : xs) mean += static_cast<long double>(x);
  mean /= static_cast<long double>(xs.size());
  long double ss = 0.0L;
  for (double x : xs) ss += (static_cast<long double>(x) - mean) * (static_cast<long double>(x) - mean);
  return static_cast<double>(std::sqrt(ss / static_cast<long double>(xs.size())));
}

ProbabilityMatrix matrix_from_columns(const std::vector<std::vector<double>>& columns) {
  ProbabilityMatrix m;
  const std::size_t K = columns.front().size();
  for (std::size_t i = 0; i < columns.size(); ++i) m.sample_ids.push_back("s:" + std::to_string(i));
  m.rows.assign(K, std::vector<double>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) {
    for (std::size_t k = 0; k < K; ++k) m.rows[k][i] = columns[i][k];
  }
  return m;
}

// Test-side full-sort oracle for the candidate pool.
struct OracleCandidates {
  std::vector<std::string> high;
  std::vector<std::string> low;
};

OracleCandidates oracle_select(const std::vector<std::string>& ids, const std::vector<double>& d,
                               double alpha, int r) {
  const int hi = static_cast<int>(std::floor(alpha * r + 0.5));
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  auto desc = order, asc = order;
  std::sort(desc.begin(), desc.end(), [&](std::size_t a, std::size_t b) {
    return d[a] != d[b] ? d[a] > d[b] : ids[a] < ids[b];
  });
  std::sort(asc.begin(), asc.end(), [&](std::size_t a, std::size_t b) {
    return d[a] != d[b] ? d[a] < d[b] : ids[a] < ids[b];
  });
  OracleCandidates out;
  std::set<std::size_t> used;
  for (int i = 0; i < hi; ++i) {
    out.high.push_back(ids[desc[static_cast<std::size_t>(i)]]);
    used.insert(desc[static_cast<std::size_t>(i)]);
  }
  for (std::size_t i = 0; i < asc.size() && out.low.size() < static_cast<std::size_t>(r - hi); ++i) {
    if (!used.count(asc[i])) out.low.push_back(ids[asc[i]]);
  }
  return out;
}

}  // namespace

TEST_CASE("variability worked examples") {
  auto m = matrix_from_columns({{0.5, 0.5}, {0.2, 0.8}});
  auto d = cross_model_variability(m);
  CHECK(d[0] == doctest::Approx(0.0));
  CHECK(d[1] == doctest::Approx(0.3).epsilon(1e-12));

  auto m6 = matrix_from_columns({{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}});
  CHECK(cross_model_variability(m6)[0] == doctest::Approx(0.170783).epsilon(1e-5));

  // sample-std switch uses the K-1 denominator
  auto ds = cross_model_variability(m, /*use_sample_std=*/true);
  CHECK(ds[1] == doctest::Approx(std::sqrt(0.18)).epsilon(1e-12));
}

TEST_CASE("variability rejects a single scorer") {
  ProbabilityMatrix m;
  m.sample_ids = {"a"};
  m.rows = {{0.5}};
  CHECK_THROWS_WITH_AS(cross_model_variability(m), doctest::Contains("single-PLM"), ConfigError);
}

TEST_CASE("variability matches the brute-force oracle on random matrices") {
  SplitMix64 rng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t K = 2 + rng.below(5);
    const std::size_t n = 1 + rng.below(12);
    std::vector<std::vector<double>> columns(n, std::vector<double>(K));
    for (auto& col : columns) {
      for (auto& p : col) p = rng.next_double();
    }
    auto m = matrix_from_columns(columns);
    auto d = cross_model_variability(m);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(d[i] - oracle_population_std(columns[i])) <= 1e-12);
    }
  }
}

TEST_CASE("variability is invariant under scorer-row permutation") {
  SplitMix64 rng(5);
  std::vector<std::vector<double>> columns(8, std::vector<double>(4));
  for (auto& col : columns) {
    for (auto& p : col) p = rng.next_double();
  }
  auto m = matrix_from_columns(columns);
  auto d = cross_model_variability(m);
  std::swap(m.rows[0], m.rows[3]);
  std::swap(m.rows[1], m.rows[2]);
  auto d2 = cross_model_variability(m);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - d2[i]) <= 1e-15);
}

TEST_CASE("candidate selection composition") {
  SelectionConfig config;

  SUBCASE("alpha=0.5 R=40 gives 20 high + 20 low") {
    std::vector<std::string> ids;
    std::vector<double> d;
    for (int i = 0; i < 100; ++i) {
      ids.push_back("s:" + std::to_string(1000 + i));
      d.push_back(i * 0.01);
    }
    config.alpha = 0.5;
    config.r_candidates = 40;
    auto sel = select_candidates(ids, d, config);
    CHECK(sel.indices.size() == 40);
    CHECK(sel.high_count == 20);
    //高 group descending d, low group ascending d
    CHECK(ids[sel.indices[0]] == "s:1099");
    CHECK(ids[sel.indices[20]] == "s:1000");
    std::set<std::size_t> uniq(sel.indices.begin(), sel.indices.end());
    CHECK(uniq.size() == 40);
  }

  SUBCASE("alpha=0 takes the lowest-d samples only") {
    std::vector<std::string> ids;
    std::vector<double> d;
    for (int i = 0; i < 30; ++i) {
      ids.push_back("s:" + std::to_string(100 + i));
      d.push_back((29 - i) * 0.01);
    }
    config.alpha = 0.0;
    config.r_candidates = 10;
    config.s_incontext = 5;
    auto sel = select_candidates(ids, d, config);
    REQUIRE(sel.indices.size() == 10);
    CHECK(sel.high_count == 0);
    for (std::size_t pos : sel.indices) CHECK(d[pos] <= 0.09 + 1e-15);
  }

  SUBCASE("full tie resolves to lexicographically smallest ids") {
    std::vector<std::string> ids = {"s:e", "s:c", "s:a", "s:d", "s:b", "s:f"};
    std::vector<double> d(6, 0.25);
    config.alpha = 0.5;
    config.r_candidates = 4;
    config.s_incontext = 2;
    auto sel = select_candidates(ids, d, config);
    REQUIRE(sel.indices.size() == 4);
    CHECK(sel.high_count == 2);
    std::set<std::string> chosen;
    for (std::size_t pos : sel.indices) chosen.insert(ids[pos]);
    CHECK(chosen == std::set<std::string>{"s:a", "s:b", "s:c", "s:d"});
  }

  SUBCASE("too small a dataset names the remedy") {
    config.r_candidates = 40;
    std::vector<std::string> ids = {"a", "b"};
    std::vector<double> d = {0.1, 0.2};
    CHECK_THROWS_WITH_AS(select_candidates(ids, d, config), doctest::Contains("lower r_candidates"),
                         ConfigError);
  }
}

TEST_CASE("candidate selection matches the full-sort oracle on random scores") {
  SplitMix64 rng(31);
  const std::vector<std::pair<double, int>> grid = {{0.5, 40}, {0.5, 20}, {0.0, 10}, {1.0, 10}};
  for (const auto& [alpha, r] : grid) {
    for (int rep = 0; rep < 25; ++rep) {
      const std::size_t n = static_cast<std::size_t>(r) + rng.below(60);
      std::vector<std::string> ids;
      std::vector<double> d;
      for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("s:" + std::to_string(1000 + i));
        // coarse grid forces ties
        d.push_back(static_cast<double>(rng.below(7)) / 7.0);
      }
      SelectionConfig config;
      config.alpha = alpha;
      config.r_candidates = r;
      config.s_incontext = 1;
      auto sel = select_candidates(ids, d, config);
      auto oracle = oracle_select(ids, d, alpha, r);

      REQUIRE(sel.indices.size() == static_cast<std::size_t>(r));
      REQUIRE(sel.high_count == oracle.high.size());
      std::vector<std::string> got_high, got_low;
      for (std::size_t i = 0; i < sel.indices.size(); ++i) {
        (i < sel.high_count ? got_high : got_low).push_back(ids[sel.indices[i]]);
      }
      CHECK(got_high == oracle.high);
      CHECK(got_low == oracle.low);
    }
  }
}

TEST_CASE("random candidate selection is seeded and distinct") {
  SelectionConfig config;
  config.r_candidates = 10;
  config.s_incontext = 2;
  SplitMix64 a(9), b(9);
  auto s1 = select_random_candidates(50, config, a);
  auto s2 = select_random_candidates(50, config, b);
  CHECK(s1.indices == s2.indices);
  std::set<std::size_t> uniq(s1.indices.begin(), s1.indices.end());
  CHECK(uniq.size() == 10);
}

TEST_CASE("top-S selection") {
  std::vector<std::string> ids = {"s:0", "s:1", "s:2"};
  std::vector<std::size_t> candidates = {0, 1, 2};
  std::vector<double> scores = {5.0, 1.0, 9.0};

  auto top = select_top_s(candidates, scores, ids, 2);
  REQUIRE(top.size() == 2);
  CHECK(ids[top[0]] == "s:2");
  CHECK(ids[top[1]] == "s:0");

  auto all = select_top_s(candidates, scores, ids, 3);
  CHECK(ids[all[0]] == "s:2");
  CHECK(ids[all[2]] == "s:1");

  SUBCASE("matches a full-sort oracle on random scores") {
    SplitMix64 rng(77);
    for (int rep = 0; rep < 30; ++rep) {
      std::vector<std::string> rid;
      std::vector<std::size_t> cand;
      std::vector<double> sc;
      for (std::size_t i = 0; i < 40; ++i) {
        rid.push_back("s:" + std::to_string(100 + i));
        cand.push_back(i);
        sc.push_back(static_cast<double>(rng.below(9)));
      }
      auto got = select_top_s(cand, sc, rid, 8);
      auto order = cand;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sc[a] != sc[b] ? sc[a] > sc[b] : rid[a] < rid[b];
      });
      for (std::size_t i = 0; i < 8; ++i) CHECK(got[i] == order[i]);
    }
  }
}

TEST_CASE("reference set construction") {
  ProbabilityMatrix m;
  for (int i = 0; i < 10; ++i) m.sample_ids.push_back("s:" + std::to_string(i));
  m.rows = {std::vector<double>(10), std::vector<double>(10)};
  for (int i = 0; i < 10; ++i) {
    m.rows[0][static_cast<std::size_t>(i)] = i < 3 ? 0.95 : 0.2;
    m.rows[1][static_cast<std::size_t>(i)] = i < 3 ? 0.92 : 0.3;
  }
  SelectionConfig config;

  SUBCASE("agreement threshold and cap") {
    auto ref = build_reference_set(m, config);
    CHECK_FALSE(ref.relaxed);
    CHECK(ref.indices.size() == 3);

    config.reference_size = 2;
    auto capped = build_reference_set(m, config);
    CHECK(capped.indices.size() == 2);
  }

  SUBCASE("empty set relaxes to the top-confidence decile") {
    for (auto& row : m.rows) {
      for (auto& p : row) p *= 0.5;
    }
    auto ref = build_reference_set(m, config);
    CHECK(ref.relaxed);
    CHECK(ref.indices.size() >= 1);
  }
}

TEST_CASE("influence scores") {
  auto schema = sentiment_schema();
  FeaturizerConfig fz;
  fz.hash_dim = 64;
  fz.ngram_orders = {1};

  SyntheticDataset d(schema);
  d.add(make_sample("p", 0, 0, "alpha beta gamma delta epsilon", 0));
  d.add(make_sample("p", 0, 1, "beta gamma zeta", 1));
  d.add(make_sample("p", 0, 2, "epsilon eta theta", 0));
  d.add(make_sample("p", 0, 3, "alpha zeta theta", 1));

  StmModel model(fz, 2);
  SplitMix64 rng(404);
  for (auto& w : model.weights) w = 0.0;
  for (const auto& s : d.samples()) {
    for (const auto& e : model.featurizer.featurize(s.text)) {
      model.weights[e.index * 2] = rng.next_double() - 0.5;
      model.weights[e.index * 2 + 1] = rng.next_double() - 0.5;
    }
  }
  model.bias = {0.1, -0.2};

  SUBCASE("self-alignment equals the squared norm") {
    SyntheticDataset one(schema);
    auto s = d.at(0);
    s.weight = 1.0;
    one.add(s);
    auto scores = influence_scores(model, one, {0}, {0});
    auto g = last_layer_gradient(model, one.at(0));
    CHECK(scores[0] == doctest::Approx(g.squared_norm()).epsilon(1e-12));
  }

  SUBCASE("a perfectly fit candidate scores zero") {
    StmModel confident = model;
    confident.bias = {80.0, 0.0};
    for (auto& w : confident.weights) w = 0.0;
    SyntheticDataset one(schema);
    auto s = d.at(0);  // label 0, now predicted with p ~ 1
    s.weight = 1.0;
    one.add(s);
    auto scores = influence_scores(confident, one, {0}, {0});
    CHECK(std::abs(scores[0]) <= 1e-20);
  }

  SUBCASE("factored scores match a dense-gradient oracle") {
    std::vector<std::size_t> candidates = {0, 1, 2};
    std::vector<std::size_t> reference = {2, 3};
    auto scores = influence_scores(model, d, candidates, reference);

    // dense oracle: materialize full (W,b)-shaped gradients
    auto dense_gradient = [&](const Sample& s) {
      std::vector<double> flat(64 * 2 + 2, 0.0);
      auto phi = model.featurizer.featurize(s.text);
      auto p = model.predict_proba(phi);
      p[static_cast<std::size_t>(s.label)] -= 1.0;
      for (const auto& e : phi) {
        flat[e.index * 2] += p[0] * e.value;
        flat[e.index * 2 + 1] += p[1] * e.value;
      }
      flat[128] = p[0];
      flat[129] = p[1];
      return flat;
    };
    std::vector<double> mean(64 * 2 + 2, 0.0);
    for (std::size_t r : reference) {
      auto g = dense_gradient(d.at(r));
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d.at(r).weight * g[i] / 2.0;
    }
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      auto g = dense_gradient(d.at(candidates[c]));
      double expected = 0.0;
      for (std::size_t i = 0; i < mean.size(); ++i) expected += g[i] * mean[i];
      CHECK(scores[c] == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  SUBCASE("scaling reference weights rescales scores without reordering") {
    std::vector<std::size_t> candidates = {0, 1, 2, 3};
    std::vector<std::size_t> reference = {1, 2};
    auto base = influence_scores(model, d, candidates, reference);

    SyntheticDataset scaled = d;
    auto w = scaled.weights();
    for (auto& x : w) x *= 3.0;
    scaled.set_weights(w);
    auto boosted = influence_scores(model, scaled, candidates, reference);

    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(boosted[i] == doctest::Approx(3.0 * base[i]).epsilon(1e-12));
    }
    auto top_a = select_top_s(candidates, base, {"s:0", "s:1", "s:2", "s:3"}, 2);
    auto top_b = select_top_s(candidates, boosted, {"s:0", "s:1", "s:2", "s:3"}, 2);
    CHECK(top_a == top_b);
  }
}
