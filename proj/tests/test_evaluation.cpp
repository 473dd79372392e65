#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "pairlearn/evaluation.hpp"
#include "pairlearn/factorial.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#ifndef PAIRLEARN_DATA_DIR
#error "PAIRLEARN_DATA_DIR must point at the repository data directory"
#endif

using namespace pairlearn;
using namespace oracles;

namespace {

std::vector<TestPair> fixed_pairs() {
  std::vector<TestPair> out(6);
  for (int i = 0; i < 6; ++i) {
    out[i].left_is_member = i % 2 == 0;
    out[i].right_is_member = i % 2 == 1;
  }
  return out;
}

// Each image encodes its membership in its first pixel.
std::vector<RenderedPair> marked_images(const std::vector<TestPair>& pairs) {
  std::vector<RenderedPair> out;
  for (const auto& p : pairs) {
    RenderedPair rp;
    rp.left_half = Image(32, 32, p.left_is_member ? 0 : 255);
    rp.right_half = Image(32, 32, p.right_is_member ? 0 : 255);
    rp.paired_image = concat_horizontal(rp.left_half, rp.right_half);
    out.push_back(rp);
  }
  return out;
}

}  // namespace

TEST_CASE("cells are listed in table order") {
  const auto cells = all_cells();
  REQUIRE(cells.size() == 18);
  CHECK(cells.front() == Cell{Feature::size, Alignment::high, 1});
  CHECK(cells[3] == Cell{Feature::size, Alignment::low, 1});
  CHECK(cells.back() == Cell{Feature::pattern, Alignment::low, 6});
  CHECK(cell_label(cells[7]) == "shape/high/3");
}

TEST_CASE("image-level scoring with constructed predictors") {
  const auto pairs = fixed_pairs();
  const auto images = marked_images(pairs);
  auto truth = [](const Image& img) { return img.rgb[0] == 0 ? 0.9 : 0.1; };
  auto inverse = [](const Image& img) { return img.rgb[0] == 0 ? 0.1 : 0.9; };
  auto always = [](const Image&) { return 0.7; };
  auto boundary = [](const Image&) { return kDecisionThreshold; };
  CHECK(score_test_set(pairs, images, truth).accuracy == 1.0);
  CHECK(score_test_set(pairs, images, inverse).accuracy == 0.0);
  CHECK(score_test_set(pairs, images, always).accuracy == 0.5);
  CHECK(score_test_set(pairs, images, boundary).correct == 6);  // 0.5 counts as member
  const auto r = score_test_set(pairs, images, truth);
  CHECK(r.total == 12);
  CHECK(r.correct == 12);
}

TEST_CASE("one wrong image costs one twelfth") {
  const auto pairs = fixed_pairs();
  const auto images = marked_images(pairs);
  int calls = 0;
  auto mostly = [&](const Image& img) {
    const bool flip = calls++ == 3;
    const bool m = img.rgb[0] == 0;
    return (m != flip) ? 0.8 : 0.2;
  };
  const auto r = score_test_set(pairs, images, mostly);
  CHECK(r.correct == 11);
  CHECK(r.accuracy == doctest::Approx(11.0 / 12.0));
}

TEST_CASE("malformed test sets are rejected") {
  auto pairs = fixed_pairs();
  auto images = marked_images(pairs);
  pairs.pop_back();
  CHECK_THROWS_AS(score_test_set(pairs, images, [](const Image&) { return 0.5; }),
                  std::invalid_argument);
  images.pop_back();
  images.pop_back();
  CHECK_THROWS_AS(score_test_set(pairs, images, [](const Image&) { return 0.5; }),
                  std::invalid_argument);
}

TEST_CASE("aggregation computes per-cell mean and sd") {
  std::vector<ConditionResult> recs;
  const Cell c{Feature::shape, Alignment::low, 3};
  for (double a : {0.5, 0.75, 1.0}) recs.push_back({c, 0, 0, 12, a});
  const auto t = aggregate_table(recs, {c});
  CHECK(t.at(c).mean == doctest::Approx(0.75));
  CHECK(t.at(c).sd == doctest::Approx(0.25));
  CHECK(t.at(c).n == 3);
}

TEST_CASE("missing cells are reported") {
  std::vector<ConditionResult> recs{{Cell{Feature::size, Alignment::high, 1}, 0, 12, 12, 1.0}};
  try {
    aggregate_table(recs);
    FAIL("expected EmptyCells");
  } catch (const EmptyCells& e) {
    CHECK(e.missing_cells.size() == 17);
  }
}

TEST_CASE("human table ingestion") {
  const auto t = ingest_human_table(std::filesystem::path(PAIRLEARN_DATA_DIR) / "human_table1.csv");
  CHECK(t.accuracy.size() == 18);
  CHECK(t.warnings.empty());
  CHECK(t.accuracy.at({Feature::size, Alignment::low, 6}) == doctest::Approx(0.48));
  CHECK(t.accuracy.at({Feature::shape, Alignment::high, 1}) == doctest::Approx(1.00));
  CHECK(t.accuracy.at({Feature::pattern, Alignment::low, 3}) == doctest::Approx(0.73));
  CHECK_FALSE(format_human_table(t).empty());

  test_util::TempDir dir;
  {
    std::ofstream(dir.path() / "bad.csv") << "feat,align,sup,acc\nsize,high,1,0.5\n";
    std::ofstream(dir.path() / "partial.csv")
        << "feature,alignment,supervision,accuracy\nsize,high,1,0.5\n";
    std::ofstream(dir.path() / "range.csv")
        << "feature,alignment,supervision,accuracy\nsize,high,1,1.5\n";
  }
  CHECK_THROWS_AS(ingest_human_table(dir.path() / "bad.csv"), SchemaError);
  CHECK_THROWS_AS(ingest_human_table(dir.path() / "range.csv"), SchemaError);
  const auto partial = ingest_human_table(dir.path() / "partial.csv");
  CHECK(partial.accuracy.size() == 1);
  CHECK(partial.warnings.size() == 17);
}

TEST_CASE("accuracy design uses shape, high and 1/6 as references") {
  std::vector<ConditionResult> recs{{Cell{Feature::pattern, Alignment::low, 3}, 0, 6, 12, 0.5}};
  const auto d = accuracy_design(recs);
  REQUIRE(d.factors.size() == 3);
  CHECK(d.factors[0].levels[0] == "shape");
  CHECK(d.factors[1].levels[0] == "high");
  CHECK(d.factors[2].levels[0] == "1");
  REQUIRE(d.rows.size() == 1);
  CHECK(d.factors[0].levels[d.rows[0].levels[0]] == "pattern");
  CHECK(d.factors[1].levels[d.rows[0].levels[1]] == "low");
  CHECK(d.factors[2].levels[d.rows[0].levels[2]] == "3");
}

TEST_CASE("least squares agrees with the normal equations") {
  std::mt19937_64 g(1);
  for (int rep = 0; rep < 50; ++rep) {
    int cells = 0;
    const auto data = random_design(g, rep % 2 == 0, cells);
    const auto fit = fit_factorial(data);
    const auto terms = full_factorial_terms(data.factors);
    CHECK(static_cast<int>(terms.size()) == cells);
    const Eigen::MatrixXd x = design_matrix(data, terms);
    Eigen::VectorXd y(data.rows.size());
    for (std::size_t i = 0; i < data.rows.size(); ++i) y(i) = data.rows[i].response;
    const auto ne = normal_equations(x, y);
    for (Eigen::Index c = 0; c < ne.beta.size(); ++c) {
      CHECK(std::abs(fit.beta(c) - ne.beta(c)) < 1e-8);
      CHECK(std::abs(fit.coefficients[c].std_error - ne.std_error(c)) < 1e-8);
    }
    CHECK(fit.sigma2 == doctest::Approx(ne.sigma2).epsilon(1e-10));
    CHECK(fit.df_residual == x.rows() - x.cols());
  }
}

TEST_CASE("saturated model reproduces observed cell means") {
  std::mt19937_64 g(2);
  for (int rep = 0; rep < 50; ++rep) {
    int cells = 0;
    const auto data = random_design(g, true, cells);
    const auto fit = fit_factorial(data);
    std::map<std::vector<int>, std::pair<double, int>> sums;
    for (const auto& o : data.rows) {
      sums[o.levels].first += o.response;
      sums[o.levels].second += 1;
    }
    for (const auto& [lv, s] : sums) CHECK(std::abs(fit.predict(lv) - s.first / s.second) < 1e-10);
  }
}

TEST_CASE("p values follow Student's t") {
  std::mt19937_64 g(3);
  int cells = 0;
  const auto data = random_design(g, false, cells);
  const auto fit = fit_factorial(data);
  for (const auto& c : fit.coefficients) {
    CHECK(c.t_value == doctest::Approx(c.estimate / c.std_error));
    CHECK(std::abs(c.p_value - t_two_sided(c.t_value, fit.df_residual)) < 1e-6);
  }
}

TEST_CASE("marginal means on a balanced design average the cells") {
  std::mt19937_64 g(4);
  int cells = 0;
  auto data = random_design(g, true, cells);
  const auto fit = fit_factorial(data);
  const auto mm = marginal_means(fit, {data.factors[0].name});
  REQUIRE(mm.means.size() == data.factors[0].levels.size());
  for (const auto& m : mm.means) {
    double sum = 0;
    int n = 0;
    for (const auto& o : data.rows)
      if (o.levels[0] == m.levels[0]) {
        sum += o.response;
        ++n;
      }
    CHECK(m.mean == doctest::Approx(sum / n).epsilon(1e-10));
    CHECK(m.lower < m.mean);
    CHECK(m.upper > m.mean);
  }
  const std::size_t k = mm.means.size();
  CHECK(mm.contrasts.size() == k * (k - 1) / 2);
  for (const auto& c : mm.contrasts) {
    CHECK(c.p_bonferroni == doctest::Approx(std::min(1.0, c.p_value * mm.contrasts.size())));
  }
  const auto& c0 = mm.contrasts.front();
  CHECK(c0.estimate == doctest::Approx(mm.means[0].mean - mm.means[1].mean));
  CHECK_THROWS(marginal_means(fit, {"nope"}));
}

TEST_CASE("an empty cell makes the design rank deficient") {
  FactorialData d;
  d.factors = {{"a", {"x", "y"}}, {"b", {"u", "v"}}};
  for (int i = 0; i < 3; ++i) {
    d.rows.push_back({{0, 0}, 1.0 + i});
    d.rows.push_back({{1, 0}, 2.0 + i});
    d.rows.push_back({{0, 1}, 3.0 + i});
  }
  try {
    fit_factorial(d);
    FAIL("expected RankDeficient");
  } catch (const RankDeficient& e) {
    CHECK_FALSE(e.columns.empty());
    CHECK(e.columns.front() == "a[y]:b[v]");
  }
}

TEST_CASE("a null effect gives a small alignment coefficient") {
  // Responses depend only on trait, so alignment terms should be near zero.
  std::mt19937_64 g(5);
  std::normal_distribution<double> noise(0, 0.05);
  std::vector<ConditionResult> recs;
  for (const auto& c : all_cells())
    for (int s = 0; s < 20; ++s) {
      const double base = c.feature == Feature::size ? 0.9 : 0.6;
      recs.push_back({c, static_cast<std::uint64_t>(s), 0, 12, base + noise(g)});
    }
  const auto fit = fit_factorial(accuracy_design(recs));
  CHECK(std::abs(fit.coefficient("alignment[low]").t_value) < 4.0);
  CHECK(fit.coefficient("trait[size]").estimate == doctest::Approx(0.3).epsilon(0.1));
  CHECK(fit.reference_cell == "trait=shape, alignment=high, supervision=1");
}
