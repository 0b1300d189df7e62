#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "stepsim/error.hpp"
#include "stepsim/metrics.hpp"

using namespace stepsim;
using namespace stepsim::metrics;

TEST_CASE("pearson examples") {
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DomainError);
  CHECK_THROWS(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}));
  CHECK_THROWS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}));
}

TEST_CASE("pearson is invariant under positive affine maps") {
  std::mt19937_64 rng(2);
  auto x = testing::gaussian_vector(50, rng), y = testing::gaussian_vector(50, rng);
  const double r = pearson(x, y);
  for (auto& v : x) v = 3.5 * v - 7.0;
  for (auto& v : y) v = 0.01 * v + 100.0;
  CHECK(std::abs(pearson(x, y) - r) <= 1e-12);
}

TEST_CASE("spearman examples") {
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8));
  CHECK(midranks(std::vector<double>{5, 1, 5, 3}) == std::vector<double>{3.5, 1, 3.5, 2});
  CHECK_THROWS_AS(spearman(std::vector<double>{2, 2}, std::vector<double>{1, 2}), DomainError);
}

TEST_CASE("spearman-brown") {
  CHECK(spearman_brown(0.5) == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(spearman_brown(1.0) == 1.0);
  CHECK(spearman_brown(0.0) == 0.0);
  double prev = spearman_brown(-0.9);
  for (double r = -0.8; r <= 1.0; r += 0.1) {
    CHECK(spearman_brown(r) > prev);
    prev = spearman_brown(r);
  }
}

namespace {

corpus::JudgmentSet panel(std::size_t pairs, int raters, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> truth(0.0, 6.0);
  std::normal_distribution<double> noise(0.0, sigma);
  corpus::JudgmentSet j;
  const auto ids = testing::numbered_ids(pairs + 1);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double t = truth(rng);
    for (int r = 0; r < raters; ++r) {
      const int v = static_cast<int>(std::lround(std::clamp(t + noise(rng), 0.0, 6.0)));
      j.records.push_back({corpus::StimulusPair::of(ids[0], ids[p + 1]), "r" + std::to_string(r), v, false});
    }
  }
  return j;
}

}  // namespace

TEST_CASE("split-half reliability of a noiseless panel is 1") {
  corpus::JudgmentSet j;
  const auto ids = testing::numbered_ids(6);
  for (std::size_t p = 1; p < ids.size(); ++p)
    for (int r = 0; r < 4; ++r) j.records.push_back({corpus::StimulusPair::of(ids[0], ids[p]), "r" + std::to_string(r), static_cast<int>(p), false});
  CHECK(split_half_irr(j, 10, 1) == doctest::Approx(1.0));
}

TEST_CASE("split-half reliability ignores rater labels") {
  auto j = panel(60, 4, 1.0, 8);
  const double base = split_half_irr(j, 20, 5);
  for (auto& r : j.records) r.rater = "x" + r.rater + "y";
  CHECK(split_half_irr(j, 20, 5) == base);
}

TEST_CASE("split-half reliability requires two ratings per pair") {
  corpus::JudgmentSet j;
  j.records.push_back({corpus::StimulusPair::of("a", "b"), "r", 3, false});
  j.records.push_back({corpus::StimulusPair::of("a", "c"), "r", 3, false});
  j.records.push_back({corpus::StimulusPair::of("a", "c"), "q", 2, false});
  CHECK_THROWS_AS(split_half_irr(j, 5, 0), ValidationError);
}

TEST_CASE("evaluate ranks methods and checks ordering") {
  std::mt19937_64 rng(4);
  const auto ids = testing::numbered_ids(30);
  const auto truth_v = testing::gaussian_vector(corpus::pair_count(30), rng);
  corpus::SimilarityMatrix truth(ids, truth_v, "human-mean", corpus::Scale::raw);
  auto noisy_v = truth_v;
  for (auto& v : noisy_v) v += 0.3 * std::normal_distribution<double>(0, 1)(rng);
  auto neg_v = truth_v;
  for (auto& v : neg_v) v = -v;
  std::vector<corpus::SimilarityMatrix> ms{
      corpus::SimilarityMatrix(ids, testing::gaussian_vector(truth_v.size(), rng), "noise", corpus::Scale::raw),
      corpus::SimilarityMatrix(ids, noisy_v, "noisy", corpus::Scale::raw),
      corpus::SimilarityMatrix(ids, truth_v, "self", corpus::Scale::raw),
      corpus::SimilarityMatrix(ids, neg_v, "negated", corpus::Scale::raw)};
  const auto report = evaluate(ms, truth);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].method == "self");
  CHECK(report.rows[0].pearson == doctest::Approx(1.0));
  CHECK(report.rows[1].method == "noisy");
  CHECK(report.rows[2].method == "noise");
  CHECK(report.rows[3].pearson == doctest::Approx(-1.0));
  CHECK(report.rows[0].n_pairs == truth_v.size());

  auto shuffled = ids;
  std::swap(shuffled[0], shuffled[1]);
  std::vector<corpus::SimilarityMatrix> bad{corpus::SimilarityMatrix(shuffled, truth_v, "x", corpus::Scale::raw)};
  CHECK_THROWS_AS(evaluate(bad, truth), ValidationError);
}

TEST_CASE("report csv round-trip") {
  EvaluationReport r{"ds", {{"a", 0.9, 10}, {"b", 0.25, 10}}, 0.8, 100};
  testing::TempDir dir;
  std::ostringstream out;
  write_report_csv(out, r);
  corpus::write_text_file(dir.file("r.csv"), out.str());
  const auto back = read_report_csv(dir.file("r.csv"));
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1].method == "b");
  CHECK(back.rows[1].pearson == 0.25);
  REQUIRE(back.irr);
  CHECK(*back.irr == 0.8);
  CHECK(format_report_table(r).find("IRR") != std::string::npos);
}
