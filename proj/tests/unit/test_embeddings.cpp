#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "stepsim/embeddings.hpp"
#include "stepsim/error.hpp"

using namespace stepsim;
using namespace stepsim::embeddings;

namespace {

// Optimal string alignment distance, filled in by the textbook recurrence.
int osa_distance(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  return d[n][m];
}

// Expected correction by scanning the whole vocabulary.
std::optional<std::string> brute_correct(const std::string& w, const std::vector<std::string>& vocab,
                                         const FrequencyList& freq) {
  std::optional<std::string> best;
  int best_d = 3;
  long long best_f = -1;
  for (const auto& v : vocab) {
    const int d = osa_distance(w, v);
    if (d > 2) continue;
    const long long f = freq.count(v) ? freq.at(v) : 0;
    if (d < best_d || (d == best_d && (f > best_f || (f == best_f && v < *best)))) {
      best = v;
      best_d = d;
      best_f = f;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("text-vec lines parse into entries") {
  auto t = parse_table("cat 0.1 0.2 0.3\n", TableFormat::text_vec, TableKind::word, "v.txt");
  CHECK(t.dim() == 3);
  const auto v = t.vector("cat");
  CHECK(v[0] == doctest::Approx(0.1));
  CHECK(v[2] == doctest::Approx(0.3));
}

TEST_CASE("text-vec count header is skipped and its dimension enforced") {
  auto t = parse_table("2 3\ncat 1 2 3\ndog 4 5 6\n", TableFormat::text_vec, TableKind::word);
  CHECK(t.size() == 2);
  CHECK(t.dim() == 3);
  CHECK_THROWS_AS(parse_table("2 3\ncat 1 2\n", TableFormat::text_vec, TableKind::word), ParseError);
}

TEST_CASE("short vector line reports its line") {
  try {
    parse_table("cat 1 2 3\ndog 1 2\n", TableFormat::text_vec, TableKind::word, "v.txt");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("duplicate terms keep the last occurrence") {
  auto t = parse_table("cat 1 0\ncat 0 1\n", TableFormat::text_vec, TableKind::word);
  CHECK(t.size() == 1);
  CHECK(t.vector("cat")[1] == doctest::Approx(1.0));
}

TEST_CASE("csv tables") {
  auto t = parse_table("term,v0,v1\ns1,1,2\ns2,3,4\n", TableFormat::csv, TableKind::stimulus);
  CHECK(t.dim() == 2);
  CHECK(t.vector("s2")[0] == doctest::Approx(3.0));
}

TEST_CASE("cosine examples") {
  const Vector a{1, 0}, b{0, 1}, c{1, 1}, d{2, 2};
  CHECK(cosine(a, b) == doctest::Approx(0.0));
  CHECK(cosine(c, d) == doctest::Approx(1.0));
  CHECK(cosine(a, c) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK_THROWS_AS(cosine(a, Vector{0, 0}), DomainError);
  CHECK_THROWS_AS(cosine(a, Vector{1, 0, 0}), DomainError);
}

TEST_CASE("cosine is symmetric, bounded and 1 on itself") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 200; ++t) {
    Vector u(7), v(7);
    for (auto& x : u) x = n(rng);
    for (auto& x : v) x = n(rng);
    CHECK(std::abs(cosine(u, u) - 1.0) < 1e-9);
    CHECK(cosine(u, v) == cosine(v, u));
    CHECK(std::abs(cosine(u, v)) <= 1.0 + 1e-9);
  }
}

TEST_CASE("spell correction examples") {
  const std::vector<std::string> vocab{"tomato", "potato"};
  CHECK(spell_correct("tomatoe", vocab) == std::optional<std::string>("tomato"));
  CHECK(spell_correct("cat", {"cat", "bat"}) == std::optional<std::string>("cat"));
  CHECK_FALSE(spell_correct("zzzzzz", {"tomato"}).has_value());
}

TEST_CASE("spell correction agrees with a full vocabulary scan") {
  std::mt19937_64 rng(17);
  const std::string letters = "abcde";
  std::uniform_int_distribution<int> len(1, 6), ch(0, 4);
  auto word = [&] {
    std::string w(static_cast<std::size_t>(len(rng)), 'a');
    for (auto& c : w) c = letters[static_cast<std::size_t>(ch(rng))];
    return w;
  };
  std::set<std::string> vs;
  while (vs.size() < 60) vs.insert(word());
  const std::vector<std::string> vocab(vs.begin(), vs.end());
  FrequencyList freq;
  std::uniform_int_distribution<int> f(1, 4);
  for (const auto& v : vocab) freq[v] = f(rng);
  for (int t = 0; t < 300; ++t) {
    const auto w = word();
    const auto got = spell_correct(w, vocab, &freq);
    CHECK(got == brute_correct(w, vocab, freq));
    if (got) CHECK(std::find(vocab.begin(), vocab.end(), *got) != vocab.end());
  }
}

TEST_CASE("tag resolution") {
  EmbeddingTable t(2, TableKind::word);
  const Vector red{1, 0}, wine{0, 1}, tomato{0.5, 0.5}, ice{0.2, 0.1};
  t.insert("red", red);
  t.insert("wine", wine);
  t.insert("tomato", tomato);
  t.insert("ice_cream", ice);

  auto r = resolve_tag("red wine", t, true);
  CHECK(r.resolution == Resolution::split);
  REQUIRE(r.vector);
  CHECK((*r.vector)[0] == doctest::Approx(0.5));
  CHECK((*r.vector)[1] == doctest::Approx(0.5));

  r = resolve_tag("red wine", t, false);
  CHECK(r.resolution == Resolution::missing);
  CHECK_FALSE(r.vector);

  r = resolve_tag("tomato", t, true);
  CHECK(r.resolution == Resolution::exact);

  r = resolve_tag("tomatoe", t, true);
  CHECK(r.resolution == Resolution::spell_corrected);
  CHECK(r.resolved_terms == std::vector<std::string>{"tomato"});

  r = resolve_tag("ice cream", t, false);
  CHECK(r.resolution == Resolution::exact);

  r = resolve_tag("red wien", t, true);
  CHECK(r.resolution == Resolution::split_and_corrected);

  r = resolve_tag("red qqqqqqq", t, true);
  CHECK(r.resolution == Resolution::split);
  CHECK((*r.vector)[0] == doctest::Approx(1.0));  // missing words add nothing
}
