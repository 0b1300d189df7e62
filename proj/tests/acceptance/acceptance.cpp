// Acceptance suite: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// anything failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "stepsim/corpus.hpp"
#include "stepsim/embeddings.hpp"
#include "stepsim/error.hpp"
#include "stepsim/fusion.hpp"
#include "stepsim/methods.hpp"
#include "stepsim/metrics.hpp"
#include "stepsim/stepd/service.hpp"
#include "stepsim/textsim.hpp"
#include "stepsim/wfa.hpp"

using namespace stepsim;
using embeddings::Vector;
using nlohmann::json;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double plain_dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double plain_cosine(const Vector& a, const Vector& b) {
  return plain_dot(a, b) / std::sqrt(plain_dot(a, a) * plain_dot(b, b));
}

Vector plain_unit(Vector v) {
  const double n = std::sqrt(plain_dot(v, v));
  for (auto& x : v) x /= n;
  return v;
}

// ---------------------------------------------------------------------------

Outcome quantized_worked_example() {
  // a, b, d, e, g on distinct axes; c at cosine 0.8 from a.
  Vector a(6, 0.0), b(6, 0.0), c(6, 0.0), d(6, 0.0), e(6, 0.0), g(6, 0.0);
  a[0] = 1.0;
  b[1] = 1.0;
  c[0] = 0.8;
  c[2] = 0.6;
  d[3] = 1.0;
  e[4] = 1.0;
  g[5] = 1.0;
  const std::vector<Vector> A{a, b, c, g}, B{a, b, d, e};
  const double s = textsim::quantized_similarity(A, B);
  return check(s == 0.4, fmt("cos(a,c)=%.3f, similarity=%.17g (expected 0.4)", plain_cosine(a, c), s));
}

Outcome cooccurrence_oracle() {
  std::mt19937_64 rng(101);
  std::vector<std::pair<wfa::WordDocument, wfa::WordDocument>> pairs;
  for (int t = 0; t < 200; ++t) {
    const int vocab = std::uniform_int_distribution<int>(1, 20)(rng);
    std::uniform_int_distribution<int> word(0, vocab - 1), len(1, 30);
    auto make = [&] {
      wfa::WordDocument d;
      for (int k = len(rng); k > 0; --k) d.words.push_back("w" + std::to_string(word(rng)));
      return d;
    };
    auto x = make();
    auto y = make();
    pairs.emplace_back(std::move(x), std::move(y));
  }
  Stopwatch sw;
  std::vector<double> got;
  for (const auto& [x, y] : pairs) got.push_back(wfa::cooccurrence(x, y));
  const double secs = sw.seconds();
  double worst = 0.0;
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    const auto& [x, y] = pairs[t];
    double matches = 0.0;
    for (const auto& u : x.words)
      for (const auto& v : y.words) matches += u == v ? 1.0 : 0.0;
    const double oracle = matches / (static_cast<double>(x.words.size()) * static_cast<double>(y.words.size()));
    worst = std::max(worst, std::abs(got[t] - oracle));
  }
  return check(worst <= 1e-12 && secs < 1.0, fmt("200 pairs, max |diff|=%.3g, %.4f s", worst, secs));
}

Outcome bm25_tfidf_hand_values() {
  using wfa::WordDocument;
  const std::vector<WordDocument> two{{"d1", {"x"}}, {"d2", {"x"}}};
  const double bm = wfa::bm25plus(wfa::make_bag(two), 0, 1);
  const std::vector<WordDocument> three{{"d1", {"x", "y"}}, {"d2", {"x", "z"}}, {"d3", {"w"}}};
  const double tf = wfa::tfidf_cosine(wfa::make_bag(three)).at(0, 1);
  // ln(0.5/2.5 + 1) * (2.2/2.2 + 1) and ln(1.5)^2 / (ln(1.5)^2 + ln(3)^2).
  const double bm_hand = 0.3646, tf_hand = 0.1199;
  const bool ok = std::abs(bm - bm_hand) <= 1e-3 && std::abs(tf - tf_hand) <= 1e-3;
  return check(ok, fmt("bm25+=%.5f (hand %.4f), tf-idf cosine=%.5f (hand %.4f)", bm, bm_hand, tf, tf_hand));
}

Outcome irr_monte_carlo() {
  const double sd_true = 0.8, sd_noise = 0.8;
  const int raters = 5, n_pairs = 500;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> truth(3.0, sd_true), noise(0.0, sd_noise);
  const auto ids = testing::numbered_ids(33);
  corpus::JudgmentSet j{"simulated", {}};
  int made = 0, clamped = 0;
  for (std::size_t a = 0; a < ids.size() && made < n_pairs; ++a)
    for (std::size_t b = a + 1; b < ids.size() && made < n_pairs; ++b, ++made) {
      const double v = truth(rng);
      for (int r = 0; r < raters; ++r) {
        const long x = std::lround(v + noise(rng));
        if (x < 0 || x > 6) ++clamped;
        j.records.push_back({corpus::StimulusPair::of(ids[a], ids[b]), "r" + std::to_string(r),
                             static_cast<int>(std::clamp(x, 0L, 6L)), false});
      }
    }
  // Rounding to the integer scale adds variance 1/12 to each rating.
  const double noise_var = sd_noise * sd_noise + 1.0 / 12.0;
  const double analytic = sd_true * sd_true / (sd_true * sd_true + noise_var / raters);
  Stopwatch sw;
  const double irr = metrics::split_half_irr(j, 100, 5);
  const double secs = sw.seconds();
  return check(std::abs(irr - analytic) <= 0.03 && secs < 10.0,
               fmt("irr=%.4f, analytic=%.4f, |diff|=%.4f, %d of %d ratings clamped, %.3f s", irr, analytic,
                   std::abs(irr - analytic), clamped, n_pairs * raters, secs));
}

std::vector<fusion::StimulusParts> random_parts(std::size_t n, std::mt19937_64& rng) {
  std::vector<fusion::StimulusParts> parts(n);
  for (auto& p : parts) {
    p.dnn = {testing::gaussian_vector(16, rng), testing::gaussian_vector(8, rng)};
    p.llm = testing::gaussian_vector(12, rng);
  }
  return parts;
}

Vector dnn_concat(const fusion::StimulusParts& p) {
  Vector out;
  for (const auto& d : p.dnn) {
    const auto u = plain_unit(d);
    out.insert(out.end(), u.begin(), u.end());
  }
  return out;
}

Outcome stacking_degeneracy() {
  std::mt19937_64 rng(202);
  const auto parts = random_parts(100, rng);
  const auto ids = testing::numbered_ids(100);
  const auto zero = fusion::stacked_matrix(ids, parts, 0.0);
  const auto huge = fusion::stacked_matrix(ids, parts, 1e6);
  std::size_t k = 0, inexact = 0;
  double worst_dnn = 0.0, worst_llm = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (std::size_t j = i + 1; j < parts.size(); ++j, ++k) {
      const Vector a = dnn_concat(parts[i]), b = dnn_concat(parts[j]);
      if (zero.values()[k] != embeddings::cosine(a, b)) ++inexact;
      worst_dnn = std::max(worst_dnn, std::abs(zero.values()[k] - plain_cosine(a, b)));
      worst_llm = std::max(worst_llm, std::abs(huge.values()[k] - plain_cosine(*parts[i].llm, *parts[j].llm)));
    }
  return check(inexact == 0 && worst_dnn <= 1e-12 && worst_llm <= 1e-6,
               fmt("alpha=0: %zu of %zu pairs differ bitwise from DNN-only cosine (max diff vs oracle %.2g); "
                   "alpha=1e6: max |diff| to LLM cosine %.2g",
                   inexact, k, worst_dnn, worst_llm));
}

Outcome fit_alpha_recovery() {
  std::mt19937_64 rng(303);
  const std::size_t n = 20;
  const auto parts = random_parts(n, rng);
  const auto ids = testing::numbered_ids(n);
  std::vector<double> llm, dnn;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      llm.push_back(plain_cosine(*parts[i].llm, *parts[j].llm));
      dnn.push_back(plain_cosine(dnn_concat(parts[i]), dnn_concat(parts[j])));
    }
  const auto grid = fusion::default_alpha_grid();
  const auto fit_llm =
      fusion::fit_alpha(ids, parts, corpus::SimilarityMatrix(ids, llm, "llm", corpus::Scale::unit), ids, grid);
  const auto fit_dnn =
      fusion::fit_alpha(ids, parts, corpus::SimilarityMatrix(ids, dnn, "dnn", corpus::Scale::unit), ids, grid);
  return check(fit_llm.alpha == grid.back() && fit_dnn.alpha == 0.0,
               fmt("%zu calibration pairs; LLM truth -> alpha=%g (max grid point %g), DNN truth -> alpha=%g",
                   llm.size(), fit_llm.alpha, grid.back(), fit_dnn.alpha));
}

Outcome lt_ccv_recovery() {
  std::mt19937_64 rng(404);
  const std::size_t n = 120, d = 32;
  std::vector<Vector> z;
  for (std::size_t k = 0; k < n; ++k) z.push_back(testing::gaussian_vector(d, rng));
  const Vector w = testing::gaussian_vector(d, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += w[k] * z[i][k] * z[j][k];
      y.push_back(s);
    }
  const auto model =
      fusion::lt_ccv(z, corpus::SimilarityMatrix(testing::numbered_ids(n), y, "targets", corpus::Scale::raw), {});
  double lo = 1.0;
  for (double r : model.fold_scores) lo = std::min(lo, r);
  return check(model.fold_scores.size() == 6 && model.mean_score >= 0.99,
               fmt("%zu folds, mean held-out r=%.6f (min %.6f), lambda=%g", model.fold_scores.size(),
                   model.mean_score, lo, model.ridge_lambda));
}

// ---------------------------------------------------------------------------
// STEP simulation

bool full_oracle(const corpus::TagChain& c) {
  if (c.iterations.size() < 10) return false;
  int good = 0;
  for (const auto& t : c.tags) {
    if (t.removed || t.ratings.size() < 3) continue;
    double sum = 0.0;
    for (const auto& r : t.ratings) sum += r.stars;
    if (sum / static_cast<double>(t.ratings.size()) >= 3.0) ++good;
  }
  return good >= 2;
}

Outcome step_simulation() {
  Stopwatch sw;
  testing::TempDir dir;
  const std::string log = dir.file("events.ndjson");
  std::vector<corpus::Stimulus> stimuli;
  for (const auto& id : testing::numbered_ids(1000)) stimuli.push_back({id, corpus::Modality::image, id + ".jpg", {}});
  stepd::Config cfg;
  cfg.seed = 9;
  cfg.trial_timeout_ms = 50;
  auto now = std::make_shared<std::int64_t>(0);
  stepd::Service svc(stimuli, cfg, log, [now] { return *now; });

  std::mt19937_64 rng(505);
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  std::vector<std::string> problems;
  auto problem = [&](const std::string& s) {
    if (problems.size() < 5) problems.push_back(s);
  };
  std::size_t accepted = 0, retries = 0, rejected = 0, abandoned = 0, spam_tags = 0;
  int agents = 0;

  for (;;) {
    const json chains = svc.status()["chains"];
    if (chains["open"].get<int>() + chains["assigned"].get<int>() == 0) break;
    if (agents >= 20000) {
      problem("chains still open after 20000 agents");
      break;
    }
    const std::string pid = svc.register_participant("a" + std::to_string(agents++));
    const bool spam = chance(0.15);
    for (;;) {
      ++*now;
      json view;
      try {
        view = svc.next_trial(pid, stepd::Mode::tag);
      } catch (const stepd::ServiceError& e) {
        if (e.reason() != "no-eligible-work" && e.reason() != "budget-exhausted" &&
            e.reason() != "participant-excluded")
          problem("next_trial: " + e.reason());
        break;
      }
      if (chance(0.02)) {
        ++abandoned;
        *now += 2 * cfg.trial_timeout_ms;
        continue;
      }
      const std::string id = view["id"];
      stepd::TagSubmission s{pid, {}, {}, {}};
      std::set<std::string> shown;
      for (const auto& t : view["tags"]) {
        const std::string tag = t;
        shown.insert(tag);
        if (spam)
          s.ratings[tag] = std::uniform_int_distribution<int>(1, 5)(rng);
        else if (tag.rfind("zz", 0) == 0)
          s.flags.push_back(tag);
        else
          s.ratings[tag] = std::uniform_int_distribution<int>(3, 5)(rng);
      }
      if (spam) {
        s.new_tags.push_back("zz" + std::to_string(spam_tags++));
      } else if (view["must_add_tag"] == true || chance(0.3)) {
        const std::string word = "word" + std::to_string(std::uniform_int_distribution<int>(0, 60)(rng));
        if (!shown.count(word)) s.new_tags.push_back(word);
      }
      if (view["must_add_tag"] == true && s.new_tags.empty()) s.new_tags.push_back("fallback");

      if (chance(0.05)) {
        auto bad = s;
        bad.new_tags.push_back("Capitalized");
        try {
          svc.submit_tag(id, bad);
          problem("upper-case tag accepted");
        } catch (const stepd::ServiceError& e) {
          if (e.reason() != "tag-case") problem("unexpected rejection " + e.reason());
          ++rejected;
        }
      }
      json result;
      try {
        result = svc.submit_tag(id, s);
      } catch (const stepd::ServiceError& e) {
        problem("submission rejected: " + e.reason());
        continue;
      }
      ++accepted;
      if (chance(0.2)) {
        ++retries;
        const auto events = svc.status()["events"];
        if (svc.submit_tag(id, s) != result) problem("retry returned a different result");
        if (svc.status()["events"] != events) problem("retry appended events");
      }
    }
  }

  const stepd::State st = svc.snapshot();
  std::size_t iterations = 0, full = 0, capped = 0;
  std::map<std::string, int> flagged_by_author;
  for (const auto& [sid, cs] : st.chains) {
    const auto& c = cs.chain;
    iterations += c.iterations.size();
    if (c.iterations.size() > 20) problem(sid + " exceeds 20 iterations");
    const bool oracle = full_oracle(c);
    switch (cs.status) {
      case stepd::ChainStatus::full:
        ++full;
        if (!oracle) problem(sid + " marked full without meeting the rule");
        break;
      case stepd::ChainStatus::capped:
        ++capped;
        if (oracle || c.iterations.size() != 20) problem(sid + " capped incorrectly");
        break;
      default:
        problem(sid + " left " + std::string(stepd::to_string(cs.status)));
    }
    std::set<std::string> who;
    for (const auto& it : c.iterations)
      if (!who.insert(it.participant).second) problem(sid + " visited twice by " + it.participant);
    for (const auto& t : c.tags) {
      std::set<std::string> flaggers;
      for (const auto& f : t.flags) flaggers.insert(f.participant);
      if (t.removed != (flaggers.size() >= 3)) problem(sid + " tag " + t.text + " removal mismatch");
      if (!t.flags.empty()) ++flagged_by_author[t.author];
    }
  }
  std::size_t excluded = 0;
  for (const auto& [pid, p] : st.participants) {
    const int flagged = flagged_by_author.count(pid) ? flagged_by_author.at(pid) : 0;
    if (p.excluded) ++excluded;
    if (p.excluded != (flagged >= 2) || p.warned != (flagged >= 1)) problem(pid + " exclusion mismatch");
  }
  if (iterations != accepted) problem(fmt("%zu iterations for %zu accepted submissions", iterations, accepted));

  const std::string dump = svc.state_dump();
  stepd::Service reopened(stimuli, cfg, log, [now] { return *now; });
  if (reopened.state_dump() != dump) problem("reopened service state differs");
  if (stepd::replay(stepd::read_log(log).events).to_json().dump() != dump) problem("log replay differs");

  const double secs = sw.seconds();
  std::string detail = fmt(
      "%zu full + %zu capped chains, %d agents (%zu excluded), %zu submissions, %zu retries, %zu rejected, "
      "%zu abandoned, %llu events, %.1f s",
      full, capped, agents, excluded, accepted, retries, rejected, abandoned,
      static_cast<unsigned long long>(st.last_seq), secs);
  for (const auto& p : problems) detail += "; " + p;
  return check(problems.empty() && secs < 60.0, detail);
}

// ---------------------------------------------------------------------------

Outcome tags_mean_throughput() {
  const std::size_t n = 1000, dim = 300, vocab = 3000;
  std::mt19937_64 rng(606);
  embeddings::EmbeddingTable table(dim, embeddings::TableKind::word);
  std::vector<std::string> words;
  for (std::size_t k = 0; k < vocab; ++k) {
    words.push_back("term" + std::to_string(k));
    table.insert(words.back(), testing::gaussian_vector(dim, rng));
  }
  corpus::Dataset ds;
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1), count(2, 8);
  for (const auto& id : testing::numbered_ids(n)) {
    ds.stimuli.push_back({id, corpus::Modality::image, id + ".jpg", {}});
    corpus::TagChain c;
    c.stimulus_id = id;
    c.iterations.push_back({"p", {}, {}, {}});
    std::set<std::string> used;
    for (std::size_t k = count(rng); used.size() < k;) used.insert(words[pick(rng)]);
    for (const auto& w : used) {
      c.tags.push_back({w, "p", 0, {}, {}, false});
      c.iterations[0].new_tags.push_back(w);
    }
    ds.chains.push_back(std::move(c));
  }
  methods::Inputs in;
  in.dataset = &ds;
  in.table = &table;

  Stopwatch sw;
  const auto m = methods::compute("tags-mean", in);
  const double secs = sw.seconds();
  bool same = true;
  for (unsigned threads : {1u, 3u, 4u}) {
    in.threads = threads;
    same = same && methods::compute("tags-mean", in) == m;
  }
  return check(m.values().size() == 499500 && secs < 10.0 && same,
               fmt("%zu pairs at dim %zu in %.2f s; identical for 1, 3, 4 and default threads: %s",
                   m.values().size(), dim, secs, same ? "yes" : "no"));
}

Outcome video_dataset_check() {
  const char* dir = std::getenv("STEPSIM_VIDEO_DATASET");
  const char* table_path = std::getenv("STEPSIM_VIDEO_WORDS");
  if (!dir || !table_path || !*dir || !*table_path)
    return {Verdict::skip, "set STEPSIM_VIDEO_DATASET and STEPSIM_VIDEO_WORDS to run"};
  const auto ds = corpus::load_dataset_dir(dir);
  if (!ds.judgments) return {Verdict::fail, std::string(dir) + " has no judgments.csv"};
  const std::string tp(table_path);
  const auto fmt_kind = tp.size() > 4 && tp.substr(tp.size() - 4) == ".csv" ? embeddings::TableFormat::csv
                                                                            : embeddings::TableFormat::text_vec;
  const auto table = embeddings::load_table(tp, fmt_kind, embeddings::TableKind::word);
  methods::Inputs in;
  in.dataset = &ds;
  in.table = &table;
  const auto m = methods::compute("tags-mean-nosplit", in);
  const auto truth = corpus::aggregate_judgments(*ds.judgments, m.ids());
  const double r = metrics::pearson(m.values(), truth.values());
  return check(std::abs(r - 0.74) <= 0.05, fmt("tags-mean-nosplit r=%.4f (target 0.74 +/- 0.05)", r));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"quantized worked example", quantized_worked_example},
      {"co-occurrence oracle", cooccurrence_oracle},
      {"bm25+/tf-idf hand values", bm25_tfidf_hand_values},
      {"split-half IRR Monte-Carlo", irr_monte_carlo},
      {"stacking degeneracy", stacking_degeneracy},
      {"fit_alpha recovery", fit_alpha_recovery},
      {"LT-CCV recovery", lt_ccv_recovery},
      {"STEP state-machine simulation", step_simulation},
      {"tags-mean throughput", tags_mean_throughput},
      {"video dataset tags-mean-nosplit", video_dataset_check},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    if (o.verdict == Verdict::fail) ++failed;
    std::printf("%s  %s: %s\n", tag, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failed\n", failed);
  return failed == 0 ? 0 : 1;
}
