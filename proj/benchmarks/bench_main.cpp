#include <benchmark/benchmark.h>

#include <random>

#include "helpers.hpp"
#include "stepsim/fusion.hpp"
#include "stepsim/stepd/service.hpp"
#include "stepsim/textsim.hpp"
#include "stepsim/wfa.hpp"

using namespace stepsim;

namespace {

std::vector<textsim::ResolvedTagSet> random_sets(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> count(2, 8);
  const auto ids = testing::numbered_ids(n);
  std::vector<textsim::ResolvedTagSet> sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    sets[i].stimulus_id = ids[i];
    for (int k = count(rng); k > 0; --k) sets[i].vectors.push_back(testing::gaussian_vector(dim, rng));
  }
  return sets;
}

void BM_TagMatrix(benchmark::State& state, textsim::TagMethod method) {
  const auto sets = random_sets(static_cast<std::size_t>(state.range(0)), 300);
  const auto threads = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(textsim::tag_matrix(sets, method, "bench", threads));
  state.SetItemsProcessed(state.iterations() * state.range(0) * (state.range(0) - 1) / 2);
}
BENCHMARK_CAPTURE(BM_TagMatrix, mean, textsim::TagMethod::mean)
    ->Args({500, 1})
    ->Args({1000, 1})
    ->Args({1000, 4})
    ->UseRealTime()
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TagMatrix, quantized, textsim::TagMethod::quantized)
    ->Args({200, 1})
    ->Args({200, 4})
    ->UseRealTime()
    ->Unit(benchmark::kMillisecond);

void BM_Cooccurrence(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> word(0, 40);
  wfa::WordDocument a, b;
  for (int k = 0; k < state.range(0); ++k) {
    a.words.push_back("w" + std::to_string(word(rng)));
    b.words.push_back("w" + std::to_string(word(rng)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(wfa::cooccurrence(a, b));
}
BENCHMARK(BM_Cooccurrence)->Arg(30)->Arg(300);

void BM_Bm25Matrix(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> word(0, 500), len(10, 60);
  std::vector<wfa::WordDocument> docs;
  for (const auto& id : testing::numbered_ids(static_cast<std::size_t>(state.range(0)))) {
    docs.push_back({id, {}});
    for (int k = len(rng); k > 0; --k) docs.back().words.push_back("w" + std::to_string(word(rng)));
  }
  const auto bag = wfa::make_bag(docs);
  for (auto _ : state) benchmark::DoNotOptimize(wfa::bm25plus_matrix(bag));
}
BENCHMARK(BM_Bm25Matrix)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_PartialRatio(benchmark::State& state) {
  const std::string a = "a person is slicing tomatoes on a wooden board";
  const std::string b = "someone cuts a tomato into thin slices on the kitchen counter near a window";
  for (auto _ : state) benchmark::DoNotOptimize(wfa::partial_ratio(a, b));
}
BENCHMARK(BM_PartialRatio);

void BM_LtCcv(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<embeddings::Vector> z;
  for (std::size_t k = 0; k < n; ++k) z.push_back(testing::gaussian_vector(32, rng));
  const auto y = testing::gaussian_vector(corpus::pair_count(n), rng);
  const corpus::SimilarityMatrix t(testing::numbered_ids(n), y, "t", corpus::Scale::raw);
  for (auto _ : state) benchmark::DoNotOptimize(fusion::lt_ccv(z, t));
}
BENCHMARK(BM_LtCcv)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_TagTrialRoundTrip(benchmark::State& state) {
  std::vector<corpus::Stimulus> stimuli;
  for (const auto& id : testing::numbered_ids(2000)) stimuli.push_back({id, corpus::Modality::image, id, {}});
  stepd::Config cfg;
  cfg.tag_budget = 1 << 30;
  stepd::Service svc(stimuli, cfg, "");
  int agent = 0;
  std::string pid = svc.register_participant("b0");
  for (auto _ : state) {
    nlohmann::json view;
    try {
      view = svc.next_trial(pid, stepd::Mode::tag);
    } catch (const stepd::ServiceError&) {
      pid = svc.register_participant("b" + std::to_string(++agent));
      view = svc.next_trial(pid, stepd::Mode::tag);
    }
    stepd::TagSubmission s{pid, {}, {}, {}};
    for (const auto& t : view["tags"]) s.ratings[t.get<std::string>()] = 2;
    if (view["must_add_tag"] == true) s.new_tags = {"bench"};
    benchmark::DoNotOptimize(svc.submit_tag(view["id"], s));
  }
}
BENCHMARK(BM_TagTrialRoundTrip);

}  // namespace

BENCHMARK_MAIN();
