#include "stepsim/stepd/config.hpp"

#include "stepsim/error.hpp"

namespace stepsim::stepd {

void Config::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ValidationError(std::string(name) + " must be positive");
  };
  positive(tag_budget, "tag_budget");
  positive(caption_budget, "caption_budget");
  positive(similarity_budget, "similarity_budget");
  positive(flag_removal_threshold, "flag_removal_threshold");
  positive(exclusion_flagged_tags, "exclusion_flagged_tags");
  positive(max_iterations, "max_iterations");
  positive(fullness_min_tags, "fullness_min_tags");
  positive(fullness_min_ratings, "fullness_min_ratings");
  if (similarity_repeats < 0 || similarity_repeats * 2 > similarity_budget)
    throw ValidationError("similarity_repeats must lie in [0, similarity_budget / 2]");
  if (min_iterations < 0 || min_iterations > max_iterations)
    throw ValidationError("min_iterations must lie in [0, max_iterations]");
  if (fullness_min_mean < 1.0 || fullness_min_mean > 5.0)
    throw ValidationError("fullness_min_mean must lie in [1, 5]");
  if (caption_guard_after < 0) throw ValidationError("caption_guard_after must be nonnegative");
  if (trial_timeout_ms <= 0) throw ValidationError("trial_timeout_ms must be positive");
  if (star_bonus_cents < 0 || consistency_bonus_cents < 0 || unique_tag_bonus_cents < 0)
    throw ValidationError("bonus amounts must be nonnegative");
}

Config Config::from(const KeyValues& kv, Config c) {
  auto i = [&](const char* key, int& field) {
    if (auto v = kv.get_int(std::string("stepd.") + key)) field = static_cast<int>(*v);
  };
  auto d = [&](const char* key, double& field) {
    if (auto v = kv.get_double(std::string("stepd.") + key)) field = *v;
  };
  auto b = [&](const char* key, bool& field) {
    if (auto v = kv.get_bool(std::string("stepd.") + key)) field = *v;
  };
  i("tag_budget", c.tag_budget);
  i("caption_budget", c.caption_budget);
  i("similarity_budget", c.similarity_budget);
  i("similarity_repeats", c.similarity_repeats);
  i("flag_removal_threshold", c.flag_removal_threshold);
  i("exclusion_flagged_tags", c.exclusion_flagged_tags);
  i("min_iterations", c.min_iterations);
  i("max_iterations", c.max_iterations);
  i("fullness_min_tags", c.fullness_min_tags);
  i("fullness_min_ratings", c.fullness_min_ratings);
  d("fullness_min_mean", c.fullness_min_mean);
  i("long_tag_words", c.long_tag_words);
  i("caption_guard_after", c.caption_guard_after);
  d("caption_guard_threshold", c.caption_guard_threshold);
  i("star_bonus_cents", c.star_bonus_cents);
  i("consistency_bonus_cents", c.consistency_bonus_cents);
  b("unique_tag_bonus", c.unique_tag_bonus);
  i("unique_tag_bonus_cents", c.unique_tag_bonus_cents);
  b("fsync", c.fsync);
  if (auto v = kv.get_int("stepd.seed")) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = kv.get_int("stepd.trial_timeout_ms")) c.trial_timeout_ms = *v;
  if (auto v = kv.get("stepd.dataset_id")) c.dataset_id = *v;
  c.validate();
  return c;
}

Config Config::from(const KeyValues& kv) { return from(kv, Config{}); }

}  // namespace stepsim::stepd
