#pragma once

#include <cstdint>
#include <string>

#include "stepsim/keyvalue.hpp"

namespace stepsim::stepd {

struct Config {
  // Trial budgets per participant.
  int tag_budget = 50;
  int caption_budget = 50;
  int similarity_budget = 85;
  int similarity_repeats = 5;

  // Chain rules.
  int flag_removal_threshold = 3;   // distinct flaggers that remove a tag
  int exclusion_flagged_tags = 2;   // flagged tags that exclude their author
  int min_iterations = 10;
  int max_iterations = 20;
  int fullness_min_tags = 2;
  int fullness_min_ratings = 3;
  double fullness_min_mean = 3.0;
  int long_tag_words = 3;           // tags with this many words draw a warning

  // Caption repetition guard.
  int caption_guard_after = 4;      // guard starts after this many captions
  double caption_guard_threshold = 80.0;

  // Bonuses, in cents.
  int star_bonus_cents = 1;
  int consistency_bonus_cents = 10;
  bool unique_tag_bonus = false;
  int unique_tag_bonus_cents = 1;

  std::uint64_t seed = 0;
  std::int64_t trial_timeout_ms = 600000;
  std::string dataset_id = "stepd";
  bool fsync = false;

  /// Throws ValidationError for nonsensical values.
  void validate() const;

  /// Overrides fields from keys in the "stepd" section.
  static Config from(const KeyValues& kv, Config base);
  static Config from(const KeyValues& kv);

  friend bool operator==(const Config&, const Config&) = default;
};

}  // namespace stepsim::stepd
