#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "stepsim/corpus.hpp"
#include "stepsim/stepd/config.hpp"

namespace stepsim::stepd {

enum class Mode { tag, caption, similarity };
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

enum class ChainStatus { open, assigned, full, capped };
std::string_view to_string(ChainStatus s);

enum class TrialStatus { outstanding, completed, expired, cancelled };
std::string_view to_string(TrialStatus s);

struct ChainState {
  corpus::TagChain chain;
  ChainStatus status = ChainStatus::open;
  std::optional<std::string> trial;  // outstanding tag trial
};

struct ScheduleSlot {
  corpus::StimulusPair pair;
  std::optional<std::size_t> repeat_of;  // position of the original slot
};

struct Participant {
  std::string id;
  int flags_received = 0;  // distinct authored tags flagged by others
  bool warned = false;
  bool excluded = false;
  bool terminated = false;  // stopped by the caption repetition guard
  int bonus_cents = 0;
  std::set<std::string> seen_chains;
  std::set<std::string> captioned;
  std::array<int, 3> completed{};  // per Mode
  std::optional<std::string> outstanding;
  std::vector<std::string> captions;  // accepted caption texts, in order
  std::set<std::string> flagged_tags;  // "<stimulus>#<tag index>" keys
  std::vector<ScheduleSlot> schedule;
  std::vector<int> schedule_values;  // ratings for the first k slots
  std::optional<double> consistency;
};

struct Trial {
  std::string id;
  Mode mode = Mode::tag;
  std::string participant;
  std::string stimulus_id;                 // tag and caption trials
  std::optional<corpus::StimulusPair> pair;  // similarity trials, canonical
  bool swapped = false;                    // display order second-first
  std::size_t position = 0;                // similarity schedule slot
  std::vector<std::string> snapshot;       // active tags shown (tag trials)
  bool must_add_tag = false;
  std::int64_t assigned_ms = 0;
  std::int64_t deadline_ms = 0;
  TrialStatus status = TrialStatus::outstanding;
  nlohmann::json result;  // response of the accepted submission
};

/// Log record. `data` holds the kind-specific payload.
struct Event {
  std::uint64_t seq = 0;
  std::int64_t ts_ms = 0;
  std::string kind;
  nlohmann::json data;
};

namespace kind {
inline constexpr std::string_view initialized = "initialized";
inline constexpr std::string_view participant_registered = "participant_registered";
inline constexpr std::string_view schedule_created = "similarity_schedule_created";
inline constexpr std::string_view trial_assigned = "trial_assigned";
inline constexpr std::string_view trial_expired = "trial_expired";
inline constexpr std::string_view tag_submitted = "tag_trial_submitted";
inline constexpr std::string_view caption_submitted = "caption_trial_submitted";
inline constexpr std::string_view similarity_submitted = "similarity_trial_submitted";
}  // namespace kind

nlohmann::json event_to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Complete service state; a pure function of the events applied to it.
struct State {
  bool initialized = false;
  Config config;
  std::vector<corpus::Stimulus> stimuli;
  std::map<std::string, ChainState> chains;
  std::map<std::string, corpus::CaptionSet> captions;
  std::vector<corpus::JudgmentRecord> judgments;
  std::map<std::string, Participant> participants;
  std::map<std::string, Trial> trials;
  std::uint64_t next_trial = 1;
  std::uint64_t last_seq = 0;

  /// Applies one event. Events are trusted: validation happens before they
  /// are created, so a violation here means a corrupt log (throws Error).
  void apply(const Event& e);

  const corpus::Stimulus* find_stimulus(std::string_view id) const;

  /// Canonical JSON dump; equal states give identical bytes.
  nlohmann::json to_json() const;
};

std::string trial_id(std::uint64_t n);

/// Fullness: enough iterations and enough well-rated active tags.
bool is_full(const corpus::TagChain& chain, const Config& config);

/// Original vs repeat ratings over a finished schedule. Spearman when
/// defined; otherwise 1 for identical ratings and 0 else.
double consistency_score(const std::vector<ScheduleSlot>& schedule, const std::vector<int>& values);

std::vector<corpus::TagChain> export_chains(const State& s);
std::vector<corpus::CaptionSet> export_captions(const State& s);
corpus::JudgmentSet export_judgments(const State& s);

}  // namespace stepsim::stepd
