#include "stepsim/stepd/state.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stepsim/error.hpp"
#include "stepsim/metrics.hpp"
#include "stepsim/wfa.hpp"

namespace stepsim::stepd {

using nlohmann::json;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::tag: return "tag";
    case Mode::caption: return "caption";
    case Mode::similarity: return "similarity";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "tag") return Mode::tag;
  if (s == "caption") return Mode::caption;
  if (s == "similarity") return Mode::similarity;
  throw ValidationError("unknown trial mode \"" + std::string(s) + "\"");
}

std::string_view to_string(ChainStatus s) {
  switch (s) {
    case ChainStatus::open: return "open";
    case ChainStatus::assigned: return "assigned";
    case ChainStatus::full: return "full";
    case ChainStatus::capped: return "capped";
  }
  return "?";
}

std::string_view to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::outstanding: return "outstanding";
    case TrialStatus::completed: return "completed";
    case TrialStatus::expired: return "expired";
    case TrialStatus::cancelled: return "cancelled";
  }
  return "?";
}

std::string trial_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%06llu", static_cast<unsigned long long>(n));
  return buf;
}

json event_to_json(const Event& e) {
  return json{{"seq", e.seq}, {"ts", e.ts_ms}, {"kind", e.kind}, {"data", e.data}};
}

Event event_from_json(const json& j) {
  Event e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.ts_ms = j.at("ts").get<std::int64_t>();
  e.kind = j.at("kind").get<std::string>();
  e.data = j.at("data");
  return e;
}

bool is_full(const corpus::TagChain& chain, const Config& config) {
  if (static_cast<int>(chain.iterations.size()) < config.min_iterations) return false;
  int good = 0;
  for (const auto& tag : chain.tags) {
    if (tag.removed || static_cast<int>(tag.ratings.size()) < config.fullness_min_ratings) continue;
    if (*tag.mean_stars() >= config.fullness_min_mean) ++good;
  }
  return good >= config.fullness_min_tags;
}

double consistency_score(const std::vector<ScheduleSlot>& schedule, const std::vector<int>& values) {
  std::vector<double> original, repeat;
  for (std::size_t k = 0; k < schedule.size() && k < values.size(); ++k) {
    if (!schedule[k].repeat_of) continue;
    original.push_back(values.at(*schedule[k].repeat_of));
    repeat.push_back(values[k]);
  }
  if (original.empty()) return 0.0;
  try {
    return metrics::spearman(original, repeat);
  } catch (const Error&) {
    return original == repeat ? 1.0 : 0.0;
  }
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

json config_to_json(const Config& c) {
  return json{{"tag_budget", c.tag_budget},
              {"caption_budget", c.caption_budget},
              {"similarity_budget", c.similarity_budget},
              {"similarity_repeats", c.similarity_repeats},
              {"flag_removal_threshold", c.flag_removal_threshold},
              {"exclusion_flagged_tags", c.exclusion_flagged_tags},
              {"min_iterations", c.min_iterations},
              {"max_iterations", c.max_iterations},
              {"fullness_min_tags", c.fullness_min_tags},
              {"fullness_min_ratings", c.fullness_min_ratings},
              {"fullness_min_mean", c.fullness_min_mean},
              {"long_tag_words", c.long_tag_words},
              {"caption_guard_after", c.caption_guard_after},
              {"caption_guard_threshold", c.caption_guard_threshold},
              {"star_bonus_cents", c.star_bonus_cents},
              {"consistency_bonus_cents", c.consistency_bonus_cents},
              {"unique_tag_bonus", c.unique_tag_bonus},
              {"unique_tag_bonus_cents", c.unique_tag_bonus_cents},
              {"seed", c.seed},
              {"trial_timeout_ms", c.trial_timeout_ms},
              {"dataset_id", c.dataset_id},
              {"fsync", c.fsync}};
}

Config config_from_json(const json& j) {
  Config c;
  c.tag_budget = j.at("tag_budget");
  c.caption_budget = j.at("caption_budget");
  c.similarity_budget = j.at("similarity_budget");
  c.similarity_repeats = j.at("similarity_repeats");
  c.flag_removal_threshold = j.at("flag_removal_threshold");
  c.exclusion_flagged_tags = j.at("exclusion_flagged_tags");
  c.min_iterations = j.at("min_iterations");
  c.max_iterations = j.at("max_iterations");
  c.fullness_min_tags = j.at("fullness_min_tags");
  c.fullness_min_ratings = j.at("fullness_min_ratings");
  c.fullness_min_mean = j.at("fullness_min_mean");
  c.long_tag_words = j.at("long_tag_words");
  c.caption_guard_after = j.at("caption_guard_after");
  c.caption_guard_threshold = j.at("caption_guard_threshold");
  c.star_bonus_cents = j.at("star_bonus_cents");
  c.consistency_bonus_cents = j.at("consistency_bonus_cents");
  c.unique_tag_bonus = j.at("unique_tag_bonus");
  c.unique_tag_bonus_cents = j.at("unique_tag_bonus_cents");
  c.seed = j.at("seed");
  c.trial_timeout_ms = j.at("trial_timeout_ms");
  c.dataset_id = j.at("dataset_id");
  c.fsync = j.at("fsync");
  return c;
}

json stimulus_to_json(const corpus::Stimulus& s) {
  json j{{"id", s.id}, {"modality", corpus::to_string(s.modality)}, {"uri", s.uri}};
  j["label"] = s.label ? json(*s.label) : json(nullptr);
  return j;
}

corpus::Stimulus stimulus_from_json(const json& j) {
  corpus::Stimulus s;
  s.id = j.at("id");
  s.modality = corpus::parse_modality(j.at("modality").get<std::string>());
  s.uri = j.at("uri");
  if (j.contains("label") && !j["label"].is_null()) s.label = j["label"].get<std::string>();
  return s;
}

json chain_to_json(const corpus::TagChain& c) {
  json its = json::array();
  for (const auto& it : c.iterations) {
    json ratings = json::array();
    for (const auto& [tag, stars] : it.ratings) ratings.push_back(json::array({tag, stars}));
    its.push_back({{"participant", it.participant},
                   {"ratings", ratings},
                   {"flags", it.flags},
                   {"new_tags", it.new_tags}});
  }
  json tags = json::array();
  for (const auto& t : c.tags) {
    json ratings = json::array();
    for (const auto& r : t.ratings) ratings.push_back(json::array({r.participant, r.stars, r.iteration}));
    json flags = json::array();
    for (const auto& f : t.flags) flags.push_back(json::array({f.participant, f.iteration}));
    tags.push_back({{"text", t.text},
                    {"author", t.author},
                    {"created_iteration", t.created_iteration},
                    {"ratings", ratings},
                    {"flags", flags},
                    {"removed", t.removed}});
  }
  return json{{"stimulus_id", c.stimulus_id}, {"iterations", its}, {"tags", tags}};
}

json trial_to_json(const Trial& t) {
  json j{{"id", t.id},
         {"mode", to_string(t.mode)},
         {"participant", t.participant},
         {"stimulus_id", t.stimulus_id},
         {"swapped", t.swapped},
         {"position", t.position},
         {"snapshot", t.snapshot},
         {"must_add_tag", t.must_add_tag},
         {"assigned_ms", t.assigned_ms},
         {"deadline_ms", t.deadline_ms},
         {"status", to_string(t.status)},
         {"result", t.result}};
  j["pair"] = t.pair ? json::array({t.pair->first, t.pair->second}) : json(nullptr);
  return j;
}

json participant_to_json(const Participant& p) {
  json schedule = json::array();
  for (const auto& slot : p.schedule) {
    schedule.push_back({{"pair", json::array({slot.pair.first, slot.pair.second})},
                        {"repeat_of", slot.repeat_of ? json(*slot.repeat_of) : json(nullptr)}});
  }
  return json{{"id", p.id},
              {"flags_received", p.flags_received},
              {"warned", p.warned},
              {"excluded", p.excluded},
              {"terminated", p.terminated},
              {"bonus_cents", p.bonus_cents},
              {"seen_chains", p.seen_chains},
              {"captioned", p.captioned},
              {"completed", p.completed},
              {"outstanding", p.outstanding ? json(*p.outstanding) : json(nullptr)},
              {"captions", p.captions},
              {"flagged_tags", p.flagged_tags},
              {"schedule", schedule},
              {"schedule_values", p.schedule_values},
              {"consistency", p.consistency ? json(*p.consistency) : json(nullptr)}};
}

[[noreturn]] void corrupt(const Event& e, const std::string& what) {
  throw Error("event " + std::to_string(e.seq) + " (" + e.kind + "): " + what);
}

}  // namespace

const corpus::Stimulus* State::find_stimulus(std::string_view id) const {
  for (const auto& s : stimuli)
    if (s.id == id) return &s;
  return nullptr;
}

json State::to_json() const {
  json j;
  j["initialized"] = initialized;
  j["config"] = config_to_json(config);
  json st = json::array();
  for (const auto& s : stimuli) st.push_back(stimulus_to_json(s));
  j["stimuli"] = st;
  json ch = json::object();
  for (const auto& [id, c] : chains) {
    json cj = chain_to_json(c.chain);
    cj["status"] = to_string(c.status);
    cj["trial"] = c.trial ? json(*c.trial) : json(nullptr);
    ch[id] = cj;
  }
  j["chains"] = ch;
  json caps = json::object();
  for (const auto& [id, set] : captions) {
    json list = json::array();
    for (const auto& c : set.captions) list.push_back(json::array({c.rater, c.text}));
    caps[id] = list;
  }
  j["captions"] = caps;
  json judg = json::array();
  for (const auto& r : judgments)
    judg.push_back(json::array({r.pair.first, r.pair.second, r.rater, r.value, r.is_repeat}));
  j["judgments"] = judg;
  json parts = json::object();
  for (const auto& [id, p] : participants) parts[id] = participant_to_json(p);
  j["participants"] = parts;
  json trs = json::object();
  for (const auto& [id, t] : trials) trs[id] = trial_to_json(t);
  j["trials"] = trs;
  j["next_trial"] = next_trial;
  j["last_seq"] = last_seq;
  return j;
}

// ---------------------------------------------------------------------------
// apply

namespace {

Trial& outstanding_trial(State& s, const Event& e) {
  const std::string id = e.data.at("trial");
  auto it = s.trials.find(id);
  if (it == s.trials.end()) corrupt(e, "unknown trial " + id);
  if (it->second.status != TrialStatus::outstanding) corrupt(e, "trial " + id + " is not outstanding");
  return it->second;
}

/// Ends an outstanding trial without a submission.
void release(State& s, Trial& t, TrialStatus status) {
  t.status = status;
  if (t.mode == Mode::tag) {
    auto& c = s.chains.at(t.stimulus_id);
    if (c.trial == t.id) {
      c.trial.reset();
      if (c.status == ChainStatus::assigned) c.status = ChainStatus::open;
    }
  }
  auto& p = s.participants.at(t.participant);
  if (p.outstanding == t.id) p.outstanding.reset();
}

void exclude(State& s, Participant& p) {
  p.excluded = true;
  if (p.outstanding) release(s, s.trials.at(*p.outstanding), TrialStatus::cancelled);
}

json participant_summary(const Participant& p) {
  return json{{"bonus_cents", p.bonus_cents},
              {"flags_received", p.flags_received},
              {"warned", p.warned},
              {"excluded", p.excluded},
              {"terminated", p.terminated}};
}

void apply_tag(State& s, const Event& e) {
  Trial& t = outstanding_trial(s, e);
  if (t.mode != Mode::tag) corrupt(e, "not a tag trial");
  auto& cs = s.chains.at(t.stimulus_id);
  auto& chain = cs.chain;
  Participant& p = s.participants.at(t.participant);
  const Config& cfg = s.config;
  const int iteration = static_cast<int>(chain.iterations.size());

  corpus::IterationRecord rec;
  rec.participant = p.id;
  json removed = json::array();
  for (const auto& r : e.data.at("ratings")) {
    const std::string tag = r.at(0);
    const int stars = r.at(1);
    auto idx = chain.find_active(tag);
    if (!idx) corrupt(e, "rating for inactive tag " + tag);
    auto& state = chain.tags[*idx];
    state.ratings.push_back({p.id, stars, iteration});
    rec.ratings.emplace_back(tag, stars);
    s.participants.at(state.author).bonus_cents += cfg.star_bonus_cents;
  }
  for (const auto& f : e.data.at("flags")) {
    const std::string tag = f;
    auto idx = chain.find_active(tag);
    if (!idx) corrupt(e, "flag for inactive tag " + tag);
    auto& state = chain.tags[*idx];
    state.flags.push_back({p.id, iteration});
    rec.flags.push_back(tag);
    if (static_cast<int>(state.distinct_flaggers()) >= cfg.flag_removal_threshold) {
      state.removed = true;
      removed.push_back(tag);
    }
    Participant& author = s.participants.at(state.author);
    if (author.flagged_tags.insert(chain.stimulus_id + "#" + std::to_string(*idx)).second) {
      author.flags_received = static_cast<int>(author.flagged_tags.size());
      author.warned = true;
      if (author.flags_received >= cfg.exclusion_flagged_tags && !author.excluded) exclude(s, author);
    }
  }
  for (const auto& n : e.data.at("new_tags")) {
    const std::string text = n;
    if (chain.find_active(text)) corrupt(e, "duplicate active tag " + text);
    if (cfg.unique_tag_bonus) {
      const bool seen = std::any_of(chain.tags.begin(), chain.tags.end(),
                                    [&](const corpus::TagState& x) { return x.text == text; });
      if (!seen) p.bonus_cents += cfg.unique_tag_bonus_cents;
    }
    corpus::TagState state;
    state.text = text;
    state.author = p.id;
    state.created_iteration = iteration;
    chain.tags.push_back(std::move(state));
    rec.new_tags.push_back(text);
  }
  chain.iterations.push_back(std::move(rec));

  cs.trial.reset();
  if (is_full(chain, cfg))
    cs.status = ChainStatus::full;
  else if (static_cast<int>(chain.iterations.size()) >= cfg.max_iterations)
    cs.status = ChainStatus::capped;
  else
    cs.status = ChainStatus::open;

  t.status = TrialStatus::completed;
  p.outstanding.reset();
  p.seen_chains.insert(chain.stimulus_id);
  p.completed[static_cast<int>(Mode::tag)]++;
  t.result = json{{"trial", t.id},
                  {"status", "accepted"},
                  {"iteration", iteration},
                  {"chain_status", to_string(cs.status)},
                  {"removed", removed},
                  {"warnings", e.data.value("warnings", json::array())},
                  {"participant", participant_summary(p)}};
}

void apply_caption(State& s, const Event& e) {
  Trial& t = outstanding_trial(s, e);
  if (t.mode != Mode::caption) corrupt(e, "not a caption trial");
  Participant& p = s.participants.at(t.participant);
  const std::string text = e.data.at("text");
  json score = nullptr;
  bool terminated = false;
  if (static_cast<int>(p.captions.size()) >= s.config.caption_guard_after && !p.captions.empty()) {
    const double m = wfa::mean_repetition_score(text, p.captions);
    score = m;
    terminated = m > s.config.caption_guard_threshold;
  }
  t.status = TrialStatus::completed;
  p.outstanding.reset();
  p.completed[static_cast<int>(Mode::caption)]++;
  if (terminated) {
    p.terminated = true;
  } else {
    p.captions.push_back(text);
    p.captioned.insert(t.stimulus_id);
    auto& set = s.captions[t.stimulus_id];
    set.stimulus_id = t.stimulus_id;
    set.captions.push_back({text, p.id, true});
  }
  t.result = json{{"trial", t.id},
                  {"status", terminated ? "terminated" : "accepted"},
                  {"repetition_score", score},
                  {"participant", participant_summary(p)}};
}

void apply_similarity(State& s, const Event& e) {
  Trial& t = outstanding_trial(s, e);
  if (t.mode != Mode::similarity) corrupt(e, "not a similarity trial");
  Participant& p = s.participants.at(t.participant);
  const int value = e.data.at("value");
  if (t.position != p.schedule_values.size()) corrupt(e, "similarity answer out of schedule order");
  const auto& slot = p.schedule.at(t.position);
  p.schedule_values.push_back(value);
  s.judgments.push_back({slot.pair, p.id, value, slot.repeat_of.has_value()});
  t.status = TrialStatus::completed;
  p.outstanding.reset();
  p.completed[static_cast<int>(Mode::similarity)]++;
  json consistency = nullptr;
  int awarded = 0;
  if (p.schedule_values.size() == p.schedule.size()) {
    const double score = consistency_score(p.schedule, p.schedule_values);
    p.consistency = score;
    consistency = score;
    awarded = static_cast<int>(std::lround(s.config.consistency_bonus_cents * std::max(0.0, score)));
    p.bonus_cents += awarded;
  }
  t.result = json{{"trial", t.id},
                  {"status", "accepted"},
                  {"position", t.position},
                  {"remaining", p.schedule.size() - p.schedule_values.size()},
                  {"consistency", consistency},
                  {"bonus_awarded", awarded},
                  {"participant", participant_summary(p)}};
}

}  // namespace

void State::apply(const Event& e) {
  if (e.seq != last_seq + 1) corrupt(e, "expected sequence number " + std::to_string(last_seq + 1));
  const auto& d = e.data;
  if (e.kind == kind::initialized) {
    if (initialized) corrupt(e, "state already initialized");
    config = config_from_json(d.at("config"));
    for (const auto& sj : d.at("stimuli")) {
      auto st = stimulus_from_json(sj);
      ChainState c;
      c.chain.stimulus_id = st.id;
      if (!chains.emplace(st.id, std::move(c)).second) corrupt(e, "duplicate stimulus " + st.id);
      stimuli.push_back(std::move(st));
    }
    initialized = true;
  } else if (!initialized) {
    corrupt(e, "event before initialization");
  } else if (e.kind == kind::participant_registered) {
    const std::string id = d.at("participant");
    Participant p;
    p.id = id;
    if (!participants.emplace(id, std::move(p)).second) corrupt(e, "participant exists: " + id);
  } else if (e.kind == kind::schedule_created) {
    auto& p = participants.at(d.at("participant").get<std::string>());
    if (!p.schedule.empty()) corrupt(e, "participant already has a schedule");
    for (const auto& sj : d.at("slots")) {
      ScheduleSlot slot{corpus::StimulusPair::of(sj.at(0), sj.at(1)), std::nullopt};
      if (!sj.at(2).is_null()) slot.repeat_of = sj.at(2).get<std::size_t>();
      p.schedule.push_back(std::move(slot));
    }
  } else if (e.kind == kind::trial_assigned) {
    Trial t;
    t.id = d.at("trial");
    if (t.id != trial_id(next_trial)) corrupt(e, "unexpected trial id " + t.id);
    t.mode = parse_mode(d.at("mode").get<std::string>());
    t.participant = d.at("participant");
    t.stimulus_id = d.value("stimulus_id", "");
    if (d.contains("pair") && !d["pair"].is_null()) t.pair = corpus::StimulusPair::of(d["pair"].at(0), d["pair"].at(1));
    t.swapped = d.value("swapped", false);
    t.position = d.value("position", std::size_t{0});
    t.snapshot = d.value("snapshot", std::vector<std::string>{});
    t.must_add_tag = d.value("must_add_tag", false);
    t.assigned_ms = e.ts_ms;
    t.deadline_ms = d.at("deadline_ms");
    auto& p = participants.at(t.participant);
    if (p.outstanding) corrupt(e, "participant already has an outstanding trial");
    if (p.excluded || p.terminated) corrupt(e, "participant may not receive trials");
    if (t.mode == Mode::tag) {
      auto& c = chains.at(t.stimulus_id);
      if (c.status != ChainStatus::open) corrupt(e, "chain " + t.stimulus_id + " is not open");
      c.status = ChainStatus::assigned;
      c.trial = t.id;
    }
    p.outstanding = t.id;
    ++next_trial;
    trials.emplace(t.id, std::move(t));
  } else if (e.kind == kind::trial_expired) {
    release(*this, outstanding_trial(*this, e), TrialStatus::expired);
  } else if (e.kind == kind::tag_submitted) {
    apply_tag(*this, e);
  } else if (e.kind == kind::caption_submitted) {
    apply_caption(*this, e);
  } else if (e.kind == kind::similarity_submitted) {
    apply_similarity(*this, e);
  } else {
    corrupt(e, "unknown event kind");
  }
  last_seq = e.seq;
}

std::vector<corpus::TagChain> export_chains(const State& s) {
  std::vector<corpus::TagChain> out;
  for (const auto& st : s.stimuli) {
    const auto& c = s.chains.at(st.id).chain;
    if (!c.iterations.empty()) out.push_back(c);
  }
  return out;
}

std::vector<corpus::CaptionSet> export_captions(const State& s) {
  std::vector<corpus::CaptionSet> out;
  for (const auto& st : s.stimuli) {
    auto it = s.captions.find(st.id);
    if (it != s.captions.end()) out.push_back(it->second);
  }
  return out;
}

corpus::JudgmentSet export_judgments(const State& s) { return {s.config.dataset_id, s.judgments}; }

}  // namespace stepsim::stepd
