#include "stepsim/stepd/service.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "stepsim/hash.hpp"

namespace stepsim::stepd {

using nlohmann::json;
using Code = ServiceError::Code;

int ServiceError::http_status() const noexcept {
  switch (code_) {
    case Code::validation: return 422;
    case Code::conflict: return 409;
    case Code::not_found: return 404;
    case Code::forbidden: return 403;
  }
  return 500;
}

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

ExportKind parse_export_kind(std::string_view s) {
  if (s == "chains") return ExportKind::chains;
  if (s == "captions") return ExportKind::captions;
  if (s == "judgments") return ExportKind::judgments;
  throw ServiceError(Code::not_found, "unknown-export", "unknown export kind \"" + std::string(s) + "\"");
}

namespace {

std::string normalize_space(std::string_view text) {
  std::string out;
  bool pending = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

/// k distinct draws from [0, n) in random order (Floyd's algorithm).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::set<std::size_t> chosen;
  for (std::size_t j = n - k; j < n; ++j) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::size_t> out(chosen.begin(), chosen.end());
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

int word_count(std::string_view text) {
  return static_cast<int>(corpus::count_words(text));
}

}  // namespace

Service::Service(std::vector<corpus::Stimulus> stimuli, Config config, std::string log_path, Clock clock)
    : clock_(std::move(clock)) {
  config.validate();
  LogContents contents = read_log(log_path);
  if (contents.truncated_tail) {
    truncated_tail_ = true;
    spdlog::warn("{}: ignored partial final record ({})", log_path, contents.tail_error);
  }
  state_ = replay(contents.events);
  log_ = std::make_unique<EventLog>(log_path, contents.valid_bytes, config.fsync);
  if (state_.initialized) {
    if (!(state_.config == config))
      spdlog::warn("{}: using the configuration recorded in the log", log_path);
    if (!stimuli.empty() && stimuli != state_.stimuli)
      spdlog::warn("{}: using the stimulus list recorded in the log", log_path);
    return;
  }
  if (stimuli.empty()) throw ValidationError("the service needs at least one stimulus");
  std::set<std::string> ids;
  json list = json::array();
  for (const auto& s : stimuli) {
    if (!ids.insert(s.id).second) throw ValidationError("duplicate stimulus id \"" + s.id + "\"");
    json j{{"id", s.id}, {"modality", corpus::to_string(s.modality)}, {"uri", s.uri}};
    j["label"] = s.label ? json(*s.label) : json(nullptr);
    list.push_back(j);
  }
  State probe;
  probe.config = config;
  json cfg = probe.to_json()["config"];
  std::unique_lock lock(mu_);
  commit(kind::initialized, json{{"config", cfg}, {"stimuli", list}});
}

void Service::commit(std::string_view kind, json data) {
  Event e;
  e.seq = state_.last_seq + 1;
  e.ts_ms = clock_();
  e.kind = std::string(kind);
  e.data = std::move(data);
  log_->append(e);
  state_.apply(e);
}

void Service::expire_due_locked(std::int64_t now) {
  std::vector<std::string> due;
  for (const auto& [id, p] : state_.participants) {
    if (!p.outstanding) continue;
    const auto& t = state_.trials.at(*p.outstanding);
    if (t.deadline_ms < now) due.push_back(t.id);
  }
  for (const auto& id : due) commit(kind::trial_expired, json{{"trial", id}, {"reason", "timeout"}});
}

void Service::expire_due() {
  std::unique_lock lock(mu_);
  expire_due_locked(clock_());
}

std::string Service::register_participant(std::optional<std::string> id, bool* created) {
  std::unique_lock lock(mu_);
  if (id) {
    if (id->empty() || id->find_first_of(" \t\r\n,;") != std::string::npos)
      throw ServiceError(Code::validation, "bad-participant-id",
                         "participant ids must be nonempty without whitespace, ',' or ';'");
    if (state_.participants.count(*id)) {
      if (created) *created = false;
      return *id;
    }
  } else {
    std::uint64_t n = state_.participants.size() + 1;
    char buf[32];
    do {
      std::snprintf(buf, sizeof buf, "p%06llu", static_cast<unsigned long long>(n++));
    } while (state_.participants.count(buf));
    id = buf;
  }
  commit(kind::participant_registered, json{{"participant", *id}});
  if (created) *created = true;
  return *id;
}

json Service::trial_view(const Trial& t) const {
  json j{{"id", t.id},
         {"mode", to_string(t.mode)},
         {"participant", t.participant},
         {"deadline_ms", t.deadline_ms}};
  auto stim = [&](const std::string& id) {
    const auto* s = state_.find_stimulus(id);
    return json{{"id", s->id}, {"uri", s->uri}, {"modality", corpus::to_string(s->modality)}};
  };
  if (t.mode == Mode::tag) {
    j["stimulus"] = stim(t.stimulus_id);
    j["tags"] = t.snapshot;
    j["must_add_tag"] = t.must_add_tag;
  } else if (t.mode == Mode::caption) {
    j["stimulus"] = stim(t.stimulus_id);
  } else {
    const auto& pr = *t.pair;
    j["stimuli"] = t.swapped ? json::array({stim(pr.second), stim(pr.first)})
                             : json::array({stim(pr.first), stim(pr.second)});
    j["position"] = t.position;
    j["total"] = state_.participants.at(t.participant).schedule.size();
  }
  return j;
}

json Service::next_trial(const std::string& pid, Mode mode) {
  std::unique_lock lock(mu_);
  const std::int64_t now = clock_();
  expire_due_locked(now);
  auto pit = state_.participants.find(pid);
  if (pit == state_.participants.end())
    throw ServiceError(Code::not_found, "unknown-participant", "unknown participant \"" + pid + "\"");
  const Participant& p = pit->second;
  if (p.excluded) throw ServiceError(Code::forbidden, "participant-excluded", "participant is excluded");
  if (p.terminated) throw ServiceError(Code::forbidden, "participant-terminated", "participant was terminated");
  if (p.outstanding) {
    const Trial& t = state_.trials.at(*p.outstanding);
    if (t.mode == mode) return trial_view(t);
    throw ServiceError(Code::conflict, "trial-outstanding",
                       "participant has an outstanding " + std::string(to_string(t.mode)) + " trial " + t.id);
  }
  const Config& cfg = state_.config;
  const int done = p.completed[static_cast<int>(mode)];
  const int budget = mode == Mode::tag       ? cfg.tag_budget
                     : mode == Mode::caption ? cfg.caption_budget
                     : p.schedule.empty()    ? cfg.similarity_budget
                                             : static_cast<int>(p.schedule.size());
  if (done >= budget) throw ServiceError(Code::conflict, "budget-exhausted", "trial budget exhausted");

  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, fnv1a(pid)), state_.next_trial));
  json data{{"trial", trial_id(state_.next_trial)},
            {"participant", pid},
            {"mode", to_string(mode)},
            {"deadline_ms", now + cfg.trial_timeout_ms}};

  auto pick = [&](const std::vector<std::string>& ids) {
    std::uniform_int_distribution<std::size_t> dist(0, ids.size() - 1);
    return ids[dist(rng)];
  };

  if (mode == Mode::tag) {
    std::vector<std::string> best;
    std::size_t fewest = SIZE_MAX;
    for (const auto& s : state_.stimuli) {
      const auto& c = state_.chains.at(s.id);
      if (c.status != ChainStatus::open || p.seen_chains.count(s.id)) continue;
      const std::size_t n = c.chain.iterations.size();
      if (n < fewest) {
        fewest = n;
        best.clear();
      }
      if (n == fewest) best.push_back(s.id);
    }
    if (best.empty()) throw ServiceError(Code::conflict, "no-eligible-work", "no open chain for this participant");
    const std::string id = pick(best);
    const auto snapshot = state_.chains.at(id).chain.active_texts();
    data["stimulus_id"] = id;
    data["snapshot"] = snapshot;
    data["must_add_tag"] = snapshot.empty();
  } else if (mode == Mode::caption) {
    std::vector<std::string> best;
    std::size_t fewest = SIZE_MAX;
    for (const auto& s : state_.stimuli) {
      if (p.captioned.count(s.id)) continue;
      auto it = state_.captions.find(s.id);
      const std::size_t n = it == state_.captions.end() ? 0 : it->second.captions.size();
      if (n < fewest) {
        fewest = n;
        best.clear();
      }
      if (n == fewest) best.push_back(s.id);
    }
    if (best.empty()) throw ServiceError(Code::conflict, "no-eligible-work", "no stimulus left to caption");
    data["stimulus_id"] = pick(best);
  } else {
    if (p.schedule.empty()) {
      const std::size_t n = state_.stimuli.size();
      const std::size_t total_pairs = corpus::pair_count(n);
      if (total_pairs == 0) throw ServiceError(Code::conflict, "no-eligible-work", "fewer than two stimuli");
      std::size_t repeats = static_cast<std::size_t>(cfg.similarity_repeats);
      std::size_t unique = std::min(static_cast<std::size_t>(cfg.similarity_budget) - repeats, total_pairs);
      repeats = std::min(repeats, unique);
      const auto picks = sample_indices(total_pairs, unique, rng);
      const auto originals = sample_indices(unique, repeats, rng);
      json slots = json::array();
      auto pair_json = [&](std::size_t k, json repeat_of) {
        const auto [i, j] = corpus::condensed_pair(k, n);
        const auto pr = corpus::StimulusPair::of(state_.stimuli[i].id, state_.stimuli[j].id);
        return json::array({pr.first, pr.second, repeat_of});
      };
      for (auto k : picks) slots.push_back(pair_json(k, nullptr));
      for (auto pos : originals) slots.push_back(pair_json(picks[pos], pos));
      commit(kind::schedule_created, json{{"participant", pid}, {"slots", slots}});
    }
    const Participant& q = state_.participants.at(pid);
    const std::size_t pos = q.schedule_values.size();
    const auto& slot = q.schedule.at(pos);
    data["pair"] = json::array({slot.pair.first, slot.pair.second});
    data["position"] = pos;
    data["swapped"] = std::bernoulli_distribution(0.5)(rng);
  }
  const std::string id = data["trial"];
  commit(kind::trial_assigned, std::move(data));
  return trial_view(state_.trials.at(id));
}

const Trial& Service::check_submittable(const std::string& id, const std::string& participant, Mode mode) {
  auto it = state_.trials.find(id);
  if (it == state_.trials.end()) throw ServiceError(Code::not_found, "unknown-trial", "unknown trial \"" + id + "\"");
  const Trial& t = it->second;
  if (t.participant != participant)
    throw ServiceError(Code::forbidden, "not-trial-owner", "trial belongs to another participant");
  if (t.mode != mode)
    throw ServiceError(Code::validation, "wrong-mode", "trial " + id + " is a " + std::string(to_string(t.mode)) + " trial");
  if (t.status == TrialStatus::expired || t.status == TrialStatus::cancelled)
    throw ServiceError(Code::conflict, "trial-stale", "trial " + id + " is " + std::string(to_string(t.status)));
  if (t.status == TrialStatus::outstanding && t.deadline_ms < clock_()) {
    commit(kind::trial_expired, json{{"trial", id}, {"reason", "timeout"}});
    throw ServiceError(Code::conflict, "trial-stale", "trial " + id + " passed its deadline");
  }
  return t;
}

json Service::submit_tag(const std::string& id, const TagSubmission& s) {
  std::unique_lock lock(mu_);
  const Trial& t = check_submittable(id, s.participant, Mode::tag);
  if (t.status == TrialStatus::completed) return t.result;
  auto invalid = [](std::string reason, const std::string& what) {
    return ServiceError(Code::validation, std::move(reason), what);
  };

  const std::set<std::string> shown(t.snapshot.begin(), t.snapshot.end());
  std::set<std::string> flagged;
  for (const auto& f : s.flags) {
    if (!shown.count(f)) throw invalid("unknown-tag", "flagged tag \"" + f + "\" was not shown");
    if (!flagged.insert(f).second) throw invalid("duplicate-flag", "tag \"" + f + "\" flagged twice");
  }
  for (const auto& [tag, stars] : s.ratings) {
    if (!shown.count(tag)) throw invalid("unknown-tag", "rated tag \"" + tag + "\" was not shown");
    if (stars < 1 || stars > 5) throw invalid("bad-stars", "stars for \"" + tag + "\" must lie in 1..5");
    if (flagged.count(tag)) throw invalid("rated-and-flagged", "tag \"" + tag + "\" is both rated and flagged");
  }
  for (const auto& tag : t.snapshot)
    if (!s.ratings.count(tag) && !flagged.count(tag))
      throw invalid("unrated-tag", "tag \"" + tag + "\" needs a rating or a flag");

  const Config& cfg = state_.config;
  std::vector<std::string> added;
  json warnings = json::array();
  for (const auto& raw : s.new_tags) {
    const std::string tag = normalize_space(raw);
    if (tag.empty()) throw invalid("empty-tag", "new tags must not be empty");
    if (std::any_of(tag.begin(), tag.end(), [](unsigned char c) { return std::isupper(c); }))
      throw invalid("tag-case", "tag \"" + tag + "\" must be lower-case");
    if (shown.count(tag)) throw invalid("duplicate-tag", "tag \"" + tag + "\" is already present");
    if (std::find(added.begin(), added.end(), tag) != added.end())
      throw invalid("duplicate-tag", "tag \"" + tag + "\" given twice");
    if (word_count(tag) >= cfg.long_tag_words)
      warnings.push_back("tag \"" + tag + "\" has " + std::to_string(word_count(tag)) + " words");
    added.push_back(tag);
  }
  if (t.must_add_tag && added.empty()) throw invalid("tag-required", "at least one new tag is required");

  json ratings = json::array();
  for (const auto& tag : t.snapshot)
    if (auto it = s.ratings.find(tag); it != s.ratings.end()) ratings.push_back(json::array({tag, it->second}));
  json flags = json::array();
  for (const auto& tag : t.snapshot)
    if (flagged.count(tag)) flags.push_back(tag);
  commit(kind::tag_submitted,
         json{{"trial", id}, {"ratings", ratings}, {"flags", flags}, {"new_tags", added}, {"warnings", warnings}});
  return state_.trials.at(id).result;
}

json Service::submit_caption(const std::string& id, const std::string& participant, const std::string& text) {
  std::unique_lock lock(mu_);
  const Trial& t = check_submittable(id, participant, Mode::caption);
  if (t.status == TrialStatus::completed) return t.result;
  const std::string clean = normalize_space(text);
  if (corpus::count_words(clean) < corpus::kMinCaptionWords)
    throw ServiceError(Code::validation, "too-few-words", "captions need at least 5 words");
  if (corpus::count_unique_words(clean) < corpus::kMinCaptionUniqueWords)
    throw ServiceError(Code::validation, "too-few-unique-words", "captions need at least 4 different words");
  commit(kind::caption_submitted, json{{"trial", id}, {"text", clean}});
  return state_.trials.at(id).result;
}

json Service::submit_similarity(const std::string& id, const std::string& participant, int value) {
  std::unique_lock lock(mu_);
  const Trial& t = check_submittable(id, participant, Mode::similarity);
  if (t.status == TrialStatus::completed) return t.result;
  if (value < corpus::kMinRating || value > corpus::kMaxRating)
    throw ServiceError(Code::validation, "value-out-of-range", "similarity ratings must lie in 0..6");
  commit(kind::similarity_submitted, json{{"trial", id}, {"value", value}});
  return state_.trials.at(id).result;
}

json Service::submit(const std::string& id, const json& body) {
  Mode mode;
  {
    std::shared_lock lock(mu_);
    auto it = state_.trials.find(id);
    if (it == state_.trials.end()) throw ServiceError(Code::not_found, "unknown-trial", "unknown trial \"" + id + "\"");
    mode = it->second.mode;
  }
  if (!body.is_object()) throw ServiceError(Code::validation, "bad-body", "request body must be a JSON object");
  try {
    const std::string participant = body.at("participant");
    switch (mode) {
      case Mode::tag: {
        TagSubmission s;
        s.participant = participant;
        if (body.contains("ratings")) s.ratings = body["ratings"].get<std::map<std::string, int>>();
        if (body.contains("flags")) s.flags = body["flags"].get<std::vector<std::string>>();
        if (body.contains("new_tags")) s.new_tags = body["new_tags"].get<std::vector<std::string>>();
        return submit_tag(id, s);
      }
      case Mode::caption:
        return submit_caption(id, participant, body.at("text").get<std::string>());
      case Mode::similarity:
        return submit_similarity(id, participant, body.at("value").get<int>());
    }
  } catch (const json::exception& ex) {
    throw ServiceError(Code::validation, "bad-body", std::string("malformed submission: ") + ex.what());
  }
  return {};
}

json Service::chain(const std::string& stimulus_id) const {
  std::shared_lock lock(mu_);
  auto it = state_.chains.find(stimulus_id);
  if (it == state_.chains.end())
    throw ServiceError(Code::not_found, "unknown-stimulus", "unknown stimulus \"" + stimulus_id + "\"");
  std::ostringstream out;
  corpus::write_chains(out, std::span(&it->second.chain, 1));
  json j = json::parse(out.str());
  if (j.is_object() && j.contains("chains")) j = j["chains"].at(0);
  j["status"] = to_string(it->second.status);
  j["active_tags"] = it->second.chain.active_texts();
  return j;
}

json Service::participant(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = state_.participants.find(id);
  if (it == state_.participants.end())
    throw ServiceError(Code::not_found, "unknown-participant", "unknown participant \"" + id + "\"");
  const auto& p = it->second;
  return json{{"id", p.id},
              {"bonus_cents", p.bonus_cents},
              {"flags_received", p.flags_received},
              {"warned", p.warned},
              {"excluded", p.excluded},
              {"terminated", p.terminated},
              {"completed",
               {{"tag", p.completed[0]}, {"caption", p.completed[1]}, {"similarity", p.completed[2]}}},
              {"consistency", p.consistency ? json(*p.consistency) : json(nullptr)}};
}

json Service::status() const {
  std::shared_lock lock(mu_);
  json chains{{"open", 0}, {"assigned", 0}, {"full", 0}, {"capped", 0}};
  for (const auto& [id, c] : state_.chains) chains[std::string(to_string(c.status))] = chains[std::string(to_string(c.status))].get<int>() + 1;
  int outstanding = 0, excluded = 0;
  for (const auto& [id, p] : state_.participants) {
    outstanding += p.outstanding ? 1 : 0;
    excluded += p.excluded ? 1 : 0;
  }
  std::size_t n_captions = 0;
  for (const auto& [id, set] : state_.captions) n_captions += set.captions.size();
  return json{{"chains", chains},
              {"stimuli", state_.stimuli.size()},
              {"participants", state_.participants.size()},
              {"excluded_participants", excluded},
              {"outstanding_trials", outstanding},
              {"trials", state_.trials.size()},
              {"captions", n_captions},
              {"judgments", state_.judgments.size()},
              {"events", state_.last_seq}};
}

std::string Service::export_text(ExportKind kind) const {
  std::shared_lock lock(mu_);
  std::ostringstream out;
  switch (kind) {
    case ExportKind::chains: {
      auto chains = export_chains(state_);
      corpus::write_chains(out, chains);
      break;
    }
    case ExportKind::captions: {
      auto caps = export_captions(state_);
      corpus::write_captions(out, caps);
      break;
    }
    case ExportKind::judgments:
      corpus::write_judgments(out, export_judgments(state_));
      break;
  }
  return out.str();
}

State Service::snapshot() const {
  std::shared_lock lock(mu_);
  return state_;
}

std::string Service::state_dump() const {
  std::shared_lock lock(mu_);
  return state_.to_json().dump();
}

void Service::sync() {
  std::unique_lock lock(mu_);
  log_->sync();
}

}  // namespace stepsim::stepd
