#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "stepsim/corpus.hpp"
#include "stepsim/error.hpp"
#include "stepsim/stepd/config.hpp"
#include "stepsim/stepd/event_log.hpp"
#include "stepsim/stepd/state.hpp"

namespace stepsim::stepd {

/// Request-level failure carrying an HTTP status and a stable reason code.
class ServiceError : public Error {
 public:
  enum class Code { validation, conflict, not_found, forbidden };
  ServiceError(Code code, std::string reason, const std::string& what)
      : Error(what), code_(code), reason_(std::move(reason)) {}
  Code code() const noexcept { return code_; }
  const std::string& reason() const noexcept { return reason_; }
  int http_status() const noexcept;

 private:
  Code code_;
  std::string reason_;
};

using Clock = std::function<std::int64_t()>;
Clock system_clock_ms();

struct TagSubmission {
  std::string participant;
  std::map<std::string, int> ratings;
  std::vector<std::string> flags;
  std::vector<std::string> new_tags;
};

enum class ExportKind { chains, captions, judgments };
ExportKind parse_export_kind(std::string_view s);

/// The collection service. Every mutation becomes an event that is written
/// to the log and then applied to the in-memory state under one lock.
class Service {
 public:
  /// Opens the log at `log_path` (empty = in-memory only). An existing log
  /// is replayed and its recorded config and stimuli take precedence;
  /// otherwise the log is started with `config` and `stimuli`.
  Service(std::vector<corpus::Stimulus> stimuli, Config config, std::string log_path,
          Clock clock = system_clock_ms());

  /// Registers a participant. With no id one is generated. Returns the id;
  /// `created` tells whether it was new.
  std::string register_participant(std::optional<std::string> id, bool* created = nullptr);

  /// The participant's outstanding trial of this mode, or a new one.
  nlohmann::json next_trial(const std::string& participant, Mode mode);

  nlohmann::json submit_tag(const std::string& trial, const TagSubmission& s);
  nlohmann::json submit_caption(const std::string& trial, const std::string& participant, const std::string& text);
  nlohmann::json submit_similarity(const std::string& trial, const std::string& participant, int value);
  /// Dispatches on the trial's mode; body fields as in the HTTP API.
  nlohmann::json submit(const std::string& trial, const nlohmann::json& body);

  nlohmann::json chain(const std::string& stimulus_id) const;
  nlohmann::json participant(const std::string& id) const;
  nlohmann::json status() const;
  std::string export_text(ExportKind kind) const;

  /// Expires outstanding trials whose deadline has passed.
  void expire_due();

  State snapshot() const;
  std::string state_dump() const;
  void sync();
  bool recovered_truncated_tail() const noexcept { return truncated_tail_; }
  const EventLog& log() const noexcept { return *log_; }

 private:
  void commit(std::string_view kind, nlohmann::json data);
  void expire_due_locked(std::int64_t now);
  const Trial& check_submittable(const std::string& trial, const std::string& participant, Mode mode);
  nlohmann::json trial_view(const Trial& t) const;

  mutable std::shared_mutex mu_;
  State state_;
  std::unique_ptr<EventLog> log_;
  Clock clock_;
  bool truncated_tail_ = false;
};

}  // namespace stepsim::stepd
