#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stepsim/stepd/state.hpp"

namespace stepsim::stepd {

struct LogContents {
  std::vector<Event> events;
  std::size_t valid_bytes = 0;     // length of the well-formed prefix
  bool truncated_tail = false;     // a final partial record was ignored
  std::string tail_error;
};

/// Reads a newline-delimited JSON event log. A malformed final line without a
/// trailing newline is ignored and reported; any other malformed line throws
/// ParseError. A missing file reads as empty.
LogContents read_log(const std::string& path);

/// Replays a log into a fresh state.
State replay(const std::vector<Event>& events);

/// Append-only writer. One write() call per record.
class EventLog {
 public:
  /// Opens `path` for appending, first cutting it to `valid_bytes` so a torn
  /// tail from a crash is not extended. An empty path keeps records in memory.
  EventLog(std::string path, std::size_t valid_bytes, bool fsync);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const Event& e);
  void sync();
  const std::string& path() const noexcept { return path_; }
  /// Lines written in memory mode.
  const std::vector<std::string>& memory() const noexcept { return memory_; }

 private:
  std::string path_;
  int fd_ = -1;
  bool fsync_ = false;
  std::vector<std::string> memory_;
};

}  // namespace stepsim::stepd
