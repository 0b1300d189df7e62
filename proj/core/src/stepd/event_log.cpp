#include "stepsim/stepd/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stepsim/error.hpp"

namespace stepsim::stepd {

LogContents read_log(const std::string& path) {
  LogContents out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, (complete ? nl : text.size()) - pos);
    try {
      if (!line.empty()) out.events.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& ex) {
      if (complete) throw ParseError(path, line_no, 1, std::string("corrupt event record: ") + ex.what());
      out.truncated_tail = true;
      out.tail_error = ex.what();
      break;
    }
    if (!complete) {
      // Parsed but unterminated: the writer died before the newline. Keep
      // the record out so the file and the state agree after reopening.
      out.events.pop_back();
      out.truncated_tail = true;
      out.tail_error = "missing trailing newline";
      break;
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  return out;
}

State replay(const std::vector<Event>& events) {
  State s;
  for (const auto& e : events) s.apply(e);
  return s;
}

EventLog::EventLog(std::string path, std::size_t valid_bytes, bool fsync) : path_(std::move(path)), fsync_(fsync) {
  if (path_.empty()) return;
  std::error_code ec;
  if (std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > valid_bytes)
    std::filesystem::resize_file(path_, valid_bytes);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open event log " + path_ + ": " + std::strerror(errno));
}

EventLog::~EventLog() {
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
  }
}

void EventLog::append(const Event& e) {
  std::string line = event_to_json(e).dump() + "\n";
  if (fd_ < 0) {
    memory_.push_back(std::move(line));
    return;
  }
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("event log write failed: " + std::string(std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
  if (fsync_) ::fsync(fd_);
}

void EventLog::sync() {
  if (fd_ >= 0) ::fsync(fd_);
}

}  // namespace stepsim::stepd
