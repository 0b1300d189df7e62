#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace stepsim {

/// Flat key/value settings read from an INI/TOML-like file:
///
///   # comment
///   seed = 7
///   [stepd]
///   tag_budget = 60
///   dataset_id = "video"
///
/// Keys inside a section are stored as "section.key". Values may be quoted
/// with double quotes; trailing "# ..." comments are dropped outside quotes.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = {});
  static KeyValues load(const std::string& path);

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::string source_;
};

}  // namespace stepsim
