#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace shopmatch {

// Flat `key = value` text used by dataset manifests and run configs. Lines
// starting with '#' and blank lines are ignored; keys are kept sorted so the
// serialized form is stable.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

  // Typed getters throw ValidationError naming the key on a malformed value.
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace shopmatch
