// key = value config with [sections]; flat "section.key" access.
// Every field has a default; CLI flags override file values.
#pragma once

#include <map>
#include <string>

namespace avd {

class Config {
  public:
    Config() = default;

    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int64_t get_int(const std::string& key, int64_t def) const;
    bool get_bool(const std::string& key, bool def) const;

    // throws on out-of-range values; called before any compute
    void validate() const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string to_string() const;

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace avd
