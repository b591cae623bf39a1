#include "avd/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace avd {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::parse_string(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config: empty key at line " + std::to_string(lineno));
        c.values_[section.empty() ? key : section + "." + key] = val;
    }
    return c;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_string(ss.str());
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

double Config::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size())
        throw std::runtime_error("config: bad number for " + key + ": " + it->second);
    return v;
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size())
        throw std::runtime_error("config: bad integer for " + key + ": " + it->second);
    return v;
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": " + v);
}

void Config::validate() const {
    auto check_pos = [&](const std::string& key) {
        if (has(key) && get_double(key, 0) <= 0)
            throw std::runtime_error("config: " + key + " must be > 0");
    };
    auto check_nonneg = [&](const std::string& key) {
        if (has(key) && get_double(key, 0) < 0)
            throw std::runtime_error("config: " + key + " must be >= 0");
    };
    for (const char* k : {"model.base_width", "model.channels", "model.n_classes", "data.frames",
                          "data.height", "data.width", "sched.shift", "sched.q", "distill.batch",
                          "distill.steps", "distill.update_ratio", "teacher.batch", "teacher.steps",
                          "interp.steps", "interp.batch", "losses.k", "losses.temp_eps",
                          "opt.lr", "teacher.lr", "interp.lr"})
        check_pos(k);
    for (const char* k : {"losses.w_reg", "losses.w_temp", "losses.cfg_scale", "opt.weight_decay",
                          "opt.max_grad_norm"})
        check_nonneg(k);
    if (has("sched.q") && get_int("sched.q", 4) < 1)
        throw std::runtime_error("config: sched.q must be >= 1");
}

std::string Config::to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace avd
