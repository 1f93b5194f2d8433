#include "avd/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "avd/errors.hpp"

namespace avd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(where + ": cannot parse '" + text + "' as a number");
  return value;
}

}  // namespace

RunConfig parse_run_config(std::istream& is, const std::filesystem::path& base_dir, const std::string& source) {
  RunConfig cfg;
  auto& t = cfg.train;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto path_setter = [&](std::filesystem::path& dst) {
    return [&dst, &base_dir](const std::string& v, const std::string&) {
      std::filesystem::path p(v);
      dst = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
  };
  const std::map<std::string, Setter> setters{
      {"lambda", [&](auto& v, auto& w) { t.lambda = parse_number<float>(v, w); }},
      {"lr", [&](auto& v, auto& w) { t.lr = parse_number<float>(v, w); }},
      {"momentum", [&](auto& v, auto& w) { t.momentum = parse_number<float>(v, w); }},
      {"lr_decay", [&](auto& v, auto& w) { t.lr_decay = parse_number<float>(v, w); }},
      {"epochs", [&](auto& v, auto& w) { t.epochs = parse_number<std::size_t>(v, w); }},
      {"batch_size", [&](auto& v, auto& w) { t.batch_size = parse_number<std::size_t>(v, w); }},
      {"seed", [&](auto& v, auto& w) { t.seed = parse_number<std::uint64_t>(v, w); }},
      {"teacher_updates", [&](auto& v, auto& w) { t.teacher_updates_per_batch = parse_number<std::size_t>(v, w); }},
      {"frame_pool_size", [&](auto& v, auto& w) { t.frame_pool_size = parse_number<std::size_t>(v, w); }},
      {"train_data", path_setter(cfg.train_data)},
      {"output_dir", path_setter(cfg.output_dir)},
  };

  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    const std::string where = source + ":" + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' given twice");
    if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
    it->second(value, where);
  }
  t.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(is, path.parent_path(), path.string());
}

}  // namespace avd
