#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "msreg/demons.hpp"
#include "msreg/msnet.hpp"

namespace msreg {

// key = value text config; '#' starts a comment, blank lines ignored.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {
inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}
}  // namespace detail

inline ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!key.empty()) out[key] = value;
  }
  return out;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_config(in);
}

inline double config_double(const ConfigMap& cfg, const std::string& key, double fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  return std::stod(it->second);
}

inline int config_int(const ConfigMap& cfg, const std::string& key, int fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  return std::stoi(it->second);
}

inline bool config_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  return it->second == "1" || it->second == "true" || it->second == "yes";
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

// Keys: pyramid_levels, iterations (comma list, coarse to fine),
// sigma_update, sigma_field, max_step, kappa, normalize.
inline DemonsParams demons_params_from_config(const ConfigMap& cfg,
                                              DemonsParams base = DemonsParams{}) {
  DemonsParams p = base;
  p.pyramid_levels = config_int(cfg, "pyramid_levels", p.pyramid_levels);
  if (const auto it = cfg.find("iterations"); it != cfg.end())
    p.iterations_per_level = parse_int_list(it->second);
  p.sigma_update = config_double(cfg, "sigma_update", p.sigma_update);
  p.sigma_field = config_double(cfg, "sigma_field", p.sigma_field);
  p.max_step = config_double(cfg, "max_step", p.max_step);
  p.kappa = config_double(cfg, "kappa", p.kappa);
  p.normalize_intensities = config_bool(cfg, "normalize", p.normalize_intensities);
  p.validate();
  return p;
}

// Keys: learning_rate, batch_size, epochs, patches_per_pair, seed.
inline TrainConfig train_config_from_config(const ConfigMap& cfg, TrainConfig base = TrainConfig{}) {
  TrainConfig c = base;
  c.learning_rate = config_double(cfg, "learning_rate", c.learning_rate);
  c.batch_size = config_int(cfg, "batch_size", c.batch_size);
  c.epochs = config_int(cfg, "epochs", c.epochs);
  c.patches_per_pair = config_int(cfg, "patches_per_pair", c.patches_per_pair);
  if (const auto it = cfg.find("seed"); it != cfg.end())
    c.seed = static_cast<std::uint64_t>(std::stoull(it->second));
  c.validate();
  return c;
}

}  // namespace msreg
