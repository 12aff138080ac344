#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tvmf/errors.hpp"
#include "tvmf/experiment.hpp"

namespace tvmf {

namespace {

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' is not a number: " + text);
  return v;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& text) {
  Int v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' is not an integer: " + text);
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + key + "' is not a boolean: " + text);
}

ConfigMap flatten(const boost::property_tree::ptree& tree) {
  ConfigMap map;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      map[key] = node.data();
    } else {
      for (const auto& [sub, leaf] : node) map[key + "." + sub] = leaf.data();
    }
  }
  return map;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return flatten(tree);
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

ExperimentConfig config_from_map(const ConfigMap& map) {
  ExperimentConfig cfg;
  std::optional<std::uint64_t> data_seed;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"seed", [&](auto& k, auto& v) { cfg.seed = to_int<std::uint64_t>(k, v); }},
      {"epochs", [&](auto& k, auto& v) { cfg.epochs = to_int<int>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { cfg.batch_size = to_int<int>(k, v); }},
      {"augment", [&](auto& k, auto& v) { cfg.augment = to_bool(k, v); }},
      {"eval_gamma", [&](auto& k, auto& v) { cfg.eval_gamma = to_double(k, v); }},
      {"out", [&](auto&, auto& v) { cfg.out_dir = v; }},
      {"loss.name", [&](auto&, auto& v) { cfg.loss.name = v; }},
      {"loss.gamma", [&](auto& k, auto& v) { cfg.loss.gamma = to_double(k, v); }},
      {"loss.kappa", [&](auto& k, auto& v) { cfg.loss.kappa = to_double(k, v); }},
      {"loss.lambda", [&](auto& k, auto& v) { cfg.loss.lambda = to_double(k, v); }},
      {"loss.alpha", [&](auto& k, auto& v) { cfg.loss.tversky.alpha = to_double(k, v); }},
      {"loss.beta", [&](auto& k, auto& v) { cfg.loss.tversky.beta = to_double(k, v); }},
      {"loss.focal_gamma", [&](auto& k, auto& v) { cfg.loss.tversky.focal_gamma = to_double(k, v); }},
      {"model.hidden_width", [&](auto& k, auto& v) { cfg.model.hidden_width = to_int<int>(k, v); }},
      {"model.kernel_size", [&](auto& k, auto& v) { cfg.model.kernel_size = to_int<int>(k, v); }},
      {"optimizer.lr0", [&](auto& k, auto& v) { cfg.lr0 = to_double(k, v); }},
      {"optimizer.momentum", [&](auto& k, auto& v) { cfg.momentum = to_double(k, v); }},
      {"optimizer.weight_decay", [&](auto& k, auto& v) { cfg.weight_decay = to_double(k, v); }},
      {"data.path", [&](auto&, auto& v) { cfg.dataset_path = v; }},
      {"data.num_samples", [&](auto& k, auto& v) { cfg.dataset.num_samples = to_int<int>(k, v); }},
      {"data.height", [&](auto& k, auto& v) { cfg.dataset.height = to_int<int>(k, v); }},
      {"data.width", [&](auto& k, auto& v) { cfg.dataset.width = to_int<int>(k, v); }},
      {"data.num_classes", [&](auto& k, auto& v) { cfg.dataset.num_classes = to_int<int>(k, v); }},
      {"data.imbalance_ratio", [&](auto& k, auto& v) { cfg.dataset.imbalance_ratio = to_double(k, v); }},
      {"data.noise_sigma", [&](auto& k, auto& v) { cfg.dataset.noise_sigma = to_double(k, v); }},
      {"data.seed", [&](auto& k, auto& v) { data_seed = to_int<std::uint64_t>(k, v); }},
      {"split.train", [&](auto& k, auto& v) { cfg.split.train = to_double(k, v); }},
      {"split.val", [&](auto& k, auto& v) { cfg.split.val = to_double(k, v); }},
      {"split.test", [&](auto& k, auto& v) { cfg.split.test = to_double(k, v); }},
      {"split.seed", [&](auto& k, auto& v) { cfg.split_seed = to_int<std::uint64_t>(k, v); }},
  };
  for (const auto& [key, value] : map) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  cfg.dataset.seed = data_seed.value_or(cfg.seed);
  cfg.model.seed = cfg.seed;
  cfg.model.num_classes = cfg.dataset.num_classes;
  cfg.model.in_channels = 1;
  cfg.validate();
  return cfg;
}

}  // namespace tvmf
