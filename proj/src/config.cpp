#include "mp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mp {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected a number, got '" + value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key " + key + ": expected an integer, got '" + value + "'");
  }
  return v;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ConfigError("config key " + key + ": expected a comma-separated list");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& schema() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) {
         const std::int64_t s = parse_int(k, v);
         if (s < 0) throw ConfigError("config key seed: must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"precision", [](RunConfig& c, const std::string&, const std::string& v) { c.precision = v; }},
      {"model.d_x", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.input_width = parse_int(k, v); }},
      {"model.d_z", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.latent_width = parse_int(k, v); }},
      {"model.d_q", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.query_width = parse_int(k, v); }},
      {"model.d_y", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.output_width = parse_int(k, v); }},
      {"model.depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.depth = parse_int(k, v); }},
      {"model.heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.heads = parse_int(k, v); }},
      {"model.mel_bands", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.mel_bands = parse_int(k, v); }},
      {"train.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr = parse_double(k, v); }},
      {"train.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = static_cast<int>(parse_int(k, v)); }},
      {"train.patience", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.patience = static_cast<int>(parse_int(k, v)); }},
      {"train.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = static_cast<int>(parse_int(k, v)); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weight_decay = parse_double(k, v); }},
      {"train.beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.beta1 = parse_double(k, v); }},
      {"train.beta2", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.beta2 = parse_double(k, v); }},
      {"train.eps", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.eps = parse_double(k, v); }},
      {"train.schedule", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "linear") c.train.schedule = TrainConfig::Schedule::linear;
         else if (v == "constant") c.train.schedule = TrainConfig::Schedule::constant;
         else if (v == "table") c.train.schedule = TrainConfig::Schedule::table;
         else throw ConfigError("config key " + k + ": expected linear, constant, or table");
       }},
      {"train.schedule_end_factor", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.schedule_end_factor = parse_double(k, v); }},
      {"train.schedule_table", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.schedule_table = parse_double_list(k, v); }},
      {"train.window_s", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.segmentation.window_s = parse_double(k, v); }},
      {"train.overlap_s", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.segmentation.overlap_s = parse_double(k, v); }},
      {"train.min_tail_s", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.segmentation.min_tail_s = parse_double(k, v); }},
      {"loss.convention", [](RunConfig& c, const std::string&, const std::string& v) { c.train.convention = parse_loss_convention(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "loss") {
        throw ConfigError("unknown config section: [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full_key = section.empty() ? key : section + "." + key;
    auto it = schema().find(full_key);
    if (it == schema().end()) {
      throw ConfigError("unknown config key: " + full_key);
    }
    it->second(cfg, full_key, value);
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config_text(text);
}

std::vector<std::string> run_config_schema_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : schema()) keys.push_back(k);
  return keys;
}

}  // namespace mp
