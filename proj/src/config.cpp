#include "utm/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace utm {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v) {
  throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v);
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v);
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v);
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v);
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& tok : split(v, ','))
    out.push_back(int(parse_int(key, tok)));
  return out;
}

AnchorSet parse_anchors(const std::string& key, const std::string& v) {
  const auto toks = split(v, ',');
  if (toks.size() != 9) bad_value(key, v);
  AnchorSet a;
  for (int i = 0; i < 9; ++i) {
    const auto x = toks[std::size_t(i)].find('x');
    if (x == std::string::npos) bad_value(key, v);
    const std::string ws = trim(toks[std::size_t(i)].substr(0, x));
    const std::string hs = trim(toks[std::size_t(i)].substr(x + 1));
    a.anchors[std::size_t(i / 3)][std::size_t(i % 3)] = {
        parse_double(key, ws), parse_double(key, hs)};
  }
  return a;
}

std::string anchors_to_string(const AnchorSet& a) {
  std::string out;
  for (int s = 0; s < 3; ++s)
    for (int k = 0; k < 3; ++k) {
      if (!out.empty()) out += ",";
      out += g17(a.anchors[std::size_t(s)][std::size_t(k)].first) + "x" +
             g17(a.anchors[std::size_t(s)][std::size_t(k)].second);
    }
  return out;
}

template <typename T>
std::string join(const T& xs) {
  std::string out;
  for (int x : xs) {
    if (!out.empty()) out += ",";
    out += std::to_string(x);
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  bfe.validate();
  SgdConfig s = sgd;
  s.total_epochs = epochs > 0 ? epochs : 1;
  s.validate();
  anchors.validate();
  check_arg(epochs >= 1, "config: epochs must be >= 1");
  check_arg(batch_size >= 1, "config: batch_size must be >= 1");
  check_arg(conf_threshold >= 0 && conf_threshold < 1,
            "config: conf_threshold must be in [0,1)");
  check_arg(nms_iou > 0 && nms_iou < 1, "config: nms_iou must be in (0,1)");
}

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "strategy") {
    cfg.strategy = parse_strategy(value);
  } else if (key == "dataset_dir") {
    cfg.dataset_dir = value;
  } else if (key == "output_dir") {
    cfg.output_dir = value;
  } else if (key == "seed") {
    cfg.seed = parse_u64(key, value);
  } else if (key == "epochs") {
    cfg.epochs = int(parse_int(key, value));
  } else if (key == "batch_size") {
    cfg.batch_size = int(parse_int(key, value));
  } else if (key == "conf_threshold") {
    cfg.conf_threshold = parse_double(key, value);
  } else if (key == "nms_iou") {
    cfg.nms_iou = parse_double(key, value);
  } else if (key == "auto_anchors") {
    cfg.auto_anchors = parse_bool(key, value);
  } else if (key == "anchors") {
    cfg.anchors = parse_anchors(key, value);
  } else if (key == "bfe.dropout_rate") {
    cfg.bfe.dropout_rate = real(parse_double(key, value));
  } else if (key == "bfe.forward_passes") {
    cfg.bfe.forward_passes = int(parse_int(key, value));
  } else if (key == "bfe.dropout_layers") {
    const auto xs = parse_int_list(key, value);
    cfg.bfe.dropout_layers = std::set<int>(xs.begin(), xs.end());
  } else if (key == "bfe.channels") {
    cfg.bfe.channels = parse_int_list(key, value);
  } else if (key == "sgd.lr0") {
    cfg.sgd.learning_rate_initial = real(parse_double(key, value));
  } else if (key == "sgd.momentum") {
    cfg.sgd.momentum = real(parse_double(key, value));
  } else if (key == "sgd.weight_decay") {
    cfg.sgd.weight_decay = real(parse_double(key, value));
  } else if (key == "sgd.clip_norm") {
    cfg.sgd.clip_norm = real(parse_double(key, value));
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("bad config line " + std::to_string(lineno) +
                                  ": '" + t + "'");
    apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg, bool include_paths) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) {
    out += v.empty() ? k + " =\n" : k + " = " + v + "\n";
  };
  kv("strategy", strategy_name(cfg.strategy));
  kv("seed", std::to_string(cfg.seed));
  if (include_paths) {
    kv("dataset_dir", cfg.dataset_dir);
    kv("output_dir", cfg.output_dir);
  }
  kv("epochs", std::to_string(cfg.epochs));
  kv("batch_size", std::to_string(cfg.batch_size));
  kv("conf_threshold", g17(cfg.conf_threshold));
  kv("nms_iou", g17(cfg.nms_iou));
  kv("auto_anchors", cfg.auto_anchors ? "true" : "false");
  kv("anchors", anchors_to_string(cfg.anchors));
  kv("bfe.dropout_rate", g17(double(cfg.bfe.dropout_rate)));
  kv("bfe.forward_passes", std::to_string(cfg.bfe.forward_passes));
  kv("bfe.dropout_layers", join(cfg.bfe.dropout_layers));
  kv("bfe.channels", join(cfg.bfe.channels));
  kv("sgd.lr0", g17(double(cfg.sgd.learning_rate_initial)));
  kv("sgd.momentum", g17(double(cfg.sgd.momentum)));
  kv("sgd.weight_decay", g17(double(cfg.sgd.weight_decay)));
  kv("sgd.clip_norm", g17(double(cfg.sgd.clip_norm)));
  return out;
}

void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << serialize_config(cfg, true);
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace utm
