#include "lesion/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lesion/error.hpp"

namespace lesion {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got \"" + v + "\"");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  return out;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  // Shortest form that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char tmp[64];
    std::snprintf(tmp, sizeof tmp, "%.*g", prec, x);
    if (std::stod(tmp) == x) return tmp;
  }
  return buf;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "lexicon",          "train_corpus",        "test_corpus",        "train_patches",   "test_patches",
      "split.test_fraction", "split.seed",       "synth.n_labels",     "synth.n_train",   "synth.n_test",
      "synth.missing_rate", "synth.spurious_rate", "synth.seed",       "net.channels",    "net.roi_stages",
      "net.fc_dim",       "net.roi_grid",        "net.init_seed",      "loss.mode",       "loss.beta",
      "loss.eps",         "train.epochs",        "train.lr",           "train.lr_drop_epoch",
      "train.lr_after_drop", "train.batch_size", "train.momentum",     "train.weight_decay", "train.seed",
      "eval.k",           "eval.min_count",      "eval.min_train_count", "eval.labels",   "threads",
  };
  return keys;
}

}  // namespace

void KeyValues::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)), base);
  }
}

void KeyValues::set(const std::string& key, const std::string& value, const std::filesystem::path& base) {
  if (key.empty()) throw ConfigError("empty config key");
  values_[key] = value;
  bases_[key] = base;
}

void KeyValues::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + assignment + "\"");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), {});
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::filesystem::path KeyValues::base_of(const std::string& key) const {
  const auto it = bases_.find(key);
  return it == bases_.end() ? std::filesystem::path() : it->second;
}

RunConfig RunConfig::from(const KeyValues& kv) {
  for (const auto& [k, v] : kv.values()) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key \"" + k + "\"");
  }
  RunConfig c;
  auto str = [&](const char* key, auto&& apply) {
    if (auto v = kv.get(key)) apply(*v);
  };
  auto path = [&](const char* key, std::filesystem::path& out) {
    str(key, [&](const std::string& v) {
      std::filesystem::path p(v);
      if (!p.empty() && p.is_relative() && !kv.base_of(key).empty()) p = kv.base_of(key) / p;
      out = p.lexically_normal();
    });
  };
  auto size = [&](const char* key, std::size_t& out) {
    str(key, [&](const std::string& v) { out = parse_integer<std::size_t>(key, v); });
  };
  auto u64 = [&](const char* key, std::uint64_t& out) {
    str(key, [&](const std::string& v) { out = parse_integer<std::uint64_t>(key, v); });
  };
  auto real = [&](const char* key, double& out) { str(key, [&](const std::string& v) { out = parse_double(key, v); }); };

  path("lexicon", c.lexicon);
  path("train_corpus", c.train_corpus);
  path("test_corpus", c.test_corpus);
  path("train_patches", c.train_patches);
  path("test_patches", c.test_patches);
  real("split.test_fraction", c.split_test_fraction);
  u64("split.seed", c.split_seed);

  size("synth.n_labels", c.synth.n_labels);
  size("synth.n_train", c.synth.n_train);
  size("synth.n_test", c.synth.n_test);
  real("synth.missing_rate", c.synth.missing_rate);
  real("synth.spurious_rate", c.synth.spurious_rate);
  u64("synth.seed", c.synth.seed);

  str("net.channels", [&](const std::string& v) {
    c.network.channels.clear();
    for (const auto& item : split_list(v)) c.network.channels.push_back(parse_integer<std::size_t>("net.channels", item));
  });
  str("net.roi_stages", [&](const std::string& v) {
    c.network.roi.clear();
    for (const auto& item : split_list(v)) {
      if (item == "lesion") {
        c.network.roi.push_back(RoiSource::lesion);
      } else if (item == "whole") {
        c.network.roi.push_back(RoiSource::whole);
      } else {
        throw ConfigError("net.roi_stages: expected lesion or whole, got \"" + item + "\"");
      }
    }
  });
  size("net.fc_dim", c.network.fc_dim);
  str("net.roi_grid", [&](const std::string& v) {
    const auto x = v.find('x');
    if (x == std::string::npos) {
      c.network.grid_h = c.network.grid_w = parse_integer<std::size_t>("net.roi_grid", v);
    } else {
      c.network.grid_h = parse_integer<std::size_t>("net.roi_grid", v.substr(0, x));
      c.network.grid_w = parse_integer<std::size_t>("net.roi_grid", v.substr(x + 1));
    }
  });
  u64("net.init_seed", c.init_seed);

  str("loss.mode", [&](const std::string& v) {
    const auto m = parse_loss_mode(v);
    if (!m) throw ConfigError("loss.mode: expected plain, weighted or weighted_bootstrap, got \"" + v + "\"");
    c.loss.mode = *m;
  });
  real("loss.beta", c.loss.beta);
  real("loss.eps", c.loss.eps);

  size("train.epochs", c.schedule.epochs);
  real("train.lr", c.schedule.lr);
  size("train.lr_drop_epoch", c.schedule.lr_drop_epoch);
  real("train.lr_after_drop", c.schedule.lr_after_drop);
  size("train.batch_size", c.schedule.batch_size);
  real("train.momentum", c.schedule.momentum);
  real("train.weight_decay", c.schedule.weight_decay);
  u64("train.seed", c.schedule.seed);

  size("eval.k", c.eval.k);
  size("eval.min_count", c.eval.min_count);
  size("eval.min_train_count", c.eval.min_train_count);
  str("eval.labels", [&](const std::string& v) {
    if (v == "truth") {
      c.eval.use_truth = true;
    } else if (v == "mined") {
      c.eval.use_truth = false;
    } else {
      throw ConfigError("eval.labels: expected truth or mined, got \"" + v + "\"");
    }
  });
  str("threads", [&](const std::string& v) { c.threads = parse_integer<unsigned>("threads", v); });
  if (c.threads == 0) throw ConfigError("threads must be positive");
  c.schedule.threads = c.threads;

  if (!(c.split_test_fraction > 0 && c.split_test_fraction < 1)) {
    throw ConfigError("split.test_fraction must lie in (0, 1)");
  }
  if (c.eval.k == 0) throw ConfigError("eval.k must be positive");
  c.loss.validate();
  c.schedule.validate();
  c.synth.validate();
  return c;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  auto line = [&](const char* key, const std::string& v) { out << key << " = " << v << "\n"; };
  line("lexicon", lexicon.string());
  line("train_corpus", train_corpus.string());
  line("test_corpus", test_corpus.string());
  line("train_patches", train_patches.string());
  line("test_patches", test_patches.string());
  line("split.test_fraction", format_double(split_test_fraction));
  line("split.seed", std::to_string(split_seed));
  line("synth.n_labels", std::to_string(synth.n_labels));
  line("synth.n_train", std::to_string(synth.n_train));
  line("synth.n_test", std::to_string(synth.n_test));
  line("synth.missing_rate", format_double(synth.missing_rate));
  line("synth.spurious_rate", format_double(synth.spurious_rate));
  line("synth.seed", std::to_string(synth.seed));
  std::string channels, roi;
  for (std::size_t i = 0; i < network.channels.size(); ++i) channels += (i ? "," : "") + std::to_string(network.channels[i]);
  for (std::size_t i = 0; i < network.roi.size(); ++i) roi += std::string(i ? "," : "") + std::string(to_string(network.roi[i]));
  line("net.channels", channels);
  line("net.roi_stages", roi);
  line("net.fc_dim", std::to_string(network.fc_dim));
  line("net.roi_grid", std::to_string(network.grid_h) + "x" + std::to_string(network.grid_w));
  line("net.init_seed", std::to_string(init_seed));
  line("loss.mode", std::string(to_string(loss.mode)));
  line("loss.beta", format_double(loss.beta));
  line("loss.eps", format_double(loss.eps));
  line("train.epochs", std::to_string(schedule.epochs));
  line("train.lr", format_double(schedule.lr));
  line("train.lr_drop_epoch", std::to_string(schedule.lr_drop_epoch));
  line("train.lr_after_drop", format_double(schedule.lr_after_drop));
  line("train.batch_size", std::to_string(schedule.batch_size));
  line("train.momentum", format_double(schedule.momentum));
  line("train.weight_decay", format_double(schedule.weight_decay));
  line("train.seed", std::to_string(schedule.seed));
  line("eval.k", std::to_string(eval.k));
  line("eval.min_count", std::to_string(eval.min_count));
  line("eval.min_train_count", std::to_string(eval.min_train_count));
  line("eval.labels", eval.use_truth ? "truth" : "mined");
  line("threads", std::to_string(threads));
  return out.str();
}

}  // namespace lesion
