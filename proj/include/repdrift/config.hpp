#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "repdrift/datasets.hpp"
#include "repdrift/errors.hpp"
#include "repdrift/model.hpp"
#include "repdrift/probe.hpp"

namespace repdrift {

enum class DatasetKind { synthetic, cifar };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::size_t n_tasks = 10;
  std::size_t classes_per_task = 4;
  std::size_t input_dim = 64;
  SplitCounts per_class{100, 50, 100};
  double cluster_spread = 1.0;
  // cifar only
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  CifarVariant variant = CifarVariant::cifar100_fine;
};

struct PretrainConfig {
  SgdConfig sgd{0.05, 32, 0, 0.0, 0};
  std::size_t classes = 10;            // synthetic base task
  std::size_t samples_per_class = 100;  // synthetic base task
  std::filesystem::path path;          // optional CIFAR-10 file for cifar runs
};

struct GridConfig {
  std::vector<std::size_t> widths{16, 64, 256};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::optional<std::size_t> main_width;   // runs every seed; other widths run sweep_seeds
  std::optional<std::size_t> sweep_seeds;  // seeds used for non-main widths (first n of `seeds`)
};

struct OutputConfig {
  std::filesystem::path dir = "runs/default";
  bool save_snapshots = false;
  std::uint32_t mds_task = 0;
};

/// Everything `run` needs. Parsed from a sectioned key = value text file.
struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<std::size_t> hidden{256};  // widths between input and the final hidden layer
  GridConfig grid;
  PretrainConfig pretrain;
  SgdConfig task{0.05, 32, 20, 0.0, 0};
  std::optional<double> lr_after_first;
  ProbeConfig probe;
  ProcrustesOptions procrustes;
  OutputConfig output;
  std::string source_text;  // canonical text used for the config hash

  /// (seed, width) cells of the grid in deterministic order.
  std::vector<std::pair<std::uint64_t, std::size_t>> cells() const {
    std::vector<std::pair<std::uint64_t, std::size_t>> out;
    for (std::size_t w : grid.widths) {
      std::size_t n = grid.seeds.size();
      if (grid.main_width && grid.sweep_seeds && w != *grid.main_width) n = std::min(n, *grid.sweep_seeds);
      for (std::size_t i = 0; i < n; ++i) out.emplace_back(grid.seeds[i], w);
    }
    return out;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class ConfigReader {
 public:
  ConfigReader(std::string section, std::string key, std::string value, std::size_t line)
      : section_(std::move(section)), key_(std::move(key)), value_(std::move(value)), line_(line) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("config line " + std::to_string(line_) + " ([" + section_ + "] " + key_ + "): " + why);
  }

  template <class T>
  T number() const {
    T v{};
    const char* b = value_.data();
    const char* e = b + value_.size();
    if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        v = static_cast<T>(std::stod(value_, &used));
        if (used != value_.size()) fail("expected a number, got '" + value_ + "'");
      } catch (const std::logic_error&) {
        fail("expected a number, got '" + value_ + "'");
      }
    } else {
      const auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) fail("expected a non-negative integer, got '" + value_ + "'");
    }
    return v;
  }

  template <class T>
  std::vector<T> list() const {
    std::vector<T> out;
    std::stringstream ss(value_);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      ConfigReader item(section_, key_, trim(tok), line_);
      out.push_back(item.number<T>());
    }
    if (out.empty()) fail("expected a non-empty list");
    return out;
  }

  bool boolean() const {
    if (value_ == "true" || value_ == "1" || value_ == "yes") return true;
    if (value_ == "false" || value_ == "0" || value_ == "no") return false;
    fail("expected true or false, got '" + value_ + "'");
  }

  const std::string& text() const { return value_; }

 private:
  std::string section_, key_, value_;
  std::size_t line_;
};

inline void read_sgd(SgdConfig& sgd, const std::string& key, const ConfigReader& r, bool& handled) {
  handled = true;
  if (key == "lr") sgd.learning_rate = r.number<double>();
  else if (key == "batch") sgd.batch_size = r.number<std::size_t>();
  else if (key == "epochs") sgd.epochs = r.number<std::size_t>();
  else if (key == "l2") sgd.l2 = r.number<double>();
  else if (key == "seed") sgd.seed = r.number<std::uint64_t>();
  else handled = false;
}

}  // namespace detail

/// Parses the experiment config text. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  cfg.source_text = std::string(text);
  std::string section;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": malformed section");
      section = detail::trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> known{"dataset", "model", "grid", "pretrain", "task",
                                               "probe", "procrustes", "output"};
      if (!known.contains(section))
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const detail::ConfigReader r(section, key, detail::trim(line.substr(eq + 1)), line_no);
    if (section.empty()) r.fail("key outside of any section");
    if (!seen.insert(section + "." + key).second) r.fail("duplicate key");

    bool handled = true;
    if (section == "dataset") {
      auto& d = cfg.dataset;
      if (key == "kind") {
        if (r.text() == "synthetic") d.kind = DatasetKind::synthetic;
        else if (r.text() == "cifar") d.kind = DatasetKind::cifar;
        else r.fail("kind must be synthetic or cifar");
      } else if (key == "n_tasks") d.n_tasks = r.number<std::size_t>();
      else if (key == "classes_per_task") d.classes_per_task = r.number<std::size_t>();
      else if (key == "input_dim") d.input_dim = r.number<std::size_t>();
      else if (key == "train_per_class") d.per_class.train = r.number<std::size_t>();
      else if (key == "probe_per_class") d.per_class.probe_fit = r.number<std::size_t>();
      else if (key == "test_per_class") d.per_class.test = r.number<std::size_t>();
      else if (key == "cluster_spread") d.cluster_spread = r.number<double>();
      else if (key == "train_path") d.train_path = r.text();
      else if (key == "test_path") d.test_path = r.text();
      else if (key == "variant") {
        if (r.text() == "cifar10") d.variant = CifarVariant::cifar10;
        else if (r.text() == "cifar100") d.variant = CifarVariant::cifar100_fine;
        else r.fail("variant must be cifar10 or cifar100");
      } else handled = false;
    } else if (section == "model") {
      if (key == "hidden") {
        cfg.hidden = r.text() == "none" ? std::vector<std::size_t>{} : r.list<std::size_t>();
      } else handled = false;
    } else if (section == "grid") {
      if (key == "widths") cfg.grid.widths = r.list<std::size_t>();
      else if (key == "seeds") cfg.grid.seeds = r.list<std::uint64_t>();
      else if (key == "main_width") cfg.grid.main_width = r.number<std::size_t>();
      else if (key == "sweep_seeds") cfg.grid.sweep_seeds = r.number<std::size_t>();
      else handled = false;
    } else if (section == "pretrain") {
      detail::read_sgd(cfg.pretrain.sgd, key, r, handled);
      if (!handled) {
        handled = true;
        if (key == "classes") cfg.pretrain.classes = r.number<std::size_t>();
        else if (key == "samples_per_class") cfg.pretrain.samples_per_class = r.number<std::size_t>();
        else if (key == "path") cfg.pretrain.path = r.text();
        else handled = false;
      }
    } else if (section == "task") {
      detail::read_sgd(cfg.task, key, r, handled);
      if (!handled && key == "lr_after_first") {
        cfg.lr_after_first = r.number<double>();
        handled = true;
      }
    } else if (section == "probe") {
      detail::read_sgd(cfg.probe.sgd, key, r, handled);
      if (!handled && key == "grad_tol") {
        cfg.probe.grad_tol = r.number<double>();
        handled = true;
      }
    } else if (section == "procrustes") {
      if (key == "allow_reflection") cfg.procrustes.allow_reflection = r.boolean();
      else if (key == "fit_on") {
        if (r.text() == "samples") cfg.procrustes.fit_on = AlignOn::samples;
        else if (r.text() == "means") cfg.procrustes.fit_on = AlignOn::means;
        else r.fail("fit_on must be samples or means");
      } else handled = false;
    } else if (section == "output") {
      if (key == "dir") cfg.output.dir = r.text();
      else if (key == "save_snapshots") cfg.output.save_snapshots = r.boolean();
      else if (key == "mds_task") cfg.output.mds_task = r.number<std::uint32_t>();
      else handled = false;
    }
    if (!handled) r.fail("unknown key");
  }

  const auto& d = cfg.dataset;
  if (d.n_tasks == 0 || d.classes_per_task == 0) throw ConfigError("n_tasks and classes_per_task must be >= 1");
  if (d.per_class.train == 0 || d.per_class.probe_fit == 0 || d.per_class.test == 0)
    throw ConfigError("per-class split sizes must be >= 1");
  if (d.kind == DatasetKind::synthetic && (d.input_dim == 0 || !(d.cluster_spread > 0.0)))
    throw ConfigError("synthetic dataset needs input_dim >= 1 and cluster_spread > 0");
  if (cfg.grid.widths.empty() || cfg.grid.seeds.empty()) throw ConfigError("grid needs widths and seeds");
  for (auto w : cfg.grid.widths)
    if (w == 0) throw ConfigError("widths must be >= 1");
  for (auto h : cfg.hidden)
    if (h == 0) throw ConfigError("hidden widths must be >= 1");
  for (const SgdConfig* s : {&cfg.task, &cfg.probe.sgd, &cfg.pretrain.sgd})
    if (s->batch_size == 0 || !(s->learning_rate >= 0.0) || !(s->l2 >= 0.0))
      throw ConfigError("SGD blocks need batch >= 1, lr >= 0, l2 >= 0");
  if (cfg.task.epochs == 0) throw ConfigError("[task] epochs must be >= 1");
  if (cfg.probe.sgd.epochs == 0) throw ConfigError("[probe] epochs must be >= 1");
  if (cfg.grid.main_width &&
      std::find(cfg.grid.widths.begin(), cfg.grid.widths.end(), *cfg.grid.main_width) == cfg.grid.widths.end())
    throw ConfigError("main_width must be one of the grid widths");
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Existence checks for files the config refers to.
inline void check_paths(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == DatasetKind::cifar) {
    for (const auto& p : {cfg.dataset.train_path, cfg.dataset.test_path})
      if (p.empty() || !std::filesystem::exists(p)) throw ConfigError("dataset file not found: " + p.string());
  }
  if (!cfg.pretrain.path.empty() && !std::filesystem::exists(cfg.pretrain.path))
    throw ConfigError("pretrain file not found: " + cfg.pretrain.path.string());
}

/// FNV-1a 64 of the config text, hex encoded.
inline std::string config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

}  // namespace repdrift
