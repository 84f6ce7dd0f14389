#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "repdrift/errors.hpp"
#include "repdrift/numerics/matrix.hpp"
#include "repdrift/numerics/rng.hpp"

namespace repdrift {

enum class Split { train, probe_fit, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::probe_fit: return "probe-fit";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "probe-fit") return Split::probe_fit;
  if (s == "test") return Split::test;
  throw ContractError("unknown split tag '" + std::string(s) + "'");
}

/// Inputs with integer class labels, tagged with the split they belong to.
struct LabelledSet {
  Matrix inputs;                       // n × d_in
  std::vector<std::uint32_t> labels;   // n
  std::uint32_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
};

struct TaskData {
  LabelledSet train;
  LabelledSet probe_fit;
  LabelledSet test;

  const LabelledSet& get(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::probe_fit: return probe_fit;
      case Split::test: return test;
    }
    return train;
  }
  LabelledSet& get(Split s) { return const_cast<LabelledSet&>(std::as_const(*this).get(s)); }
};

struct Task {
  std::uint32_t id = 0;
  std::vector<std::uint32_t> global_classes;  // local label -> global class id
  TaskData data;
};

/// Ordered task sequence with a random class-to-task assignment.
struct TaskSuite {
  std::vector<Task> tasks;
  std::size_t classes_per_task = 0;
  std::vector<std::uint32_t> class_to_task;   // global class -> task id
  std::vector<std::uint32_t> class_to_local;  // global class -> label within its task

  std::size_t input_dim() const {
    return tasks.empty() ? 0 : tasks.front().data.train.inputs.cols();
  }
};

struct SplitCounts {
  std::size_t train = 100;
  std::size_t probe_fit = 50;
  std::size_t test = 100;
};

struct SyntheticSpec {
  std::size_t n_tasks = 10;
  std::size_t classes_per_task = 4;
  std::size_t input_dim = 64;
  SplitCounts per_class;
  double cluster_spread = 1.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::size_t> class_permutation(std::size_t num_classes, std::size_t n_tasks,
                                                  std::uint64_t seed) {
  if (num_classes == 0 || n_tasks == 0 || num_classes % n_tasks != 0)
    throw ConfigError("class count " + std::to_string(num_classes) +
                      " is not divisible into " + std::to_string(n_tasks) + " tasks");
  // A single task keeps the identity order so labels are unchanged.
  if (n_tasks == 1) {
    std::vector<std::size_t> id(num_classes);
    std::iota(id.begin(), id.end(), std::size_t{0});
    return id;
  }
  return Rng(seed).substream(0x7a5c).permutation(num_classes);
}

inline LabelledSet select_task(const LabelledSet& set, const TaskSuite& suite, std::uint32_t task) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (suite.class_to_task[set.labels[i]] == task) rows.push_back(i);
  LabelledSet out;
  out.inputs = gather_rows(set.inputs, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(suite.class_to_local[set.labels[r]]);
  out.num_classes = static_cast<std::uint32_t>(suite.classes_per_task);
  out.split = set.split;
  return out;
}

}  // namespace detail

/// Partitions the classes of up to three splits of one dataset into `n_tasks` tasks. Classes are
/// shuffled with `seed` and cut into contiguous blocks; labels are re-indexed within each task.
inline TaskSuite split_into_tasks(std::span<const LabelledSet> splits, std::size_t n_tasks,
                                  std::uint64_t seed) {
  require(!splits.empty(), "split_into_tasks: no data");
  const std::uint32_t num_classes = splits.front().num_classes;
  for (const auto& s : splits) {
    require(s.num_classes == num_classes, "split_into_tasks: splits disagree on class count");
    for (auto l : s.labels) require(l < num_classes, "split_into_tasks: label out of range");
  }
  const auto perm = detail::class_permutation(num_classes, n_tasks, seed);
  TaskSuite suite;
  suite.classes_per_task = num_classes / n_tasks;
  suite.class_to_task.resize(num_classes);
  suite.class_to_local.resize(num_classes);
  suite.tasks.resize(n_tasks);
  for (std::size_t pos = 0; pos < perm.size(); ++pos) {
    const auto cls = static_cast<std::uint32_t>(perm[pos]);
    const auto task = static_cast<std::uint32_t>(pos / suite.classes_per_task);
    suite.class_to_task[cls] = task;
    suite.class_to_local[cls] = static_cast<std::uint32_t>(pos % suite.classes_per_task);
    suite.tasks[task].global_classes.push_back(cls);
  }
  for (std::uint32_t t = 0; t < n_tasks; ++t) {
    suite.tasks[t].id = t;
    for (const auto& s : splits) suite.tasks[t].data.get(s.split) = detail::select_task(s, suite, t);
  }
  return suite;
}

inline TaskSuite split_into_tasks(const LabelledSet& set, std::size_t n_tasks, std::uint64_t seed) {
  return split_into_tasks(std::span<const LabelledSet>(&set, 1), n_tasks, seed);
}

/// Isotropic Gaussian clusters, one per global class, with means uniform in [-1, 1]^d.
inline TaskSuite gen_synthetic_suite(const SyntheticSpec& spec) {
  require(spec.n_tasks >= 1 && spec.classes_per_task >= 1 && spec.input_dim >= 1,
          "gen_synthetic_suite: counts must be >= 1");
  require(spec.per_class.train >= 1 && spec.per_class.probe_fit >= 1 && spec.per_class.test >= 1,
          "gen_synthetic_suite: per-split sample counts must be >= 1");
  require(spec.cluster_spread > 0.0, "gen_synthetic_suite: cluster_spread must be > 0");

  const std::size_t num_classes = spec.n_tasks * spec.classes_per_task;
  const std::size_t d = spec.input_dim;
  Rng root(spec.seed);
  Rng mean_rng = root.substream(1);
  Matrix means(num_classes, d);
  for (double& v : means.data()) v = mean_rng.uniform(-1.0, 1.0);

  const std::array<std::pair<Split, std::size_t>, 3> layout{{
      {Split::train, spec.per_class.train},
      {Split::probe_fit, spec.per_class.probe_fit},
      {Split::test, spec.per_class.test},
  }};
  std::vector<LabelledSet> sets;
  for (const auto& [split, count] : layout) {
    Rng noise = root.substream(2 + static_cast<std::uint64_t>(split));
    LabelledSet s;
    s.split = split;
    s.num_classes = static_cast<std::uint32_t>(num_classes);
    s.inputs = Matrix(num_classes * count, d);
    s.labels.reserve(num_classes * count);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t k = 0; k < count; ++k, ++row) {
        auto r = s.inputs.row(row);
        for (std::size_t j = 0; j < d; ++j) r[j] = means(c, j) + spec.cluster_spread * noise.normal();
        s.labels.push_back(static_cast<std::uint32_t>(c));
      }
    }
    sets.push_back(std::move(s));
  }
  return split_into_tasks(sets, spec.n_tasks, spec.seed);
}

enum class CifarVariant { cifar10, cifar100_fine };

/// Reads the published CIFAR binary record format. Pixels are scaled to [0, 1].
inline LabelledSet load_cifar_binary(const std::filesystem::path& path, CifarVariant variant,
                                     Split split = Split::train) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR file " + path.string(), 0);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  constexpr std::size_t pixels = 3072;
  const std::size_t label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
  const std::size_t record = pixels + label_bytes;
  const std::uint32_t num_classes = variant == CifarVariant::cifar10 ? 10 : 100;
  const std::size_t n = bytes.size() / record;
  if (bytes.size() % record != 0)
    throw FormatError("truncated CIFAR record in " + path.string(), n * record);

  LabelledSet out;
  out.split = split;
  out.num_classes = num_classes;
  out.inputs = Matrix(n, pixels);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * record;
    if (variant == CifarVariant::cifar100_fine && bytes[base] >= 20)
      throw FormatError("CIFAR-100 coarse label out of range", base);
    const std::uint32_t label = bytes[base + label_bytes - 1];
    if (label >= num_classes)
      throw FormatError("CIFAR label " + std::to_string(label) + " out of range", base + label_bytes - 1);
    out.labels[i] = label;
    auto r = out.inputs.row(i);
    for (std::size_t j = 0; j < pixels; ++j) r[j] = bytes[base + label_bytes + j] / 255.0;
  }
  return out;
}

/// Keeps at most `per_class` samples of each class, in file order.
inline LabelledSet take_per_class(const LabelledSet& set, std::size_t per_class, std::size_t skip = 0) {
  std::vector<std::size_t> seen(set.num_classes, 0);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t k = seen[set.labels[i]]++;
    if (k >= skip && k < skip + per_class) rows.push_back(i);
  }
  LabelledSet out;
  out.inputs = gather_rows(set.inputs, rows);
  for (std::size_t r : rows) out.labels.push_back(set.labels[r]);
  out.num_classes = set.num_classes;
  out.split = set.split;
  return out;
}

}  // namespace repdrift
