#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "repdrift/config.hpp"
#include "repdrift/experiment.hpp"
#include "repdrift/geometry.hpp"
#include "repdrift/plot.hpp"
#include "repdrift/snapshot_io.hpp"

namespace fs = std::filesystem;
using namespace repdrift;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;

int cmd_run(const std::string& config_path, const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(config_path);
  const fs::path dir = opt.output_dir.empty() ? cfg.output.dir : opt.output_dir;
  const auto result = run_experiment(cfg, opt);
  std::cout << "wrote " << result.records.size() << " records to " << (dir / "records.csv").string() << "\n";
  for (const auto& r : result.summary)
    if (r.quantity == "performance_loss" && r.metric == "continual")
      std::printf("h_L=%zu continual performance loss %.4f +- %.4f (n=%zu)\n", r.width, r.stats.mean,
                  r.stats.stderr_, r.stats.n);
  return 0;
}

int cmd_plot(const fs::path& dir) {
  const auto records = read_records_csv(dir / "records.csv");
  if (records.empty()) throw FormatError("records.csv has no data rows", 0);
  const auto summary = summarize(records);
  std::vector<MdsRow> mds;
  if (fs::exists(dir / "mds.csv")) mds = read_mds_csv(dir / "mds.csv");
  write_text(dir / "trajectories.svg", plot::trajectories_svg(summary));
  write_text(dir / "mds.svg", plot::mds_svg(mds));
  write_text(dir / "onset.svg", plot::onset_svg(summary));
  write_text(dir / "loss.svg", plot::loss_svg(summary));
  std::cout << "wrote trajectories.svg, mds.svg, onset.svg, loss.svg to " << dir.string() << "\n";
  return 0;
}

int cmd_align(const fs::path& src, const fs::path& dst, bool rotation_only, bool means, const std::string& out) {
  const auto a = read_snapshot(src);
  const auto b = read_snapshot(dst);
  const std::size_t classes = [&] {
    std::uint32_t m = 0;
    for (auto l : a.labels) m = std::max(m, l + 1);
    for (auto l : b.labels) m = std::max(m, l + 1);
    return static_cast<std::size_t>(m);
  }();
  const ProcrustesFit fit = means ? fit_similarity_transform(class_means(a.h, a.labels, classes),
                                                             class_means(b.h, b.labels, classes), !rotation_only)
                                  : fit_similarity_transform(a.h, b.h, !rotation_only);
  std::printf("scale %.17g\n", fit.transform.scale);
  std::printf("disparity %.17g\n", fit.disparity);
  std::printf("determinant %.17g\n", determinant(fit.transform.rotation));
  std::printf("translation");
  for (double v : fit.transform.translation) std::printf(" %.17g", v);
  std::printf("\n");
  if (!out.empty()) {
    write_snapshot(out, apply_transform(fit.transform, a.h), a.labels);
    std::printf("aligned source written to %s\n", out.c_str());
  }
  return 0;
}

int cmd_probe(const fs::path& fit_path, const std::string& test_path, const ProbeConfig& cfg) {
  const auto fit = read_snapshot(fit_path);
  DecodedSnapshot train, test;
  if (!test_path.empty()) {
    train = fit;
    test = read_snapshot(test_path);
  } else {
    // Even rows fit the probe, odd rows score it.
    std::vector<std::size_t> even, odd;
    for (std::size_t i = 0; i < fit.h.rows(); ++i) (i % 2 ? odd : even).push_back(i);
    if (even.empty() || odd.empty()) throw ContractError("probe: snapshot needs at least two rows");
    train = {gather_rows(fit.h, even), {}};
    test = {gather_rows(fit.h, odd), {}};
    for (auto i : even) train.labels.push_back(fit.labels[i]);
    for (auto i : odd) test.labels.push_back(fit.labels[i]);
  }
  std::uint32_t classes = 0;
  for (auto l : train.labels) classes = std::max(classes, l + 1);
  for (auto l : test.labels) classes = std::max(classes, l + 1);
  const HeadParams probe = fit_linear_probe(train.h, train.labels, classes, cfg);
  std::printf("fit_rows %zu\ntest_rows %zu\naccuracy %.17g\n", train.h.rows(), test.h.rows(),
              eval_head(probe, test.h, test.labels));
  return 0;
}

int cmd_mds(const fs::path& path, std::size_t k, bool means) {
  const auto snap = read_snapshot(path);
  std::vector<std::uint32_t> labels = snap.labels;
  Matrix points = snap.h;
  if (means) {
    std::uint32_t classes = 0;
    for (auto l : snap.labels) classes = std::max(classes, l + 1);
    points = class_means(snap.h, snap.labels, classes);
    labels.resize(classes);
    for (std::uint32_t c = 0; c < classes; ++c) labels[c] = c;
  }
  const Embedding emb = classical_mds(points, k);
  std::cout << "index,label";
  for (std::size_t c = 0; c < k; ++c) std::cout << ",x" << c + 1;
  std::cout << "\n";
  for (std::size_t i = 0; i < emb.coords.rows(); ++i) {
    std::cout << i << "," << labels[i];
    for (std::size_t c = 0; c < k; ++c) std::cout << "," << format_double(emb.coords(i, c));
    std::cout << "\n";
  }
  if (emb.negative_clamped || emb.missing_dims)
    std::cerr << "note: " << emb.negative_clamped << " negative eigenvalues clamped, " << emb.missing_dims
              << " requested dimensions without positive eigenvalue\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representational drift analysis for task-incremental learning"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  std::uint64_t seed_offset = 0;
  app.add_option("--threads", threads, "worker threads for grid cells")->check(CLI::PositiveNumber);
  app.add_option("--seed-offset", seed_offset, "added to every seed of the grid");

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "run the experiment grid of a config file");
  run->add_option("config", config_path)->required();
  run->add_option("--out", out_dir, "output directory (overrides [output] dir)");

  std::string plot_dir;
  auto* plot = app.add_subcommand("plot", "render SVG figures from a run directory");
  plot->add_option("dir", plot_dir)->required();

  std::string src, dst, aligned_out;
  bool rotation_only = false, align_means = false;
  auto* align = app.add_subcommand("align", "fit a similarity transform from one snapshot onto another");
  align->add_option("src", src)->required();
  align->add_option("dst", dst)->required();
  align->add_flag("--no-reflection", rotation_only, "restrict to proper rotations");
  align->add_flag("--means", align_means, "fit on class means instead of samples");
  align->add_option("--out", aligned_out, "write the aligned source snapshot");

  std::string snap_path, test_path;
  ProbeConfig probe_cfg;
  auto* probe = app.add_subcommand("probe", "fit and score a linear probe on a snapshot");
  probe->add_option("snap", snap_path)->required();
  probe->add_option("--test", test_path, "score on this snapshot instead of the odd rows");
  probe->add_option("--l2", probe_cfg.sgd.l2, "probe weight decay");

  std::string mds_path;
  std::size_t k = 2;
  bool mds_means = false;
  auto* mds = app.add_subcommand("mds", "classical MDS embedding of snapshot rows as CSV");
  mds->add_option("snap", mds_path)->required();
  mds->add_option("--k", k, "embedding dimension")->check(CLI::PositiveNumber);
  mds->add_flag("--means", mds_means, "embed class means instead of rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInput;
  }

  try {
    if (*run) return cmd_run(config_path, RunOptions{threads, seed_offset, out_dir});
    if (*plot) return cmd_plot(plot_dir);
    if (*align) return cmd_align(src, dst, rotation_only, align_means, aligned_out);
    if (*probe) return cmd_probe(snap_path, test_path, probe_cfg);
    if (*mds) return cmd_mds(mds_path, k, mds_means);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
