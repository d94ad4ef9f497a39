// ptt: point tree transformer command-line tool.
//
// Exit codes: 0 success, 1 internal error or failed selftest, 2 usage or
// config error, 3 data or weight-file error, 4 numerical error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ptt/bench.hpp"
#include "ptt/cloud_io.hpp"
#include "ptt/config.hpp"
#include "ptt/error.hpp"
#include "ptt/pipeline.hpp"
#include "ptt/weights_io.hpp"

namespace {

int exit_code(ptt::ErrorKind kind) {
  switch (kind) {
    case ptt::ErrorKind::Config:
      return 2;
    case ptt::ErrorKind::Data:
    case ptt::ErrorKind::Load:
      return 3;
    case ptt::ErrorKind::Numerical:
    case ptt::ErrorKind::DegenerateGeometry:
    case ptt::ErrorKind::EmptyAttentionRow:
      return 4;
    case ptt::ErrorKind::Contract:
      break;
  }
  return 1;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) ptt::fail(ptt::ErrorKind::Data, "cannot write " + out_path);
  out << text;
  if (!out) ptt::fail(ptt::ErrorKind::Data, "failed writing " + out_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point tree attention: trees, sparse attention, registration and work-scaling benchmarks"};
  app.require_subcommand(0, 1);

  std::string config_path, out_path, format = "json";
  std::optional<std::uint64_t> seed;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed overriding the configuration");
  app.add_option("--out", out_path, "Write the report here instead of standard output");
  app.add_option("--format", format, "Report format for bench")->check(CLI::IsMember({"json", "csv"}));
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  auto* reg = app.add_subcommand("register", "Register a source cloud onto a target cloud");
  std::string src_path, dst_path, gt_path, weights_path;
  bool oracle = false;
  reg->add_option("source", src_path, "Source cloud (.xyz or .ply)")->required()->check(CLI::ExistingFile);
  reg->add_option("target", dst_path, "Target cloud (.xyz or .ply)")->required()->check(CLI::ExistingFile);
  reg->add_option("--gt", gt_path, "Ground-truth 4x4 transform file")->check(CLI::ExistingFile);
  reg->add_option("--weights", weights_path, "Model weight file")->check(CLI::ExistingFile);
  reg->add_flag("--oracle", oracle, "Replace the decoder with ground-truth correspondences (needs --gt)");

  auto* bench = app.add_subcommand("bench", "Attended-key scaling sweep, dense against PTA");
  std::vector<std::size_t> sizes;
  bool timing = false, parallel = false;
  bench->add_option("--sizes", sizes, "Cloud sizes (ascending, at least 4)")->delimiter(',');
  bench->add_flag("--timing", timing, "Record wall-clock seconds (makes the report nondeterministic)");
  bench->add_flag("--parallel", parallel, "Run trials concurrently (ignored with --timing)");

  auto* tree = app.add_subcommand("tree", "Dump the point tree of a cloud as JSON");
  std::string tree_path;
  tree->add_option("cloud", tree_path, "Cloud file")->required()->check(CLI::ExistingFile);

  auto* selftest = app.add_subcommand("selftest", "Run the built-in consistency checks");
  bool inject_fault = false;
  selftest->add_flag("--inject-region-fault", inject_fault, "Corrupt one attended region before checking soundness");

  auto* gen = app.add_subcommand("gen", "Write a synthetic source/target pair and its transform");
  std::string gen_dir;
  std::optional<std::size_t> gen_points;
  std::optional<double> gen_sigma;
  gen->add_option("dir", gen_dir, "Output directory")->required();
  gen->add_option("--points", gen_points, "Points per cloud");
  gen->add_option("--sigma", gen_sigma, "Jitter standard deviation (0 disables)");

  auto* init = app.add_subcommand("init-weights", "Write seeded random model weights");
  std::string init_path;
  init->add_option("path", init_path, "Output weight file")->required();

  for (CLI::App* sub : {reg, bench, tree, selftest, gen, init}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ptt::RunConfig cfg = config_path.empty() ? ptt::RunConfig{} : ptt::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!sizes.empty()) cfg.bench.sizes = sizes;
    if (timing) cfg.bench.timing = true;
    if (parallel) cfg.bench.parallel = true;
    if (gen_points) cfg.synthetic.points = *gen_points;
    if (gen_sigma) cfg.synthetic.jitter_sigma = *gen_sigma;
    cfg.validate();

    if (print_config) {
      emit(ptt::config_to_json(cfg), out_path);
      return 0;
    }

    if (*reg) {
      const ptt::PointCloud source = ptt::load_cloud(src_path);
      const ptt::PointCloud target = ptt::load_cloud(dst_path);
      ptt::RegisterOptions options;
      options.oracle = oracle;
      if (!gt_path.empty()) options.gt = ptt::load_transform(gt_path);
      if (!weights_path.empty()) options.weights = weights_path;
      const ptt::RegisterResult result = ptt::register_pair(source, target, cfg, options);
      emit(ptt::register_report_json(source, target, cfg, options, result), out_path);
    } else if (*bench) {
      const ptt::BenchReport report = ptt::run_sweep(cfg.bench, {cfg.model_dim, cfg.heads}, cfg.tree, cfg.seed);
      emit(format == "csv" ? ptt::bench_report_csv(report) : ptt::bench_report_json(report), out_path);
    } else if (*tree) {
      emit(ptt::tree_report_json(ptt::load_cloud(tree_path), cfg.tree), out_path);
    } else if (*selftest) {
      const auto checks = ptt::run_selftest(inject_fault);
      std::cout << ptt::selftest_table(checks);
      const std::string json = ptt::selftest_json(checks);
      if (out_path.empty())
        std::cout << json;
      else
        emit(json, out_path);
      for (const auto& c : checks)
        if (!c.passed) return 1;
    } else if (*gen) {
      const ptt::SyntheticPair pair = ptt::make_synthetic_pair(cfg.synthetic, cfg.seed);
      const std::filesystem::path dir(gen_dir);
      std::filesystem::create_directories(dir);
      ptt::save_cloud(pair.source, dir / "source.xyz");
      ptt::save_cloud(pair.target, dir / "target.xyz");
      ptt::save_transform(pair.gt, dir / "gt.txt");
      nlohmann::ordered_json j;
      j["command"] = "gen";
      j["seed"] = cfg.seed;
      j["points"] = cfg.synthetic.points;
      j["jitter_sigma"] = cfg.synthetic.jitter_sigma;
      j["source"] = (dir / "source.xyz").string();
      j["target"] = (dir / "target.xyz").string();
      j["gt"] = (dir / "gt.txt").string();
      emit(j.dump(2) + "\n", out_path);
    } else if (*init) {
      ptt::save_bundle(ptt::to_bundle(ptt::ModelWeights::random(cfg, cfg.seed)), init_path);
    } else {
      std::cout << app.help();
    }
    return 0;
  } catch (const ptt::Error& e) {
    std::cerr << "ptt: " << ptt::to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "ptt: " << e.what() << '\n';
    return 1;
  }
}
