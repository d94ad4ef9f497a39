#pragma once

// Run configuration for the command-line tool. Files are JSON objects whose
// keys mirror to_json(RunConfig{}); any subset may be given and unknown keys
// are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ptt/bench.hpp"
#include "ptt/encoder.hpp"
#include "ptt/point_tree.hpp"
#include "ptt/registration.hpp"

namespace ptt {

struct SyntheticConfig {
  std::size_t points = 512;
  double max_angle_deg = 45.0;
  double max_translation = 0.5;  // per axis
  double jitter_sigma = 0.0;
  double jitter_clip = 0.05;

  void validate() const;
};

struct RunConfig {
  std::size_t model_dim = 264;
  std::size_t heads = 8;
  std::size_t encoder_layers = 6;
  bool share_tree_params = true;
  double pe_base = kDefaultPeBase;
  std::uint64_t seed = 1;

  TreeConfig tree;
  LossConfig loss;
  MetricThresholds thresholds;
  BenchConfig bench;
  SyntheticConfig synthetic;

  EncoderConfig encoder() const;
  /// Throws Config on any violated invariant of this or an embedded config.
  void validate() const;
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace ptt
