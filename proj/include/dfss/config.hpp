#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfss/corpus.hpp"
#include "dfss/distiller.hpp"
#include "dfss/network.hpp"
#include "dfss/sampler.hpp"

namespace dfss {

// Everything an experiment run needs apart from the run seed. Training seeds
// inside `teacher`/`student` are ignored; they are derived from the run seed.
struct ExperimentConfig {
  CorpusConfig corpus;
  std::size_t original_train = 200;
  std::size_t original_test = 200;
  std::size_t openworld_size = 2000;
  std::array<double, 3> mix{0.3, 0.3, 0.4};
  std::size_t epsilon = 200;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  DistanceOptions distance;
  TrainConfig teacher;
  TrainConfig student;
  // Data-driven KD reference student (labeled original data, lambda > 0).
  bool kd_reference = true;
  std::vector<Strategy> strategies{Strategy::ads, Strategy::random, Strategy::confidence};
  std::vector<DistillStrategy> distill_modes{DistillStrategy::vanilla, DistillStrategy::wdd,
                                             DistillStrategy::wdpd};

  ExperimentConfig();

  NetworkSpec teacher_spec() const;
  NetworkSpec student_spec() const;
};

// Canonical JSON text (stable field order); parse accepts any subset of the
// fields and fills the rest with defaults. Unknown keys are rejected.
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate_config(const ExperimentConfig& config);

// SHA-256 hex of config_to_json.
std::string config_hash(const ExperimentConfig& config);

}  // namespace dfss
