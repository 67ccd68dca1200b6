#pragma once

#include <string>
#include <vector>

#include "tailspin/config.hpp"
#include "tailspin/data.hpp"
#include "tailspin/pipeline.hpp"

namespace tailspin {

// Settings with every "auto" key resolved for the configured method.
ExperimentSettings settings_from_config(const ExperimentConfig& config, std::uint32_t num_classes);

struct DataSplits {
  Dataset train;
  Dataset test;
};

// Training split from data.train_manifest as stored, or generated and then
// corrupted (imbalance, then noise). Test split likewise, generated balanced.
DataSplits load_datasets(const ExperimentConfig& config);

// Seed behind data generation and corruption: data.seed, or run.seed when -1.
std::uint64_t data_seed(const ExperimentConfig& config);

const std::vector<std::string>& command_names();

// Executes one subcommand, writing its outputs under run.output_dir, and
// returns a human-readable report. Throws tailspin::Error subclasses.
std::string run_command(const std::string& name, const ExperimentConfig& config);

}  // namespace tailspin
