#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fkan/model.hpp"
#include "fkan/training.hpp"

namespace fkan::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericalFailure = 3 };

enum class Precision { kF32, kF64 };

struct RunConfig {
  std::string command = "train";
  DatasetId dataset = DatasetId::kMnist;
  PoolKind pooling = PoolKind::kFuzzy;
  HeadKind head = HeadKind::kKan;
  int epochs = 10;
  double lr = 0.001;
  double weight_decay = 0.01;
  Index batch = 32;
  std::uint64_t seed = 42;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "runs";
  Precision precision = Precision::kF64;
  ResizeMode resize = ResizeMode::kPad;
  bool kan_input_tanh = false;
  Index train_limit = 0;  // 0 keeps the whole split
  Index test_limit = 0;
  bool timing = true;
  bool verbose = false;
  std::string check = "grad";

  ModelConfig model_config() const;
  TrainOptions train_options() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

struct RunSummary {
  std::vector<EpochMetrics> epochs;
  ConfusionMatrix confusion;
  Index parameter_count = 0;
};

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& epochs);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);

/// Trains one configuration and writes metrics.csv, confusion_matrix.csv,
/// model.fkan and config.json into out_dir.
RunSummary run_training(const RunConfig& config, std::ostream& log);

/// The six pooling x head combinations in table order.
std::vector<std::pair<HeadKind, PoolKind>> matrix_order();

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_matrix(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_check(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv into a resolved RunConfig (flags override --config values).
/// Returns the exit code to use when parsing ends the run (help or error).
std::optional<int> parse_arguments(int argc, const char* const* argv, RunConfig& config, std::ostream& out,
                                   std::ostream& err);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fkan::cli
