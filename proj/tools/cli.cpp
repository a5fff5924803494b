#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "fkan/diagnostics.hpp"

namespace fkan::cli {

namespace {

const char* to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

const char* to_string(ResizeMode m) { return m == ResizeMode::kPad ? "pad" : "bilinear"; }

ResizeMode parse_resize(const std::string& s) {
  if (s == "pad") return ResizeMode::kPad;
  if (s == "bilinear") return ResizeMode::kBilinear;
  throw ConfigError("unknown resize mode '" + s + "' (expected pad or bilinear)");
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("FUZZY_KAN_DATA"); env != nullptr && *env != '\0') return env;
  return "data";
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.dataset = dataset;
  m.pooling.kind = pooling;
  m.head = head;
  m.kan_input_tanh = kan_input_tanh;
  m.seed = seed;
  return m;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.epochs = epochs;
  t.batch_size = batch;
  t.seed = seed;
  t.optimizer.lr = lr;
  t.optimizer.weight_decay = weight_decay;
  t.record_timing = timing;
  return t;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"command", c.command},
                     {"dataset", fkan::to_string(c.dataset)},
                     {"pooling", fkan::to_string(c.pooling)},
                     {"head", fkan::to_string(c.head)},
                     {"epochs", c.epochs},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"batch", c.batch},
                     {"seed", c.seed},
                     {"data_dir", c.data_dir.string()},
                     {"out_dir", c.out_dir.string()},
                     {"precision", to_string(c.precision)},
                     {"resize", to_string(c.resize)},
                     {"kan_input_tanh", c.kan_input_tanh},
                     {"train_limit", c.train_limit},
                     {"test_limit", c.test_limit},
                     {"timing", c.timing}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  RunConfig d;
  c.command = j.value("command", d.command);
  c.dataset = parse_dataset_id(j.value("dataset", std::string(fkan::to_string(d.dataset))));
  c.pooling = parse_pool_kind(j.value("pooling", std::string(fkan::to_string(d.pooling))));
  c.head = parse_head_kind(j.value("head", std::string(fkan::to_string(d.head))));
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.batch = j.value("batch", d.batch);
  c.seed = j.value("seed", d.seed);
  c.data_dir = j.value("data_dir", d.data_dir.string());
  c.out_dir = j.value("out_dir", d.out_dir.string());
  c.precision = parse_precision(j.value("precision", std::string(to_string(d.precision))));
  c.resize = parse_resize(j.value("resize", std::string(to_string(d.resize))));
  c.kan_input_tanh = j.value("kan_input_tanh", d.kan_input_tanh);
  c.train_limit = j.value("train_limit", d.train_limit);
  c.test_limit = j.value("test_limit", d.test_limit);
  c.timing = j.value("timing", d.timing);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write " + path.string());
  out << nlohmann::json(config).dump(2) << "\n";
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& epochs) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write " + path.string());
  out << "epoch,train_loss,test_accuracy,precision,recall,f1,seconds\n";
  out << std::setprecision(10);
  for (const EpochMetrics& m : epochs) {
    out << m.epoch << ',' << m.train_loss << ',' << m.test_accuracy << ',' << m.precision << ',' << m.recall << ','
        << m.f1 << ',' << std::fixed << std::setprecision(3) << m.seconds << std::defaultfloat << std::setprecision(10)
        << '\n';
  }
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write " + path.string());
  for (int t = 0; t < cm.classes(); ++t) {
    for (int p = 0; p < cm.classes(); ++p) out << (p ? "," : "") << cm.at(t, p);
    out << '\n';
  }
}

namespace {

template <typename Scalar>
RunSummary train_with(const RunConfig& config, const Dataset& train_set, const Dataset& test_set, std::ostream& log) {
  Model<Scalar> model(config.model_config());
  log << "model " << fkan::to_string(config.head) << "+" << fkan::to_string(config.pooling) << " on "
      << fkan::to_string(config.dataset) << ": " << model.parameter_count() << " parameters, " << train_set.size()
      << " train / " << test_set.size() << " test samples\n";
  const int total = config.epochs;
  auto on_epoch = [&](const EpochMetrics& m) {
    log << "epoch " << m.epoch << "/" << total << "  loss " << std::fixed << std::setprecision(4) << m.train_loss
        << "  acc " << m.test_accuracy;
    if (config.verbose) {
      log << "  macro P/R/F1 " << m.precision << "/" << m.recall << "/" << m.f1 << "  micro P/R/F1 "
          << m.micro_precision << "/" << m.micro_recall << "/" << m.micro_f1;
    }
    if (config.timing) log << "  " << std::setprecision(1) << m.seconds << "s";
    log << std::defaultfloat << std::setprecision(6) << "\n";
  };
  TrainResult result = train(model, train_set, test_set, config.train_options(), on_epoch);
  std::filesystem::create_directories(config.out_dir);
  save_checkpoint(model, config.out_dir / "model.fkan");
  return RunSummary{std::move(result.epochs), std::move(result.confusion), model.parameter_count()};
}

}  // namespace

RunSummary run_training(const RunConfig& config, std::ostream& log) {
  if (config.epochs < 0) throw ConfigError("--epochs must be >= 0");
  if (config.batch < 1) throw ConfigError("--batch must be >= 1");
  config.model_config().validate();
  Dataset train_set = load_dataset(config.data_dir, config.dataset, Split::kTrain, config.resize);
  Dataset test_set = load_dataset(config.data_dir, config.dataset, Split::kTest, config.resize);
  if (config.train_limit > 0) train_set = train_set.head(config.train_limit);
  if (config.test_limit > 0) test_set = test_set.head(config.test_limit);

  std::filesystem::create_directories(config.out_dir);
  save_run_config(config, config.out_dir / "config.json");
  RunSummary summary = config.precision == Precision::kF32 ? train_with<float>(config, train_set, test_set, log)
                                                           : train_with<double>(config, train_set, test_set, log);
  write_metrics_csv(config.out_dir / "metrics.csv", summary.epochs);
  write_confusion_csv(config.out_dir / "confusion_matrix.csv", summary.confusion);
  return summary;
}

std::vector<std::pair<HeadKind, PoolKind>> matrix_order() {
  std::vector<std::pair<HeadKind, PoolKind>> out;
  for (HeadKind h : {HeadKind::kMlp, HeadKind::kKan})
    for (PoolKind p : {PoolKind::kAverage, PoolKind::kMax, PoolKind::kFuzzy}) out.emplace_back(h, p);
  return out;
}

namespace {

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const RunSummary s = run_training(config, out);
        if (s.epochs.empty()) {
          out << "no epochs run; artifacts written to " << config.out_dir.string() << "\n";
        } else {
          out << "final test accuracy " << std::fixed << std::setprecision(4) << s.epochs.back().test_accuracy
              << std::defaultfloat << "\n";
        }
        return static_cast<int>(kOk);
      },
      err);
}

int cmd_matrix(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        std::filesystem::create_directories(config.out_dir);
        std::ofstream csv(config.out_dir / "matrix.csv");
        if (!csv) throw DataError(DataError::Kind::kMissingFile, "cannot write " + (config.out_dir / "matrix.csv").string());
        csv << "dataset,head,pooling,accuracy,precision,recall,f1,parameters\n" << std::setprecision(10);
        for (auto [head, pooling] : matrix_order()) {
          RunConfig run = config;
          run.command = "train";
          run.head = head;
          run.pooling = pooling;
          run.out_dir = config.out_dir / (std::string(fkan::to_string(head)) + "-" + fkan::to_string(pooling));
          const RunSummary s = run_training(run, out);
          csv << fkan::to_string(config.dataset) << ',' << fkan::to_string(head) << ',' << fkan::to_string(pooling);
          if (s.epochs.empty()) {
            csv << ",,,,";
          } else {
            const EpochMetrics& m = s.epochs.back();
            csv << ',' << m.test_accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1;
          }
          csv << ',' << s.parameter_count << '\n';
          csv.flush();
        }
        out << "wrote " << (config.out_dir / "matrix.csv").string() << "\n";
        return static_cast<int>(kOk);
      },
      err);
}

int cmd_check(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        diagnostics::SuiteReport report;
        if (config.check == "grad") {
          report = diagnostics::run_gradient_suite();
        } else if (config.check == "pool-oracle") {
          report = diagnostics::run_pool_oracle_suite();
        } else if (config.check == "spline") {
          report = diagnostics::run_spline_suite();
        } else {
          throw ConfigError("unknown check '" + config.check + "' (expected grad, pool-oracle or spline)");
        }
        for (const std::string& line : report.lines) out << line << "\n";
        out << report.name << ": " << (report.passed ? "pass" : "FAIL") << ", worst error " << std::scientific
            << std::setprecision(3) << report.worst << std::defaultfloat << "\n";
        return static_cast<int>(report.passed ? kOk : kNumericalFailure);
      },
      err);
}

std::optional<int> parse_arguments(int argc, const char* const* argv, RunConfig& config, std::ostream& out,
                                   std::ostream& err) {
  CLI::App app{"LeNet with fuzzy pooling and KAN heads"};
  app.require_subcommand(1);

  RunConfig flags;
  std::string dataset = fkan::to_string(flags.dataset), pooling = fkan::to_string(flags.pooling),
              head = fkan::to_string(flags.head), precision = to_string(flags.precision),
              resize = to_string(flags.resize), data_dir, out_dir = flags.out_dir.string();
  std::filesystem::path config_path;
  bool no_timing = false;

  struct Binding {
    CLI::Option* option;
    std::function<void(RunConfig&)> apply;
  };
  std::vector<Binding> bindings;

  auto add_run_options = [&](CLI::App* sub, bool with_model) {
    auto bind = [&](CLI::Option* o, std::function<void(RunConfig&)> apply) { bindings.push_back({o, std::move(apply)}); };
    bind(sub->add_option("--dataset", dataset, "mnist, fashion-mnist or cifar10")
             ->check(CLI::IsMember({"mnist", "fashion-mnist", "cifar10"})),
         [&](RunConfig& c) { c.dataset = parse_dataset_id(dataset); });
    if (with_model) {
      bind(sub->add_option("--pooling", pooling, "max, avg or fuzzy")->check(CLI::IsMember({"max", "avg", "average", "fuzzy"})),
           [&](RunConfig& c) { c.pooling = parse_pool_kind(pooling); });
      bind(sub->add_option("--head", head, "mlp or kan")->check(CLI::IsMember({"mlp", "kan"})),
           [&](RunConfig& c) { c.head = parse_head_kind(head); });
    }
    bind(sub->add_option("--epochs", flags.epochs, "training epochs")->check(CLI::NonNegativeNumber),
         [&](RunConfig& c) { c.epochs = flags.epochs; });
    bind(sub->add_option("--lr", flags.lr, "AdamW learning rate")->check(CLI::PositiveNumber),
         [&](RunConfig& c) { c.lr = flags.lr; });
    bind(sub->add_option("--weight-decay", flags.weight_decay, "AdamW decoupled weight decay")
             ->check(CLI::NonNegativeNumber),
         [&](RunConfig& c) { c.weight_decay = flags.weight_decay; });
    bind(sub->add_option("--batch", flags.batch, "mini-batch size")->check(CLI::PositiveNumber),
         [&](RunConfig& c) { c.batch = flags.batch; });
    bind(sub->add_option("--seed", flags.seed, "seed for init and shuffling"), [&](RunConfig& c) { c.seed = flags.seed; });
    bind(sub->add_option("--data-dir", data_dir, "dataset root (default $FUZZY_KAN_DATA)"),
         [&](RunConfig& c) { c.data_dir = data_dir; });
    bind(sub->add_option("--out-dir", out_dir, "artifact directory"), [&](RunConfig& c) { c.out_dir = out_dir; });
    bind(sub->add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"})),
         [&](RunConfig& c) { c.precision = parse_precision(precision); });
    bind(sub->add_option("--resize", resize, "28x28 to 32x32: pad or bilinear")
             ->check(CLI::IsMember({"pad", "bilinear"})),
         [&](RunConfig& c) { c.resize = parse_resize(resize); });
    bind(sub->add_flag("--kan-input-tanh", flags.kan_input_tanh, "squash KAN head inputs with tanh"),
         [&](RunConfig& c) { c.kan_input_tanh = true; });
    bind(sub->add_option("--train-limit", flags.train_limit, "use the first N training samples")
             ->check(CLI::NonNegativeNumber),
         [&](RunConfig& c) { c.train_limit = flags.train_limit; });
    bind(sub->add_option("--test-limit", flags.test_limit, "use the first N test samples")->check(CLI::NonNegativeNumber),
         [&](RunConfig& c) { c.test_limit = flags.test_limit; });
    bind(sub->add_flag("--no-timing", no_timing, "write 0 in the seconds column"), [&](RunConfig& c) { c.timing = false; });
    sub->add_flag("-v,--verbose", flags.verbose, "per-epoch macro and micro metrics");
    sub->add_option("--config", config_path, "config.json from an earlier run; flags override it")
        ->check(CLI::ExistingFile);
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train one pooling/head configuration");
  add_run_options(train_cmd, true);
  CLI::App* matrix_cmd = app.add_subcommand("matrix", "train all six pooling/head configurations");
  add_run_options(matrix_cmd, false);
  CLI::App* check_cmd = app.add_subcommand("check", "run a verification suite");
  check_cmd->add_option("kind", flags.check, "grad, pool-oracle or spline")
      ->required()
      ->check(CLI::IsMember({"grad", "pool-oracle", "spline"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    RunConfig resolved = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (config_path.empty()) resolved.data_dir = default_data_dir();
    for (const Binding& b : bindings)
      if (b.option->count() > 0) b.apply(resolved);
    resolved.verbose = flags.verbose;
    resolved.check = flags.check;
    if (train_cmd->parsed()) resolved.command = "train";
    if (matrix_cmd->parsed()) resolved.command = "matrix";
    if (check_cmd->parsed()) resolved.command = "check";
    config = resolved;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return std::nullopt;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig config;
  if (auto code = parse_arguments(argc, argv, config, out, err)) return *code;
  if (config.command == "matrix") return cmd_matrix(config, out, err);
  if (config.command == "check") return cmd_check(config, out, err);
  return cmd_train(config, out, err);
}

}  // namespace fkan::cli
