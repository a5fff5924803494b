#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fkan/data.hpp"
#include "fkan/model.hpp"

namespace fkan {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Reads each parameter's accumulated grad.
template <typename Scalar>
class AdamW {
 public:
  AdamW(std::vector<Parameter<Scalar>*> params, AdamWOptions options = {});

  /// p <- p - lr*wd*p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
  /// Throws NumericalError naming the first parameter with a non-finite grad.
  void step();

  std::int64_t steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }
  const Tensor<Scalar>& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor<Scalar>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  AdamWOptions options_;
  std::vector<Tensor<Scalar>> m_;
  std::vector<Tensor<Scalar>> v_;
  std::int64_t steps_ = 0;
};

/// counts(truth, predicted).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 10);

  void add(int truth, int predicted);
  void merge(const ConfusionMatrix& other);

  int classes() const { return classes_; }
  std::int64_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
  std::int64_t& at(int truth, int predicted) { return counts_[index(truth, predicted)]; }
  std::int64_t total() const;
  std::int64_t trace() const;

  std::int64_t true_positives(int c) const { return at(c, c); }
  std::int64_t false_positives(int c) const;
  std::int64_t false_negatives(int c) const;
  std::int64_t true_negatives(int c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int truth, int predicted) const;

  int classes_;
  std::vector<std::int64_t> counts_;
};

/// Accuracy plus macro-averaged precision / recall / F1 (0/0 taken as 0),
/// and their micro-averaged counterparts.
struct ClassificationMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double micro_precision = 0;
  double micro_recall = 0;
  double micro_f1 = 0;
  std::vector<double> class_precision;
  std::vector<double> class_recall;
  std::vector<double> class_f1;
};

ClassificationMetrics compute_metrics(const ConfusionMatrix& cm);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double test_accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double seconds = 0;
  double micro_precision = 0;
  double micro_recall = 0;
  double micro_f1 = 0;
};

struct Evaluation {
  ConfusionMatrix confusion;
  ClassificationMetrics metrics;
};

/// Index of the largest logit per row; ties go to the lowest index.
template <typename Scalar>
std::vector<int> predict(const Tensor<Scalar>& logits);

template <typename Scalar>
Evaluation evaluate(Model<Scalar>& model, const Dataset& dataset, Index batch_size = 250);

struct TrainOptions {
  int epochs = 10;
  Index batch_size = 32;
  std::uint64_t seed = 42;
  AdamWOptions optimizer;
  Index eval_batch_size = 250;
  bool record_timing = true;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  ConfusionMatrix confusion;  // from the last evaluation
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Shuffled mini-batch AdamW training; the test split is evaluated after
/// every epoch. Deterministic for a given seed.
template <typename Scalar>
TrainResult train(Model<Scalar>& model, const Dataset& train_set, const Dataset& test_set, const TrainOptions& options,
                  const EpochCallback& on_epoch = {});

/// Permutation seed for one epoch of a run.
std::uint64_t epoch_seed(std::uint64_t seed, int epoch);

}  // namespace fkan
