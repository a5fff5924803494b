#include "fkan/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace fkan {

template <typename Scalar>
AdamW<Scalar>::AdamW(std::vector<Parameter<Scalar>*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Parameter<Scalar>* p : params_) {
    m_.push_back(Tensor<Scalar>::zeros(p->value.shape()));
    v_.push_back(Tensor<Scalar>::zeros(p->value.shape()));
  }
}

template <typename Scalar>
void AdamW<Scalar>::step() {
  for (const Parameter<Scalar>* p : params_) {
    if (p->grad.shape() != p->value.shape()) throw ShapeError("AdamW: gradient shape mismatch for " + p->name);
    if (!p->grad.all_finite()) throw NumericalError("AdamW: non-finite gradient in parameter '" + p->name + "'");
  }
  ++steps_;
  const Scalar lr = static_cast<Scalar>(options_.lr);
  const Scalar b1 = static_cast<Scalar>(options_.beta1);
  const Scalar b2 = static_cast<Scalar>(options_.beta2);
  const Scalar eps = static_cast<Scalar>(options_.eps);
  const Scalar decay = Scalar(1) - lr * static_cast<Scalar>(options_.weight_decay);
  const Scalar bias1 = Scalar(1) - static_cast<Scalar>(std::pow(options_.beta1, static_cast<double>(steps_)));
  const Scalar bias2 = Scalar(1) - static_cast<Scalar>(std::pow(options_.beta2, static_cast<double>(steps_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i]->value.array();
    const auto& g = params_[i]->grad.array();
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    p *= decay;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p -= lr * (m / bias1) / ((v / bias2).sqrt() + eps);
  }
}

template class AdamW<float>;
template class AdamW<double>;

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes), counts_(static_cast<std::size_t>(classes * classes)) {
  if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

std::size_t ConfusionMatrix::index(int truth, int predicted) const {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw ShapeError("confusion matrix index out of range");
  }
  return static_cast<std::size_t>(truth * classes_ + predicted);
}

void ConfusionMatrix::add(int truth, int predicted) { ++counts_[index(truth, predicted)]; }

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

std::int64_t ConfusionMatrix::false_positives(int c) const {
  std::int64_t t = 0;
  for (int r = 0; r < classes_; ++r)
    if (r != c) t += at(r, c);
  return t;
}

std::int64_t ConfusionMatrix::false_negatives(int c) const {
  std::int64_t t = 0;
  for (int p = 0; p < classes_; ++p)
    if (p != c) t += at(c, p);
  return t;
}

std::int64_t ConfusionMatrix::true_negatives(int c) const {
  return total() - true_positives(c) - false_positives(c) - false_negatives(c);
}

namespace {

double ratio(std::int64_t num, std::int64_t den) { return den == 0 ? 0.0 : double(num) / double(den); }

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

ClassificationMetrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ConfigError("cannot compute metrics over an empty evaluation");
  ClassificationMetrics out;
  const int k = cm.classes();
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (int c = 0; c < k; ++c) {
    const double p = ratio(cm.true_positives(c), cm.true_positives(c) + cm.false_positives(c));
    const double r = ratio(cm.true_positives(c), cm.true_positives(c) + cm.false_negatives(c));
    out.class_precision.push_back(p);
    out.class_recall.push_back(r);
    out.class_f1.push_back(harmonic(p, r));
    tp += cm.true_positives(c);
    fp += cm.false_positives(c);
    fn += cm.false_negatives(c);
  }
  double sp = 0, sr = 0, sf = 0;
  for (int c = 0; c < k; ++c) {
    sp += out.class_precision[c];
    sr += out.class_recall[c];
    sf += out.class_f1[c];
  }
  out.accuracy = ratio(cm.trace(), cm.total());
  out.precision = sp / k;
  out.recall = sr / k;
  out.f1 = sf / k;
  out.micro_precision = ratio(tp, tp + fp);
  out.micro_recall = ratio(tp, tp + fn);
  out.micro_f1 = harmonic(out.micro_precision, out.micro_recall);
  return out;
}

template <typename Scalar>
std::vector<int> predict(const Tensor<Scalar>& logits) {
  if (logits.rank() != 2) throw ShapeError("predict: expected [N, K] logits");
  std::vector<int> out(static_cast<std::size_t>(logits.dim(0)));
  const Index k = logits.dim(1);
  for (Index n = 0; n < logits.dim(0); ++n) {
    Index best = 0;
    for (Index c = 1; c < k; ++c)
      if (logits[n * k + c] > logits[n * k + best]) best = c;
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

template <typename Scalar>
Evaluation evaluate(Model<Scalar>& model, const Dataset& dataset, Index batch_size) {
  if (dataset.size() == 0) throw ConfigError("evaluate: empty dataset");
  ConfusionMatrix cm(static_cast<int>(model.config().classes));
  BatchIterator it(dataset.size(), batch_size, 0, false);
  while (auto idx = it.next()) {
    const std::vector<int> pred = predict(model.logits(dataset.batch<Scalar>(*idx)));
    const std::vector<int> truth = dataset.batch_labels(*idx);
    for (std::size_t i = 0; i < pred.size(); ++i) cm.add(truth[i], pred[i]);
  }
  ClassificationMetrics metrics = compute_metrics(cm);
  return Evaluation{std::move(cm), std::move(metrics)};
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  // splitmix64 step over (seed, epoch)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

template <typename Scalar>
std::string divergence_report(Model<Scalar>& model, int epoch, Index batch, double last_loss) {
  std::ostringstream os;
  os << "loss became non-finite at epoch " << epoch << ", batch " << batch << " (last finite batch loss "
     << last_loss << "); parameter norms:";
  for (const Parameter<Scalar>* p : model.parameters()) {
    os << " " << p->name << "=" << static_cast<double>(p->value.array().matrix().norm());
  }
  return os.str();
}

}  // namespace

template <typename Scalar>
TrainResult train(Model<Scalar>& model, const Dataset& train_set, const Dataset& test_set, const TrainOptions& options,
                  const EpochCallback& on_epoch) {
  if (options.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (options.batch_size < 1) throw ConfigError("batch size must be >= 1");
  TrainResult result{{}, ConfusionMatrix(static_cast<int>(model.config().classes))};
  if (options.epochs == 0) return result;
  if (train_set.size() == 0) throw ConfigError("train: empty training set");

  AdamW<Scalar> optimizer(model.parameters(), options.optimizer);
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    BatchIterator it(train_set.size(), options.batch_size, epoch_seed(options.seed, epoch), true);
    double loss_sum = 0;
    double last_loss = 0;
    Index batch_index = 0;
    while (auto idx = it.next()) {
      model.zero_grad();
      Graph<Scalar> g;
      const std::vector<int> labels = train_set.batch_labels(*idx);
      Var<Scalar> logits = model.forward(g.input(train_set.batch<Scalar>(*idx)));
      Var<Scalar> loss = softmax_cross_entropy(logits, std::span<const int>(labels));
      const double value = static_cast<double>(loss.value().item());
      if (!std::isfinite(value)) throw NumericalError(divergence_report(model, epoch, batch_index, last_loss));
      g.backward(loss);
      optimizer.step();
      loss_sum += value * static_cast<double>(idx->size());
      last_loss = value;
      ++batch_index;
    }
    Evaluation eval = evaluate(model, test_set, options.eval_batch_size);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(train_set.size());
    m.test_accuracy = eval.metrics.accuracy;
    m.precision = eval.metrics.precision;
    m.recall = eval.metrics.recall;
    m.f1 = eval.metrics.f1;
    m.micro_precision = eval.metrics.micro_precision;
    m.micro_recall = eval.metrics.micro_recall;
    m.micro_f1 = eval.metrics.micro_f1;
    m.seconds = options.record_timing ? seconds : 0.0;
    result.epochs.push_back(m);
    result.confusion = std::move(eval.confusion);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

template std::vector<int> predict<float>(const Tensor<float>&);
template std::vector<int> predict<double>(const Tensor<double>&);
template Evaluation evaluate<float>(Model<float>&, const Dataset&, Index);
template Evaluation evaluate<double>(Model<double>&, const Dataset&, Index);
template TrainResult train<float>(Model<float>&, const Dataset&, const Dataset&, const TrainOptions&, const EpochCallback&);
template TrainResult train<double>(Model<double>&, const Dataset&, const Dataset&, const TrainOptions&,
                                   const EpochCallback&);

}  // namespace fkan
