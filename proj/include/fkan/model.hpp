#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fkan/data.hpp"
#include "fkan/kan.hpp"
#include "fkan/pooling.hpp"

namespace fkan {

enum class HeadKind { kMlp, kKan };

const char* to_string(HeadKind kind);
HeadKind parse_head_kind(const std::string& name);

/// One of the compared LeNet variants: backbone hyperparameters plus the
/// pooling and classification-head choices.
struct ModelConfig {
  DatasetId dataset = DatasetId::kMnist;
  PoolConfig pooling;
  HeadKind head = HeadKind::kMlp;
  Activation conv_activation = Activation::kRelu;
  SplineGrid kan_grid;
  bool kan_input_tanh = false;  // squash head inputs into the grid range
  std::vector<Index> mlp_widths{120, 84};
  std::vector<Index> kan_widths{84};
  std::vector<Index> conv_filters{6, 16};
  std::vector<Index> conv_kernels{5, 5};
  Index input_size = 32;
  Index classes = 10;
  std::uint64_t seed = 42;

  Index input_channels() const { return dataset == DatasetId::kCifar10 ? 3 : 1; }

  /// Spatial extents after each conv/pool stage; throws on a non-tiling stage.
  std::vector<Index> stage_extents() const;
  Index flatten_width() const;

  void validate() const;

  /// Architecture fields only (the seed is excluded).
  std::string canonical() const;
  std::uint64_t digest() const;
};

/// Intermediate nodes recorded during a forward pass, used to keep gradient
/// checks away from non-differentiable points.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Var<Scalar>> conv_outputs;  // before activation
  std::vector<Var<Scalar>> pool_inputs;
  std::vector<Var<Scalar>> dense_preactivations;  // hidden MLP layers
  Var<Scalar> head_input;
};

template <typename Scalar>
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// batch [N, C, S, S] -> logits [N, classes].
  Var<Scalar> forward(Var<Scalar> batch, ForwardTrace<Scalar>* trace = nullptr);

  /// Gradient-free forward pass.
  Tensor<Scalar> logits(const Tensor<Scalar>& batch);

  std::vector<Parameter<Scalar>*> parameters();
  std::vector<const Parameter<Scalar>*> parameters() const;
  Index parameter_count() const;
  void zero_grad();

 private:
  struct Conv {
    Parameter<Scalar> kernels;
    Parameter<Scalar> bias;
  };
  struct Dense {
    Parameter<Scalar> weights;  // [in, out]
    Parameter<Scalar> bias;
  };

  ModelConfig config_;
  std::vector<Conv> convs_;
  std::vector<Dense> dense_;
  std::vector<KanLayer<Scalar>> kan_;
};

template <typename Scalar>
Model<Scalar> build(const ModelConfig& config) {
  return Model<Scalar>(config);
}

/// Little-endian "FKAN" checkpoint: magic, u32 version, u64 config digest,
/// then per tensor: u32 name length, name, u32 rank, u64 dims, f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path);

/// Loads parameters into `model`; rejects a digest mismatch.
template <typename Scalar>
void load_checkpoint(Model<Scalar>& model, const std::filesystem::path& path);

}  // namespace fkan
