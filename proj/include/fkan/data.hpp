#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fkan/tensor.hpp"

namespace fkan {

enum class DatasetId { kMnist, kFashionMnist, kCifar10 };
enum class Split { kTrain, kTest };
enum class ResizeMode { kPad, kBilinear };

const char* to_string(DatasetId id);
DatasetId parse_dataset_id(const std::string& name);
const char* to_string(Split split);

/// Images are stored as raw bytes; the normalized pixel value is byte / 255.
struct Dataset {
  std::string name;
  Split split = Split::kTrain;
  Tensor<std::uint8_t> pixels;  // [M, C, H, W]
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index channels() const { return pixels.dim(1); }
  Index height() const { return pixels.dim(2); }
  Index width() const { return pixels.dim(3); }

  /// Normalized [len(indices), C, H, W] batch.
  template <typename Scalar>
  Tensor<Scalar> batch(std::span<const Index> indices) const;

  template <typename Scalar>
  Tensor<Scalar> images() const;

  std::vector<int> batch_labels(std::span<const Index> indices) const;

  /// First `count` samples (all of them if count exceeds the size).
  Dataset head(Index count) const;
};

/// IDX pair: images (magic 0x00000803, [M, rows, cols] u8), labels (magic
/// 0x00000801, [M] u8). Produces [M, 1, rows, cols] without padding.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string name = "idx", Split split = Split::kTrain);

/// One CIFAR-10 binary batch file of 3073-byte records (label, R, G, B planes).
Dataset read_cifar10_batch(const std::filesystem::path& path, Index expected_records = 10000);

/// The five training batches or the test batch from an extracted
/// cifar-10-batches-bin directory.
Dataset load_cifar10(const std::filesystem::path& dir, Split split);

void write_idx_images(const std::filesystem::path& path, const Tensor<std::uint8_t>& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);
void write_cifar10_batch(const std::filesystem::path& path, const Tensor<std::uint8_t>& images,
                         std::span<const int> labels);

/// [M, 1, 28, 28] -> [M, 1, 32, 32] with a 2-pixel zero border.
template <typename T>
Tensor<T> pad_to_32(const Tensor<T>& images);

/// Bilinear (align-corners) resampling of every plane to size x size.
/// Integral element types are rounded to nearest.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& images, Index size);

/// Brings images to 32x32 (no-op when already 32x32).
Dataset prepare_for_lenet(Dataset dataset, ResizeMode mode = ResizeMode::kPad);

/// Resolves <root>/<dataset dir> and loads one split, resized to 32x32.
Dataset load_dataset(const std::filesystem::path& root, DatasetId id, Split split,
                     ResizeMode mode = ResizeMode::kPad);

/// Seeded sample order cut into consecutive batches; the final partial batch
/// is kept.
class BatchIterator {
 public:
  BatchIterator(Index sample_count, Index batch_size, std::uint64_t seed, bool shuffle = true);

  std::optional<std::span<const Index>> next();
  void rewind() { cursor_ = 0; }

  const std::vector<Index>& order() const { return order_; }
  Index batch_count() const { return (static_cast<Index>(order_.size()) + batch_size_ - 1) / batch_size_; }

 private:
  std::vector<Index> order_;
  Index batch_size_;
  std::size_t cursor_ = 0;
};

inline BatchIterator batches(const Dataset& dataset, Index batch_size, std::uint64_t seed, bool shuffle = true) {
  return BatchIterator(dataset.size(), batch_size, seed, shuffle);
}

}  // namespace fkan
