#include "fkan/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

namespace fkan {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr Index kCifarSide = 32;
constexpr Index kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;
constexpr int kClasses = 10;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw DataError(DataError::Kind::kTruncated, path.string() + ": truncated header");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_label(int label, const std::filesystem::path& path, Index index) {
  if (label < 0 || label >= kClasses) {
    throw DataError(DataError::Kind::kBadLabel,
                    path.string() + ": label " + std::to_string(label) + " at record " + std::to_string(index));
  }
}

}  // namespace

const char* to_string(DatasetId id) {
  switch (id) {
    case DatasetId::kMnist: return "mnist";
    case DatasetId::kFashionMnist: return "fashion-mnist";
    case DatasetId::kCifar10: return "cifar10";
  }
  return "?";
}

DatasetId parse_dataset_id(const std::string& name) {
  if (name == "mnist") return DatasetId::kMnist;
  if (name == "fashion-mnist" || name == "fashionmnist" || name == "fashion_mnist") return DatasetId::kFashionMnist;
  if (name == "cifar10" || name == "cifar-10") return DatasetId::kCifar10;
  throw ConfigError("unknown dataset '" + name + "'");
}

const char* to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

template <typename Scalar>
Tensor<Scalar> Dataset::batch(std::span<const Index> indices) const {
  const Index per = pixels.size() / std::max<Index>(size(), 1);
  Tensor<Scalar> out({static_cast<Index>(indices.size()), channels(), height(), width()});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Index src = indices[b];
    if (src < 0 || src >= size()) throw ShapeError("Dataset::batch: index " + std::to_string(src) + " out of range");
    const std::uint8_t* from = pixels.data() + src * per;
    Scalar* to = out.data() + static_cast<Index>(b) * per;
    for (Index i = 0; i < per; ++i) to[i] = static_cast<Scalar>(from[i]) / Scalar(255);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> Dataset::images() const {
  std::vector<Index> all(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) all[static_cast<std::size_t>(i)] = i;
  return batch<Scalar>(all);
}

template Tensor<float> Dataset::batch<float>(std::span<const Index>) const;
template Tensor<double> Dataset::batch<double>(std::span<const Index>) const;
template Tensor<float> Dataset::images<float>() const;
template Tensor<double> Dataset::images<double>() const;

std::vector<int> Dataset::batch_labels(std::span<const Index> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

Dataset Dataset::head(Index count) const {
  count = std::clamp<Index>(count, 0, size());
  const Index per = pixels.size() / std::max<Index>(size(), 1);
  Dataset out;
  out.name = name;
  out.split = split;
  Shape shape = pixels.shape();
  shape[0] = count;
  out.pixels = Tensor<std::uint8_t>(shape, pixels.array().head(count * per));
  out.labels.assign(labels.begin(), labels.begin() + count);
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, std::string name,
                 Split split) {
  const std::vector<std::uint8_t> img = read_file(images_path);
  const std::vector<std::uint8_t> lab = read_file(labels_path);

  if (read_be32(img, 0, images_path) != kIdxImagesMagic) {
    throw DataError(DataError::Kind::kBadMagic, images_path.string() + ": not an IDX image file (bad magic)");
  }
  if (read_be32(lab, 0, labels_path) != kIdxLabelsMagic) {
    throw DataError(DataError::Kind::kBadMagic, labels_path.string() + ": not an IDX label file (bad magic)");
  }
  const Index count = read_be32(img, 4, images_path);
  const Index rows = read_be32(img, 8, images_path);
  const Index cols = read_be32(img, 12, images_path);
  const Index label_count = read_be32(lab, 4, labels_path);

  const auto image_bytes = static_cast<std::size_t>(count * rows * cols);
  if (img.size() < 16 + image_bytes) {
    throw DataError(DataError::Kind::kTruncated, images_path.string() + ": expected " + std::to_string(image_bytes) +
                                                     " pixel bytes, found " + std::to_string(img.size() - 16));
  }
  if (img.size() > 16 + image_bytes) {
    throw DataError(DataError::Kind::kBadSize, images_path.string() + ": trailing bytes after pixel data");
  }
  if (lab.size() < 8 + static_cast<std::size_t>(label_count)) {
    throw DataError(DataError::Kind::kTruncated, labels_path.string() + ": truncated label data");
  }
  if (label_count != count) {
    throw DataError(DataError::Kind::kCountMismatch, "image count " + std::to_string(count) +
                                                         " does not match label count " + std::to_string(label_count));
  }

  Dataset out;
  out.name = std::move(name);
  out.split = split;
  Tensor<std::uint8_t>::Storage data(static_cast<Index>(image_bytes));
  std::copy(img.begin() + 16, img.end(), data.data());
  out.pixels = Tensor<std::uint8_t>({count, 1, rows, cols}, std::move(data));
  out.labels.resize(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const int label = lab[static_cast<std::size_t>(8 + i)];
    check_label(label, labels_path, i);
    out.labels[static_cast<std::size_t>(i)] = label;
  }
  return out;
}

Dataset read_cifar10_batch(const std::filesystem::path& path, Index expected_records) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const auto expected_size = static_cast<std::size_t>(expected_records * kCifarRecord);
  if (bytes.size() != expected_size) {
    throw DataError(DataError::Kind::kBadSize, path.string() + ": size " + std::to_string(bytes.size()) +
                                                   " bytes, expected " + std::to_string(expected_size));
  }
  Dataset out;
  out.name = "cifar10";
  const Index plane = kCifarSide * kCifarSide;
  Tensor<std::uint8_t>::Storage data(expected_records * 3 * plane);
  out.labels.resize(static_cast<std::size_t>(expected_records));
  for (Index r = 0; r < expected_records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    check_label(rec[0], path, r);
    out.labels[static_cast<std::size_t>(r)] = rec[0];
    std::copy(rec + 1, rec + kCifarRecord, data.data() + r * 3 * plane);
  }
  out.pixels = Tensor<std::uint8_t>({expected_records, 3, kCifarSide, kCifarSide}, std::move(data));
  return out;
}

Dataset load_cifar10(const std::filesystem::path& dir, Split split) {
  std::vector<std::filesystem::path> files;
  if (split == Split::kTrain) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  std::vector<Dataset> parts;
  for (const auto& f : files) parts.push_back(read_cifar10_batch(f));
  Index total = 0;
  for (const auto& p : parts) total += p.size();
  Dataset out;
  out.name = "cifar10";
  out.split = split;
  Tensor<std::uint8_t>::Storage data(total * 3 * kCifarSide * kCifarSide);
  Index offset = 0;
  for (const auto& p : parts) {
    data.segment(offset, p.pixels.size()) = p.pixels.array();
    offset += p.pixels.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.pixels = Tensor<std::uint8_t>({total, 3, kCifarSide, kCifarSide}, std::move(data));
  return out;
}

void write_idx_images(const std::filesystem::path& path, const Tensor<std::uint8_t>& images) {
  if (images.rank() != 4 || images.dim(1) != 1) throw ShapeError("write_idx_images: expected [M, 1, rows, cols]");
  std::vector<std::uint8_t> bytes;
  append_be32(bytes, kIdxImagesMagic);
  append_be32(bytes, static_cast<std::uint32_t>(images.dim(0)));
  append_be32(bytes, static_cast<std::uint32_t>(images.dim(2)));
  append_be32(bytes, static_cast<std::uint32_t>(images.dim(3)));
  bytes.insert(bytes.end(), images.data(), images.data() + images.size());
  write_file(path, bytes);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::vector<std::uint8_t> bytes;
  append_be32(bytes, kIdxLabelsMagic);
  append_be32(bytes, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) bytes.push_back(static_cast<std::uint8_t>(l));
  write_file(path, bytes);
}

void write_cifar10_batch(const std::filesystem::path& path, const Tensor<std::uint8_t>& images,
                         std::span<const int> labels) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != kCifarSide || images.dim(3) != kCifarSide ||
      images.dim(0) != static_cast<Index>(labels.size())) {
    throw ShapeError("write_cifar10_batch: expected [M, 3, 32, 32] images and M labels");
  }
  const Index per = 3 * kCifarSide * kCifarSide;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(labels.size() * static_cast<std::size_t>(kCifarRecord));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    bytes.push_back(static_cast<std::uint8_t>(labels[r]));
    const std::uint8_t* src = images.data() + static_cast<Index>(r) * per;
    bytes.insert(bytes.end(), src, src + per);
  }
  write_file(path, bytes);
}

template <typename T>
Tensor<T> pad_to_32(const Tensor<T>& images) {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != 28 || images.dim(3) != 28) {
    throw ShapeError("pad_to_32: expected [M, 1, 28, 28], got " + to_string(images.shape()));
  }
  const Index count = images.dim(0);
  Tensor<T> out({count, 1, 32, 32});
  for (Index n = 0; n < count; ++n)
    for (Index i = 0; i < 28; ++i)
      for (Index j = 0; j < 28; ++j) out[(n * 32 + i + 2) * 32 + j + 2] = images[(n * 28 + i) * 28 + j];
  return out;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& images, Index size) {
  if (images.rank() != 4 || size < 1) throw ShapeError("resize_bilinear: expected [M, C, H, W]");
  const Index planes = images.dim(0) * images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor<T> out({images.dim(0), images.dim(1), size, size});
  const double sy = size > 1 ? double(h - 1) / double(size - 1) : 0.0;
  const double sx = size > 1 ? double(w - 1) / double(size - 1) : 0.0;
  for (Index p = 0; p < planes; ++p) {
    const T* src = images.data() + p * h * w;
    for (Index i = 0; i < size; ++i) {
      const double y = i * sy;
      const Index y0 = std::min<Index>(static_cast<Index>(y), h - 1), y1 = std::min<Index>(y0 + 1, h - 1);
      const double fy = y - double(y0);
      for (Index j = 0; j < size; ++j) {
        const double x = j * sx;
        const Index x0 = std::min<Index>(static_cast<Index>(x), w - 1), x1 = std::min<Index>(x0 + 1, w - 1);
        const double fx = x - double(x0);
        const double v = (1 - fy) * ((1 - fx) * double(src[y0 * w + x0]) + fx * double(src[y0 * w + x1])) +
                         fy * ((1 - fx) * double(src[y1 * w + x0]) + fx * double(src[y1 * w + x1]));
        if constexpr (std::is_integral_v<T>) {
          out[(p * size + i) * size + j] = static_cast<T>(std::lround(v));
        } else {
          out[(p * size + i) * size + j] = static_cast<T>(v);
        }
      }
    }
  }
  return out;
}

template Tensor<std::uint8_t> pad_to_32<std::uint8_t>(const Tensor<std::uint8_t>&);
template Tensor<float> pad_to_32<float>(const Tensor<float>&);
template Tensor<double> pad_to_32<double>(const Tensor<double>&);
template Tensor<std::uint8_t> resize_bilinear<std::uint8_t>(const Tensor<std::uint8_t>&, Index);
template Tensor<float> resize_bilinear<float>(const Tensor<float>&, Index);
template Tensor<double> resize_bilinear<double>(const Tensor<double>&, Index);

Dataset prepare_for_lenet(Dataset dataset, ResizeMode mode) {
  if (dataset.height() == 32 && dataset.width() == 32) return dataset;
  if (mode == ResizeMode::kPad) {
    dataset.pixels = pad_to_32(dataset.pixels);
  } else {
    dataset.pixels = resize_bilinear(dataset.pixels, 32);
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& root, DatasetId id, Split split, ResizeMode mode) {
  auto locate = [&](std::initializer_list<const char*> subdirs, const char* probe) {
    for (const char* sub : subdirs) {
      const auto dir = root / sub;
      if (std::filesystem::exists(dir / probe)) return dir;
    }
    if (std::filesystem::exists(root / probe)) return root;
    throw DataError(DataError::Kind::kMissingFile, std::string("cannot find ") + probe + " under " + root.string() +
                                                       " (looked in " + *subdirs.begin() + "/)");
  };
  const bool train = split == Split::kTrain;
  Dataset out;
  switch (id) {
    case DatasetId::kMnist:
    case DatasetId::kFashionMnist: {
      const char* images = train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
      const char* labels = train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
      const auto dir = id == DatasetId::kMnist ? locate({"mnist", "MNIST"}, images)
                                               : locate({"fashion-mnist", "fashion_mnist", "FashionMNIST"}, images);
      out = load_idx(dir / images, dir / labels, to_string(id), split);
      break;
    }
    case DatasetId::kCifar10: {
      const auto dir = locate({"cifar-10-batches-bin", "cifar10"}, train ? "data_batch_1.bin" : "test_batch.bin");
      out = load_cifar10(dir, split);
      break;
    }
  }
  return prepare_for_lenet(std::move(out), mode);
}

BatchIterator::BatchIterator(Index sample_count, Index batch_size, std::uint64_t seed, bool shuffle)
    : order_(static_cast<std::size_t>(std::max<Index>(sample_count, 0))), batch_size_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<Index>(i);
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

std::optional<std::span<const Index>> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t len = std::min(order_.size() - cursor_, static_cast<std::size_t>(batch_size_));
  std::span<const Index> out(order_.data() + cursor_, len);
  cursor_ += len;
  return out;
}

}  // namespace fkan
