#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "fkan/data.hpp"

namespace fkan::test {

/// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fkan-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor<std::uint8_t> random_bytes(Shape shape, std::mt19937_64& rng) {
  Tensor<std::uint8_t> t(std::move(shape));
  std::uniform_int_distribution<int> u(0, 255);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<std::uint8_t>(u(rng));
  return t;
}

/// Writes a synthetic MNIST-layout directory (28x28, digits drawn as
/// class-dependent bars so that a network can learn them).
inline void write_synthetic_mnist(const std::filesystem::path& dir, Index train, Index test, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  auto make = [&](Index count, const char* images, const char* labels) {
    Tensor<std::uint8_t> px({count, 1, 28, 28});
    std::vector<int> ys(static_cast<std::size_t>(count));
    std::uniform_int_distribution<int> noise(0, 40);
    for (Index n = 0; n < count; ++n) {
      const int y = static_cast<int>(n % 10);
      ys[static_cast<std::size_t>(n)] = y;
      for (Index i = 0; i < 28; ++i)
        for (Index j = 0; j < 28; ++j) {
          const bool bar = (i >= 2 + 2 * y && i < 4 + 2 * y) || (j >= 2 + 2 * y && j < 4 + 2 * y);
          px.at(n, 0, i, j) = static_cast<std::uint8_t>(bar ? 255 - noise(rng) : noise(rng));
        }
    }
    write_idx_images(dir / images, px);
    write_idx_labels(dir / labels, ys);
  };
  make(train, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  make(test, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
}

}  // namespace fkan::test
