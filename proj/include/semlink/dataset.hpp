// Dataset ingestion: the public CIFAR binary layout (3073-byte records, one
// label byte then 1024 bytes per plane R,G,B) and an in-repo toy generator of
// blurred textures and geometric shapes so every run works without downloads.
// SEMLINK_DATA_DIR points at the dataset root for the CIFAR loader.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semlink/tensor.hpp"

namespace semlink {

struct DatasetRecord {
  std::uint8_t label = 0;
  int h = 0, w = 0;
  std::vector<float> pixels;  // [h,w,3] row-major, values in [0,1]
};

std::vector<DatasetRecord> load_cifar_binary(const std::string& path);

// Alternating Gaussian-blurred random textures and simple shapes
// (rectangles / discs); size 8, 16, or 32.
std::vector<DatasetRecord> make_toy_dataset(int count, int size, std::uint64_t seed);

// Resolve a CIFAR file under $SEMLINK_DATA_DIR, if both exist.
std::optional<std::string> find_data_file(const std::string& filename);

template <typename T>
Tensor<T> to_tensor(const DatasetRecord& rec) {
  std::vector<T> values(rec.pixels.begin(), rec.pixels.end());
  return Tensor<T>::from({rec.h, rec.w, 3}, std::move(values));
}

}  // namespace semlink
