#include "semlink/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink {

namespace {
constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label + 3 * 1024 pixels
constexpr int kCifarSize = 32;
}  // namespace

std::vector<DatasetRecord> load_cifar_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cifar: cannot open " + path);
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (raw.size() % kCifarRecordBytes != 0)
    throw std::runtime_error("cifar: file size is not a multiple of 3073 bytes");

  const std::size_t count = raw.size() / kCifarRecordBytes;
  std::vector<DatasetRecord> records;
  records.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = raw.data() + r * kCifarRecordBytes;
    DatasetRecord out;
    out.label = rec[0];
    out.h = kCifarSize;
    out.w = kCifarSize;
    out.pixels.resize(static_cast<std::size_t>(kCifarSize) * kCifarSize * 3);
    // planes are R, G, B, each 32x32 row-major
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t* plane = rec + 1 + c * 1024;
      for (int p = 0; p < 1024; ++p)
        out.pixels[static_cast<std::size_t>(p) * 3 + c] = static_cast<float>(plane[p]) / 255.0f;
    }
    records.push_back(std::move(out));
  }
  return records;
}

std::optional<std::string> find_data_file(const std::string& filename) {
  const char* root = std::getenv("SEMLINK_DATA_DIR");
  if (root == nullptr) return std::nullopt;
  const std::filesystem::path p = std::filesystem::path(root) / filename;
  if (!std::filesystem::exists(p)) return std::nullopt;
  return p.string();
}

namespace {

void blur_once(std::vector<float>& img, int size) {
  // separable 1-2-1 binomial pass per channel
  std::vector<float> tmp(img.size());
  const auto at = [size](int y, int x, int c) {
    y = std::clamp(y, 0, size - 1);
    x = std::clamp(x, 0, size - 1);
    return (static_cast<std::size_t>(y) * size + x) * 3 + static_cast<std::size_t>(c);
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        tmp[at(y, x, c)] =
            0.25f * img[at(y, x - 1, c)] + 0.5f * img[at(y, x, c)] + 0.25f * img[at(y, x + 1, c)];
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        img[at(y, x, c)] =
            0.25f * tmp[at(y - 1, x, c)] + 0.5f * tmp[at(y, x, c)] + 0.25f * tmp[at(y + 1, x, c)];
}

}  // namespace

std::vector<DatasetRecord> make_toy_dataset(int count, int size, std::uint64_t seed) {
  if (size != 8 && size != 16 && size != 32)
    throw std::invalid_argument("toy dataset: size must be 8, 16, or 32");
  if (count < 1) throw std::invalid_argument("toy dataset: count must be >= 1");

  std::vector<DatasetRecord> records;
  records.reserve(static_cast<std::size_t>(count));
  for (int idx = 0; idx < count; ++idx) {
    RngStream rng(seed, streams::kToyData + static_cast<std::uint64_t>(idx) * 97);
    DatasetRecord rec;
    rec.h = size;
    rec.w = size;
    rec.label = static_cast<std::uint8_t>(idx % 2);
    rec.pixels.assign(static_cast<std::size_t>(size) * size * 3, 0.0f);

    if (idx % 2 == 0) {
      // blurred random texture
      for (auto& v : rec.pixels) v = static_cast<float>(rng.uniform());
      blur_once(rec.pixels, size);
      blur_once(rec.pixels, size);
    } else {
      // flat background with one rectangle or disc
      float bg[3], fg[3];
      for (int c = 0; c < 3; ++c) {
        bg[c] = static_cast<float>(rng.uniform(0.1, 0.9));
        fg[c] = static_cast<float>(rng.uniform(0.1, 0.9));
      }
      for (int p = 0; p < size * size; ++p)
        for (int c = 0; c < 3; ++c) rec.pixels[static_cast<std::size_t>(p) * 3 + c] = bg[c];
      const bool disc = rng.uniform() < 0.5;
      const int cx = static_cast<int>(rng.uniform(1, size - 1));
      const int cy = static_cast<int>(rng.uniform(1, size - 1));
      const int extent = std::max(1, static_cast<int>(rng.uniform(1, size / 2.0)));
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const bool inside = disc
                                  ? (x - cx) * (x - cx) + (y - cy) * (y - cy) <= extent * extent
                                  : std::abs(x - cx) <= extent && std::abs(y - cy) <= extent;
          if (inside)
            for (int c = 0; c < 3; ++c)
              rec.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + c] = fg[c];
        }
      blur_once(rec.pixels, size);
    }
    for (auto& v : rec.pixels) v = std::clamp(v, 0.0f, 1.0f);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace semlink
