// Measurement instruments: spatial average cosine similarity, half-diagonal
// DFT log-amplitude profiles, attention-map extraction, and image quality
// metrics. All statistics are computed in double regardless of the tensor
// precision.
#pragma once

#include <utility>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/codec.hpp"

namespace semlink {

template <typename T>
struct FeatureMap {
  int layer_id = 0;      // 0..5 per stage, kSymbolsLayer for symbols
  Tensor<T> values;      // [H,W,C]
};

struct SimilarityReport {
  double similarity = 0.0;  // in [-1, 1]
  int layer_id = 0;
  int n_positions = 0;
  int excluded = 0;  // zero-norm vectors left out of the average
};

struct SpectrumProfile {
  std::vector<double> y;  // length floor(H/2)+1, y[0] == 0
  int layer_id = 0;
};

struct AttentionMap {
  std::vector<double> grid;  // row-major H*W, sums to 1
  int h = 0, w = 0;
  std::pair<int, int> query{0, 0};
  int layer_id = 0;
};

// Mean pairwise cosine over all distinct spatial positions, each position
// read as a C-dim vector. Positions with norm < 1e-12 are excluded and
// counted; an all-zero map is an error.
template <typename T>
SimilarityReport avg_cosine_similarity(const FeatureMap<T>& f);

// Channel-averaged 2D DFT; y = log|F_dd| - log|F_00| over the first
// floor(H/2)+1 diagonal bins, with a 1e-12 floor inside the logs.
template <typename T>
SpectrumProfile fourier_profile(const FeatureMap<T>& f);

// Softmaxed attention row of the query position, averaged over heads and over
// the dataset, reshaped to the stage grid. layer_id must be a ViT stage
// (2 encoder-side, 3 decoder-side). Decoder maps see symbols passed through
// `channel` when given, noiseless otherwise.
template <typename T>
AttentionMap extract_attention_map(const Codec<T>& codec, int layer_id, std::pair<int, int> query,
                                   std::span<const Tensor<T>> images,
                                   const ChannelConfig* channel = nullptr);

// 10 log10(1 / MSE) for images in [0,1]; +infinity when identical.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2,
// C2=(0.03)^2, grayscale = channel mean, mean over valid window positions.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

// Encoder-side similarity at layers 0..2 plus the symbol block, averaged over
// a probe batch. Backs the per-epoch traces.
template <typename T>
std::vector<SimilarityReport> encoder_similarity(const Codec<T>& codec,
                                                 std::span<const Tensor<T>> images);

#define SEMLINK_DECLARE_ANALYSIS(T)                                                           \
  extern template SimilarityReport avg_cosine_similarity(const FeatureMap<T>&);               \
  extern template SpectrumProfile fourier_profile(const FeatureMap<T>&);                      \
  extern template AttentionMap extract_attention_map(const Codec<T>&, int, std::pair<int, int>, \
                                                     std::span<const Tensor<T>>,              \
                                                     const ChannelConfig*);                   \
  extern template double psnr(const Tensor<T>&, const Tensor<T>&);                            \
  extern template double ssim(const Tensor<T>&, const Tensor<T>&);                            \
  extern template std::vector<SimilarityReport> encoder_similarity(const Codec<T>&,           \
                                                                   std::span<const Tensor<T>>);

SEMLINK_DECLARE_ANALYSIS(float)
SEMLINK_DECLARE_ANALYSIS(double)
#undef SEMLINK_DECLARE_ANALYSIS

}  // namespace semlink
