#include "semlink/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace semlink {

template <typename T>
SimilarityReport avg_cosine_similarity(const FeatureMap<T>& f) {
  if (!f.values.defined() || f.values.rank() != 3)
    throw std::invalid_argument("cosine: feature map must be [H,W,C]");
  const int H = f.values.dim(0), W = f.values.dim(1), C = f.values.dim(2);
  const int P = H * W;
  if (P < 2) throw std::invalid_argument("cosine: needs at least two positions");

  const auto vals = f.values.data();
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(P));
  int excluded = 0;
  for (int p = 0; p < P; ++p) {
    double norm_sq = 0.0;
    for (int c = 0; c < C; ++c) {
      const double v = static_cast<double>(vals[static_cast<std::size_t>(p) * C + c]);
      norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm < 1e-12) {
      ++excluded;
      continue;
    }
    std::vector<double> row(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
      row[static_cast<std::size_t>(c)] =
          static_cast<double>(vals[static_cast<std::size_t>(p) * C + c]) / norm;
    rows.push_back(std::move(row));
  }
  const int m = static_cast<int>(rows.size());
  if (m < 2) throw std::invalid_argument("cosine: all feature vectors are zero");

  // off-diagonal Gram sum over unit rows
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
                                         rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      total += 2.0 * dot;
    }
  }
  SimilarityReport report;
  report.similarity = total / (static_cast<double>(m) * (m - 1));
  report.layer_id = f.layer_id;
  report.n_positions = m;
  report.excluded = excluded;
  return report;
}

template <typename T>
SpectrumProfile fourier_profile(const FeatureMap<T>& f) {
  if (!f.values.defined() || f.values.rank() != 3)
    throw std::invalid_argument("fourier: feature map must be [H,W,C]");
  const int H = f.values.dim(0), W = f.values.dim(1), C = f.values.dim(2);
  if (H != W) throw std::invalid_argument("fourier: expects square grids");

  // channel-averaged real matrix
  const auto vals = f.values.data();
  std::vector<double> x(static_cast<std::size_t>(H) * W, 0.0);
  for (int p = 0; p < H * W; ++p) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) acc += static_cast<double>(vals[static_cast<std::size_t>(p) * C + c]);
    x[static_cast<std::size_t>(p)] = acc / C;
  }

  // 2D DFT by the matrix method: F = E_H (X E_W^T), E[k][n] = exp(-2 pi i nk / N)
  using cd = std::complex<double>;
  const auto dft_matrix = [](int n) {
    std::vector<cd> e(static_cast<std::size_t>(n) * n);
    for (int k = 0; k < n; ++k)
      for (int m = 0; m < n; ++m) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) * m / n;
        e[static_cast<std::size_t>(k) * n + m] = {std::cos(ang), std::sin(ang)};
      }
    return e;
  };
  const auto eh = dft_matrix(H);
  const auto ew = dft_matrix(W);
  // rows: t[n][l] = sum_m X[n][m] * ew[l][m]
  std::vector<cd> t(static_cast<std::size_t>(H) * W);
  for (int n = 0; n < H; ++n)
    for (int l = 0; l < W; ++l) {
      cd acc{0.0, 0.0};
      for (int m = 0; m < W; ++m)
        acc += x[static_cast<std::size_t>(n) * W + m] * ew[static_cast<std::size_t>(l) * W + m];
      t[static_cast<std::size_t>(n) * W + l] = acc;
    }
  std::vector<cd> F(static_cast<std::size_t>(H) * W);
  for (int k = 0; k < H; ++k)
    for (int l = 0; l < W; ++l) {
      cd acc{0.0, 0.0};
      for (int n = 0; n < H; ++n)
        acc += eh[static_cast<std::size_t>(k) * H + n] * t[static_cast<std::size_t>(n) * W + l];
      F[static_cast<std::size_t>(k) * W + l] = acc;
    }

  constexpr double eps = 1e-12;
  const double dc = std::log(std::abs(F[0]) + eps);
  SpectrumProfile profile;
  profile.layer_id = f.layer_id;
  profile.y.resize(static_cast<std::size_t>(H / 2) + 1);
  for (std::size_t d = 0; d < profile.y.size(); ++d)
    profile.y[d] = std::log(std::abs(F[d * static_cast<std::size_t>(W) + d]) + eps) - dc;
  profile.y[0] = 0.0;
  return profile;
}

template <typename T>
AttentionMap extract_attention_map(const Codec<T>& codec, int layer_id, std::pair<int, int> query,
                                   std::span<const Tensor<T>> images,
                                   const ChannelConfig* channel) {
  if (layer_id < 0 || layer_id > 5 || !codec.stage_is_vit(layer_id))
    throw std::invalid_argument("attention map: layer " + std::to_string(layer_id) +
                                " is not a ViT stage");
  if (images.empty()) throw std::invalid_argument("attention map: no images");
  const int grid = codec.stage_grid(layer_id);
  const int N = grid * grid;
  const int row = query.first * grid + query.second;
  if (query.first < 0 || query.first >= grid || query.second < 0 || query.second >= grid)
    throw std::invalid_argument("attention map: query index outside the grid");

  NoGradGuard guard;
  std::vector<double> acc(static_cast<std::size_t>(N), 0.0);
  long long count = 0;
  RngStream rng(channel != nullptr ? channel->seed : 0, streams::kChannelNoise);
  for (const auto& img : images) {
    CodecTaps<T> taps;
    taps.want_attention = true;
    auto iq = codec.encode_tensor(img, layer_id >= 3 ? nullptr : &taps);
    if (layer_id >= 3) {
      if (channel != nullptr) iq = channel_apply_t(iq, *channel, rng);
      (void)codec.decode_tensor(iq, &taps);
    }
    for (const auto& [stage, heads] : taps.attention) {
      if (stage != layer_id) continue;
      for (const auto& mat : heads) {
        for (int j = 0; j < N; ++j)
          acc[static_cast<std::size_t>(j)] +=
              static_cast<double>(mat[static_cast<std::size_t>(row) * N + j]);
        ++count;
      }
    }
  }
  if (count == 0) throw std::runtime_error("attention map: no attention captured");

  AttentionMap map;
  map.h = grid;
  map.w = grid;
  map.query = query;
  map.layer_id = layer_id;
  map.grid.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) map.grid[i] = acc[i] / static_cast<double>(count);
  return map;
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape())
    throw std::invalid_argument("psnr: shape mismatch");
  const auto pa = a.data();
  const auto pb = b.data();
  double mse = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(pa.size());
  if (mse == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const int half = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = static_cast<double>(i - half);
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable weighted filtering over the full grid; callers read valid centers.
void filter_2d(const std::vector<double>& img, int H, int W, const std::vector<double>& win,
               std::vector<double>& out) {
  const int K = static_cast<int>(win.size());
  const int half = K / 2;
  std::vector<double> tmp(static_cast<std::size_t>(H) * W, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = half; x < W - half; ++x) {
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += win[static_cast<std::size_t>(k)] *
                                         img[static_cast<std::size_t>(y) * W + x + k - half];
      tmp[static_cast<std::size_t>(y) * W + x] = acc;
    }
  out.assign(static_cast<std::size_t>(H) * W, 0.0);
  for (int y = half; y < H - half; ++y)
    for (int x = half; x < W - half; ++x) {
      double acc = 0.0;
      for (int k = 0; k < K; ++k)
        acc += win[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k - half) * W + x];
      out[static_cast<std::size_t>(y) * W + x] = acc;
    }
}

template <typename T>
std::vector<double> to_gray(const Tensor<T>& img) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  std::vector<double> gray(static_cast<std::size_t>(H) * W, 0.0);
  const auto vals = img.data();
  for (int p = 0; p < H * W; ++p) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) acc += static_cast<double>(vals[static_cast<std::size_t>(p) * C + c]);
    gray[static_cast<std::size_t>(p)] = acc / C;
  }
  return gray;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape())
    throw std::invalid_argument("ssim: shape mismatch");
  if (a.rank() != 3) throw std::invalid_argument("ssim: expects [H,W,C]");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double C1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
  constexpr double C2 = 0.03 * 0.03;
  const int H = a.dim(0), W = a.dim(1);
  if (H < kWin || W < kWin) throw std::invalid_argument("ssim: image smaller than the window");

  const auto ga = to_gray(a);
  const auto gb = to_gray(b);
  const auto win = gaussian_window(kWin, kSigma);

  std::vector<double> aa(ga.size()), bb(gb.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
  filter_2d(ga, H, W, win, mu_a);
  filter_2d(gb, H, W, win, mu_b);
  filter_2d(aa, H, W, win, m_aa);
  filter_2d(bb, H, W, win, m_bb);
  filter_2d(ab, H, W, win, m_ab);

  const int half = kWin / 2;
  double total = 0.0;
  long long count = 0;
  for (int y = half; y < H - half; ++y)
    for (int x = half; x < W - half; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      const double va = m_aa[i] - mu_a[i] * mu_a[i];
      const double vb = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      const double s = ((2.0 * mu_a[i] * mu_b[i] + C1) * (2.0 * cov + C2)) /
                       ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2));
      total += s;
      ++count;
    }
  return total / static_cast<double>(count);
}

template <typename T>
std::vector<SimilarityReport> encoder_similarity(const Codec<T>& codec,
                                                 std::span<const Tensor<T>> images) {
  if (images.empty()) throw std::invalid_argument("encoder_similarity: no images");
  NoGradGuard guard;
  std::vector<double> sums(4, 0.0);
  std::vector<int> layer_ids = {0, 1, 2, kSymbolsLayer};
  for (const auto& img : images) {
    CodecTaps<T> taps;
    taps.want_features = true;
    (void)codec.encode_tensor(img, &taps);
    for (const auto& [layer, values] : taps.features) {
      const auto it = std::find(layer_ids.begin(), layer_ids.end(), layer);
      if (it == layer_ids.end()) continue;
      FeatureMap<T> f;
      f.layer_id = layer;
      if (layer == kSymbolsLayer) {
        // each complex symbol is one 2-dim vector
        const int S = static_cast<int>(values.size() / 2);
        f.values = reshape(values, {S, 1, 2});
      } else {
        f.values = values;
      }
      sums[static_cast<std::size_t>(it - layer_ids.begin())] +=
          avg_cosine_similarity(f).similarity;
    }
  }
  std::vector<SimilarityReport> out;
  for (std::size_t i = 0; i < layer_ids.size(); ++i) {
    SimilarityReport r;
    r.layer_id = layer_ids[i];
    r.similarity = sums[i] / static_cast<double>(images.size());
    out.push_back(r);
  }
  return out;
}

#define SEMLINK_INSTANTIATE_ANALYSIS(T)                                                  \
  template SimilarityReport avg_cosine_similarity(const FeatureMap<T>&);                 \
  template SpectrumProfile fourier_profile(const FeatureMap<T>&);                        \
  template AttentionMap extract_attention_map(const Codec<T>&, int, std::pair<int, int>, \
                                              std::span<const Tensor<T>>,                \
                                              const ChannelConfig*);                     \
  template double psnr(const Tensor<T>&, const Tensor<T>&);                              \
  template double ssim(const Tensor<T>&, const Tensor<T>&);                              \
  template std::vector<SimilarityReport> encoder_similarity(const Codec<T>&,             \
                                                            std::span<const Tensor<T>>);

SEMLINK_INSTANTIATE_ANALYSIS(float)
SEMLINK_INSTANTIATE_ANALYSIS(double)
#undef SEMLINK_INSTANTIATE_ANALYSIS

}  // namespace semlink
