// Differentiable building blocks assembled by the codec: dense and conv
// layers, (inverse) generalized divisive normalization, relative-position
// multi-head self-attention, and the pre-norm transformer block.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "semlink/ops.hpp"
#include "semlink/tensor.hpp"

namespace semlink {

enum class Activation { none, relu, sigmoid };
enum class Resample { none, down2, up2 };

struct ConvStageConfig {
  int kernel_size = 5;  // odd; 9 or 5 in the reference profiles
  int in_channels = 0;
  int out_channels = 0;
  Resample resample = Resample::none;
  bool use_gdn = false;
  Activation activation = Activation::none;
};

struct VitStageConfig {
  int num_heads = 8;
  int dims_per_head = 32;
  int mlp_expansion = 4;
  int embed_dim = 256;  // must equal num_heads * dims_per_head
  bool scale_by_head_dim = false;  // default normalization is sqrt(D_in)
  void validate() const;
};

template <typename T>
struct ParamList {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  void add(std::string name, const Tensor<T>& t) { items.emplace_back(std::move(name), t); }
  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(items.size());
    for (const auto& [_, t] : items) out.push_back(t);
    return out;
  }
  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : items) n += t.size();
    return n;
  }
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // [Din, Dout]
  Tensor<T> bias;    // [Dout]

  static DenseLayer create(int din, int dout, RngStream& rng);
  Tensor<T> forward(const Tensor<T>& x) const;  // x: [N, Din]
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> kernel;  // [k,k,Cin,Cout]
  Tensor<T> bias;    // [Cout]
  int stride = 1;

  static Conv2dLayer create(int k, int cin, int cout, int stride, RngStream& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, kernel, bias, stride); }
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2); inverse mode multiplies.
// beta is kept positive through softplus plus a 1e-6 floor, gamma non-negative
// by squaring the raw parameter.
template <typename T>
struct GdnLayer {
  Tensor<T> beta_raw;   // [C]
  Tensor<T> gamma_raw;  // [C,C]
  bool inverse = false;

  static constexpr double kBetaFloor = 1e-6;
  static GdnLayer create(int C, bool inverse);
  // Exact effective values for tests; beta below the floor clamps to it.
  static GdnLayer from_effective(const std::vector<T>& beta, const std::vector<T>& gamma,
                                 bool inverse);
  int channels() const { return beta_raw.dim(0); }
  Tensor<T> forward(const Tensor<T>& x) const;  // [H,W,C] or [N,C]
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

template <typename T>
struct MhsaLayer {
  int in_dim = 0;
  int num_heads = 0;
  int dims_per_head = 0;
  int grid_h = 0, grid_w = 0;
  bool scale_by_head_dim = false;

  std::vector<Tensor<T>> wq, wk, wv;   // per head [Din, Dh]
  Tensor<T> w_out;                     // [Nh*Dh, Nh*Dh]
  std::vector<Tensor<T>> pos_tables;   // per head [(2H-1),(2W-1)], zero-init

  // When set, forward() appends one row-major [N*N] softmaxed attention
  // matrix per head (values only, no graph).
  mutable std::vector<std::vector<T>>* attention_capture = nullptr;

  static MhsaLayer create(int in_dim, const VitStageConfig& cfg, int grid_h, int grid_w,
                          RngStream& rng);
  int out_dim() const { return num_heads * dims_per_head; }
  Tensor<T> forward(const Tensor<T>& tokens) const;  // [N, Din] -> [N, Dout]
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

// x + MHSA(LN(x)), then + MLP(LN(.)); operates on [H,W,C].
template <typename T>
struct VitBlock {
  int dim = 0;
  int grid_h = 0, grid_w = 0;
  Tensor<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  MhsaLayer<T> attn;
  DenseLayer<T> mlp_in, mlp_out;

  static VitBlock create(int dim, const VitStageConfig& cfg, int grid_h, int grid_w,
                         RngStream& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

// One position of the codec pipeline: either a conv stage (resample built into
// the convolution) or a resample + ViT block.
template <typename T>
struct ConvStage {
  ConvStageConfig cfg;
  Conv2dLayer<T> conv;
  std::optional<GdnLayer<T>> gdn;

  static ConvStage create(const ConvStageConfig& cfg, bool decoder_side, RngStream& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

template <typename T>
struct VitStage {
  Resample resample = Resample::none;
  VitBlock<T> block;

  static VitStage create(const VitStageConfig& cfg, Resample resample, int grid_h, int grid_w,
                         RngStream& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void register_params(ParamList<T>& params, const std::string& prefix) const;
};

#define SEMLINK_DECLARE_LAYERS(T)       \
  extern template struct DenseLayer<T>; \
  extern template struct Conv2dLayer<T>;\
  extern template struct GdnLayer<T>;   \
  extern template struct MhsaLayer<T>;  \
  extern template struct VitBlock<T>;   \
  extern template struct ConvStage<T>;  \
  extern template struct VitStage<T>;

SEMLINK_DECLARE_LAYERS(float)
SEMLINK_DECLARE_LAYERS(double)
#undef SEMLINK_DECLARE_LAYERS

}  // namespace semlink
