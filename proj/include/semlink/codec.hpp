// Encoder/decoder assembly from a six-letter stage string over {C,V}:
// stages 0-2 encode (downsampling at 0 and 1), a per-position linear
// projection emits power-normalized I/Q symbols, and stages 3-5 decode
// (upsampling at 4 and 5) before a final conv + sigmoid head.
#pragma once

#include <array>
#include <complex>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "semlink/checkpoint.hpp"
#include "semlink/layers.hpp"

namespace semlink {

struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n, long long d);
  static Rational parse(const std::string& text);  // "1/6" or "3"
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
  bool operator==(const Rational&) const = default;
};

// S/(H*W*3): complex symbols per source pixel value.
Rational bandwidth_ratio(long long symbols, int h, int w);

struct WidthProfile {
  std::array<int, 6> conv_width{};
  std::array<int, 6> conv_kernel{};
  int head_kernel = 9;
  int num_heads = 8;
  int dims_per_head = 32;
  int mlp_expansion = 4;

  int vit_dim() const { return num_heads * dims_per_head; }
  static WidthProfile paper();  // widths sized against the reference cost table
  static WidthProfile toy();    // small widths for 8x8/16x16 desk runs
};

struct ArchSpec {
  std::string stages = "CCVVCC";  // length 6 over {C,V}
  bool use_gdn = false;
  WidthProfile profile = WidthProfile::paper();
  bool scale_attention_by_head_dim = false;

  void validate() const;
};

// Complex baseband symbols stored as interleaved I,Q reals.
template <typename T>
struct SymbolBlock {
  std::vector<T> iq;  // length 2S
  int source_h = 0, source_w = 0;
  bool zero_power = false;

  std::size_t count() const { return iq.size() / 2; }
  std::complex<double> symbol(std::size_t i) const {
    return {static_cast<double>(iq[2 * i]), static_cast<double>(iq[2 * i + 1])};
  }
  void set_symbol(std::size_t i, std::complex<double> v) {
    iq[2 * i] = static_cast<T>(v.real());
    iq[2 * i + 1] = static_cast<T>(v.imag());
  }
  double mean_power() const;
};

// Rescale to exactly unit mean symbol power; all-zero input is returned as-is
// with the zero_power flag raised.
template <typename T>
SymbolBlock<T> power_normalize(const SymbolBlock<T>& raw);

struct StageCost {
  std::string name;
  long long params = 0;
  long long flops = 0;
};

struct CostReport {
  long long param_count = 0;
  long long flop_count = 0;  // multiply-accumulate x2 convention, 32x32 forward
  std::vector<StageCost> breakdown;
};

// Per-image analysis taps captured during a forward pass.
template <typename T>
struct CodecTaps {
  bool want_features = false;
  bool want_attention = false;
  // (layer id, detached stage output [H,W,C]); symbols use layer id kSymbolsLayer
  std::vector<std::pair<int, Tensor<T>>> features;
  // layer id -> per-head row-major [N*N] softmax matrices
  std::vector<std::pair<int, std::vector<std::vector<T>>>> attention;
};

inline constexpr int kSymbolsLayer = 6;

template <typename T>
class Codec {
 public:
  Codec(const ArchSpec& spec, Rational ratio, int image_h, int image_w, std::uint64_t seed);

  // Graph-enabled paths used in training.
  Tensor<T> encode_tensor(const Tensor<T>& image, CodecTaps<T>* taps = nullptr) const;
  Tensor<T> decode_tensor(const Tensor<T>& iq, CodecTaps<T>* taps = nullptr) const;

  // Value-only convenience wrappers.
  SymbolBlock<T> encode(const Tensor<T>& image) const;
  Tensor<T> decode(const SymbolBlock<T>& block) const;

  std::vector<Tensor<T>> parameters() const { return params_.tensors(); }
  const ParamList<T>& named_parameters() const { return params_; }
  void zero_grads();

  CostReport count_cost() const;
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const ArchSpec& spec() const { return spec_; }
  std::string arch_string() const { return spec_.stages; }
  Rational ratio() const { return ratio_; }
  long long symbol_count() const { return symbols_; }
  int symbol_channels() const { return c_sym_; }
  int image_h() const { return image_h_; }
  int image_w() const { return image_w_; }
  int grid_h() const { return image_h_ / 4; }
  int grid_w() const { return image_w_ / 4; }
  bool stage_is_vit(int i) const { return spec_.stages[static_cast<std::size_t>(i)] == 'V'; }
  int stage_grid(int i) const;      // output grid edge of stage i (square grids)
  int stage_out_width(int i) const { return out_width_[static_cast<std::size_t>(i)]; }

 private:
  using Stage = std::variant<ConvStage<T>, VitStage<T>>;

  Tensor<T> run_stage(int i, const Tensor<T>& x, CodecTaps<T>* taps) const;

  ArchSpec spec_;
  Rational ratio_;
  int image_h_, image_w_;
  long long symbols_;
  int c_sym_;
  std::array<int, 6> out_width_{};
  std::vector<Stage> stages_;
  DenseLayer<T> proj_, deproj_;
  Conv2dLayer<T> head_;
  ParamList<T> params_;
};

template <typename T>
Codec<T> build_codec(const ArchSpec& spec, Rational ratio, int image_h, int image_w,
                     std::uint64_t seed) {
  return Codec<T>(spec, ratio, image_h, image_w, seed);
}

// UTF-8 key/value config (arch, gdn, ratio, heads, head_dim, mlp_expansion,
// profile, seed); '#' starts a comment.
struct CodecConfig {
  ArchSpec spec;
  Rational ratio{1, 6};
  std::uint64_t seed = 1;
  std::string profile_name = "paper";
};

CodecConfig parse_codec_config(const std::string& text);
std::string emit_codec_config(const CodecConfig& cfg);

extern template struct SymbolBlock<float>;
extern template struct SymbolBlock<double>;
extern template class Codec<float>;
extern template class Codec<double>;
extern template SymbolBlock<float> power_normalize(const SymbolBlock<float>&);
extern template SymbolBlock<double> power_normalize(const SymbolBlock<double>&);

}  // namespace semlink
