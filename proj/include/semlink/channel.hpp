// Stochastic channel and transmit-hardware impairment models over
// SymbolBlocks, plus graph-enabled variants for training where the noise and
// fading gain enter as constants (the channel is a non-trainable layer).
// SNR is defined against unit mean symbol power; total complex noise variance
// is 10^(-snr/10), split evenly between I and Q.
#pragma once

#include <complex>
#include <limits>

#include "semlink/codec.hpp"
#include "semlink/rng.hpp"
#include "semlink/tensor.hpp"

namespace semlink {

enum class ChannelKind { awgn, rayleigh_slow };
enum class Equalization { none, perfect, pilot };

struct ChannelConfig {
  ChannelKind kind = ChannelKind::awgn;
  double snr_db = 10.0;  // +infinity disables the noise entirely
  Equalization equalization = Equalization::none;
  std::uint64_t seed = 0;
};

struct ImpairmentConfig {
  bool enabled = true;
  double clip_threshold = 3.0;  // multiple of the reference RMS (unit-power symbols)
  int dac_bits = 12;
  double k_i = 0.0, k_q = 0.0;

  void validate() const;
  // Absolute full-scale for a hardware chain fed unit-power symbols: the
  // per-component RMS of such symbols is 1/sqrt(2).
  double full_scale() const { return clip_threshold / std::numbers::sqrt2; }
};

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

template <typename T>
SymbolBlock<T> awgn_apply(const SymbolBlock<T>& s, double snr_db, RngStream& rng);

template <typename T>
struct RayleighResult {
  SymbolBlock<T> block;
  std::complex<double> h;
  bool deep_fade = false;  // |h| < 1e-9; value is kept, flagged for metrics
};

template <typename T>
RayleighResult<T> rayleigh_apply(const SymbolBlock<T>& s, double snr_db, RngStream& rng,
                                 Equalization eq = Equalization::none);
// Test hook with the fading gain pinned.
template <typename T>
RayleighResult<T> rayleigh_apply_with_h(const SymbolBlock<T>& s, double snr_db, RngStream& rng,
                                        std::complex<double> h, Equalization eq);

template <typename T>
struct ClipResult {
  SymbolBlock<T> block;
  double clip_fraction = 0.0;  // fraction of I/Q components clamped
  double rms = 0.0;            // per-component RMS measured from the input
};

// Clamp I and Q independently at +/- threshold_rms_multiple * RMS(input).
template <typename T>
ClipResult<T> clip_symbols(const SymbolBlock<T>& s, double threshold_rms_multiple);
// Same with an absolute limit (fixed hardware full-scale).
template <typename T>
ClipResult<T> clip_symbols_abs(const SymbolBlock<T>& s, double abs_limit);

// Uniform mid-rise quantizer: 2^bits levels spanning [-full_scale, +full_scale]
// per component.
template <typename T>
SymbolBlock<T> quantize_dac(const SymbolBlock<T>& s, int bits, double full_scale);

// i' = i + k_q q, q' = k_i i + q.
template <typename T>
SymbolBlock<T> apply_iq_imbalance(const SymbolBlock<T>& s, double k_i, double k_q);

// 10 log10(sum|clean|^2 / sum|noisy-clean|^2); +infinity when the error
// vector is exactly zero.
template <typename T>
double empirical_snr(const SymbolBlock<T>& clean, const SymbolBlock<T>& noisy);

// Graph-enabled channel application on interleaved I/Q tensors. Noise and h
// are constants in the graph: d(output)/d(input) is the identity for AWGN and
// the fixed complex gain for Rayleigh.
template <typename T>
Tensor<T> awgn_apply_t(const Tensor<T>& iq, double snr_db, RngStream& rng);

template <typename T>
struct RayleighTensorResult {
  Tensor<T> iq;
  std::complex<double> h;
};

template <typename T>
RayleighTensorResult<T> rayleigh_apply_t(const Tensor<T>& iq, double snr_db, RngStream& rng,
                                         Equalization eq = Equalization::none);

// Dispatch on cfg.kind; used by the training loop.
template <typename T>
Tensor<T> channel_apply_t(const Tensor<T>& iq, const ChannelConfig& cfg, RngStream& rng);

#define SEMLINK_DECLARE_CHANNEL(T)                                                            \
  extern template SymbolBlock<T> awgn_apply(const SymbolBlock<T>&, double, RngStream&);       \
  extern template RayleighResult<T> rayleigh_apply(const SymbolBlock<T>&, double, RngStream&, \
                                                   Equalization);                             \
  extern template RayleighResult<T> rayleigh_apply_with_h(const SymbolBlock<T>&, double,      \
                                                          RngStream&, std::complex<double>,   \
                                                          Equalization);                      \
  extern template ClipResult<T> clip_symbols(const SymbolBlock<T>&, double);                  \
  extern template ClipResult<T> clip_symbols_abs(const SymbolBlock<T>&, double);              \
  extern template SymbolBlock<T> quantize_dac(const SymbolBlock<T>&, int, double);            \
  extern template SymbolBlock<T> apply_iq_imbalance(const SymbolBlock<T>&, double, double);   \
  extern template double empirical_snr(const SymbolBlock<T>&, const SymbolBlock<T>&);         \
  extern template Tensor<T> awgn_apply_t(const Tensor<T>&, double, RngStream&);               \
  extern template RayleighTensorResult<T> rayleigh_apply_t(const Tensor<T>&, double,          \
                                                           RngStream&, Equalization);         \
  extern template Tensor<T> channel_apply_t(const Tensor<T>&, const ChannelConfig&, RngStream&);

SEMLINK_DECLARE_CHANNEL(float)
SEMLINK_DECLARE_CHANNEL(double)
#undef SEMLINK_DECLARE_CHANNEL

}  // namespace semlink
