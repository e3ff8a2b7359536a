#include "semlink/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "semlink/kernels.hpp"

namespace semlink {

void ImpairmentConfig::validate() const {
  if (clip_threshold <= 0.0) throw std::invalid_argument("impairments: clip threshold must be > 0");
  if (dac_bits < 4 || dac_bits > 16)
    throw std::invalid_argument("impairments: dac_bits must lie in [4,16]");
}

namespace {

// Per-component noise stddev for the given SNR against unit symbol power.
double component_sigma(double snr_db) {
  const double variance = std::pow(10.0, -snr_db / 10.0);
  return std::sqrt(variance / 2.0);
}

// One complex draw per symbol, I then Q, shared by the block and tensor paths
// so both consume the stream identically.
std::vector<double> sample_noise(std::size_t reals, double sigma_c, RngStream& rng) {
  std::vector<double> noise(reals);
  for (auto& v : noise) v = sigma_c * rng.normal();
  return noise;
}

std::complex<double> sample_h(RngStream& rng) {
  // CN(0,1): unit mean square magnitude
  const double re = rng.normal() / std::numbers::sqrt2;
  const double im = rng.normal() / std::numbers::sqrt2;
  return {re, im};
}

}  // namespace

template <typename T>
SymbolBlock<T> awgn_apply(const SymbolBlock<T>& s, double snr_db, RngStream& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return s;
  if (!std::isfinite(snr_db)) throw std::invalid_argument("awgn: snr must be finite or +inf");
  SymbolBlock<T> out = s;
  const auto noise = sample_noise(s.iq.size(), component_sigma(snr_db), rng);
  for (std::size_t i = 0; i < out.iq.size(); ++i)
    out.iq[i] = static_cast<T>(static_cast<double>(out.iq[i]) + noise[i]);
  return out;
}

template <typename T>
RayleighResult<T> rayleigh_apply_with_h(const SymbolBlock<T>& s, double snr_db, RngStream& rng,
                                        std::complex<double> h, Equalization eq) {
  RayleighResult<T> res;
  res.h = h;
  res.deep_fade = std::abs(h) < 1e-9;
  res.block = s;
  for (std::size_t i = 0; i < s.count(); ++i) res.block.set_symbol(i, h * s.symbol(i));
  res.block = awgn_apply(res.block, snr_db, rng);
  if (eq == Equalization::perfect) {
    if (res.deep_fade) throw std::runtime_error("rayleigh: cannot equalize a deep fade");
    for (std::size_t i = 0; i < s.count(); ++i)
      res.block.set_symbol(i, res.block.symbol(i) / h);
  }
  return res;
}

template <typename T>
RayleighResult<T> rayleigh_apply(const SymbolBlock<T>& s, double snr_db, RngStream& rng,
                                 Equalization eq) {
  return rayleigh_apply_with_h(s, snr_db, rng, sample_h(rng), eq);
}

template <typename T>
ClipResult<T> clip_symbols_abs(const SymbolBlock<T>& s, double abs_limit) {
  if (abs_limit <= 0.0) throw std::invalid_argument("clip: limit must be > 0");
  ClipResult<T> res;
  res.block = s;
  res.rms = abs_limit;  // caller-defined scale
  if (std::isinf(abs_limit)) return res;
  std::size_t clipped = 0;
  for (auto& v : res.block.iq) {
    const double x = static_cast<double>(v);
    if (x > abs_limit) {
      v = static_cast<T>(abs_limit);
      ++clipped;
    } else if (x < -abs_limit) {
      v = static_cast<T>(-abs_limit);
      ++clipped;
    }
  }
  res.clip_fraction =
      s.iq.empty() ? 0.0 : static_cast<double>(clipped) / static_cast<double>(s.iq.size());
  return res;
}

template <typename T>
ClipResult<T> clip_symbols(const SymbolBlock<T>& s, double threshold_rms_multiple) {
  if (threshold_rms_multiple <= 0.0) throw std::invalid_argument("clip: threshold must be > 0");
  if (std::isinf(threshold_rms_multiple)) {
    ClipResult<T> res;
    res.block = s;
    res.rms = 0.0;
    return res;
  }
  const double ms = kernels::Kern<T>::sumsq(s.iq.size(), s.iq.data()) /
                    static_cast<double>(s.iq.size());
  const double rms = std::sqrt(ms);
  auto res = clip_symbols_abs(s, threshold_rms_multiple * rms);
  res.rms = rms;
  return res;
}

template <typename T>
SymbolBlock<T> quantize_dac(const SymbolBlock<T>& s, int bits, double full_scale) {
  if (bits < 1 || bits > 24) throw std::invalid_argument("quantize: bits out of range");
  if (full_scale <= 0.0) throw std::invalid_argument("quantize: full_scale must be > 0");
  const double step = 2.0 * full_scale / std::pow(2.0, bits);
  const double top = full_scale - step / 2.0;
  SymbolBlock<T> out = s;
  for (auto& v : out.iq) {
    double q = step * (std::floor(static_cast<double>(v) / step) + 0.5);
    q = std::min(std::max(q, -top), top);
    v = static_cast<T>(q);
  }
  return out;
}

template <typename T>
SymbolBlock<T> apply_iq_imbalance(const SymbolBlock<T>& s, double k_i, double k_q) {
  SymbolBlock<T> out = s;
  for (std::size_t i = 0; i < s.count(); ++i) {
    const double vi = static_cast<double>(s.iq[2 * i]);
    const double vq = static_cast<double>(s.iq[2 * i + 1]);
    out.iq[2 * i] = static_cast<T>(vi + k_q * vq);
    out.iq[2 * i + 1] = static_cast<T>(k_i * vi + vq);
  }
  return out;
}

template <typename T>
double empirical_snr(const SymbolBlock<T>& clean, const SymbolBlock<T>& noisy) {
  if (clean.iq.size() != noisy.iq.size())
    throw std::invalid_argument("empirical_snr: length mismatch");
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < clean.iq.size(); ++i) {
    const double c = static_cast<double>(clean.iq[i]);
    const double d = static_cast<double>(noisy.iq[i]) - c;
    sig += c * c;
    err += d * d;
  }
  if (err == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(sig / err);
}

template <typename T>
Tensor<T> awgn_apply_t(const Tensor<T>& iq, double snr_db, RngStream& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return add_const(iq, T(0));
  if (!std::isfinite(snr_db)) throw std::invalid_argument("awgn: snr must be finite or +inf");
  const auto noise = sample_noise(iq.data().size(), component_sigma(snr_db), rng);
  auto noise_t = Tensor<T>::zeros(iq.shape());
  auto nd = noise_t.data();
  for (std::size_t i = 0; i < nd.size(); ++i) nd[i] = static_cast<T>(noise[i]);
  return add(iq, noise_t);
}

namespace {

// y_I = a x_I - b x_Q, y_Q = b x_I + a x_Q with (a, b) constant.
template <typename T>
Tensor<T> complex_scale_t(const Tensor<T>& iq, double a, double b) {
  const std::size_t n = iq.data().size() / 2;
  std::vector<T> out(iq.data().size());
  const T* p = iq.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double vi = static_cast<double>(p[2 * i]);
    const double vq = static_cast<double>(p[2 * i + 1]);
    out[2 * i] = static_cast<T>(a * vi - b * vq);
    out[2 * i + 1] = static_cast<T>(b * vi + a * vq);
  }
  auto impl = iq.impl_;
  return detail::make_node<T>(iq.shape(), std::move(out), {iq},
                              [impl, a, b, n](detail::TensorImpl<T>& self) {
                                if (!impl->requires_grad) return;
                                impl->ensure_grad();
                                for (std::size_t i = 0; i < n; ++i) {
                                  const double gi = static_cast<double>(self.grad[2 * i]);
                                  const double gq = static_cast<double>(self.grad[2 * i + 1]);
                                  impl->grad[2 * i] += static_cast<T>(a * gi + b * gq);
                                  impl->grad[2 * i + 1] += static_cast<T>(-b * gi + a * gq);
                                }
                              });
}

}  // namespace

template <typename T>
RayleighTensorResult<T> rayleigh_apply_t(const Tensor<T>& iq, double snr_db, RngStream& rng,
                                         Equalization eq) {
  RayleighTensorResult<T> res;
  res.h = sample_h(rng);
  auto faded = complex_scale_t(iq, res.h.real(), res.h.imag());
  auto noisy = awgn_apply_t(faded, snr_db, rng);
  if (eq == Equalization::perfect) {
    const std::complex<double> inv = 1.0 / res.h;
    res.iq = complex_scale_t(noisy, inv.real(), inv.imag());
  } else {
    res.iq = noisy;
  }
  return res;
}

template <typename T>
Tensor<T> channel_apply_t(const Tensor<T>& iq, const ChannelConfig& cfg, RngStream& rng) {
  switch (cfg.kind) {
    case ChannelKind::awgn:
      return awgn_apply_t(iq, cfg.snr_db, rng);
    case ChannelKind::rayleigh_slow:
      return rayleigh_apply_t(iq, cfg.snr_db, rng, cfg.equalization).iq;
  }
  throw std::invalid_argument("channel: unknown kind");
}

#define SEMLINK_INSTANTIATE_CHANNEL(T)                                                       \
  template SymbolBlock<T> awgn_apply(const SymbolBlock<T>&, double, RngStream&);             \
  template RayleighResult<T> rayleigh_apply(const SymbolBlock<T>&, double, RngStream&,       \
                                            Equalization);                                   \
  template RayleighResult<T> rayleigh_apply_with_h(const SymbolBlock<T>&, double, RngStream&,\
                                                   std::complex<double>, Equalization);      \
  template ClipResult<T> clip_symbols(const SymbolBlock<T>&, double);                        \
  template ClipResult<T> clip_symbols_abs(const SymbolBlock<T>&, double);                    \
  template SymbolBlock<T> quantize_dac(const SymbolBlock<T>&, int, double);                  \
  template SymbolBlock<T> apply_iq_imbalance(const SymbolBlock<T>&, double, double);         \
  template double empirical_snr(const SymbolBlock<T>&, const SymbolBlock<T>&);               \
  template Tensor<T> awgn_apply_t(const Tensor<T>&, double, RngStream&);                     \
  template RayleighTensorResult<T> rayleigh_apply_t(const Tensor<T>&, double, RngStream&,    \
                                                    Equalization);                           \
  template Tensor<T> channel_apply_t(const Tensor<T>&, const ChannelConfig&, RngStream&);

SEMLINK_INSTANTIATE_CHANNEL(float)
SEMLINK_INSTANTIATE_CHANNEL(double)
#undef SEMLINK_INSTANTIATE_CHANNEL

}  // namespace semlink
