#include "semlink/frame.hpp"

#include <cmath>

namespace semlink {

namespace {

// Reserved seed so transmitter and receiver derive identical sequences.
constexpr std::uint64_t kPilotSeed = 0x53454D4CULL;

}  // namespace

PilotConfig PilotConfig::defaults(int pilot_length, int calib_length) {
  if (pilot_length < 1 || calib_length < 1)
    throw std::invalid_argument("pilot: lengths must be >= 1");
  PilotConfig cfg;
  cfg.length = pilot_length;
  cfg.calib_length = calib_length;
  RngStream rng(kPilotSeed, streams::kPilot);
  const double amp = 1.0 / std::numbers::sqrt2;
  cfg.pilot.reserve(static_cast<std::size_t>(pilot_length));
  for (int i = 0; i < pilot_length; ++i) {
    const double re = rng.uniform() < 0.5 ? -amp : amp;
    const double im = rng.uniform() < 0.5 ? -amp : amp;
    cfg.pilot.emplace_back(re, im);
  }
  cfg.calib_i.reserve(static_cast<std::size_t>(calib_length));
  cfg.calib_q.reserve(static_cast<std::size_t>(calib_length));
  for (int i = 0; i < calib_length; ++i)
    cfg.calib_i.emplace_back(rng.uniform() < 0.5 ? -1.0 : 1.0, 0.0);
  for (int i = 0; i < calib_length; ++i)
    cfg.calib_q.emplace_back(0.0, rng.uniform() < 0.5 ? -1.0 : 1.0);
  return cfg;
}

template <typename T>
CVec<T> assemble_frame(const SymbolBlock<T>& payload, const PilotConfig& cfg) {
  if (static_cast<int>(cfg.pilot.size()) != cfg.length ||
      static_cast<int>(cfg.calib_i.size()) != cfg.calib_length ||
      static_cast<int>(cfg.calib_q.size()) != cfg.calib_length)
    throw std::invalid_argument("assemble_frame: config sequences not initialized");
  CVec<T> frame;
  frame.reserve(static_cast<std::size_t>(cfg.frame_length(static_cast<int>(payload.count()))));
  const auto push = [&frame](const std::vector<std::complex<double>>& seq) {
    for (const auto& s : seq)
      frame.emplace_back(static_cast<T>(s.real()), static_cast<T>(s.imag()));
  };
  push(cfg.pilot);
  push(cfg.calib_i);
  push(cfg.calib_q);
  for (std::size_t i = 0; i < payload.count(); ++i)
    frame.emplace_back(payload.iq[2 * i], payload.iq[2 * i + 1]);
  push(cfg.pilot);
  return frame;
}

template <typename T>
DetectionResult detect_frame(std::span<const std::complex<T>> buffer, const PilotConfig& cfg) {
  const std::size_t L = cfg.pilot.size();
  if (buffer.size() < L) throw FrameError("detect: buffer shorter than the pilot");
  double pilot_energy = 0.0;
  for (const auto& p : cfg.pilot) pilot_energy += std::norm(p);

  DetectionResult best;
  for (std::size_t tau = 0; tau + L <= buffer.size(); ++tau) {
    std::complex<double> corr{0.0, 0.0};
    double window_energy = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      const std::complex<double> b(static_cast<double>(buffer[tau + k].real()),
                                   static_cast<double>(buffer[tau + k].imag()));
      corr += std::conj(cfg.pilot[k]) * b;
      window_energy += std::norm(b);
    }
    if (window_energy == 0.0) continue;
    const double metric = std::abs(corr) / std::sqrt(window_energy * pilot_energy);
    if (metric > best.peak_metric) {
      best.peak_metric = metric;
      best.offset = tau;
      best.gain_estimate = corr / pilot_energy;
    }
  }
  if (best.peak_metric < cfg.detection_threshold)
    throw FrameError("detect: no frame found (peak metric " + std::to_string(best.peak_metric) +
                     ")");
  return best;
}

template <typename T>
std::complex<double> estimate_gain(std::span<const std::complex<T>> rx,
                                   std::span<const std::complex<T>> known) {
  if (rx.size() != known.size()) throw std::invalid_argument("estimate_gain: length mismatch");
  std::complex<double> cross{0.0, 0.0};
  double energy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    const std::complex<double> b(static_cast<double>(rx[k].real()),
                                 static_cast<double>(rx[k].imag()));
    const std::complex<double> p(static_cast<double>(known[k].real()),
                                 static_cast<double>(known[k].imag()));
    cross += std::conj(p) * b;
    energy += std::norm(p);
  }
  if (energy == 0.0) throw FrameError("estimate_gain: zero pilot energy");
  return cross / energy;
}

template <typename T>
IqEstimate estimate_iq_constants(std::span<const std::complex<T>> rx_calib_i,
                                 std::span<const std::complex<T>> rx_calib_q,
                                 const PilotConfig& cfg) {
  if (rx_calib_i.size() != cfg.calib_i.size() || rx_calib_q.size() != cfg.calib_q.size())
    throw std::invalid_argument("estimate_iq: burst length mismatch");
  // During the pure-I burst the quadrature output is k_i * x_i; project onto
  // the known x_i. Symmetrically for k_q from the pure-Q burst.
  double num_i = 0.0, den_i = 0.0;
  for (std::size_t k = 0; k < rx_calib_i.size(); ++k) {
    const double xi = cfg.calib_i[k].real();
    num_i += static_cast<double>(rx_calib_i[k].imag()) * xi;
    den_i += xi * xi;
  }
  double num_q = 0.0, den_q = 0.0;
  for (std::size_t k = 0; k < rx_calib_q.size(); ++k) {
    const double xq = cfg.calib_q[k].imag();
    num_q += static_cast<double>(rx_calib_q[k].real()) * xq;
    den_q += xq * xq;
  }
  if (den_i == 0.0 || den_q == 0.0) throw FrameError("estimate_iq: zero burst energy");
  return {num_i / den_i, num_q / den_q};
}

template <typename T>
SymbolBlock<T> correct_iq(const SymbolBlock<T>& s, double k_i, double k_q) {
  const double det = 1.0 - k_i * k_q;
  if (std::abs(det) <= 1e-9) throw std::invalid_argument("correct_iq: near-singular constants");
  SymbolBlock<T> out = s;
  for (std::size_t i = 0; i < s.count(); ++i) {
    const double vi = static_cast<double>(s.iq[2 * i]);
    const double vq = static_cast<double>(s.iq[2 * i + 1]);
    out.iq[2 * i] = static_cast<T>((vi - k_q * vq) / det);
    out.iq[2 * i + 1] = static_cast<T>((vq - k_i * vi) / det);
  }
  return out;
}

template <typename T>
SymbolBlock<T> recover_symbols(std::span<const std::complex<T>> buffer, const PilotConfig& cfg,
                               int payload_symbols, RecoveryInfo* info) {
  const auto det = detect_frame(buffer, cfg);
  const std::size_t frame_len = static_cast<std::size_t>(cfg.frame_length(payload_symbols));
  if (det.offset + frame_len > buffer.size())
    throw FrameError("recover: detected frame does not fit the buffer");

  const std::size_t L = static_cast<std::size_t>(cfg.length);
  const std::size_t C = static_cast<std::size_t>(cfg.calib_length);
  const auto slice = buffer.subspan(det.offset, frame_len);

  CVec<double> pilot_t(cfg.pilot.begin(), cfg.pilot.end());
  CVec<double> head(L);
  for (std::size_t k = 0; k < L; ++k)
    head[k] = {static_cast<double>(slice[k].real()), static_cast<double>(slice[k].imag())};
  const auto g = estimate_gain(std::span<const std::complex<double>>(head),
                               std::span<const std::complex<double>>(pilot_t));
  if (std::abs(g) < 1e-12) throw FrameError("recover: vanishing gain estimate");

  // gain-compensate the calibration bursts and payload
  CVec<double> comp(frame_len - L);
  for (std::size_t k = L; k < frame_len; ++k) {
    const std::complex<double> b(static_cast<double>(slice[k].real()),
                                 static_cast<double>(slice[k].imag()));
    comp[k - L] = b / g;
  }
  const std::span<const std::complex<double>> comp_span(comp);
  const auto iq = estimate_iq_constants(comp_span.subspan(0, C), comp_span.subspan(C, C), cfg);

  SymbolBlock<T> payload;
  payload.iq.resize(static_cast<std::size_t>(payload_symbols) * 2);
  for (int i = 0; i < payload_symbols; ++i) {
    const auto& v = comp[2 * C + static_cast<std::size_t>(i)];
    payload.iq[2 * static_cast<std::size_t>(i)] = static_cast<T>(v.real());
    payload.iq[2 * static_cast<std::size_t>(i) + 1] = static_cast<T>(v.imag());
  }
  payload = correct_iq(payload, iq.k_i, iq.k_q);
  if (info != nullptr) {
    info->detection = det;
    info->detection.gain_estimate = g;
    info->k_i = iq.k_i;
    info->k_q = iq.k_q;
  }
  return payload;
}

template <typename T>
std::vector<T> to_interleaved(const CVec<T>& symbols) {
  std::vector<T> iq;
  iq.reserve(symbols.size() * 2);
  for (const auto& s : symbols) {
    iq.push_back(s.real());
    iq.push_back(s.imag());
  }
  return iq;
}

template <typename T>
CVec<T> from_interleaved(std::span<const T> iq) {
  if (iq.size() % 2 != 0) throw std::invalid_argument("from_interleaved: odd length");
  CVec<T> out;
  out.reserve(iq.size() / 2);
  for (std::size_t i = 0; i < iq.size(); i += 2) out.emplace_back(iq[i], iq[i + 1]);
  return out;
}

#define SEMLINK_INSTANTIATE_FRAME(T)                                                  \
  template CVec<T> assemble_frame(const SymbolBlock<T>&, const PilotConfig&);         \
  template DetectionResult detect_frame(std::span<const std::complex<T>>,             \
                                        const PilotConfig&);                          \
  template std::complex<double> estimate_gain(std::span<const std::complex<T>>,       \
                                              std::span<const std::complex<T>>);      \
  template IqEstimate estimate_iq_constants(std::span<const std::complex<T>>,         \
                                            std::span<const std::complex<T>>,         \
                                            const PilotConfig&);                      \
  template SymbolBlock<T> correct_iq(const SymbolBlock<T>&, double, double);          \
  template SymbolBlock<T> recover_symbols(std::span<const std::complex<T>>,           \
                                          const PilotConfig&, int, RecoveryInfo*);    \
  template std::vector<T> to_interleaved(const CVec<T>&);                             \
  template CVec<T> from_interleaved(std::span<const T>);

SEMLINK_INSTANTIATE_FRAME(float)
SEMLINK_INSTANTIATE_FRAME(double)
#undef SEMLINK_INSTANTIATE_FRAME

}  // namespace semlink
