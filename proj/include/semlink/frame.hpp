// Baseband framing and calibration: known pilots wrap the payload for
// autocorrelation-based detection and least-squares gain compensation, and a
// pair of pure-I / pure-Q bursts makes the I/Q interference constants
// identifiable. Frame layout:
//   [ head pilot | I-calib burst | Q-calib burst | payload | tail pilot ]
#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

#include "semlink/codec.hpp"
#include "semlink/rng.hpp"

namespace semlink {

struct FrameError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PilotConfig {
  int length = 64;        // head and tail pilot symbols
  int calib_length = 32;  // per calibration burst
  double detection_threshold = 0.5;
  // Known unit-power sequences; filled by defaults() from a reserved stream.
  std::vector<std::complex<double>> pilot;    // QPSK
  std::vector<std::complex<double>> calib_i;  // pure in-phase (+/-1, 0)
  std::vector<std::complex<double>> calib_q;  // pure quadrature (0, +/-1)

  static PilotConfig defaults(int pilot_length = 64, int calib_length = 32);
  int frame_length(int payload_symbols) const {
    return 2 * length + 2 * calib_length + payload_symbols;
  }
};

struct DetectionResult {
  std::size_t offset = 0;
  double peak_metric = 0.0;
  std::complex<double> gain_estimate{1.0, 0.0};
};

struct RecoveryInfo {
  DetectionResult detection;
  double k_i = 0.0, k_q = 0.0;
};

template <typename T>
using CVec = std::vector<std::complex<T>>;

template <typename T>
CVec<T> assemble_frame(const SymbolBlock<T>& payload, const PilotConfig& cfg);

// Energy-normalized cross-correlation against the head pilot; the peak lag is
// the frame offset. Throws FrameError when the best metric stays below the
// configured threshold.
template <typename T>
DetectionResult detect_frame(std::span<const std::complex<T>> buffer, const PilotConfig& cfg);

// Least-squares complex gain <known, rx> / <known, known>.
template <typename T>
std::complex<double> estimate_gain(std::span<const std::complex<T>> rx,
                                   std::span<const std::complex<T>> known);

struct IqEstimate {
  double k_i = 0.0;
  double k_q = 0.0;
};

template <typename T>
IqEstimate estimate_iq_constants(std::span<const std::complex<T>> rx_calib_i,
                                 std::span<const std::complex<T>> rx_calib_q,
                                 const PilotConfig& cfg);

// Exact inverse of apply_iq_imbalance; requires |1 - k_i k_q| > 1e-9.
template <typename T>
SymbolBlock<T> correct_iq(const SymbolBlock<T>& s, double k_i, double k_q);

// detect -> gain-compensate -> estimate & correct I/Q -> extract payload.
template <typename T>
SymbolBlock<T> recover_symbols(std::span<const std::complex<T>> buffer, const PilotConfig& cfg,
                               int payload_symbols, RecoveryInfo* info = nullptr);

// Interleaved little-endian-layout reals <-> complex helpers (frame wire form).
template <typename T>
std::vector<T> to_interleaved(const CVec<T>& symbols);
template <typename T>
CVec<T> from_interleaved(std::span<const T> iq);

#define SEMLINK_DECLARE_FRAME(T)                                                             \
  extern template CVec<T> assemble_frame(const SymbolBlock<T>&, const PilotConfig&);         \
  extern template DetectionResult detect_frame(std::span<const std::complex<T>>,             \
                                               const PilotConfig&);                          \
  extern template std::complex<double> estimate_gain(std::span<const std::complex<T>>,       \
                                                     std::span<const std::complex<T>>);      \
  extern template IqEstimate estimate_iq_constants(std::span<const std::complex<T>>,         \
                                                   std::span<const std::complex<T>>,         \
                                                   const PilotConfig&);                      \
  extern template SymbolBlock<T> correct_iq(const SymbolBlock<T>&, double, double);          \
  extern template SymbolBlock<T> recover_symbols(std::span<const std::complex<T>>,           \
                                                 const PilotConfig&, int, RecoveryInfo*);    \
  extern template std::vector<T> to_interleaved(const CVec<T>&);                             \
  extern template CVec<T> from_interleaved(std::span<const T>);

SEMLINK_DECLARE_FRAME(float)
SEMLINK_DECLARE_FRAME(double)
#undef SEMLINK_DECLARE_FRAME

}  // namespace semlink
