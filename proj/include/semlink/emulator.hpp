// UDP channel emulator standing in for the radio hardware: request/reply
// datagrams carry interleaved f32 I/Q symbols; each request passes through
// the transmit impairment chain (clip -> DAC quantize -> I/Q imbalance) and
// the configured channel. The same processing core backs an in-process mode,
// so wire and local paths produce identical symbol streams for one RNG state.
//
// Wire format (little endian): magic "SEMC", u8 version, u8 flags, u32
// sequence, u32 n_symbols, then n_symbols * 2 f32 payload. The reply echoes
// the sequence number. Datagrams above 4096 symbols or failing to parse are
// dropped and counted.
#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/frame.hpp"
#include "semlink/train.hpp"

namespace semlink {

struct EmulatorMessage {
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kMaxSymbols = 4096;

  std::uint8_t version = kVersion;
  std::uint8_t flags = 0;
  std::uint32_t sequence = 0;
  std::vector<float> payload_iq;  // n_symbols * 2

  std::vector<std::uint8_t> serialize() const;
  static std::optional<EmulatorMessage> parse(std::span<const std::uint8_t> bytes);
};

// Impairment chain + channel on raw f32 I/Q streams (math in double).
class LinkEmulator {
 public:
  LinkEmulator(const ChannelConfig& channel, const ImpairmentConfig& impairments);

  std::vector<float> process(std::span<const float> iq);
  void reset();  // restart the noise stream

 private:
  ChannelConfig channel_;
  ImpairmentConfig impairments_;
  RngStream rng_;
};

class UdpEmulatorServer {
 public:
  UdpEmulatorServer(const std::string& bind_addr, std::uint16_t port,
                    const ChannelConfig& channel, const ImpairmentConfig& impairments);
  ~UdpEmulatorServer();

  std::uint16_t port() const { return port_; }
  void start();  // serve on a background thread
  void stop();
  void run();    // serve on the calling thread until stop()

  std::uint64_t processed() const { return processed_.load(); }
  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  void serve_loop();

  int fd_ = -1;
  std::uint16_t port_ = 0;
  LinkEmulator emulator_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> processed_{0};
  std::atomic<std::uint64_t> dropped_{0};
};

// Blocking request/reply against an emulator server; throws on timeout.
std::vector<float> udp_exchange(const std::string& host, std::uint16_t port,
                                const EmulatorMessage& request, int timeout_ms = 2000);

struct LinkSimOptions {
  ChannelConfig channel;
  ImpairmentConfig impairments;
  PilotConfig pilots = PilotConfig::defaults();
  // SNR control as on the prototype: every transmitted sample is divided by
  // this constant before the link.
  double amplitude_divisor = 1.0;
  // empty host => in-process emulator
  std::string udp_host;
  std::uint16_t udp_port = 0;
};

struct LinkSimResult {
  EvalResult metrics;
  double mean_payload_snr_db = 0.0;  // empirical, recovered vs transmitted payload
  int frame_failures = 0;
  std::vector<std::vector<float>> received_streams;  // raw link output per image
};

// Full chain per image: encode -> frame -> (wire | in-process) -> recover ->
// decode -> metrics.
LinkSimResult linksim(const Codec<float>& codec, std::span<const DatasetRecord> images,
                      const LinkSimOptions& options);

}  // namespace semlink
