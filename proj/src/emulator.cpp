#include "semlink/emulator.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace semlink {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 1 + 1 + 4 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> EmulatorMessage::serialize() const {
  if (payload_iq.size() % 2 != 0)
    throw std::invalid_argument("emulator message: odd payload length");
  const std::uint32_t n = static_cast<std::uint32_t>(payload_iq.size() / 2);
  if (n > kMaxSymbols) throw std::invalid_argument("emulator message: payload too large");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kHeaderBytes + payload_iq.size() * 4);
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytes.push_back(version);
  bytes.push_back(flags);
  put_u32(bytes, sequence);
  put_u32(bytes, n);
  for (float f : payload_iq) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(bytes, bits);
  }
  return bytes;
}

std::optional<EmulatorMessage> EmulatorMessage::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) return std::nullopt;
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) return std::nullopt;
  EmulatorMessage msg;
  msg.version = bytes[4];
  if (msg.version != kVersion) return std::nullopt;
  msg.flags = bytes[5];
  msg.sequence = get_u32(bytes.data() + 6);
  const std::uint32_t n = get_u32(bytes.data() + 10);
  if (n > kMaxSymbols) return std::nullopt;
  if (bytes.size() != kHeaderBytes + static_cast<std::size_t>(n) * 8) return std::nullopt;
  msg.payload_iq.resize(static_cast<std::size_t>(n) * 2);
  for (std::size_t i = 0; i < msg.payload_iq.size(); ++i) {
    const std::uint32_t bits = get_u32(bytes.data() + kHeaderBytes + i * 4);
    std::memcpy(&msg.payload_iq[i], &bits, 4);
  }
  return msg;
}

LinkEmulator::LinkEmulator(const ChannelConfig& channel, const ImpairmentConfig& impairments)
    : channel_(channel), impairments_(impairments), rng_(channel.seed, streams::kEmulator) {
  if (impairments_.enabled) impairments_.validate();
}

void LinkEmulator::reset() { rng_ = RngStream(channel_.seed, streams::kEmulator); }

std::vector<float> LinkEmulator::process(std::span<const float> iq) {
  if (iq.size() % 2 != 0) throw std::invalid_argument("emulator: odd I/Q stream");
  SymbolBlock<double> block;
  block.iq.assign(iq.begin(), iq.end());

  if (impairments_.enabled) {
    // transmit chain order: clip, DAC quantization, I/Q imbalance
    const double fs = impairments_.full_scale();
    block = clip_symbols_abs(block, fs).block;
    block = quantize_dac(block, impairments_.dac_bits, fs);
    block = apply_iq_imbalance(block, impairments_.k_i, impairments_.k_q);
  }
  switch (channel_.kind) {
    case ChannelKind::awgn:
      block = awgn_apply(block, channel_.snr_db, rng_);
      break;
    case ChannelKind::rayleigh_slow:
      block = rayleigh_apply(block, channel_.snr_db, rng_, channel_.equalization).block;
      break;
  }
  return std::vector<float>(block.iq.begin(), block.iq.end());
}

UdpEmulatorServer::UdpEmulatorServer(const std::string& bind_addr, std::uint16_t port,
                                     const ChannelConfig& channel,
                                     const ImpairmentConfig& impairments)
    : emulator_(channel, impairments) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw std::runtime_error("emulator: cannot create socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_addr.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw std::runtime_error("emulator: bad bind address " + bind_addr);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw std::runtime_error("emulator: cannot bind " + bind_addr + ":" + std::to_string(port));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);

  timeval tv{};
  tv.tv_usec = 100000;  // poll the stop flag at 10 Hz
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

UdpEmulatorServer::~UdpEmulatorServer() {
  stop();
  if (fd_ >= 0) ::close(fd_);
}

void UdpEmulatorServer::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] { serve_loop(); });
}

void UdpEmulatorServer::run() {
  if (running_.exchange(true)) return;
  serve_loop();
}

void UdpEmulatorServer::stop() {
  running_.store(false);
  if (thread_.joinable()) thread_.join();
}

void UdpEmulatorServer::serve_loop() {
  std::vector<std::uint8_t> buf(1 << 16);
  while (running_.load()) {
    sockaddr_in peer{};
    socklen_t peer_len = sizeof(peer);
    const ssize_t got = ::recvfrom(fd_, buf.data(), buf.size(), 0,
                                   reinterpret_cast<sockaddr*>(&peer), &peer_len);
    if (got < 0) continue;  // timeout or interrupt
    auto msg = EmulatorMessage::parse(
        std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(got)));
    if (!msg.has_value()) {
      dropped_.fetch_add(1);
      continue;
    }
    EmulatorMessage reply;
    reply.flags = msg->flags;
    reply.sequence = msg->sequence;
    reply.payload_iq = emulator_.process(msg->payload_iq);
    const auto bytes = reply.serialize();
    ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&peer), peer_len);
    processed_.fetch_add(1);
  }
}

std::vector<float> udp_exchange(const std::string& host, std::uint16_t port,
                                const EmulatorMessage& request, int timeout_ms) {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw std::runtime_error("emulator client: cannot create socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::runtime_error("emulator client: bad host " + host);
  }
  timeval tv{};
  tv.tv_sec = timeout_ms / 1000;
  tv.tv_usec = (timeout_ms % 1000) * 1000;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

  const auto bytes = request.serialize();
  if (::sendto(fd, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) < 0) {
    ::close(fd);
    throw std::runtime_error("emulator client: send failed");
  }
  std::vector<std::uint8_t> buf(1 << 16);
  const ssize_t got = ::recv(fd, buf.data(), buf.size(), 0);
  ::close(fd);
  if (got < 0) throw std::runtime_error("emulator client: timeout waiting for reply");
  auto reply =
      EmulatorMessage::parse(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(got)));
  if (!reply.has_value()) throw std::runtime_error("emulator client: malformed reply");
  if (reply->sequence != request.sequence)
    throw std::runtime_error("emulator client: sequence mismatch");
  return std::move(reply->payload_iq);
}

LinkSimResult linksim(const Codec<float>& codec, std::span<const DatasetRecord> images,
                      const LinkSimOptions& options) {
  if (images.empty()) throw std::invalid_argument("linksim: no images");
  if (options.amplitude_divisor <= 0.0)
    throw std::invalid_argument("linksim: amplitude divisor must be > 0");
  const bool wire = !options.udp_host.empty();
  LinkEmulator local(options.channel, options.impairments);

  LinkSimResult result;
  std::uint32_t sequence = 0;
  double snr_sum = 0.0;
  int snr_count = 0;
  for (const auto& rec : images) {
    auto img = to_tensor<float>(rec);
    auto block = codec.encode(img);
    auto frame = assemble_frame(block, options.pilots);
    for (auto& s : frame) s /= static_cast<float>(options.amplitude_divisor);
    auto tx = to_interleaved(frame);

    std::vector<float> rx_iq;
    try {
      if (wire) {
        EmulatorMessage msg;
        msg.sequence = sequence++;
        msg.payload_iq = tx;
        rx_iq = udp_exchange(options.udp_host, options.udp_port, msg);
      } else {
        rx_iq = local.process(tx);
      }
      result.received_streams.push_back(rx_iq);
      const auto rx = from_interleaved(std::span<const float>(rx_iq));
      SymbolBlock<float> payload =
          recover_symbols(std::span<const std::complex<float>>(rx), options.pilots,
                          static_cast<int>(block.count()));
      snr_sum += empirical_snr(block, payload);
      ++snr_count;
      auto out = codec.decode(payload);
      result.metrics.per_image_psnr.push_back(psnr(out, img));
      if (img.dim(0) >= 11 && img.dim(1) >= 11) {
        result.metrics.has_ssim = true;
        result.metrics.per_image_ssim.push_back(ssim(out, img));
      }
    } catch (const std::exception&) {
      ++result.frame_failures;
    }
  }

  const auto mean_std = [](const std::vector<double>& v, double& mean, double& stddev) {
    if (v.empty()) return;
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    stddev = std::sqrt(var / static_cast<double>(v.size()));
  };
  mean_std(result.metrics.per_image_psnr, result.metrics.mean_psnr, result.metrics.std_psnr);
  mean_std(result.metrics.per_image_ssim, result.metrics.mean_ssim, result.metrics.std_ssim);
  if (snr_count > 0) result.mean_payload_snr_db = snr_sum / snr_count;
  return result;
}

}  // namespace semlink
