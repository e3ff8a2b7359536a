#include "semlink/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace semlink {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'W'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::uint8_t* p;
  std::size_t remaining;
  void need(std::size_t n) const {
    if (remaining < n) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    remaining -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    remaining -= 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --remaining;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    remaining -= n;
    return s;
  }
};

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensorF32>& tensors) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u16(buf, kCheckpointVersion);
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: name too long");
    if (t.shape.size() > 0xFF) throw std::invalid_argument("checkpoint: rank too large");
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    if (n != t.values.size()) throw std::invalid_argument("checkpoint: shape/value mismatch");
    put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
    buf.append(t.name);
    buf.push_back(static_cast<char>(t.shape.size()));
    for (int d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_f32(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<NamedTensorF32> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()};

  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  r.p += 4;
  r.remaining -= 4;
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");

  std::vector<NamedTensorF32> tensors;
  while (r.remaining > 0) {
    NamedTensorF32 t;
    const std::uint16_t name_len = r.u16();
    t.name = r.bytes(name_len);
    const std::uint8_t rank = r.u8();
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) {
      const std::uint32_t d = r.u32();
      t.shape.push_back(static_cast<int>(d));
      n *= d;
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = r.f32();
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace semlink
