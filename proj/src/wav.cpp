#include "ossem/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ossem {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const unsigned char* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::string& s, uint32_t v) {
  s.push_back(char(v & 0xFF));
  s.push_back(char((v >> 8) & 0xFF));
  s.push_back(char((v >> 16) & 0xFF));
  s.push_back(char((v >> 24) & 0xFF));
}
void wr_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xFF));
  s.push_back(char((v >> 8) & 0xFF));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t n = bytes.size();
  if (n < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);

  WavData out;
  bool have_fmt = false;
  int channels = 0, bits = 0;
  size_t off = 12;
  while (off + 8 <= n) {
    const char* id = bytes.data() + off;
    const uint32_t sz = rd_u32(p + off + 4);
    const size_t body = off + 8;
    if (body + sz > n) throw std::runtime_error("wav: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw std::runtime_error("wav: malformed fmt chunk in " + path);
      const uint16_t fmt = rd_u16(p + body);
      channels = rd_u16(p + body + 2);
      out.sample_rate = static_cast<int>(rd_u32(p + body + 4));
      bits = rd_u16(p + body + 14);
      if (fmt != 1) throw std::runtime_error("wav: only PCM supported: " + path);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt in " + path);
      if (channels != 1) throw std::runtime_error("wav: only mono supported: " + path);
      if (bits != 16) throw std::runtime_error("wav: only 16-bit PCM supported: " + path);
      const size_t count = sz / 2;
      out.samples.resize(count);
      for (size_t i = 0; i < count; ++i) {
        const int16_t v = static_cast<int16_t>(rd_u16(p + body + 2 * i));
        out.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return out;
    }
    off = body + sz + (sz & 1);
  }
  throw std::runtime_error("wav: no data chunk in " + path);
}

void write_wav(const std::string& path, const WavData& wav) {
  if (wav.sample_rate <= 0) throw std::invalid_argument("wav: bad sample rate");
  const uint32_t count = static_cast<uint32_t>(wav.samples.size());
  std::string s;
  s.reserve(44 + 2 * count);
  s.append("RIFF");
  wr_u32(s, 36 + 2 * count);
  s.append("WAVE");
  s.append("fmt ");
  wr_u32(s, 16);
  wr_u16(s, 1);  // PCM
  wr_u16(s, 1);  // mono
  wr_u32(s, static_cast<uint32_t>(wav.sample_rate));
  wr_u32(s, static_cast<uint32_t>(wav.sample_rate) * 2);
  wr_u16(s, 2);
  wr_u16(s, 16);
  s.append("data");
  wr_u32(s, 2 * count);
  for (uint32_t i = 0; i < count; ++i) {
    double v = wav.samples[i];
    v = std::clamp(v, -1.0, 32767.0 / 32768.0);
    const auto q = static_cast<int16_t>(std::lrint(v * 32768.0));
    wr_u16(s, static_cast<uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("wav: cannot write " + path);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace ossem
