#include "dydec/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "dydec/binary_io.hpp"

namespace dydec {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write wav file " + path);
  const auto n = static_cast<std::uint32_t>(clip.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  binio::put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  binio::put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  binio::put_u32(os, rate);
  binio::put_u32(os, rate * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  binio::put_u32(os, data_bytes);
  for (Eigen::Index i = 0; i < clip.size(); ++i) {
    const double v = std::clamp(clip.samples[i], -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(v * 32767.0));
    put_u16(os, static_cast<std::uint16_t>(q));
  }
  if (!os) throw Error("short write to " + path);
}

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open wav file " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    if (pos + 8 + len > buf.size()) throw Error(path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1u);
  }
  if (data == nullptr || rate == 0) throw Error(path + ": missing fmt or data chunk");
  if (channels != 1) throw Error(path + ": only mono audio is supported");

  AudioClip clip;
  clip.sample_rate = rate;
  if (format == 1 && bits == 16) {
    clip.samples.resize(data_len / 2);
    for (Eigen::Index i = 0; i < clip.size(); ++i)
      clip.samples[i] = static_cast<std::int16_t>(read_u16(data + 2 * i)) / 32767.0;
  } else if (format == 3 && bits == 32) {
    clip.samples.resize(data_len / 4);
    for (Eigen::Index i = 0; i < clip.size(); ++i)
      clip.samples[i] = std::bit_cast<float>(read_u32(data + 4 * i));
  } else {
    throw Error(path + ": unsupported sample format");
  }
  return clip;
}

}  // namespace dydec
