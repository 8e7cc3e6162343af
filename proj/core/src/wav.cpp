#include "mtlsed/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "mtlsed/errors.hpp"

namespace mtlsed {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
std::uint32_t get_u32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::int16_t to_pcm(float x) {
  const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

}  // namespace

void quantize_pcm16(Waveform& w) {
  for (float& s : w.samples) s = static_cast<float>(to_pcm(s) / 32767.0);
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (float s : w.samples) put_u16(out, static_cast<std::uint16_t>(to_pcm(s)));
  return out;
}

void write_wav(const std::string& path, const Waveform& w) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Waveform decode_wav(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          "not a RIFF/WAVE file");
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + size <= bytes.size(), "truncated WAV chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(size >= 16, "short fmt chunk");
      const std::uint16_t format = get_u16(bytes.data() + body);
      const std::uint16_t channels = get_u16(bytes.data() + body + 2);
      w.sample_rate = static_cast<int>(get_u32(bytes.data() + body + 4));
      const std::uint16_t bits = get_u16(bytes.data() + body + 14);
      require(format == 1 && bits == 16, "only 16-bit PCM WAV is supported");
      require(channels == 1, "only mono WAV is supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      require(have_fmt, "WAV data chunk precedes fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<float>(v / 32767.0);
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw ValidationError("WAV file has no data chunk");
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

}  // namespace mtlsed
