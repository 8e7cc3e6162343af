#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtlsed {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// 16-bit PCM mono RIFF/WAVE. Samples are clamped to [-1, 1] and scaled by 32767.
void write_wav(const std::string& path, const Waveform& w);
std::vector<std::uint8_t> encode_wav(const Waveform& w);

/// Reads a 16-bit PCM WAV. Multi-channel input is rejected, not down-mixed.
Waveform read_wav(const std::string& path);
Waveform decode_wav(const std::vector<std::uint8_t>& bytes);

/// Rounds every sample to the 16-bit grid so an encode/decode round trip is exact.
void quantize_pcm16(Waveform& w);

}  // namespace mtlsed
