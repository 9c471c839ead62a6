#pragma once

#include <string>
#include <vector>

namespace ossem {

// Mono PCM16 little-endian audio. Samples normalized to [-1, 1) in memory.
struct WavData {
  int sample_rate = 16000;
  std::vector<double> samples;
};

WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const WavData& wav);

}  // namespace ossem
