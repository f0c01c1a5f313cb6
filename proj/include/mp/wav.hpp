#pragma once

#include <filesystem>
#include <vector>

#include "mp/common.hpp"

namespace mp {

struct Waveform {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, in [-1, 1]
};

/// Reads a mono 16-bit signed little-endian PCM WAV file.
Waveform read_wav(const std::filesystem::path& path);

/// Writes a mono 16-bit PCM WAV file (samples clipped to [-1, 1]).
void write_wav(const std::filesystem::path& path, const Waveform& wav);

}  // namespace mp
