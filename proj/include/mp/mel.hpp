#pragma once

#include <span>

#include "mp/tensor.hpp"

namespace mp {

struct MelParams {
  double window_s = 0.025;   // Hann analysis window
  double hop_s = 0.010;
  int bands = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;   // capped at Nyquist
  double floor = 1e-10;      // magnitude floor before the natural log
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Log-mel spectrogram: Hann window, FFT sized to the next power of two of
/// the window length (512 at 16 kHz), triangular mel filterbank over the
/// magnitude spectrum, natural log with a fixed floor. Frame count is
/// 1 + floor((samples - window) / hop). Accepted sample rates: 8000, 16000,
/// 44100, 48000.
Tensor<double> mel_spectrogram(std::span<const double> samples, int sample_rate,
                               const MelParams& params = {});

}  // namespace mp
