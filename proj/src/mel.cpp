#include "mp/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <vector>

namespace mp {

namespace {

// FFTW's planner is not thread-safe; execution of a plan is.
std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

std::int64_t next_pow2(std::int64_t n) {
  std::int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Triangular filterbank with centers uniformly spaced on the mel scale.
std::vector<std::vector<double>> mel_filterbank(int bands, std::int64_t n_fft, int sample_rate,
                                                double fmin, double fmax) {
  const std::int64_t n_bins = n_fft / 2 + 1;
  const double m_lo = hz_to_mel(fmin);
  const double m_hi = hz_to_mel(fmax);
  std::vector<double> points(static_cast<std::size_t>(bands) + 2);
  for (int i = 0; i < bands + 2; ++i) {
    points[static_cast<std::size_t>(i)] =
        mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  std::vector<std::vector<double>> filters(static_cast<std::size_t>(bands),
                                           std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  for (int b = 0; b < bands; ++b) {
    const double left = points[static_cast<std::size_t>(b)];
    const double center = points[static_cast<std::size_t>(b) + 1];
    const double right = points[static_cast<std::size_t>(b) + 2];
    for (std::int64_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        w = (right - f) / (right - center);
      }
      filters[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = w;
    }
  }
  return filters;
}

}  // namespace

Tensor<double> mel_spectrogram(std::span<const double> samples, int sample_rate,
                               const MelParams& params) {
  if (sample_rate != 8000 && sample_rate != 16000 && sample_rate != 44100 && sample_rate != 48000) {
    throw DataError("unsupported sample rate: " + std::to_string(sample_rate));
  }
  if (params.bands < 1) throw ConfigError("mel band count must be >= 1");
  const std::int64_t win = std::llround(params.window_s * sample_rate);
  const std::int64_t hop = std::llround(params.hop_s * sample_rate);
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  if (n < win) {
    throw DataError("waveform shorter than one analysis window (" + std::to_string(n) + " < " +
                    std::to_string(win) + " samples)");
  }
  const std::int64_t n_fft = next_pow2(win);
  const std::int64_t n_bins = n_fft / 2 + 1;
  const std::int64_t frames = 1 + (n - win) / hop;
  const double fmax = std::min(params.fmax_hz, sample_rate / 2.0);
  const auto filters = mel_filterbank(params.bands, n_fft, sample_rate, params.fmin_hz, fmax);

  std::vector<double> hann(static_cast<std::size_t>(win));
  for (std::int64_t i = 0; i < win; ++i) {
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(win));
  }

  std::vector<double> buffer(static_cast<std::size_t>(n_fft), 0.0);
  std::vector<fftw_complex> spectrum(static_cast<std::size_t>(n_bins));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), buffer.data(), spectrum.data(),
                                FFTW_ESTIMATE);
  }

  Tensor<double> out(frames, params.bands);
  std::vector<double> mag(static_cast<std::size_t>(n_bins));
  for (std::int64_t f = 0; f < frames; ++f) {
    const std::int64_t offset = f * hop;
    for (std::int64_t i = 0; i < win; ++i) {
      buffer[static_cast<std::size_t>(i)] =
          samples[static_cast<std::size_t>(offset + i)] * hann[static_cast<std::size_t>(i)];
    }
    std::fill(buffer.begin() + win, buffer.end(), 0.0);
    fftw_execute(plan);
    for (std::int64_t k = 0; k < n_bins; ++k) {
      mag[static_cast<std::size_t>(k)] = std::hypot(spectrum[static_cast<std::size_t>(k)][0],
                                                    spectrum[static_cast<std::size_t>(k)][1]);
    }
    for (int b = 0; b < params.bands; ++b) {
      double acc = 0.0;
      const auto& w = filters[static_cast<std::size_t>(b)];
      for (std::int64_t k = 0; k < n_bins; ++k) acc += w[static_cast<std::size_t>(k)] * mag[static_cast<std::size_t>(k)];
      out(f, b) = std::log(std::max(acc, params.floor));
    }
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace mp
