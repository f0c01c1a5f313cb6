#include "mp/wav.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace mp {

namespace {

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw DataError("wav: truncated " + what);
  return v;
}

std::uint16_t read_u16(std::istream& in, const std::string& what) {
  std::uint16_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 2)) throw DataError("wav: truncated " + what);
  return v;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wav file: " + path.string());

  char tag[4];
  if (!in.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0) {
    throw DataError("wav: missing RIFF header: " + path.string());
  }
  read_u32(in, "riff size");
  if (!in.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0) {
    throw DataError("wav: not a WAVE file: " + path.string());
  }

  Waveform out;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = read_u32(in, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = read_u16(in, "fmt");
      channels = read_u16(in, "fmt");
      out.sample_rate = static_cast<int>(read_u32(in, "fmt"));
      read_u32(in, "fmt");  // byte rate
      read_u16(in, "fmt");  // block align
      bits = read_u16(in, "fmt");
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      if (format != 1) throw DataError("wav: only PCM format supported");
      if (bits != 16) throw DataError("wav: only 16-bit samples supported");
      if (channels != 1) throw DataError("wav: only mono supported");
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data chunk before fmt chunk");
      const std::size_t n = chunk_size / 2;
      std::vector<std::int16_t> pcm(n);
      if (!in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(chunk_size))) {
        throw DataError("wav: truncated data chunk");
      }
      out.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) out.samples[i] = pcm[i] / 32768.0;
      return out;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw DataError("wav: no data chunk found: " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  if (wav.sample_rate <= 0) throw DataError("wav: sample rate must be positive");
  std::vector<std::int16_t> pcm(wav.samples.size());
  for (std::size_t i = 0; i < wav.samples.size(); ++i) {
    const double v = std::min(1.0, std::max(-1.0, wav.samples[i]));
    pcm[i] = static_cast<std::int16_t>(std::lround(v * 32767.0));
  }
  const std::uint32_t data_size = static_cast<std::uint32_t>(pcm.size() * 2);
  std::string buf;
  buf.reserve(44 + data_size);
  auto put_u32 = [&](std::uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); };
  auto put_u16 = [&](std::uint16_t v) { buf.append(reinterpret_cast<const char*>(&v), 2); };
  buf.append("RIFF", 4);
  put_u32(36 + data_size);
  buf.append("WAVE", 4);
  buf.append("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(wav.sample_rate));
  put_u32(static_cast<std::uint32_t>(wav.sample_rate * 2));
  put_u16(2);
  put_u16(16);
  buf.append("data", 4);
  put_u32(data_size);
  buf.append(reinterpret_cast<const char*>(pcm.data()), data_size);
  atomic_write_file(path, buf);
}

}  // namespace mp
