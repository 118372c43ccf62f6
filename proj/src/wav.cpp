// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace levelsep::wav {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}
void wr_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

}  // namespace

dsp::Waveform read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path);
  }

  std::uint16_t fmt_code = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* hdr = buf.data() + pos;
    std::uint32_t chunk_size = rd_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_size > buf.size()) throw IoError("truncated WAV chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw IoError("malformed fmt chunk in " + path);
      fmt_code = rd_u16(body);
      channels = rd_u16(body + 2);
      sample_rate = rd_u32(body + 4);
      bits = rd_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_size = chunk_size;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) throw IoError("missing fmt/data chunk in " + path);
  if (channels != 1) {
    throw IoError("only mono WAV is supported, got " + std::to_string(channels) +
                  " channels: " + path);
  }

  dsp::Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  if (fmt_code == 1 && bits == 16) {
    std::size_t n = data_size / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int16_t s = static_cast<std::int16_t>(rd_u16(data + 2 * i));
      w.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (fmt_code == 3 && bits == 32) {
    std::size_t n = data_size / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = rd_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      w.samples[i] = static_cast<double>(f);
    }
  } else {
    throw IoError("unsupported WAV format (want PCM16 or IEEE float32): " + path);
  }
  return w;
}

void write(const std::string& path, const dsp::Waveform& w, SampleFormat fmt) {
  const std::uint16_t bytes_per = (fmt == SampleFormat::Pcm16) ? 2 : 4;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.samples.size()) * bytes_per;

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  wr_u32(out, 16);
  wr_u16(out, fmt == SampleFormat::Pcm16 ? 1 : 3);
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  wr_u32(out, static_cast<std::uint32_t>(w.sample_rate) * bytes_per);
  wr_u16(out, bytes_per);
  wr_u16(out, bytes_per * 8);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr_u32(out, data_size);

  if (fmt == SampleFormat::Pcm16) {
    for (double x : w.samples) {
      double c = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
      auto s = static_cast<std::int16_t>(c < 0 ? c * 32768.0 - 0.5 : c * 32767.0 + 0.5);
      wr_u16(out, static_cast<std::uint16_t>(s));
    }
  } else {
    for (double x : w.samples) {
      float f = static_cast<float>(x);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      wr_u32(out, u);
    }
  }

  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw IoError("cannot write WAV file: " + path);
  o.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!o) throw IoError("short write on WAV file: " + path);
}

}  // namespace levelsep::wav
