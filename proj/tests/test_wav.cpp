// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <vector>

#include "levelsep/wav.hpp"
#include "test_util.hpp"

using namespace levelsep;
using testutil::scratch_dir;

TEST_CASE("float32 round trip is bit-exact at float precision") {
  const auto dir = scratch_dir("wav_f32");
  std::mt19937_64 rng(1);
  auto w = testutil::random_wave(5000, 16000, rng, 0.9);
  // Snap samples to float precision so the round trip is an identity.
  for (auto& x : w.samples) x = static_cast<double>(static_cast<float>(x));

  const auto path = dir / "a.wav";
  wav::write(path, w, wav::SampleFormat::Float32);
  const auto r = wav::read(path);
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(r.samples[i] == w.samples[i]);
}

TEST_CASE("float32 re-write of a read file is byte-identical") {
  const auto dir = scratch_dir("wav_rewrite");
  std::mt19937_64 rng(2);
  const auto w = testutil::random_wave(3000, 8000, rng);
  const auto p1 = dir / "a.wav";
  const auto p2 = dir / "b.wav";
  wav::write(p1, w, wav::SampleFormat::Float32);
  wav::write(p2, wav::read(p1), wav::SampleFormat::Float32);
  CHECK(testutil::files_identical(p1, p2));
}

TEST_CASE("pcm16 round trip is within 1.5 quantization steps") {
  const auto dir = scratch_dir("wav_pcm16");
  std::mt19937_64 rng(3);
  const auto w = testutil::random_wave(4000, 44100, rng, 0.8);
  const auto path = dir / "a.wav";
  wav::write(path, w, wav::SampleFormat::Pcm16);
  const auto r = wav::read(path);
  CHECK(r.sample_rate == 44100);
  REQUIRE(r.size() == w.size());
  // Positive samples encode at 32767 and decode at 32768, so the bound is
  // half a step of rounding plus up to one step of scale mismatch.
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.5 / 32768.0 + 1e-12);
}

TEST_CASE("read rejects missing files") {
  CHECK_THROWS_AS(wav::read("/nonexistent/path/foo.wav"), IoError);
}

TEST_CASE("read rejects non-WAV bytes") {
  const auto dir = scratch_dir("wav_bad");
  const auto path = dir / "junk.wav";
  std::ofstream(path, std::ios::binary) << "this is not a wav file at all";
  CHECK_THROWS_AS(wav::read(path), IoError);
}

TEST_CASE("read rejects stereo files") {
  // Hand-built 2-channel PCM16 header.
  const auto dir = scratch_dir("wav_stereo");
  const auto path = dir / "stereo.wav";
  const std::uint16_t channels = 2, bits = 16, fmt = 1;
  const std::uint32_t rate = 8000, n_frames = 4;
  const std::uint32_t data_bytes = n_frames * channels * (bits / 8);
  const std::uint32_t byte_rate = rate * channels * (bits / 8);
  const std::uint16_t block_align = channels * (bits / 8);
  std::vector<char> buf;
  auto put = [&](const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
  };
  auto put32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put16 = [&](std::uint16_t v) { put(&v, 2); };
  put("RIFF", 4);
  put32(36 + data_bytes);
  put("WAVE", 4);
  put("fmt ", 4);
  put32(16);
  put16(fmt);
  put16(channels);
  put32(rate);
  put32(byte_rate);
  put16(block_align);
  put16(bits);
  put("data", 4);
  put32(data_bytes);
  for (std::uint32_t i = 0; i < data_bytes / 2; ++i) put16(0);
  std::ofstream(path, std::ios::binary).write(buf.data(), static_cast<long>(buf.size()));
  CHECK_THROWS_AS(wav::read(path), IoError);
}

TEST_CASE("write then read preserves sample rate across rates") {
  const auto dir = scratch_dir("wav_rates");
  std::mt19937_64 rng(4);
  for (int sr : {8000, 16000, 44100, 48000}) {
    const auto w = testutil::random_wave(1024, sr, rng);
    const auto path = dir / ("r" + std::to_string(sr) + ".wav");
    wav::write(path, w, wav::SampleFormat::Float32);
    CHECK(wav::read(path).sample_rate == sr);
  }
}

TEST_CASE("write refuses unwritable paths") {
  std::mt19937_64 rng(5);
  const auto w = testutil::random_wave(100, 8000, rng);
  CHECK_THROWS_AS(wav::write("/nonexistent/dir/out.wav", w, wav::SampleFormat::Float32), IoError);
}
