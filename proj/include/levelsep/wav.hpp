// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_WAV_HPP
#define LEVELSEP_WAV_HPP

#include <string>

#include "levelsep/dsp.hpp"

namespace levelsep::wav {

enum class SampleFormat { Pcm16, Float32 };

// Mono PCM 16-bit or IEEE float32 only; anything else is rejected.
dsp::Waveform read(const std::string& path);

void write(const std::string& path, const dsp::Waveform& w,
           SampleFormat fmt = SampleFormat::Float32);

}  // namespace levelsep::wav

#endif  // LEVELSEP_WAV_HPP
