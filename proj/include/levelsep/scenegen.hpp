// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_SCENEGEN_HPP
#define LEVELSEP_SCENEGEN_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "levelsep/common.hpp"
#include "levelsep/dsp.hpp"

namespace levelsep::scenegen {

// Dataset synthesis parameters. background_levels entries are LUFS targets;
// a disengaged entry means "no background" for clips drawing it. An empty
// list means every clip is background-free.
struct SceneConfig {
  double duration_s = 4.0;
  int sample_rate = 16000;
  std::vector<std::string> classes;
  double lambda = 5.0;
  std::vector<std::optional<double>> background_levels;
  std::string assign = "cycle";  // "cycle": level i % n for clip i; "uniform": random draw
  std::uint64_t seed = 0;

  void validate() const;
};

struct Event {
  std::string class_name;
  double start_s = 0.0;
  std::string stem_desc;
  double gain = 1.0;
};

// One synthesized clip. All sample values are exactly representable as
// float32, and the mixture equals the left-to-right float32 accumulation of
// the per-class stems (in class order) plus the background, so additivity
// survives the float32 WAV round trip bit-exactly.
struct Soundscape {
  dsp::Waveform mixture;
  std::map<std::string, dsp::Waveform> stems;  // every class; silent when absent
  std::optional<dsp::Waveform> background;
  double background_lufs = 0.0;  // meaningful only when background is set
  std::map<std::string, int> labels;
  std::vector<Event> events;
  std::uint64_t seed = 0;
};

// Order-independent per-clip seed so clip synthesis can run in any order.
std::uint64_t derive_seed(std::uint64_t dataset_seed, std::uint64_t clip_index);

// Poisson(lambda) conditioned on a strictly positive outcome, by rejection.
int sample_event_count(std::mt19937_64& rng, double lambda);

// The five built-in stem templates, each with a class-distinct spectral
// band: harmonic tone stack, amplitude-modulated tone, linear chirp,
// decaying ping train, narrowband noise burst.
const std::vector<std::string>& builtin_classes();

// 0.2-2.0 s stem, peak-normalized to 0.5, 10 ms raised-cosine fades.
dsp::Waveform builtin_stem(const std::string& class_name, int sample_rate, std::mt19937_64& rng);

// 1/f^alpha noise with slow amplitude modulation, peak 0.5.
dsp::Waveform builtin_background(std::size_t n_samples, int sample_rate, std::mt19937_64& rng);

// User-supplied material; builtin toggles the procedural generators.
struct StemPool {
  bool builtin = true;
  std::map<std::string, std::vector<dsp::Waveform>> by_class;
};

struct BackgroundPool {
  bool builtin = true;
  std::vector<dsp::Waveform> clips;  // each must cover a full scene duration
};

Soundscape synthesize_scape(const StemPool& stems, const BackgroundPool& backgrounds,
                            const SceneConfig& cfg, std::optional<double> background_lufs,
                            std::mt19937_64& rng);

// ---- manifest ----

struct BackgroundRef {
  std::string path;
  double lufs = 0.0;
};

struct ManifestRecord {
  std::string clip_id;
  std::string mixture;  // path relative to the manifest directory
  std::map<std::string, std::optional<std::string>> stems;
  std::map<std::string, int> labels;
  std::optional<BackgroundRef> background;
  int sample_rate = 0;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path root;  // directory record paths are relative to

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

// JSON Lines, one record per clip, written to dir/manifest.jsonl.
std::filesystem::path write_manifest(const std::vector<ManifestRecord>& records,
                                     const std::filesystem::path& dir);

// Parses and validates: unique clip ids, every referenced file present.
Manifest read_manifest(const std::filesystem::path& path);

struct DatasetStats {
  int clips = 0;
  std::map<std::string, int> events_per_class;
};

// Synthesizes count clips into out_dir (float32 WAVs plus manifest.jsonl).
DatasetStats synthesize_dataset(const StemPool& stems, const BackgroundPool& backgrounds,
                                const SceneConfig& cfg, int count,
                                const std::filesystem::path& out_dir);

}  // namespace levelsep::scenegen

#endif  // LEVELSEP_SCENEGEN_HPP
