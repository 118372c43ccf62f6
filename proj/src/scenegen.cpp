// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "levelsep/wav.hpp"

namespace levelsep::scenegen {

namespace {

constexpr double kPi = std::numbers::pi;

void apply_fades(std::vector<double>& x, int sample_rate) {
  const std::size_t fade = std::min(x.size() / 2, static_cast<std::size_t>(sample_rate / 100));
  for (std::size_t i = 0; i < fade; ++i) {
    // raised cosine from 0 to 1 over the fade length
    const double g = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / static_cast<double>(fade));
    x[i] *= g;
    x[x.size() - 1 - i] *= g;
  }
}

void peak_normalize(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx > 0.0)
    for (double& v : x) v *= peak / mx;
}

// Quantizes to the nearest float32 so later WAV round trips are lossless.
void quantize_f32(std::vector<double>& x) {
  for (double& v : x) v = static_cast<double>(static_cast<float>(v));
}

bool non_silent(const std::vector<double>& x) {
  for (double v : x)
    if (v != 0.0) return true;
  return false;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void SceneConfig::validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("scene config: duration must be positive");
  if (sample_rate <= 0) throw ConfigError("scene config: sample rate must be positive");
  if (classes.empty()) throw ConfigError("scene config: class list is empty");
  if (!(lambda > 0.0)) throw ConfigError("scene config: lambda must be positive");
  if (assign != "cycle" && assign != "uniform")
    throw ConfigError("scene config: assign must be 'cycle' or 'uniform'");
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = i + 1; j < classes.size(); ++j)
      if (classes[i] == classes[j]) throw ConfigError("scene config: duplicate class " + classes[i]);
}

std::uint64_t derive_seed(std::uint64_t dataset_seed, std::uint64_t clip_index) {
  std::uint64_t z = dataset_seed + 0x9E3779B97F4A7C15ULL * (clip_index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int sample_event_count(std::mt19937_64& rng, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("event count: lambda must be positive");
  const double limit = std::exp(-lambda);
  for (;;) {
    // Knuth's product-of-uniforms Poisson sampler
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01(rng());
    } while (p > limit);
    if (k - 1 >= 1) return k - 1;
  }
}

const std::vector<std::string>& builtin_classes() {
  static const std::vector<std::string> names = {"tonestack", "amtone", "chirp", "pingtrain",
                                                 "noiseband"};
  return names;
}

dsp::Waveform builtin_stem(const std::string& class_name, int sample_rate,
                           std::mt19937_64& rng) {
  const double dur = uniform(rng, 0.2, 2.0);
  const std::size_t n = static_cast<std::size_t>(std::llround(dur * sample_rate));
  std::vector<double> x(n, 0.0);
  const double sr = static_cast<double>(sample_rate);

  if (class_name == "tonestack") {
    const double f0 = uniform(rng, 200.0, 320.0);
    double phase[4];
    for (double& p : phase) p = uniform(rng, 0.0, 2.0 * kPi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      double v = 0.0;
      for (int k = 1; k <= 4; ++k)
        v += std::sin(2.0 * kPi * k * f0 * t + phase[k - 1]) / static_cast<double>(k * k);
      x[i] = v;
    }
  } else if (class_name == "amtone") {
    const double f = uniform(rng, 550.0, 700.0);
    const double rate = uniform(rng, 4.0, 10.0);
    const double pc = uniform(rng, 0.0, 2.0 * kPi);
    const double pm = uniform(rng, 0.0, 2.0 * kPi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double am = 0.6 + 0.4 * std::sin(2.0 * kPi * rate * t + pm);
      x[i] = am * std::sin(2.0 * kPi * f * t + pc);
    }
  } else if (class_name == "chirp") {
    const double fc = uniform(rng, 880.0, 1120.0);
    const double f1 = fc * 0.85, f2 = fc * 1.15;
    const double ph = uniform(rng, 0.0, 2.0 * kPi);
    const double total = static_cast<double>(n) / sr;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      x[i] = std::sin(2.0 * kPi * (f1 * t + (f2 - f1) / (2.0 * total) * t * t) + ph);
    }
  } else if (class_name == "pingtrain") {
    const double fc = uniform(rng, 1500.0, 2100.0);
    const double rate = uniform(rng, 4.0, 8.0);
    const double tau = 0.03;
    const double ph = uniform(rng, 0.0, 2.0 * kPi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double within = t - std::floor(t * rate) / rate;
      x[i] = std::exp(-within / tau) * std::sin(2.0 * kPi * fc * t + ph);
    }
  } else if (class_name == "noiseband") {
    const double fc = uniform(rng, 2600.0, 3200.0);
    const double half_bw = uniform(rng, 80.0, 150.0);
    const std::size_t m = next_pow2(n);
    std::vector<std::complex<double>> buf(m);
    for (std::size_t i = 0; i < n; ++i) buf[i] = uniform(rng, -1.0, 1.0);
    dsp::detail::fft_pow2(buf, false);
    const double bin_hz = sr / static_cast<double>(m);
    for (std::size_t k = 0; k <= m / 2; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (std::abs(f - fc) > half_bw) {
        buf[k] = 0.0;
        if (k != 0 && k != m / 2) buf[m - k] = 0.0;
      }
    }
    dsp::detail::fft_pow2(buf, true);
    for (std::size_t i = 0; i < n; ++i) x[i] = buf[i].real() / static_cast<double>(m);
  } else {
    throw ConfigError("no built-in stem template for class " + class_name);
  }

  apply_fades(x, sample_rate);
  peak_normalize(x, 0.5);
  return {std::move(x), sample_rate};
}

dsp::Waveform builtin_background(std::size_t n_samples, int sample_rate, std::mt19937_64& rng) {
  const double alpha = uniform(rng, 0.8, 1.2);
  const double am_rate = uniform(rng, 0.05, 0.3);
  const double am_phase = uniform(rng, 0.0, 2.0 * kPi);
  const std::size_t m = next_pow2(std::max<std::size_t>(n_samples, 2));
  std::vector<std::complex<double>> buf(m);
  for (std::size_t i = 0; i < n_samples; ++i) buf[i] = uniform(rng, -1.0, 1.0);
  dsp::detail::fft_pow2(buf, false);
  buf[0] = 0.0;  // remove DC
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double g = std::pow(static_cast<double>(k), -alpha / 2.0);
    buf[k] *= g;
    if (k != m / 2) buf[m - k] *= g;
  }
  dsp::detail::fft_pow2(buf, true);
  std::vector<double> x(n_samples);
  const double sr = static_cast<double>(sample_rate);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double am = 1.0 + 0.4 * std::sin(2.0 * kPi * am_rate * t + am_phase);
    x[i] = buf[i].real() / static_cast<double>(m) * am;
  }
  peak_normalize(x, 0.5);
  return {std::move(x), sample_rate};
}

Soundscape synthesize_scape(const StemPool& stems, const BackgroundPool& backgrounds,
                            const SceneConfig& cfg, std::optional<double> background_lufs,
                            std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t n =
      static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  const std::size_t fade = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.sample_rate / 100));

  Soundscape scape;
  scape.labels.clear();
  std::map<std::string, std::vector<double>> stem_bufs;
  for (const std::string& c : cfg.classes) stem_bufs[c].assign(n, 0.0);

  const int k = sample_event_count(rng, cfg.lambda);
  for (int e = 0; e < k; ++e) {
    const std::size_t ci = uniform_index(rng, cfg.classes.size());
    const std::string& cls = cfg.classes[ci];

    dsp::Waveform stem;
    std::string desc;
    if (stems.builtin) {
      stem = builtin_stem(cls, cfg.sample_rate, rng);
      desc = "builtin:" + cls;
    } else {
      auto it = stems.by_class.find(cls);
      if (it == stems.by_class.end() || it->second.empty())
        throw ConfigError("stem pool has no material for class " + cls);
      const std::size_t si = uniform_index(rng, it->second.size());
      stem = it->second[si];
      if (stem.sample_rate != cfg.sample_rate)
        throw ConfigError("stem pool sample rate mismatch for class " + cls);
      desc = "pool:" + std::to_string(si);
    }

    std::size_t start = 0;
    if (stem.samples.size() >= n) {
      // truncate to the clip with a fade-out
      stem.samples.resize(n);
      for (std::size_t i = 0; i < fade && i < n; ++i) {
        const double g =
            0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / static_cast<double>(fade));
        stem.samples[n - 1 - i] *= g;
      }
    } else {
      start = uniform_index(rng, n - stem.samples.size() + 1);
    }

    std::vector<double>& buf = stem_bufs[cls];
    for (std::size_t i = 0; i < stem.samples.size(); ++i) buf[start + i] += stem.samples[i];
    scape.events.push_back(
        {cls, static_cast<double>(start) / cfg.sample_rate, desc, 1.0});
  }

  if (background_lufs.has_value()) {
    dsp::Waveform segment;
    if (backgrounds.builtin) {
      segment = builtin_background(n, cfg.sample_rate, rng);
    } else {
      if (backgrounds.clips.empty()) throw ConfigError("background pool is empty");
      const std::size_t bi = uniform_index(rng, backgrounds.clips.size());
      const dsp::Waveform& clip = backgrounds.clips[bi];
      if (clip.sample_rate != cfg.sample_rate)
        throw ConfigError("background pool sample rate mismatch");
      if (clip.samples.size() < n)
        throw ConfigError("background clip shorter than the scene duration");
      const std::size_t start = uniform_index(rng, clip.samples.size() - n + 1);
      segment.sample_rate = cfg.sample_rate;
      segment.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                             clip.samples.begin() + static_cast<std::ptrdiff_t>(start + n));
    }
    dsp::Waveform leveled = dsp::lufs_normalize(segment, *background_lufs);
    quantize_f32(leveled.samples);
    scape.background = std::move(leveled);
    scape.background_lufs = *background_lufs;
  }

  // Quantize stems, then accumulate the mixture in float32 so that
  // mixture == fold(stems in class order) + background holds bit-exactly
  // after the WAV round trip.
  std::vector<float> acc(n, 0.0f);
  for (const std::string& c : cfg.classes) {
    std::vector<double>& buf = stem_bufs[c];
    quantize_f32(buf);
    for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<float>(buf[i]);
    scape.labels[c] = non_silent(buf) ? 1 : 0;
    scape.stems[c] = {std::move(buf), cfg.sample_rate};
  }
  if (scape.background.has_value())
    for (std::size_t i = 0; i < n; ++i)
      acc[i] += static_cast<float>(scape.background->samples[i]);

  scape.mixture.sample_rate = cfg.sample_rate;
  scape.mixture.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) scape.mixture.samples[i] = static_cast<double>(acc[i]);
  return scape;
}

// ---- manifest ----

namespace {

nlohmann::json record_to_json(const ManifestRecord& r) {
  nlohmann::json j;
  j["clip_id"] = r.clip_id;
  j["mixture"] = r.mixture;
  nlohmann::json stems = nlohmann::json::object();
  for (const auto& [cls, path] : r.stems) {
    if (path.has_value()) stems[cls] = *path;
    else stems[cls] = nullptr;
  }
  j["stems"] = std::move(stems);
  j["labels"] = r.labels;
  if (r.background.has_value())
    j["background"] = {{"path", r.background->path}, {"lufs", r.background->lufs}};
  else
    j["background"] = nullptr;
  j["sample_rate"] = r.sample_rate;
  j["duration_s"] = r.duration_s;
  j["seed"] = r.seed;
  return j;
}

ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.clip_id = j.at("clip_id").get<std::string>();
  r.mixture = j.at("mixture").get<std::string>();
  for (const auto& [cls, pj] : j.at("stems").items()) {
    if (pj.is_null()) r.stems[cls] = std::nullopt;
    else r.stems[cls] = pj.get<std::string>();
  }
  r.labels = j.at("labels").get<std::map<std::string, int>>();
  const auto& bj = j.at("background");
  if (!bj.is_null()) {
    BackgroundRef ref;
    ref.path = bj.at("path").get<std::string>();
    ref.lufs = bj.at("lufs").get<double>();
    r.background = ref;
  }
  r.sample_rate = j.at("sample_rate").get<int>();
  r.duration_s = j.at("duration_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace

std::filesystem::path write_manifest(const std::vector<ManifestRecord>& records,
                                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = i + 1; j < records.size(); ++j)
      if (records[i].clip_id == records[j].clip_id)
        throw ConfigError("manifest: duplicate clip_id " + records[i].clip_id);
  const std::filesystem::path path = dir / "manifest.jsonl";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + path.string());
  for (const ManifestRecord& r : records) out << record_to_json(r).dump() << "\n";
  if (!out) throw IoError("failed writing manifest: " + path.string());
  return path;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < m.records.size(); ++i)
    for (std::size_t j = i + 1; j < m.records.size(); ++j)
      if (m.records[i].clip_id == m.records[j].clip_id)
        throw IoError("manifest: duplicate clip_id " + m.records[i].clip_id);
  for (const ManifestRecord& r : m.records) {
    if (!std::filesystem::exists(m.resolve(r.mixture)))
      throw IoError("clip " + r.clip_id + ": missing mixture file " + r.mixture);
    for (const auto& [cls, p] : r.stems)
      if (p.has_value() && !std::filesystem::exists(m.resolve(*p)))
        throw IoError("clip " + r.clip_id + ": missing stem file " + *p);
    if (r.background.has_value() && !std::filesystem::exists(m.resolve(r.background->path)))
      throw IoError("clip " + r.clip_id + ": missing background file " + r.background->path);
  }
  return m;
}

DatasetStats synthesize_dataset(const StemPool& stems, const BackgroundPool& backgrounds,
                                const SceneConfig& cfg, int count,
                                const std::filesystem::path& out_dir) {
  cfg.validate();
  if (count <= 0) throw ConfigError("dataset synthesis: count must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  DatasetStats stats;
  std::vector<ManifestRecord> records;
  records.reserve(static_cast<std::size_t>(count));

  for (int i = 0; i < count; ++i) {
    const std::uint64_t clip_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(clip_seed);

    std::optional<double> level;
    if (!cfg.background_levels.empty()) {
      if (cfg.assign == "cycle") {
        level = cfg.background_levels[static_cast<std::size_t>(i) % cfg.background_levels.size()];
      } else {
        level = cfg.background_levels[uniform_index(rng, cfg.background_levels.size())];
      }
    }

    Soundscape scape = synthesize_scape(stems, backgrounds, cfg, level, rng);
    scape.seed = clip_seed;

    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "clip_%06d", i);
    ManifestRecord rec;
    rec.clip_id = idbuf;
    rec.mixture = rec.clip_id + "_mix.wav";
    wav::write((out_dir / rec.mixture).string(), scape.mixture);
    for (const std::string& cls : cfg.classes) {
      if (scape.labels.at(cls)) {
        const std::string rel = rec.clip_id + "_stem_" + cls + ".wav";
        wav::write((out_dir / rel).string(), scape.stems.at(cls));
        rec.stems[cls] = rel;
      } else {
        rec.stems[cls] = std::nullopt;
      }
    }
    rec.labels = scape.labels;
    if (scape.background.has_value()) {
      const std::string rel = rec.clip_id + "_bkgr.wav";
      wav::write((out_dir / rel).string(), *scape.background);
      rec.background = BackgroundRef{rel, scape.background_lufs};
    }
    rec.sample_rate = cfg.sample_rate;
    rec.duration_s = cfg.duration_s;
    rec.seed = clip_seed;
    records.push_back(std::move(rec));

    ++stats.clips;
    for (const Event& e : scape.events) ++stats.events_per_class[e.class_name];
  }

  write_manifest(records, out_dir);
  return stats;
}

}  // namespace levelsep::scenegen
