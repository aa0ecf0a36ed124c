#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

namespace lyricdet {

struct SmokeOptions {
  std::size_t size_per_class = 100;
  std::uint64_t seed = 0;
  int sample_rate = 22050;
  double duration_s = 1.0;
  /// Human tracks carry a white recording-noise floor at this SNR; fake
  /// tracks are clean tone mixtures quantized to 8 bits. nullopt leaves human
  /// audio noise-free.
  std::optional<double> human_noise_snr_db = 35.0;
  /// Also write udio.jsonl: fresh human tracks plus fake tracks from an
  /// unseen audio generator (10-bit quantization), all in the test split.
  bool write_udio = true;
};

/// Writes `<out_dir>/manifest.jsonl` with size_per_class human and ai tracks,
/// each with a sidecar lyrics file (lyrics/) and a mono 16-bit WAV (audio/).
///
/// Human lyrics are drawn from a large pseudo-word vocabulary with irregular
/// line lengths; ai lyrics follow a fixed verse/chorus template with repeated
/// [Chorus] markers. 80% of each class is train, the rest test. Languages,
/// genres and lyrics generators rotate round-robin. Deterministic in seed.
/// Throws PreconditionError when size_per_class < 10.
std::filesystem::path make_smoke_corpus(const std::filesystem::path& out_dir, const SmokeOptions& options);
std::filesystem::path make_smoke_corpus(const std::filesystem::path& out_dir, std::size_t size_per_class,
                                        std::uint64_t seed);

/// Paired audio-only corpus: tone mixture i appears once clean (human) and
/// once quantized to 8 bits (ai). Pairs are split 80/20 together.
std::filesystem::path make_quantization_corpus(const std::filesystem::path& out_dir, std::size_t pairs,
                                               std::uint64_t seed, int sample_rate = 22050,
                                               double duration_s = 1.0);

}  // namespace lyricdet
