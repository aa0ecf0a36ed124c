#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyricdet/corpus.hpp"

namespace lyricdet {

enum class AttackKind {
  kStretch,        // pitch-preserving time stretch (phase vocoder)
  kResampleSpeed,  // playback-speed change: duration and pitch move together
  kPitch,
  kEq,
  kNoise,
  kReverb,
};

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view s);

struct EqBand {
  double center_hz = 1000.0;
  double gain_db = 0.0;
  double q = 1.0;
  friend bool operator==(const EqBand&, const EqBand&) = default;
};

/// One parameterized perturbation. Only the fields of `kind` are used.
struct AttackSpec {
  AttackKind kind = AttackKind::kNoise;
  double rate = 1.1;  // stretch / resample-speed: output duration = input / rate
  double semitones = 2.0;
  std::vector<EqBand> bands = {{100.0, 4.0, 1.0}, {1000.0, -4.0, 1.0}, {8000.0, 4.0, 1.0}};
  double target_snr_db = 20.0;
  double decay_s = 0.8;  // time for the impulse response to fall by 60 dB
  double wet_mix = 0.3;
  std::uint64_t seed = 0;

  static AttackSpec defaults(AttackKind kind, std::uint64_t seed = 0);

  /// Sets one parameter from text. Keys: rate, semitones, target_snr_db,
  /// decay_s, wet_mix, and bands as "hz:db:q;hz:db:q". Throws PreconditionError.
  void set_param(std::string_view key, std::string_view value);

  /// Throws PreconditionError when a parameter is outside its allowed range.
  void validate() const;

  /// Canonical JSON object of the parameters relevant to `kind`.
  std::string params_json() const;

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

/// The five attacks (stretch, pitch, eq, noise, reverb) at default strength.
std::vector<AttackSpec> default_attack_suite(std::uint64_t seed);

/// Applies one attack to a mono signal. The result is finite, clipped to
/// [-1, 1] and at the same sample rate. Stretch and resample-speed change the
/// length to round(len / rate); every other attack preserves it (the reverb
/// tail past the end of the input is cut).
/// Throws PreconditionError on empty or non-finite audio, invalid parameters,
/// or (noise) a silent input.
std::vector<double> apply_attack(std::span<const double> audio, int sample_rate, const AttackSpec& spec);

/// Phase-vocoder time stretch to round(len / rate) samples; identity at rate 1.
std::vector<double> time_stretch(std::span<const double> audio, double rate);

/// Per-track seed so every track of a corpus gets independent randomness.
std::uint64_t track_seed(std::uint64_t seed, std::string_view track_id);

/// Attacks every track matching `filter`, writing `<out_dir>/<id>.wav`
/// (mono, original sample rate and bit depth). Attacked tracks receive a new
/// id `<id>@<kind>-<hash>` and a derivation record; the rest are unchanged.
/// The returned corpus is based at out_dir. Throws BatchError listing every
/// track that could not be decoded or written.
Corpus attack_corpus(const Corpus& corpus, const AttackSpec& spec, const TrackFilter& filter,
                     const std::filesystem::path& out_dir, std::size_t workers = 1);

}  // namespace lyricdet
