#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "lyricdet/error.hpp"

namespace lyricdet {

enum class Source { kHuman, kAi };
enum class LyricsGenerator { kNone, kMistral, kTinyLlama, kWizardLm2 };
enum class AudioGenerator { kNone, kSuno, kUdio };
enum class Split { kTrain, kTest };

std::string_view to_string(Source v);
std::string_view to_string(LyricsGenerator v);
std::string_view to_string(AudioGenerator v);
std::string_view to_string(Split v);

Source parse_source(std::string_view s);
LyricsGenerator parse_lyrics_generator(std::string_view s);
AudioGenerator parse_audio_generator(std::string_view s);
Split parse_split(std::string_view s);

/// The nine seed languages, in the column order used by every report.
inline constexpr std::array<std::string_view, 9> kLanguages = {"en", "de", "tr", "fr", "pt",
                                                               "es", "it", "ar", "ja"};

inline constexpr std::array<LyricsGenerator, 3> kLyricsGenerators = {
    LyricsGenerator::kMistral, LyricsGenerator::kTinyLlama, LyricsGenerator::kWizardLm2};

bool is_known_language(std::string_view lang);

/// The six genres of `lang` in normalized form; empty for unknown languages.
const std::vector<std::string>& genres_for(std::string_view lang);

/// Lowercases ASCII and joins words with '-': "Latin American" -> "latin-american".
std::string normalize_genre(std::string_view genre);

/// Provenance of a track produced by an audio attack.
struct Derivation {
  std::string source_track_id;
  std::string kind;
  std::string params;  // canonical JSON object text
  std::uint64_t seed = 0;

  friend bool operator==(const Derivation&, const Derivation&) = default;
};

struct Track {
  std::string track_id;
  std::optional<std::string> audio_path;
  std::optional<std::string> gt_lyrics_path;
  std::string language;
  std::string genre;
  Source source = Source::kHuman;
  LyricsGenerator lyrics_generator = LyricsGenerator::kNone;
  AudioGenerator audio_generator = AudioGenerator::kNone;
  Split split = Split::kTrain;
  std::optional<Derivation> derivation;

  bool is_fake() const noexcept { return source == Source::kAi; }

  friend bool operator==(const Track&, const Track&) = default;
};

struct TrackIssues {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

/// Checks the provenance/language/genre invariants of a single record.
TrackIssues check_track(const Track& track);

struct ManifestIssue {
  std::size_t line = 0;  // 1-based; 0 when not tied to a line
  std::string message;
};

struct ValidationReport {
  std::size_t records = 0;
  std::vector<ManifestIssue> errors;
  std::vector<ManifestIssue> warnings;

  bool ok() const noexcept { return errors.empty(); }
  std::string summary() const;
};

class ManifestError : public Error {
 public:
  explicit ManifestError(ValidationReport report);
  const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

inline constexpr int kManifestSchemaVersion = 1;

/// Immutable, validated, ordered collection of tracks.
///
/// Paths stored in tracks are kept exactly as written in the manifest;
/// relative paths are resolved against base_dir() on use.
class Corpus {
 public:
  Corpus() = default;
  /// Throws ManifestError on duplicate ids or invariant violations.
  Corpus(std::string name, std::vector<Track> tracks, std::filesystem::path base_dir = {},
         int schema_version = kManifestSchemaVersion);

  const std::string& name() const noexcept { return name_; }
  int schema_version() const noexcept { return schema_version_; }
  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  const std::vector<Track>& tracks() const noexcept { return tracks_; }
  std::size_t size() const noexcept { return tracks_.size(); }
  bool empty() const noexcept { return tracks_.empty(); }
  auto begin() const noexcept { return tracks_.begin(); }
  auto end() const noexcept { return tracks_.end(); }
  const Track& operator[](std::size_t i) const { return tracks_[i]; }

  const Track* find(std::string_view track_id) const;

  std::filesystem::path resolve(const std::string& path) const;
  std::optional<std::filesystem::path> audio_file(const Track& t) const;
  std::optional<std::filesystem::path> lyrics_file(const Track& t) const;

  std::size_t count(std::string_view language, Source source, Split split) const;

  /// Same tracks under a different name/base directory. Relative paths are
  /// rewritten so they still point at the same files.
  Corpus rebased(const std::filesystem::path& new_base, std::string new_name) const;

 private:
  std::string name_;
  std::vector<Track> tracks_;
  std::filesystem::path base_dir_;
  int schema_version_ = kManifestSchemaVersion;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Parses one manifest record. Throws Error with a field-level message.
Track parse_track_json(std::string_view line);
/// Canonical single-line encoding (fixed field order, no whitespace).
std::string track_to_json(const Track& track);

/// Validates without throwing; used by `corpus validate`.
ValidationReport validate_manifest(const std::filesystem::path& path);
Corpus load_manifest(const std::filesystem::path& path);
void write_manifest(const Corpus& corpus, const std::filesystem::path& path);

/// Table-style count grid: rows human/ai x train/test, columns languages.
std::string render_stats(const Corpus& corpus);

/// Conjunction of `field = value` clauses over Track fields.
///
/// A clause may list alternatives separated by '|': "language=en|de".
class TrackFilter {
 public:
  TrackFilter() = default;

  /// Parses "field=value,field=value". Throws Error on unknown fields/values.
  static TrackFilter parse(std::string_view expr);

  TrackFilter& where(std::string_view field, std::string_view value);

  bool matches(const Track& track) const;
  bool empty() const noexcept { return clauses_.empty(); }
  std::string to_string() const;

 private:
  struct Clause {
    std::string field;
    std::vector<std::string> values;
  };
  std::vector<Clause> clauses_;
};

/// Field value as it appears in the manifest; throws on unknown fields.
std::string track_field(const Track& track, std::string_view field);
bool is_track_field(std::string_view field);

Corpus select(const Corpus& corpus, const TrackFilter& filter);

struct GeneratorSplit {
  Corpus train;
  Corpus test;
};

/// Train on every generator except `held_out`; test on the held-out one plus humans.
GeneratorSplit leave_one_generator_out(const Corpus& corpus, LyricsGenerator held_out);

}  // namespace lyricdet
