#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "lyricdet/audio.hpp"
#include "lyricdet/corpus.hpp"
#include "lyricdet/error.hpp"

namespace lyricdet {

/// Raw lyrics transcript. `text` is never normalized, stripped or re-cased.
struct TranscriptRecord {
  std::string track_id;
  std::string text;
  std::string transcriber_id;
  std::optional<std::string> detected_language;
  double duration_s = 0.0;

  friend bool operator==(const TranscriptRecord&, const TranscriptRecord&) = default;
};

std::string transcript_to_json(const TranscriptRecord& r);
TranscriptRecord transcript_from_json(std::string_view line);

/// Everything a backend may look at for one track.
struct TranscriptionInput {
  const Track& track;
  std::optional<std::filesystem::path> audio_file;
  std::optional<std::filesystem::path> lyrics_file;
  /// Decoded mono audio at the backend's preferred rate; absent when the
  /// track has no audio and the backend does not require it.
  std::optional<Signal> audio;
};

struct BackendOutput {
  std::string text;
  std::optional<std::string> detected_language;
};

/// How a backend consumes audio: must have it, decodes it when present, or ignores it.
enum class AudioUse { kRequired, kIfPresent, kIgnored };

/// Speech-to-lyrics backend. transcribe() must be safe to call concurrently.
class TranscriberBackend {
 public:
  virtual ~TranscriberBackend() = default;

  virtual const std::string& id() const = 0;
  /// Supported ISO 639-1 codes, or {"multilingual"}.
  virtual std::vector<std::string> capabilities() const { return {"multilingual"}; }
  virtual AudioUse audio_use() const { return AudioUse::kRequired; }
  virtual int preferred_sample_rate() const { return 16000; }

  virtual BackendOutput transcribe(const TranscriptionInput& input) = 0;
};

/// Returns the sidecar lyrics file verbatim. Decodes the audio when present
/// so undecodable tracks fail exactly as they would with a real model.
class SidecarStubTranscriber final : public TranscriberBackend {
 public:
  SidecarStubTranscriber() = default;
  const std::string& id() const override { return id_; }
  AudioUse audio_use() const override { return AudioUse::kIfPresent; }
  int preferred_sample_rate() const override { return 0; }  // native rate
  BackendOutput transcribe(const TranscriptionInput& input) override;

 private:
  std::string id_ = "sidecar-stub";
};

/// Ground-truth (lyrics booklet) text, BOM stripped. Never touches audio.
class GroundTruthTranscriber final : public TranscriberBackend {
 public:
  const std::string& id() const override { return id_; }
  AudioUse audio_use() const override { return AudioUse::kIgnored; }
  BackendOutput transcribe(const TranscriptionInput& input) override;

 private:
  std::string id_ = "ground-truth";
};

/// Decoding options of the external Whisper backend. They are folded into
/// the transcriber id so cached transcripts stay attributable.
struct WhisperOptions {
  std::string model = "large-v2";
  int beam_size = 5;
  double temperature = 0.0;
  std::string language = "auto";
};

/// Runs an external process on a 16 kHz mono WAV and reads a JSON object
/// {"text": ..., "language": ...} from its stdout.
///
/// The command defaults to `$LYRICDET_WHISPER_CMD`, falling back to the
/// bundled `python3 -m lyricdet.whisper_backend`. The model directory is
/// taken from `$LYRICDET_MODEL_DIR` and passed through the environment.
class CommandTranscriber final : public TranscriberBackend {
 public:
  explicit CommandTranscriber(WhisperOptions options = {}, std::string command = {});

  const std::string& id() const override { return id_; }
  BackendOutput transcribe(const TranscriptionInput& input) override;

  const std::string& command() const noexcept { return command_; }

 private:
  WhisperOptions options_;
  std::string command_;
  std::string id_;
};

/// "sidecar-stub", "ground-truth", "whisper" (default options) or a full
/// CommandTranscriber id. Throws Error for anything else.
std::unique_ptr<TranscriberBackend> make_transcriber(const std::string& id);

/// Directory-safe form of an id: anything outside [A-Za-z0-9._-] becomes '_'.
std::string sanitize_id(std::string_view id);

/// Append-only transcript store at `<dir>/<transcriber_id>/transcripts.jsonl`.
///
/// Concurrent lookups are allowed; appends are serialized.
class TranscriptCache {
 public:
  TranscriptCache(std::filesystem::path cache_dir, std::string transcriber_id);

  std::optional<TranscriptRecord> get(const std::string& track_id) const;
  void put(const TranscriptRecord& record);
  std::size_t size() const;
  const std::filesystem::path& file() const noexcept { return file_; }

 private:
  std::string transcriber_id_;
  std::filesystem::path file_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, TranscriptRecord, std::less<>> records_;
};

/// Minimum audio duration accepted by transcribe_track.
inline constexpr double kMinAudioSeconds = 0.1;

/// Cache-aware single-track transcription. `backend_calls`, when given, is
/// incremented for every call that reaches the backend.
TranscriptRecord transcribe_track(const Track& track, const Corpus& corpus,
                                  TranscriberBackend& backend, TranscriptCache* cache = nullptr,
                                  std::atomic<std::size_t>* backend_calls = nullptr);

struct TranscriptionBatch {
  std::vector<TranscriptRecord> records;  // corpus order, successes only
  std::vector<ItemFailure> failures;
  std::size_t backend_calls = 0;

  void throw_if_failed() const;
};

TranscriptionBatch transcribe_corpus(const Corpus& corpus, TranscriberBackend& backend,
                                     std::size_t workers, TranscriptCache* cache = nullptr);

/// Reads gt_lyrics_path with transcriber_id "ground-truth"; a UTF-8 BOM is removed.
TranscriptRecord load_ground_truth(const Track& track, const Corpus& corpus);

}  // namespace lyricdet
