#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyricdet/error.hpp"
#include "lyricdet/transcribe.hpp"

namespace lyricdet {

enum class EncoderFamily { kRetrievalConventional, kStylistic, kLlmBased, kStub };

std::string_view to_string(EncoderFamily f);

inline constexpr std::size_t kDefaultTokenBudget = 512;

struct EncoderSpec {
  std::string encoder_id;
  EncoderFamily family = EncoderFamily::kStub;
  std::size_t dimension = 0;
  std::size_t token_budget = kDefaultTokenBudget;
  std::string pooling = "mean";  // for sequence-output encoders
  std::uint64_t seed = 0;        // stub only

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

struct EmbeddingRecord {
  std::string track_id;
  std::string encoder_id;
  std::vector<float> vector;
  bool truncated = false;
};

/// Output of one encoder invocation.
struct EncodedText {
  std::vector<float> vector;
  bool truncated = false;
};

/// Frozen text -> vector feature extractor. encode() must be thread-safe.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual const EncoderSpec& spec() const = 0;
  virtual EncodedText encode(std::string_view text) = 0;
  /// Default loops over encode(); process-backed encoders batch.
  virtual std::vector<EncodedText> encode_batch(std::span<const std::string_view> texts);
};

/// Whitespace tokenization used by the stub encoder.
std::size_t count_tokens(std::string_view text);

/// Prefix of `text` ending right after its `budget`-th token, and whether
/// anything was cut.
std::pair<std::string_view, bool> truncate_to_tokens(std::string_view text, std::size_t budget);

/// Throws EncoderError if `text` is not valid UTF-8.
std::vector<char32_t> decode_utf8(std::string_view text);

/// Deterministic hashed character 3-gram encoder.
///
/// Lowercased code-point trigrams are hashed (FNV-1a, seeded) into
/// `dimension` buckets; the count vector is L2-normalized. Texts shorter than
/// three code points contribute the whole text as one gram, and the empty
/// text maps to the zero vector.
class StubEncoder final : public TextEncoder {
 public:
  explicit StubEncoder(EncoderSpec spec);
  const EncoderSpec& spec() const override { return spec_; }
  EncodedText encode(std::string_view text) override;

 private:
  EncoderSpec spec_;
};

/// Registry encoder backed by an external process.
///
/// The command (default `$LYRICDET_ENCODER_CMD`, else
/// `python3 -m lyricdet.encoder_backend`) receives one JSON object per line
/// on stdin ({"i": n, "text": ...}) and must print {"i": n, "vector": [...],
/// "truncated": bool} per line. Weights are looked up under
/// `$LYRICDET_MODEL_DIR/<encoder_id>`; a missing directory is reported as
/// unavailable weights before any process is spawned.
class CommandEncoder final : public TextEncoder {
 public:
  CommandEncoder(EncoderSpec spec, std::string command, std::filesystem::path weights_dir);
  const EncoderSpec& spec() const override { return spec_; }
  EncodedText encode(std::string_view text) override;
  std::vector<EncodedText> encode_batch(std::span<const std::string_view> texts) override;

 private:
  EncoderSpec spec_;
  std::string command_;
  std::filesystem::path weights_dir_;
};

/// Registered encoders. The process-wide instance (default_registry())
/// holds the six published encoders; stub ids of the form
/// `stub-ngram3-d<dim>-s<seed>` resolve without prior registration.
class EncoderRegistry {
 public:
  EncoderRegistry();

  EncoderSpec register_stub(std::size_t dimension, std::uint64_t seed);
  void add(EncoderSpec spec);

  bool contains(std::string_view encoder_id) const;
  /// Throws EncoderError for unregistered ids.
  EncoderSpec spec(std::string_view encoder_id) const;
  std::vector<EncoderSpec> specs() const;

  /// Throws EncoderError for unregistered ids or unavailable weights.
  std::unique_ptr<TextEncoder> create(std::string_view encoder_id) const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, EncoderSpec, std::less<>> specs_;
};

EncoderRegistry& default_registry();

std::string stub_encoder_id(std::size_t dimension, std::uint64_t seed);

/// Registers a stub encoder in the default registry. dimension must be >= 8.
EncoderSpec register_stub_encoder(std::size_t dimension, std::uint64_t seed);

EmbeddingRecord embed_text(std::string_view text, const EncoderSpec& spec);
EmbeddingRecord embed_text(std::string_view text, TextEncoder& encoder);

/// Embedding store: `<dir>/<encoder_id>/embeddings.f32` holds little-endian
/// float32 rows; `index.jsonl` maps track_id -> row. Each index entry also
/// carries a hash of the embedded text so a changed transcript is re-encoded
/// instead of served stale. Latest entry for a track wins.
class EmbeddingCache {
 public:
  EmbeddingCache(std::filesystem::path cache_dir, const EncoderSpec& spec);

  std::optional<EmbeddingRecord> get(const std::string& track_id,
                                     std::optional<std::uint64_t> text_hash = std::nullopt) const;
  void put(const EmbeddingRecord& record, std::uint64_t text_hash);
  std::size_t rows() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

  /// All latest records in row order.
  std::vector<EmbeddingRecord> all() const;

 private:
  struct Entry {
    std::size_t row;
    bool truncated;
    std::uint64_t text_hash;
  };
  std::vector<float> read_row(std::size_t row) const;

  EncoderSpec spec_;
  std::filesystem::path dir_;
  std::filesystem::path matrix_file_;
  std::filesystem::path index_file_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry, std::less<>> entries_;
  std::size_t rows_ = 0;
};

/// Reads every record of an embedding cache directory (the `<encoder_id>`
/// directory itself, which carries a meta.json naming the encoder).
std::vector<EmbeddingRecord> load_embedding_dir(const std::filesystem::path& dir);

std::uint64_t text_hash(std::string_view text);

struct EmbeddingBatch {
  std::vector<EmbeddingRecord> records;  // input order, successes only
  std::vector<ItemFailure> failures;
  std::size_t encoder_calls = 0;

  void throw_if_failed() const;
};

/// Embeds each transcript. Records are served from `cache` when the text
/// hash matches. At most `max_in_flight` encoder calls run concurrently.
EmbeddingBatch embed_corpus(std::span<const TranscriptRecord> records, TextEncoder& encoder,
                            EmbeddingCache* cache = nullptr, std::size_t max_in_flight = 1);

}  // namespace lyricdet
