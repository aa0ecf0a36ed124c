#include "lyricdet/encode.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>

#include "lyricdet/hashing.hpp"
#include "lyricdet/parallel.hpp"
#include "lyricdet/process.hpp"

namespace lyricdet {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool is_space(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;          // Latin-1
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;       // Greek
  if (c >= 0x410 && c <= 0x42F) return c + 32;                     // Cyrillic
  return c;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

void check_vector(const std::vector<float>& v, const EncoderSpec& spec) {
  if (v.size() != spec.dimension) {
    throw EncoderError("encoder \"" + spec.encoder_id + "\" returned " + std::to_string(v.size()) +
                       " values, expected " + std::to_string(spec.dimension));
  }
  for (float x : v) {
    if (!std::isfinite(x)) throw EncoderError("encoder \"" + spec.encoder_id + "\" returned a non-finite value");
  }
}

void write_f32_le(std::ostream& out, std::span<const float> v) {
  std::vector<char> bytes(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::string_view to_string(EncoderFamily f) {
  switch (f) {
    case EncoderFamily::kRetrievalConventional: return "retrieval_conventional";
    case EncoderFamily::kStylistic: return "stylistic";
    case EncoderFamily::kLlmBased: return "llm_based";
    case EncoderFamily::kStub: return "stub";
  }
  return "stub";
}

std::vector<EncodedText> TextEncoder::encode_batch(std::span<const std::string_view> texts) {
  std::vector<EncodedText> out;
  out.reserve(texts.size());
  for (auto t : texts) out.push_back(encode(t));
  return out;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::pair<std::string_view, bool> truncate_to_tokens(std::string_view text, std::size_t budget) {
  std::size_t n = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_space(text[i])) {
      if (in_token && n == budget) return {text.substr(0, i), true};
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return {text, false};
}

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      throw EncoderError("input is not valid UTF-8 (byte " + std::to_string(i) + ")");
    }
    if (i + static_cast<std::size_t>(len) > text.size()) throw EncoderError("input is not valid UTF-8 (truncated sequence)");
    for (int k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) throw EncoderError("input is not valid UTF-8 (byte " + std::to_string(i) + ")");
      cp = (cp << 6) | (b & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw EncoderError("input is not valid UTF-8 (byte " + std::to_string(i) + ")");
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

StubEncoder::StubEncoder(EncoderSpec spec) : spec_(std::move(spec)) {
  if (spec_.dimension < 8) throw EncoderError("stub encoder dimension must be >= 8");
}

EncodedText StubEncoder::encode(std::string_view text) {
  const auto [prefix, truncated] = truncate_to_tokens(text, spec_.token_budget);
  auto cps = decode_utf8(prefix);
  for (auto& c : cps) c = to_lower(c);

  std::vector<double> counts(spec_.dimension, 0.0);
  const std::uint64_t basis = mix64(spec_.seed ^ 0xcbf29ce484222325ULL);
  auto add_gram = [&](std::size_t begin, std::size_t len) {
    std::string gram;
    for (std::size_t k = 0; k < len; ++k) append_utf8(gram, cps[begin + k]);
    counts[mix64(fnv1a64(gram, basis)) % spec_.dimension] += 1.0;
  };
  if (cps.size() >= 3) {
    for (std::size_t i = 0; i + 3 <= cps.size(); ++i) add_gram(i, 3);
  } else if (!cps.empty()) {
    add_gram(0, cps.size());
  }

  double norm = 0.0;
  for (double c : counts) norm += c * c;
  norm = std::sqrt(norm);
  EncodedText out;
  out.truncated = truncated;
  out.vector.resize(spec_.dimension, 0.0f);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < counts.size(); ++i) out.vector[i] = static_cast<float>(counts[i] / norm);
  }
  return out;
}

CommandEncoder::CommandEncoder(EncoderSpec spec, std::string command, std::filesystem::path weights_dir)
    : spec_(std::move(spec)), command_(std::move(command)), weights_dir_(std::move(weights_dir)) {}

EncodedText CommandEncoder::encode(std::string_view text) {
  const std::string_view one[] = {text};
  return encode_batch(one).front();
}

std::vector<EncodedText> CommandEncoder::encode_batch(std::span<const std::string_view> texts) {
  if (texts.empty()) return {};
  std::string input;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    decode_utf8(texts[i]);
    ordered_json line;
    line["i"] = i;
    line["text"] = std::string(texts[i]);
    input += line.dump() + "\n";
  }
  const std::string cmd = command_ + " --encoder " + shell_quote(spec_.encoder_id) + " --weights " +
                          shell_quote(weights_dir_.string()) + " --max-tokens " +
                          std::to_string(spec_.token_budget) + " --pooling " + shell_quote(spec_.pooling);
  const auto result = run_command(cmd, input);
  if (result.exit_code != 0) {
    throw EncoderError("encoder command failed (exit " + std::to_string(result.exit_code) + ")");
  }
  std::vector<std::optional<EncodedText>> slots(texts.size());
  std::size_t pos = 0;
  while (pos < result.output.size()) {
    auto nl = result.output.find('\n', pos);
    if (nl == std::string::npos) nl = result.output.size();
    const auto line = std::string_view(result.output).substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \r\t") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw EncoderError(std::string("encoder produced malformed output: ") + e.what());
    }
    const auto i = obj.at("i").get<std::size_t>();
    if (i >= texts.size()) throw EncoderError("encoder output index out of range");
    EncodedText enc;
    enc.vector = obj.at("vector").get<std::vector<float>>();
    enc.truncated = obj.value("truncated", false);
    check_vector(enc.vector, spec_);
    slots[i] = std::move(enc);
  }
  std::vector<EncodedText> out;
  out.reserve(texts.size());
  for (auto& s : slots) {
    if (!s) throw EncoderError("encoder omitted an output line");
    out.push_back(*std::move(s));
  }
  return out;
}

EncoderRegistry::EncoderRegistry() {
  using F = EncoderFamily;
  for (const auto& [id, family, dim] : std::initializer_list<std::tuple<const char*, F, std::size_t>>{
           {"minilmv2", F::kRetrievalConventional, 1024},
           {"bge-m3", F::kRetrievalConventional, 1024},
           {"uar-crud", F::kStylistic, 768},
           {"uar-mud", F::kStylistic, 768},
           {"bge-ml-gemma", F::kLlmBased, 3584},
           {"llm2vec-llama", F::kLlmBased, 4096},
       }) {
    EncoderSpec spec;
    spec.encoder_id = id;
    spec.family = family;
    spec.dimension = dim;
    specs_.emplace(spec.encoder_id, spec);
  }
}

std::string stub_encoder_id(std::size_t dimension, std::uint64_t seed) {
  return "stub-ngram3-d" + std::to_string(dimension) + "-s" + std::to_string(seed);
}

EncoderSpec EncoderRegistry::register_stub(std::size_t dimension, std::uint64_t seed) {
  if (dimension < 8) throw EncoderError("stub encoder dimension must be >= 8");
  EncoderSpec spec;
  spec.encoder_id = stub_encoder_id(dimension, seed);
  spec.family = EncoderFamily::kStub;
  spec.dimension = dimension;
  spec.pooling = "none";
  spec.seed = seed;
  add(spec);
  return spec;
}

void EncoderRegistry::add(EncoderSpec spec) {
  if (spec.dimension == 0) throw EncoderError("encoder dimension must be positive");
  std::unique_lock lock(mutex_);
  specs_[spec.encoder_id] = std::move(spec);
}

bool EncoderRegistry::contains(std::string_view encoder_id) const {
  try {
    spec(encoder_id);
    return true;
  } catch (const EncoderError&) {
    return false;
  }
}

EncoderSpec EncoderRegistry::spec(std::string_view encoder_id) const {
  {
    std::shared_lock lock(mutex_);
    const auto it = specs_.find(encoder_id);
    if (it != specs_.end()) return it->second;
  }
  static const std::regex kStubId(R"(stub-ngram3-d(\d+)-s(\d+))");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_match(encoder_id.begin(), encoder_id.end(), m, kStubId)) {
    const auto dim = std::stoull(m[1].str());
    if (dim >= 8) {
      EncoderSpec spec;
      spec.encoder_id = std::string(encoder_id);
      spec.family = EncoderFamily::kStub;
      spec.dimension = dim;
      spec.pooling = "none";
      spec.seed = std::stoull(m[2].str());
      return spec;
    }
  }
  throw EncoderError("unregistered encoder \"" + std::string(encoder_id) + "\"");
}

std::vector<EncoderSpec> EncoderRegistry::specs() const {
  std::shared_lock lock(mutex_);
  std::vector<EncoderSpec> out;
  for (const auto& [_, s] : specs_) out.push_back(s);
  return out;
}

std::unique_ptr<TextEncoder> EncoderRegistry::create(std::string_view encoder_id) const {
  EncoderSpec s = spec(encoder_id);
  if (s.family == EncoderFamily::kStub) return std::make_unique<StubEncoder>(std::move(s));
  const char* model_dir = std::getenv("LYRICDET_MODEL_DIR");
  const std::filesystem::path weights = model_dir && *model_dir
                                            ? std::filesystem::path(model_dir) / s.encoder_id
                                            : std::filesystem::path();
  if (weights.empty() || !std::filesystem::exists(weights)) {
    throw EncoderError("weights for encoder \"" + s.encoder_id +
                       "\" are unavailable (set LYRICDET_MODEL_DIR to a directory containing \"" +
                       s.encoder_id + "/\")");
  }
  const char* cmd = std::getenv("LYRICDET_ENCODER_CMD");
  return std::make_unique<CommandEncoder>(std::move(s),
                                          cmd && *cmd ? cmd : "python3 -m lyricdet.encoder_backend",
                                          weights);
}

EncoderRegistry& default_registry() {
  static EncoderRegistry registry;
  return registry;
}

EncoderSpec register_stub_encoder(std::size_t dimension, std::uint64_t seed) {
  return default_registry().register_stub(dimension, seed);
}

EmbeddingRecord embed_text(std::string_view text, TextEncoder& encoder) {
  auto enc = encoder.encode(text);
  check_vector(enc.vector, encoder.spec());
  return {"", encoder.spec().encoder_id, std::move(enc.vector), enc.truncated};
}

EmbeddingRecord embed_text(std::string_view text, const EncoderSpec& spec) {
  auto encoder = default_registry().create(spec.encoder_id);
  return embed_text(text, *encoder);
}

std::uint64_t text_hash(std::string_view text) { return fnv1a64(text); }

EmbeddingCache::EmbeddingCache(std::filesystem::path cache_dir, const EncoderSpec& spec)
    : spec_(spec), dir_(cache_dir / sanitize_id(spec.encoder_id)) {
  std::filesystem::create_directories(dir_);
  matrix_file_ = dir_ / "embeddings.f32";
  index_file_ = dir_ / "index.jsonl";

  const auto meta_file = dir_ / "meta.json";
  ordered_json meta;
  meta["encoder_id"] = spec_.encoder_id;
  meta["family"] = to_string(spec_.family);
  meta["dimension"] = spec_.dimension;
  meta["token_budget"] = spec_.token_budget;
  meta["pooling"] = spec_.pooling;
  meta["seed"] = spec_.seed;
  if (std::filesystem::exists(meta_file)) {
    std::ifstream in(meta_file);
    const json existing = json::parse(in);
    if (existing.at("encoder_id") != spec_.encoder_id || existing.at("dimension") != spec_.dimension) {
      throw FormatError("embedding cache " + dir_.string() + " belongs to a different encoder");
    }
  } else {
    std::ofstream(meta_file) << meta.dump(2) << '\n';
  }

  std::ifstream in(index_file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json obj = json::parse(line);
    const auto row = obj.at("row").get<std::size_t>();
    entries_[obj.at("track_id").get<std::string>()] =
        Entry{row, obj.value("truncated", false),
              std::stoull(obj.value("text_hash", std::string("0")), nullptr, 16)};
    rows_ = std::max(rows_, row + 1);
  }
  const auto expected = rows_ * spec_.dimension * 4;
  const auto actual = std::filesystem::exists(matrix_file_) ? std::filesystem::file_size(matrix_file_) : 0;
  if (actual < expected) {
    throw FormatError("embedding matrix " + matrix_file_.string() + " is shorter than its index");
  }
  if (actual > expected) {
    // A crash between the two appends leaves an orphan row; drop it.
    std::filesystem::resize_file(matrix_file_, expected);
  }
}

std::vector<float> EmbeddingCache::read_row(std::size_t row) const {
  std::ifstream in(matrix_file_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(row * spec_.dimension * 4));
  std::vector<unsigned char> bytes(spec_.dimension * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError("cannot read row " + std::to_string(row) + " of " + matrix_file_.string());
  std::vector<float> v(spec_.dimension);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b) u = (u << 8) | bytes[i * 4 + static_cast<std::size_t>(b)];
    v[i] = std::bit_cast<float>(u);
  }
  return v;
}

std::optional<EmbeddingRecord> EmbeddingCache::get(const std::string& track_id,
                                                   std::optional<std::uint64_t> hash) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(track_id);
  if (it == entries_.end()) return std::nullopt;
  if (hash && it->second.text_hash != *hash) return std::nullopt;
  return EmbeddingRecord{track_id, spec_.encoder_id, read_row(it->second.row), it->second.truncated};
}

void EmbeddingCache::put(const EmbeddingRecord& record, std::uint64_t hash) {
  check_vector(record.vector, spec_);
  std::unique_lock lock(mutex_);
  {
    std::ofstream out(matrix_file_, std::ios::binary | std::ios::app);
    write_f32_le(out, record.vector);
    if (!out) throw Error("cannot append to " + matrix_file_.string());
  }
  ordered_json line;
  line["track_id"] = record.track_id;
  line["row"] = rows_;
  line["truncated"] = record.truncated;
  line["text_hash"] = hex64(hash);
  std::ofstream out(index_file_, std::ios::app);
  out << line.dump() << '\n';
  if (!out) throw Error("cannot append to " + index_file_.string());
  entries_[record.track_id] = Entry{rows_, record.truncated, hash};
  ++rows_;
}

std::size_t EmbeddingCache::rows() const {
  std::shared_lock lock(mutex_);
  return rows_;
}

std::vector<EmbeddingRecord> EmbeddingCache::all() const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [id, e] : entries_) order.emplace_back(e.row, id);
  std::sort(order.begin(), order.end());
  std::vector<EmbeddingRecord> out;
  for (const auto& [row, id] : order) {
    out.push_back({id, spec_.encoder_id, read_row(row), entries_.at(id).truncated});
  }
  return out;
}

std::vector<EmbeddingRecord> load_embedding_dir(const std::filesystem::path& dir) {
  const auto meta_file = dir / "meta.json";
  if (!std::filesystem::exists(meta_file)) throw Error("no meta.json in " + dir.string());
  std::ifstream in(meta_file);
  const json meta = json::parse(in);
  EncoderSpec spec;
  spec.encoder_id = meta.at("encoder_id").get<std::string>();
  spec.dimension = meta.at("dimension").get<std::size_t>();
  spec.token_budget = meta.value("token_budget", kDefaultTokenBudget);
  spec.pooling = meta.value("pooling", std::string("mean"));
  spec.seed = meta.value("seed", std::uint64_t{0});
  if (sanitize_id(spec.encoder_id) != dir.filename().string()) {
    throw FormatError("meta.json in " + dir.string() + " names encoder \"" + spec.encoder_id + "\"");
  }
  EmbeddingCache cache(dir.parent_path(), spec);
  return cache.all();
}

void EmbeddingBatch::throw_if_failed() const {
  if (failures.empty()) return;
  std::string msg = std::to_string(failures.size()) + " record(s) failed to embed:";
  for (const auto& f : failures) msg += " " + f.id;
  throw BatchError(msg, failures);
}

EmbeddingBatch embed_corpus(std::span<const TranscriptRecord> records, TextEncoder& encoder,
                            EmbeddingCache* cache, std::size_t max_in_flight) {
  if (records.empty()) throw PreconditionError("embed_corpus needs at least one transcript");
  if (max_in_flight == 0) throw PreconditionError("max_in_flight must be positive");
  const auto& spec = encoder.spec();
  std::vector<std::optional<EmbeddingRecord>> slots(records.size());
  std::vector<std::optional<std::string>> errors(records.size());
  std::vector<std::uint64_t> hashes(records.size());
  std::vector<std::size_t> misses;
  std::vector<bool> fresh(records.size(), false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    hashes[i] = text_hash(records[i].text);
    if (cache) {
      if (auto hit = cache->get(records[i].track_id, hashes[i])) {
        slots[i] = std::move(hit);
        continue;
      }
    }
    misses.push_back(i);
    fresh[i] = true;
  }

  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (misses.size() + kChunk - 1) / kChunk;
  std::atomic<std::size_t> calls{0};
  parallel_for(chunks, max_in_flight, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(misses.size(), begin + kChunk);
    std::vector<std::string_view> texts;
    for (std::size_t k = begin; k < end; ++k) texts.push_back(records[misses[k]].text);
    std::vector<EncodedText> encoded;
    try {
      calls += texts.size();
      encoded = encoder.encode_batch(texts);
    } catch (const std::exception&) {
      // Retry one by one so a single bad text does not fail its neighbours.
      for (std::size_t k = begin; k < end; ++k) {
        const auto i = misses[k];
        try {
          auto enc = encoder.encode(records[i].text);
          check_vector(enc.vector, spec);
          slots[i] = EmbeddingRecord{records[i].track_id, spec.encoder_id, std::move(enc.vector), enc.truncated};
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
      return;
    }
    for (std::size_t k = begin; k < end; ++k) {
      const auto i = misses[k];
      try {
        auto& enc = encoded[k - begin];
        check_vector(enc.vector, spec);
        slots[i] = EmbeddingRecord{records[i].track_id, spec.encoder_id, std::move(enc.vector), enc.truncated};
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  });

  EmbeddingBatch batch;
  batch.encoder_calls = calls.load();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (slots[i]) {
      if (cache && fresh[i]) cache->put(*slots[i], hashes[i]);
      batch.records.push_back(*std::move(slots[i]));
    }
    if (errors[i]) batch.failures.push_back({records[i].track_id, *errors[i]});
  }
  return batch;
}

}  // namespace lyricdet
