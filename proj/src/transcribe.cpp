#include "lyricdet/transcribe.hpp"

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lyricdet/parallel.hpp"
#include "lyricdet/process.hpp"

namespace lyricdet {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_temperature(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

std::string transcript_to_json(const TranscriptRecord& r) {
  ordered_json obj;
  obj["track_id"] = r.track_id;
  obj["text"] = r.text;
  obj["transcriber_id"] = r.transcriber_id;
  obj["detected_language"] = r.detected_language ? ordered_json(*r.detected_language) : ordered_json(nullptr);
  obj["duration_s"] = r.duration_s;
  // Backends may emit invalid UTF-8; keep the bytes rather than failing the cache.
  return obj.dump(-1, ' ', false, json::error_handler_t::replace);
}

TranscriptRecord transcript_from_json(std::string_view line) {
  const json obj = json::parse(line);
  TranscriptRecord r;
  r.track_id = obj.at("track_id").get<std::string>();
  r.text = obj.at("text").get<std::string>();
  r.transcriber_id = obj.at("transcriber_id").get<std::string>();
  if (const auto it = obj.find("detected_language"); it != obj.end() && !it->is_null()) {
    r.detected_language = it->get<std::string>();
  }
  r.duration_s = obj.value("duration_s", 0.0);
  return r;
}

BackendOutput SidecarStubTranscriber::transcribe(const TranscriptionInput& input) {
  if (!input.lyrics_file) {
    throw BackendError("sidecar-stub needs gt_lyrics_path for track \"" + input.track.track_id + "\"");
  }
  return {read_bytes(*input.lyrics_file), std::nullopt};
}

BackendOutput GroundTruthTranscriber::transcribe(const TranscriptionInput& input) {
  if (!input.lyrics_file) {
    throw BackendError("track \"" + input.track.track_id + "\" has no gt_lyrics_path");
  }
  std::string text = read_bytes(*input.lyrics_file);
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  return {std::move(text), std::nullopt};
}

CommandTranscriber::CommandTranscriber(WhisperOptions options, std::string command)
    : options_(std::move(options)), command_(std::move(command)) {
  if (command_.empty()) {
    const char* env = std::getenv("LYRICDET_WHISPER_CMD");
    command_ = env && *env ? env : "python3 -m lyricdet.whisper_backend";
  }
  id_ = "whisper-" + options_.model + "+beam" + std::to_string(options_.beam_size) + "+t" +
        format_temperature(options_.temperature) + "+lang-" + options_.language;
}

BackendOutput CommandTranscriber::transcribe(const TranscriptionInput& input) {
  if (!input.audio) throw BackendError("whisper backend requires audio");
  static std::atomic<unsigned> counter{0};
  const auto wav = std::filesystem::temp_directory_path() /
                   ("lyricdet-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".wav");
  write_wav(wav, input.audio->samples, input.audio->sample_rate, SampleFormat::kFloat32);
  const std::string cmd = command_ + " --model " + shell_quote(options_.model) + " --beam-size " +
                          std::to_string(options_.beam_size) + " --temperature " +
                          format_temperature(options_.temperature) + " --language " +
                          shell_quote(options_.language) + " " + shell_quote(wav.string());
  ProcessResult result;
  try {
    result = run_command(cmd);
  } catch (...) {
    std::filesystem::remove(wav);
    throw;
  }
  std::filesystem::remove(wav);
  if (result.exit_code != 0) {
    throw BackendError("transcriber command failed (exit " + std::to_string(result.exit_code) + ")");
  }
  json obj;
  try {
    obj = json::parse(result.output);
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("transcriber produced malformed output: ") + e.what());
  }
  BackendOutput out;
  out.text = obj.at("text").get<std::string>();
  if (const auto it = obj.find("language"); it != obj.end() && it->is_string()) {
    out.detected_language = it->get<std::string>();
  }
  return out;
}

std::unique_ptr<TranscriberBackend> make_transcriber(const std::string& id) {
  if (id == "sidecar-stub") return std::make_unique<SidecarStubTranscriber>();
  if (id == "ground-truth") return std::make_unique<GroundTruthTranscriber>();
  if (id == "whisper") return std::make_unique<CommandTranscriber>();
  auto whisper = std::make_unique<CommandTranscriber>();
  if (id == whisper->id()) return whisper;
  throw Error("unknown transcriber \"" + id + "\"");
}

std::string sanitize_id(std::string_view id) {
  std::string out(id);
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-' || c == '+';
    if (!ok) c = '_';
  }
  return out;
}

TranscriptCache::TranscriptCache(std::filesystem::path cache_dir, std::string transcriber_id)
    : transcriber_id_(std::move(transcriber_id)) {
  if (transcriber_id_.empty()) throw Error("transcriber_id must be nonempty");
  const auto dir = cache_dir / sanitize_id(transcriber_id_);
  std::filesystem::create_directories(dir);
  file_ = dir / "transcripts.jsonl";
  std::ifstream in(file_, std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    TranscriptRecord r;
    try {
      r = transcript_from_json(line);
    } catch (const std::exception& e) {
      throw FormatError(file_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (r.transcriber_id != transcriber_id_) {
      throw FormatError(file_.string() + ":" + std::to_string(line_no) + ": record from transcriber \"" +
                        r.transcriber_id + "\" in cache for \"" + transcriber_id_ + "\"");
    }
    records_[r.track_id] = std::move(r);
  }
}

std::optional<TranscriptRecord> TranscriptCache::get(const std::string& track_id) const {
  std::shared_lock lock(mutex_);
  const auto it = records_.find(track_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void TranscriptCache::put(const TranscriptRecord& record) {
  if (record.transcriber_id != transcriber_id_) {
    throw Error("cannot store a \"" + record.transcriber_id + "\" transcript in the \"" +
                transcriber_id_ + "\" cache");
  }
  std::unique_lock lock(mutex_);
  std::ofstream out(file_, std::ios::binary | std::ios::app);
  out << transcript_to_json(record) << '\n';
  out.flush();
  if (!out) throw Error("cannot append to " + file_.string());
  records_[record.track_id] = record;
}

std::size_t TranscriptCache::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

TranscriptRecord transcribe_track(const Track& track, const Corpus& corpus,
                                  TranscriberBackend& backend, TranscriptCache* cache,
                                  std::atomic<std::size_t>* backend_calls) {
  if (cache) {
    if (auto hit = cache->get(track.track_id)) return *std::move(hit);
  }
  TranscriptionInput input{track, corpus.audio_file(track), corpus.lyrics_file(track), std::nullopt};
  if (input.audio_file && backend.audio_use() != AudioUse::kIgnored) {
    if (!std::filesystem::exists(*input.audio_file)) {
      throw AudioError("audio file not found: " + input.audio_file->string());
    }
    input.audio = load_mono(*input.audio_file, backend.preferred_sample_rate());
    if (input.audio->duration_s() < kMinAudioSeconds) {
      throw EmptyAudioError("audio shorter than " + std::to_string(kMinAudioSeconds) + " s: " +
                            input.audio_file->string());
    }
  } else if (backend.audio_use() == AudioUse::kRequired) {
    throw AudioError("track has no audio_path");
  }

  if (backend_calls) ++*backend_calls;
  BackendOutput out;
  try {
    out = backend.transcribe(input);
  } catch (const Error& e) {
    throw BackendError("track \"" + track.track_id + "\": " + e.what());
  }
  TranscriptRecord record;
  record.track_id = track.track_id;
  record.text = std::move(out.text);
  record.transcriber_id = backend.id();
  record.detected_language = std::move(out.detected_language);
  record.duration_s = input.audio ? input.audio->duration_s() : 0.0;
  if (cache) cache->put(record);
  return record;
}

void TranscriptionBatch::throw_if_failed() const {
  if (failures.empty()) return;
  std::string msg = std::to_string(failures.size()) + " track(s) failed to transcribe:";
  for (const auto& f : failures) msg += " " + f.id;
  throw BatchError(msg, failures);
}

TranscriptionBatch transcribe_corpus(const Corpus& corpus, TranscriberBackend& backend,
                                     std::size_t workers, TranscriptCache* cache) {
  if (workers == 0) throw PreconditionError("workers must be positive");
  std::vector<std::optional<TranscriptRecord>> slots(corpus.size());
  std::vector<std::optional<std::string>> errors(corpus.size());
  std::atomic<std::size_t> calls{0};
  parallel_for(corpus.size(), workers, [&](std::size_t i) {
    try {
      slots[i] = transcribe_track(corpus[i], corpus, backend, cache, &calls);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  TranscriptionBatch batch;
  batch.backend_calls = calls.load();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (slots[i]) batch.records.push_back(*std::move(slots[i]));
    if (errors[i]) batch.failures.push_back({corpus[i].track_id, *errors[i]});
  }
  return batch;
}

TranscriptRecord load_ground_truth(const Track& track, const Corpus& corpus) {
  const auto file = corpus.lyrics_file(track);
  if (!file) throw PreconditionError("track \"" + track.track_id + "\" has no gt_lyrics_path");
  if (!std::filesystem::exists(*file)) throw Error("lyrics file not found: " + file->string());
  GroundTruthTranscriber gt;
  TranscriptionInput input{track, std::nullopt, file, std::nullopt};
  auto out = gt.transcribe(input);
  return {track.track_id, std::move(out.text), gt.id(), std::move(out.detected_language), 0.0};
}

}  // namespace lyricdet
