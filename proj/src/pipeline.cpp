#include "lyricdet/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>

#include "lyricdet/hashing.hpp"

namespace lyricdet {

void FeatureRun::throw_if_failed() const {
  if (failures.empty()) return;
  std::vector<ItemFailure> items;
  std::string msg = std::to_string(failures.size()) + " track(s) have no features:";
  for (const auto& f : failures) {
    msg += " " + f.track_id + " (" + f.stage + ")";
    items.push_back({f.track_id, f.stage + ": " + f.message});
  }
  throw BatchError(msg, std::move(items));
}

FeatureRun extract_features(const Corpus& corpus, TranscriberBackend& transcriber, TextEncoder& encoder,
                            const std::filesystem::path& cache_dir, std::size_t workers) {
  std::optional<TranscriptCache> transcripts;
  std::optional<EmbeddingCache> embeddings;
  if (!cache_dir.empty()) {
    transcripts.emplace(cache_dir, transcriber.id());
    embeddings.emplace(cache_dir, encoder.spec());
  }
  FeatureRun run;
  auto tb = transcribe_corpus(corpus, transcriber, workers, transcripts ? &*transcripts : nullptr);
  run.transcriber_calls = tb.backend_calls;
  for (const auto& f : tb.failures) run.failures.push_back({f.id, "transcribe", f.message});
  if (!tb.records.empty()) {
    auto eb = embed_corpus(tb.records, encoder, embeddings ? &*embeddings : nullptr, workers);
    run.encoder_calls = eb.encoder_calls;
    for (const auto& f : eb.failures) run.failures.push_back({f.id, "encode", f.message});
    run.embeddings = std::move(eb.records);
  }
  return run;
}

std::string PipelineConfig::fingerprint() const {
  nlohmann::ordered_json j;
  j["manifest"] = manifest_path.string();
  j["transcriber_id"] = transcriber_id;
  j["encoder_id"] = encoder_id;
  j["model"] = model_path.string();
  j["seed"] = seed;
  return lyricdet::fingerprint(j.dump());
}

PipelineResult pipeline_detect(const PipelineConfig& config) {
  if (config.workers == 0) throw PreconditionError("workers must be positive");
  const Corpus corpus = load_manifest(config.manifest_path);
  const DetectorModel model = load_model(config.model_path);
  if (!config.encoder_id.empty() && config.encoder_id != model.encoder_id()) {
    throw PreconditionError("model was trained on \"" + model.encoder_id() + "\", not \"" + config.encoder_id + "\"");
  }
  auto transcriber = make_transcriber(config.transcriber_id);
  auto encoder = default_registry().create(model.encoder_id());

  PipelineResult result;
  result.encoder_id = model.encoder_id();
  result.model_fingerprint = model_fingerprint(model);
  FeatureRun run = extract_features(corpus, *transcriber, *encoder, config.cache_dir, config.workers);
  result.transcriber_calls = run.transcriber_calls;
  result.encoder_calls = run.encoder_calls;
  result.failures = std::move(run.failures);
  for (const auto& e : run.embeddings) {
    try {
      const EmbeddingRecord* one = &e;
      result.predictions.push_back(predict(model, std::span<const EmbeddingRecord>(one, 1)).front());
    } catch (const std::exception& ex) {
      result.failures.push_back({e.track_id, "predict", ex.what()});
    }
  }
  // Keep corpus order in the failure list regardless of which stage failed.
  std::map<std::string, std::size_t, std::less<>> position;
  for (std::size_t i = 0; i < corpus.size(); ++i) position.emplace(corpus[i].track_id, i);
  std::stable_sort(result.failures.begin(), result.failures.end(),
                   [&](const StageFailure& a, const StageFailure& b) { return position[a.track_id] < position[b.track_id]; });
  if (!config.out_path.empty()) {
    write_predictions(config.out_path, result.predictions, result.encoder_id, result.model_fingerprint, result.failures);
  }
  return result;
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions,
                       const std::string& encoder_id, const std::string& model_fingerprint,
                       std::span<const StageFailure> failures) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["track_id"] = p.track_id;
    j["p_fake"] = p.p_fake;
    j["label"] = to_string(p.label);
    j["encoder_id"] = encoder_id;
    j["model_fingerprint"] = model_fingerprint;
    out << j.dump() << '\n';
  }
  for (const auto& f : failures) {
    nlohmann::ordered_json j;
    j["track_id"] = f.track_id;
    j["stage"] = f.stage;
    j["error"] = f.message;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  out.flush();
  if (!out) throw Error("cannot write " + path.string());
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("error")) continue;
      out.push_back({j.at("track_id").get<std::string>(), j.at("p_fake").get<double>(),
                     parse_label(j.at("label").get<std::string>())});
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace lyricdet
