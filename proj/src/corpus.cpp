#include "lyricdet/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace lyricdet {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array<std::string_view, 9> kTrackFields = {
    "track_id", "audio_path",       "gt_lyrics_path",  "language", "genre",
    "source",   "lyrics_generator", "audio_generator", "split"};

const std::map<std::string, std::vector<std::string>, std::less<>>& genre_table() {
  static const std::map<std::string, std::vector<std::string>, std::less<>> table = {
      {"fr", {"alternative", "french", "hip-hop", "pop", "r&b", "rock"}},
      {"it", {"alternative", "electronic", "hip-hop", "jazz", "pop", "rock"}},
      {"es", {"alternative", "electronic", "hip-hop", "latin-american", "pop", "rock"}},
      {"tr", {"alternative", "electronic", "folk", "hip-hop", "pop", "rock"}},
      {"en", {"alternative", "electronic", "hip-hop", "pop", "r&b", "rock"}},
      {"de", {"alternative", "edm", "electronic", "hip-hop", "pop", "rock"}},
      {"pt",
       {"christian", "hip-hop", "música-popular-brasileira", "pop", "samba-pagode", "sertanejo"}},
      {"ja", {"alternative", "asian", "electronic", "pop", "rock", "soundtrack"}},
      {"ar", {"alternative", "arabic", "electronic", "hip-hop", "pop", "rock"}},
  };
  return table;
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<std::string_view, Enum>, N>& names,
                std::string_view what) {
  for (const auto& [name, value] : names) {
    if (name == s) return value;
  }
  throw Error("unknown " + std::string(what) + " \"" + std::string(s) + "\"");
}

constexpr std::array<std::pair<std::string_view, Source>, 2> kSourceNames = {
    {{"human", Source::kHuman}, {"ai", Source::kAi}}};
constexpr std::array<std::pair<std::string_view, LyricsGenerator>, 4> kLyricsGenNames = {
    {{"none", LyricsGenerator::kNone},
     {"mistral", LyricsGenerator::kMistral},
     {"tinyllama", LyricsGenerator::kTinyLlama},
     {"wizardlm2", LyricsGenerator::kWizardLm2}}};
constexpr std::array<std::pair<std::string_view, AudioGenerator>, 3> kAudioGenNames = {
    {{"none", AudioGenerator::kNone}, {"suno", AudioGenerator::kSuno}, {"udio", AudioGenerator::kUdio}}};
constexpr std::array<std::pair<std::string_view, Split>, 2> kSplitNames = {
    {{"train", Split::kTrain}, {"test", Split::kTest}}};

std::string required_string(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw Error("missing field \"" + std::string(key) + "\"");
  if (!it->is_string()) throw Error("field \"" + std::string(key) + "\" must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error("field \"" + std::string(key) + "\" must be a string or null");
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Source v) { return v == Source::kHuman ? "human" : "ai"; }

std::string_view to_string(LyricsGenerator v) {
  for (const auto& [name, value] : kLyricsGenNames) {
    if (value == v) return name;
  }
  return "none";
}

std::string_view to_string(AudioGenerator v) {
  for (const auto& [name, value] : kAudioGenNames) {
    if (value == v) return name;
  }
  return "none";
}

std::string_view to_string(Split v) { return v == Split::kTrain ? "train" : "test"; }

Source parse_source(std::string_view s) { return parse_enum(s, kSourceNames, "source"); }
LyricsGenerator parse_lyrics_generator(std::string_view s) {
  return parse_enum(s, kLyricsGenNames, "lyrics_generator");
}
AudioGenerator parse_audio_generator(std::string_view s) {
  return parse_enum(s, kAudioGenNames, "audio_generator");
}
Split parse_split(std::string_view s) { return parse_enum(s, kSplitNames, "split"); }

bool is_known_language(std::string_view lang) {
  return std::find(kLanguages.begin(), kLanguages.end(), lang) != kLanguages.end();
}

const std::vector<std::string>& genres_for(std::string_view lang) {
  static const std::vector<std::string> kEmpty;
  const auto& table = genre_table();
  const auto it = table.find(lang);
  return it == table.end() ? kEmpty : it->second;
}

std::string normalize_genre(std::string_view genre) {
  std::string out;
  bool pending_sep = false;
  for (char c : genre) {
    if (c == ' ' || c == '_' || c == '-' || c == '\t') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) {
      out.push_back('-');
      pending_sep = false;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  // Non-ASCII capitals common in the genre table (UTF-8 two-byte Latin-1 range).
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    auto lead = static_cast<unsigned char>(out[i]);
    auto cont = static_cast<unsigned char>(out[i + 1]);
    if (lead == 0xC3 && cont >= 0x80 && cont <= 0x9E && cont != 0x97) {
      out[i + 1] = static_cast<char>(cont + 0x20);
    }
  }
  return out;
}

TrackIssues check_track(const Track& t) {
  TrackIssues issues;
  if (t.track_id.empty()) issues.errors.emplace_back("track_id is empty");
  const bool human = t.source == Source::kHuman;
  const bool no_lyr = t.lyrics_generator == LyricsGenerator::kNone;
  const bool no_aud = t.audio_generator == AudioGenerator::kNone;
  if (human && !(no_lyr && no_aud)) {
    issues.errors.emplace_back("human track must have lyrics_generator=none and audio_generator=none");
  }
  if (!human && (no_lyr || no_aud)) {
    issues.errors.emplace_back("ai track must name both a lyrics_generator and an audio_generator");
  }
  if (!is_known_language(t.language)) {
    issues.errors.emplace_back("unknown language \"" + t.language + "\"");
  } else {
    const auto& genres = genres_for(t.language);
    if (std::find(genres.begin(), genres.end(), t.genre) == genres.end()) {
      issues.warnings.emplace_back("genre \"" + t.genre + "\" is not in the genre list for \"" +
                                   t.language + "\"");
    }
  }
  if (t.audio_path && t.audio_path->empty()) issues.errors.emplace_back("audio_path is empty");
  if (t.gt_lyrics_path && t.gt_lyrics_path->empty()) {
    issues.errors.emplace_back("gt_lyrics_path is empty");
  }
  return issues;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << records << " records, " << errors.size() << " errors, " << warnings.size() << " warnings";
  for (const auto& e : errors) os << "\n  error: line " << e.line << ": " << e.message;
  return os.str();
}

ManifestError::ManifestError(ValidationReport report)
    : Error("invalid manifest: " + report.summary()), report_(std::move(report)) {}

Corpus::Corpus(std::string name, std::vector<Track> tracks, std::filesystem::path base_dir,
               int schema_version)
    : name_(std::move(name)),
      tracks_(std::move(tracks)),
      base_dir_(std::move(base_dir)),
      schema_version_(schema_version) {
  ValidationReport report;
  report.records = tracks_.size();
  std::map<std::string, std::size_t, std::less<>> first_seen;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const auto& t = tracks_[i];
    for (auto& e : check_track(t).errors) {
      report.errors.push_back({i + 1, "track \"" + t.track_id + "\": " + e});
    }
    auto [it, inserted] = first_seen.emplace(t.track_id, i);
    if (!inserted) {
      report.errors.push_back({i + 1, "duplicate track_id \"" + t.track_id + "\" (records " +
                                          std::to_string(it->second + 1) + " and " +
                                          std::to_string(i + 1) + ")"});
    }
  }
  if (!report.ok()) throw ManifestError(std::move(report));
  index_ = std::move(first_seen);
}

const Track* Corpus::find(std::string_view track_id) const {
  const auto it = index_.find(track_id);
  return it == index_.end() ? nullptr : &tracks_[it->second];
}

std::filesystem::path Corpus::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return (base_dir_ / p).lexically_normal();
}

std::optional<std::filesystem::path> Corpus::audio_file(const Track& t) const {
  if (!t.audio_path) return std::nullopt;
  return resolve(*t.audio_path);
}

std::optional<std::filesystem::path> Corpus::lyrics_file(const Track& t) const {
  if (!t.gt_lyrics_path) return std::nullopt;
  return resolve(*t.gt_lyrics_path);
}

std::size_t Corpus::count(std::string_view language, Source source, Split split) const {
  return static_cast<std::size_t>(std::count_if(tracks_.begin(), tracks_.end(), [&](const Track& t) {
    return t.language == language && t.source == source && t.split == split;
  }));
}

Corpus Corpus::rebased(const std::filesystem::path& new_base, std::string new_name) const {
  namespace fs = std::filesystem;
  const fs::path abs_new = fs::absolute(new_base).lexically_normal();
  auto rewrite = [&](std::optional<std::string>& p) {
    if (!p || fs::path(*p).is_absolute()) return;
    const fs::path abs_old = fs::absolute(resolve(*p)).lexically_normal();
    p = abs_old.lexically_relative(abs_new).generic_string();
  };
  std::vector<Track> tracks = tracks_;
  for (auto& t : tracks) {
    rewrite(t.audio_path);
    rewrite(t.gt_lyrics_path);
  }
  return Corpus(std::move(new_name), std::move(tracks), new_base, schema_version_);
}

Track parse_track_json(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed record: ") + e.what());
  }
  if (!obj.is_object()) throw Error("record is not an object");
  for (const auto& [key, _] : obj.items()) {
    const bool known = key == "derivation" ||
                       std::find(kTrackFields.begin(), kTrackFields.end(), key) != kTrackFields.end();
    if (!known) throw Error("unknown field \"" + key + "\"");
  }
  Track t;
  t.track_id = required_string(obj, "track_id");
  t.audio_path = optional_string(obj, "audio_path");
  t.gt_lyrics_path = optional_string(obj, "gt_lyrics_path");
  t.language = required_string(obj, "language");
  t.genre = normalize_genre(required_string(obj, "genre"));
  t.source = parse_source(required_string(obj, "source"));
  t.lyrics_generator = parse_lyrics_generator(required_string(obj, "lyrics_generator"));
  t.audio_generator = parse_audio_generator(required_string(obj, "audio_generator"));
  t.split = parse_split(required_string(obj, "split"));
  if (const auto it = obj.find("derivation"); it != obj.end() && !it->is_null()) {
    if (!it->is_object()) throw Error("field \"derivation\" must be an object");
    Derivation d;
    d.source_track_id = required_string(*it, "source_track_id");
    d.kind = required_string(*it, "kind");
    const auto params = it->find("params");
    d.params = params == it->end() ? "{}" : params->dump();
    const auto seed = it->find("seed");
    if (seed != it->end()) d.seed = seed->get<std::uint64_t>();
    t.derivation = std::move(d);
  }
  return t;
}

std::string track_to_json(const Track& t) {
  ordered_json obj;
  obj["track_id"] = t.track_id;
  obj["audio_path"] = t.audio_path ? ordered_json(*t.audio_path) : ordered_json(nullptr);
  obj["gt_lyrics_path"] = t.gt_lyrics_path ? ordered_json(*t.gt_lyrics_path) : ordered_json(nullptr);
  obj["language"] = t.language;
  obj["genre"] = t.genre;
  obj["source"] = to_string(t.source);
  obj["lyrics_generator"] = to_string(t.lyrics_generator);
  obj["audio_generator"] = to_string(t.audio_generator);
  obj["split"] = to_string(t.split);
  if (t.derivation) {
    ordered_json d;
    d["source_track_id"] = t.derivation->source_track_id;
    d["kind"] = t.derivation->kind;
    d["params"] = ordered_json::parse(t.derivation->params);
    d["seed"] = t.derivation->seed;
    obj["derivation"] = std::move(d);
  }
  return obj.dump();
}

namespace {

struct ParsedManifest {
  std::vector<Track> tracks;
  ValidationReport report;
};

ParsedManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest " + path.string());
  ParsedManifest out;
  std::map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++out.report.records;
    Track t;
    try {
      t = parse_track_json(line);
    } catch (const Error& e) {
      out.report.errors.push_back({line_no, e.what()});
      continue;
    }
    auto issues = check_track(t);
    for (auto& e : issues.errors) out.report.errors.push_back({line_no, std::move(e)});
    for (auto& w : issues.warnings) out.report.warnings.push_back({line_no, std::move(w)});
    auto [it, inserted] = first_line.emplace(t.track_id, line_no);
    if (!inserted) {
      out.report.errors.push_back({line_no, "duplicate track_id \"" + t.track_id + "\" on lines " +
                                                std::to_string(it->second) + " and " +
                                                std::to_string(line_no)});
      continue;
    }
    out.tracks.push_back(std::move(t));
  }
  return out;
}

}  // namespace

ValidationReport validate_manifest(const std::filesystem::path& path) {
  return parse_manifest(path).report;
}

Corpus load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("manifest not found: " + path.string());
  auto parsed = parse_manifest(path);
  if (!parsed.report.ok()) throw ManifestError(std::move(parsed.report));
  return Corpus(path.stem().string(), std::move(parsed.tracks), path.parent_path());
}

void write_manifest(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& t : corpus) out << track_to_json(t) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::string render_stats(const Corpus& corpus) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-14s", "");
  os << buf;
  for (auto lang : kLanguages) {
    std::snprintf(buf, sizeof buf, "%6s", std::string(lang).c_str());
    os << buf;
  }
  os << "  total\n";
  for (Source source : {Source::kHuman, Source::kAi}) {
    for (Split split : {Split::kTrain, Split::kTest}) {
      std::snprintf(buf, sizeof buf, "%-6s %-7s", std::string(to_string(source)).c_str(),
                    std::string(to_string(split)).c_str());
      os << buf;
      std::size_t total = 0;
      for (auto lang : kLanguages) {
        const auto n = corpus.count(lang, source, split);
        total += n;
        std::snprintf(buf, sizeof buf, "%6zu", n);
        os << buf;
      }
      std::snprintf(buf, sizeof buf, "%7zu\n", total);
      os << buf;
    }
  }
  return os.str();
}

bool is_track_field(std::string_view field) {
  return std::find(kTrackFields.begin(), kTrackFields.end(), field) != kTrackFields.end();
}

std::string track_field(const Track& t, std::string_view field) {
  if (field == "track_id") return t.track_id;
  if (field == "audio_path") return t.audio_path.value_or("");
  if (field == "gt_lyrics_path") return t.gt_lyrics_path.value_or("");
  if (field == "language") return t.language;
  if (field == "genre") return t.genre;
  if (field == "source") return std::string(to_string(t.source));
  if (field == "lyrics_generator") return std::string(to_string(t.lyrics_generator));
  if (field == "audio_generator") return std::string(to_string(t.audio_generator));
  if (field == "split") return std::string(to_string(t.split));
  throw PreconditionError("unknown track field \"" + std::string(field) + "\"");
}

TrackFilter TrackFilter::parse(std::string_view expr) {
  TrackFilter filter;
  std::size_t pos = 0;
  while (pos <= expr.size()) {
    auto comma = expr.find(',', pos);
    if (comma == std::string_view::npos) comma = expr.size();
    auto clause = expr.substr(pos, comma - pos);
    pos = comma + 1;
    if (clause.find_first_not_of(' ') == std::string_view::npos) continue;
    const auto eq = clause.find('=');
    if (eq == std::string_view::npos) {
      throw Error("filter clause \"" + std::string(clause) + "\" is not field=value");
    }
    filter.where(clause.substr(0, eq), clause.substr(eq + 1));
  }
  return filter;
}

TrackFilter& TrackFilter::where(std::string_view field, std::string_view value) {
  if (!is_track_field(field)) throw PreconditionError("unknown track field \"" + std::string(field) + "\"");
  Clause clause{std::string(field), {}};
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto bar = value.find('|', pos);
    if (bar == std::string_view::npos) bar = value.size();
    std::string v(value.substr(pos, bar - pos));
    pos = bar + 1;
    if (field == "source") parse_source(v);
    if (field == "lyrics_generator") parse_lyrics_generator(v);
    if (field == "audio_generator") parse_audio_generator(v);
    if (field == "split") parse_split(v);
    if (field == "genre") v = normalize_genre(v);
    clause.values.push_back(std::move(v));
  }
  clauses_.push_back(std::move(clause));
  return *this;
}

bool TrackFilter::matches(const Track& track) const {
  return std::all_of(clauses_.begin(), clauses_.end(), [&](const Clause& c) {
    const auto v = track_field(track, c.field);
    return std::find(c.values.begin(), c.values.end(), v) != c.values.end();
  });
}

std::string TrackFilter::to_string() const {
  std::string out;
  for (const auto& c : clauses_) {
    if (!out.empty()) out += ',';
    out += c.field + '=';
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      if (i) out += '|';
      out += c.values[i];
    }
  }
  return out;
}

Corpus select(const Corpus& corpus, const TrackFilter& filter) {
  std::vector<Track> kept;
  for (const auto& t : corpus) {
    if (filter.matches(t)) kept.push_back(t);
  }
  return Corpus(corpus.name(), std::move(kept), corpus.base_dir(), corpus.schema_version());
}

GeneratorSplit leave_one_generator_out(const Corpus& corpus, LyricsGenerator held_out) {
  if (held_out == LyricsGenerator::kNone) {
    throw PreconditionError("held-out generator must be one of mistral, tinyllama, wizardlm2");
  }
  std::vector<Track> train;
  std::vector<Track> test;
  for (const auto& t : corpus) {
    if (t.split == Split::kTrain) {
      if (t.lyrics_generator != held_out) train.push_back(t);
    } else if (t.lyrics_generator == held_out || t.source == Source::kHuman) {
      test.push_back(t);
    }
  }
  const std::string suffix = "-logo-" + std::string(to_string(held_out));
  return {Corpus(corpus.name() + suffix + "-train", std::move(train), corpus.base_dir()),
          Corpus(corpus.name() + suffix + "-test", std::move(test), corpus.base_dir())};
}

}  // namespace lyricdet
