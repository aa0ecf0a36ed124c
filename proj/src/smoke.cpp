#include "lyricdet/smoke.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "lyricdet/audio.hpp"
#include "lyricdet/corpus.hpp"
#include "lyricdet/hashing.hpp"
#include "lyricdet/rng.hpp"

namespace lyricdet {
namespace {

constexpr std::array<std::string_view, 18> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                                      "r", "s", "t", "v", "z", "br", "st", "kr", "sh"};
constexpr std::array<std::string_view, 8> kNuclei = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
constexpr std::array<std::string_view, 6> kCodas = {"", "", "n", "r", "s", "l"};

std::vector<std::string> pseudo_vocabulary(std::uint64_t seed, std::size_t size) {
  Rng rng(mix64(seed ^ 0x766f6362ULL));
  std::vector<std::string> words;
  words.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::string w;
    const std::size_t syllables = 1 + rng.index(4);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.index(kOnsets.size())];
      w += kNuclei[rng.index(kNuclei.size())];
      w += kCodas[rng.index(kCodas.size())];
    }
    words.push_back(std::move(w));
  }
  return words;
}

std::string human_lyrics(Rng& rng, const std::vector<std::string>& vocab) {
  std::string text;
  const std::size_t lines = 8 + rng.index(17);
  for (std::size_t l = 0; l < lines; ++l) {
    if (l > 0 && rng.uniform() < 0.12) text += '\n';
    const std::size_t words = 2 + rng.index(12);
    for (std::size_t w = 0; w < words; ++w) {
      std::string word = vocab[rng.index(vocab.size())];
      if (w == 0 && rng.uniform() < 0.6) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      if (w > 0) text += ' ';
      text += word;
      if (w + 1 < words && rng.uniform() < 0.08) text += ',';
    }
    const double p = rng.uniform();
    if (p < 0.1) text += '?';
    else if (p < 0.2) text += '.';
    else if (p < 0.25) text += '!';
    text += '\n';
  }
  return text;
}

constexpr std::array<std::string_view, 8> kSubjects = {"we", "you and I", "our hearts", "the night",
                                                       "my soul", "the stars", "your love", "the fire"};
constexpr std::array<std::string_view, 8> kVerbs = {"rise", "shine", "burn", "fly", "dream", "dance", "break free",
                                                    "hold on"};
constexpr std::array<std::string_view, 8> kPlaces = {"into the light", "beyond the sky", "through the storm",
                                                     "in the rain", "under the moon", "across the sea",
                                                     "forever more", "tonight"};

std::string ai_line(Rng& rng) {
  std::string line(kSubjects[rng.index(kSubjects.size())]);
  line += ' ';
  line += kVerbs[rng.index(kVerbs.size())];
  line += ' ';
  line += kPlaces[rng.index(kPlaces.size())];
  line[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
  return line;
}

std::string ai_lyrics(Rng& rng) {
  std::vector<std::string> chorus;
  for (int i = 0; i < 4; ++i) chorus.push_back(ai_line(rng));
  auto stanza = [&](std::string_view title, int n) {
    std::string s = "[" + std::string(title) + "]\n";
    for (int i = 0; i < n; ++i) s += ai_line(rng) + "\n";
    return s;
  };
  std::string chorus_text = "[Chorus]\n";
  for (const auto& l : chorus) chorus_text += l + "\n";
  return stanza("Verse 1", 4) + "\n" + chorus_text + "\n" + stanza("Verse 2", 4) + "\n" + chorus_text + "\n" +
         stanza("Bridge", 2) + "\n" + chorus_text;
}

std::vector<double> tone_mixture(Rng& rng, int sample_rate, double duration_s) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::vector<double> x(n, 0.0);
  const std::size_t partials = 3 + rng.index(3);
  for (std::size_t k = 0; k < partials; ++k) {
    const double f = 110.0 * std::pow(2.0, rng.uniform(0.0, 5.0));
    const double amp = rng.uniform(0.2, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi * f / sample_rate;
    for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(w * static_cast<double>(i) + phase);
  }
  const double lfo = rng.uniform(0.5, 3.0);
  const auto fade = static_cast<std::size_t>(0.01 * sample_rate);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    x[i] *= 0.7 + 0.3 * std::sin(2.0 * std::numbers::pi * lfo * t);
    if (i < fade) x[i] *= static_cast<double>(i) / static_cast<double>(fade);
    if (n - 1 - i < fade) x[i] *= static_cast<double>(n - 1 - i) / static_cast<double>(fade);
    peak = std::max(peak, std::abs(x[i]));
  }
  const double target = rng.uniform(0.5, 0.9);
  if (peak > 0.0) {
    for (double& v : x) v *= target / peak;
  }
  return x;
}

void quantize(std::vector<double>& x, int bits) {
  const double scale = std::ldexp(1.0, bits - 1);
  for (double& v : x) v = std::clamp(std::round(v * scale), -scale, scale - 1.0) / scale;
}

void add_floor(std::vector<double>& x, double snr_db, Rng& rng) {
  double power = 0.0;
  for (double v : x) power += v * v;
  power /= static_cast<double>(x.size());
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  for (double& v : x) v += sigma * rng.normal();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

struct Slot {
  std::string id;
  Source source;
  std::size_t index;  // position within its class, drives round-robin assignment
  Split split;
};

Track base_track(const Slot& s) {
  Track t;
  t.track_id = s.id;
  t.language = std::string(kLanguages[s.index % kLanguages.size()]);
  const auto& genres = genres_for(t.language);
  t.genre = genres[(s.index / kLanguages.size()) % genres.size()];
  t.source = s.source;
  t.split = s.split;
  if (s.source == Source::kAi) {
    t.lyrics_generator = kLyricsGenerators[s.index % kLyricsGenerators.size()];
    t.audio_generator = AudioGenerator::kSuno;
  }
  return t;
}

std::vector<Track> write_tracks(const std::filesystem::path& out_dir, const std::vector<Slot>& slots,
                                const SmokeOptions& o, const std::vector<std::string>& vocab,
                                AudioGenerator fake_generator, int fake_bits) {
  std::vector<Track> tracks;
  for (const auto& s : slots) {
    Track t = base_track(s);
    if (t.source == Source::kAi) t.audio_generator = fake_generator;
    Rng rng(mix64(o.seed ^ fnv1a64(s.id)));
    const std::string lyrics = s.source == Source::kAi ? ai_lyrics(rng) : human_lyrics(rng, vocab);
    auto audio = tone_mixture(rng, o.sample_rate, o.duration_s);
    if (s.source == Source::kAi) {
      quantize(audio, fake_bits);
    } else if (o.human_noise_snr_db) {
      add_floor(audio, *o.human_noise_snr_db, rng);
    }
    const std::string audio_rel = "audio/" + s.id + ".wav";
    const std::string lyrics_rel = "lyrics/" + s.id + ".txt";
    write_wav(out_dir / audio_rel, audio, o.sample_rate, SampleFormat::kPcm16);
    write_text(out_dir / lyrics_rel, lyrics);
    t.audio_path = audio_rel;
    t.gt_lyrics_path = lyrics_rel;
    tracks.push_back(std::move(t));
  }
  return tracks;
}

std::string numbered(std::string_view prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i + 1);
  return std::string(prefix) + buf;
}

}  // namespace

std::filesystem::path make_smoke_corpus(const std::filesystem::path& out_dir, const SmokeOptions& o) {
  if (o.size_per_class < 10) throw PreconditionError("size_per_class must be at least 10");
  if (o.sample_rate <= 0 || !(o.duration_s >= 0.2)) throw PreconditionError("audio needs a positive rate and >= 0.2 s");
  std::filesystem::create_directories(out_dir / "audio");
  std::filesystem::create_directories(out_dir / "lyrics");
  const auto vocab = pseudo_vocabulary(o.seed, 3000);
  const std::size_t n_train = (o.size_per_class * 8 + 5) / 10;

  std::vector<Slot> slots;
  for (std::size_t i = 0; i < o.size_per_class; ++i) {
    slots.push_back({numbered("smoke-h-", i), Source::kHuman, i, i < n_train ? Split::kTrain : Split::kTest});
  }
  for (std::size_t i = 0; i < o.size_per_class; ++i) {
    slots.push_back({numbered("smoke-a-", i), Source::kAi, i, i < n_train ? Split::kTrain : Split::kTest});
  }
  auto tracks = write_tracks(out_dir, slots, o, vocab, AudioGenerator::kSuno, 8);
  const auto manifest = out_dir / "manifest.jsonl";
  write_manifest(Corpus("manifest", std::move(tracks), out_dir), manifest);

  if (o.write_udio) {
    const std::size_t n = std::max<std::size_t>(10, o.size_per_class / 5);
    std::vector<Slot> udio;
    for (std::size_t i = 0; i < n; ++i) udio.push_back({numbered("udio-h-", i), Source::kHuman, i, Split::kTest});
    for (std::size_t i = 0; i < n; ++i) udio.push_back({numbered("udio-a-", i), Source::kAi, i, Split::kTest});
    auto ood = write_tracks(out_dir, udio, o, vocab, AudioGenerator::kUdio, 10);
    write_manifest(Corpus("udio", std::move(ood), out_dir), out_dir / "udio.jsonl");
  }
  return manifest;
}

std::filesystem::path make_smoke_corpus(const std::filesystem::path& out_dir, std::size_t size_per_class,
                                        std::uint64_t seed) {
  SmokeOptions o;
  o.size_per_class = size_per_class;
  o.seed = seed;
  return make_smoke_corpus(out_dir, o);
}

std::filesystem::path make_quantization_corpus(const std::filesystem::path& out_dir, std::size_t pairs,
                                               std::uint64_t seed, int sample_rate, double duration_s) {
  if (pairs < 5) throw PreconditionError("need at least 5 pairs");
  std::filesystem::create_directories(out_dir / "audio");
  const std::size_t n_train = (pairs * 8 + 5) / 10;
  std::vector<Track> tracks;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::string real_id = numbered("quant-h-", i), fake_id = numbered("quant-a-", i);
    Rng rng(mix64(seed ^ fnv1a64(real_id)));
    auto clean = tone_mixture(rng, sample_rate, duration_s);
    auto quantized = clean;
    quantize(quantized, 8);
    const Split split = i < n_train ? Split::kTrain : Split::kTest;
    for (const auto& [id, source] : {std::pair{real_id, Source::kHuman}, std::pair{fake_id, Source::kAi}}) {
      Track t = base_track({id, source, i, split});
      t.audio_path = "audio/" + id + ".wav";
      write_wav(out_dir / *t.audio_path, source == Source::kAi ? quantized : clean, sample_rate, SampleFormat::kPcm16);
      tracks.push_back(std::move(t));
    }
  }
  const auto manifest = out_dir / "manifest.jsonl";
  write_manifest(Corpus("manifest", std::move(tracks), out_dir), manifest);
  return manifest;
}

}  // namespace lyricdet
