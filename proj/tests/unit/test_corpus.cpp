#include <doctest.h>

#include <array>
#include <set>

#include "lyricdet/corpus.hpp"
#include "lyricdet/rng.hpp"
#include "support.hpp"

using namespace lyricdet;
using lyricdet::test::TempDir;

namespace {

// Published grid counts, languages in kLanguages order.
constexpr std::array<int, 9> kHumanTest = {450, 392, 339, 450, 450, 450, 211, 354, 338};
constexpr std::array<int, 9> kAiTrain = {28, 30, 22, 30, 29, 30, 27, 30, 29};
constexpr std::array<int, 9> kAiTest = {450, 450, 241, 450, 450, 450, 150, 407, 255};

Corpus reference_corpus() {
  std::vector<Track> tracks;
  auto add = [&](std::size_t lang, Source src, Split split, int n) {
    for (int i = 0; i < n; ++i) {
      Track t;
      t.language = std::string(kLanguages[lang]);
      t.genre = genres_for(t.language)[static_cast<std::size_t>(i) % 6];
      t.source = src;
      t.split = split;
      if (src == Source::kAi) {
        t.lyrics_generator = kLyricsGenerators[static_cast<std::size_t>(i) % 3];
        t.audio_generator = AudioGenerator::kSuno;
      }
      t.track_id = t.language + "-" + std::string(to_string(src)) + "-" + std::string(to_string(split)) + "-" +
                   std::to_string(i);
      tracks.push_back(std::move(t));
    }
  };
  for (std::size_t l = 0; l < kLanguages.size(); ++l) {
    add(l, Source::kHuman, Split::kTrain, 30);
    add(l, Source::kHuman, Split::kTest, kHumanTest[l]);
    add(l, Source::kAi, Split::kTrain, kAiTrain[l]);
    add(l, Source::kAi, Split::kTest, kAiTest[l]);
  }
  return Corpus("reference", std::move(tracks), {});
}

Corpus toy_corpus() {
  std::vector<Track> tracks;
  int k = 0;
  for (auto g : kLyricsGenerators) {
    for (int i = 0; i < 2; ++i) {
      Track t;
      t.track_id = "ai-" + std::to_string(k++);
      t.language = "en";
      t.genre = "pop";
      t.source = Source::kAi;
      t.lyrics_generator = g;
      t.audio_generator = AudioGenerator::kSuno;
      t.split = Split::kTrain;
      tracks.push_back(t);
    }
  }
  return Corpus("toy", std::move(tracks), {});
}

}  // namespace

TEST_CASE("English rows load with the published counts") {
  TempDir dir;
  write_manifest(reference_corpus(), dir / "m.jsonl");
  const Corpus c = load_manifest(dir / "m.jsonl");
  CHECK(c.count("en", Source::kHuman, Split::kTrain) == 30);
  CHECK(c.count("en", Source::kHuman, Split::kTest) == 450);
  CHECK(c.count("en", Source::kAi, Split::kTrain) == 28);
  CHECK(c.count("en", Source::kAi, Split::kTest) == 450);
}

TEST_CASE("select on the reference corpus") {
  const Corpus c = reference_corpus();
  // 9 * 30 human + sum(kAiTrain), summed independently of the loader.
  int ai_train = 0;
  for (int v : kAiTrain) ai_train += v;
  CHECK(ai_train == 255);
  CHECK(select(c, TrackFilter::parse("split=train")).size() == 525);
  CHECK(select(c, TrackFilter::parse("language=ja,source=ai,split=test")).size() == 255);
  CHECK(select(c, TrackFilter::parse("language=xx")).empty());
  CHECK(select(c, TrackFilter::parse("language=en|de,source=human,split=train")).size() == 60);
}

TEST_CASE("select is idempotent") {
  const Corpus c = reference_corpus();
  for (const char* f : {"split=train", "language=tr,source=ai", "genre=pop|rock", "lyrics_generator=mistral", ""}) {
    const auto filter = TrackFilter::parse(f);
    const Corpus once = select(c, filter);
    CHECK(select(once, filter).tracks() == once.tracks());
  }
}

TEST_CASE("empty manifest") {
  TempDir dir;
  lyricdet::test::write_text(dir / "empty.jsonl", "");
  const auto report = validate_manifest(dir / "empty.jsonl");
  CHECK(report.ok());
  CHECK(report.records == 0);
  CHECK(load_manifest(dir / "empty.jsonl").empty());
}

TEST_CASE("duplicate track ids are reported with both lines") {
  TempDir dir;
  using lyricdet::test::track_line;
  lyricdet::test::write_text(dir / "m.jsonl", track_line("t1", "human", "train") + "\n" +
                                                 track_line("t2", "human", "test") + "\n" +
                                                 track_line("t1", "ai", "test") + "\n");
  const auto report = validate_manifest(dir / "m.jsonl");
  REQUIRE(report.errors.size() == 1);
  const auto& msg = report.errors[0].message;
  CHECK(msg.find("\"t1\"") != std::string::npos);
  CHECK(msg.find('1') != std::string::npos);
  CHECK(msg.find('3') != std::string::npos);
  CHECK_THROWS_AS(load_manifest(dir / "m.jsonl"), ManifestError);
}

TEST_CASE("source and generator fields must agree") {
  TempDir dir;
  lyricdet::test::write_text(
      dir / "m.jsonl",
      std::string("{\"track_id\":\"h\",\"language\":\"en\",\"genre\":\"pop\",\"source\":\"human\","
          "\"lyrics_generator\":\"mistral\",\"audio_generator\":\"none\",\"split\":\"train\"}\n"
          "{\"track_id\":\"a\",\"language\":\"en\",\"genre\":\"pop\",\"source\":\"ai\","
          "\"lyrics_generator\":\"none\",\"audio_generator\":\"suno\",\"split\":\"train\"}\n"
          "{\"track_id\":\"l\",\"language\":\"xx\",\"genre\":\"pop\",\"source\":\"human\","
          "\"lyrics_generator\":\"none\",\"audio_generator\":\"none\",\"split\":\"train\"}\n"));
  const auto report = validate_manifest(dir / "m.jsonl");
  CHECK(report.errors.size() == 3);
}

TEST_CASE("unknown genre is a warning, not an error") {
  TempDir dir;
  lyricdet::test::write_text(dir / "m.jsonl",
                             "{\"track_id\":\"h\",\"language\":\"en\",\"genre\":\"sea shanty\",\"source\":\"human\","
                             "\"lyrics_generator\":\"none\",\"audio_generator\":\"none\",\"split\":\"train\"}\n");
  const auto report = validate_manifest(dir / "m.jsonl");
  CHECK(report.ok());
  CHECK(report.warnings.size() == 1);
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  const Corpus c = reference_corpus();
  write_manifest(c, dir / "a.jsonl");
  const Corpus back = load_manifest(dir / "a.jsonl");
  CHECK(back.tracks() == c.tracks());
  write_manifest(back, dir / "b.jsonl");
  CHECK(lyricdet::test::read_text(dir / "a.jsonl") == lyricdet::test::read_text(dir / "b.jsonl"));
}

TEST_CASE("stats grid totals") {
  const std::string s = render_stats(reference_corpus());
  CHECK(s.find("525") == std::string::npos);  // the grid is by source x split, not by split
  CHECK(s.find("270") != std::string::npos);
  CHECK(s.find("255") != std::string::npos);
}

TEST_CASE("leave one generator out") {
  SUBCASE("toy corpus, tinyllama held out") {
    const auto s = leave_one_generator_out(toy_corpus(), LyricsGenerator::kTinyLlama);
    std::size_t ai = 0;
    for (const auto& t : s.train) ai += t.is_fake() ? 1 : 0;
    CHECK(ai == 4);
  }
  SUBCASE("no ai tracks") {
    std::vector<Track> tracks;
    for (int i = 0; i < 4; ++i) {
      Track t;
      t.track_id = "h" + std::to_string(i);
      t.language = "en";
      t.genre = "pop";
      t.split = i < 2 ? Split::kTrain : Split::kTest;
      tracks.push_back(t);
    }
    const Corpus c("h", tracks, {});
    const auto s = leave_one_generator_out(c, LyricsGenerator::kMistral);
    CHECK(s.train.size() == 2);
    CHECK(s.test.size() == 2);
  }
  SUBCASE("hygiene on the reference corpus for every rotation") {
    const Corpus c = reference_corpus();
    for (auto g : kLyricsGenerators) {
      const auto s = leave_one_generator_out(c, g);
      std::set<std::string> train_ids;
      for (const auto& t : s.train) {
        CHECK(t.lyrics_generator != g);
        train_ids.insert(t.track_id);
      }
      for (const auto& t : s.test) CHECK(train_ids.count(t.track_id) == 0);
      CHECK(!s.train.empty());
      CHECK(!s.test.empty());
    }
  }
}

TEST_CASE("track fields are addressable by name") {
  const Corpus c = toy_corpus();
  CHECK(track_field(c[0], "lyrics_generator") == "mistral");
  CHECK(track_field(c[0], "source") == "ai");
  CHECK(is_track_field("genre"));
  CHECK_FALSE(is_track_field("tempo"));
  CHECK_THROWS_AS(TrackFilter::parse("tempo=fast"), PreconditionError);
}
