#include "lyricdet/attacks.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <complex>
#include <nlohmann/json.hpp>
#include <numbers>
#include <optional>

#include "lyricdet/audio.hpp"
#include "lyricdet/dsp.hpp"
#include "lyricdet/hashing.hpp"
#include "lyricdet/parallel.hpp"
#include "lyricdet/rng.hpp"
#include "lyricdet/transcribe.hpp"

namespace lyricdet {
namespace {

constexpr double kPi = std::numbers::pi;

double parse_number(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw PreconditionError("parameter " + std::string(key) + ": \"" + std::string(text) + "\" is not a number");
  }
  return v;
}

std::vector<EqBand> parse_bands(std::string_view text) {
  std::vector<EqBand> bands;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const auto item = text.substr(0, semi);
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
    if (item.empty()) continue;
    const auto c1 = item.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw PreconditionError("EQ band \"" + std::string(item) + "\" is not hz:gain_db:q");
    }
    bands.push_back({parse_number("bands", item.substr(0, c1)), parse_number("bands", item.substr(c1 + 1, c2 - c1 - 1)),
                     parse_number("bands", item.substr(c2 + 1))});
  }
  return bands;
}

void clip(std::vector<double>& x) {
  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
}

double mean_power(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

std::vector<double> pitch_shift(std::span<const double> x, double semitones) {
  const double factor = std::pow(2.0, semitones / 12.0);
  // Stretch to len * factor, then read it back `factor` times faster.
  const auto stretched = time_stretch(x, 1.0 / factor);
  return resample_ratio(stretched, 1.0 / factor, x.size());
}

// Peaking biquad from the RBJ audio EQ cookbook, direct form I.
void peaking_eq(std::vector<double>& x, int sample_rate, const EqBand& band) {
  const double a = std::pow(10.0, band.gain_db / 40.0);
  const double w0 = 2.0 * kPi * band.center_hz / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * band.q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha / a;
  const double b0 = (1.0 + alpha * a) / a0, b1 = -2.0 * cw / a0, b2 = (1.0 - alpha * a) / a0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - alpha / a) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

std::vector<double> add_noise(std::span<const double> x, double snr_db, std::uint64_t seed) {
  const double signal_power = mean_power(x);
  if (!(signal_power > 0.0)) throw PreconditionError("noise attack needs a non-silent signal to set the noise level");
  Rng rng(mix64(seed ^ 0x6e6f6973ULL));
  std::vector<double> noise(x.size());
  for (double& v : noise) v = rng.normal();
  // Scale the realization itself (not its expectation) so the SNR is exact.
  const double scale = std::sqrt(signal_power / (std::pow(10.0, snr_db / 10.0) * mean_power(noise)));
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * noise[i];
  return y;
}

std::vector<double> add_reverb(std::span<const double> x, int sample_rate, double decay_s, double mix,
                               std::uint64_t seed) {
  const auto length = static_cast<std::size_t>(std::max(1.0, std::round(decay_s * sample_rate)));
  Rng rng(mix64(seed ^ 0x72657662ULL));
  std::vector<double> ir(length);
  double energy = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    ir[n] = rng.normal() * std::pow(10.0, -3.0 * static_cast<double>(n) / static_cast<double>(length));
    energy += ir[n] * ir[n];
  }
  for (double& v : ir) v /= std::sqrt(energy);
  const auto wet = dsp::convolve(x, ir);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (1.0 - mix) * x[i] + mix * wet[i];
  // Match the input loudness so the attack does not double as a gain change.
  const double in_rms = rms(x), out_rms = rms(y);
  if (out_rms > 0.0) {
    for (double& v : y) v *= in_rms / out_rms;
  }
  return y;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kStretch: return "stretch";
    case AttackKind::kResampleSpeed: return "resample-speed";
    case AttackKind::kPitch: return "pitch";
    case AttackKind::kEq: return "eq";
    case AttackKind::kNoise: return "noise";
    case AttackKind::kReverb: return "reverb";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view s) {
  for (auto k : {AttackKind::kStretch, AttackKind::kResampleSpeed, AttackKind::kPitch, AttackKind::kEq,
                 AttackKind::kNoise, AttackKind::kReverb}) {
    if (s == to_string(k)) return k;
  }
  throw PreconditionError("unknown attack kind \"" + std::string(s) + "\"");
}

AttackSpec AttackSpec::defaults(AttackKind kind, std::uint64_t seed) {
  AttackSpec s;
  s.kind = kind;
  s.seed = seed;
  return s;
}

void AttackSpec::set_param(std::string_view key, std::string_view value) {
  if (key == "rate") {
    rate = parse_number(key, value);
  } else if (key == "semitones") {
    semitones = parse_number(key, value);
  } else if (key == "target_snr_db") {
    target_snr_db = parse_number(key, value);
  } else if (key == "decay_s") {
    decay_s = parse_number(key, value);
  } else if (key == "wet_mix") {
    wet_mix = parse_number(key, value);
  } else if (key == "bands") {
    bands = parse_bands(value);
  } else {
    throw PreconditionError("unknown attack parameter \"" + std::string(key) + "\"");
  }
}

void AttackSpec::validate() const {
  switch (kind) {
    case AttackKind::kStretch:
    case AttackKind::kResampleSpeed:
      if (!(rate >= 0.5 && rate <= 2.0)) throw PreconditionError("rate must be in [0.5, 2.0]");
      break;
    case AttackKind::kPitch:
      if (!(std::abs(semitones) <= 12.0)) throw PreconditionError("|semitones| must be <= 12");
      break;
    case AttackKind::kEq:
      if (bands.empty()) throw PreconditionError("EQ needs at least one band");
      for (const auto& b : bands) {
        if (!(b.center_hz > 0.0) || !(b.q > 0.0) || !std::isfinite(b.gain_db)) {
          throw PreconditionError("EQ bands need center_hz > 0, q > 0 and a finite gain");
        }
      }
      break;
    case AttackKind::kNoise:
      if (!(target_snr_db >= 0.0 && target_snr_db <= 60.0)) throw PreconditionError("target_snr_db must be in [0, 60]");
      break;
    case AttackKind::kReverb:
      if (!(wet_mix >= 0.0 && wet_mix <= 1.0)) throw PreconditionError("wet_mix must be in [0, 1]");
      if (!(decay_s > 0.0 && decay_s <= 10.0)) throw PreconditionError("decay_s must be in (0, 10]");
      break;
  }
}

std::string AttackSpec::params_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  switch (kind) {
    case AttackKind::kStretch:
    case AttackKind::kResampleSpeed: j["rate"] = rate; break;
    case AttackKind::kPitch: j["semitones"] = semitones; break;
    case AttackKind::kEq: {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& b : bands) arr.push_back({{"center_hz", b.center_hz}, {"gain_db", b.gain_db}, {"q", b.q}});
      j["bands"] = std::move(arr);
      break;
    }
    case AttackKind::kNoise: j["target_snr_db"] = target_snr_db; break;
    case AttackKind::kReverb:
      j["decay_s"] = decay_s;
      j["wet_mix"] = wet_mix;
      break;
  }
  return j.dump();
}

std::vector<AttackSpec> default_attack_suite(std::uint64_t seed) {
  std::vector<AttackSpec> suite;
  for (auto k : {AttackKind::kStretch, AttackKind::kPitch, AttackKind::kEq, AttackKind::kNoise, AttackKind::kReverb}) {
    suite.push_back(AttackSpec::defaults(k, seed));
  }
  return suite;
}

std::vector<double> time_stretch(std::span<const double> audio, double rate) {
  if (!(rate > 0.0)) throw PreconditionError("stretch rate must be positive");
  constexpr std::size_t n = 2048;
  constexpr std::size_t hs = n / 4;
  const std::size_t out_len = static_cast<std::size_t>(std::llround(static_cast<double>(audio.size()) / rate));
  if (audio.empty() || out_len == 0) return {};

  const std::size_t frames = (out_len + n / 2) / hs + 2;
  std::vector<std::size_t> starts(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    starts[k] = static_cast<std::size_t>(std::llround(static_cast<double>(k * hs) * rate));
  }
  // Frames are centred on their positions: pad half a window in front.
  std::vector<double> padded(starts.back() + n, 0.0);
  std::copy_n(audio.begin(), std::min(audio.size(), padded.size() - n / 2), padded.begin() + n / 2);

  const auto window = dsp::hann(n);
  dsp::RealFft fft(n);
  const std::size_t bins = fft.bins();
  std::vector<double> frame(n), out_frame(n);
  std::vector<std::complex<double>> spec(bins), synth(bins);
  std::vector<double> prev_phase(bins, 0.0), out_phase(bins, 0.0);
  std::vector<double> acc(frames * hs + n, 0.0), norm(frames * hs + n, 0.0);

  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t i = 0; i < n; ++i) frame[i] = padded[starts[k] + i] * window[i];
    fft.forward(frame, spec);
    const double hop = k == 0 ? 0.0 : static_cast<double>(starts[k] - starts[k - 1]);
    for (std::size_t b = 0; b < bins; ++b) {
      const double phase = std::arg(spec[b]);
      if (k == 0) {
        out_phase[b] = phase;
      } else {
        const double omega = 2.0 * kPi * static_cast<double>(b) / static_cast<double>(n);
        double deviation = phase - prev_phase[b] - omega * hop;
        deviation -= 2.0 * kPi * std::round(deviation / (2.0 * kPi));
        const double inst = hop > 0.0 ? omega + deviation / hop : omega;
        out_phase[b] += inst * static_cast<double>(hs);
      }
      prev_phase[b] = phase;
      synth[b] = std::polar(std::abs(spec[b]), out_phase[b]);
    }
    fft.inverse(synth, out_frame);
    const std::size_t at = k * hs;
    for (std::size_t i = 0; i < n; ++i) {
      acc[at + i] += out_frame[i] / static_cast<double>(n) * window[i];
      norm[at + i] += window[i] * window[i];
    }
  }

  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double w = norm[n / 2 + i];
    out[i] = w > 1e-6 ? acc[n / 2 + i] / w : 0.0;
  }
  return out;
}

std::vector<double> apply_attack(std::span<const double> audio, int sample_rate, const AttackSpec& spec) {
  spec.validate();
  if (audio.empty()) throw PreconditionError("cannot attack empty audio");
  if (sample_rate <= 0) throw PreconditionError("sample rate must be positive");
  for (double v : audio) {
    if (!std::isfinite(v)) throw PreconditionError("audio contains non-finite samples");
  }
  std::vector<double> y;
  switch (spec.kind) {
    case AttackKind::kStretch: y = time_stretch(audio, spec.rate); break;
    case AttackKind::kResampleSpeed: y = resample_ratio(audio, 1.0 / spec.rate); break;
    case AttackKind::kPitch: y = pitch_shift(audio, spec.semitones); break;
    case AttackKind::kEq:
      y.assign(audio.begin(), audio.end());
      for (const auto& band : spec.bands) {
        if (band.center_hz >= 0.5 * sample_rate) {
          spdlog::warn("EQ band at {} Hz is above Nyquist for {} Hz audio; skipped", band.center_hz, sample_rate);
          continue;
        }
        peaking_eq(y, sample_rate, band);
      }
      break;
    case AttackKind::kNoise: y = add_noise(audio, spec.target_snr_db, spec.seed); break;
    case AttackKind::kReverb: y = add_reverb(audio, sample_rate, spec.decay_s, spec.wet_mix, spec.seed); break;
  }
  for (double& v : y) {
    if (!std::isfinite(v)) v = 0.0;
  }
  clip(y);
  return y;
}

std::uint64_t track_seed(std::uint64_t seed, std::string_view track_id) {
  return mix64(seed ^ fnv1a64(track_id));
}

Corpus attack_corpus(const Corpus& corpus, const AttackSpec& spec, const TrackFilter& filter,
                     const std::filesystem::path& out_dir, std::size_t workers) {
  spec.validate();
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (filter.matches(corpus[i])) targets.push_back(i);
  }
  if (targets.empty()) return corpus;

  std::filesystem::create_directories(out_dir);
  const std::string kind(to_string(spec.kind));
  const std::string tag = kind + "-" + fingerprint(spec.params_json() + "#" + std::to_string(spec.seed)).substr(0, 8);
  Corpus base = corpus.rebased(out_dir, corpus.name() + "@" + tag);
  std::vector<Track> tracks = base.tracks();

  std::vector<std::optional<std::string>> errors(targets.size());
  parallel_for(targets.size(), std::max<std::size_t>(1, workers), [&](std::size_t j) {
    Track& t = tracks[targets[j]];
    try {
      const auto file = corpus.audio_file(corpus[targets[j]]);
      if (!file) throw AudioError("track has no audio_path");
      const AudioBuffer in = read_audio(*file);
      const auto mono = downmix(in);
      AttackSpec per_track = spec;
      per_track.seed = track_seed(spec.seed, t.track_id);
      const auto attacked = apply_attack(mono, in.sample_rate, per_track);
      const std::string new_id = t.track_id + "@" + tag;
      const std::string file_name = sanitize_id(new_id) + ".wav";
      write_wav(out_dir / file_name, attacked, in.sample_rate, in.format);
      t.derivation = Derivation{t.track_id, kind, spec.params_json(), per_track.seed};
      t.track_id = new_id;
      t.audio_path = file_name;
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  });
  std::vector<ItemFailure> failures;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (errors[j]) failures.push_back({corpus[targets[j]].track_id, *errors[j]});
  }
  if (!failures.empty()) {
    throw BatchError(std::to_string(failures.size()) + " track(s) could not be attacked", failures);
  }
  return Corpus(base.name(), std::move(tracks), out_dir, corpus.schema_version());
}

}  // namespace lyricdet
