#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lyricdet/attacks.hpp"
#include "lyricdet/baseline_cnn.hpp"
#include "lyricdet/corpus.hpp"
#include "lyricdet/detect.hpp"
#include "lyricdet/encode.hpp"
#include "lyricdet/evaluate.hpp"
#include "lyricdet/experiment.hpp"
#include "lyricdet/pipeline.hpp"
#include "lyricdet/smoke.hpp"

namespace py = pybind11;
using namespace lyricdet;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<EmbeddingRecord> rows_of(const F32Array& x, const std::string& encoder_id) {
  if (x.ndim() != 2) throw PreconditionError("expected a 2-D array (n, d)");
  const auto n = static_cast<std::size_t>(x.shape(0));
  const auto d = static_cast<std::size_t>(x.shape(1));
  std::vector<EmbeddingRecord> rows(n);
  const float* p = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].track_id = "row-" + std::to_string(i);
    rows[i].encoder_id = encoder_id;
    rows[i].vector.assign(p + i * d, p + (i + 1) * d);
  }
  return rows;
}

F64Array to_numpy(const std::vector<double>& v) {
  F64Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of lyricdet";

  py::register_exception<Error>(m, "LyricdetError");

  m.def("make_smoke_corpus",
        [](const std::filesystem::path& out_dir, std::size_t size_per_class, std::uint64_t seed, bool noise_floor) {
          SmokeOptions o;
          o.size_per_class = size_per_class;
          o.seed = seed;
          if (!noise_floor) o.human_noise_snr_db.reset();
          return make_smoke_corpus(out_dir, o);
        },
        py::arg("out_dir"), py::arg("size_per_class") = 100, py::arg("seed") = 0, py::arg("noise_floor") = true);
  m.def("make_quantization_corpus",
        [](const std::filesystem::path& out_dir, std::size_t pairs, std::uint64_t seed) {
          return make_quantization_corpus(out_dir, pairs, seed);
        },
        py::arg("out_dir"), py::arg("pairs") = 60, py::arg("seed") = 0);

  m.def("validate_manifest", [](const std::filesystem::path& path) {
    const auto r = validate_manifest(path);
    py::dict d;
    d["records"] = r.records;
    py::list errors, warnings;
    for (const auto& e : r.errors) errors.append(py::make_tuple(e.line, e.message));
    for (const auto& w : r.warnings) warnings.append(py::make_tuple(w.line, w.message));
    d["errors"] = errors;
    d["warnings"] = warnings;
    return d;
  });
  m.def("corpus_stats", [](const std::filesystem::path& path) { return render_stats(load_manifest(path)); });

  m.def("count_tokens", &count_tokens);
  m.def("embed_text",
        [](const std::string& text, const std::string& encoder_id) {
          auto encoder = default_registry().create(encoder_id);
          const auto r = embed_text(text, *encoder);
          F32Array v(static_cast<py::ssize_t>(r.vector.size()));
          std::copy(r.vector.begin(), r.vector.end(), v.mutable_data());
          return py::make_tuple(v, r.truncated);
        },
        py::arg("text"), py::arg("encoder_id") = stub_encoder_id(512, 0));
  m.def("encoder_ids", [] {
    std::vector<std::string> ids;
    for (const auto& s : default_registry().specs()) ids.push_back(s.encoder_id);
    return ids;
  });

  m.def("mlp_parameter_count", &mlp_parameter_count);
  m.def("cnn_parameter_count", &cnn_parameter_count);

  py::class_<DetectorModel>(m, "DetectorModel")
      .def_static(
          "train",
          [](const F32Array& x, const std::vector<int>& y, const std::string& encoder_id, std::uint64_t seed,
             int max_epochs, int batch_size) {
            auto rows = rows_of(x, encoder_id);
            if (y.size() != rows.size()) throw PreconditionError("labels and rows differ in length");
            LabelMap labels;
            for (std::size_t i = 0; i < rows.size(); ++i) labels[rows[i].track_id] = y[i] ? Label::kFake : Label::kReal;
            TrainConfig cfg;
            cfg.seed = seed;
            cfg.max_epochs = max_epochs;
            cfg.batch_size = batch_size;
            py::gil_scoped_release release;
            return train(rows, labels, cfg);
          },
          py::arg("x"), py::arg("y"), py::arg("encoder_id") = stub_encoder_id(512, 0), py::arg("seed") = 0,
          py::arg("max_epochs") = 200, py::arg("batch_size") = 32)
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); })
      .def("save", [](const DetectorModel& model, const std::filesystem::path& p) { save_model(model, p); })
      .def("predict_proba",
           [](const DetectorModel& model, const F32Array& x) {
             std::vector<double> out;
             for (const auto& p : predict(model, rows_of(x, model.encoder_id()))) out.push_back(p.p_fake);
             return to_numpy(out);
           })
      .def_property_readonly("encoder_id", &DetectorModel::encoder_id)
      .def_property_readonly("layer_sizes", &DetectorModel::layer_sizes)
      .def_property_readonly("parameter_count", &DetectorModel::parameter_count)
      .def_property_readonly("epoch_loss", [](const DetectorModel& model) { return model.training_log().epoch_loss; })
      .def_property("threshold", &DetectorModel::threshold, &DetectorModel::set_threshold)
      .def_property_readonly("fingerprint", [](const DetectorModel& model) { return model_fingerprint(model); });

  m.def("apply_attack",
        [](const F64Array& audio, int sample_rate, const std::string& kind, std::uint64_t seed,
           const std::map<std::string, std::string>& params) {
          if (audio.ndim() != 1) throw PreconditionError("expected mono audio (1-D array)");
          AttackSpec spec = AttackSpec::defaults(parse_attack_kind(kind), seed);
          for (const auto& [k, v] : params) spec.set_param(k, v);
          spec.validate();
          std::span<const double> in(audio.data(), static_cast<std::size_t>(audio.size()));
          std::vector<double> out;
          {
            py::gil_scoped_release release;
            out = apply_attack(in, sample_rate, spec);
          }
          return to_numpy(out);
        },
        py::arg("audio"), py::arg("sample_rate"), py::arg("kind"), py::arg("seed") = 0,
        py::arg("params") = std::map<std::string, std::string>{});

  m.def("spectrogram",
        [](const F64Array& audio, std::size_t window_size, std::size_t hop) {
          SpectrogramConfig cfg = SpectrogramConfig::desk();
          cfg.window_size = window_size;
          cfg.hop = hop;
          const Spectrogram s =
              compute_spectrogram(std::span<const double>(audio.data(), static_cast<std::size_t>(audio.size())), cfg);
          F64Array out({static_cast<py::ssize_t>(s.bins), static_cast<py::ssize_t>(s.frames)});
          std::copy(s.data.begin(), s.data.end(), out.mutable_data());
          return out;
        },
        py::arg("audio"), py::arg("window_size") = 2048, py::arg("hop") = 512);

  m.def("macro_recall", [](const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw PreconditionError("length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      c.add(truth[i] ? Label::kFake : Label::kReal, predicted[i] ? Label::kFake : Label::kReal);
    }
    return c.macro_recall();
  });

  m.def("run_plan",
        [](const std::filesystem::path& plan_path, const std::filesystem::path& out_dir) {
          ExperimentPlan plan = ExperimentPlan::load(plan_path);
          if (!out_dir.empty()) plan.out_dir = out_dir;
          std::vector<EvalReport> reports;
          {
            py::gil_scoped_release release;
            reports = run_experiment(plan);
            if (!plan.out_dir.empty()) write_reports(plan.out_dir, reports);
          }
          std::vector<std::string> out;
          for (const auto& r : reports) out.push_back(report_to_json(r));
          return out;
        },
        py::arg("plan"), py::arg("out_dir") = std::filesystem::path());
  m.def("render_report", [](const std::string& report_json, const std::string& format) {
    return render_report(report_from_json(report_json), parse_report_format(format));
  });

  m.def("pipeline_detect",
        [](const std::filesystem::path& manifest, const std::filesystem::path& model,
           const std::filesystem::path& out, const std::filesystem::path& cache_dir, const std::string& transcriber) {
          PipelineConfig c;
          c.manifest_path = manifest;
          c.model_path = model;
          c.out_path = out;
          c.cache_dir = cache_dir;
          c.transcriber_id = transcriber;
          PipelineResult r;
          {
            py::gil_scoped_release release;
            r = pipeline_detect(c);
          }
          py::dict d;
          d["predictions"] = r.predictions.size();
          d["failures"] = r.failures.size();
          d["transcriber_calls"] = r.transcriber_calls;
          d["encoder_calls"] = r.encoder_calls;
          d["model_fingerprint"] = r.model_fingerprint;
          return d;
        },
        py::arg("manifest"), py::arg("model"), py::arg("out"), py::arg("cache_dir") = std::filesystem::path(),
        py::arg("transcriber") = "sidecar-stub");
}
