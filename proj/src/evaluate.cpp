#include "lyricdet/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

namespace lyricdet {
namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int language_rank(std::string_view lang) {
  const auto it = std::find(kLanguages.begin(), kLanguages.end(), lang);
  return it == kLanguages.end() ? static_cast<int>(kLanguages.size()) : static_cast<int>(it - kLanguages.begin());
}

// Display order: languages in report column order, everything else lexicographic.
bool value_less(const std::vector<std::string>& fields, const std::string& a, const std::string& b) {
  const auto pa = split(a, '/'), pb = split(b, '/');
  for (std::size_t i = 0; i < fields.size() && i < pa.size() && i < pb.size(); ++i) {
    if (pa[i] == pb[i]) continue;
    if (fields[i] == "language") {
      const int ra = language_rank(pa[i]), rb = language_rank(pb[i]);
      if (ra != rb) return ra < rb;
    }
    return pa[i] < pb[i];
  }
  return pa.size() < pb.size();
}

std::string percent(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
  return buf;
}

std::string fixed(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_row(std::string_view line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

std::size_t to_count(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw FormatError("bad count \"" + s + "\"");
  return static_cast<std::size_t>(v);
}

nlohmann::ordered_json counts_json(const ConfusionCounts& c) {
  return {{"tp_fake", c.tp_fake}, {"fn_fake", c.fn_fake}, {"tp_real", c.tp_real}, {"fn_real", c.fn_real}};
}

ConfusionCounts counts_from(const nlohmann::json& j) {
  return {j.at("tp_fake").get<std::size_t>(), j.at("fn_fake").get<std::size_t>(), j.at("tp_real").get<std::size_t>(),
          j.at("fn_real").get<std::size_t>()};
}

nlohmann::ordered_json optional_json(std::optional<double> v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

void pad_to(std::string& line, std::size_t width) {
  if (line.size() < width) line.append(width - line.size(), ' ');
}

}  // namespace

void ConfusionCounts::add(Label truth, Label predicted) {
  if (truth == Label::kFake) {
    (predicted == Label::kFake ? tp_fake : fn_fake) += 1;
  } else {
    (predicted == Label::kReal ? tp_real : fn_real) += 1;
  }
}

std::optional<double> ConfusionCounts::recall_fake() const {
  if (fakes() == 0) return std::nullopt;
  return static_cast<double>(tp_fake) / static_cast<double>(fakes());
}

std::optional<double> ConfusionCounts::recall_real() const {
  if (reals() == 0) return std::nullopt;
  return static_cast<double>(tp_real) / static_cast<double>(reals());
}

double ConfusionCounts::macro_recall() const {
  if (fakes() == 0) throw PreconditionError("recall on fake is undefined: no fake examples");
  if (reals() == 0) throw PreconditionError("recall on real is undefined: no real examples");
  return (*recall_fake() + *recall_real()) / 2.0;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp_fake += o.tp_fake;
  fn_fake += o.fn_fake;
  tp_real += o.tp_real;
  fn_real += o.fn_real;
  return *this;
}

ConfusionCounts confusion(std::span<const Prediction> predictions, const LabelMap& labels) {
  ConfusionCounts c;
  for (const auto& p : predictions) {
    const auto it = labels.find(p.track_id);
    if (it == labels.end()) throw PreconditionError("no label for prediction \"" + p.track_id + "\"");
    c.add(it->second, p.label);
  }
  return c;
}

double macro_recall(std::span<const Prediction> predictions, const LabelMap& labels) {
  return confusion(predictions, labels).macro_recall();
}

std::optional<double> StratumResult::macro_recall() const {
  if (counts.single_class()) return std::nullopt;
  return counts.macro_recall();
}

std::optional<double> EvalReport::field_macro(std::string_view field) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : strata) {
    if (s.field != field || s.single_class()) continue;
    sum += *s.macro_recall();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> EvalReport::overall_macro() const {
  if (overall.single_class()) return std::nullopt;
  return overall.macro_recall();
}

const StratumResult* EvalReport::find(std::string_view field, std::string_view value) const {
  for (const auto& s : strata) {
    if (s.field == field && s.value == value) return &s;
  }
  return nullptr;
}

EvalReport evaluate_stratified(std::span<const Prediction> predictions, const LabelMap& labels,
                               const Corpus& corpus, const std::vector<std::string>& fields) {
  std::vector<std::vector<std::string>> parts;
  for (const auto& f : fields) {
    parts.push_back(split(f, '+'));
    for (const auto& p : parts.back()) {
      if (!is_track_field(p)) throw PreconditionError("unknown stratum field \"" + p + "\"");
    }
  }
  EvalReport report;
  report.fields = fields;
  std::vector<std::map<std::string, ConfusionCounts>> groups(fields.size());
  for (const auto& p : predictions) {
    const auto it = labels.find(p.track_id);
    if (it == labels.end()) throw PreconditionError("no label for prediction \"" + p.track_id + "\"");
    const Track* t = corpus.find(p.track_id);
    if (!t) throw PreconditionError("prediction for \"" + p.track_id + "\" is not in the corpus");
    report.overall.add(it->second, p.label);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      std::string value;
      for (std::size_t k = 0; k < parts[i].size(); ++k) {
        if (k) value += '/';
        value += track_field(*t, parts[i][k]);
      }
      groups[i][value].add(it->second, p.label);
    }
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::vector<std::string> values;
    for (const auto& [v, c] : groups[i]) values.push_back(v);
    std::sort(values.begin(), values.end(),
              [&](const std::string& a, const std::string& b) { return value_less(parts[i], a, b); });
    for (const auto& v : values) {
      StratumResult s{fields[i], v, groups[i][v]};
      if (s.single_class()) {
        report.warnings.push_back(fields[i] + "=" + v + " has only " +
                                  (s.counts.fakes() ? "fake" : "real") +
                                  " examples; excluded from the macro average");
      }
      report.strata.push_back(std::move(s));
    }
  }
  return report;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "text_table" || s == "text") return ReportFormat::kTextTable;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  throw PreconditionError("unknown report format \"" + std::string(s) + "\" (text_table, csv, json)");
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["condition"] = r.condition;
  j["config_fingerprint"] = r.config_fingerprint;
  j["fields"] = r.fields;
  auto strata = nlohmann::ordered_json::array();
  for (const auto& s : r.strata) {
    nlohmann::ordered_json o;
    o["field"] = s.field;
    o["value"] = s.value;
    o["counts"] = counts_json(s.counts);
    o["recall_fake"] = optional_json(s.counts.recall_fake());
    o["recall_real"] = optional_json(s.counts.recall_real());
    o["macro_recall"] = optional_json(s.macro_recall());
    o["single_class"] = s.single_class();
    strata.push_back(std::move(o));
  }
  j["strata"] = std::move(strata);
  auto macros = nlohmann::ordered_json::object();
  for (const auto& f : r.fields) macros[f] = optional_json(r.field_macro(f));
  j["macro_avg"] = std::move(macros);
  j["overall"] = {{"counts", counts_json(r.overall)}, {"macro_recall", optional_json(r.overall_macro())}};
  j["metadata"] = r.metadata;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad report JSON: ") + e.what());
  }
  EvalReport r;
  r.name = j.value("name", "");
  r.condition = j.value("condition", "unattacked");
  r.config_fingerprint = j.value("config_fingerprint", "");
  r.fields = j.value("fields", std::vector<std::string>{});
  for (const auto& s : j.at("strata")) {
    r.strata.push_back({s.at("field").get<std::string>(), s.at("value").get<std::string>(), counts_from(s.at("counts"))});
  }
  r.overall = counts_from(j.at("overall").at("counts"));
  r.metadata = j.value("metadata", std::map<std::string, std::string>{});
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

std::string render_report(const EvalReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::kJson: return report_to_json(r);
    case ReportFormat::kCsv: {
      std::ostringstream os;
      os << "# name=" << r.name << "\n# condition=" << r.condition << "\n# config_fingerprint=" << r.config_fingerprint
         << "\n";
      for (const auto& [k, v] : r.metadata) os << "# meta." << k << "=" << v << "\n";
      os << "field,value,tp_fake,fn_fake,tp_real,fn_real,recall_fake,recall_real,macro_recall,single_class\n";
      auto row = [&](const std::string& field, const std::string& value, const ConfusionCounts& c) {
        const std::optional<double> macro = c.single_class() ? std::nullopt : std::optional<double>(c.macro_recall());
        os << csv_cell(field) << ',' << csv_cell(value) << ',' << c.tp_fake << ',' << c.fn_fake << ',' << c.tp_real
           << ',' << c.fn_real << ',' << fixed(c.recall_fake()) << ',' << fixed(c.recall_real()) << ','
           << fixed(macro) << ',' << (c.single_class() ? "true" : "false") << '\n';
      };
      for (const auto& s : r.strata) row(s.field, s.value, s.counts);
      row("*", "*", r.overall);
      return os.str();
    }
    case ReportFormat::kTextTable: {
      std::ostringstream os;
      os << "report: " << (r.name.empty() ? "-" : r.name) << "  condition: " << r.condition
         << "  fingerprint: " << (r.config_fingerprint.empty() ? "-" : r.config_fingerprint) << "\n";
      for (const auto& field : r.fields) {
        std::vector<const StratumResult*> cols;
        for (const auto& s : r.strata) {
          if (s.field == field) cols.push_back(&s);
        }
        std::size_t width = 7;
        for (const auto* s : cols) width = std::max(width, s->value.size() + (s->single_class() ? 2 : 1));
        const std::vector<std::string> rows = {"macro recall", "recall fake", "recall real", "n fake", "n real"};
        std::size_t label_width = field.size();
        for (const auto& row : rows) label_width = std::max(label_width, row.size());
        label_width += 2;

        std::string header = field;
        pad_to(header, label_width);
        for (const auto* s : cols) {
          std::string cell = s->value + (s->single_class() ? "*" : "");
          header += std::string(width - cell.size(), ' ') + cell;
        }
        header += "  Macro Avg.";
        os << header << "\n";
        for (std::size_t k = 0; k < rows.size(); ++k) {
          std::string line = rows[k];
          pad_to(line, label_width);
          for (const auto* s : cols) {
            std::string cell;
            switch (k) {
              case 0: cell = percent(s->macro_recall()); break;
              case 1: cell = percent(s->counts.recall_fake()); break;
              case 2: cell = percent(s->counts.recall_real()); break;
              case 3: cell = std::to_string(s->counts.fakes()); break;
              default: cell = std::to_string(s->counts.reals()); break;
            }
            line += std::string(width - std::min(width, cell.size()), ' ') + cell;
          }
          if (k == 0) {
            const std::string cell = percent(r.field_macro(field));
            line += std::string(11 - std::min<std::size_t>(11, cell.size()) + 2, ' ') + cell;
          }
          while (!line.empty() && line.back() == ' ') line.pop_back();
          os << line << "\n";
        }
      }
      os << "overall macro recall: " << percent(r.overall_macro()) << "  (fake " << r.overall.tp_fake << "/"
         << r.overall.fakes() << ", real " << r.overall.tp_real << "/" << r.overall.reals() << ")\n";
      for (const auto& w : r.warnings) os << "warning: " << w << "\n";
      return os.str();
    }
  }
  throw PreconditionError("unknown report format");
}

std::string render_comparison(std::span<const EvalReport> reports, std::string_view field) {
  std::vector<std::string> values;
  for (const auto& r : reports) {
    for (const auto& s : r.strata) {
      if (s.field == field && std::find(values.begin(), values.end(), s.value) == values.end()) {
        values.push_back(s.value);
      }
    }
  }
  const std::vector<std::string> parts = {std::string(field)};
  std::sort(values.begin(), values.end(),
            [&](const std::string& a, const std::string& b) { return value_less(parts, a, b); });
  std::size_t label_width = 9;
  for (const auto& r : reports) label_width = std::max(label_width, r.name.size() + r.condition.size() + 3);
  std::size_t width = 7;
  for (const auto& v : values) width = std::max(width, v.size() + 1);

  std::ostringstream os;
  std::string header = "condition";
  pad_to(header, label_width);
  for (const auto& v : values) header += std::string(width - v.size(), ' ') + v;
  os << header << "  Macro Avg.\n";
  for (const auto& r : reports) {
    std::string line = r.name.empty() ? r.condition : r.name + " / " + r.condition;
    pad_to(line, label_width);
    for (const auto& v : values) {
      const auto* s = r.find(field, v);
      const std::string cell = s ? percent(s->macro_recall()) : "-";
      line += std::string(width - std::min(width, cell.size()), ' ') + cell;
    }
    const std::string cell = percent(r.field_macro(field));
    line += std::string(13 - std::min<std::size_t>(13, cell.size()), ' ') + cell;
    os << line << "\n";
  }
  return os.str();
}

EvalReport parse_report_csv(std::string_view csv) {
  EvalReport r;
  bool header_seen = false;
  bool overall_seen = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(csv)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      if (key == "name") r.name = value;
      else if (key == "condition") r.condition = value;
      else if (key == "config_fingerprint") r.config_fingerprint = value;
      else if (key.rfind("meta.", 0) == 0) r.metadata[key.substr(5)] = value;
      continue;
    }
    const auto cells = csv_row(line);
    if (!header_seen) {
      if (cells.size() < 6 || cells[0] != "field") throw FormatError("report CSV: missing header row");
      header_seen = true;
      continue;
    }
    if (cells.size() != 10) throw FormatError("report CSV line " + std::to_string(line_no) + ": expected 10 columns");
    ConfusionCounts c{to_count(cells[2]), to_count(cells[3]), to_count(cells[4]), to_count(cells[5])};
    if (cells[0] == "*" && cells[1] == "*") {
      r.overall = c;
      overall_seen = true;
      continue;
    }
    if (std::find(r.fields.begin(), r.fields.end(), cells[0]) == r.fields.end()) r.fields.push_back(cells[0]);
    StratumResult s{cells[0], cells[1], c};
    if (s.single_class()) {
      r.warnings.push_back(s.field + "=" + s.value + " has only " + (c.fakes() ? "fake" : "real") +
                           " examples; excluded from the macro average");
    }
    r.strata.push_back(std::move(s));
  }
  if (!header_seen || !overall_seen) throw FormatError("report CSV is incomplete");
  return r;
}

}  // namespace lyricdet
