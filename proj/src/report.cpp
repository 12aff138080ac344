#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "tvmf/errors.hpp"
#include "tvmf/experiment.hpp"
#include "tvmf/similarity.hpp"

namespace tvmf {

namespace {

using Json = nlohmann::ordered_json;

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

Json optional_real(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> read_optional_real(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

Json metrics_to_json(const MetricsReport& r) {
  Json j;
  j["per_class_dsc"] = r.per_class_dsc;
  j["mean_dsc"] = r.mean_dsc;
  j["foreground_mean_dsc"] = r.foreground_mean_dsc;
  j["pixel_counts"] = r.pixel_counts;
  return j;
}

MetricsReport metrics_from_json(const Json& j) {
  MetricsReport r;
  r.per_class_dsc = j.at("per_class_dsc").get<std::vector<double>>();
  r.mean_dsc = j.at("mean_dsc").get<double>();
  r.foreground_mean_dsc = j.at("foreground_mean_dsc").get<double>();
  r.pixel_counts = j.at("pixel_counts").get<std::vector<std::int64_t>>();
  return r;
}

template <typename Fn>
auto parse_json_or_throw(const std::string& text, Fn&& fn) {
  try {
    return fn(Json::parse(text));
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

SimilarityCurves similarity_curves(const std::vector<double>& kappas, int num_points) {
  if (num_points < 2) throw ConfigError("curves need at least 2 points");
  SimilarityCurves curves;
  curves.kappas = kappas;
  for (int i = 0; i < num_points; ++i) {
    curves.cos_theta.push_back(i == num_points - 1 ? 1.0 : static_cast<double>(i) / (num_points - 1));
  }
  for (double kappa : kappas) {
    if (!(kappa >= 0.0)) throw ConfigError("curve kappas must be >= 0");
    std::vector<double> column;
    for (double c : curves.cos_theta) column.push_back(t_vmf_similarity(c, kappa));
    curves.values.push_back(std::move(column));
  }
  return curves;
}

SimilarityCurves emit_similarity_curves(const std::vector<double>& kappas, int num_points,
                                        const std::filesystem::path& path) {
  SimilarityCurves curves = similarity_curves(kappas, num_points);
  std::string csv = "cos_theta";
  for (double k : kappas) csv += ",kappa_" + fmt_real(k);
  csv += '\n';
  for (std::size_t i = 0; i < curves.cos_theta.size(); ++i) {
    csv += fmt_real(curves.cos_theta[i]);
    for (const auto& column : curves.values) csv += "," + fmt_real(column[i]);
    csv += '\n';
  }
  write_text_file(path, csv);
  return curves;
}

SimilarityCurves parse_similarity_curves(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty curve table");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "cos_theta") throw DataError("curve table lacks cos_theta column");
  SimilarityCurves curves;
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (header[k].rfind("kappa_", 0) != 0) throw DataError("bad curve column '" + header[k] + "'");
    curves.kappas.push_back(parse_real(std::string_view(header[k]).substr(6)));
  }
  curves.values.resize(curves.kappas.size());
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DataError("ragged curve row");
    curves.cos_theta.push_back(parse_real(cells[0]));
    for (std::size_t k = 1; k < cells.size(); ++k) curves.values[k - 1].push_back(parse_real(cells[k]));
  }
  return curves;
}

std::string metrics_report_text(const MetricsReport& report) { return metrics_to_json(report).dump(2) + "\n"; }

MetricsReport parse_metrics_report(const std::string& text) {
  return parse_json_or_throw(text, [](const Json& j) { return metrics_from_json(j); });
}

std::string report_summary_text(const RunRecord& r) {
  Json j;
  j["loss"] = r.loss_name;
  j["kappa"] = optional_real(r.kappa);
  j["lambda"] = optional_real(r.lambda);
  j["seed"] = r.seed;
  j["num_classes"] = r.num_classes;
  j["data_order_digest"] = r.data_order_digest;
  j["best_epoch"] = r.best_epoch;
  Json rows = Json::array();
  for (const EpochRow& e : r.epochs) {
    Json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["lr"] = e.lr;
    row["val_dsc"] = e.val_dsc;
    row["kappas"] = e.kappas;
    rows.push_back(std::move(row));
  }
  j["epochs"] = std::move(rows);
  j["test"] = metrics_to_json(r.test);
  return j.dump(2) + "\n";
}

RunRecord parse_report_summary(const std::string& text) {
  return parse_json_or_throw(text, [](const Json& j) {
    RunRecord r;
    r.loss_name = j.at("loss").get<std::string>();
    r.kappa = read_optional_real(j.at("kappa"));
    r.lambda = read_optional_real(j.at("lambda"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.num_classes = j.at("num_classes").get<int>();
    r.data_order_digest = j.at("data_order_digest").get<std::string>();
    r.best_epoch = j.at("best_epoch").get<int>();
    for (const Json& row : j.at("epochs")) {
      EpochRow e;
      e.epoch = row.at("epoch").get<int>();
      e.train_loss = row.at("train_loss").get<double>();
      e.lr = row.at("lr").get<double>();
      e.val_dsc = row.at("val_dsc").get<std::vector<double>>();
      e.kappas = row.at("kappas").get<std::vector<double>>();
      r.epochs.push_back(std::move(e));
    }
    r.test = metrics_from_json(j.at("test"));
    return r;
  });
}

std::string report_table_csv(const RunRecord& r) {
  const bool has_kappa = !r.epochs.empty() && !r.epochs.front().kappas.empty();
  std::string csv = "epoch,train_loss,lr";
  for (int c = 0; c < r.num_classes; ++c) csv += ",val_dsc_" + std::to_string(c);
  if (has_kappa) {
    for (int c = 0; c < r.num_classes; ++c) csv += ",kappa_" + std::to_string(c);
  }
  csv += '\n';
  for (const EpochRow& e : r.epochs) {
    csv += std::to_string(e.epoch) + "," + fmt_real(e.train_loss) + "," + fmt_real(e.lr);
    for (double d : e.val_dsc) csv += "," + fmt_real(d);
    if (has_kappa) {
      for (double k : e.kappas) csv += "," + fmt_real(k);
    }
    csv += '\n';
  }
  return csv;
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_report(const RunRecord& record, const std::filesystem::path& dir) {
  ensure_directory(dir);
  write_text_file(dir / "summary.json", report_summary_text(record));
  write_text_file(dir / "epochs.csv", report_table_csv(record));
}

}  // namespace tvmf
