#include "emf/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace emf {

namespace {

[[noreturn]] void parse_error(const std::filesystem::path& path, Index line, Index column, const std::string& what) {
  std::ostringstream os;
  os << path.string() << ":" << line << ":" << column << ": " << what;
  throw Error(ErrorCode::ParseError, os.str());
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

void close_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  Index i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const Index start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::optional<double> try_parse(std::string_view token) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename T>
T parse_index(const std::filesystem::path& path, Index line, Index column, std::string_view token) {
  T v{};
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) parse_error(path, line, column, "expected a non-negative integer");
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (Index i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

struct MetricRow {
  std::string metric;
  std::string bin;
  double value;
};

std::vector<MetricRow> metric_rows(const RunResult& run) {
  std::vector<MetricRow> rows;
  if (run.report) {
    const auto& r = *run.report;
    rows.push_back({"objective_final", "", r.objective_trace.back()});
    rows.push_back({"outer_iterations", "", static_cast<double>(r.objective_trace.size() - 1)});
    rows.push_back({"converged", "", r.converged ? 1.0 : 0.0});
    rows.push_back({"stop_reason_code", "", static_cast<double>(static_cast<int>(r.stop_reason))});
    for (Index t = 0; t < r.objective_trace.size(); ++t) {
      rows.push_back({"objective_trace", std::to_string(t), r.objective_trace[t]});
    }
  }
  for (const auto& s : run.summaries) {
    rows.push_back({"count", s.label, static_cast<double>(s.count)});
    if (!s.summary) continue;
    const auto& e = *s.summary;
    rows.push_back({"min", s.label, e.min()});
    rows.push_back({"q1", s.label, e.q1});
    rows.push_back({"median", s.label, e.median});
    rows.push_back({"q3", s.label, e.q3});
    rows.push_back({"max", s.label, e.max()});
    rows.push_back({"iqr", s.label, e.iqr});
  }
  return rows;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::InvalidArgument, "cannot format value");
  return std::string(buf, ptr);
}

double parse_double(std::string_view token) {
  const auto v = try_parse(token);
  if (!v) throw Error(ErrorCode::ParseError, "not a finite real: '" + std::string(token) + "'");
  return *v;
}

namespace {

struct DenseText {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> data;
};

DenseText read_dense_text(const std::filesystem::path& path) {
  auto in = open_input(path);
  DenseText t;
  std::string line;
  for (Index lineno = 1; std::getline(in, line); ++lineno) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (t.rows == 0) {
      t.cols = tokens.size();
    } else if (tokens.size() != t.cols) {
      std::ostringstream os;
      os << path.string() << ":" << lineno << ": expected " << t.cols << " values, found " << tokens.size();
      throw Error(ErrorCode::RaggedRows, os.str());
    }
    for (Index c = 0; c < tokens.size(); ++c) {
      const auto v = try_parse(tokens[c]);
      if (!v) parse_error(path, lineno, c + 1, "not a finite real: '" + std::string(tokens[c]) + "'");
      t.data.push_back(*v);
    }
    ++t.rows;
  }
  if (t.rows == 0) throw Error(ErrorCode::EmptyFile, path.string() + " holds no values");
  return t;
}

}  // namespace

DenseMatrix load_matrix(const std::filesystem::path& path) {
  auto t = read_dense_text(path);
  return DenseMatrix(t.rows, t.cols, std::move(t.data));
}

DenseFile load_dense(const std::filesystem::path& path, const MatrixFileSpec& spec) {
  if (spec.format != MatrixFormat::DenseText) {
    throw Error(ErrorCode::InvalidArgument, "load_dense needs the DenseText format");
  }
  if (!std::isfinite(spec.missing_sentinel)) throw Error(ErrorCode::InvalidArgument, "sentinel must be finite");
  auto [rows, cols, data] = read_dense_text(path);

  std::vector<Entry> entries;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Index k = 0; k < data.size(); ++k) {
    if (data[k] == spec.missing_sentinel) continue;
    entries.push_back({k / cols, k % cols, data[k]});
    lo = std::min(lo, data[k]);
    hi = std::max(hi, data[k]);
  }
  if (entries.empty()) throw Error(ErrorCode::EmptyObservations, path.string() + " has only missing entries");
  if (spec.missing_sentinel >= lo && spec.missing_sentinel <= hi) {
    throw Error(ErrorCode::SentinelCollision, "sentinel " + format_double(spec.missing_sentinel) +
                                                  " lies inside the observed range [" + format_double(lo) + ", " +
                                                  format_double(hi) + "]");
  }
  EntryObs obs(rows, cols, std::move(entries));
  return DenseFile{DenseMatrix(rows, cols, std::move(data)), ObservationSet(std::move(obs))};
}

void write_dense(const std::filesystem::path& path, const DenseMatrix& m) {
  auto out = open_output(path);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  close_output(out, path);
}

ObservationSet load_triplets(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  Index lineno = 0;
  std::optional<std::pair<Index, Index>> dims;
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (!dims) {
      if (tokens.size() != 2) parse_error(path, lineno, 1, "header must be \"m n\"");
      dims = {parse_index<Index>(path, lineno, 1, tokens[0]), parse_index<Index>(path, lineno, 2, tokens[1])};
      continue;
    }
    if (tokens.size() != 3) parse_error(path, lineno, 1, "expected \"i j value\"");
    const auto i = parse_index<Index>(path, lineno, 1, tokens[0]);
    const auto j = parse_index<Index>(path, lineno, 2, tokens[1]);
    const auto v = try_parse(tokens[2]);
    if (!v) parse_error(path, lineno, 3, "not a finite real: '" + std::string(tokens[2]) + "'");
    entries.push_back({i, j, *v});
  }
  if (!dims) throw Error(ErrorCode::EmptyFile, path.string() + " has no header");
  return ObservationSet(EntryObs(dims->first, dims->second, std::move(entries)));
}

void write_triplets(const std::filesystem::path& path, const EntryObs& obs) {
  auto out = open_output(path);
  out << obs.rows() << ' ' << obs.cols() << '\n';
  for (const auto& e : obs.entries()) out << e.row << ' ' << e.col << ' ' << format_double(e.value) << '\n';
  close_output(out, path);
}

std::vector<double> load_values(const std::filesystem::path& path, std::optional<double> skip) {
  auto in = open_input(path);
  std::vector<double> out;
  std::string line;
  for (Index lineno = 1; std::getline(in, line); ++lineno) {
    const auto tokens = split_ws(line);
    for (Index c = 0; c < tokens.size(); ++c) {
      const auto v = try_parse(tokens[c]);
      if (!v) parse_error(path, lineno, c + 1, "not a finite real: '" + std::string(tokens[c]) + "'");
      if (skip && *v == *skip) continue;
      out.push_back(*v);
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyFile, path.string() + " holds no values");
  return out;
}

void export_results(std::span<const RunResult> runs, const std::filesystem::path& path, ExportFormat format) {
  auto out = open_output(path);
  if (format == ExportFormat::CSV) {
    out << kResultsHeader << '\n';
    for (const auto& run : runs) {
      const std::string prefix = csv_field(run.run_id) + "," + format_double(run.omega) + "," +
                                 std::to_string(run.rank) + "," + format_double(run.sampling_rate) + "," +
                                 (run.seed ? std::to_string(*run.seed) : std::string()) + ",";
      for (const auto& row : metric_rows(run)) {
        out << prefix << row.metric << ',' << csv_field(row.bin) << ',' << format_double(row.value) << '\n';
      }
    }
  } else {
    nlohmann::ordered_json doc;
    doc["columns"] = {"run_id", "omega", "rank", "sampling_rate", "seed", "metric", "bin", "value"};
    auto& rows = doc["runs"] = nlohmann::ordered_json::array();
    for (const auto& run : runs) {
      nlohmann::ordered_json j;
      j["run_id"] = run.run_id;
      j["omega"] = run.omega;
      j["rank"] = run.rank;
      j["sampling_rate"] = run.sampling_rate;
      j["seed"] = run.seed ? nlohmann::ordered_json(*run.seed) : nlohmann::ordered_json(nullptr);
      auto& metrics = j["metrics"] = nlohmann::ordered_json::array();
      for (const auto& row : metric_rows(run)) {
        metrics.push_back({{"metric", row.metric}, {"bin", row.bin}, {"value", row.value}});
      }
      j["cdf"] = {{"grid", run.cdf.grid}, {"fraction", run.cdf.fraction}};
      rows.push_back(std::move(j));
    }
    out << doc.dump(2) << '\n';
  }
  close_output(out, path);
}

void export_cdf(const CdfTable& cdf, const std::filesystem::path& path) {
  if (cdf.grid.size() != cdf.fraction.size()) throw Error(ErrorCode::ShapeMismatch, "CDF columns differ in length");
  auto out = open_output(path);
  out << "grid,fraction\n";
  for (Index i = 0; i < cdf.grid.size(); ++i) {
    out << format_double(cdf.grid[i]) << ',' << format_double(cdf.fraction[i]) << '\n';
  }
  close_output(out, path);
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw Error(ErrorCode::ParseError, path.string() + ": missing results header");
  }
  std::vector<ResultRow> rows;
  for (Index lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 8) parse_error(path, lineno, 1, "expected 8 fields");
    rows.push_back({f[0], f[1], f[2], f[3], f[4], f[5], f[6], parse_double(f[7])});
  }
  return rows;
}

}  // namespace emf
