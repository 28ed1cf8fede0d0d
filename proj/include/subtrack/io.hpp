// File formats: stream CSV, ground-truth CSV with basis snapshots, trace
// CSV, dense-matrix CSV, and the JSON evaluation report. Every file carries
// a versioned magic line; readers reject unknown major versions. Doubles are
// written with 17 significant digits so round-trips are exact.

#pragma once

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>

#include <json.hpp>

#include "subtrack/core.hpp"
#include "subtrack/metrics.hpp"
#include "subtrack/synth.hpp"
#include "subtrack/tracker.hpp"

namespace subtrack::io {

inline constexpr int kSchemaMajor = 1;

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

using std::filesystem::path;

[[noreturn]] inline void fail(const path& p, const std::string& what) {
  throw std::runtime_error(p.string() + ": " + what);
}

[[noreturn]] inline void fail_line(const path& p, int line, const std::string& what) {
  std::ostringstream os;
  os << p.string() << ":" << line << ": " << what;
  throw std::runtime_error(os.str());
}

inline std::ofstream open_out(const path& p) {
  std::ofstream out(p);
  if (!out) fail(p, std::string("cannot open for writing: ") + std::strerror(errno));
  return out;
}

inline std::ifstream open_in(const path& p) {
  std::ifstream in(p);
  if (!in) fail(p, std::string("cannot open for reading: ") + std::strerror(errno));
  return in;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  std::size_t e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const path& p, int line, const std::string& s) {
  const std::string t = trim(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0' || errno == ERANGE) {
    fail_line(p, line, "cannot parse real number from '" + t + "'");
  }
  return v;
}

inline long long parse_int(const path& p, int line, const std::string& s) {
  const std::string t = trim(s);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end == t.c_str() || *end != '\0' || errno == ERANGE) {
    fail_line(p, line, "cannot parse integer from '" + t + "'");
  }
  return v;
}

// Magic lines look like "# subtrack-stream v1, k=v, ...". Returns the
// key=value tail. Rejects wrong kinds and unknown major versions, printing
// both versions.
inline std::string check_magic(const path& p, const std::string& first_line,
                               const std::string& kind) {
  const std::string prefix = "# " + kind + " v";
  if (first_line.rfind(prefix, 0) != 0) {
    fail_line(p, 1, "expected a '" + kind + "' header, got '" + first_line + "'");
  }
  std::size_t pos = prefix.size();
  std::size_t end = pos;
  while (end < first_line.size() && std::isdigit(static_cast<unsigned char>(first_line[end]))) ++end;
  if (end == pos) fail_line(p, 1, "missing schema version in header");
  const int major = std::stoi(first_line.substr(pos, end - pos));
  if (major != kSchemaMajor) {
    std::ostringstream os;
    os << "schema-version mismatch: file declares " << kind << " v" << major
       << ", this reader supports v" << kSchemaMajor;
    fail_line(p, 1, os.str());
  }
  std::size_t comma = first_line.find(',', end);
  return comma == std::string::npos ? "" : first_line.substr(comma + 1);
}

// Parses "n=10, r=3, seed=42" style tails.
inline std::map<std::string, std::string> parse_kv(const path& p, const std::string& tail) {
  std::map<std::string, std::string> kv;
  for (const std::string& part : split(tail, ',')) {
    const std::string t = trim(part);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) fail_line(p, 1, "malformed header field '" + t + "'");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

inline std::string require_kv(const path& p, const std::map<std::string, std::string>& kv,
                              const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail_line(p, 1, "header is missing field '" + key + "'");
  return it->second;
}

// Extracts the payload of a field written as name:"payload".
inline std::string quoted_field(const path& p, int line, const std::string& raw,
                                const std::string& name) {
  const std::string t = trim(raw);
  const std::string prefix = name + ":\"";
  if (t.rfind(prefix, 0) != 0 || t.back() != '"') {
    fail_line(p, line, "expected field " + name + ":\"...\", got '" + t + "'");
  }
  return t.substr(prefix.size(), t.size() - prefix.size() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stream files
// ---------------------------------------------------------------------------

struct StreamFile {
  Index n = 0;
  Index r = 0;
  std::uint64_t seed = 0;
  std::vector<Frame> frames;
};

inline void write_stream(const std::filesystem::path& p, const StreamFile& stream) {
  auto out = detail::open_out(p);
  out << "# subtrack-stream v" << kSchemaMajor << ", n=" << stream.n << ", r=" << stream.r
      << ", seed=" << stream.seed << "\n";
  for (std::size_t t = 0; t < stream.frames.size(); ++t) {
    const Frame& f = stream.frames[t];
    out << t << ", mask:\"";
    const auto& idx = f.mask.indices();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k) out << ';';
      out << idx[k];
    }
    out << "\", values:\"";
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k) out << ';';
      out << format_double(f.values[idx[k]]);
    }
    out << "\"\n";
  }
  if (!out) detail::fail(p, "write failed");
}

inline StreamFile read_stream(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  std::string line;
  if (!std::getline(in, line)) detail::fail(p, "empty file");
  const auto kv = detail::parse_kv(p, detail::check_magic(p, line, "subtrack-stream"));
  StreamFile stream;
  stream.n = detail::parse_int(p, 1, detail::require_kv(p, kv, "n"));
  stream.r = detail::parse_int(p, 1, detail::require_kv(p, kv, "r"));
  stream.seed = static_cast<std::uint64_t>(
      detail::parse_int(p, 1, detail::require_kv(p, kv, "seed")));
  if (stream.n < 1) detail::fail_line(p, 1, "ambient dimension must be >= 1");

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 3) {
      detail::fail_line(p, lineno, "expected 3 fields (t, mask, values)");
    }
    const long long t = detail::parse_int(p, lineno, fields[0]);
    if (t != static_cast<long long>(stream.frames.size())) {
      std::ostringstream os;
      os << "frame index " << t << " out of order (expected " << stream.frames.size() << ")";
      detail::fail_line(p, lineno, os.str());
    }
    const std::string mask_s = detail::quoted_field(p, lineno, fields[1], "mask");
    const std::string vals_s = detail::quoted_field(p, lineno, fields[2], "values");

    std::vector<Index> idx;
    if (!mask_s.empty()) {
      for (const std::string& s : detail::split(mask_s, ';')) {
        idx.push_back(detail::parse_int(p, lineno, s));
      }
    }
    std::vector<double> vals;
    if (!vals_s.empty()) {
      for (const std::string& s : detail::split(vals_s, ';')) {
        vals.push_back(detail::parse_double(p, lineno, s));
      }
    }
    if (vals.size() != idx.size()) {
      detail::fail_line(p, lineno, "mask and values have different lengths");
    }
    Vector dense = Vector::Zero(stream.n);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= stream.n) {
        std::ostringstream os;
        os << "mask index " << idx[k] << " out of range [0, " << stream.n << ")";
        detail::fail_line(p, lineno, os.str());
      }
      dense[idx[k]] = vals[k];
    }
    try {
      stream.frames.emplace_back(std::move(dense), ObservationMask(stream.n, std::move(idx)));
    } catch (const std::invalid_argument& e) {
      detail::fail_line(p, lineno, e.what());
    }
  }
  return stream;
}

// ---------------------------------------------------------------------------
// Dense matrix files
// ---------------------------------------------------------------------------

inline void write_matrix(const std::filesystem::path& p, const Matrix& m) {
  auto out = detail::open_out(p);
  out << "# subtrack-matrix v" << kSchemaMajor << ", rows=" << m.rows()
      << ", cols=" << m.cols() << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << "\n";
  }
  if (!out) detail::fail(p, "write failed");
}

inline Matrix read_matrix(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  std::string line;
  if (!std::getline(in, line)) detail::fail(p, "empty file");
  const auto kv = detail::parse_kv(p, detail::check_magic(p, line, "subtrack-matrix"));
  const Index rows = detail::parse_int(p, 1, detail::require_kv(p, kv, "rows"));
  const Index cols = detail::parse_int(p, 1, detail::require_kv(p, kv, "cols"));
  Matrix m(rows, cols);
  int lineno = 1;
  for (Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) detail::fail(p, "unexpected end of file");
    ++lineno;
    const auto fields = detail::split(line, ',');
    if (static_cast<Index>(fields.size()) != cols) {
      std::ostringstream os;
      os << "expected " << cols << " columns, got " << fields.size();
      detail::fail_line(p, lineno, os.str());
    }
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = detail::parse_double(p, lineno, fields[static_cast<std::size_t>(j)]);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ground-truth files
// ---------------------------------------------------------------------------

// The main CSV references per-frame basis snapshots stored as sibling
// matrix files, one per distinct basis (a single one when stationary).
// Outlier values are not persisted, only supports; clean frames are
// recomputed as basis * coeffs on read.

struct GroundTruthFile {
  Index n = 0;
  Index r = 0;
  GroundTruth truth;
};

inline std::string basis_snapshot_name(const std::filesystem::path& gt_path, std::size_t k) {
  std::ostringstream os;
  os << gt_path.stem().string() << ".basis" << k << ".csv";
  return os.str();
}

inline void write_ground_truth(const std::filesystem::path& p, const GroundTruth& truth,
                               Index n, Index r) {
  auto out = detail::open_out(p);
  out << "# subtrack-gt v" << kSchemaMajor << ", n=" << n << ", r=" << r
      << ", frames=" << truth.coeffs.size() << ", bases=" << truth.bases.size() << "\n";
  for (std::size_t k = 0; k < truth.bases.size(); ++k) {
    write_matrix(p.parent_path() / basis_snapshot_name(p, k), truth.bases[k]);
  }
  for (std::size_t t = 0; t < truth.coeffs.size(); ++t) {
    out << t << ", coeffs:\"";
    const Vector& a = truth.coeffs[t];
    for (Index i = 0; i < a.size(); ++i) {
      if (i) out << ';';
      out << format_double(a[i]);
    }
    out << "\", support:\"";
    const auto& supp = truth.outlier_supports[t];
    for (std::size_t i = 0; i < supp.size(); ++i) {
      if (i) out << ';';
      out << supp[i];
    }
    const std::size_t basis_index = truth.stationary() ? 0 : t;
    out << "\", basis:\"" << basis_snapshot_name(p, basis_index) << "\"\n";
  }
  if (!out) detail::fail(p, "write failed");
}

inline GroundTruthFile read_ground_truth(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  std::string line;
  if (!std::getline(in, line)) detail::fail(p, "empty file");
  const auto kv = detail::parse_kv(p, detail::check_magic(p, line, "subtrack-gt"));
  GroundTruthFile gt;
  gt.n = detail::parse_int(p, 1, detail::require_kv(p, kv, "n"));
  gt.r = detail::parse_int(p, 1, detail::require_kv(p, kv, "r"));
  const long long frames = detail::parse_int(p, 1, detail::require_kv(p, kv, "frames"));
  const long long num_bases = detail::parse_int(p, 1, detail::require_kv(p, kv, "bases"));

  std::map<std::string, std::size_t> basis_index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 4) {
      detail::fail_line(p, lineno, "expected 4 fields (t, coeffs, support, basis)");
    }
    const long long t = detail::parse_int(p, lineno, fields[0]);
    if (t != static_cast<long long>(gt.truth.coeffs.size())) {
      detail::fail_line(p, lineno, "frame index out of order");
    }
    const std::string coeffs_s = detail::quoted_field(p, lineno, fields[1], "coeffs");
    const std::string supp_s = detail::quoted_field(p, lineno, fields[2], "support");
    const std::string basis_s = detail::quoted_field(p, lineno, fields[3], "basis");

    Vector a(gt.r);
    const auto coeff_parts = detail::split(coeffs_s, ';');
    if (static_cast<Index>(coeff_parts.size()) != gt.r) {
      detail::fail_line(p, lineno, "coefficient vector has wrong length");
    }
    for (Index i = 0; i < gt.r; ++i) {
      a[i] = detail::parse_double(p, lineno, coeff_parts[static_cast<std::size_t>(i)]);
    }

    std::vector<Index> supp;
    if (!supp_s.empty()) {
      for (const std::string& s : detail::split(supp_s, ';')) {
        supp.push_back(detail::parse_int(p, lineno, s));
      }
    }

    if (!basis_index.count(basis_s)) {
      basis_index[basis_s] = gt.truth.bases.size();
      Matrix b = read_matrix(p.parent_path() / basis_s);
      if (b.rows() != gt.n || b.cols() != gt.r) {
        detail::fail_line(p, lineno, "basis snapshot '" + basis_s + "' has wrong shape");
      }
      gt.truth.bases.push_back(std::move(b));
    }
    gt.truth.clean_frames.push_back(gt.truth.bases[basis_index[basis_s]] * a);
    gt.truth.coeffs.push_back(std::move(a));
    gt.truth.outlier_supports.push_back(std::move(supp));
    gt.truth.outlier_values.emplace_back();
  }
  if (static_cast<long long>(gt.truth.coeffs.size()) != frames) {
    detail::fail(p, "frame count does not match header");
  }
  if (static_cast<long long>(gt.truth.bases.size()) != num_bases) {
    detail::fail(p, "basis snapshot count does not match header");
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

struct TraceRow {
  long t = 0;
  int inner_iters = 0;
  double mu = 0.0;
  double eta = 0.0;
  double residual_norm = 0.0;
  double loss = 0.0;
  Index s_nnz = 0;
};

inline TraceRow to_trace_row(const FrameTrace& ft) {
  TraceRow row;
  row.t = ft.frame_index;
  row.inner_iters = ft.inner_iterations;
  row.mu = ft.mu_used;
  row.eta = ft.eta;
  row.residual_norm = ft.residual_norm;
  row.loss = ft.fit.final_loss;
  row.s_nnz = (ft.fit.outliers.array() != 0.0).count();
  return row;
}

struct TraceFile {
  nlohmann::json config;
  std::vector<TraceRow> rows;
};

inline void write_trace(const std::filesystem::path& p, std::span<const TraceRow> rows,
                        const nlohmann::json& config) {
  auto out = detail::open_out(p);
  out << "# subtrack-trace v" << kSchemaMajor << "\n";
  out << "# config: " << config.dump() << "\n";
  out << "t,inner_iters,mu,eta,residual_norm,loss,s_nnz\n";
  for (const TraceRow& r : rows) {
    out << r.t << ',' << r.inner_iters << ',' << format_double(r.mu) << ','
        << format_double(r.eta) << ',' << format_double(r.residual_norm) << ','
        << format_double(r.loss) << ',' << r.s_nnz << "\n";
  }
  if (!out) detail::fail(p, "write failed");
}

inline TraceFile read_trace(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  std::string line;
  if (!std::getline(in, line)) detail::fail(p, "empty file");
  detail::check_magic(p, line, "subtrack-trace");
  TraceFile tf;
  if (!std::getline(in, line) || line.rfind("# config: ", 0) != 0) {
    detail::fail_line(p, 2, "expected '# config: {...}' line");
  }
  try {
    tf.config = nlohmann::json::parse(line.substr(std::strlen("# config: ")));
  } catch (const nlohmann::json::parse_error& e) {
    detail::fail_line(p, 2, std::string("config is not valid JSON: ") + e.what());
  }
  if (!std::getline(in, line) ||
      detail::trim(line) != "t,inner_iters,mu,eta,residual_norm,loss,s_nnz") {
    detail::fail_line(p, 3, "expected trace column header");
  }
  int lineno = 3;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 7) detail::fail_line(p, lineno, "expected 7 columns");
    TraceRow r;
    r.t = detail::parse_int(p, lineno, fields[0]);
    r.inner_iters = static_cast<int>(detail::parse_int(p, lineno, fields[1]));
    r.mu = detail::parse_double(p, lineno, fields[2]);
    r.eta = detail::parse_double(p, lineno, fields[3]);
    r.residual_norm = detail::parse_double(p, lineno, fields[4]);
    r.loss = detail::parse_double(p, lineno, fields[5]);
    r.s_nnz = detail::parse_int(p, lineno, fields[6]);
    tf.rows.push_back(r);
  }
  return tf;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config) {
  auto summary = [](const SeriesSummary& s) {
    return nlohmann::json{{"mean", s.mean}, {"final", s.final}, {"max", s.max}};
  };
  return nlohmann::json{
      {"schema", "subtrack-report v" + std::to_string(kSchemaMajor)},
      {"config", config},
      {"subspace_distance_series", report.subspace_distance},
      {"recon_nmse_series", report.recon_nmse},
      {"outlier_precision_series", report.outlier_precision},
      {"outlier_recall_series", report.outlier_recall},
      {"outlier_f1_series", report.outlier_f1},
      {"summary",
       {{"subspace_distance", summary(report.subspace_distance_summary())},
        {"recon_nmse", summary(report.recon_nmse_summary())},
        {"outlier_f1", summary(report.outlier_f1_summary())}}}};
}

inline void write_report(const std::filesystem::path& p, const EvalReport& report,
                         const nlohmann::json& config) {
  auto out = detail::open_out(p);
  out << report_to_json(report, config).dump(2) << "\n";
  if (!out) detail::fail(p, "write failed");
}

inline nlohmann::json read_report(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    detail::fail(p, std::string("not valid JSON: ") + e.what());
  }
  const std::string schema = j.value("schema", "");
  const std::string expected = "subtrack-report v" + std::to_string(kSchemaMajor);
  if (schema != expected) {
    detail::fail(p, "schema-version mismatch: file declares '" + schema +
                        "', this reader supports '" + expected + "'");
  }
  return j;
}

}  // namespace subtrack::io
