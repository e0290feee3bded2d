#include "fhbench/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fhbench {

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& s, const std::string& column, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("column '" + column + "': cannot parse '" + s + "' as a number", line);
  }
}

}  // namespace

EstimateInput read_estimate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file '" + path + "'", 0);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input file", 1);
  const std::vector<std::string> header = split_line(line);

  auto expect = [&](std::size_t idx, const std::string& name) {
    if (idx >= header.size() || header[idx] != name)
      throw ParseError("missing column '" + name + "' (header must start area_id,y,d,x1..)", 1);
  };
  expect(0, "area_id");
  expect(1, "y");
  expect(2, "d");

  int p = 0;
  std::size_t pos = 3;
  while (pos < header.size() && header[pos] == "x" + std::to_string(p + 1)) {
    ++p;
    ++pos;
  }
  if (p == 0) throw ParseError("missing column 'x1' (at least one regressor required)", 1);
  int m = 0;
  while (pos < header.size() && header[pos] == "w" + std::to_string(m + 1)) {
    ++m;
    ++pos;
  }
  if (pos != header.size())
    throw ParseError("unexpected column '" + header[pos] + "'", 1);

  std::vector<std::string> ids;
  std::vector<double> ys, ds;
  std::vector<std::vector<double>> xs, ws;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    ids.push_back(fields[0]);
    ys.push_back(parse_number(fields[1], "y", line_no));
    ds.push_back(parse_number(fields[2], "d", line_no));
    std::vector<double> xrow(p), wrow(m);
    for (int j = 0; j < p; ++j)
      xrow[j] = parse_number(fields[3 + j], header[3 + j], line_no);
    for (int j = 0; j < m; ++j)
      wrow[j] = parse_number(fields[3 + p + j], header[3 + p + j], line_no);
    xs.push_back(std::move(xrow));
    ws.push_back(std::move(wrow));
  }
  const int k = static_cast<int>(ids.size());
  if (k == 0) throw ParseError("no data rows", line_no);

  EstimateInput input;
  input.area_ids = std::move(ids);
  input.model.X.resize(k, p);
  input.model.d.resize(k);
  input.obs.y.resize(k);
  input.has_w = m > 0;
  input.W.resize(k, std::max(m, 1));
  for (int i = 0; i < k; ++i) {
    input.obs.y(i) = ys[i];
    input.model.d(i) = ds[i];
    for (int j = 0; j < p; ++j) input.model.X(i, j) = xs[i][j];
    for (int j = 0; j < m; ++j) input.W(i, j) = ws[i][j];
  }
  return input;
}

BenchmarkSpec read_spec_json(const std::string& path, const Eigen::VectorXd& d,
                             const Eigen::MatrixXd& W) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open spec file '" + path + "'", 0);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ParseError(std::string("spec JSON: ") + e.what(), 0);
  }

  const int k = static_cast<int>(d.size());
  BenchmarkSpec spec;
  spec.W = W;

  if (!doc.contains("Q")) throw ParseError("spec JSON: missing \"Q\"", 0);
  const auto& q = doc["Q"];
  if (q.is_string()) {
    const std::string kind = q.get<std::string>();
    if (kind == "identity") {
      spec.Q = Eigen::MatrixXd::Identity(k, k);
    } else if (kind == "d-inverse") {
      spec.Q = Eigen::MatrixXd(d.cwiseInverse().asDiagonal());
    } else {
      throw ParseError("spec JSON: Q must be \"identity\", \"d-inverse\" or a matrix", 0);
    }
  } else if (q.is_array()) {
    if (static_cast<int>(q.size()) != k)
      throw ParseError("spec JSON: Q matrix must be k x k", 0);
    spec.Q.resize(k, k);
    for (int i = 0; i < k; ++i) {
      if (!q[i].is_array() || static_cast<int>(q[i].size()) != k)
        throw ParseError("spec JSON: Q matrix must be k x k", 0);
      for (int j = 0; j < k; ++j) spec.Q(i, j) = q[i][j].get<double>();
    }
  } else {
    throw ParseError("spec JSON: Q must be \"identity\", \"d-inverse\" or a matrix", 0);
  }

  if (!doc.contains("target")) throw ParseError("spec JSON: missing \"target\"", 0);
  const auto& t = doc["target"];
  if (t.is_string() && t.get<std::string>() == "direct") {
    spec.target = TargetKind::WeightedDirect;
  } else if (t.is_object() && t.contains("t0")) {
    spec.target = TargetKind::FixedTarget;
    const auto& t0 = t["t0"];
    if (t0.is_number()) {
      spec.t0.resize(1);
      spec.t0(0) = t0.get<double>();
    } else if (t0.is_array()) {
      spec.t0.resize(static_cast<int>(t0.size()));
      for (int j = 0; j < spec.t0.size(); ++j) spec.t0(j) = t0[j].get<double>();
    } else {
      throw ParseError("spec JSON: t0 must be a number or an array", 0);
    }
  } else {
    throw ParseError("spec JSON: target must be \"direct\" or {\"t0\": ...}", 0);
  }
  return spec;
}

}  // namespace fhbench
