#pragma once

#include <string>

#include "fhbench/model.hpp"

namespace fhbench {

// Malformed input; line is 1-based, 0 when not tied to a specific line.
struct ParseError : std::runtime_error {
  int line = 0;
  ParseError(std::string msg, int line_no)
      : std::runtime_error(std::move(msg)), line(line_no) {}
};

struct EstimateInput {
  std::vector<std::string> area_ids;
  FayHerriotModel model;
  Observation obs;
  Eigen::MatrixXd W;  // k x m; zero columns when the file carries no w columns
  bool has_w = false;
};

// Header: area_id,y,d,x1..xp[,w1..wm]; numeric fields, no quoting.
EstimateInput read_estimate_csv(const std::string& path);

// Sidecar: {"Q": "identity" | "d-inverse" | [[..]], "target": "direct" | {"t0": [..]}}
// Q and target are attached to the given W/d geometry.
BenchmarkSpec read_spec_json(const std::string& path, const Eigen::VectorXd& d,
                             const Eigen::MatrixXd& W);

// 17 significant digits, round-trip exact for doubles.
std::string format_double(double v);

}  // namespace fhbench
