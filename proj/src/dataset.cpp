#include "hte/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hte {

Eigen::MatrixXd Dataset::covariates() const {
  Eigen::MatrixXd x(n(), p);
  for (int i = 0; i < n(); ++i) x.row(i) = samples[i].x.transpose();
  return x;
}

Eigen::VectorXd Dataset::outcomes() const {
  Eigen::VectorXd y(n());
  for (int i = 0; i < n(); ++i) y(i) = samples[i].y;
  return y;
}

Eigen::VectorXi Dataset::treatments() const {
  Eigen::VectorXi d(n());
  for (int i = 0; i < n(); ++i) d(i) = samples[i].d;
  return d;
}

Eigen::VectorXi Dataset::events() const {
  Eigen::VectorXi e(n());
  for (int i = 0; i < n(); ++i) e(i) = samples[i].delta;
  return e;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_real(const std::string& cell, int row, const std::string& col) {
  size_t pos = 0;
  double v;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("parse error at row " + std::to_string(row) +
                             ", column " + col + ": '" + cell + "'");
  }
  if (pos != cell.size() || !std::isfinite(v))
    throw std::runtime_error("parse error at row " + std::to_string(row) +
                             ", column " + col + ": '" + cell + "'");
  return v;
}

int parse_binary(const std::string& cell, int row, const std::string& col) {
  double v = parse_real(cell, row, col);
  if (v != 0.0 && v != 1.0)
    throw std::runtime_error("domain error at row " + std::to_string(row) +
                             ": column " + col + " must be 0 or 1, got " + cell);
  return static_cast<int>(v);
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto header = split_line(line);
  if (header.size() < 4 || header[0] != "y" || header[1] != "delta" || header[2] != "d") {
    std::string got = header.empty() ? "<none>" : header[0];
    throw std::runtime_error("format error: header must start y,delta,d got '" + got + "...'");
  }
  bool has_truth = header.back() == "tau_true";
  int p = static_cast<int>(header.size()) - 3 - (has_truth ? 1 : 0);
  if (p < 1) throw std::runtime_error("format error: no covariate columns");
  for (int j = 0; j < p; ++j) {
    std::string expect = "x" + std::to_string(j + 1);
    if (header[3 + j] != expect)
      throw std::runtime_error("format error: expected column " + expect + " got '" +
                               header[3 + j] + "'");
  }

  Dataset ds;
  ds.p = p;
  if (has_truth) ds.truth.emplace();

  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("parse error at row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    ObservedSample s;
    s.y = parse_real(cells[0], row, "y");
    s.delta = parse_binary(cells[1], row, "delta");
    s.d = parse_binary(cells[2], row, "d");
    s.x.resize(p);
    for (int j = 0; j < p; ++j) s.x(j) = parse_real(cells[3 + j], row, header[3 + j]);
    ds.samples.push_back(std::move(s));
    if (has_truth) ds.truth->push_back(parse_real(cells.back(), row, "tau_true"));
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);

  out << "y,delta,d";
  for (int j = 1; j <= ds.p; ++j) out << ",x" << j;
  if (ds.truth) out << ",tau_true";
  out << "\n";

  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (int i = 0; i < ds.n(); ++i) {
    const auto& s = ds.samples[i];
    put(s.y);
    out << ',' << s.delta << ',' << s.d;
    for (int j = 0; j < ds.p; ++j) {
      out << ',';
      put(s.x(j));
    }
    if (ds.truth) {
      out << ',';
      put((*ds.truth)[i]);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace hte
