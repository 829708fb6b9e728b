#include "egsnet/history.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "egsnet/errors.hpp"

namespace egsnet {

namespace {

constexpr const char* kHeader =
    "epoch,stage,branch,loss_total,loss_sim,loss_emo,penalty,theta,wall_seconds";

std::string cell(double v, const char* fmt = "%.9g") {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

double parse_cell(const std::string& s) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
}

}  // namespace

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history file '" + path + "'");
  out << kHeader << "\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << r.stage << "," << r.branch << "," << cell(r.total) << ","
        << cell(r.sim) << "," << cell(r.emo) << "," << cell(r.penalty) << "," << cell(r.theta)
        << "," << cell(r.wall_seconds, "%.3f") << "\n";
  }
}

std::vector<HistoryRow> read_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read history file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw DataError("history file '" + path + "' has an unexpected header");
  }
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[9];
    for (auto& c : f) std::getline(ss, c, ',');
    HistoryRow r;
    r.epoch = std::stoll(f[0]);
    r.stage = f[1];
    r.branch = f[2];
    r.total = parse_cell(f[3]);
    r.sim = parse_cell(f[4]);
    r.emo = parse_cell(f[5]);
    r.penalty = parse_cell(f[6]);
    r.theta = parse_cell(f[7]);
    r.wall_seconds = parse_cell(f[8]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace egsnet
