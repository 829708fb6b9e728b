#pragma once

#include <string>
#include <vector>

namespace egsnet {

// One training-history record: joint-stage rows aggregate an epoch, alternate-
// stage rows aggregate one role period within an epoch. Loss fields that do
// not apply to a row (e.g. emotion loss in a similarity period) are NaN and
// serialize as empty CSV cells / JSON nulls.
struct HistoryRow {
  int64_t epoch = 0;
  std::string stage;   // "joint" | "alternate"
  std::string branch;  // "shared" | "emotion" | "similarity"
  double total = 0.0;
  double sim = 0.0;
  double emo = 0.0;
  double penalty = 0.0;
  double theta = 0.0;
  double wall_seconds = 0.0;
};

// CSV with a fixed header: epoch,stage,branch,loss_total,loss_sim,loss_emo,
// penalty,theta,wall_seconds. wall_seconds is the only run-dependent column;
// determinism comparisons drop it.
void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows);
std::vector<HistoryRow> read_history_csv(const std::string& path);

}  // namespace egsnet
