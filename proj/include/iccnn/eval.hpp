#pragma once

#include <string>
#include <vector>

#include "iccnn/density.hpp"

namespace iccnn {

struct EvalRecord {
    std::string id;
    double gt_count = 0.0;
    double pred_count = 0.0;
    std::string scene;  // optional grouping key; empty = unscened
};

/// Plain element sum; negative values are included as-is.
double count_from_map(const DensityMap& map);

double mae(const std::vector<EvalRecord>& records);
double rmse(const std::vector<EvalRecord>& records);

struct CountGroup {
    double mean_gt = 0.0;
    double mean_pred = 0.0;
    int size = 0;
};

/// Sorts records ascending by ground-truth count and splits them into
/// n_groups contiguous groups of floor(n/n_groups), remainder in the last.
std::vector<CountGroup> group_analysis(const std::vector<EvalRecord>& records, int n_groups = 10);

/// Per-scene MAE keyed by the records' scene tags, sorted by scene name.
std::vector<std::pair<std::string, double>> scene_mae(const std::vector<EvalRecord>& records);

/// Tab-separated report: one `id gt pred abs_err` line per record, then MAE
/// and RMSE lines, then an optional group table.
std::string format_report(const std::vector<EvalRecord>& records, int n_groups = 0);

}  // namespace iccnn
