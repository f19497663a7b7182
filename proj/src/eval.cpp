#include "iccnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace iccnn {

double count_from_map(const DensityMap& map) { return map.sum(); }

double mae(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw UsageError("mae over an empty record list");
    double s = 0.0;
    for (const auto& r : records) s += std::fabs(r.gt_count - r.pred_count);
    return s / static_cast<double>(records.size());
}

double rmse(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw UsageError("rmse over an empty record list");
    double s = 0.0;
    for (const auto& r : records) {
        const double e = r.gt_count - r.pred_count;
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(records.size()));
}

std::vector<CountGroup> group_analysis(const std::vector<EvalRecord>& records, int n_groups) {
    const int n = static_cast<int>(records.size());
    if (n_groups < 1) throw UsageError("group_analysis needs n_groups >= 1");
    if (n_groups > n) throw UsageError("group_analysis: more groups than records");

    std::vector<EvalRecord> sorted = records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const EvalRecord& a, const EvalRecord& b) { return a.gt_count < b.gt_count; });

    const int base = n / n_groups;
    std::vector<CountGroup> groups;
    groups.reserve(static_cast<size_t>(n_groups));
    int pos = 0;
    for (int g = 0; g < n_groups; ++g) {
        const int size = (g == n_groups - 1) ? n - pos : base;
        CountGroup cg;
        cg.size = size;
        for (int i = 0; i < size; ++i) {
            cg.mean_gt += sorted[static_cast<size_t>(pos + i)].gt_count;
            cg.mean_pred += sorted[static_cast<size_t>(pos + i)].pred_count;
        }
        cg.mean_gt /= size;
        cg.mean_pred /= size;
        groups.push_back(cg);
        pos += size;
    }
    return groups;
}

std::vector<std::pair<std::string, double>> scene_mae(const std::vector<EvalRecord>& records) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : records) {
        auto& [sum, n] = acc[r.scene];
        sum += std::fabs(r.gt_count - r.pred_count);
        ++n;
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [scene, sn] : acc) out.emplace_back(scene, sn.first / sn.second);
    return out;
}

std::string format_report(const std::vector<EvalRecord>& records, int n_groups) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    for (const auto& r : records) {
        os << r.id << "\t" << r.gt_count << "\t" << r.pred_count << "\t"
           << std::fabs(r.gt_count - r.pred_count) << "\n";
    }
    os << "MAE " << mae(records) << "\n";
    os << "RMSE " << rmse(records) << "\n";
    if (n_groups > 0) {
        os << "group\tsize\tmean_gt\tmean_pred\n";
        auto groups = group_analysis(records, n_groups);
        for (size_t g = 0; g < groups.size(); ++g) {
            os << g + 1 << "\t" << groups[g].size << "\t" << groups[g].mean_gt << "\t"
               << groups[g].mean_pred << "\n";
        }
    }
    return os.str();
}

}  // namespace iccnn
