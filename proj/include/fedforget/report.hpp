// SPDX-License-Identifier: Apache-2.0
//
// Method-by-algorithm comparison of MU and FTR across evaluation reports.

#pragma once

#include "fedforget/evaluation.hpp"
#include "fedforget/io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fedforget {

struct ReportCell {
    std::optional<double> model_utility;
    std::optional<double> forget_truth_ratio;
};

struct ComparisonTable {
    /// Finetune, the unlearning methods, Retrain, then any other labels.
    std::vector<std::string> rows;
    /// Federated algorithms in their canonical order, then any others.
    std::vector<std::string> columns;
    /// cells[row][column].
    std::vector<std::vector<ReportCell>> cells;
};

/// Throws ArgumentError when two reports claim the same (label, algorithm) cell.
ComparisonTable build_comparison(const std::vector<EvalReport>& reports);

std::string render_table(const ComparisonTable& table);
Json to_json(const ComparisonTable& table);
std::string comparison_csv(const ComparisonTable& table);

}  // namespace fedforget
