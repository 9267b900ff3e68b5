// SPDX-License-Identifier: Apache-2.0

#include "fedforget/report.hpp"

#include "fedforget/errors.hpp"
#include "fedforget/server.hpp"
#include "fedforget/unlearning.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace fedforget {

namespace {

std::vector<std::string> ordered(std::vector<std::string> canonical, const std::vector<std::string>& seen) {
    std::vector<std::string> out;
    for (const auto& c : canonical) {
        if (std::find(seen.begin(), seen.end(), c) != seen.end()) out.push_back(c);
    }
    for (const auto& s : seen) {
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
}

std::size_t index_of(const std::vector<std::string>& v, const std::string& s) {
    return static_cast<std::size_t>(std::find(v.begin(), v.end(), s) - v.begin());
}

std::string cell_text(const std::optional<double>& v) { return v ? fmt::format("{:.4g}", *v) : "-"; }

}  // namespace

ComparisonTable build_comparison(const std::vector<EvalReport>& reports) {
    std::vector<std::string> labels, algorithms;
    for (const auto& r : reports) {
        labels.push_back(r.label);
        algorithms.push_back(r.algorithm);
    }
    std::vector<std::string> method_order{"Finetune"};
    for (auto m : kAllUnlearnMethods) method_order.emplace_back(to_string(m));
    method_order.emplace_back("Retrain");
    std::vector<std::string> algorithm_order;
    for (auto a : kAllFedAlgorithms) algorithm_order.emplace_back(to_string(a));

    ComparisonTable t;
    t.rows = ordered(method_order, labels);
    t.columns = ordered(algorithm_order, algorithms);
    t.cells.assign(t.rows.size(), std::vector<ReportCell>(t.columns.size()));
    std::vector<std::vector<bool>> filled(t.rows.size(), std::vector<bool>(t.columns.size(), false));
    for (const auto& r : reports) {
        const auto i = index_of(t.rows, r.label);
        const auto j = index_of(t.columns, r.algorithm);
        if (filled[i][j]) throw ArgumentError("two reports for " + r.label + " under " + r.algorithm);
        filled[i][j] = true;
        t.cells[i][j] = {r.model_utility, r.forget_truth_ratio};
    }
    return t;
}

std::string render_table(const ComparisonTable& t) {
    std::size_t label_width = 6;
    for (const auto& r : t.rows) label_width = std::max(label_width, r.size());
    constexpr std::size_t kCol = 10;

    std::string out = fmt::format("{:<{}}", "Method", label_width);
    for (const auto& c : t.columns) out += fmt::format(" | {:^{}}", c, 2 * kCol + 1);
    out += "\n" + fmt::format("{:<{}}", "", label_width);
    for (std::size_t j = 0; j < t.columns.size(); ++j) out += fmt::format(" | {:>{}} {:>{}}", "MU", kCol, "FTR", kCol);
    out += "\n" + std::string(label_width, '-');
    for (std::size_t j = 0; j < t.columns.size(); ++j) out += "-+-" + std::string(2 * kCol + 1, '-');
    out += "\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        out += fmt::format("{:<{}}", t.rows[i], label_width);
        for (const auto& cell : t.cells[i]) {
            out += fmt::format(" | {:>{}} {:>{}}", cell_text(cell.model_utility), kCol,
                               cell_text(cell.forget_truth_ratio), kCol);
        }
        out += "\n";
    }
    return out;
}

Json to_json(const ComparisonTable& t) {
    Json doc;
    doc["format"] = "fedforget-report";
    doc["format_version"] = kReportFormatVersion;
    doc["columns"] = t.columns;
    doc["rows"] = Json::array();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        Json row;
        row["method"] = t.rows[i];
        for (std::size_t j = 0; j < t.columns.size(); ++j) {
            const auto& c = t.cells[i][j];
            row[t.columns[j]] = {{"MU", c.model_utility ? Json(*c.model_utility) : Json(nullptr)},
                                 {"FTR", c.forget_truth_ratio ? Json(*c.forget_truth_ratio) : Json(nullptr)}};
        }
        doc["rows"].push_back(std::move(row));
    }
    return doc;
}

std::string comparison_csv(const ComparisonTable& t) {
    std::string out = "method";
    for (const auto& c : t.columns) out += "," + c + "_MU," + c + "_FTR";
    out += "\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        out += t.rows[i];
        for (const auto& cell : t.cells[i]) {
            out += "," + (cell.model_utility ? fmt::format("{}", *cell.model_utility) : std::string());
            out += "," + (cell.forget_truth_ratio ? fmt::format("{}", *cell.forget_truth_ratio) : std::string());
        }
        out += "\n";
    }
    return out;
}

}  // namespace fedforget
