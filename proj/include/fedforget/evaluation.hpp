// SPDX-License-Identifier: Apache-2.0
//
// Memorization, privacy and utility metrics over the four evaluation splits.

#pragma once

#include "fedforget/model.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedforget {

/// A QA pair scored as multiple choice; choices[0] is the correct answer.
struct ChoiceItem {
    QaPair pair;
    std::vector<TokenSeq> choices;

    bool operator==(const ChoiceItem&) const = default;
};

struct EvalBundle {
    std::vector<QaPair> forget;
    std::vector<QaPair> retain;
    std::vector<ChoiceItem> real_authors;
    std::vector<ChoiceItem> world_facts;

    bool operator==(const EvalBundle&) const = default;
};

/// P(a|q)^(1/|a|).
double answer_probability(const ModelView& model, const QaPair& pair);
double normalized_probability(const ModelView& model, const TokenSeq& question, const TokenSeq& answer);

/// Length-normalized probability of choices[0] relative to all choices.
double mc_probability(const ModelView& model, const QaPair& pair, std::span<const TokenSeq> choices);

/// LCS(reference, candidate) / |reference|.
double rouge_l_recall(const TokenSeq& reference, const TokenSeq& candidate);
std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

struct TruthRatio {
    double raw = 0.0;
    double adjusted = 0.0;      // max(0, 1 - R)
    double forget_score = 0.0;  // max(0, 1 - 1/R)
};

TruthRatio truth_ratio(const ModelView& model, const QaPair& pair);
TruthRatio truth_ratio_from_raw(double raw);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample KS statistic with the asymptotic c(alpha) inversion for p.
KsResult ks_two_sample(std::span<const double> sample_u, std::span<const double> sample_r);
double ks_p_value(double statistic, std::size_t n, std::size_t m);

inline constexpr double kMetricFloor = 1e-12;
inline constexpr std::size_t kUtilityComponents = 9;

/// Harmonic mean of nine components, each clamped to [1e-12, 1].
double model_utility(std::span<const double> components);

struct SplitMetrics {
    double probability = 0.0;
    double rouge = 0.0;
    /// Forget split: mean forget_score. Other splits: mean adjusted ratio.
    double truth_ratio = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    std::string label;
    std::string algorithm;
    std::optional<SplitMetrics> forget;
    std::optional<SplitMetrics> retain;
    std::optional<SplitMetrics> real_authors;
    std::optional<SplitMetrics> world_facts;
    std::optional<double> model_utility;
    std::optional<double> forget_truth_ratio;
    std::optional<KsResult> forget_quality;
    std::optional<double> nvm;
    std::optional<double> nkm;
    std::optional<double> up;
    /// Raw truth ratios on the forget split, in bundle order.
    std::vector<double> forget_raw_truth_ratios;
    std::string model_checksum;
    std::vector<std::string> warnings;
};

struct EvalOptions {
    std::size_t max_generation_length = 8;
};

EvalReport evaluate(const ModelView& model, const ModelView* retrain_model, const EvalBundle& bundle,
                    const EvalOptions& options = {});

/// Greedy continuation of question ⊕ first half of the answer, scored
/// against the second half.
double verbatim_rouge(const ModelView& model, const QaPair& pair, std::size_t max_len);

/// Greedy answer to the question scored against the reference answer.
double qa_rouge(const ModelView& model, const QaPair& pair, std::size_t max_len);

}  // namespace fedforget
