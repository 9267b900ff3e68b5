// SPDX-License-Identifier: Apache-2.0

#include "fedforget/evaluation.hpp"

#include "fedforget/checksum.hpp"
#include "fedforget/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace fedforget {

double normalized_probability(const ModelView& model, const TokenSeq& question, const TokenSeq& answer) {
    if (answer.empty()) throw ArgumentError("answer must be non-empty");
    return std::exp(sequence_log_prob(model, question, answer) / static_cast<double>(answer.size()));
}

double answer_probability(const ModelView& model, const QaPair& pair) {
    return normalized_probability(model, pair.question, pair.answer);
}

double mc_probability(const ModelView& model, const QaPair& pair, std::span<const TokenSeq> choices) {
    if (choices.size() < 2) throw ArgumentError("multiple choice needs at least two choices");
    double total = 0.0;
    double correct = 0.0;
    for (std::size_t i = 0; i < choices.size(); ++i) {
        const double p = normalized_probability(model, pair.question, choices[i]);
        if (i == 0) correct = p;
        total += p;
    }
    return correct / total;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    if (b.size() <= 64) {
        // Bit-parallel row update over b; a zero bit in v marks a DP step.
        const std::uint64_t live = b.size() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << b.size()) - 1;
        std::uint64_t v = ~std::uint64_t{0};
        for (TokenId x : a) {
            std::uint64_t match = 0;
            for (std::size_t j = 0; j < b.size(); ++j) match |= static_cast<std::uint64_t>(b[j] == x) << j;
            const std::uint64_t u = v & match;
            v = (v + u) | (v - u);
        }
        return static_cast<std::size_t>(std::popcount(~v & live));
    }
    std::vector<std::size_t> row(b.size() + 1, 0);
    for (TokenId x : a) {
        std::size_t diag = 0;
        for (std::size_t j = 0; j < b.size(); ++j) {
            const std::size_t up = row[j + 1];
            row[j + 1] = x == b[j] ? diag + 1 : std::max(up, row[j]);
            diag = up;
        }
    }
    return row[b.size()];
}

double rouge_l_recall(const TokenSeq& reference, const TokenSeq& candidate) {
    if (reference.empty()) throw ArgumentError("rouge reference must be non-empty");
    return static_cast<double>(lcs_length(reference, candidate)) / static_cast<double>(reference.size());
}

TruthRatio truth_ratio_from_raw(double raw) {
    TruthRatio tr;
    tr.raw = raw;
    tr.adjusted = std::max(0.0, 1.0 - raw);
    tr.forget_score = raw > 0.0 ? std::max(0.0, 1.0 - 1.0 / raw) : 0.0;
    return tr;
}

TruthRatio truth_ratio(const ModelView& model, const QaPair& pair) {
    if (pair.wrong_answers.empty()) throw ArgumentError("truth ratio needs perturbed (wrong) answers");
    if (pair.paraphrased_question.empty()) throw ArgumentError("truth ratio needs a paraphrased question");
    double wrong = 0.0;
    for (const auto& a : pair.wrong_answers) wrong += normalized_probability(model, pair.question, a);
    wrong /= static_cast<double>(pair.wrong_answers.size());
    const double right = normalized_probability(model, pair.paraphrased_question, pair.answer);
    return truth_ratio_from_raw(wrong / right);
}

double ks_p_value(double statistic, std::size_t n, std::size_t m) {
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    const double p = 2.0 * std::exp(-2.0 * statistic * statistic * nn * mm / (nn + mm));
    return std::clamp(p, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> sample_u, std::span<const double> sample_r) {
    if (sample_u.empty() || sample_r.empty()) throw ArgumentError("KS test needs two non-empty samples");
    std::vector<double> u(sample_u.begin(), sample_u.end());
    std::vector<double> r(sample_r.begin(), sample_r.end());
    std::sort(u.begin(), u.end());
    std::sort(r.begin(), r.end());
    const double n = static_cast<double>(u.size());
    const double m = static_cast<double>(r.size());

    // Walk the pooled order; evaluate both ECDFs after consuming every copy
    // of the current value.
    double d = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < u.size() || j < r.size()) {
        const double x = j == r.size() || (i < u.size() && u[i] <= r[j]) ? u[i] : r[j];
        while (i < u.size() && u[i] <= x) ++i;
        while (j < r.size() && r[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    return KsResult{d, ks_p_value(d, u.size(), r.size())};
}

double model_utility(std::span<const double> components) {
    if (components.size() != kUtilityComponents) {
        throw ArgumentError("model utility needs exactly 9 components, got " + std::to_string(components.size()));
    }
    double inv = 0.0;
    for (double c : components) {
        if (std::isnan(c)) throw ArgumentError("model utility component is NaN");
        inv += 1.0 / std::clamp(c, kMetricFloor, 1.0);
    }
    return static_cast<double>(kUtilityComponents) / inv;
}

double qa_rouge(const ModelView& model, const QaPair& pair, std::size_t max_len) {
    const TokenSeq reference = strip_eos(pair.answer);
    return rouge_l_recall(reference, generate_greedy(model, pair.question, max_len));
}

double verbatim_rouge(const ModelView& model, const QaPair& pair, std::size_t max_len) {
    const TokenSeq values = strip_eos(pair.answer);
    if (values.empty()) throw ArgumentError("verbatim probe needs a non-empty answer");
    const std::size_t half = values.size() / 2;
    TokenSeq prompt = pair.question;
    prompt.insert(prompt.end(), values.begin(), values.begin() + static_cast<std::ptrdiff_t>(half));
    const TokenSeq reference(values.begin() + static_cast<std::ptrdiff_t>(half), values.end());
    return rouge_l_recall(reference, generate_greedy(model, prompt, max_len));
}

namespace {

template <typename Item, typename ProbFn, typename PairFn>
SplitMetrics score_split(const ModelView& model, std::span<const Item> items, PairFn pair_of, ProbFn prob,
                         bool forget_split, std::size_t max_len, std::vector<double>* raw_ratios) {
    SplitMetrics m;
    m.count = items.size();
    for (const auto& item : items) {
        const QaPair& pair = pair_of(item);
        m.probability += prob(item);
        m.rouge += qa_rouge(model, pair, max_len);
        const TruthRatio tr = truth_ratio(model, pair);
        m.truth_ratio += forget_split ? tr.forget_score : tr.adjusted;
        if (raw_ratios != nullptr) raw_ratios->push_back(tr.raw);
    }
    const double n = static_cast<double>(items.size());
    m.probability /= n;
    m.rouge /= n;
    m.truth_ratio /= n;
    return m;
}

std::vector<double> raw_forget_ratios(const ModelView& model, std::span<const QaPair> forget) {
    std::vector<double> out;
    out.reserve(forget.size());
    for (const auto& pair : forget) out.push_back(truth_ratio(model, pair).raw);
    return out;
}

}  // namespace

EvalReport evaluate(const ModelView& model, const ModelView* retrain_model, const EvalBundle& bundle,
                    const EvalOptions& options) {
    EvalReport report;
    report.model_checksum = params_checksum(model.adapter.flatten());
    const std::size_t len = options.max_generation_length;

    auto qa_pair = [](const QaPair& p) -> const QaPair& { return p; };
    auto choice_pair = [](const ChoiceItem& c) -> const QaPair& { return c.pair; };
    auto eq33 = [&](const QaPair& p) { return answer_probability(model, p); };
    auto mc = [&](const ChoiceItem& c) { return mc_probability(model, c.pair, c.choices); };

    if (bundle.forget.empty()) {
        report.warnings.emplace_back("forget split is empty; FTR, forget quality, NVM and NKM are absent");
    } else {
        report.forget = score_split<QaPair>(model, bundle.forget, qa_pair, eq33, true, len,
                                            &report.forget_raw_truth_ratios);
        report.forget_truth_ratio = report.forget->truth_ratio;
        report.nkm = report.forget->rouge;
        double nvm = 0.0;
        for (const auto& pair : bundle.forget) nvm += verbatim_rouge(model, pair, len);
        report.nvm = nvm / static_cast<double>(bundle.forget.size());
        if (retrain_model != nullptr) {
            const auto reference = raw_forget_ratios(*retrain_model, bundle.forget);
            report.forget_quality = ks_two_sample(report.forget_raw_truth_ratios, reference);
        }
    }

    if (bundle.retain.empty()) {
        report.warnings.emplace_back("retain split is empty; model utility and UP are absent");
    } else {
        report.retain = score_split<QaPair>(model, bundle.retain, qa_pair, eq33, false, len, nullptr);
        report.up = report.retain->rouge;
    }
    if (bundle.real_authors.empty()) {
        report.warnings.emplace_back("real-authors split is empty; model utility is absent");
    } else {
        report.real_authors = score_split<ChoiceItem>(model, bundle.real_authors, choice_pair, mc, false, len, nullptr);
    }
    if (bundle.world_facts.empty()) {
        report.warnings.emplace_back("world-facts split is empty; model utility is absent");
    } else {
        report.world_facts = score_split<ChoiceItem>(model, bundle.world_facts, choice_pair, mc, false, len, nullptr);
    }

    if (report.retain && report.real_authors && report.world_facts) {
        const std::array<double, kUtilityComponents> nine = {
            report.retain->probability,       report.retain->rouge,       report.retain->truth_ratio,
            report.real_authors->probability, report.real_authors->rouge, report.real_authors->truth_ratio,
            report.world_facts->probability,  report.world_facts->rouge,  report.world_facts->truth_ratio,
        };
        report.model_utility = model_utility(nine);
    }
    return report;
}

}  // namespace fedforget
