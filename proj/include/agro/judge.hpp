#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/llm_gateway.hpp"

namespace agro::judge {

enum class Dimension { Correctness, Relevance, Clarity, Completeness };
inline constexpr std::array<Dimension, 4> kDimensions = {Dimension::Correctness, Dimension::Relevance,
                                                         Dimension::Clarity, Dimension::Completeness};
std::string_view dimension_name(Dimension d) noexcept;

struct JudgeVerdict {
    std::array<int, 4> scores{};  // indexed by Dimension
    std::string justification;

    int score(Dimension d) const { return scores[static_cast<std::size_t>(d)]; }
    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

enum class CaseMode { Multimodal, Rag };
std::string_view case_mode_name(CaseMode m) noexcept;
std::optional<CaseMode> parse_case_mode(std::string_view name);

struct ExperimentCase {
    std::string case_id;
    std::string query;
    CaseMode mode = CaseMode::Multimodal;
    std::string context_text;
    std::string answer_markdown;
};

ExperimentCase case_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentCase& c);
/// One case per non-blank line.
std::vector<ExperimentCase> load_corpus_jsonl(std::string_view text);

/// Zero-shot: a system message with the criteria and output schema, then one
/// user message with the labeled query, retrieved context and answer.
std::vector<llm::ChatMessage> build_judge_prompt(const ExperimentCase& c);

/// Accepts the first JSON object (fenced or bare) in the reply, or a bare
/// `"key": value` list without braces. Throws VerdictUnparsable,
/// ScoreOutOfRange or MissingDimension.
JudgeVerdict parse_verdict(std::string_view model_text);
nlohmann::json to_json(const JudgeVerdict& v);

struct GroupSummary {
    std::size_t n = 0;
    std::array<double, 4> means{};  // exact; rounded only when displayed

    double mean(Dimension d) const { return means[static_cast<std::size_t>(d)]; }
};

struct CaseOutcome {
    std::string case_id;
    CaseMode mode = CaseMode::Multimodal;
    std::optional<JudgeVerdict> verdict;
    std::string failure;  // set when verdict is empty
    int asks = 0;
};

struct ExperimentReport {
    std::vector<CaseOutcome> cases;
    std::optional<GroupSummary> multimodal;
    std::optional<GroupSummary> rag;
    GroupSummary total;
    std::size_t failed = 0;
};

/// Group means per mode; the total pools every verdict. Throws EmptyInput.
ExperimentReport aggregate(const std::vector<std::pair<CaseMode, JudgeVerdict>>& verdicts);

struct RunOptions {
    int max_reasks = 2;
    int concurrency = 0;  // 0 = the judge endpoint's in-flight cap
};

/// Judges each case (temperature 0), re-asking up to max_reasks times on an
/// unparsable verdict. Failed cases are excluded from the means. Gateway
/// failures propagate. Throws EmptyInput / AllCasesFailed.
ExperimentReport run_experiments(const std::vector<ExperimentCase>& cases, const llm::Gateway& gateway,
                                 RunOptions options = {});

nlohmann::json report_to_json(const ExperimentReport& report);

/// Columns mode, correctness, relevance, clarity, completeness, n; rows
/// multimodal, rag, total; means with 3 decimals.
std::string summary_csv(const ExperimentReport& report);
std::map<std::string, GroupSummary> parse_summary_csv(std::string_view text);

/// report.json + summary.csv
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);

}  // namespace agro::judge
