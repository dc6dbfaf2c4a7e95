#include "agro/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/prompt_assets.hpp"
#include "agro/util.hpp"

namespace agro::judge {

using nlohmann::json;

std::string_view dimension_name(Dimension d) noexcept {
    switch (d) {
        case Dimension::Correctness: return "correctness";
        case Dimension::Relevance: return "relevance";
        case Dimension::Clarity: return "clarity";
        case Dimension::Completeness: return "completeness";
    }
    return "?";
}

std::string_view case_mode_name(CaseMode m) noexcept { return m == CaseMode::Multimodal ? "multimodal" : "rag"; }

std::optional<CaseMode> parse_case_mode(std::string_view name) {
    auto upper = to_upper(trim(name));
    if (upper == "MULTIMODAL") return CaseMode::Multimodal;
    if (upper == "RAG") return CaseMode::Rag;
    return std::nullopt;
}

ExperimentCase case_from_json(const json& j) {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "experiment case: " + why); };
    auto text = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) throw bad(std::string("missing string field ") + key);
        return j[key].get<std::string>();
    };
    ExperimentCase c;
    c.case_id = text("case_id");
    c.query = text("query");
    auto mode = parse_case_mode(text("mode"));
    if (!mode) throw bad("mode must be multimodal or rag");
    c.mode = *mode;
    c.context_text = text("context_text");
    c.answer_markdown = text("answer_markdown");
    return c;
}

json to_json(const ExperimentCase& c) {
    return {{"case_id", c.case_id},
            {"query", c.query},
            {"mode", case_mode_name(c.mode)},
            {"context_text", c.context_text},
            {"answer_markdown", c.answer_markdown}};
}

std::vector<ExperimentCase> load_corpus_jsonl(std::string_view text) {
    std::vector<ExperimentCase> cases;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw Error(Errc::InvalidArgument, "corpus line " + std::to_string(line_no) + " is not valid JSON");
        cases.push_back(case_from_json(j));
    }
    return cases;
}

std::vector<llm::ChatMessage> build_judge_prompt(const ExperimentCase& c) {
    std::string user = "## User's query\n\n" + c.query + "\n\n## Retrieved context\n\n" +
                       (trim(c.context_text).empty() ? std::string("(no context was retrieved)") : c.context_text) +
                       "\n\n## Assistant's answer\n\n" + c.answer_markdown;
    return {llm::ChatMessage::system(std::string(prompts::kJudgeSystem)), llm::ChatMessage::user(std::move(user))};
}

// ---------------------------------------------------------------------------
// Verdict parsing

namespace {

std::string strip_think(std::string text) {
    for (auto open = text.find("<think>"); open != std::string::npos; open = text.find("<think>")) {
        auto close = text.find("</think>", open);
        text.erase(open, close == std::string::npos ? std::string::npos : close + 8 - open);
    }
    return text;
}

/// First balanced {...} span, skipping braces inside JSON strings.
std::optional<std::string_view> first_object(std::string_view text) {
    auto open = text.find('{');
    if (open == std::string_view::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return text.substr(open, i - open + 1);
    }
    return std::nullopt;
}

std::optional<std::string_view> fenced_body(std::string_view text) {
    auto open = text.find("```");
    if (open == std::string_view::npos) return std::nullopt;
    auto body_start = text.find('\n', open);
    if (body_start == std::string_view::npos) return std::nullopt;
    auto close = text.find("```", body_start);
    if (close == std::string_view::npos) return std::nullopt;
    return text.substr(body_start + 1, close - body_start - 1);
}

}  // namespace

JudgeVerdict parse_verdict(std::string_view model_text) {
    const std::string text = strip_think(std::string(model_text));
    std::string_view scope = text;
    if (auto fenced = fenced_body(scope); fenced && fenced->find('{') != std::string_view::npos) scope = *fenced;

    json doc = json::value_t::discarded;
    if (auto object = first_object(scope)) {
        doc = json::parse(*object, nullptr, false);
    } else if (!trim(scope).empty()) {
        // A bare `"correctness": 5, ...` list without the enclosing braces.
        std::string wrapped = "{" + std::string(trim(scope)) + "}";
        doc = json::parse(wrapped, nullptr, false);
    }
    if (doc.is_discarded() || !doc.is_object())
        throw Error(Errc::VerdictUnparsable, "judge reply holds no parsable JSON object");

    json lowered = json::object();
    for (const auto& [key, value] : doc.items()) {
        std::string k;
        for (char ch : key) k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        lowered[std::string(trim(k))] = value;
    }

    JudgeVerdict v;
    for (auto d : kDimensions) {
        const std::string name(dimension_name(d));
        if (!lowered.contains(name)) throw Error(Errc::MissingDimension, "verdict lacks '" + name + "'");
        const auto& s = lowered[name];
        if (!s.is_number()) throw Error(Errc::ScoreOutOfRange, name + " must be an integer from 1 to 5");
        double value = s.get<double>();
        if (value != std::floor(value) || value < 1 || value > 5)
            throw Error(Errc::ScoreOutOfRange, name + " = " + s.dump() + " is not an integer from 1 to 5");
        v.scores[static_cast<std::size_t>(d)] = static_cast<int>(value);
    }
    if (!lowered.contains("justification") || !lowered["justification"].is_string())
        throw Error(Errc::MissingDimension, "verdict lacks a justification");
    v.justification = std::string(trim(lowered["justification"].get<std::string>()));
    if (v.justification.empty()) throw Error(Errc::MissingDimension, "verdict justification is empty");
    return v;
}

json to_json(const JudgeVerdict& v) {
    json j = json::object();
    for (auto d : kDimensions) j[std::string(dimension_name(d))] = v.score(d);
    j["justification"] = v.justification;
    return j;
}

// ---------------------------------------------------------------------------
// Aggregation

ExperimentReport aggregate(const std::vector<std::pair<CaseMode, JudgeVerdict>>& verdicts) {
    if (verdicts.empty()) throw Error(Errc::EmptyInput, "no verdicts to aggregate");
    std::array<long long, 4> sum_mm{}, sum_rag{}, sum_all{};
    std::size_t n_mm = 0, n_rag = 0;
    for (const auto& [mode, v] : verdicts) {
        auto& group = mode == CaseMode::Multimodal ? sum_mm : sum_rag;
        (mode == CaseMode::Multimodal ? n_mm : n_rag) += 1;
        for (std::size_t d = 0; d < 4; ++d) {
            group[d] += v.scores[d];
            sum_all[d] += v.scores[d];
        }
    }
    auto summary = [](const std::array<long long, 4>& sums, std::size_t n) {
        GroupSummary g;
        g.n = n;
        for (std::size_t d = 0; d < 4; ++d) g.means[d] = static_cast<double>(sums[d]) / static_cast<double>(n);
        return g;
    };
    ExperimentReport report;
    if (n_mm) report.multimodal = summary(sum_mm, n_mm);
    if (n_rag) report.rag = summary(sum_rag, n_rag);
    report.total = summary(sum_all, verdicts.size());
    return report;
}

ExperimentReport run_experiments(const std::vector<ExperimentCase>& cases, const llm::Gateway& gateway,
                                 RunOptions options) {
    if (cases.empty()) throw Error(Errc::EmptyInput, "the experiment corpus is empty");
    const auto& ep = gateway.endpoint(llm::ModelRole::Judge);
    const int cap = options.concurrency > 0 ? options.concurrency : ep.max_in_flight;
    const llm::ChatParams params{0.0, llm::default_params(llm::ModelRole::Judge).max_tokens};

    std::vector<CaseOutcome> outcomes(cases.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr fatal;

    auto judge_one = [&](std::size_t i) {
        const auto& c = cases[i];
        CaseOutcome out{c.case_id, c.mode, std::nullopt, {}, 0};
        auto messages = build_judge_prompt(c);
        for (int ask = 0; ask <= options.max_reasks; ++ask) {
            auto reply = gateway.chat_complete(llm::ModelRole::Judge, messages, params);
            ++out.asks;
            try {
                out.verdict = parse_verdict(reply);
                out.failure.clear();
                break;
            } catch (const Error& e) {
                out.failure = e.what();
                messages.push_back(llm::ChatMessage::assistant(reply));
                messages.push_back(llm::ChatMessage::user(
                    "Your reply could not be used (" + std::string(e.what()) +
                    "). Reply again with only the JSON object: integer scores 1-5 for correctness, relevance, "
                    "clarity and completeness, and a short justification."));
            }
        }
        if (!out.verdict) spdlog::warn("judge: case {} failed after {} asks: {}", c.case_id, out.asks, out.failure);
        outcomes[i] = std::move(out);
    };
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cases.size();) {
            {
                std::lock_guard lock(mu);
                if (fatal) return;
            }
            try {
                judge_one(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!fatal) fatal = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(cap, 1)), cases.size());
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (fatal) std::rethrow_exception(fatal);

    std::vector<std::pair<CaseMode, JudgeVerdict>> verdicts;
    std::size_t failed = 0;
    for (const auto& o : outcomes) {
        if (o.verdict) verdicts.emplace_back(o.mode, *o.verdict);
        else ++failed;
    }
    if (verdicts.empty()) throw Error(Errc::AllCasesFailed, "no case produced a parsable verdict");
    auto report = aggregate(verdicts);
    report.cases = std::move(outcomes);
    report.failed = failed;
    return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json summary_json(const GroupSummary& g) {
    json j{{"n", g.n}};
    for (auto d : kDimensions) j[std::string(dimension_name(d))] = g.mean(d);
    return j;
}

}  // namespace

json report_to_json(const ExperimentReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) {
        json j{{"case_id", c.case_id}, {"mode", case_mode_name(c.mode)}, {"asks", c.asks}};
        j["verdict"] = c.verdict ? to_json(*c.verdict) : json(nullptr);
        if (!c.verdict) j["failure"] = c.failure;
        cases.push_back(std::move(j));
    }
    json means = json::object();
    if (report.multimodal) means["multimodal"] = summary_json(*report.multimodal);
    if (report.rag) means["rag"] = summary_json(*report.rag);
    means["total"] = summary_json(report.total);
    return {{"cases", std::move(cases)},
            {"means", std::move(means)},
            {"counts",
             {{"multimodal", report.multimodal ? report.multimodal->n : 0},
              {"rag", report.rag ? report.rag->n : 0},
              {"total", report.total.n},
              {"failed", report.failed}}}};
}

std::string summary_csv(const ExperimentReport& report) {
    std::string out = "mode,correctness,relevance,clarity,completeness,n\n";
    auto row = [&out](std::string_view name, const GroupSummary& g) {
        out += name;
        for (auto d : kDimensions) out += "," + format_fixed_half_up(g.mean(d), 3);
        out += "," + std::to_string(g.n) + "\n";
    };
    if (report.multimodal) row("multimodal", *report.multimodal);
    if (report.rag) row("rag", *report.rag);
    row("total", report.total);
    return out;
}

std::map<std::string, GroupSummary> parse_summary_csv(std::string_view text) {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "summary.csv: " + why); };
    std::map<std::string, GroupSummary> rows;
    auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != "mode,correctness,relevance,clarity,completeness,n")
        throw bad("unexpected header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto cells = split(trim(lines[i]), ',');
        if (cells.size() != 6) throw bad("row " + std::to_string(i) + " has " + std::to_string(cells.size()) + " cells");
        GroupSummary g;
        for (std::size_t d = 0; d < 4; ++d) {
            auto v = parse_double(cells[d + 1]);
            if (!v) throw bad("non-numeric mean");
            g.means[d] = *v;
        }
        auto n = parse_int(cells[5]);
        if (!n || *n < 0) throw bad("bad count");
        g.n = static_cast<std::size_t>(*n);
        rows[std::string(cells[0])] = g;
    }
    return rows;
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_file(dir / "summary.csv", summary_csv(report));
}

}  // namespace agro::judge
