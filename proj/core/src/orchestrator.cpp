#include "remex/orchestrator.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "remex/text.hpp"

namespace remex {

using nlohmann::json;

int retrieval_step_count(const Trajectory& trajectory) {
    int count = 0;
    for (const auto& step : trajectory.steps) {
        if (std::holds_alternative<SearchAction>(step.action)) {
            ++count;
        }
    }
    return count;
}

void validate(const EpisodeConfig& config) {
    if (config.max_steps < 1) {
        throw ConfigError("episode config: max_steps must be >= 1");
    }
    if (config.top_k < 1) {
        throw ConfigError("episode config: top_k must be >= 1");
    }
}

const PromptTemplate& default_prompt_template() {
    static const PromptTemplate tmpl{
        "You are a research assistant who can query retrieval experts.\n"
        "Question: {query}\n"
        "History:\n"
        "{history}\n"
        "Decide the next action. Reply with <think>YOUR REASONING</think> followed by exactly "
        "one of:\n"
        "<search expert=\"text\">SUB-QUERY</search> (experts: text, image, table),\n"
        "<search expert=\"text\">NULL</search> when existing knowledge suffices, or\n"
        "<answer>ANSWER TEXT</answer>.",

        "Summarize the retrieved evidence into a short intermediate answer.\n"
        "Reason: {reason}\n"
        "Sub-query [{expert}]: {search}\n"
        "Documents:\n"
        "{documents}\n"
        "Reply with <answer>ANSWER TEXT</answer>.",

        "Question: {query}\n"
        "History:\n"
        "{history}\n"
        "Give the answer to the question. Reply with <answer>ANSWER TEXT</answer>.",

        1500,
    };
    return tmpl;
}

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kSearchOpen = "<search";
constexpr std::string_view kSearchClose = "</search>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

int count_occurrences(std::string_view haystack, std::string_view needle) {
    int count = 0;
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

struct SearchTag {
    std::string expert_attr;
    std::string query;
    bool attr_well_formed = false;  // exactly <search expert="...">
    std::size_t end = std::string::npos;  // one past "</search>"
};

/// Extracts the first <search ...>...</search> fragment, tolerantly enough
/// for best-effort logging while recording whether the strict attribute
/// syntax was honored.
std::optional<SearchTag> extract_search(std::string_view s) {
    const std::size_t open = s.find(kSearchOpen);
    if (open == std::string_view::npos) {
        return std::nullopt;
    }
    const std::size_t tag_end = s.find('>', open);
    if (tag_end == std::string_view::npos) {
        return std::nullopt;
    }
    const std::size_t close = s.find(kSearchClose, tag_end + 1);
    if (close == std::string_view::npos) {
        return std::nullopt;
    }
    SearchTag tag;
    std::string_view attrs = s.substr(open + kSearchOpen.size(),
                                      tag_end - open - kSearchOpen.size());
    constexpr std::string_view kStrictPrefix = " expert=\"";
    if (attrs.substr(0, kStrictPrefix.size()) == kStrictPrefix) {
        const std::size_t quote = attrs.find('"', kStrictPrefix.size());
        if (quote != std::string_view::npos && quote == attrs.size() - 1) {
            tag.expert_attr = std::string(attrs.substr(kStrictPrefix.size(),
                                                       quote - kStrictPrefix.size()));
            tag.attr_well_formed = true;
        }
    }
    if (!tag.attr_well_formed) {
        // Best effort: look for expert= with either quote style.
        const std::size_t attr_pos = attrs.find("expert=");
        if (attr_pos != std::string_view::npos) {
            std::size_t value_begin = attr_pos + 7;
            if (value_begin < attrs.size() && (attrs[value_begin] == '"' ||
                                               attrs[value_begin] == '\'')) {
                const char quote = attrs[value_begin];
                const std::size_t value_end = attrs.find(quote, value_begin + 1);
                if (value_end != std::string_view::npos) {
                    tag.expert_attr =
                        std::string(attrs.substr(value_begin + 1, value_end - value_begin - 1));
                }
            }
        }
    }
    tag.query = trim(s.substr(tag_end + 1, close - tag_end - 1));
    tag.end = close + kSearchClose.size();
    return tag;
}

struct AnswerTag {
    std::string text;
    std::size_t begin = std::string::npos;
    std::size_t end = std::string::npos;  // one past "</answer>"
};

std::optional<AnswerTag> extract_answer(std::string_view s) {
    const std::size_t open = s.find(kAnswerOpen);
    if (open == std::string_view::npos) {
        return std::nullopt;
    }
    const std::size_t close = s.find(kAnswerClose, open + kAnswerOpen.size());
    if (close == std::string_view::npos) {
        return std::nullopt;
    }
    AnswerTag tag;
    tag.text = trim(s.substr(open + kAnswerOpen.size(), close - open - kAnswerOpen.size()));
    tag.begin = open;
    tag.end = close + kAnswerClose.size();
    return tag;
}

}  // namespace

ParsedAction parse_action(const std::string& raw) {
    const std::string s = trim(raw);
    ParsedAction parsed;

    const int think_opens = count_occurrences(s, kThinkOpen);
    const int think_closes = count_occurrences(s, kThinkClose);
    const int search_opens = count_occurrences(s, kSearchOpen);
    const int search_closes = count_occurrences(s, kSearchClose);
    const int answer_opens = count_occurrences(s, kAnswerOpen);
    const int answer_closes = count_occurrences(s, kAnswerClose);

    // Best-effort reason extraction.
    std::string rest = s;
    bool think_ok = false;
    if (s.substr(0, kThinkOpen.size()) == kThinkOpen) {
        const std::size_t close = s.find(kThinkClose);
        if (close != std::string::npos) {
            parsed.reason = trim(s.substr(kThinkOpen.size(), close - kThinkOpen.size()));
            rest = trim(s.substr(close + kThinkClose.size()));
            think_ok = think_opens == 1 && think_closes == 1;
        }
    }

    const auto search = extract_search(rest);
    const auto answer = extract_answer(rest);

    // Best-effort action, used regardless of validity.
    if (search) {
        if (search->query == "NULL" || search->query.empty()) {
            parsed.action = NoRetrievalAction{};
        } else if (auto kind = try_parse_expert_kind(search->expert_attr)) {
            parsed.action = SearchAction{*kind, search->query};
        } else {
            parsed.action = NoRetrievalAction{};
        }
    } else if (answer) {
        parsed.action = FinalAnswerAction{answer->text};
    } else {
        parsed.action = NoRetrievalAction{};
    }

    if (!think_ok) {
        return parsed;
    }

    const bool search_form = rest.substr(0, kSearchOpen.size()) == kSearchOpen && search &&
                             search->attr_well_formed &&
                             try_parse_expert_kind(search->expert_attr).has_value() &&
                             !search->query.empty() && search_opens == 1 && search_closes == 1 &&
                             answer_opens == 0 && answer_closes == 0 &&
                             trim(rest.substr(search->end)).empty();
    const bool answer_form = rest.substr(0, kAnswerOpen.size()) == kAnswerOpen && answer &&
                             answer_opens == 1 && answer_closes == 1 && search_opens == 0 &&
                             search_closes == 0 && trim(rest.substr(answer->end)).empty();
    parsed.format_ok = search_form || answer_form;
    return parsed;
}

ParsedAnswer parse_answer(const std::string& raw) {
    const std::string s = trim(raw);
    ParsedAnswer parsed;

    std::string rest = s;
    bool think_ok = true;
    if (s.substr(0, kThinkOpen.size()) == kThinkOpen) {
        const std::size_t close = s.find(kThinkClose);
        if (close != std::string::npos) {
            rest = trim(s.substr(close + kThinkClose.size()));
            think_ok = count_occurrences(s, kThinkOpen) == 1 &&
                       count_occurrences(s, kThinkClose) == 1;
        } else {
            think_ok = false;
        }
    }

    const auto answer = extract_answer(rest);
    if (answer) {
        parsed.text = answer->text;
    } else {
        parsed.text = trim(rest);
    }

    parsed.format_ok = think_ok && answer && answer->begin == 0 &&
                       count_occurrences(rest, kAnswerOpen) == 1 &&
                       count_occurrences(rest, kAnswerClose) == 1 &&
                       count_occurrences(rest, kSearchOpen) == 0 &&
                       trim(rest.substr(answer ? answer->end : 0)).empty();
    return parsed;
}

namespace {

std::string truncate(const std::string& text, int budget) {
    if (budget < 0 || text.size() <= static_cast<std::size_t>(budget)) {
        return text;
    }
    return text.substr(0, static_cast<std::size_t>(budget));
}

std::string render_documents_block(std::span<const ScoredDocument> documents, int budget) {
    if (documents.empty()) {
        return "(no documents)";
    }
    std::vector<std::string> lines;
    lines.reserve(documents.size());
    for (const auto& scored : documents) {
        lines.push_back("- [" + scored.doc.id + "] " + scored.doc.title + ": " +
                        truncate(scored.doc.body, budget));
    }
    return join(lines, "\n");
}

std::string describe_action(const Action& action) {
    if (const auto* search = std::get_if<SearchAction>(&action)) {
        return "search expert=\"" + to_string(search->expert) + "\" query=\"" + search->query +
               "\"";
    }
    if (std::holds_alternative<NoRetrievalAction>(action)) {
        return "no retrieval (NULL)";
    }
    return "answer";
}

std::string render_history(std::span<const ReasoningStep> steps, int budget) {
    if (steps.empty()) {
        return "";
    }
    std::vector<std::string> blocks;
    blocks.reserve(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& step = steps[i];
        std::string block = "Step " + std::to_string(i + 1) + ":\n";
        block += "Reason: " + step.reason + "\n";
        block += "Action: " + describe_action(step.action);
        if (std::holds_alternative<SearchAction>(step.action)) {
            block += "\nDocuments:\n" + render_documents_block(step.observation.documents, budget);
            if (!step.observation.intermediate_answer.empty()) {
                block += "\nIntermediate answer: " + step.observation.intermediate_answer;
            }
        }
        blocks.push_back(std::move(block));
    }
    return join(blocks, "\n");
}

void require_placeholder(const std::string& template_text, const std::string& name,
                         const std::string& which) {
    if (template_text.find("{" + name + "}") == std::string::npos) {
        throw ConfigError(which + " template is missing the {" + name + "} placeholder");
    }
}

}  // namespace

std::string render_step_prompt(const std::string& query, std::span<const ReasoningStep> prior,
                               const PromptTemplate& tmpl) {
    require_placeholder(tmpl.step, "query", "step");
    require_placeholder(tmpl.step, "history", "step");
    return render_prompt(tmpl.step, {{"query", query},
                                     {"history", render_history(prior, tmpl.document_char_budget)}});
}

std::string render_observation_prompt(const std::string& reason, const SearchAction& action,
                                      std::span<const ScoredDocument> documents,
                                      const PromptTemplate& tmpl) {
    require_placeholder(tmpl.observation, "search", "observation");
    require_placeholder(tmpl.observation, "documents", "observation");
    return render_prompt(
        tmpl.observation,
        {{"reason", reason},
         {"expert", to_string(action.expert)},
         {"search", action.query},
         {"documents", render_documents_block(documents, tmpl.document_char_budget)}});
}

std::string render_final_prompt(const std::string& query, std::span<const ReasoningStep> steps,
                                const PromptTemplate& tmpl) {
    require_placeholder(tmpl.final_answer, "query", "final");
    require_placeholder(tmpl.final_answer, "history", "final");
    return render_prompt(tmpl.final_answer,
                         {{"query", query},
                          {"history", render_history(steps, tmpl.document_char_budget)}});
}

Trajectory run_episode(Policy& policy, const ExpertPool& experts, const Query& query,
                       const EpisodeConfig& config, const PromptTemplate& tmpl) {
    validate(config);
    if (!experts.complete()) {
        throw ConfigError("run_episode: all three experts must be present");
    }
    Trajectory trajectory;
    trajectory.query_id = query.id;
    trajectory.query = query.text;
    try {
        int consumed = 0;
        bool go_final = false;
        while (consumed < config.max_steps && !go_final) {
            const auto prompt = render_step_prompt(query.text, trajectory.steps, tmpl);
            const auto response = policy.complete(
                {prompt, config.temperature, 512, false, RequestKind::Action});
            const auto parsed = parse_action(response.text);

            if (const auto* final_answer = std::get_if<FinalAnswerAction>(&parsed.action)) {
                trajectory.answer = final_answer->text;
                return trajectory;
            }

            ReasoningStep step{parsed.reason, parsed.action, {}, parsed.format_ok};
            if (std::holds_alternative<NoRetrievalAction>(parsed.action)) {
                trajectory.steps.push_back(std::move(step));
                if (parsed.format_ok) {
                    go_final = true;  // NULL moves straight to the final answer
                } else {
                    ++consumed;
                }
                continue;
            }

            const auto& search = std::get<SearchAction>(parsed.action);
            if (parsed.format_ok) {
                if (!tokenize(search.query).empty()) {
                    step.observation.documents =
                        retrieve(experts.get(search.expert), search.query, config.top_k);
                }
                if (!step.observation.documents.empty()) {
                    const auto obs_prompt = render_observation_prompt(
                        step.reason, search, step.observation.documents, tmpl);
                    const auto obs_response = policy.complete(
                        {obs_prompt, config.temperature, 512, false,
                         RequestKind::IntermediateAnswer});
                    const auto obs_parsed = parse_answer(obs_response.text);
                    step.observation.intermediate_answer = obs_parsed.text;
                    step.format_ok = step.format_ok && obs_parsed.format_ok;
                }
            }
            trajectory.steps.push_back(std::move(step));
            ++consumed;
        }

        const auto final_prompt = render_final_prompt(query.text, trajectory.steps, tmpl);
        const auto response = policy.complete(
            {final_prompt, config.temperature, 512, false, RequestKind::FinalAnswer});
        trajectory.answer = parse_answer(response.text).text;
        return trajectory;
    } catch (const TransportError& e) {
        throw EpisodeError(std::string("episode failed: ") + e.what(), std::move(trajectory));
    }
}

namespace {

json step_to_json(const ReasoningStep& step) {
    json j;
    j["reason"] = step.reason;
    if (const auto* search = std::get_if<SearchAction>(&step.action)) {
        j["expert"] = to_string(search->expert);
        j["search_query"] = search->query;
    } else if (std::holds_alternative<NoRetrievalAction>(step.action)) {
        j["expert"] = "null";
        j["search_query"] = "";
    } else {
        throw std::invalid_argument("cannot persist a final-answer step");
    }
    json ids = json::array();
    for (const auto& scored : step.observation.documents) {
        ids.push_back(scored.doc.id);
    }
    j["doc_ids"] = std::move(ids);
    j["intermediate_answer"] = step.observation.intermediate_answer;
    j["format_ok"] = step.format_ok;
    return j;
}

ReasoningStep step_from_json(const json& j, const ExpertPool* experts) {
    ReasoningStep step;
    step.reason = j.value("reason", std::string{});
    const std::string expert = j.at("expert").get<std::string>();
    std::optional<ExpertKind> kind;
    if (expert == "null") {
        step.action = NoRetrievalAction{};
    } else {
        kind = parse_expert_kind(expert);
        step.action = SearchAction{*kind, j.at("search_query").get<std::string>()};
    }
    for (const auto& id_json : j.value("doc_ids", json::array())) {
        const std::string id = id_json.get<std::string>();
        ScoredDocument scored;
        if (experts && kind) {
            const Document* doc = experts->find_document(*kind, id);
            if (doc == nullptr) {
                throw ParseError("trajectory references unknown " + expert + " document \"" + id +
                                 "\"");
            }
            scored.doc = *doc;
        } else {
            scored.doc.id = id;
            if (kind) {
                scored.doc.kind = *kind;
            }
        }
        scored.rank = static_cast<int>(step.observation.documents.size()) + 1;
        step.observation.documents.push_back(std::move(scored));
    }
    step.observation.intermediate_answer = j.value("intermediate_answer", std::string{});
    step.format_ok = j.value("format_ok", true);
    return step;
}

}  // namespace

std::string trajectory_to_json_line(const Trajectory& trajectory) {
    json j;
    j["query_id"] = trajectory.query_id;
    j["query"] = trajectory.query;
    json steps = json::array();
    for (const auto& step : trajectory.steps) {
        steps.push_back(step_to_json(step));
    }
    j["steps"] = std::move(steps);
    j["answer"] = trajectory.answer;
    if (trajectory.gold_answer) {
        j["gold_answer"] = *trajectory.gold_answer;
    }
    return j.dump();
}

Trajectory trajectory_from_json_line(const std::string& line, const ExpertPool* experts) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid trajectory record: ") + e.what());
    }
    Trajectory trajectory;
    try {
        trajectory.query_id = j.at("query_id").get<std::string>();
        trajectory.query = j.at("query").get<std::string>();
        for (const auto& step : j.value("steps", json::array())) {
            trajectory.steps.push_back(step_from_json(step, experts));
        }
        trajectory.answer = j.value("answer", std::string{});
        if (j.contains("gold_answer") && !j["gold_answer"].is_null()) {
            trajectory.gold_answer = j["gold_answer"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid trajectory record: ") + e.what());
    }
    return trajectory;
}

void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write trajectory file: " + path.string());
    }
    for (const auto& trajectory : trajectories) {
        out << trajectory_to_json_line(trajectory) << "\n";
    }
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path,
                                          const ExpertPool* experts) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open trajectory file: " + path.string());
    }
    std::vector<Trajectory> trajectories;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            trajectories.push_back(trajectory_from_json_line(line, experts));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return trajectories;
}

}  // namespace remex
