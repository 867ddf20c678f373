#include "remex/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "remex/rewards.hpp"
#include "remex/text.hpp"

namespace remex {

using nlohmann::json;

std::vector<EvalItem> load_eval_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset file: " + path.string());
    }
    std::vector<EvalItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON record: " +
                             e.what());
        }
        EvalItem item;
        try {
            item.query.id = j.at("query_id").get<std::string>();
            item.query.text = j.at("query").get<std::string>();
            item.gold_answer = j.at("gold_answer").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (tokenize(item.gold_answer).empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": gold_answer has no tokens");
        }
        if (j.contains("gold_modality") && !j["gold_modality"].is_null()) {
            item.gold_modality = parse_expert_kind(j["gold_modality"].get<std::string>());
        }
        items.push_back(std::move(item));
    }
    if (items.empty()) {
        throw ParseError("empty dataset file: " + path.string());
    }
    return items;
}

std::string ExpertStepHistogram::to_table() const {
    std::string out = "step\ttext\timage\ttable\tnull\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out += std::to_string(i + 1) + "\t" + std::to_string(rows[i].text) + "\t" +
               std::to_string(rows[i].image) + "\t" + std::to_string(rows[i].table) + "\t" +
               std::to_string(rows[i].null_action) + "\n";
    }
    return out;
}

ExpertStepHistogram expert_distribution(const std::vector<Trajectory>& trajectories) {
    ExpertStepHistogram histogram;
    for (const auto& trajectory : trajectories) {
        if (trajectory.steps.size() > histogram.rows.size()) {
            histogram.rows.resize(trajectory.steps.size());
        }
        for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
            auto& row = histogram.rows[t];
            if (const auto* search = std::get_if<SearchAction>(&trajectory.steps[t].action)) {
                switch (search->expert) {
                    case ExpertKind::Text:
                        ++row.text;
                        break;
                    case ExpertKind::Image:
                        ++row.image;
                        break;
                    case ExpertKind::Table:
                        ++row.table;
                        break;
                }
            } else {
                ++row.null_action;
            }
        }
    }
    return histogram;
}

namespace {

EvalQueryRecord score_trajectory(const EvalItem& item, const Trajectory& trajectory) {
    EvalQueryRecord record;
    record.query_id = item.query.id;
    record.f1_recall = f1_recall(trajectory.answer, item.gold_answer);
    record.accuracy = accuracy(trajectory.answer, item.gold_answer);
    record.steps_used = retrieval_step_count(trajectory);
    for (const auto& step : trajectory.steps) {
        if (const auto* search = std::get_if<SearchAction>(&step.action)) {
            record.experts_used.push_back(search->expert);
        }
    }
    return record;
}

}  // namespace

void recompute_aggregates(EvalReport& report) {
    if (report.records.empty()) {
        report.mean_f1_recall = 0.0;
        report.mean_accuracy = 0.0;
        report.mean_steps = 0.0;
        return;
    }
    // Sum in query-id order so aggregates do not depend on dataset order.
    std::vector<const EvalQueryRecord*> ordered;
    ordered.reserve(report.records.size());
    for (const auto& record : report.records) {
        ordered.push_back(&record);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const EvalQueryRecord* a, const EvalQueryRecord* b) {
                  return a->query_id < b->query_id;
              });
    double f1_sum = 0.0;
    double accuracy_sum = 0.0;
    double steps_sum = 0.0;
    for (const auto* record : ordered) {
        f1_sum += record->f1_recall;
        accuracy_sum += record->accuracy;
        steps_sum += record->steps_used;
    }
    const double n = static_cast<double>(report.records.size());
    report.mean_f1_recall = f1_sum / n;
    report.mean_accuracy = accuracy_sum / n;
    report.mean_steps = steps_sum / n;
}

EvalReport evaluate(const std::vector<EvalItem>& dataset, const PolicyFactory& policies,
                    const ExpertPool& experts, const EpisodeConfig& config, int jobs,
                    const PromptTemplate& tmpl, const std::string& dataset_id) {
    if (dataset.empty()) {
        throw std::invalid_argument("evaluate: dataset must not be empty");
    }
    if (!experts.complete()) {
        throw ConfigError("evaluate: all three experts must be present");
    }
    EvalReport report;
    report.dataset_id = dataset_id;
    report.records.resize(dataset.size());
    std::vector<Trajectory> trajectories(dataset.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t index = next.fetch_add(1);
            if (index >= dataset.size()) {
                return;
            }
            const EvalItem& item = dataset[index];
            try {
                auto policy = policies(index);
                Trajectory trajectory = run_episode(*policy, experts, item.query, config, tmpl);
                report.records[index] = score_trajectory(item, trajectory);
                trajectories[index] = std::move(trajectory);
            } catch (const EpisodeError& e) {
                EvalQueryRecord record;
                record.query_id = item.query.id;
                record.error_note = e.what();
                record.steps_used = retrieval_step_count(e.partial_trajectory());
                report.records[index] = std::move(record);
                trajectories[index] = e.partial_trajectory();
            } catch (const Error& e) {
                EvalQueryRecord record;
                record.query_id = item.query.id;
                record.error_note = e.what();
                report.records[index] = std::move(record);
                trajectories[index].query_id = item.query.id;
            }
        }
    };

    const int thread_count = std::max(1, std::min<int>(jobs, static_cast<int>(dataset.size())));
    if (thread_count == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(thread_count);
        for (int i = 0; i < thread_count; ++i) {
            threads.emplace_back(worker);
        }
        for (auto& thread : threads) {
            thread.join();
        }
    }

    recompute_aggregates(report);
    report.histogram = expert_distribution(trajectories);
    return report;
}

namespace {

json record_to_json(const EvalQueryRecord& record) {
    json experts = json::array();
    for (ExpertKind kind : record.experts_used) {
        experts.push_back(to_string(kind));
    }
    json j{{"query_id", record.query_id}, {"f1_recall", record.f1_recall},
           {"accuracy", record.accuracy}, {"steps_used", record.steps_used},
           {"experts_used", std::move(experts)}};
    if (!record.error_note.empty()) {
        j["error_note"] = record.error_note;
    }
    return j;
}

EvalQueryRecord record_from_json(const json& j) {
    EvalQueryRecord record;
    record.query_id = j.at("query_id").get<std::string>();
    record.f1_recall = j.at("f1_recall").get<double>();
    record.accuracy = j.at("accuracy").get<double>();
    record.steps_used = j.at("steps_used").get<int>();
    for (const auto& kind : j.value("experts_used", json::array())) {
        record.experts_used.push_back(parse_expert_kind(kind.get<std::string>()));
    }
    record.error_note = j.value("error_note", std::string{});
    return record;
}

json histogram_to_json(const ExpertStepHistogram& histogram) {
    json rows = json::array();
    for (std::size_t i = 0; i < histogram.rows.size(); ++i) {
        const auto& row = histogram.rows[i];
        rows.push_back(json{{"step", i + 1},
                            {"text", row.text},
                            {"image", row.image},
                            {"table", row.table},
                            {"null", row.null_action}});
    }
    return rows;
}

}  // namespace

void save_eval_report(const EvalReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream records(dir / "records.jsonl");
    if (!records) {
        throw ConfigError("cannot write eval records to " + dir.string());
    }
    for (const auto& record : report.records) {
        records << record_to_json(record).dump() << "\n";
    }
    json summary{{"dataset_id", report.dataset_id},
                 {"mean_f1_recall", report.mean_f1_recall},
                 {"mean_accuracy", report.mean_accuracy},
                 {"mean_steps", report.mean_steps},
                 {"queries", report.records.size()},
                 {"expert_histogram", histogram_to_json(report.histogram)}};
    std::ofstream summary_out(dir / "summary.json");
    if (!summary_out) {
        throw ConfigError("cannot write eval summary to " + dir.string());
    }
    summary_out << summary.dump(2) << "\n";
}

EvalReport load_eval_report(const std::filesystem::path& dir) {
    EvalReport report;
    std::ifstream records(dir / "records.jsonl");
    if (!records) {
        throw ConfigError("cannot open eval records in " + dir.string());
    }
    std::string line;
    while (std::getline(records, line)) {
        if (trim(line).empty()) {
            continue;
        }
        try {
            report.records.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid eval record: ") + e.what());
        }
    }
    std::ifstream summary_in(dir / "summary.json");
    if (!summary_in) {
        throw ConfigError("cannot open eval summary in " + dir.string());
    }
    try {
        json summary;
        summary_in >> summary;
        report.dataset_id = summary.value("dataset_id", std::string{});
        report.mean_f1_recall = summary.at("mean_f1_recall").get<double>();
        report.mean_accuracy = summary.at("mean_accuracy").get<double>();
        report.mean_steps = summary.at("mean_steps").get<double>();
        for (const auto& row : summary.value("expert_histogram", json::array())) {
            ExpertStepHistogram::Row r;
            r.text = row.at("text").get<std::int64_t>();
            r.image = row.at("image").get<std::int64_t>();
            r.table = row.at("table").get<std::int64_t>();
            r.null_action = row.at("null").get<std::int64_t>();
            report.histogram.rows.push_back(r);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid eval summary: ") + e.what());
    }
    return report;
}

}  // namespace remex
