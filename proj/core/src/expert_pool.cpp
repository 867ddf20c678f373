#include "remex/expert_pool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "remex/errors.hpp"
#include "remex/text.hpp"

namespace remex {

using nlohmann::json;

std::string to_string(ExpertKind kind) {
    switch (kind) {
        case ExpertKind::Text:
            return "text";
        case ExpertKind::Image:
            return "image";
        case ExpertKind::Table:
            return "table";
    }
    return "text";
}

std::optional<ExpertKind> try_parse_expert_kind(const std::string& name) {
    if (name == "text") return ExpertKind::Text;
    if (name == "image") return ExpertKind::Image;
    if (name == "table") return ExpertKind::Table;
    return std::nullopt;
}

ExpertKind parse_expert_kind(const std::string& name) {
    if (auto kind = try_parse_expert_kind(name)) {
        return *kind;
    }
    throw ParseError("unknown expert kind \"" + name + "\" (expected text, image, or table)");
}

double bm25_idf(int doc_count, int doc_frequency) {
    return std::log(1.0 + (doc_count - doc_frequency + 0.5) / (doc_frequency + 0.5));
}

double bm25_term_score(double idf, int term_frequency, int doc_length, double avg_doc_length) {
    const double tf = static_cast<double>(term_frequency);
    const double norm = 1.0 - kBm25B + kBm25B * doc_length / avg_doc_length;
    return idf * tf * (kBm25K1 + 1.0) / (tf + kBm25K1 * norm);
}

namespace {

std::string escape_cell(const std::string& cell) {
    std::string out;
    out.reserve(cell.size());
    for (char c : cell) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '|') {
            out += "\\|";
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string sanitize_title(const std::string& title) {
    std::string out = title;
    for (char& c : out) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return out;
}

}  // namespace

std::string serialize_table(const TableGrid& grid, const std::string& title) {
    if (grid.header.empty()) {
        throw std::invalid_argument("serialize_table: header must not be empty");
    }
    std::vector<std::string> lines;
    lines.push_back(sanitize_title(title));
    for (std::size_t r = 0; r < grid.rows.size(); ++r) {
        const auto& row = grid.rows[r];
        if (row.size() != grid.header.size()) {
            throw std::invalid_argument("serialize_table: row " + std::to_string(r) + " has " +
                                        std::to_string(row.size()) + " cells, expected " +
                                        std::to_string(grid.header.size()));
        }
        std::vector<std::string> cells;
        cells.reserve(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) {
            cells.push_back(escape_cell(grid.header[c]) + ": " + escape_cell(row[c]));
        }
        lines.push_back(join(cells, " | "));
    }
    return join(lines, "\n");
}

namespace {

std::string cell_to_string(const json& value) {
    if (value.is_string()) {
        return value.get<std::string>();
    }
    return value.dump();
}

TableGrid parse_grid(const json& record, int line_no) {
    TableGrid grid;
    if (!record.contains("header") || !record["header"].is_array()) {
        throw ParseError("line " + std::to_string(line_no) + ": table record needs a header array");
    }
    for (const auto& cell : record["header"]) {
        grid.header.push_back(cell_to_string(cell));
    }
    if (!record.contains("rows") || !record["rows"].is_array()) {
        throw ParseError("line " + std::to_string(line_no) + ": table record needs a rows array");
    }
    for (const auto& row : record["rows"]) {
        if (!row.is_array()) {
            throw ParseError("line " + std::to_string(line_no) + ": table row must be an array");
        }
        std::vector<std::string> cells;
        for (const auto& cell : row) {
            cells.push_back(cell_to_string(cell));
        }
        grid.rows.push_back(std::move(cells));
    }
    return grid;
}

}  // namespace

Corpus ingest_corpus(const std::filesystem::path& path, ExpertKind kind) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open corpus file: " + path.string());
    }
    Corpus corpus;
    corpus.kind = kind;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON record: " +
                             e.what());
        }
        if (!record.is_object() || !record.contains("id") || !record["id"].is_string() ||
            record["id"].get<std::string>().empty()) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": record needs a non-empty string id");
        }
        Document doc;
        doc.id = record["id"].get<std::string>();
        if (!seen_ids.insert(doc.id).second) {
            throw ParseError("duplicate document id \"" + doc.id + "\" at line " +
                             std::to_string(line_no));
        }
        doc.kind = kind;
        doc.title = record.value("title", std::string{});
        doc.source_ref = record.value("source_ref", std::string{});
        if (kind == ExpertKind::Table) {
            TableGrid grid = parse_grid(record, line_no);
            try {
                doc.body = serialize_table(grid, doc.title);
            } catch (const std::invalid_argument& e) {
                throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
            }
            doc.grid = std::move(grid);
        } else {
            if (!record.contains("body") || !record["body"].is_string()) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": record needs a string body");
            }
            doc.body = record["body"].get<std::string>();
            if (kind == ExpertKind::Image) {
                doc.image_ref = record.value("image_ref", std::string{});
            }
        }
        if (tokenize(doc.body).empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": document \"" + doc.id +
                             "\" has an empty body after normalization");
        }
        corpus.documents.push_back(std::move(doc));
    }
    if (corpus.documents.empty()) {
        throw ParseError("empty corpus file: " + path.string());
    }
    return corpus;
}

ExpertIndex build_index(const Corpus& corpus) {
    if (corpus.documents.empty()) {
        throw std::invalid_argument("build_index: corpus must not be empty");
    }
    ExpertIndex index;
    index.kind = corpus.kind;
    for (const auto& doc : corpus.documents) {
        if (doc.kind != corpus.kind) {
            throw std::invalid_argument("build_index: document \"" + doc.id +
                                        "\" does not match the corpus kind");
        }
        const auto tokens = tokenize(doc.body);
        if (tokens.empty()) {
            throw std::invalid_argument("build_index: document \"" + doc.id +
                                        "\" has an empty body after normalization");
        }
        std::unordered_map<std::string, int> counts;
        for (const auto& token : tokens) {
            ++counts[token];
        }
        for (const auto& [term, tf] : counts) {
            index.postings[term].push_back({doc.id, tf});
        }
        index.doc_lengths[doc.id] = static_cast<int>(tokens.size());
        index.documents[doc.id] = doc;
    }
    for (auto& [term, postings] : index.postings) {
        std::sort(postings.begin(), postings.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    }
    index.doc_count = static_cast<int>(index.doc_lengths.size());
    double total_length = 0.0;
    for (const auto& [id, length] : index.doc_lengths) {
        total_length += length;
    }
    index.avg_doc_length = total_length / index.doc_count;
    return index;
}

std::vector<ScoredDocument> retrieve(const ExpertIndex& index, const std::string& query, int k) {
    if (k < 1) {
        throw std::invalid_argument("retrieve: k must be >= 1");
    }
    const auto terms = tokenize(query);
    if (terms.empty()) {
        throw std::invalid_argument("retrieve: query has no searchable terms");
    }
    // Unique terms in first-occurrence order so that per-document score
    // accumulation is deterministic.
    std::vector<std::string> unique_terms;
    std::unordered_set<std::string> seen;
    for (const auto& term : terms) {
        if (seen.insert(term).second) {
            unique_terms.push_back(term);
        }
    }
    std::unordered_map<std::string, double> scores;
    for (const auto& term : unique_terms) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) {
            continue;
        }
        const double idf = bm25_idf(index.doc_count, static_cast<int>(it->second.size()));
        for (const auto& posting : it->second) {
            const int doc_length = index.doc_lengths.at(posting.doc_id);
            scores[posting.doc_id] +=
                bm25_term_score(idf, posting.term_frequency, doc_length, index.avg_doc_length);
        }
    }
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(scores.size());
    for (const auto& [id, score] : scores) {
        if (score > 0.0) {
            ranked.emplace_back(id, score);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    const std::size_t keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
    std::vector<ScoredDocument> results;
    results.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        results.push_back(
            {index.documents.at(ranked[i].first), ranked[i].second, static_cast<int>(i + 1)});
    }
    return results;
}

namespace {

json document_to_json(const Document& doc) {
    json j{{"id", doc.id}, {"title", doc.title}, {"body", doc.body}};
    if (!doc.source_ref.empty()) {
        j["source_ref"] = doc.source_ref;
    }
    if (!doc.image_ref.empty()) {
        j["image_ref"] = doc.image_ref;
    }
    if (doc.grid) {
        j["header"] = doc.grid->header;
        j["rows"] = doc.grid->rows;
    }
    return j;
}

Document document_from_json(const json& j, ExpertKind kind) {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.kind = kind;
    doc.title = j.value("title", std::string{});
    doc.body = j.at("body").get<std::string>();
    doc.source_ref = j.value("source_ref", std::string{});
    doc.image_ref = j.value("image_ref", std::string{});
    if (j.contains("header")) {
        TableGrid grid;
        grid.header = j.at("header").get<std::vector<std::string>>();
        grid.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
        doc.grid = std::move(grid);
    }
    return doc;
}

}  // namespace

void save_index(const ExpertIndex& index, const std::filesystem::path& path) {
    json docs = json::array();
    for (const auto& [id, doc] : index.documents) {
        docs.push_back(document_to_json(doc));
    }
    json j{{"kind", to_string(index.kind)}, {"documents", std::move(docs)}};
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write index file: " + path.string());
    }
    out << j.dump() << "\n";
}

ExpertIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open index file: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("invalid index file " + path.string() + ": " + e.what());
    }
    Corpus corpus;
    try {
        corpus.kind = parse_expert_kind(j.at("kind").get<std::string>());
        for (const auto& doc : j.at("documents")) {
            corpus.documents.push_back(document_from_json(doc, corpus.kind));
        }
    } catch (const json::exception& e) {
        throw ParseError("invalid index file " + path.string() + ": " + e.what());
    }
    return build_index(corpus);
}

void ExpertPool::add(ExpertIndex index) {
    indexes_[index.kind] = std::move(index);
}

bool ExpertPool::has(ExpertKind kind) const {
    return indexes_.count(kind) > 0;
}

bool ExpertPool::complete() const {
    return indexes_.size() == 3;
}

const ExpertIndex& ExpertPool::get(ExpertKind kind) const {
    auto it = indexes_.find(kind);
    if (it == indexes_.end()) {
        throw ConfigError("expert pool has no " + to_string(kind) + " expert");
    }
    return it->second;
}

const Document* ExpertPool::find_document(ExpertKind kind, const std::string& id) const {
    auto it = indexes_.find(kind);
    if (it == indexes_.end()) {
        return nullptr;
    }
    auto doc = it->second.documents.find(id);
    return doc == it->second.documents.end() ? nullptr : &doc->second;
}

std::string index_file_name(ExpertKind kind) {
    return to_string(kind) + ".idx.json";
}

ExpertPool ExpertPool::load_directory(const std::filesystem::path& dir) {
    ExpertPool pool;
    for (ExpertKind kind : kAllExpertKinds) {
        const auto path = dir / index_file_name(kind);
        if (!std::filesystem::exists(path)) {
            throw ConfigError("missing index file: " + path.string());
        }
        pool.add(load_index(path));
    }
    return pool;
}

}  // namespace remex
