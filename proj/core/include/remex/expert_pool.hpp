#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace remex {

/// The three modality-specific retrieval experts.
enum class ExpertKind { Text, Image, Table };

std::string to_string(ExpertKind kind);
ExpertKind parse_expert_kind(const std::string& name);  // throws ParseError
std::optional<ExpertKind> try_parse_expert_kind(const std::string& name);

inline constexpr ExpertKind kAllExpertKinds[] = {ExpertKind::Text, ExpertKind::Image,
                                                 ExpertKind::Table};

struct TableGrid {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// One retrieval unit. For the image expert the body is the caption text and
/// image_ref carries the opaque image payload reference; for the table expert
/// the body is the linearized table and grid keeps the raw cells.
struct Document {
    std::string id;
    ExpertKind kind = ExpertKind::Text;
    std::string title;
    std::string body;
    std::string source_ref;
    std::string image_ref;
    std::optional<TableGrid> grid;
};

struct Corpus {
    ExpertKind kind = ExpertKind::Text;
    std::vector<Document> documents;
};

struct Posting {
    std::string doc_id;
    int term_frequency = 0;
};

/// Immutable inverted index over one modality corpus. Safe to share across
/// concurrent episode runners once built.
struct ExpertIndex {
    ExpertKind kind = ExpertKind::Text;
    std::map<std::string, std::vector<Posting>> postings;  // term -> postings by doc id
    std::map<std::string, int> doc_lengths;                // doc id -> token count
    double avg_doc_length = 0.0;
    int doc_count = 0;
    std::map<std::string, Document> documents;
};

struct ScoredDocument {
    Document doc;
    double score = 0.0;
    int rank = 0;  // 1-based
};

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

/// Okapi BM25 with the smoothed, strictly positive idf variant:
/// idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
double bm25_idf(int doc_count, int doc_frequency);
double bm25_term_score(double idf, int term_frequency, int doc_length, double avg_doc_length);

/// Linearizes a table as: title line, then one "col: cell | col: cell" line
/// per row. "\" and "|" inside header names and cells are escaped as "\\"
/// and "\|"; newlines in the title collapse to spaces.
std::string serialize_table(const TableGrid& grid, const std::string& title);

/// Loads a line-delimited JSON corpus file. Records: {id, title, body} for
/// text, plus image_ref for image, and {id, title, header, rows} for table.
/// Throws ParseError naming the offending line or duplicate id.
Corpus ingest_corpus(const std::filesystem::path& path, ExpertKind kind);

/// Builds the inverted index. Input order does not matter: postings are
/// keyed and sorted by term and doc id.
ExpertIndex build_index(const Corpus& corpus);

/// Top-min(k, doc_count) documents by BM25, zero scores excluded, ties broken
/// by lexicographic doc id. Throws if the query has no searchable terms or
/// k < 1.
std::vector<ScoredDocument> retrieve(const ExpertIndex& index, const std::string& query, int k);

/// Index persistence: a canonical corpus snapshot; load re-validates and
/// rebuilds, which is equivalent because index construction is
/// order-independent.
void save_index(const ExpertIndex& index, const std::filesystem::path& path);
ExpertIndex load_index(const std::filesystem::path& path);

/// All three experts keyed by modality.
class ExpertPool {
  public:
    ExpertPool() = default;

    void add(ExpertIndex index);
    bool has(ExpertKind kind) const;
    bool complete() const;  // all three experts present
    const ExpertIndex& get(ExpertKind kind) const;
    const Document* find_document(ExpertKind kind, const std::string& id) const;

    /// Loads text.idx.json / image.idx.json / table.idx.json from a directory.
    static ExpertPool load_directory(const std::filesystem::path& dir);

  private:
    std::map<ExpertKind, ExpertIndex> indexes_;
};

/// Index file name used by the CLI for each expert, e.g. "text.idx.json".
std::string index_file_name(ExpertKind kind);

}  // namespace remex
