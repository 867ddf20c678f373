#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "remex/expert_pool.hpp"

namespace {

remex::Corpus make_corpus(int doc_count, int doc_length, std::uint64_t seed) {
    static const std::vector<std::string> lexicon = {
        "alpha", "beta", "gamma", "delta", "epsilon", "zeta",  "eta",   "theta",
        "iota",  "kappa", "lumen", "margin", "nadir",  "ocean", "prism", "quartz",
    };
    std::mt19937_64 rng(seed);
    remex::Corpus corpus;
    corpus.kind = remex::ExpertKind::Text;
    for (int d = 0; d < doc_count; ++d) {
        remex::Document doc;
        doc.id = "doc" + std::to_string(d);
        doc.kind = remex::ExpertKind::Text;
        for (int t = 0; t < doc_length; ++t) {
            doc.body += lexicon[rng() % lexicon.size()] + " ";
        }
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

void BM_BuildIndex(benchmark::State& state) {
    const auto corpus = make_corpus(static_cast<int>(state.range(0)), 40, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(remex::build_index(corpus));
    }
}
BENCHMARK(BM_BuildIndex)->Arg(100)->Arg(1000);

void BM_Retrieve(benchmark::State& state) {
    const auto corpus = make_corpus(static_cast<int>(state.range(0)), 40, 2);
    const auto index = remex::build_index(corpus);
    for (auto _ : state) {
        benchmark::DoNotOptimize(remex::retrieve(index, "alpha ocean prism", 5));
    }
}
BENCHMARK(BM_Retrieve)->Arg(100)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
