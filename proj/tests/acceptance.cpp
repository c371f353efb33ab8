// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "segplag/eval.hpp"
#include "segplag/synthgen.hpp"
#include "segplag/verdict.hpp"

using namespace segplag;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string recall_text(const SegmentEvalResult &r) {
    std::string s;
    for (std::size_t i = 0; i < r.k_values.size(); ++i) s += fmt("%s@%zu=%.4f", i ? " " : "", r.k_values[i], r.recall[i]);
    return s;
}

Outcome vote_weights() {
    if (vote_weight(1) != 20.0 || vote_weight(20) != 1.0) return {false, "endpoints wrong"};
    for (std::size_t r = 1; r <= 20; ++r) {
        if (vote_weight(r) != static_cast<double>(21 - r)) return {false, fmt("rank %zu gives %g", r, vote_weight(r))};
    }
    return {true, "ranks 1..20"};
}

Outcome oracle_equivalence() {
    std::size_t queries = 0, max_size = 0, ties = 0;
    for (int c = 0; c < 100; ++c) {
        fx::Rng rng(7000 + static_cast<std::uint64_t>(c));
        fx::WorkShape shape;
        shape.bars_max = 29;
        auto works = fx::random_corpus(rng, fx::uniform(rng, 2, 40), "m", shape);
        // duplicates under other ids force score ties across musics
        const auto dupes = works.size() / 4;
        for (std::size_t i = 0; i < dupes; ++i) {
            auto copy = works[i];
            copy.music_id = "d" + copy.music_id;
            works.push_back(copy);
        }
        const SimilarityWeights w{fx::uniform(rng, 0.0, 1.0), fx::uniform(rng, 0.0, 1.0), fx::uniform(rng, 0.05, 1.0)};
        auto index = build_index(works, w);
        while (index.size() > 1000) {
            works.pop_back();
            index = build_index(works, w);
        }
        max_size = std::max(max_size, index.size());
        for (int q = 0; q < 2; ++q) {
            const auto &query = index.entries()[static_cast<std::size_t>(fx::uniform(rng, 0, static_cast<int>(index.size()) - 1))];
            const auto k = static_cast<std::size_t>(fx::uniform(rng, 1, 50));
            std::set<std::string> ex;
            if (fx::coin(rng, 0.5)) ex.insert(query.music_id);
            const auto got = index.query_topk(query, k, MusicSet(ex.begin(), ex.end()));
            const auto want = oracle::topk(index.entries(), query, k, ex, w);
            ++queries;
            if (got.size() != want.size()) return {false, fmt("corpus %d: %zu hits vs %zu", c, got.size(), want.size())};
            for (std::size_t i = 0; i < got.size(); ++i) {
                if (got[i].entry_id != want[i].id || got[i].score != want[i].score) return {false, fmt("corpus %d query %d: rank %zu differs", c, q, i + 1)};
                if (i > 0 && want[i].score == want[i - 1].score) ++ties;
            }
        }
    }
    return {true, fmt("100 corpora, %zu queries, largest index %zu, %zu tied neighbours", queries, max_size, ties)};
}

Outcome planted_copy() {
    const auto corpus = generate_corpus(SynthSpec{});
    const auto seg = run_segment_eval(corpus.works, corpus.annotations, EvalConfig{});
    const auto music = run_music_eval(corpus.works, pairing_from_annotations(corpus.annotations), EvalConfig{});
    const bool ok = seg.recall.front() == 1.0 && music.map == 1.0 && music.mr1 == 1.0;
    return {ok, fmt("%zu queries, Rec.1s@1=%.4f mAP=%.4f MR1=%.4f", seg.query_count, seg.recall.front(), music.map, music.mr1)};
}

Outcome transposition() {
    fx::Rng rng(404);
    fx::WorkShape shape;
    shape.full_chords = true;
    std::size_t segments = 0;
    double worst = 0.0;
    int i = 0;
    while (segments < 200) {
        const auto w = fx::random_work(rng, "t" + std::to_string(i++), shape);
        const auto base = enumerate_downbeat_segments(w);
        const auto take = std::min(base.size(), 200 - segments);
        for (int k = -12; k <= 12; ++k) {
            const auto moved = enumerate_downbeat_segments(fx::transpose_all(w, k));
            for (std::size_t s = 0; s < take; ++s) worst = std::max(worst, std::abs(combined_similarity(base[s], moved[s]).score - 1.0));
        }
        segments += take;
    }
    return {worst <= 1e-9, fmt("200 segments x 25 shifts, max |score-1|=%.3g", worst)};
}

Outcome metric_oracle() {
    fx::Rng rng(505);
    double worst = 0.0;
    for (int c = 0; c < 1000; ++c) {
        const int universe = fx::uniform(rng, 1, 40);
        std::vector<std::string> ids;
        for (int i = 0; i < universe; ++i) ids.push_back("w" + std::to_string(i));
        std::shuffle(ids.begin(), ids.end(), rng);
        std::vector<std::string> ranked(ids.begin(), ids.begin() + fx::uniform(rng, 0, universe));
        std::set<std::string, std::less<>> correct;
        for (int i = fx::uniform(rng, 1, 5); i > 0; --i) correct.insert(ids[static_cast<std::size_t>(fx::uniform(rng, 0, universe - 1))]);
        const auto lib = static_cast<std::size_t>(universe);
        worst = std::max(worst, std::abs(average_precision(ranked, correct) - oracle::average_precision(ranked, correct)));
        worst = std::max(worst, std::abs(mean_rank_first_correct({ranked}, {correct}, lib) - oracle::mr1({ranked}, {correct}, lib)));
    }
    return {worst <= 1e-12, fmt("1000 lists, max deviation %.3g", worst)};
}

Outcome distractors() {
    const auto corpus = generate_corpus(SynthSpec{});
    SynthSpec ds;
    ds.seed = 99;
    ds.n_works = 720;
    ds.n_plants = 0;
    ds.id_prefix = "distractor";
    std::vector<Segment> extra;
    for (const auto &w : generate_corpus(ds).works) {
        for (auto &s : enumerate_downbeat_segments(w)) {
            if (extra.size() < 20000) extra.push_back(std::move(s));
        }
    }
    if (extra.size() != 20000) return {false, fmt("only %zu distractor segments", extra.size())};
    EvalConfig full;
    full.mode = EvalMode::full_indices;
    const auto t0 = std::chrono::steady_clock::now();
    const auto without = run_segment_eval(corpus.works, corpus.annotations, full);
    const auto with = run_segment_eval(corpus.works, corpus.annotations, full, extra);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = true;
    for (std::size_t i = 0; i < with.recall.size(); ++i) ok = ok && with.recall[i] <= without.recall[i];
    std::size_t largest = 0;
    for (auto n : with.index_sizes) largest = std::max(largest, n);
    return {ok, fmt("without [%s] with [%s], largest fold index %zu, %.1fs", recall_text(without).c_str(), recall_text(with).c_str(), largest, secs)};
}

Retriever brute_force() {
    return [](const SegmentIndex &index, const Segment &q, std::size_t k, const MusicSet &exclude) {
        std::vector<RetrievalHit> out;
        for (const auto &h : oracle::topk(index.entries(), q, k, std::set<std::string>(exclude.begin(), exclude.end()), index.weights())) {
            RetrievalHit r;
            r.entry_id = h.id;
            r.music_id = h.music;
            r.start_sec = h.start;
            r.score = h.score;
            r.rank = out.size() + 1;
            out.push_back(r);
        }
        return out;
    };
}

Outcome robustness() {
    std::string curve;
    double previous = 2.0;
    bool monotone = true, floor = true;
    for (double p : {0.0, 0.1, 0.2, 0.3, 0.5, 0.7}) {
        const bool asserted = p < 0.4;
        SynthSpec spec;
        spec.plant = PlantKind::perturbed;
        spec.deletion_p = p;
        const auto corpus = generate_corpus(spec);
        const auto r = run_segment_eval(corpus.works, corpus.annotations, EvalConfig{});
        EvalConfig full;
        full.mode = EvalMode::full_indices;
        const auto f = run_segment_eval(corpus.works, corpus.annotations, full);
        curve += fmt("; p=%.1f timestamps [%s] full [%s]", p, recall_text(r).c_str(), recall_text(f).c_str());
        if (!asserted) curve += " (reported only)";
        if (asserted) monotone = monotone && r.recall.back() <= previous;
        previous = r.recall.back();
        if (p == 0.1) {
            const auto b = run_segment_eval(corpus.works, corpus.annotations, EvalConfig{}, {}, brute_force());
            floor = r.recall.back() >= b.recall.back();
            curve += fmt(" brute force @10=%.4f", b.recall.back());
        }
    }
    return {monotone && floor, "Rec.1s" + curve};
}

std::string corpus_bytes(const std::vector<MusicWork> &works) {
    std::ostringstream os;
    write_corpus(os, works);
    return os.str();
}

std::string annotation_bytes(const std::vector<AnnotationRow> &rows) {
    std::ostringstream os;
    write_annotations(os, rows);
    return os.str();
}

Outcome round_trips() {
    for (int c = 0; c < 20; ++c) {
        fx::Rng rng(808 + static_cast<std::uint64_t>(c));
        SynthSpec spec;
        spec.seed = rng();
        spec.n_works = fx::uniform(rng, 2, 10);
        spec.n_plants = fx::uniform(rng, 1, spec.n_works / 2);
        spec.passages_per_plant = fx::uniform(rng, 1, 4);
        spec.plant = static_cast<PlantKind>(fx::uniform(rng, 0, 5));
        auto works = generate_corpus(spec);
        auto random = fx::random_corpus(rng, fx::uniform(rng, 1, 6), "r");
        works.works.insert(works.works.end(), random.begin(), random.end());

        const auto first = corpus_bytes(works.works);
        std::istringstream cin(first);
        if (corpus_bytes(read_corpus(cin)) != first) return {false, fmt("corpus instance %d", c)};

        const auto afirst = annotation_bytes(works.annotations);
        std::istringstream ain(afirst);
        if (annotation_bytes(read_annotations(ain)) != afirst) return {false, fmt("annotation instance %d", c)};

        const auto ifirst = serialize_index(build_index(works.works));
        if (serialize_index(deserialize_index(ifirst)) != ifirst) return {false, fmt("index instance %d", c)};
    }
    return {true, "20 instances of each format"};
}

Outcome attribution() {
    const std::pair<PlantKind, FacetLabel> cases[] = {
        {PlantKind::chord_only, FacetLabel::chord}, {PlantKind::rhythm_only, FacetLabel::rhythm}, {PlantKind::melody_only, FacetLabel::melody}};
    bool ok = true;
    std::string detail;
    for (const auto &[kind, expected] : cases) {
        std::size_t plants = 0, plant_hits = 0, passages = 0, passage_hits = 0;
        for (std::uint64_t seed = 1; plants < 100; ++seed) {
            SynthSpec spec;
            spec.seed = seed;
            spec.plant = kind;
            const auto corpus = generate_corpus(spec);
            std::map<std::string, const MusicWork *> by_id;
            for (const auto &w : corpus.works) by_id[w.music_id] = &w;
            for (const auto &row : corpus.annotations) {
                if (plants == 100) break;
                const auto &a = *by_id.at(row.original_id);
                const auto &b = *by_id.at(row.comparison_id);
                std::size_t right = 0;
                for (std::size_t i = 0; i < row.original_times_sec.size(); ++i) {
                    const auto qa = segment_at(a, *snap_to_window_start(a, row.original_times_sec[i]));
                    const auto qb = segment_at(b, *snap_to_window_start(b, row.comparison_times_sec[i]));
                    right += attribute_dominant_facet(qa, qb, combined_similarity(qa, qb).facets) == expected;
                }
                ++plants;
                passages += row.original_times_sec.size();
                passage_hits += right;
                plant_hits += 2 * right > row.original_times_sec.size();
            }
        }
        const double rate = static_cast<double>(plant_hits) / static_cast<double>(plants);
        ok = ok && rate >= 0.95;
        detail += fmt("%s%s %zu/%zu plants (%zu/%zu passages)", detail.empty() ? "" : ", ", std::string(to_string(kind)).c_str(), plant_hits,
                      plants, passage_hits, passages);
    }
    return {ok, detail};
}

}  // namespace

int main() {
    const std::pair<const char *, std::function<Outcome()>> criteria[] = {
        {"vote weights", vote_weights},
        {"retrieval equals brute force", oracle_equivalence},
        {"planted exact copies", planted_copy},
        {"transposition invariance", transposition},
        {"metric reference", metric_oracle},
        {"distractors never raise recall", distractors},
        {"robustness to note deletion", robustness},
        {"format round trips", round_trips},
        {"facet attribution", attribution},
    };
    int failures = 0, n = 0;
    for (const auto &[name, run] : criteria) {
        ++n;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << n << " " << name << " (" << fmt("%.1fs", secs) << "): " << o.detail << std::endl;
    }
    std::cout << (failures ? fmt("%d of %d criteria failed", failures, n) : fmt("all %d criteria passed", n)) << std::endl;
    return failures ? 1 : 0;
}
