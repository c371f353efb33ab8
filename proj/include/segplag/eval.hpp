#pragma once

// Evaluation protocol: Rec.1s@k for segment retrieval, mAP and MR1 for music-level rankings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "segplag/corpus.hpp"
#include "segplag/error.hpp"
#include "segplag/index.hpp"
#include "segplag/segmenter.hpp"
#include "segplag/similarity.hpp"
#include "segplag/verdict.hpp"

namespace segplag {

enum class EvalMode : std::uint8_t {
    smp_timestamps,    ///< library = annotated comparison passages only
    smp_all_segments,  ///< library = every downbeat segment of the fold's comparison works
    full_indices,      ///< smp_all_segments plus every segment of a distractor corpus
};

inline std::string_view to_string(EvalMode m) {
    switch (m) {
        case EvalMode::smp_timestamps: return "smp_timestamps";
        case EvalMode::smp_all_segments: return "smp_all_segments";
        case EvalMode::full_indices: return "full_indices";
    }
    return "smp_timestamps";
}

inline std::string_view display_name(EvalMode m) {
    switch (m) {
        case EvalMode::smp_timestamps: return "SMP Timestamps";
        case EvalMode::smp_all_segments: return "SMP";
        case EvalMode::full_indices: return "Full Indices";
    }
    return "SMP Timestamps";
}

inline EvalMode eval_mode_from_string(std::string_view s) {
    const auto l = detail::lower(s);
    if (l == "smp_timestamps" || l == "timestamps") return EvalMode::smp_timestamps;
    if (l == "smp_all_segments" || l == "smp") return EvalMode::smp_all_segments;
    if (l == "full_indices" || l == "full") return EvalMode::full_indices;
    throw ConfigError("unknown eval mode '" + std::string(s) + "'");
}

struct EvalConfig {
    EvalMode mode = EvalMode::smp_timestamps;
    std::vector<std::size_t> k_values = {1, 5, 10};
    double temporal_tolerance_sec = 1.0;
    int folds = 5;
    std::uint64_t fold_seed = 0;
    GridParams grid;
    SimilarityWeights weights;

    void validate() const {
        if (!(temporal_tolerance_sec > 0.0)) throw ConfigError("temporal tolerance must be > 0");
        if (k_values.empty()) throw ConfigError("at least one k value required");
        for (std::size_t i = 0; i < k_values.size(); ++i) {
            if (k_values[i] < 1) throw ConfigError("k values must be >= 1");
            if (i > 0 && k_values[i] <= k_values[i - 1]) throw ConfigError("k values must be strictly ascending");
        }
        if (folds < 1) throw ConfigError("folds must be >= 1");
        (void)weights.normalized();
    }
};

/// Ground truth for one segment query: the paired compare time of the same acoustic index.
struct SegmentTruth {
    std::string music_id;
    double time_sec = 0.0;
    std::int64_t acoustic_index = 0;
};

/// True iff a hit ranked <= k belongs to the truth's music and starts within `tolerance` seconds
/// of the annotated compare time.
inline bool recall_1s_at_k(const std::vector<RetrievalHit> &hits, const SegmentTruth &truth, std::size_t k, double tolerance = 1.0) {
    return std::any_of(hits.begin(), hits.end(), [&](const RetrievalHit &h) {
        return h.rank <= k && h.music_id == truth.music_id && std::abs(h.start_sec - truth.time_sec) <= tolerance;
    });
}

/// Rank of the first correct hit within tolerance; 0 when none.
inline std::size_t first_correct_rank(const std::vector<RetrievalHit> &hits, const SegmentTruth &truth, double tolerance) {
    for (const auto &h : hits) {
        if (h.music_id == truth.music_id && std::abs(h.start_sec - truth.time_sec) <= tolerance) return h.rank;
    }
    return 0;
}

struct SegmentQueryRecord {
    int fold = 0;
    std::int64_t pair_id = 0;
    std::int64_t acoustic_index = 0;
    std::string query_music_id;
    double annotated_time_sec = 0.0;
    double snapped_time_sec = 0.0;  ///< NaN when the work has no window to snap to
    SegmentTruth truth;
    std::size_t first_correct = 0;
};

struct SegmentEvalResult {
    EvalMode mode = EvalMode::smp_timestamps;
    std::vector<std::size_t> k_values;
    std::vector<double> recall;
    std::size_t query_count = 0;
    std::vector<std::size_t> index_sizes;  ///< per evaluated fold
    std::vector<SegmentQueryRecord> queries;
};

/// Retrieval backend used by the evaluation; defaults to SegmentIndex::query_topk.
using Retriever = std::function<std::vector<RetrievalHit>(const SegmentIndex &, const Segment &, std::size_t, const MusicSet &)>;

inline Retriever default_retriever() {
    return [](const SegmentIndex &index, const Segment &q, std::size_t k, const MusicSet &exclude) { return index.query_topk(q, k, exclude); };
}

/// Fold of every annotation row. Pair ids are shuffled with `seed` and dealt round-robin; rows
/// sharing a comparison work all follow the fold of the first such row, so every comparison work
/// lands in exactly one fold.
inline std::vector<int> assign_folds(const std::vector<AnnotationRow> &rows, int folds, std::uint64_t seed) {
    if (folds < 1) throw ConfigError("folds must be >= 1");
    std::vector<std::int64_t> pairs;
    for (const auto &r : rows) pairs.push_back(r.pair_id);
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = pairs.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(pairs[i - 1], pairs[j]);
    }
    std::map<std::int64_t, int> pair_fold;
    for (std::size_t i = 0; i < pairs.size(); ++i) pair_fold[pairs[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

    std::map<std::string, int> work_fold;
    std::vector<int> out;
    for (const auto &r : rows) {
        const auto key = r.comparison_id.empty() ? r.comparison_title : r.comparison_id;
        const auto [it, inserted] = work_fold.emplace(key, pair_fold.at(r.pair_id));
        out.push_back(it->second);
    }
    return out;
}

namespace detail {

inline const MusicWork &find_work(const std::map<std::string, const MusicWork *> &by_id, const std::string &id) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("annotation references unknown music id '" + id + "'");
    return *it->second;
}

}  // namespace detail

/// Segment-level evaluation. For each fold the library holds the fold's comparison works (what
/// exactly depends on the mode); every annotated original time of the fold issues one query,
/// rasterized at the nearest window start and excluding the query's own music. Recall is pooled
/// over all queries of all folds.
inline SegmentEvalResult run_segment_eval(const std::vector<MusicWork> &works, std::vector<AnnotationRow> annotations,
                                          const EvalConfig &config, const std::vector<Segment> &distractor_segments = {},
                                          const Retriever &retrieve = default_retriever()) {
    config.validate();
    if (annotations.empty()) throw ConfigError("segment evaluation needs at least one annotation row");
    resolve_annotations(annotations, works);
    std::map<std::string, const MusicWork *> by_id;
    for (const auto &w : works) by_id[w.music_id] = &w;

    const auto fold_of = assign_folds(annotations, config.folds, config.fold_seed);
    const std::size_t depth = config.k_values.back();

    SegmentEvalResult result;
    result.mode = config.mode;
    result.k_values = config.k_values;

    for (int fold = 0; fold < config.folds; ++fold) {
        std::vector<const AnnotationRow *> rows;
        for (std::size_t i = 0; i < annotations.size(); ++i) {
            if (fold_of[i] == fold) rows.push_back(&annotations[i]);
        }
        if (rows.empty()) continue;

        // Library: comparison works of this fold in first-appearance order.
        std::vector<std::string> library_ids;
        for (const auto *r : rows) {
            if (std::find(library_ids.begin(), library_ids.end(), r->comparison_id) == library_ids.end()) library_ids.push_back(r->comparison_id);
        }
        std::vector<Segment> segments;
        std::optional<int> beats_per_bar;
        for (const auto &id : library_ids) {
            const auto &w = detail::find_work(by_id, id);
            std::vector<Segment> segs;
            if (config.mode == EvalMode::smp_timestamps) {
                std::set<double> starts;
                for (const auto *r : rows) {
                    if (r->comparison_id != id) continue;
                    for (double t : r->comparison_times_sec) {
                        if (auto s = snap_to_window_start(w, t, config.grid.bar_count)) starts.insert(*s);
                    }
                }
                for (double s : starts) segs.push_back(segment_at(w, s, config.grid));
            } else {
                segs = enumerate_downbeat_segments(w, config.grid);
            }
            if (!segs.empty()) beats_per_bar = w.beat_grid.beats_per_bar;
            std::move(segs.begin(), segs.end(), std::back_inserter(segments));
        }
        if (config.mode == EvalMode::full_indices) {
            segments.insert(segments.end(), distractor_segments.begin(), distractor_segments.end());
            if (!beats_per_bar && !distractor_segments.empty()) beats_per_bar = distractor_segments.front().beats_per_bar;
        }
        const SegmentIndex index(std::move(segments), {beats_per_bar.value_or(4), config.grid.cells_per_beat, config.grid.bar_count},
                                 config.weights);
        result.index_sizes.push_back(index.size());

        for (const auto *r : rows) {
            const auto &original = detail::find_work(by_id, r->original_id);
            for (std::size_t j = 0; j < r->original_times_sec.size(); ++j) {
                SegmentQueryRecord rec;
                rec.fold = fold;
                rec.pair_id = r->pair_id;
                rec.acoustic_index = r->acoustic_index;
                rec.query_music_id = original.music_id;
                rec.annotated_time_sec = r->original_times_sec[j];
                rec.truth = {r->comparison_id, r->comparison_times_sec[j], r->acoustic_index};
                const auto snapped = snap_to_window_start(original, rec.annotated_time_sec, config.grid.bar_count);
                rec.snapped_time_sec = snapped.value_or(std::nan(""));
                if (snapped && !index.empty()) {
                    const auto q = segment_at(original, *snapped, config.grid);
                    const auto hits = retrieve(index, q, depth, MusicSet{original.music_id});
                    rec.first_correct = first_correct_rank(hits, rec.truth, config.temporal_tolerance_sec);
                }
                result.queries.push_back(std::move(rec));
            }
        }
    }

    result.query_count = result.queries.size();
    for (auto k : config.k_values) {
        const auto found = std::count_if(result.queries.begin(), result.queries.end(),
                                         [k](const SegmentQueryRecord &r) { return r.first_correct != 0 && r.first_correct <= k; });
        result.recall.push_back(result.query_count == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(result.query_count));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Music level

/// AP of one ranking: mean over correct items of precision at the item's rank; items never
/// retrieved contribute 0. `correct` must be non-empty.
inline double average_precision(const std::vector<std::string> &ranked, const std::set<std::string, std::less<>> &correct) {
    if (correct.empty()) throw std::invalid_argument("average precision needs a non-empty correct set");
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (correct.count(ranked[i])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(correct.size());
}

/// Rank of the first correct item, or library_size + 1 when none is ranked.
inline std::size_t first_correct_position(const std::vector<std::string> &ranked, const std::set<std::string, std::less<>> &correct,
                                          std::size_t library_size) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (correct.count(ranked[i])) return i + 1;
    }
    return library_size + 1;
}

inline double mean_rank_first_correct(const std::vector<std::vector<std::string>> &ranked_lists,
                                      const std::vector<std::set<std::string, std::less<>>> &correct_sets, std::size_t library_size) {
    if (ranked_lists.size() != correct_sets.size()) throw std::invalid_argument("one correct set per ranked list required");
    if (ranked_lists.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked_lists.size(); ++i) {
        sum += static_cast<double>(first_correct_position(ranked_lists[i], correct_sets[i], library_size));
    }
    return sum / static_cast<double>(ranked_lists.size());
}

/// music id -> ids of its ground-truth partners.
using Pairing = std::map<std::string, std::set<std::string, std::less<>>>;

/// Symmetric pairing from annotation rows (ids must be resolved).
inline Pairing pairing_from_annotations(const std::vector<AnnotationRow> &rows) {
    Pairing p;
    for (const auto &r : rows) {
        if (r.original_id == r.comparison_id) continue;
        p[r.original_id].insert(r.comparison_id);
        p[r.comparison_id].insert(r.original_id);
    }
    return p;
}

/// Works sharing a group_id are each other's partners.
inline Pairing pairing_from_groups(const std::vector<MusicWork> &works) {
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto &w : works) {
        if (w.group_id) groups[*w.group_id].push_back(w.music_id);
    }
    Pairing p;
    for (const auto &[g, ids] : groups) {
        for (const auto &a : ids) {
            for (const auto &b : ids) {
                if (a != b) p[a].insert(b);
            }
        }
    }
    return p;
}

struct MusicQueryRecord {
    std::string query_music_id;
    std::vector<std::string> ranked;
    std::set<std::string, std::less<>> correct;
    std::size_t first_correct = 0;
    double average_precision = 0.0;
};

struct MusicEvalResult {
    double map = 0.0;
    double mr1 = 0.0;
    std::size_t library_size = 0;
    std::vector<MusicQueryRecord> queries;
    std::vector<std::string> warnings;
};

/// Every work with at least one partner in the library queries the library (all works plus the
/// optional distractors) via rank_musics; mAP and MR1 are averaged over those queries.
inline MusicEvalResult run_music_eval(const std::vector<MusicWork> &works, const Pairing &pairing, const EvalConfig &config,
                                      const std::vector<MusicWork> &distractors = {}) {
    config.validate();
    std::vector<MusicWork> library = works;
    library.insert(library.end(), distractors.begin(), distractors.end());
    const auto index = build_index(library, config.weights, config.grid);
    std::set<std::string, std::less<>> in_library;
    for (const auto &m : index.by_music()) in_library.insert(m.music_id);

    MusicEvalResult result;
    for (const auto &w : works) {
        const auto it = pairing.find(w.music_id);
        std::set<std::string, std::less<>> correct;
        if (it != pairing.end()) {
            for (const auto &id : it->second) {
                if (in_library.count(id) && id != w.music_id) correct.insert(id);
            }
        }
        if (correct.empty()) {
            if (it != pairing.end()) result.warnings.push_back("skipping '" + w.music_id + "': no ground-truth partner in the library");
            continue;
        }
        if (window_starts(w, config.grid.bar_count).empty()) {
            result.warnings.push_back("skipping '" + w.music_id + "': no complete segment");
            continue;
        }
        const auto ranking = rank_musics(w, index);
        MusicQueryRecord rec;
        rec.query_music_id = w.music_id;
        for (const auto &m : ranking.ranked) rec.ranked.push_back(m.music_id);
        rec.correct = std::move(correct);
        const std::size_t candidates = in_library.size() - (in_library.count(w.music_id) ? 1 : 0);
        rec.first_correct = first_correct_position(rec.ranked, rec.correct, candidates);
        rec.average_precision = average_precision(rec.ranked, rec.correct);
        result.queries.push_back(std::move(rec));
    }
    result.library_size = in_library.size();
    if (!result.queries.empty()) {
        double ap = 0.0, r1 = 0.0;
        for (const auto &q : result.queries) {
            ap += q.average_precision;
            r1 += static_cast<double>(q.first_correct);
        }
        result.map = ap / static_cast<double>(result.queries.size());
        result.mr1 = r1 / static_cast<double>(result.queries.size());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Result tables

inline nlohmann::json to_json(const SegmentEvalResult &r) {
    nlohmann::json recall = nlohmann::json::object();
    for (std::size_t i = 0; i < r.k_values.size(); ++i) recall["@" + std::to_string(r.k_values[i])] = r.recall[i];
    return {{"mode", to_string(r.mode)}, {"queries", r.query_count}, {"index_sizes", r.index_sizes}, {"rec_1s", recall}};
}

inline nlohmann::json to_json(const MusicEvalResult &r) {
    return {{"map", r.map}, {"mr1", r.mr1}, {"queries", r.queries.size()}, {"library_size", r.library_size}, {"warnings", r.warnings}};
}

/// Rec.1s@k in percent, one column block per mode.
inline std::string format_segment_table(const std::vector<SegmentEvalResult> &results, std::string_view method = "Music") {
    auto cell = [](const std::string &text, std::size_t width, bool right) {
        std::ostringstream os;
        os << (right ? std::right : std::left) << std::setw(static_cast<int>(width)) << text;
        return os.str();
    };
    auto percent = [](double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1) << 100.0 * v;
        return os.str();
    };
    std::string head = cell("Method", 10, false), ks = cell("", 10, false), row = cell(std::string(method), 10, false);
    for (const auto &r : results) {
        const std::size_t width = 8 * r.k_values.size() - 1;
        head += " | " + cell(std::string(display_name(r.mode)) + " Rec.1s", width, false);
        std::string k_line, v_line;
        for (std::size_t i = 0; i < r.k_values.size(); ++i) {
            k_line += (i ? " " : "") + cell("@" + std::to_string(r.k_values[i]), 7, true);
            v_line += (i ? " " : "") + cell(percent(r.recall[i]), 7, true);
        }
        ks += " | " + k_line;
        row += " | " + v_line;
    }
    return head + '\n' + ks + '\n' + row + '\n';
}

inline std::string format_music_table(const MusicEvalResult &r, std::string_view method = "Music") {
    std::ostringstream os;
    os << std::left << std::setw(10) << "Method" << " | " << std::setw(6) << "MAP" << " | " << "MR1" << '\n';
    os << std::setw(10) << method << " | " << std::fixed << std::setprecision(3) << std::setw(6) << r.map << " | " << std::setprecision(2)
       << r.mr1 << '\n';
    return os.str();
}

}  // namespace segplag
