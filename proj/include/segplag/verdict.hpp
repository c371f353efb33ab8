#pragma once

// Music-level decisions: weighted majority voting over segment hits, localized match reports and
// facet explanations.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
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

namespace segplag {

/// Number of segment hits per query segment that take part in the vote.
inline constexpr std::size_t kVoteDepth = 20;

inline constexpr double kDefaultReportThreshold = 0.6;

/// Linear vote: 20 for rank 1 down to 1 for rank 20.
inline double vote_weight(std::size_t rank) {
    if (rank < 1 || rank > kVoteDepth) throw std::out_of_range("vote rank " + std::to_string(rank) + " outside 1..20");
    return static_cast<double>(kVoteDepth + 1 - rank);
}

/// Sum of vote_weight(rank) per music over every hit of every list.
inline std::map<std::string, double> aggregate_votes(const std::vector<std::vector<RetrievalHit>> &hit_lists) {
    std::map<std::string, double> totals;
    for (const auto &hits : hit_lists) {
        for (const auto &h : hits) totals[h.music_id] += vote_weight(h.rank);
    }
    return totals;
}

struct BestPair {
    double query_start_sec = 0.0;
    double hit_start_sec = 0.0;
    double score = 0.0;
    FacetScores facets;
    FacetLabel facet = FacetLabel::melody;

    friend bool operator==(const BestPair &, const BestPair &) = default;
};

struct RankedMusic {
    std::string music_id;
    double total_weight = 0.0;
    BestPair best_pair;

    friend bool operator==(const RankedMusic &, const RankedMusic &) = default;
};

struct MusicRanking {
    std::string query_music_id;
    std::vector<RankedMusic> ranked;

    friend bool operator==(const MusicRanking &, const MusicRanking &) = default;
};

struct SegmentSpan {
    std::string music_id;
    double start_sec = 0.0;
    double end_sec = 0.0;

    friend bool operator==(const SegmentSpan &, const SegmentSpan &) = default;
};

struct MatchReport {
    std::size_t candidate_rank = 0;
    SegmentSpan query;
    SegmentSpan match;
    double score = 0.0;
    FacetScores facets;
    FacetLabel facet = FacetLabel::melody;

    friend bool operator==(const MatchReport &, const MatchReport &) = default;
};

/// Ranking from precomputed hit lists; `query_segments[i]` produced `hit_lists[i]`.
/// Order: total weight desc, best single-pair score desc, music id asc. Musics without votes are absent.
inline MusicRanking rank_from_hits(const std::string &query_music_id, const std::vector<Segment> &query_segments,
                                   const std::vector<std::vector<RetrievalHit>> &hit_lists, const SegmentIndex &index) {
    if (query_segments.size() != hit_lists.size()) throw std::invalid_argument("one hit list per query segment required");
    const auto totals = aggregate_votes(hit_lists);

    struct Best {
        std::size_t query = 0;
        const RetrievalHit *hit = nullptr;
    };
    std::map<std::string, Best> best;
    for (std::size_t q = 0; q < hit_lists.size(); ++q) {
        for (const auto &h : hit_lists[q]) {
            auto &b = best[h.music_id];
            const bool better = !b.hit || h.score > b.hit->score ||
                                (h.score == b.hit->score &&
                                 (query_segments[q].start_sec < query_segments[b.query].start_sec ||
                                  (query_segments[q].start_sec == query_segments[b.query].start_sec && h.start_sec < b.hit->start_sec)));
            if (better) b = {q, &h};
        }
    }

    MusicRanking out{query_music_id, {}};
    for (const auto &[music, weight] : totals) {
        if (!(weight > 0.0)) continue;
        const auto &b = best.at(music);
        const auto &qs = query_segments[b.query];
        const auto &entry = index.entry(b.hit->entry_id);
        const auto label = attribute_dominant_facet(qs, entry, b.hit->facets, index.weights());
        out.ranked.push_back({music, weight, {qs.start_sec, b.hit->start_sec, b.hit->score, b.hit->facets, label}});
    }
    std::sort(out.ranked.begin(), out.ranked.end(), [](const RankedMusic &a, const RankedMusic &b) {
        if (a.total_weight != b.total_weight) return a.total_weight > b.total_weight;
        if (a.best_pair.score != b.best_pair.score) return a.best_pair.score > b.best_pair.score;
        return a.music_id < b.music_id;
    });
    return out;
}

/// Segments of `query` on the index's raster grid.
inline std::vector<Segment> query_segments(const MusicWork &query, const SegmentIndex &index) {
    return enumerate_downbeat_segments(query, {index.grid().cells_per_beat, index.grid().bar_count});
}

/// Music-level ranking of `query` against the index: every downbeat segment of the query retrieves
/// its top `k` (<= 20) hits outside the query's own music, and hits vote 21 - rank for their music.
inline MusicRanking rank_musics(const MusicWork &query, const SegmentIndex &index, std::size_t k = kVoteDepth) {
    if (k < 1 || k > kVoteDepth) throw ConfigError("vote depth k must be in 1..20");
    const auto segments = query_segments(query, index);
    if (segments.empty()) throw ValidationError("query '" + query.music_id + "' has no complete 4-bar segment");
    const auto hits = index.batch_query(segments, k, MusicSet{query.music_id});
    return rank_from_hits(query.music_id, segments, hits, index);
}

/// Every segment pair scoring at least `threshold` between the query and each of its top-n candidates.
inline std::vector<MatchReport> report_matches(const MusicWork &query, const SegmentIndex &index, const MusicRanking &ranking,
                                               std::size_t top_n, double threshold = kDefaultReportThreshold) {
    std::vector<MatchReport> out;
    const auto segments = query_segments(query, index);
    std::vector<SegmentProfile> profiles;
    profiles.reserve(segments.size());
    for (const auto &s : segments) profiles.emplace_back(s);
    const auto &w = index.weights();

    for (std::size_t r = 0; r < std::min(top_n, ranking.ranked.size()); ++r) {
        const auto &music = ranking.ranked[r].music_id;
        const auto range = std::find_if(index.by_music().begin(), index.by_music().end(),
                                        [&](const SegmentIndex::MusicRange &m) { return m.music_id == music; });
        if (range == index.by_music().end()) continue;
        std::vector<MatchReport> found;
        for (std::size_t q = 0; q < segments.size(); ++q) {
            for (std::size_t id = range->begin; id < range->end; ++id) {
                const auto &e = index.entry(id);
                const SegmentProfile ep(e);
                const auto sim = detail::combine(segments[q], profiles[q], e, ep, w, detail::onset_similarity(segments[q], profiles[q], e, ep));
                if (sim.score < threshold) continue;
                found.push_back({r + 1,
                                 {query.music_id, segments[q].start_sec, segments[q].end_sec},
                                 {e.music_id, e.start_sec, e.end_sec},
                                 sim.score,
                                 sim.facets,
                                 attribute_dominant_facet(segments[q], e, sim.facets, w)});
            }
        }
        std::stable_sort(found.begin(), found.end(), [](const MatchReport &a, const MatchReport &b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.query.start_sec != b.query.start_sec) return a.query.start_sec < b.query.start_sec;
            return a.match.start_sec < b.match.start_sec;
        });
        std::move(found.begin(), found.end(), std::back_inserter(out));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report output

inline constexpr std::string_view kMethodLabel = "Music-domain similarity";

inline nlohmann::json to_json(const FacetScores &f) {
    return {{"pianoroll", f.pianoroll}, {"onset", f.onset}, {"chord", f.chord}, {"transposition", f.transposition}};
}

/// One JSON object per ranked candidate, each on its own line.
inline std::string format_report_records(const MusicRanking &ranking, const std::vector<MatchReport> &reports, double threshold) {
    std::string out;
    for (std::size_t r = 0; r < ranking.ranked.size(); ++r) {
        const auto &m = ranking.ranked[r];
        nlohmann::json matches = nlohmann::json::array();
        for (const auto &rep : reports) {
            if (rep.candidate_rank != r + 1) continue;
            matches.push_back({{"query", {{"music_id", rep.query.music_id}, {"start_sec", rep.query.start_sec}, {"end_sec", rep.query.end_sec}}},
                               {"answer", {{"music_id", rep.match.music_id}, {"start_sec", rep.match.start_sec}, {"end_sec", rep.match.end_sec}}},
                               {"score", rep.score},
                               {"facets", to_json(rep.facets)},
                               {"reason", to_string(rep.facet)}});
        }
        nlohmann::json rec = {{"query_music_id", ranking.query_music_id},
                              {"rank", r + 1},
                              {"music_id", m.music_id},
                              {"total_weight", m.total_weight},
                              {"report_threshold", threshold},
                              {"best_pair",
                               {{"query_start_sec", m.best_pair.query_start_sec},
                                {"answer_start_sec", m.best_pair.hit_start_sec},
                                {"score", m.best_pair.score},
                                {"facets", to_json(m.best_pair.facets)},
                                {"reason", to_string(m.best_pair.facet)}}},
                              {"matches", std::move(matches)}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::string seconds_text(double s) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << s << 's';
    return os.str();
}

inline std::string display_name(const std::map<std::string, std::string> &titles, const std::string &id) {
    const auto it = titles.find(id);
    return it == titles.end() || it->second.empty() ? id : it->second;
}

}  // namespace detail

/// Human-readable blocks of Query / Answer / Method / Reason for the top-n candidates' best pairs.
inline std::string format_report_table(const MusicRanking &ranking, const std::map<std::string, std::string> &titles, std::size_t top_n) {
    std::ostringstream os;
    const auto n = std::min(top_n, ranking.ranked.size());
    for (std::size_t r = 0; r < n; ++r) {
        const auto &m = ranking.ranked[r];
        os << "--- Candidate " << r + 1 << " (votes " << m.total_weight << ", score " << m.best_pair.score << ") ---\n";
        os << "Query   " << detail::display_name(titles, ranking.query_music_id) << " at " << detail::seconds_text(m.best_pair.query_start_sec)
           << '\n';
        os << "Answer  " << detail::display_name(titles, m.music_id) << " at " << detail::seconds_text(m.best_pair.hit_start_sec) << '\n';
        os << "Method  " << kMethodLabel << '\n';
        os << "Reason  " << reason_text(m.best_pair.facet) << '\n';
    }
    if (n == 0) os << "(no candidates for " << detail::display_name(titles, ranking.query_music_id) << ")\n";
    return os.str();
}

}  // namespace segplag
