#pragma once

// Facet similarities between two segments and their weighted combination.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "segplag/error.hpp"
#include "segplag/segmenter.hpp"

namespace segplag {

inline constexpr int kMaxShift = 12;

struct FacetScores {
    double pianoroll = 0.0;
    double onset = 0.0;
    double chord = 0.0;
    int transposition = 0;

    friend bool operator==(const FacetScores &, const FacetScores &) = default;
};

struct SimilarityWeights {
    double pianoroll = 0.5;
    double onset = 0.25;
    double chord = 0.25;

    /// Scaled to sum 1; throws ConfigError on negative or all-zero weights.
    [[nodiscard]] SimilarityWeights normalized() const {
        if (pianoroll < 0.0 || onset < 0.0 || chord < 0.0 || !std::isfinite(pianoroll + onset + chord)) {
            throw ConfigError("similarity weights must be finite and non-negative");
        }
        const double sum = pianoroll + onset + chord;
        if (!(sum > 0.0)) throw ConfigError("similarity weights sum to zero");
        return {pianoroll / sum, onset / sum, chord / sum};
    }

    friend bool operator==(const SimilarityWeights &, const SimilarityWeights &) = default;
};

struct Similarity {
    double score = 0.0;
    FacetScores facets;
};

namespace detail {

inline double binary_cosine(std::size_t dot, std::size_t mass_a, std::size_t mass_b) {
    if (mass_a == 0 && mass_b == 0) return 1.0;
    if (mass_a == 0 || mass_b == 0) return 0.0;
    const double v = static_cast<double>(dot) / std::sqrt(static_cast<double>(mass_a) * static_cast<double>(mass_b));
    return std::clamp(v, 0.0, 1.0);
}

/// Occupancy summary of a roll, reused across the shift search.
struct RollProfile {
    std::array<std::uint32_t, kPitchCount> row_mass{};
    int lo = kPitchCount;
    int hi = -1;
    std::size_t mass = 0;

    explicit RollProfile(const PianoRoll &roll) {
        for (int p = 0; p < kPitchCount; ++p) {
            row_mass[static_cast<std::size_t>(p)] = static_cast<std::uint32_t>(roll.row_count(p));
            if (row_mass[static_cast<std::size_t>(p)] != 0) {
                lo = std::min(lo, p);
                hi = p;
                mass += row_mass[static_cast<std::size_t>(p)];
            }
        }
    }

    /// Mass remaining after shifting rows by `shift` and dropping those outside 0-127.
    [[nodiscard]] std::size_t shifted_mass(int shift) const {
        if (hi < 0) return 0;
        if (lo + shift >= 0 && hi + shift < kPitchCount) return mass;
        std::size_t m = 0;
        for (int p = std::max(lo, -shift); p <= std::min(hi, kPitchCount - 1 - shift); ++p) m += row_mass[static_cast<std::size_t>(p)];
        return m;
    }
};

/// Cosine between `a` and `b` transposed by `shift`, without materializing the transposed roll.
inline double shifted_pianoroll_similarity(const PianoRoll &a, const RollProfile &pa, const PianoRoll &b, const RollProfile &pb,
                                           int shift) {
    std::size_t dot = 0;
    const int lo = std::max(pa.lo, pb.lo + shift);
    const int hi = std::min(pa.hi, pb.hi + shift);
    for (int p = lo; p <= hi; ++p) dot += intersection_count(a.row(p), b.row(p - shift));
    return binary_cosine(dot, pa.mass, pb.shifted_mass(shift));
}

inline double chord_beat_score(const ChordLabel &a, const ChordLabel &b_shifted) {
    if (a.is_none() && b_shifted.is_none()) return 0.5;
    if (a.is_none() || b_shifted.is_none()) return 0.0;
    if (*a.root != *b_shifted.root) return 0.0;
    return a.quality == b_shifted.quality ? 1.0 : 0.5;
}

/// Shift search order: 0, -1, +1, -2, +2, ... so that a strict-improvement scan breaks ties
/// toward the smallest |shift|, then the negative one.
inline constexpr std::array<int, 2 * kMaxShift + 1> kShiftOrder = [] {
    std::array<int, 2 * kMaxShift + 1> order{};
    order[0] = 0;
    for (int k = 1; k <= kMaxShift; ++k) {
        order[static_cast<std::size_t>(2 * k - 1)] = -k;
        order[static_cast<std::size_t>(2 * k)] = k;
    }
    return order;
}();

}  // namespace detail

/// Cosine similarity of the flattened rolls; 1 when both are empty, 0 when exactly one is.
inline double pianoroll_similarity(const PianoRoll &a, const PianoRoll &b) {
    if (a.time_cells() != b.time_cells()) throw GridMismatch("pianoroll shape mismatch");
    const detail::RollProfile pa(a), pb(b);
    return detail::shifted_pianoroll_similarity(a, pa, b, pb, 0);
}

inline double onset_similarity(const OnsetVector &a, const OnsetVector &b) {
    if (a.size() != b.size()) throw GridMismatch("onset vector length mismatch");
    return detail::binary_cosine(intersection_count(a.words(), b.words()), a.count(), b.count());
}

/// Mean per-beat agreement after shifting b's roots by `shift` semitones.
inline double chord_similarity(const ChordSequence &a, const ChordSequence &b, int shift) {
    if (a.size() != b.size()) throw GridMismatch("chord sequence length mismatch");
    if (a.empty()) return 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += detail::chord_beat_score(a[i], transpose(b[i], shift));
    return sum / static_cast<double>(a.size());
}

/// Per-segment data reused when one segment is compared against many candidates.
struct SegmentProfile {
    detail::RollProfile roll;
    std::size_t onset_mass = 0;

    explicit SegmentProfile(const Segment &s) : roll(s.roll_union), onset_mass(s.onsets.count()) {}
};

namespace detail {

inline double onset_similarity(const Segment &a, const SegmentProfile &pa, const Segment &b, const SegmentProfile &pb) {
    return binary_cosine(intersection_count(a.onsets.words(), b.onsets.words()), pa.onset_mass, pb.onset_mass);
}

/// Weighted combination at the best shift. `w` must already be normalized and `onset` precomputed.
inline Similarity combine(const Segment &a, const SegmentProfile &pa, const Segment &b, const SegmentProfile &pb,
                          const SimilarityWeights &w, double onset) {
    Similarity best{-1.0, {}};
    for (int shift : kShiftOrder) {
        const double p = shifted_pianoroll_similarity(a.roll_union, pa.roll, b.roll_union, pb.roll, shift);
        const double c = chord_similarity(a.chords, b.chords, shift);
        const double score = w.pianoroll * p + w.onset * onset + w.chord * c;
        if (score > best.score) best = {score, {p, onset, c, shift}};
    }
    best.score = std::clamp(best.score, 0.0, 1.0);
    return best;
}

/// Upper bound of combine() given only the onset facet.
inline double combined_upper_bound(const SimilarityWeights &w, double onset) { return w.pianoroll + w.onset * onset + w.chord; }

}  // namespace detail

inline void check_same_grid(const Segment &a, const Segment &b) {
    if (!same_grid(a, b)) throw GridMismatch("segments differ in bar count, beats per bar or cells per beat");
}

/// Best weighted facet combination over one shared transposition shift in [-12, 12].
/// Ties between shifts go to the smallest |shift|, then to the negative one.
inline Similarity combined_similarity(const Segment &a, const Segment &b, const SimilarityWeights &w = {}) {
    check_same_grid(a, b);
    const auto nw = w.normalized();
    const SegmentProfile pa(a), pb(b);
    return detail::combine(a, pa, b, pb, nw, detail::onset_similarity(a, pa, b, pb));
}

enum class FacetLabel : std::uint8_t { melody, vocal, chord, rhythm };

inline std::string_view to_string(FacetLabel f) {
    switch (f) {
        case FacetLabel::melody: return "melody";
        case FacetLabel::vocal: return "vocal";
        case FacetLabel::chord: return "chord";
        case FacetLabel::rhythm: return "rhythm";
    }
    return "melody";
}

/// Human-readable reason used in match tables.
inline std::string_view reason_text(FacetLabel f) {
    switch (f) {
        case FacetLabel::melody: return "Melody";
        case FacetLabel::vocal: return "Vocal Melody";
        case FacetLabel::chord: return "Chord progression";
        case FacetLabel::rhythm: return "Rhythm similarity";
    }
    return "Melody";
}

enum class FacetFamily : std::uint8_t { pianoroll, chord, rhythm };

/// Facet with the largest weighted contribution; ties resolve pianoroll > chord > rhythm.
inline FacetFamily dominant_facet_family(const FacetScores &f, const SimilarityWeights &w) {
    const auto nw = w.normalized();
    const double p = nw.pianoroll * f.pianoroll;
    const double c = nw.chord * f.chord;
    const double r = nw.onset * f.onset;
    if (p >= c && p >= r) return FacetFamily::pianoroll;
    if (c >= r) return FacetFamily::chord;
    return FacetFamily::rhythm;
}

/// Explanation label for a scored pair. A pianoroll win is refined to melody or vocal by comparing
/// the per-track rolls at the reported shift; a track silent in both segments carries no evidence
/// and scores 0 here. Ties resolve melody > vocal.
inline FacetLabel attribute_dominant_facet(const Segment &a, const Segment &b, const FacetScores &f, const SimilarityWeights &w = {}) {
    switch (dominant_facet_family(f, w)) {
        case FacetFamily::chord: return FacetLabel::chord;
        case FacetFamily::rhythm: return FacetLabel::rhythm;
        case FacetFamily::pianoroll: break;
    }
    auto track_score = [&](const PianoRoll &ra, const PianoRoll &rb) {
        const detail::RollProfile pa(ra), pb(rb);
        if (pa.mass == 0 && pb.shifted_mass(f.transposition) == 0) return 0.0;
        return detail::shifted_pianoroll_similarity(ra, pa, rb, pb, f.transposition);
    };
    const double melody = track_score(a.roll_melody, b.roll_melody);
    const double vocal = track_score(a.roll_vocal, b.roll_vocal);
    return vocal > melody ? FacetLabel::vocal : FacetLabel::melody;
}

}  // namespace segplag
