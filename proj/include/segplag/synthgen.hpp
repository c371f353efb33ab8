#pragma once

// Synthetic transcribed corpora with planted plagiarism.
//
// Works are drafted bar by bar (notes on a sixteenth grid, one or two chords per bar) and rendered
// to seconds through a slightly jittered beat grid. Plants copy whole 4-bar passages between
// drafts before rendering, so planted windows rasterize identically in both works.

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "segplag/corpus.hpp"
#include "segplag/error.hpp"

namespace segplag {

enum class PlantKind : std::uint8_t { exact_copy, transposed, chord_only, rhythm_only, melody_only, perturbed };

inline std::string_view to_string(PlantKind k) {
    switch (k) {
        case PlantKind::exact_copy: return "exact_copy";
        case PlantKind::transposed: return "transposed";
        case PlantKind::chord_only: return "chord_only";
        case PlantKind::rhythm_only: return "rhythm_only";
        case PlantKind::melody_only: return "melody_only";
        case PlantKind::perturbed: return "perturbed";
    }
    return "exact_copy";
}

inline PlantKind plant_kind_from_string(std::string_view s) {
    for (auto k : {PlantKind::exact_copy, PlantKind::transposed, PlantKind::chord_only, PlantKind::rhythm_only, PlantKind::melody_only,
                   PlantKind::perturbed}) {
        if (detail::lower(s) == to_string(k)) return k;
    }
    throw ConfigError("unknown plant kind '" + std::string(s) + "'");
}

/// Where planted passages sit inside the original and comparison works.
enum class PlantLocation : std::uint8_t {
    contiguous,  ///< passages back to back (one long copied section) at a random bar of each work
    random,      ///< passages at independent random bars of each work
    aligned,     ///< random bars, the same bar numbers in both works
};

struct SynthSpec {
    std::uint64_t seed = 1;
    int n_works = 50;
    int bars_per_work = 32;
    double tempo_min_bpm = 90.0;
    double tempo_max_bpm = 140.0;
    /// Relative per-beat jitter of the beat grid.
    double tempo_jitter = 0.01;
    int n_plants = 10;
    /// Distinct 4-bar passages copied per planted pair; all share one annotation row.
    int passages_per_plant = 5;
    PlantKind plant = PlantKind::exact_copy;
    int transpose_semitones = 3;
    double deletion_p = 0.0;
    /// Per-chord probability of replacing a loop degree with a random diatonic one.
    double chord_substitution_p = 0.6;
    PlantLocation location = PlantLocation::random;
    std::string id_prefix = "w";
    std::string title_prefix = "Synthetic Work";
};

struct SynthCorpus {
    std::vector<MusicWork> works;
    std::vector<AnnotationRow> annotations;
};

inline constexpr int kBeatsPerBar = 4;
inline constexpr int kCellsPerBeat = 4;
inline constexpr int kPassageBars = 4;

inline void validate_spec(const SynthSpec &s) {
    if (s.n_works < 2) throw ConfigError("synth spec: n_works must be >= 2");
    if (s.bars_per_work < kPassageBars) throw ConfigError("synth spec: bars_per_work must be >= 4");
    if (!(s.tempo_min_bpm > 0.0) || s.tempo_max_bpm < s.tempo_min_bpm) throw ConfigError("synth spec: bad tempo range");
    if (s.tempo_jitter < 0.0 || s.tempo_jitter >= 0.2) throw ConfigError("synth spec: tempo_jitter must be in [0, 0.2)");
    if (s.n_plants < 0 || 2 * s.n_plants > s.n_works) throw ConfigError("synth spec: each plant needs two distinct works (2 * n_plants <= n_works)");
    if (s.passages_per_plant < 1) throw ConfigError("synth spec: passages_per_plant must be >= 1");
    if (s.n_plants > 0 && s.passages_per_plant * kPassageBars > s.bars_per_work) {
        throw ConfigError("synth spec infeasible: " + std::to_string(s.passages_per_plant) + " planted 4-bar passages do not fit in " +
                          std::to_string(s.bars_per_work) + " bars");
    }
    if (s.deletion_p < 0.0 || s.deletion_p >= 1.0) throw ConfigError("synth spec: deletion probability must be in [0, 1)");
    if (s.transpose_semitones < -12 || s.transpose_semitones > 12) throw ConfigError("synth spec: transposition must be in [-12, 12]");
}

namespace detail {

using Rng = std::mt19937_64;

inline Rng derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t item) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(item >> 32)};
    return Rng(seq);
}

inline int uniform_int(Rng &rng, int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform_real(Rng &rng, double lo, double hi) { return boost::random::uniform_real_distribution<double>(lo, hi)(rng); }
inline bool coin(Rng &rng, double p) { return boost::random::bernoulli_distribution<double>(p)(rng); }

struct DraftNote {
    int cell = 0;  ///< onset in sixteenths from the bar start
    int length = 1;
    int pitch = 60;
    Track track = Track::melody;
};

struct DraftBar {
    std::vector<DraftNote> notes;
    std::array<ChordLabel, 2> chords;  ///< first and second half of the bar
};

struct Draft {
    std::vector<DraftBar> bars;
    std::vector<double> beat_times;
};

// Loops of scale degrees (0-based), one chord per entry; a loop entry covers one bar, or half a bar
// when the loop has eight entries.
inline const std::vector<std::vector<int>> &loop_pool() {
    static const std::vector<std::vector<int>> pool = {
        {0, 4, 5, 3}, {5, 3, 0, 4}, {0, 5, 3, 4}, {1, 4, 0, 5}, {0, 3, 4, 3}, {3, 4, 2, 5},
        {0, 3, 5, 4}, {5, 4, 3, 4}, {0, 2, 3, 4}, {0, 4, 1, 3}, {5, 1, 4, 0}, {0, 6, 5, 4},
        {3, 0, 4, 5}, {0, 3, 1, 4}, {5, 2, 3, 0}, {0, 1, 2, 3}, {3, 2, 1, 0}, {0, 5, 1, 4},
        {0, 4, 5, 2, 3, 0, 3, 4}, {0, 0, 3, 3, 5, 5, 4, 4}, {5, 5, 3, 3, 0, 0, 4, 4}, {0, 3, 0, 4, 5, 3, 1, 4},
    };
    return pool;
}

inline constexpr std::array<int, 7> kMajorScale = {0, 2, 4, 5, 7, 9, 11};
inline constexpr std::array<int, 7> kMinorScale = {0, 2, 3, 5, 7, 8, 10};

inline ChordLabel diatonic_chord(int key_root, bool minor, int degree) {
    const auto &scale = minor ? kMinorScale : kMajorScale;
    const int root = (key_root + scale[static_cast<std::size_t>(degree % 7)]) % 12;
    const int third = (scale[static_cast<std::size_t>((degree + 2) % 7)] - scale[static_cast<std::size_t>(degree % 7)] + 12) % 12;
    return {root, third == 4 ? ChordQuality::maj : ChordQuality::min};
}

/// Rhythm cells of one beat, as (offset, length) pairs in sixteenths.
inline std::vector<std::pair<int, int>> beat_pattern(Rng &rng, double density) {
    static const std::vector<std::vector<std::pair<int, int>>> patterns = {
        {{0, 4}},                          // quarter
        {{0, 2}, {2, 2}},                  // two eighths
        {{0, 2}, {2, 1}, {3, 1}},          // eighth + two sixteenths
        {{0, 1}, {1, 1}, {2, 2}},          // two sixteenths + eighth
        {{0, 3}, {3, 1}},                  // dotted eighth + sixteenth
        {{0, 1}, {1, 1}, {2, 1}, {3, 1}},  // four sixteenths
        {{1, 1}, {2, 2}},                  // syncopated
        {{2, 2}},                          // off-beat eighth
    };
    if (!coin(rng, density)) return coin(rng, 0.5) ? std::vector<std::pair<int, int>>{} : patterns[0];
    return patterns[static_cast<std::size_t>(uniform_int(rng, 1, static_cast<int>(patterns.size()) - 1))];
}

/// Random walk over a diatonic scale within [lo, hi].
class ScaleWalk {
  public:
    ScaleWalk(int key_root, bool minor, int lo, int hi, Rng &rng) : lo_(lo), hi_(hi) {
        const auto &scale = minor ? kMinorScale : kMajorScale;
        for (int p = lo; p <= hi; ++p) {
            const int pc = ((p - key_root) % 12 + 12) % 12;
            if (std::find(scale.begin(), scale.end(), pc) != scale.end()) pitches_.push_back(p);
        }
        pos_ = uniform_int(rng, 0, static_cast<int>(pitches_.size()) - 1);
    }

    int next(Rng &rng) {
        static constexpr std::array<int, 9> steps = {-4, -2, -1, -1, 0, 1, 1, 2, 4};
        pos_ += steps[static_cast<std::size_t>(uniform_int(rng, 0, 8))];
        const int n = static_cast<int>(pitches_.size());
        if (pos_ < 0) pos_ = -pos_;
        if (pos_ >= n) pos_ = 2 * (n - 1) - pos_;
        pos_ = std::clamp(pos_, 0, n - 1);
        return pitches_[static_cast<std::size_t>(pos_)];
    }

  private:
    int lo_, hi_;
    std::vector<int> pitches_;
    int pos_ = 0;
};

inline void draft_track(Draft &d, Rng &rng, Track track, ScaleWalk walk, double density, double bar_rest_p) {
    for (auto &bar : d.bars) {
        if (coin(rng, bar_rest_p)) continue;
        for (int beat = 0; beat < kBeatsPerBar; ++beat) {
            for (auto [offset, length] : beat_pattern(rng, density)) {
                bar.notes.push_back({beat * kCellsPerBeat + offset, length, walk.next(rng), track});
            }
        }
    }
}

inline Draft draft_work(const SynthSpec &spec, Rng &rng) {
    Draft d;
    d.bars.resize(static_cast<std::size_t>(spec.bars_per_work));

    const double bpm = uniform_real(rng, spec.tempo_min_bpm, spec.tempo_max_bpm);
    const double beat = 60.0 / bpm;
    double t = uniform_real(rng, 0.0, 1.0);
    const int beats = spec.bars_per_work * kBeatsPerBar + 1;
    for (int i = 0; i < beats; ++i) {
        d.beat_times.push_back(t);
        t += beat * (1.0 + uniform_real(rng, -spec.tempo_jitter, spec.tempo_jitter));
    }

    const int key = uniform_int(rng, 0, 11);
    const bool minor = coin(rng, 0.4);
    const auto &pool = loop_pool();
    std::vector<int> loop;
    for (std::size_t b = 0; b < d.bars.size(); ++b) {
        if (b % 4 == 0) {
            loop = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
            // Occasional substitutions keep repeated loops from being verbatim.
            for (auto &degree : loop) {
                if (coin(rng, spec.chord_substitution_p)) degree = uniform_int(rng, 0, 6);
            }
        }
        for (std::size_t half = 0; half < 2; ++half) {
            const std::size_t step = loop.size() == 8 ? (2 * b + half) % 8 : b % loop.size();
            d.bars[b].chords[half] = diatonic_chord(key, minor, loop[step]);
        }
    }

    const double melody_density = uniform_real(rng, 0.35, 0.85);
    const double vocal_density = uniform_real(rng, 0.2, 0.7);
    draft_track(d, rng, Track::melody, ScaleWalk(key, minor, 60, 84, rng), melody_density, 0.05);
    draft_track(d, rng, Track::vocal, ScaleWalk(key, minor, 52, 76, rng), vocal_density, 0.25);
    return d;
}

inline double grid_time(const std::vector<double> &beats, int bar, int cell) {
    const int abs_cell = bar * kBeatsPerBar * kCellsPerBeat + cell;
    const auto b = static_cast<std::size_t>(abs_cell / kCellsPerBeat);
    const int frac = abs_cell % kCellsPerBeat;
    if (frac == 0) return beats[b];
    return beats[b] + (beats[b + 1] - beats[b]) * frac / kCellsPerBeat;
}

inline MusicWork render(const Draft &d, std::string id, std::string title) {
    MusicWork w;
    w.music_id = std::move(id);
    w.title = std::move(title);
    w.beat_grid.beat_times_sec = d.beat_times;
    w.beat_grid.beats_per_bar = kBeatsPerBar;
    for (std::size_t i = 0; i < d.beat_times.size(); ++i) w.beat_grid.downbeat_flags.push_back(i % kBeatsPerBar == 0);

    for (std::size_t b = 0; b < d.bars.size(); ++b) {
        const int bar = static_cast<int>(b);
        auto notes = d.bars[b].notes;
        std::stable_sort(notes.begin(), notes.end(), [](const DraftNote &x, const DraftNote &y) {
            if (x.cell != y.cell) return x.cell < y.cell;
            return x.track < y.track;
        });
        for (const auto &n : notes) {
            const double on = grid_time(d.beat_times, bar, n.cell);
            const double off = grid_time(d.beat_times, bar, n.cell + n.length);
            w.notes.push_back({on, off - on, n.pitch, n.track});
        }
        for (int half = 0; half < 2; ++half) {
            const double start = grid_time(d.beat_times, bar, half * 8);
            const double end = grid_time(d.beat_times, bar, half * 8 + 8);
            const auto &label = d.bars[b].chords[static_cast<std::size_t>(half)];
            if (!w.chords.empty() && w.chords.back().label == label && w.chords.back().end_sec == start) {
                w.chords.back().end_sec = end;
            } else {
                w.chords.push_back({start, end, label});
            }
        }
    }
    return w;
}

/// `count` non-overlapping 4-bar passage starts (in bars), ascending.
inline std::vector<int> passage_starts(Rng &rng, int bars, int count, bool contiguous) {
    if (contiguous) {
        const int first = uniform_int(rng, 0, bars - count * kPassageBars);
        std::vector<int> starts;
        for (int i = 0; i < count; ++i) starts.push_back(first + i * kPassageBars);
        return starts;
    }
    // Choose `count` slots among the free bars left after reserving the passages themselves.
    const int free = bars - count * kPassageBars;
    std::vector<int> offsets;
    for (int i = 0; i < count; ++i) offsets.push_back(uniform_int(rng, 0, free));
    std::sort(offsets.begin(), offsets.end());
    std::vector<int> starts;
    for (int i = 0; i < count; ++i) starts.push_back(offsets[static_cast<std::size_t>(i)] + i * kPassageBars);
    return starts;
}

inline void apply_plant(const SynthSpec &spec, const Draft &original, Draft &comparison, int ob, int cb, Rng &rng) {
    for (int i = 0; i < kPassageBars; ++i) {
        const auto &src = original.bars[static_cast<std::size_t>(ob + i)];
        auto &dst = comparison.bars[static_cast<std::size_t>(cb + i)];
        switch (spec.plant) {
            case PlantKind::exact_copy:
            case PlantKind::perturbed: dst = src; break;
            case PlantKind::transposed: {
                dst = src;
                for (auto &n : dst.notes) n.pitch = std::clamp(n.pitch + spec.transpose_semitones, 0, 127);
                for (auto &c : dst.chords) {
                    if (c.root) c.root = ((*c.root + spec.transpose_semitones) % 12 + 12) % 12;
                }
                break;
            }
            case PlantKind::chord_only: dst.chords = src.chords; break;
            case PlantKind::melody_only: {
                std::erase_if(dst.notes, [](const DraftNote &n) { return n.track == Track::melody; });
                for (const auto &n : src.notes) {
                    if (n.track == Track::melody) dst.notes.push_back(n);
                }
                break;
            }
            case PlantKind::rhythm_only: {
                // Same onsets and lengths, fresh pitches a fifth-plus away on average.
                dst.notes = src.notes;
                for (auto &n : dst.notes) {
                    const int jump = uniform_int(rng, 5, 11) * (coin(rng, 0.5) ? 1 : -1);
                    n.pitch = std::clamp(n.pitch + jump, 0, 127);
                }
                break;
            }
        }
    }
}

}  // namespace detail

/// Deletes each note with onset in [start_sec, end_sec) independently with probability p.
/// Draws one uniform per candidate note regardless of p, so for a fixed seed the deleted set grows
/// monotonically with p.
inline MusicWork perturb_segment(const MusicWork &work, double start_sec, double end_sec, double p, std::uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("deletion probability must be in [0, 1)");
    const double horizon = (work.beat_grid.beat_times_sec.empty() ? 0.0 : work.beat_grid.beat_times_sec.back()) +
                           work.beat_grid.last_bar_duration();
    if (!(start_sec >= 0.0) || !(end_sec > start_sec) || end_sec > horizon + 1e-9) {
        throw ValidationError("perturbation span [" + std::to_string(start_sec) + ", " + std::to_string(end_sec) + ") outside the work");
    }
    auto rng = detail::derived_rng(seed, 0x5045525455524245ULL, 0);
    MusicWork out = work;
    out.notes.clear();
    for (const auto &n : work.notes) {
        if (n.onset_sec >= start_sec && n.onset_sec < end_sec) {
            if (detail::uniform_real(rng, 0.0, 1.0) < p) continue;
        }
        out.notes.push_back(n);
    }
    return out;
}

inline std::string synth_id(const SynthSpec &spec, int i) {
    std::string n = std::to_string(i + 1);
    while (n.size() < 3) n.insert(n.begin(), '0');
    return spec.id_prefix + n;
}

/// Deterministic in `spec`. Plant i pairs work 2i (original) with work 2i+1 (comparison); both
/// carry group_id "pair-<i+1>". Each plant yields one annotation row whose time lists are the
/// start times of its copied passages.
inline SynthCorpus generate_corpus(const SynthSpec &spec) {
    validate_spec(spec);
    std::vector<detail::Draft> drafts;
    drafts.reserve(static_cast<std::size_t>(spec.n_works));
    for (int i = 0; i < spec.n_works; ++i) {
        auto rng = detail::derived_rng(spec.seed, 1, static_cast<std::uint64_t>(i));
        drafts.push_back(detail::draft_work(spec, rng));
    }

    struct Plant {
        int original, comparison;
        std::vector<int> original_bars, comparison_bars;
    };
    std::vector<Plant> plants;
    for (int i = 0; i < spec.n_plants; ++i) {
        auto rng = detail::derived_rng(spec.seed, 2, static_cast<std::uint64_t>(i));
        Plant p{2 * i, 2 * i + 1, {}, {}};
        const bool contiguous = spec.location == PlantLocation::contiguous;
        p.original_bars = detail::passage_starts(rng, spec.bars_per_work, spec.passages_per_plant, contiguous);
        p.comparison_bars = spec.location == PlantLocation::aligned
                                ? p.original_bars
                                : detail::passage_starts(rng, spec.bars_per_work, spec.passages_per_plant, contiguous);
        for (std::size_t j = 0; j < p.original_bars.size(); ++j) {
            detail::apply_plant(spec, drafts[static_cast<std::size_t>(p.original)], drafts[static_cast<std::size_t>(p.comparison)],
                                p.original_bars[j], p.comparison_bars[j], rng);
        }
        plants.push_back(std::move(p));
    }

    SynthCorpus out;
    for (int i = 0; i < spec.n_works; ++i) {
        std::string n = synth_id(spec, i).substr(spec.id_prefix.size());
        out.works.push_back(detail::render(drafts[static_cast<std::size_t>(i)], synth_id(spec, i), spec.title_prefix + " " + n));
    }

    for (std::size_t i = 0; i < plants.size(); ++i) {
        const auto &p = plants[i];
        auto &orig = out.works[static_cast<std::size_t>(p.original)];
        auto &comp = out.works[static_cast<std::size_t>(p.comparison)];
        const std::string group = "pair-" + std::to_string(i + 1);
        orig.group_id = group;
        comp.group_id = group;

        AnnotationRow row;
        row.original_title = orig.title;
        row.comparison_title = comp.title;
        row.original_id = orig.music_id;
        row.comparison_id = comp.music_id;
        row.relation = Relation::plagiarism;
        row.pair_id = static_cast<std::int64_t>(i + 1);
        row.acoustic_index = static_cast<std::int64_t>(i + 1);
        const auto &ot = orig.beat_grid.beat_times_sec;
        const auto &ct = comp.beat_grid.beat_times_sec;
        for (std::size_t j = 0; j < p.original_bars.size(); ++j) {
            row.original_times_sec.push_back(ot[static_cast<std::size_t>(p.original_bars[j] * kBeatsPerBar)]);
            row.comparison_times_sec.push_back(ct[static_cast<std::size_t>(p.comparison_bars[j] * kBeatsPerBar)]);
        }
        if (spec.plant == PlantKind::perturbed && spec.deletion_p > 0.0) {
            for (std::size_t j = 0; j < p.comparison_bars.size(); ++j) {
                const auto first = static_cast<std::size_t>(p.comparison_bars[j] * kBeatsPerBar);
                comp = perturb_segment(comp, ct[first], ct[first + kPassageBars * kBeatsPerBar], spec.deletion_p,
                                       spec.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)) ^ j);
            }
        }
        out.annotations.push_back(std::move(row));
    }
    return out;
}

}  // namespace segplag
