#pragma once

// Downbeat-aligned windowing and feature rasterization.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "segplag/corpus.hpp"
#include "segplag/error.hpp"

namespace segplag {

struct GridParams {
    int cells_per_beat = 4;
    int bar_count = 4;

    friend bool operator==(const GridParams &, const GridParams &) = default;
};

inline constexpr int kPitchCount = 128;

/// Fixed-size bit vector over 64-bit words; bits past size() are always zero.
class BitVector {
  public:
    BitVector() = default;
    explicit BitVector(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] bool get(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
    void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }

    [[nodiscard]] std::size_t count() const noexcept {
        std::size_t c = 0;
        for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }

    [[nodiscard]] std::span<const std::uint64_t> words() const noexcept { return words_; }
    [[nodiscard]] std::span<std::uint64_t> words() noexcept { return words_; }

    friend bool operator==(const BitVector &, const BitVector &) = default;

  private:
    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Number of positions set in both vectors.
inline std::size_t intersection_count(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    std::size_t c = 0;
    const auto n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) c += static_cast<std::size_t>(std::popcount(a[i] & b[i]));
    return c;
}

/// Binary 128 x T pitch/time matrix, stored row-major as one bit row per pitch.
class PianoRoll {
  public:
    PianoRoll() = default;
    PianoRoll(std::size_t time_cells, int cells_per_beat)
        : time_cells_(time_cells),
          cells_per_beat_(cells_per_beat),
          words_per_row_((time_cells + 63) / 64),
          bits_(kPitchCount * words_per_row_, 0) {}

    [[nodiscard]] std::size_t time_cells() const noexcept { return time_cells_; }
    [[nodiscard]] int cells_per_beat() const noexcept { return cells_per_beat_; }
    [[nodiscard]] std::size_t words_per_row() const noexcept { return words_per_row_; }

    [[nodiscard]] bool get(int pitch, std::size_t t) const {
        return (row(pitch)[t / 64] >> (t % 64)) & 1U;
    }
    void set(int pitch, std::size_t t) { mutable_row(pitch)[t / 64] |= std::uint64_t{1} << (t % 64); }

    [[nodiscard]] std::span<const std::uint64_t> row(int pitch) const {
        return {bits_.data() + static_cast<std::size_t>(pitch) * words_per_row_, words_per_row_};
    }
    [[nodiscard]] std::span<std::uint64_t> mutable_row(int pitch) {
        return {bits_.data() + static_cast<std::size_t>(pitch) * words_per_row_, words_per_row_};
    }

    [[nodiscard]] std::size_t row_count(int pitch) const {
        std::size_t c = 0;
        for (auto w : row(pitch)) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }

    [[nodiscard]] std::size_t mass() const noexcept {
        std::size_t c = 0;
        for (auto w : bits_) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }

    [[nodiscard]] bool row_empty(int pitch) const {
        return std::all_of(row(pitch).begin(), row(pitch).end(), [](std::uint64_t w) { return w == 0; });
    }

    /// Lowest and highest occupied pitch; {128, -1} when empty.
    [[nodiscard]] std::pair<int, int> occupied_range() const {
        int lo = kPitchCount, hi = -1;
        for (int p = 0; p < kPitchCount; ++p) {
            if (!row_empty(p)) {
                lo = std::min(lo, p);
                hi = p;
            }
        }
        return {lo, hi};
    }

    /// Whether any pitch is set in column t.
    [[nodiscard]] bool column_any(std::size_t t) const {
        for (int p = 0; p < kPitchCount; ++p) {
            if (get(p, t)) return true;
        }
        return false;
    }

    PianoRoll &operator|=(const PianoRoll &other) {
        if (other.time_cells_ != time_cells_) throw GridMismatch("pianoroll shape mismatch");
        for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
        return *this;
    }

    friend bool operator==(const PianoRoll &, const PianoRoll &) = default;

  private:
    std::size_t time_cells_ = 0;
    int cells_per_beat_ = 4;
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> bits_;
};

using OnsetVector = BitVector;
using ChordSequence = std::vector<ChordLabel>;

struct Segment {
    std::string music_id;
    double start_sec = 0.0;
    double end_sec = 0.0;
    int bar_count = 4;
    int beats_per_bar = 4;
    int cells_per_beat = 4;
    PianoRoll roll_union;
    PianoRoll roll_melody;
    PianoRoll roll_vocal;
    OnsetVector onsets;
    ChordSequence chords;

    [[nodiscard]] std::size_t beat_count() const noexcept { return static_cast<std::size_t>(bar_count * beats_per_bar); }
    [[nodiscard]] std::size_t time_cells() const noexcept { return beat_count() * static_cast<std::size_t>(cells_per_beat); }

    friend bool operator==(const Segment &, const Segment &) = default;
};

/// Segments are comparable iff their rasters share a shape.
inline bool same_grid(const Segment &a, const Segment &b) noexcept {
    return a.bar_count == b.bar_count && a.beats_per_bar == b.beats_per_bar && a.cells_per_beat == b.cells_per_beat;
}

enum class TrackFilter : std::uint8_t { all, melody, vocal };

inline bool passes(TrackFilter f, Track t) noexcept {
    return f == TrackFilter::all || (f == TrackFilter::melody && t == Track::melody) || (f == TrackFilter::vocal && t == Track::vocal);
}

namespace detail {

// Grid coordinates absorb floating-point noise of this many cells when a time sits on a cell boundary.
inline constexpr double kCellEps = 1e-6;

/// A bar-aligned window expressed as beat indices into the work's grid.
struct Window {
    std::size_t first_beat = 0;
    std::size_t beat_count = 0;
};

inline Window locate_window(const BeatGrid &grid, double start_sec, double end_sec, int bar_count) {
    const auto &t = grid.beat_times_sec;
    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); };
    const auto it = std::lower_bound(t.begin(), t.end(), start_sec - 1e-9);
    if (it == t.end() || !near(*it, start_sec)) throw AlignmentError("window start " + std::to_string(start_sec) + " s is not a beat");
    const auto first = static_cast<std::size_t>(it - t.begin());
    if (!grid.downbeat_flags[first]) throw AlignmentError("window start " + std::to_string(start_sec) + " s is not a downbeat");
    const auto beats = static_cast<std::size_t>(bar_count * grid.beats_per_bar);
    if (first + beats >= t.size() || !near(t[first + beats], end_sec)) {
        throw AlignmentError("window [" + std::to_string(start_sec) + ", " + std::to_string(end_sec) + ") does not span " +
                             std::to_string(bar_count) + " bars");
    }
    return {first, beats};
}

/// Position of `x` in beats relative to the window start; linear within each beat interval and
/// extrapolated with the neighbouring interval outside the window.
inline double beat_position(const std::vector<double> &t, const Window &w, double x) {
    const auto first = w.first_beat;
    const auto last = w.first_beat + w.beat_count;
    if (x <= t[first]) return (x - t[first]) / (t[first + 1] - t[first]);
    if (x >= t[last]) return static_cast<double>(w.beat_count) + (x - t[last]) / (t[last] - t[last - 1]);
    const auto it = std::upper_bound(t.begin() + static_cast<std::ptrdiff_t>(first), t.begin() + static_cast<std::ptrdiff_t>(last) + 1, x);
    const auto j = static_cast<std::size_t>(it - t.begin()) - 1;
    return static_cast<double>(j - first) + (x - t[j]) / (t[j + 1] - t[j]);
}

inline PianoRoll rasterize_pianoroll(const MusicWork &work, const Window &w, TrackFilter filter, int cells_per_beat) {
    const auto cells = w.beat_count * static_cast<std::size_t>(cells_per_beat);
    PianoRoll roll(cells, cells_per_beat);
    const auto &t = work.beat_grid.beat_times_sec;
    const double total = static_cast<double>(cells);
    for (const auto &n : work.notes) {
        if (!passes(filter, n.track)) continue;
        const double on = beat_position(t, w, n.onset_sec) * cells_per_beat;
        const double off = beat_position(t, w, n.onset_sec + n.duration_sec) * cells_per_beat;
        if (off <= kCellEps || on >= total - kCellEps) continue;
        const double first = std::max(0.0, std::floor(on + kCellEps));
        double last = std::min(total, std::ceil(off - kCellEps));
        if (last <= first) last = first + 1.0;
        for (auto c = static_cast<std::size_t>(first); c < static_cast<std::size_t>(last); ++c) roll.set(n.pitch, c);
    }
    return roll;
}

inline OnsetVector rasterize_onsets(const MusicWork &work, const Window &w, int cells_per_beat) {
    const auto cells = w.beat_count * static_cast<std::size_t>(cells_per_beat);
    OnsetVector out(cells);
    const auto &t = work.beat_grid.beat_times_sec;
    for (const auto &n : work.notes) {
        const double pos = beat_position(t, w, n.onset_sec) * cells_per_beat + kCellEps;
        if (pos < 0.0) continue;
        const auto c = static_cast<std::size_t>(std::floor(pos));
        if (c < cells) out.set(c);
    }
    return out;
}

/// `sorted` must be ordered by start_sec.
inline ChordSequence rasterize_chords(const std::vector<ChordSpan> &sorted, const std::vector<double> &t, const Window &w) {
    ChordSequence out(w.beat_count);
    for (std::size_t b = 0; b < w.beat_count; ++b) {
        const double mid = 0.5 * (t[w.first_beat + b] + t[w.first_beat + b + 1]);
        auto it = std::upper_bound(sorted.begin(), sorted.end(), mid, [](double x, const ChordSpan &s) { return x < s.start_sec; });
        if (it != sorted.begin()) {
            --it;
            if (mid < it->end_sec) out[b] = it->label;
        }
    }
    return out;
}

inline std::vector<ChordSpan> sorted_chords(const MusicWork &work) {
    auto chords = work.chords;
    std::stable_sort(chords.begin(), chords.end(), [](const ChordSpan &a, const ChordSpan &b) { return a.start_sec < b.start_sec; });
    return chords;
}

inline Segment make_segment(const MusicWork &work, const Window &w, const std::vector<ChordSpan> &sorted, const GridParams &grid) {
    const auto &t = work.beat_grid.beat_times_sec;
    Segment s;
    s.music_id = work.music_id;
    s.start_sec = t[w.first_beat];
    s.end_sec = t[w.first_beat + w.beat_count];
    s.bar_count = grid.bar_count;
    s.beats_per_bar = work.beat_grid.beats_per_bar;
    s.cells_per_beat = grid.cells_per_beat;
    s.roll_melody = rasterize_pianoroll(work, w, TrackFilter::melody, grid.cells_per_beat);
    s.roll_vocal = rasterize_pianoroll(work, w, TrackFilter::vocal, grid.cells_per_beat);
    s.roll_union = s.roll_melody;
    s.roll_union |= s.roll_vocal;
    s.onsets = rasterize_onsets(work, w, grid.cells_per_beat);
    s.chords = rasterize_chords(sorted, t, w);
    return s;
}

}  // namespace detail

/// Beat indices of every downbeat that opens a complete window of `bar_count` bars.
inline std::vector<std::size_t> window_starts(const MusicWork &work, int bar_count = 4) {
    const auto downbeats = work.beat_grid.downbeat_indices();
    std::vector<std::size_t> out;
    const auto span = static_cast<std::size_t>(bar_count);
    const auto beats = static_cast<std::size_t>(bar_count * work.beat_grid.beats_per_bar);
    for (std::size_t i = 0; i + span < downbeats.size(); ++i) {
        if (downbeats[i + span] == downbeats[i] + beats) out.push_back(downbeats[i]);
    }
    return out;
}

/// One segment per downbeat that has `grid.bar_count` complete bars after it (stride one bar).
inline std::vector<Segment> enumerate_downbeat_segments(const MusicWork &work, const GridParams &grid = {}) {
    std::vector<Segment> out;
    const auto starts = window_starts(work, grid.bar_count);
    if (starts.empty()) return out;
    const auto sorted = detail::sorted_chords(work);
    const auto beats = static_cast<std::size_t>(grid.bar_count * work.beat_grid.beats_per_bar);
    out.reserve(starts.size());
    for (auto first : starts) out.push_back(detail::make_segment(work, {first, beats}, sorted, grid));
    return out;
}

/// Segment for the bar-aligned window starting at `start_sec`.
inline Segment segment_at(const MusicWork &work, double start_sec, const GridParams &grid = {}) {
    const auto beats = static_cast<std::size_t>(grid.bar_count * work.beat_grid.beats_per_bar);
    const auto &t = work.beat_grid.beat_times_sec;
    const auto it = std::lower_bound(t.begin(), t.end(), start_sec - 1e-9);
    const double end = (it == t.end() || static_cast<std::size_t>(it - t.begin()) + beats >= t.size())
                           ? start_sec
                           : t[static_cast<std::size_t>(it - t.begin()) + beats];
    const auto w = detail::locate_window(work.beat_grid, start_sec, end, grid.bar_count);
    return detail::make_segment(work, w, detail::sorted_chords(work), grid);
}

/// Window start (a downbeat with a complete window after it) nearest to `t_sec`; earlier start on ties.
inline std::optional<double> snap_to_window_start(const MusicWork &work, double t_sec, int bar_count = 4) {
    std::optional<double> best;
    for (auto i : window_starts(work, bar_count)) {
        const double s = work.beat_grid.beat_times_sec[i];
        if (!best || std::abs(s - t_sec) < std::abs(*best - t_sec)) best = s;
    }
    return best;
}

inline PianoRoll rasterize_pianoroll(const MusicWork &work, double start_sec, double end_sec, TrackFilter filter,
                                     const GridParams &grid = {}) {
    const auto w = detail::locate_window(work.beat_grid, start_sec, end_sec, grid.bar_count);
    return detail::rasterize_pianoroll(work, w, filter, grid.cells_per_beat);
}

inline OnsetVector rasterize_onsets(const MusicWork &work, double start_sec, double end_sec, const GridParams &grid = {}) {
    const auto w = detail::locate_window(work.beat_grid, start_sec, end_sec, grid.bar_count);
    return detail::rasterize_onsets(work, w, grid.cells_per_beat);
}

inline ChordSequence rasterize_chords(const MusicWork &work, double start_sec, double end_sec, const GridParams &grid = {}) {
    const auto w = detail::locate_window(work.beat_grid, start_sec, end_sec, grid.bar_count);
    return detail::rasterize_chords(detail::sorted_chords(work), work.beat_grid.beat_times_sec, w);
}

/// Shifts pitch rows by `semitones`; rows leaving 0-127 are dropped.
inline PianoRoll transpose(const PianoRoll &roll, int semitones) {
    PianoRoll out(roll.time_cells(), roll.cells_per_beat());
    for (int p = 0; p < kPitchCount; ++p) {
        const int q = p + semitones;
        if (q < 0 || q >= kPitchCount) continue;
        const auto src = roll.row(p);
        std::copy(src.begin(), src.end(), out.mutable_row(q).begin());
    }
    return out;
}

inline ChordLabel transpose(const ChordLabel &c, int semitones) {
    if (!c.root) return c;
    return {((*c.root + semitones) % 12 + 12) % 12, c.quality};
}

/// Shifts every pitch and chord root of a segment together.
inline Segment transpose_segment(const Segment &s, int semitones) {
    Segment out = s;
    out.roll_union = transpose(s.roll_union, semitones);
    out.roll_melody = transpose(s.roll_melody, semitones);
    out.roll_vocal = transpose(s.roll_vocal, semitones);
    for (auto &c : out.chords) c = transpose(c, semitones);
    return out;
}

}  // namespace segplag
