#pragma once

// Hand-built works and seeded random generators for the test suite.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "segplag/corpus.hpp"
#include "segplag/segmenter.hpp"
#include "segplag/similarity.hpp"

namespace fx {

using segplag::BeatGrid;
using segplag::ChordLabel;
using segplag::ChordQuality;
using segplag::ChordSpan;
using segplag::MusicWork;
using segplag::NoteEvent;
using segplag::Track;

using Rng = std::mt19937_64;

/// `beats` beats `beat_sec` apart starting at `offset`; downbeat every `bpb` beats from `first_downbeat`.
inline BeatGrid regular_grid(int beats, double beat_sec = 0.5, int bpb = 4, double offset = 0.0, int first_downbeat = 0) {
    BeatGrid g;
    g.beats_per_bar = bpb;
    for (int i = 0; i < beats; ++i) {
        g.beat_times_sec.push_back(offset + beat_sec * i);
        g.downbeat_flags.push_back(i >= first_downbeat && (i - first_downbeat) % bpb == 0);
    }
    return g;
}

inline MusicWork make_work(const std::string &id, int beats, double beat_sec = 0.5, int bpb = 4) {
    MusicWork w;
    w.music_id = id;
    w.title = "Title " + id;
    w.beat_grid = regular_grid(beats, beat_sec, bpb);
    return w;
}

inline void add_note(MusicWork &w, double on, double dur, int pitch, Track track = Track::melody) {
    w.notes.push_back({on, dur, pitch, track});
}

inline ChordLabel chord(int root, ChordQuality q) { return {root, q}; }
inline ChordLabel no_chord() { return {}; }

/// Scratch directory removed on destruction.
class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("segplag-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    [[nodiscard]] std::string file(const std::string &name) const { return (path_ / name).string(); }
    [[nodiscard]] std::string str() const { return path_.string(); }

  private:
    std::filesystem::path path_;
};

inline void write_text(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline int uniform(Rng &rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform(Rng &rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline bool coin(Rng &rng, double p) { return std::bernoulli_distribution(p)(rng); }

inline ChordLabel random_label(Rng &rng) {
    const int r = uniform(rng, 0, 24);
    if (r == 24) return no_chord();
    return chord(r / 2, r % 2 ? ChordQuality::min : ChordQuality::maj);
}

struct WorkShape {
    int bars_min = 5;
    int bars_max = 9;
    int notes_min = 0;
    int notes_max = 60;
    int pitch_lo = 40;
    int pitch_hi = 90;
    int pickup_beats_max = 2;
    bool full_chords = false;  ///< contiguous labelled spans from time 0 to the last beat
};

/// Valid random work: jittered beat grid with a pickup, off-grid notes of both tracks and
/// non-overlapping chord spans with gaps.
inline MusicWork random_work(Rng &rng, const std::string &id, const WorkShape &shape = {}) {
    MusicWork w;
    w.music_id = id;
    w.title = "Random " + id;
    const int pickup = uniform(rng, 0, shape.pickup_beats_max);
    const int bars = uniform(rng, shape.bars_min, shape.bars_max);
    const int beats = pickup + bars * 4 + 1;
    const double beat = uniform(rng, 0.35, 0.7);
    double t = uniform(rng, 0.0, 1.5);
    w.beat_grid.beats_per_bar = 4;
    for (int i = 0; i < beats; ++i) {
        w.beat_grid.beat_times_sec.push_back(t);
        w.beat_grid.downbeat_flags.push_back(i >= pickup && (i - pickup) % 4 == 0);
        t += beat * uniform(rng, 0.9, 1.1);
    }
    const double end = w.beat_grid.beat_times_sec.back();

    const int n = uniform(rng, shape.notes_min, shape.notes_max);
    for (int i = 0; i < n; ++i) {
        const double on = uniform(rng, 0.0, end - 0.05);
        const double dur = std::min(uniform(rng, 0.02, 1.5), end - on);
        w.notes.push_back({on, dur, uniform(rng, shape.pitch_lo, shape.pitch_hi), coin(rng, 0.6) ? Track::melody : Track::vocal});
    }

    double c = shape.full_chords ? 0.0 : uniform(rng, 0.0, 1.0);
    while (c < end - 0.1) {
        const double len = uniform(rng, 0.2, 3.0);
        const double stop = end - (c + len) < 0.1 ? end : c + len;
        if (shape.full_chords) {
            ChordLabel label = random_label(rng);
            while (label.is_none()) label = random_label(rng);
            w.chords.push_back({c, stop, label});
            c = stop;
            continue;
        }
        if (coin(rng, 0.85)) w.chords.push_back({c, stop, random_label(rng)});
        c = stop + (coin(rng, 0.3) ? uniform(rng, 0.0, 0.8) : 0.0);
    }
    return w;
}

/// Random corpus of `n` works with ids "<prefix>000", "<prefix>001", ...
inline std::vector<MusicWork> random_corpus(Rng &rng, int n, const std::string &prefix = "m", const WorkShape &shape = {}) {
    std::vector<MusicWork> out;
    for (int i = 0; i < n; ++i) {
        std::string num = std::to_string(i);
        while (num.size() < 3) num.insert(num.begin(), '0');
        out.push_back(random_work(rng, prefix + num, shape));
    }
    return out;
}

/// Random segments drawn from random works.
inline std::vector<segplag::Segment> random_segments(Rng &rng, std::size_t count, const WorkShape &shape = {}) {
    std::vector<segplag::Segment> out;
    int i = 0;
    while (out.size() < count) {
        auto segs = segplag::enumerate_downbeat_segments(random_work(rng, "s" + std::to_string(i++), shape));
        for (auto &s : segs) {
            if (out.size() < count) out.push_back(std::move(s));
        }
    }
    return out;
}

/// Notes and chord roots shifted together; pitches must stay in range.
inline MusicWork transpose_all(const MusicWork &w, int k) {
    MusicWork out = w;
    for (auto &n : out.notes) n.pitch += k;
    for (auto &c : out.chords) c.label = segplag::transpose(c.label, k);
    return out;
}

}  // namespace fx
