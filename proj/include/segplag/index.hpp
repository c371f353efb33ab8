#pragma once

// Searchable segment library: build, exact top-k retrieval, binary persistence.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "segplag/corpus.hpp"
#include "segplag/error.hpp"
#include "segplag/io.hpp"
#include "segplag/segmenter.hpp"
#include "segplag/similarity.hpp"

namespace segplag {

/// Raster shape shared by every entry of an index.
struct IndexGrid {
    int beats_per_bar = 4;
    int cells_per_beat = 4;
    int bar_count = 4;

    friend bool operator==(const IndexGrid &, const IndexGrid &) = default;
};

struct RetrievalHit {
    std::size_t entry_id = 0;
    std::string music_id;
    double start_sec = 0.0;
    double score = 0.0;
    FacetScores facets;
    std::size_t rank = 0;

    friend bool operator==(const RetrievalHit &, const RetrievalHit &) = default;
};

/// Total retrieval order: score descending, then music id, start time and entry id ascending.
inline bool ranks_before(double score_a, const std::string &music_a, double start_a, std::size_t id_a, double score_b,
                         const std::string &music_b, double start_b, std::size_t id_b) {
    if (score_a != score_b) return score_a > score_b;
    if (const int c = music_a.compare(music_b); c != 0) return c < 0;
    if (start_a != start_b) return start_a < start_b;
    return id_a < id_b;
}

inline bool ranks_before(const RetrievalHit &a, const RetrievalHit &b) {
    return ranks_before(a.score, a.music_id, a.start_sec, a.entry_id, b.score, b.music_id, b.start_sec, b.entry_id);
}

using MusicSet = std::set<std::string, std::less<>>;

class SegmentIndex {
  public:
    struct MusicRange {
        std::string music_id;
        std::size_t begin = 0;
        std::size_t end = 0;

        friend bool operator==(const MusicRange &, const MusicRange &) = default;
    };

    SegmentIndex() = default;

    /// Takes ownership of `segments`. Segments of one music must be contiguous; every segment must
    /// match `grid`. Weights are normalized unless `weights_normalized` says they already are.
    SegmentIndex(std::vector<Segment> segments, const IndexGrid &grid, const SimilarityWeights &weights,
                 bool weights_normalized = false)
        : grid_(grid), weights_(weights_normalized ? weights : weights.normalized()), entries_(std::move(segments)) {
        std::set<std::string, std::less<>> closed;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto &s = entries_[i];
            if (s.beats_per_bar != grid_.beats_per_bar || s.cells_per_beat != grid_.cells_per_beat || s.bar_count != grid_.bar_count) {
                throw GridMismatch("segment " + std::to_string(i) + " of '" + s.music_id + "' does not match the index grid");
            }
            if (by_music_.empty() || by_music_.back().music_id != s.music_id) {
                if (!by_music_.empty()) closed.insert(by_music_.back().music_id);
                if (closed.count(s.music_id)) throw ValidationError("segments of '" + s.music_id + "' are not contiguous");
                by_music_.push_back({s.music_id, i, i});
            }
            by_music_.back().end = i + 1;
        }
        profiles_.reserve(entries_.size());
        for (const auto &s : entries_) profiles_.emplace_back(s);
    }

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] const std::vector<Segment> &entries() const noexcept { return entries_; }
    [[nodiscard]] const Segment &entry(std::size_t id) const { return entries_.at(id); }
    [[nodiscard]] const std::vector<MusicRange> &by_music() const noexcept { return by_music_; }
    [[nodiscard]] const IndexGrid &grid() const noexcept { return grid_; }
    [[nodiscard]] const SimilarityWeights &weights() const noexcept { return weights_; }
    [[nodiscard]] std::size_t music_count() const noexcept { return by_music_.size(); }

    [[nodiscard]] bool accepts(const Segment &q) const noexcept {
        return q.beats_per_bar == grid_.beats_per_bar && q.cells_per_beat == grid_.cells_per_beat && q.bar_count == grid_.bar_count;
    }

    /// The k best entries outside `exclude_music`, in retrieval order, with ranks 1..k.
    /// Exhaustive scoring; a candidate is skipped only when its onset-based upper bound is strictly
    /// below the current k-th score, which cannot change the result.
    [[nodiscard]] std::vector<RetrievalHit> query_topk(const Segment &q, std::size_t k, const MusicSet &exclude_music = {}) const {
        if (k == 0) throw ConfigError("k must be >= 1");
        if (!accepts(q)) throw GridMismatch("query grid does not match the index grid");
        const SegmentProfile qp(q);

        struct Candidate {
            double score;
            std::size_t id;
            FacetScores facets;
        };
        // Heap ordered by retrieval order, so the front is the current k-th best.
        auto better = [this](const Candidate &a, const Candidate &b) {
            const auto &ea = entries_[a.id];
            const auto &eb = entries_[b.id];
            return ranks_before(a.score, ea.music_id, ea.start_sec, a.id, b.score, eb.music_id, eb.start_sec, b.id);
        };
        std::vector<Candidate> heap;
        heap.reserve(k + 1);

        for (const auto &range : by_music_) {
            if (exclude_music.count(range.music_id)) continue;
            for (std::size_t id = range.begin; id < range.end; ++id) {
                const auto &e = entries_[id];
                const double onset = detail::onset_similarity(q, qp, e, profiles_[id]);
                if (heap.size() == k && detail::combined_upper_bound(weights_, onset) < heap.front().score) continue;
                const auto sim = detail::combine(q, qp, e, profiles_[id], weights_, onset);
                Candidate c{sim.score, id, sim.facets};
                if (heap.size() < k) {
                    heap.push_back(c);
                    std::push_heap(heap.begin(), heap.end(), better);
                } else if (better(c, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), better);
                    heap.back() = c;
                    std::push_heap(heap.begin(), heap.end(), better);
                }
            }
        }
        std::sort_heap(heap.begin(), heap.end(), better);

        std::vector<RetrievalHit> hits;
        hits.reserve(heap.size());
        for (const auto &c : heap) {
            const auto &e = entries_[c.id];
            hits.push_back({c.id, e.music_id, e.start_sec, c.score, c.facets, hits.size() + 1});
        }
        return hits;
    }

    /// query_topk for each query, results in query order.
    [[nodiscard]] std::vector<std::vector<RetrievalHit>> batch_query(const std::vector<Segment> &queries, std::size_t k,
                                                                     const MusicSet &exclude_music = {}) const {
        std::vector<std::vector<RetrievalHit>> out;
        out.reserve(queries.size());
        for (const auto &q : queries) out.push_back(query_topk(q, k, exclude_music));
        return out;
    }

    friend bool operator==(const SegmentIndex &a, const SegmentIndex &b) {
        return a.grid_ == b.grid_ && a.weights_ == b.weights_ && a.entries_ == b.entries_ && a.by_music_ == b.by_music_;
    }

  private:
    IndexGrid grid_;
    SimilarityWeights weights_ = SimilarityWeights{}.normalized();
    std::vector<Segment> entries_;
    std::vector<MusicRange> by_music_;
    std::vector<SegmentProfile> profiles_;
};

/// Index over every downbeat segment of every work, in work order then start time.
inline SegmentIndex build_index(const std::vector<MusicWork> &works, const SimilarityWeights &weights = {}, const GridParams &grid = {}) {
    std::set<std::string, std::less<>> ids;
    std::optional<int> beats_per_bar;
    std::vector<Segment> segments;
    for (const auto &w : works) {
        if (!ids.insert(w.music_id).second) throw ValidationError("duplicate music_id '" + w.music_id + "'");
        auto segs = enumerate_downbeat_segments(w, grid);
        if (segs.empty()) continue;
        if (beats_per_bar && *beats_per_bar != w.beat_grid.beats_per_bar) {
            throw GridMismatch("work '" + w.music_id + "' has " + std::to_string(w.beat_grid.beats_per_bar) + " beats per bar, index has " +
                               std::to_string(*beats_per_bar));
        }
        beats_per_bar = w.beat_grid.beats_per_bar;
        std::move(segs.begin(), segs.end(), std::back_inserter(segments));
    }
    return SegmentIndex(std::move(segments), {beats_per_bar.value_or(4), grid.cells_per_beat, grid.bar_count}, weights);
}

// ---------------------------------------------------------------------------
// Binary container:
//   magic "SEGPLIDX" | u32 version | u32 beats_per_bar | u32 cells_per_beat | u32 bar_count
//   | f64 w_pianoroll | f64 w_onset | f64 w_chord | u64 entry count | entries... | u32 crc32
// All integers and floats little-endian. Each entry:
//   u32 id length, id bytes | f64 start | f64 end | 3 x roll (union, melody, vocal) | onset words | chords
//   roll: u16 occupied rows, then per row u8 pitch + words_per_row u64
//   chord: u8 root (0xFF = none) + u8 quality

inline constexpr std::string_view kIndexMagic = "SEGPLIDX";
inline constexpr std::uint32_t kIndexVersion = 1;

namespace detail {

class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void bytes(std::string_view s) { buf_.append(s); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    [[nodiscard]] const std::string &buffer() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }

  private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::string buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() {
        const auto bits = u64();
        double v = 0;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::string str() { return std::string(bytes(u32())); }
    [[nodiscard]] bool at_end() const noexcept { return pos_ == data_.size(); }

  private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError("corrupt index file: unexpected end of data");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

inline void write_roll(ByteWriter &w, const PianoRoll &roll) {
    std::uint16_t rows = 0;
    for (int p = 0; p < kPitchCount; ++p) rows += roll.row_empty(p) ? 0 : 1;
    w.u16(rows);
    for (int p = 0; p < kPitchCount; ++p) {
        if (roll.row_empty(p)) continue;
        w.u8(static_cast<std::uint8_t>(p));
        for (auto word : roll.row(p)) w.u64(word);
    }
}

inline PianoRoll read_roll(ByteReader &r, std::size_t cells, int cells_per_beat) {
    PianoRoll roll(cells, cells_per_beat);
    const auto rows = r.u16();
    if (rows > kPitchCount) throw FormatError("corrupt index file: bad row count");
    for (std::uint16_t i = 0; i < rows; ++i) {
        const auto p = r.u8();
        if (p >= kPitchCount) throw FormatError("corrupt index file: bad pitch");
        for (auto &word : roll.mutable_row(p)) word = r.u64();
    }
    return roll;
}

}  // namespace detail

/// Full file image including the trailing checksum.
inline std::string serialize_index(const SegmentIndex &index) {
    detail::ByteWriter w;
    w.bytes(kIndexMagic);
    w.u32(kIndexVersion);
    const auto &g = index.grid();
    w.u32(static_cast<std::uint32_t>(g.beats_per_bar));
    w.u32(static_cast<std::uint32_t>(g.cells_per_beat));
    w.u32(static_cast<std::uint32_t>(g.bar_count));
    w.f64(index.weights().pianoroll);
    w.f64(index.weights().onset);
    w.f64(index.weights().chord);
    w.u64(index.size());
    for (const auto &s : index.entries()) {
        w.str(s.music_id);
        w.f64(s.start_sec);
        w.f64(s.end_sec);
        detail::write_roll(w, s.roll_union);
        detail::write_roll(w, s.roll_melody);
        detail::write_roll(w, s.roll_vocal);
        for (auto word : s.onsets.words()) w.u64(word);
        for (const auto &c : s.chords) {
            w.u8(c.root ? static_cast<std::uint8_t>(*c.root) : 0xFF);
            w.u8(static_cast<std::uint8_t>(c.quality));
        }
    }
    auto out = w.take();
    detail::ByteWriter trailer;
    trailer.u32(crc32_of(out));
    out += trailer.buffer();
    return out;
}

inline SegmentIndex deserialize_index(std::string_view data) {
    const std::size_t header = kIndexMagic.size() + 4;
    if (data.size() < header || data.substr(0, kIndexMagic.size()) != kIndexMagic) {
        throw FormatError("corrupt index file: bad magic");
    }
    detail::ByteReader head(data.substr(kIndexMagic.size(), 4));
    if (const auto version = head.u32(); version != kIndexVersion) {
        throw FormatError("index version mismatch: file has " + std::to_string(version) + ", expected " + std::to_string(kIndexVersion));
    }
    if (data.size() < header + 4) throw FormatError("corrupt index file: truncated");
    const auto body = data.substr(0, data.size() - 4);
    detail::ByteReader tail(data.substr(data.size() - 4));
    if (tail.u32() != crc32_of(body)) throw FormatError("corrupt index file: checksum mismatch");

    detail::ByteReader r(body.substr(header));
    IndexGrid grid;
    grid.beats_per_bar = static_cast<int>(r.u32());
    grid.cells_per_beat = static_cast<int>(r.u32());
    grid.bar_count = static_cast<int>(r.u32());
    if (grid.beats_per_bar < 1 || grid.cells_per_beat < 1 || grid.bar_count < 1 || grid.beats_per_bar > 64 || grid.cells_per_beat > 64 ||
        grid.bar_count > 64) {
        throw FormatError("corrupt index file: bad grid parameters");
    }
    SimilarityWeights weights;
    weights.pianoroll = r.f64();
    weights.onset = r.f64();
    weights.chord = r.f64();
    const auto count = r.u64();
    const auto beats = static_cast<std::size_t>(grid.bar_count * grid.beats_per_bar);
    const auto cells = beats * static_cast<std::size_t>(grid.cells_per_beat);

    std::vector<Segment> segments;
    for (std::uint64_t i = 0; i < count; ++i) {
        Segment s;
        s.music_id = r.str();
        s.start_sec = r.f64();
        s.end_sec = r.f64();
        s.bar_count = grid.bar_count;
        s.beats_per_bar = grid.beats_per_bar;
        s.cells_per_beat = grid.cells_per_beat;
        s.roll_union = detail::read_roll(r, cells, grid.cells_per_beat);
        s.roll_melody = detail::read_roll(r, cells, grid.cells_per_beat);
        s.roll_vocal = detail::read_roll(r, cells, grid.cells_per_beat);
        s.onsets = OnsetVector(cells);
        for (auto &word : s.onsets.words()) word = r.u64();
        s.chords.resize(beats);
        for (auto &c : s.chords) {
            const auto root = r.u8();
            const auto quality = r.u8();
            if ((root != 0xFF && root > 11) || quality > 2) throw FormatError("corrupt index file: bad chord label");
            if (root != 0xFF) c.root = root;
            c.quality = static_cast<ChordQuality>(quality);
        }
        segments.push_back(std::move(s));
    }
    if (!r.at_end()) throw FormatError("corrupt index file: trailing bytes");
    try {
        return SegmentIndex(std::move(segments), grid, weights, true);
    } catch (const Error &e) {
        throw FormatError(std::string("corrupt index file: ") + e.what());
    }
}

inline void persist(const SegmentIndex &index, const std::string &path) { write_file_atomic(path, serialize_index(index)); }

inline SegmentIndex load(const std::string &path) { return deserialize_index(read_file(path)); }

/// CRC-32 trailer of the serialized index, as stored in the file.
inline std::uint32_t index_checksum(const SegmentIndex &index) {
    const auto bytes = serialize_index(index);
    detail::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
    return tail.u32();
}

}  // namespace segplag
