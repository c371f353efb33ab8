#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "segplag/index.hpp"
#include "segplag/io.hpp"
#include "segplag/synthgen.hpp"

using namespace segplag;

namespace {

/// Work with `downbeats` downbeats in 4/4 and a few notes in every bar.
MusicWork bars_work(const std::string &id, int downbeats) {
    auto w = fx::make_work(id, (downbeats - 1) * 4 + 1);
    for (int b = 0; b < downbeats - 1; ++b) {
        fx::add_note(w, b * 2.0, 0.5, 60 + b % 7);
        fx::add_note(w, b * 2.0 + 1.0, 0.25, 64 + b % 5, Track::vocal);
        w.chords.push_back({b * 2.0, b * 2.0 + 2.0, fx::chord(b % 12, ChordQuality::maj)});
    }
    return w;
}

void expect_same_hits(const std::vector<RetrievalHit> &hits, const std::vector<oracle::Hit> &ref) {
    ASSERT_EQ(hits.size(), ref.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        EXPECT_EQ(hits[i].entry_id, ref[i].id) << "rank " << i + 1;
        EXPECT_EQ(hits[i].score, ref[i].score) << "rank " << i + 1;
        EXPECT_EQ(hits[i].rank, i + 1);
    }
}

}  // namespace

TEST(BuildIndex, EntryCountFollowsDownbeats) {
    const auto index = build_index({bars_work("a", 10), bars_work("b", 6)});
    EXPECT_EQ(index.size(), 8U);
    ASSERT_EQ(index.by_music().size(), 2U);
    EXPECT_EQ(index.by_music()[0].end, 6U);
    EXPECT_EQ(index.by_music()[1].begin, 6U);
    for (std::size_t i = 1; i < 6; ++i) EXPECT_LT(index.entry(i - 1).start_sec, index.entry(i).start_sec);
}

TEST(BuildIndex, EmptyLibrary) {
    const auto index = build_index({});
    EXPECT_TRUE(index.empty());
    const auto q = enumerate_downbeat_segments(bars_work("q", 5)).front();
    EXPECT_TRUE(index.query_topk(q, 5).empty());
}

TEST(BuildIndex, DuplicateIdRejected) {
    EXPECT_THROW(build_index({bars_work("a", 6), bars_work("a", 7)}), ValidationError);
}

TEST(BuildIndex, MixedMetersRejected) {
    auto waltz = fx::make_work("c", 6 * 3 + 1, 0.5, 3);
    EXPECT_THROW(build_index({bars_work("a", 6), waltz}), GridMismatch);
}

TEST(BuildIndex, NonContiguousMusicRejected) {
    auto segs = enumerate_downbeat_segments(bars_work("a", 6));
    auto other = enumerate_downbeat_segments(bars_work("b", 5));
    segs.insert(segs.begin() + 1, other.front());
    EXPECT_THROW(SegmentIndex(segs, IndexGrid{}, SimilarityWeights{}), ValidationError);
}

TEST(BuildIndex, FullIndicesScaleArithmetic) {
    // 174 pieces at ~143 windows each against the reported average of 24,843 entries.
    auto w = fx::make_work("long", 146 * 4 + 1);
    const auto per_work = window_starts(w).size();
    EXPECT_EQ(per_work, 143U);
    const double total = 174.0 * static_cast<double>(per_work);
    EXPECT_LT(std::abs(total - 24843.0) / 24843.0, 0.005);
}

TEST(Query, IdentityRetrieval) {
    const auto index = build_index({bars_work("a", 10), bars_work("b", 6)});
    const auto &e = index.entry(3);
    const auto hits = index.query_topk(e, 1);
    ASSERT_EQ(hits.size(), 1U);
    EXPECT_EQ(hits[0].entry_id, 3U);
    EXPECT_DOUBLE_EQ(hits[0].score, 1.0);
    EXPECT_EQ(hits[0].rank, 1U);
    EXPECT_EQ(hits[0].facets.transposition, 0);
}

TEST(Query, SelfExclusion) {
    const auto index = build_index({bars_work("a", 10), bars_work("b", 6)});
    const auto hits = index.query_topk(index.entry(0), 50, {"a"});
    EXPECT_EQ(hits.size(), 2U);
    for (const auto &h : hits) EXPECT_EQ(h.music_id, "b");
}

TEST(Query, FewerThanKWhenLibrarySmall) {
    const auto index = build_index({bars_work("a", 7)});
    EXPECT_EQ(index.query_topk(index.entry(0), 10).size(), 3U);
}

TEST(Query, ErrorsOnBadKAndGrid) {
    const auto index = build_index({bars_work("a", 7)});
    EXPECT_THROW((void)index.query_topk(index.entry(0), 0), ConfigError);
    auto q = index.entry(0);
    q.cells_per_beat = 2;
    EXPECT_THROW((void)index.query_topk(q, 1), GridMismatch);
}

TEST(Query, TiesBrokenByMusicThenStart) {
    // Three identical works: every window of each scores the same against the query.
    const auto base = bars_work("x", 6);
    auto a = base, b = base, c = base;
    a.music_id = "c";
    b.music_id = "a";
    c.music_id = "b";
    const auto index = build_index({a, b, c});
    const auto hits = index.query_topk(index.entry(0), 9);
    ASSERT_EQ(hits.size(), 6U);
    for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_TRUE(ranks_before(hits[i - 1], hits[i]));
    // successive windows are transpositions of one another, so all six tie at 1.0
    const std::vector<std::string> order{"a", "a", "b", "b", "c", "c"};
    for (std::size_t i = 0; i < hits.size(); ++i) {
        EXPECT_DOUBLE_EQ(hits[i].score, 1.0);
        EXPECT_EQ(hits[i].music_id, order[i]);
        EXPECT_DOUBLE_EQ(hits[i].start_sec, i % 2 ? 2.0 : 0.0);
    }
}

TEST(Query, MatchesBruteForceOn200Entries) {
    fx::Rng rng(77);
    auto works = fx::random_corpus(rng, 40);
    std::vector<MusicWork> kept;
    std::size_t total = 0;
    for (auto &w : works) {
        const auto n = window_starts(w).size();
        if (total + n > 200) continue;
        total += n;
        kept.push_back(std::move(w));
    }
    const auto index = build_index(kept);
    ASSERT_GE(index.size(), 150U);
    const auto queries = fx::random_segments(rng, 10);
    for (const auto &q : queries) {
        expect_same_hits(index.query_topk(q, 10), oracle::topk(index.entries(), q, 10, {}));
    }
    // k larger than the library returns a full sort
    expect_same_hits(index.query_topk(queries[0], 1000), oracle::topk(index.entries(), queries[0], 1000, {}));
}

TEST(Query, ExclusionMatchesBruteForce) {
    fx::Rng rng(5);
    const auto index = build_index(fx::random_corpus(rng, 8));
    const auto &q = index.entry(0);
    const MusicSet ex{q.music_id, "m003"};
    const auto hits = index.query_topk(q, 15, ex);
    expect_same_hits(hits, oracle::topk(index.entries(), q, 15, {q.music_id, "m003"}));
    for (const auto &h : hits) EXPECT_FALSE(ex.count(h.music_id));
}

TEST(Query, NonDefaultWeights) {
    fx::Rng rng(8);
    const SimilarityWeights w{0.2, 0.7, 0.1};
    const auto index = build_index(fx::random_corpus(rng, 6), w);
    const auto q = fx::random_segments(rng, 1).front();
    expect_same_hits(index.query_topk(q, 7), oracle::topk(index.entries(), q, 7, {}, w));
}

TEST(Batch, EqualsSingleCalls) {
    fx::Rng rng(9);
    const auto index = build_index(fx::random_corpus(rng, 10));
    const auto queries = fx::random_segments(rng, 20);
    const auto batch = index.batch_query(queries, 5, {"m001"});
    ASSERT_EQ(batch.size(), 20U);
    for (std::size_t i = 0; i < queries.size(); ++i) EXPECT_EQ(batch[i], index.query_topk(queries[i], 5, {"m001"}));
    EXPECT_EQ(index.batch_query({queries[0]}, 5).front(), index.query_topk(queries[0], 5));
    EXPECT_TRUE(index.batch_query({}, 5).empty());
}

TEST(Persist, SmallRoundTrip) {
    const auto index = build_index({bars_work("a", 10), bars_work("b", 6)}, {1, 2, 1});
    fx::TempDir dir;
    const auto path = dir.file("small.idx");
    persist(index, path);
    const auto back = load(path);
    EXPECT_EQ(back.size(), 8U);
    EXPECT_TRUE(back == index);
    EXPECT_EQ(serialize_index(back), read_file(path));
    EXPECT_EQ(index_checksum(back), index_checksum(index));
}

TEST(Persist, SynthIndexRoundTripEntryByEntry) {
    SynthSpec spec;
    spec.n_works = 175;
    spec.seed = 4;
    const auto corpus = generate_corpus(spec);
    const auto index = build_index(corpus.works);
    ASSERT_GE(index.size(), 5000U);
    const auto back = deserialize_index(serialize_index(index));
    ASSERT_EQ(back.size(), index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        ASSERT_EQ(back.entry(i), index.entry(i)) << "entry " << i;
    }
    EXPECT_EQ(back.by_music(), index.by_music());
    EXPECT_EQ(back.grid(), index.grid());
    EXPECT_EQ(back.weights(), index.weights());
}

TEST(Persist, TruncatedFileIsCorrupt) {
    const auto bytes = serialize_index(build_index({bars_work("a", 8)}));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{14}, bytes.size() / 2, bytes.size() - 1}) {
        EXPECT_THROW(deserialize_index(std::string_view(bytes).substr(0, cut)), FormatError) << cut;
    }
}

TEST(Persist, FlippedByteFailsChecksum) {
    auto bytes = serialize_index(build_index({bars_work("a", 8)}));
    bytes[bytes.size() / 2] ^= 0x10;
    try {
        deserialize_index(bytes);
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }
}

TEST(Persist, VersionMismatch) {
    auto bytes = serialize_index(build_index({bars_work("a", 8)}));
    bytes[8] = 9;
    try {
        deserialize_index(bytes);
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
}

TEST(Persist, LoadMissingFileIsIoError) {
    fx::TempDir dir;
    EXPECT_THROW(load(dir.file("nope.idx")), IoError);
}

TEST(Persist, EmptyIndexRoundTrips) {
    const auto index = build_index({});
    EXPECT_TRUE(deserialize_index(serialize_index(index)) == index);
}

TEST(Persist, ByteIdenticalRebuild) {
    fx::Rng r1(31), r2(31);
    EXPECT_EQ(serialize_index(build_index(fx::random_corpus(r1, 5))), serialize_index(build_index(fx::random_corpus(r2, 5))));
}
