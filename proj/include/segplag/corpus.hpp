#pragma once

// Transcribed works and ground-truth annotations: the engine's input formats.
//
// Corpus files hold one JSON object per line (a MusicWork). Annotation files
// are CSV with the header
//   original_title,comparison_title,relation,original_time,comparison_time,pair_id,acoustic_index
// where the two time columns are bracketed lists such as "[73, 82, 134]".

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/tokenizer.hpp>

#include "json.hpp"
#include "segplag/error.hpp"

namespace segplag {

enum class Track : std::uint8_t { melody, vocal };

struct NoteEvent {
    double onset_sec = 0.0;
    double duration_sec = 0.0;
    int pitch = 0;
    Track track = Track::melody;

    friend bool operator==(const NoteEvent &, const NoteEvent &) = default;
};

struct BeatGrid {
    std::vector<double> beat_times_sec;
    std::vector<bool> downbeat_flags;
    int beats_per_bar = 4;

    /// Positions in beat_times_sec flagged as downbeats, ascending.
    [[nodiscard]] std::vector<std::size_t> downbeat_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < downbeat_flags.size(); ++i) {
            if (downbeat_flags[i]) out.push_back(i);
        }
        return out;
    }

    /// Duration of one bar at the tempo of the final beat interval; 0 for grids with fewer than two beats.
    [[nodiscard]] double last_bar_duration() const {
        const auto n = beat_times_sec.size();
        if (n < 2) return 0.0;
        return beats_per_bar * (beat_times_sec[n - 1] - beat_times_sec[n - 2]);
    }

    friend bool operator==(const BeatGrid &, const BeatGrid &) = default;
};

enum class ChordQuality : std::uint8_t { maj, min, none };

/// A chord symbol: root pitch class 0-11 (absent for "no chord") plus quality.
struct ChordLabel {
    std::optional<int> root;
    ChordQuality quality = ChordQuality::none;

    [[nodiscard]] bool is_none() const noexcept { return !root.has_value(); }

    friend bool operator==(const ChordLabel &, const ChordLabel &) = default;
};

struct ChordSpan {
    double start_sec = 0.0;
    double end_sec = 0.0;
    ChordLabel label;

    friend bool operator==(const ChordSpan &, const ChordSpan &) = default;
};

struct MusicWork {
    std::string music_id;
    std::string title;
    std::vector<NoteEvent> notes;
    BeatGrid beat_grid;
    std::vector<ChordSpan> chords;
    std::optional<std::string> group_id;

    friend bool operator==(const MusicWork &, const MusicWork &) = default;
};

enum class Relation : std::uint8_t { plagiarism, remake };

/// One ground-truth row. Titles come from the file; ids are filled in by resolve_annotations.
struct AnnotationRow {
    std::string original_title;
    std::string comparison_title;
    Relation relation = Relation::plagiarism;
    std::vector<double> original_times_sec;
    std::vector<double> comparison_times_sec;
    std::int64_t pair_id = 0;
    std::int64_t acoustic_index = 0;
    std::string original_id;
    std::string comparison_id;

    friend bool operator==(const AnnotationRow &, const AnnotationRow &) = default;
};

struct Violation {
    std::string field;
    std::string reason;

    friend bool operator==(const Violation &, const Violation &) = default;
};

// ---------------------------------------------------------------------------
// Enum spelling

inline std::string_view to_string(Track t) { return t == Track::melody ? "melody" : "vocal"; }

inline std::string_view to_string(ChordQuality q) {
    switch (q) {
        case ChordQuality::maj: return "maj";
        case ChordQuality::min: return "min";
        case ChordQuality::none: break;
    }
    return "none";
}

inline std::string_view to_string(Relation r) { return r == Relation::plagiarism ? "Plagiarism" : "Remake"; }

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_integer(std::string_view s) {
    s = trim(s);
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

inline Track track_from_string(std::string_view s) {
    const auto l = detail::lower(s);
    if (l == "melody") return Track::melody;
    if (l == "vocal") return Track::vocal;
    throw ParseError("unknown track '" + std::string(s) + "'");
}

inline ChordQuality quality_from_string(std::string_view s) {
    const auto l = detail::lower(s);
    if (l == "maj") return ChordQuality::maj;
    if (l == "min") return ChordQuality::min;
    if (l == "none") return ChordQuality::none;
    throw ParseError("unknown chord quality '" + std::string(s) + "'");
}

inline Relation relation_from_string(std::string_view s) {
    const auto l = detail::lower(detail::trim(s));
    if (l == "plagiarism") return Relation::plagiarism;
    if (l == "remake") return Relation::remake;
    throw ParseError("unknown relation '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Validation

/// Every invariant `work` breaks; an empty result means the work is valid.
inline std::vector<Violation> validate_work(const MusicWork &work) {
    std::vector<Violation> out;
    auto add = [&out](std::string field, std::string reason) { out.push_back({std::move(field), std::move(reason)}); };

    if (work.music_id.empty()) add("music_id", "empty music id");

    const auto &grid = work.beat_grid;
    if (grid.beats_per_bar < 1) add("beat_grid.beats_per_bar", "beats_per_bar must be positive");
    if (grid.downbeat_flags.size() != grid.beat_times_sec.size()) {
        add("beat_grid.downbeat_flags", "length differs from beat_times_sec");
    }
    for (std::size_t i = 0; i < grid.beat_times_sec.size(); ++i) {
        const double t = grid.beat_times_sec[i];
        if (!std::isfinite(t) || t < 0.0) add("beat_grid.beat_times_sec[" + std::to_string(i) + "]", "negative or non-finite beat time");
        if (i > 0 && !(t > grid.beat_times_sec[i - 1])) {
            add("beat_grid.beat_times_sec[" + std::to_string(i) + "]", "beat times not strictly increasing");
        }
    }
    const auto downbeats = grid.downbeat_indices();
    if (downbeats.empty()) {
        add("beat_grid.downbeat_flags", "no downbeat flagged");
    } else if (grid.beats_per_bar >= 1) {
        const auto first = downbeats.front();
        for (std::size_t i = first; i < grid.downbeat_flags.size(); ++i) {
            const bool expected = (i - first) % static_cast<std::size_t>(grid.beats_per_bar) == 0;
            if (grid.downbeat_flags[i] != expected) {
                add("beat_grid.downbeat_flags[" + std::to_string(i) + "]", "downbeat period mismatch");
                break;
            }
        }
    }

    const double last_beat = grid.beat_times_sec.empty() ? 0.0 : grid.beat_times_sec.back();
    const double horizon = last_beat + grid.last_bar_duration() + 1e-9;

    for (std::size_t i = 0; i < work.notes.size(); ++i) {
        const auto &n = work.notes[i];
        const auto field = "notes[" + std::to_string(i) + "]";
        if (!std::isfinite(n.onset_sec) || n.onset_sec < 0.0) add(field + ".onset_sec", "onset must be >= 0");
        if (!std::isfinite(n.duration_sec) || !(n.duration_sec > 0.0)) add(field + ".duration_sec", "duration must be > 0");
        if (n.pitch < 0 || n.pitch > 127) add(field + ".pitch", "pitch out of range");
        if (n.onset_sec + n.duration_sec > horizon) add(field, "note extends past the end of the beat grid");
    }

    for (std::size_t i = 0; i < work.chords.size(); ++i) {
        const auto &c = work.chords[i];
        const auto field = "chords[" + std::to_string(i) + "]";
        if (!(c.start_sec < c.end_sec)) add(field, "start_sec must be < end_sec");
        if (c.start_sec < 0.0 || c.end_sec > horizon) add(field, "chord span outside the beat grid");
        if (c.label.root && (*c.label.root < 0 || *c.label.root > 11)) add(field + ".root", "root out of range");
        if (c.label.root.has_value() == (c.label.quality == ChordQuality::none)) {
            add(field + ".quality", "root and quality must both be none or both be set");
        }
    }
    std::vector<std::size_t> order(work.chords.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return work.chords[a].start_sec < work.chords[b].start_sec; });
    for (std::size_t j = 1; j < order.size(); ++j) {
        const auto &prev = work.chords[order[j - 1]];
        const auto &cur = work.chords[order[j]];
        if (cur.start_sec < prev.end_sec) {
            add("chords", "overlapping chord spans chords[" + std::to_string(order[j - 1]) + "] and chords[" +
                              std::to_string(order[j]) + "]");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus (JSON lines)

inline nlohmann::json to_json(const MusicWork &w) {
    using nlohmann::json;
    json notes = json::array();
    for (const auto &n : w.notes) {
        notes.push_back({{"onset_sec", n.onset_sec}, {"duration_sec", n.duration_sec}, {"pitch", n.pitch},
                         {"track", to_string(n.track)}});
    }
    json chords = json::array();
    for (const auto &c : w.chords) {
        chords.push_back({{"start_sec", c.start_sec},
                          {"end_sec", c.end_sec},
                          {"root", c.label.root ? json(*c.label.root) : json(nullptr)},
                          {"quality", to_string(c.label.quality)}});
    }
    json flags = json::array();
    for (bool f : w.beat_grid.downbeat_flags) flags.push_back(f);
    json out = {{"music_id", w.music_id},
                {"title", w.title},
                {"notes", std::move(notes)},
                {"beat_grid",
                 {{"beat_times_sec", w.beat_grid.beat_times_sec},
                  {"downbeat_flags", std::move(flags)},
                  {"beats_per_bar", w.beat_grid.beats_per_bar}}},
                {"chords", std::move(chords)}};
    if (w.group_id) out["group_id"] = *w.group_id;
    return out;
}

inline MusicWork work_from_json(const nlohmann::json &j) {
    MusicWork w;
    try {
        w.music_id = j.at("music_id").get<std::string>();
        w.title = j.at("title").get<std::string>();
        if (auto it = j.find("group_id"); it != j.end() && !it->is_null()) w.group_id = it->get<std::string>();
        const auto &g = j.at("beat_grid");
        w.beat_grid.beat_times_sec = g.at("beat_times_sec").get<std::vector<double>>();
        w.beat_grid.downbeat_flags = g.at("downbeat_flags").get<std::vector<bool>>();
        w.beat_grid.beats_per_bar = g.at("beats_per_bar").get<int>();
        for (const auto &n : j.at("notes")) {
            w.notes.push_back({n.at("onset_sec").get<double>(), n.at("duration_sec").get<double>(), n.at("pitch").get<int>(),
                               track_from_string(n.at("track").get<std::string>())});
        }
        for (const auto &c : j.at("chords")) {
            ChordSpan span{c.at("start_sec").get<double>(), c.at("end_sec").get<double>(), {}};
            if (const auto &r = c.at("root"); !r.is_null()) span.label.root = r.get<int>();
            span.label.quality = quality_from_string(c.at("quality").get<std::string>());
            w.chords.push_back(span);
        }
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("malformed work record: ") + e.what());
    }
    return w;
}

/// One corpus line (no trailing newline).
inline std::string serialize_work(const MusicWork &w) { return to_json(w).dump(); }

/// Parses and validates one corpus line; errors carry `line_no`.
inline MusicWork parse_work_line(std::string_view line, std::size_t line_no = 0) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    MusicWork w;
    try {
        w = work_from_json(j);
    } catch (const ParseError &e) {
        throw ParseError(e.what(), line_no);
    }
    if (const auto violations = validate_work(w); !violations.empty()) {
        throw ValidationError(violations.front().field + ": " + violations.front().reason, line_no);
    }
    return w;
}

inline std::vector<MusicWork> read_corpus(std::istream &in) {
    std::vector<MusicWork> works;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto w = parse_work_line(line, line_no);
        if (auto [it, inserted] = seen.emplace(w.music_id, line_no); !inserted) {
            throw ValidationError("duplicate music_id '" + w.music_id + "' (first seen on line " + std::to_string(it->second) + ")",
                                  line_no);
        }
        works.push_back(std::move(w));
    }
    return works;
}

inline std::vector<MusicWork> parse_corpus(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file '" + path + "'");
    try {
        return read_corpus(in);
    } catch (const ParseError &e) {
        throw e.prefixed(path + ": ");
    } catch (const ValidationError &e) {
        throw e.prefixed(path + ": ");
    }
}

inline void write_corpus(std::ostream &out, const std::vector<MusicWork> &works) {
    for (const auto &w : works) out << serialize_work(w) << '\n';
}

// ---------------------------------------------------------------------------
// Annotations (CSV)

inline constexpr std::string_view kAnnotationHeader =
    "original_title,comparison_title,relation,original_time,comparison_time,pair_id,acoustic_index";

namespace detail {

inline std::vector<std::string> split_csv(const std::string &line) {
    using Sep = boost::escaped_list_separator<char>;
    boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
    return {tok.begin(), tok.end()};
}

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\\\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

inline std::vector<double> parse_time_list(std::string_view text, std::size_t line_no, std::string_view column) {
    auto s = trim(text);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
        throw ParseError(std::string(column) + ": time list must be bracketed", line_no);
    }
    s = s.substr(1, s.size() - 2);
    std::vector<double> out;
    while (true) {
        const auto comma = s.find(',');
        const auto item = trim(s.substr(0, comma));
        if (item == "..." || (item.empty() && comma == std::string_view::npos && out.empty())) {
            // truncated listing or empty list
        } else {
            const auto v = parse_number(item);
            if (!v) throw ParseError(std::string(column) + ": non-numeric time '" + std::string(item) + "'", line_no);
            out.push_back(*v);
        }
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

inline std::string format_time_list(const std::vector<double> &times) {
    std::string out = "[";
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i) out += ", ";
        out += format_number(times[i]);
    }
    return out + "]";
}

}  // namespace detail

/// Row-local invariants; reports the first problem found.
inline std::optional<std::string> check_annotation_row(const AnnotationRow &row) {
    if (row.original_times_sec.empty()) return "empty time lists";
    if (row.original_times_sec.size() != row.comparison_times_sec.size()) {
        return "time list length mismatch (" + std::to_string(row.original_times_sec.size()) + " original vs " +
               std::to_string(row.comparison_times_sec.size()) + " comparison)";
    }
    for (const auto *list : {&row.original_times_sec, &row.comparison_times_sec}) {
        for (std::size_t i = 0; i < list->size(); ++i) {
            if ((*list)[i] < 0.0) return "negative time";
            if (i > 0 && (*list)[i] < (*list)[i - 1]) return "times not ascending";
        }
    }
    return std::nullopt;
}

inline std::vector<AnnotationRow> read_annotations(std::istream &in) {
    std::vector<AnnotationRow> rows;
    std::map<std::int64_t, std::size_t> acoustic_seen;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        if (!header_seen) {
            auto cols = detail::split_csv(line);
            for (auto &c : cols) c = detail::lower(detail::trim(c));
            std::vector<std::string> expected;
            std::string hdr(kAnnotationHeader);
            for (auto &c : detail::split_csv(hdr)) expected.push_back(c);
            if (cols != expected) throw ParseError("annotation header does not match '" + hdr + "'", line_no);
            header_seen = true;
            continue;
        }
        std::vector<std::string> f;
        try {
            f = detail::split_csv(line);
        } catch (const boost::escaped_list_error &e) {
            throw ParseError(std::string("malformed CSV: ") + e.what(), line_no);
        }
        if (f.size() != 7) throw ParseError("expected 7 columns, found " + std::to_string(f.size()), line_no);

        AnnotationRow row;
        row.original_title = std::string(detail::trim(f[0]));
        row.comparison_title = std::string(detail::trim(f[1]));
        try {
            row.relation = relation_from_string(f[2]);
        } catch (const ParseError &e) {
            throw ParseError(e.what(), line_no);
        }
        row.original_times_sec = detail::parse_time_list(f[3], line_no, "original_time");
        row.comparison_times_sec = detail::parse_time_list(f[4], line_no, "comparison_time");
        const auto pair = detail::parse_integer(f[5]);
        const auto acoustic = detail::parse_integer(f[6]);
        if (!pair) throw ParseError("pair_id: not an integer", line_no);
        if (!acoustic) throw ParseError("acoustic_index: not an integer", line_no);
        row.pair_id = *pair;
        row.acoustic_index = *acoustic;
        if (auto problem = check_annotation_row(row)) throw ValidationError(*problem, line_no);
        if (auto [it, inserted] = acoustic_seen.emplace(row.acoustic_index, line_no); !inserted) {
            throw ValidationError("duplicate acoustic_index " + std::to_string(row.acoustic_index) + " (first on line " +
                                      std::to_string(it->second) + ")",
                                  line_no);
        }
        rows.push_back(std::move(row));
    }
    if (!header_seen) throw ParseError("missing annotation header");
    return rows;
}

inline std::vector<AnnotationRow> parse_annotations(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open annotation file '" + path + "'");
    try {
        return read_annotations(in);
    } catch (const ParseError &e) {
        throw e.prefixed(path + ": ");
    } catch (const ValidationError &e) {
        throw e.prefixed(path + ": ");
    }
}

inline void write_annotations(std::ostream &out, const std::vector<AnnotationRow> &rows) {
    out << kAnnotationHeader << '\n';
    for (const auto &r : rows) {
        out << detail::csv_field(r.original_title) << ',' << detail::csv_field(r.comparison_title) << ','
            << to_string(r.relation) << ",\"" << detail::format_time_list(r.original_times_sec) << "\",\""
            << detail::format_time_list(r.comparison_times_sec) << "\"," << r.pair_id << ',' << r.acoustic_index << '\n';
    }
}

/// Fills original_id / comparison_id by title lookup. A title shared by several works is ambiguous
/// and counts as unresolved when an annotation references it.
inline void resolve_annotations(std::vector<AnnotationRow> &rows, const std::vector<MusicWork> &works) {
    std::map<std::string, std::vector<std::string>> by_title;
    std::set<std::string> ids;
    for (const auto &w : works) {
        by_title[w.title].push_back(w.music_id);
        ids.insert(w.music_id);
    }
    std::set<std::string> unresolved;
    auto lookup = [&](const std::string &title, const std::string &preset) -> std::string {
        if (!preset.empty() && ids.count(preset)) return preset;
        const auto it = by_title.find(title);
        if (it == by_title.end() || it->second.size() != 1) {
            unresolved.insert(it == by_title.end() ? title : title + " (ambiguous)");
            return {};
        }
        return it->second.front();
    };
    for (auto &r : rows) {
        r.original_id = lookup(r.original_title, r.original_id);
        r.comparison_id = lookup(r.comparison_title, r.comparison_id);
    }
    if (!unresolved.empty()) {
        std::string msg = "unresolved annotation titles:";
        for (const auto &t : unresolved) msg += " '" + t + "'";
        throw ValidationError(msg);
    }
}

}  // namespace segplag
