#pragma once

// Pipeline commands behind the `segplag` tool: ingest, index, query, eval and synth.
//
// Commands take resolved arguments, write their files atomically and print a short summary to the
// given stream. Failures surface as exceptions; run_command maps them to exit codes.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "segplag/corpus.hpp"
#include "segplag/error.hpp"
#include "segplag/eval.hpp"
#include "segplag/index.hpp"
#include "segplag/io.hpp"
#include "segplag/segmenter.hpp"
#include "segplag/similarity.hpp"
#include "segplag/synthgen.hpp"
#include "segplag/verdict.hpp"

#ifndef SEGPLAG_VERSION
#define SEGPLAG_VERSION "0.0.0"
#endif

namespace segplag {

inline constexpr std::string_view kToolVersion = SEGPLAG_VERSION;

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitParse = 2,
    kExitValidation = 3,
    kExitIo = 4,
    kExitConfig = 5,
};

struct RunConfig {
    SimilarityWeights weights;
    GridParams grid;
    std::size_t k = kVoteDepth;  ///< vote depth of `query`
    double threshold = kDefaultReportThreshold;
    std::size_t top_n = 5;  ///< candidates per query in the match report
    std::vector<EvalMode> modes = {EvalMode::smp_timestamps, EvalMode::smp_all_segments, EvalMode::full_indices};
    std::vector<std::size_t> k_values = {1, 5, 10};
    double tolerance = 1.0;
    int folds = 5;
    std::uint64_t seed = 0;

    EvalConfig eval_config(EvalMode mode) const {
        EvalConfig c;
        c.mode = mode;
        c.k_values = k_values;
        c.temporal_tolerance_sec = tolerance;
        c.folds = folds;
        c.fold_seed = seed;
        c.grid = grid;
        c.weights = weights;
        return c;
    }

    void validate() const {
        (void)weights.normalized();
        if (grid.cells_per_beat < 1) throw ConfigError("cells_per_beat must be >= 1");
        if (grid.bar_count < 1) throw ConfigError("bar_count must be >= 1");
        if (k < 1 || k > kVoteDepth) throw ConfigError("k must be in 1..20");
        if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
        eval_config(EvalMode::smp_timestamps).validate();
    }

    /// Canonical key=value text; its crc32 is the config hash in provenance headers.
    std::string to_text() const {
        std::ostringstream os;
        os << "bar_count=" << grid.bar_count << '\n';
        os << "cells_per_beat=" << grid.cells_per_beat << '\n';
        os << "folds=" << folds << '\n';
        os << "k=" << k << '\n';
        os << "k_values=";
        for (std::size_t i = 0; i < k_values.size(); ++i) os << (i ? "," : "") << k_values[i];
        os << '\n' << "modes=";
        for (std::size_t i = 0; i < modes.size(); ++i) os << (i ? "," : "") << to_string(modes[i]);
        os << '\n';
        os << "seed=" << seed << '\n';
        os << "threshold=" << detail::format_number(threshold) << '\n';
        os << "tolerance=" << detail::format_number(tolerance) << '\n';
        os << "top_n=" << top_n << '\n';
        os << "weights=" << detail::format_number(weights.pianoroll) << ',' << detail::format_number(weights.onset) << ','
           << detail::format_number(weights.chord) << '\n';
        return os.str();
    }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t from = 0;
    while (true) {
        const auto comma = s.find(',', from);
        out.emplace_back(trim(s.substr(from, comma == std::string_view::npos ? std::string_view::npos : comma - from)));
        if (comma == std::string_view::npos) break;
        from = comma + 1;
    }
    return out;
}

inline double config_number(std::string_view key, std::string_view value) {
    const auto v = parse_number(trim(value));
    if (!v) throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not a number");
    return *v;
}

inline std::int64_t config_integer(std::string_view key, std::string_view value) {
    const auto v = parse_integer(trim(value));
    if (!v) throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not an integer");
    return *v;
}

inline std::size_t config_count(std::string_view key, std::string_view value) {
    const auto v = config_integer(key, value);
    if (v < 0) throw ConfigError(std::string(key) + " must not be negative");
    return static_cast<std::size_t>(v);
}

/// Reads `key = value` lines; blank lines and lines starting with '#' are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text, std::string_view source) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0, from = 0;
    while (from <= text.size()) {
        const auto nl = text.find('\n', from);
        const auto raw = text.substr(from, nl == std::string_view::npos ? std::string_view::npos : nl - from);
        from = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(std::string(source) + ": line " + std::to_string(line_no) + ": expected key = value");
        }
        out.emplace_back(lower(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

}  // namespace detail

inline SimilarityWeights parse_weights(std::string_view text) {
    const auto parts = detail::split_list(text);
    if (parts.size() != 3) throw ConfigError("weights: expected w_p,w_o,w_c");
    SimilarityWeights w{detail::config_number("weights", parts[0]), detail::config_number("weights", parts[1]),
                        detail::config_number("weights", parts[2])};
    (void)w.normalized();
    return w;
}

inline void apply_setting(RunConfig &cfg, const std::string &key, const std::string &value) {
    using namespace detail;
    if (key == "weights") {
        cfg.weights = parse_weights(value);
    } else if (key == "cells_per_beat") {
        cfg.grid.cells_per_beat = static_cast<int>(config_integer(key, value));
    } else if (key == "bar_count") {
        cfg.grid.bar_count = static_cast<int>(config_integer(key, value));
    } else if (key == "k") {
        cfg.k = config_count(key, value);
    } else if (key == "threshold") {
        cfg.threshold = config_number(key, value);
    } else if (key == "top_n") {
        cfg.top_n = config_count(key, value);
    } else if (key == "modes" || key == "mode") {
        cfg.modes.clear();
        if (lower(trim(value)) == "none") return;
        for (const auto &m : split_list(value)) {
            const auto mode = eval_mode_from_string(m);
            if (std::find(cfg.modes.begin(), cfg.modes.end(), mode) == cfg.modes.end()) cfg.modes.push_back(mode);
        }
    } else if (key == "k_values") {
        cfg.k_values.clear();
        for (const auto &k : split_list(value)) cfg.k_values.push_back(config_count(key, k));
    } else if (key == "tolerance") {
        cfg.tolerance = config_number(key, value);
    } else if (key == "folds") {
        cfg.folds = static_cast<int>(config_integer(key, value));
    } else if (key == "seed") {
        const auto s = config_integer(key, value);
        if (s < 0) throw ConfigError("seed must not be negative");
        cfg.seed = static_cast<std::uint64_t>(s);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// Settings from the config file (if any), then the flag overrides in order; flags win.
inline RunConfig load_run_config(const std::optional<std::string> &path, const std::vector<std::pair<std::string, std::string>> &overrides = {}) {
    RunConfig cfg;
    if (path) {
        for (const auto &[k, v] : detail::parse_key_values(read_file(*path), *path)) apply_setting(cfg, k, v);
    }
    for (const auto &[k, v] : overrides) apply_setting(cfg, k, v);
    cfg.validate();
    return cfg;
}

inline SynthSpec parse_synth_spec(std::string_view text, std::string_view source = "synth spec") {
    using namespace detail;
    SynthSpec s;
    for (const auto &[key, value] : parse_key_values(text, source)) {
        auto count = [&] { return static_cast<int>(config_integer(key, value)); };
        if (key == "seed") {
            const auto v = config_integer(key, value);
            if (v < 0) throw ConfigError("seed must not be negative");
            s.seed = static_cast<std::uint64_t>(v);
        } else if (key == "n_works") {
            s.n_works = count();
        } else if (key == "bars_per_work") {
            s.bars_per_work = count();
        } else if (key == "tempo_min_bpm") {
            s.tempo_min_bpm = config_number(key, value);
        } else if (key == "tempo_max_bpm") {
            s.tempo_max_bpm = config_number(key, value);
        } else if (key == "tempo_jitter") {
            s.tempo_jitter = config_number(key, value);
        } else if (key == "n_plants") {
            s.n_plants = count();
        } else if (key == "passages_per_plant") {
            s.passages_per_plant = count();
        } else if (key == "plant") {
            s.plant = plant_kind_from_string(value);
        } else if (key == "transpose_semitones") {
            s.transpose_semitones = count();
        } else if (key == "deletion_p") {
            s.deletion_p = config_number(key, value);
        } else if (key == "chord_substitution_p") {
            s.chord_substitution_p = config_number(key, value);
        } else if (key == "location") {
            const auto l = lower(value);
            if (l == "contiguous") s.location = PlantLocation::contiguous;
            else if (l == "random") s.location = PlantLocation::random;
            else if (l == "aligned") s.location = PlantLocation::aligned;
            else throw ConfigError("location: expected contiguous, random or aligned");
        } else if (key == "id_prefix") {
            s.id_prefix = value;
        } else if (key == "title_prefix") {
            s.title_prefix = value;
        } else {
            throw ConfigError("unknown synth spec key '" + key + "'");
        }
    }
    validate_spec(s);
    return s;
}

// ---------------------------------------------------------------------------
// Provenance

struct Provenance {
    std::string command;
    std::uint32_t config_crc32 = 0;
    std::optional<std::uint32_t> index_crc32;

    nlohmann::json to_json() const {
        return {{"tool", "segplag"},
                {"version", kToolVersion},
                {"command", command},
                {"config_crc32", hex32(config_crc32)},
                {"index_crc32", index_crc32 ? nlohmann::json(hex32(*index_crc32)) : nlohmann::json(nullptr)}};
    }

    /// One comment line for text outputs.
    std::string header_line() const {
        return "# segplag " + std::string(kToolVersion) + " " + command + " config=" + hex32(config_crc32) +
               " index=" + (index_crc32 ? hex32(*index_crc32) : std::string("none")) + "\n";
    }
};

namespace detail {

inline std::string path_key(const std::string &p) {
    std::error_code ec;
    const auto c = std::filesystem::weakly_canonical(p, ec);
    return ec ? std::filesystem::path(p).lexically_normal().string() : c.string();
}

/// Outputs must differ from each other and from every input.
inline void check_distinct_paths(const std::vector<std::string> &inputs, const std::vector<std::string> &outputs) {
    std::set<std::string> in_keys;
    for (const auto &p : inputs) in_keys.insert(path_key(p));
    std::set<std::string> out_keys;
    for (const auto &p : outputs) {
        const auto key = path_key(p);
        if (in_keys.count(key)) throw ConfigError("output '" + p + "' would overwrite an input");
        if (!out_keys.insert(key).second) throw ConfigError("output '" + p + "' is written twice");
    }
}

inline std::string join_path(const std::string &dir, const std::string &file) { return (std::filesystem::path(dir) / file).string(); }

inline void ensure_directory(const std::string &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

struct IngestArgs {
    std::string corpus;
    std::optional<std::string> annotations;
    RunConfig config;
};

struct IngestSummary {
    std::size_t works = 0;
    std::size_t forecast_segments = 0;
    std::size_t annotations = 0;
};

inline IngestSummary cmd_ingest(const IngestArgs &args, std::ostream &out) {
    const auto works = parse_corpus(args.corpus);
    IngestSummary s;
    s.works = works.size();
    for (const auto &w : works) s.forecast_segments += window_starts(w, args.config.grid.bar_count).size();
    if (args.annotations) {
        auto rows = parse_annotations(*args.annotations);
        try {
            resolve_annotations(rows, works);
        } catch (const ValidationError &e) {
            throw e.prefixed(*args.annotations + ": ");
        }
        s.annotations = rows.size();
    }
    out << s.works << " works, " << s.forecast_segments << " forecast segments";
    if (args.annotations) out << ", " << s.annotations << " annotations";
    out << '\n';
    return s;
}

struct IndexArgs {
    std::string corpus;
    std::string out;
    RunConfig config;
};

/// Writes the index and a `<out>.provenance.json` sidecar.
inline SegmentIndex cmd_index(const IndexArgs &args, std::ostream &out) {
    const std::string sidecar = args.out + ".provenance.json";
    detail::check_distinct_paths({args.corpus}, {args.out, sidecar});
    const auto started = std::chrono::steady_clock::now();
    const auto works = parse_corpus(args.corpus);
    auto index = build_index(works, args.config.weights, args.config.grid);
    const auto bytes = serialize_index(index);
    write_file_atomic(args.out, bytes);
    const Provenance prov{"index", crc32_of(args.config.to_text()), crc32_of(bytes)};
    write_file_atomic(sidecar, prov.to_json().dump(2) + "\n");
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    if (index.empty()) out << "warning: no work has a complete " << args.config.grid.bar_count << "-bar segment; index is empty\n";
    out << index.size() << " entries from " << index.music_count() << " works in " << static_cast<long long>(ms) << " ms\n";
    return index;
}

struct QueryArgs {
    std::string index;
    std::string queries;
    std::optional<std::string> library;  ///< corpus supplying answer titles
    std::string out_dir;
    RunConfig config;
};

struct QueryResult {
    std::vector<MusicRanking> rankings;
    std::vector<std::vector<MatchReport>> reports;
};

/// Writes `report.jsonl` (one record per ranked candidate) and `report.txt` (human-readable table)
/// into the output directory, each led by a provenance header.
inline QueryResult cmd_query(const QueryArgs &args, std::ostream &out) {
    const auto jsonl = detail::join_path(args.out_dir, "report.jsonl");
    const auto table = detail::join_path(args.out_dir, "report.txt");
    std::vector<std::string> inputs = {args.index, args.queries};
    if (args.library) inputs.push_back(*args.library);
    detail::check_distinct_paths(inputs, {jsonl, table});

    const auto bytes = read_file(args.index);
    const auto index = deserialize_index(bytes);
    const auto &g = index.grid();
    if (g.cells_per_beat != args.config.grid.cells_per_beat || g.bar_count != args.config.grid.bar_count) {
        throw GridMismatch("index grid (" + std::to_string(g.cells_per_beat) + " cells/beat, " + std::to_string(g.bar_count) +
                           " bars) differs from the configured grid");
    }
    const auto queries = parse_corpus(args.queries);
    std::map<std::string, std::string> titles;
    if (args.library) {
        for (const auto &w : parse_corpus(*args.library)) titles[w.music_id] = w.title;
    }
    for (const auto &w : queries) titles[w.music_id] = w.title;

    const Provenance prov{"query", crc32_of(args.config.to_text()), crc32_of(bytes)};
    std::string records = prov.to_json().dump() + "\n";
    std::string text = prov.header_line();
    QueryResult result;
    for (const auto &w : queries) {
        if (w.beat_grid.beats_per_bar != g.beats_per_bar && !window_starts(w, g.bar_count).empty()) {
            throw GridMismatch("query '" + w.music_id + "' has " + std::to_string(w.beat_grid.beats_per_bar) + " beats per bar, index has " +
                               std::to_string(g.beats_per_bar));
        }
        MusicRanking ranking{w.music_id, {}};
        std::vector<MatchReport> reports;
        if (window_starts(w, g.bar_count).empty()) {
            out << "warning: query '" << w.music_id << "' has no complete segment\n";
        } else if (!index.empty()) {
            ranking = rank_musics(w, index, args.config.k);
            reports = report_matches(w, index, ranking, args.config.top_n, args.config.threshold);
        }
        records += format_report_records(ranking, reports, args.config.threshold);
        text += "=== Query " + detail::display_name(titles, w.music_id) + " ===\n";
        text += format_report_table(ranking, titles, args.config.top_n);
        out << w.music_id << ": " << ranking.ranked.size() << " candidates, " << reports.size() << " matches >= "
            << detail::format_number(args.config.threshold);
        if (!ranking.ranked.empty()) out << ", top " << ranking.ranked.front().music_id;
        out << '\n';
        result.rankings.push_back(std::move(ranking));
        result.reports.push_back(std::move(reports));
    }
    detail::ensure_directory(args.out_dir);
    write_file_atomic(jsonl, records);
    write_file_atomic(table, text);
    return result;
}

struct EvalArgs {
    std::string corpus;
    std::optional<std::string> annotations;
    std::optional<std::string> distractors;
    std::string out_dir;
    RunConfig config;
};

struct EvalResult {
    std::vector<SegmentEvalResult> segment;
    std::optional<MusicEvalResult> music;
};

/// Segment-level Rec.1s@k per configured mode and music-level mAP / MR1; writes `metrics.json` and
/// `metrics.txt`. Music pairs come from the annotations when given, else from group ids.
inline EvalResult cmd_eval(const EvalArgs &args, std::ostream &out) {
    const auto json_path = detail::join_path(args.out_dir, "metrics.json");
    const auto text_path = detail::join_path(args.out_dir, "metrics.txt");
    std::vector<std::string> inputs = {args.corpus};
    if (args.annotations) inputs.push_back(*args.annotations);
    if (args.distractors) inputs.push_back(*args.distractors);
    detail::check_distinct_paths(inputs, {json_path, text_path});
    if (!args.config.modes.empty() && !args.annotations) {
        throw ConfigError("segment-level modes need an annotation file (or set modes = none)");
    }

    const auto works = parse_corpus(args.corpus);
    std::vector<AnnotationRow> rows;
    if (args.annotations) rows = parse_annotations(*args.annotations);
    std::vector<MusicWork> distractors;
    if (args.distractors) distractors = parse_corpus(*args.distractors);
    std::vector<Segment> distractor_segments;
    for (const auto &w : distractors) {
        auto segs = enumerate_downbeat_segments(w, args.config.grid);
        std::move(segs.begin(), segs.end(), std::back_inserter(distractor_segments));
    }

    EvalResult result;
    for (auto mode : args.config.modes) {
        result.segment.push_back(run_segment_eval(works, rows, args.config.eval_config(mode), distractor_segments));
    }
    if (!rows.empty()) resolve_annotations(rows, works);
    const auto pairing = rows.empty() ? pairing_from_groups(works) : pairing_from_annotations(rows);
    if (!pairing.empty()) {
        result.music = run_music_eval(works, pairing, args.config.eval_config(EvalMode::smp_all_segments), distractors);
    } else {
        out << "warning: no ground-truth pairs; music-level metrics skipped\n";
    }

    const Provenance prov{"eval", crc32_of(args.config.to_text()), std::nullopt};
    nlohmann::json j = {{"provenance", prov.to_json()}, {"segment", nlohmann::json::array()}};
    for (const auto &r : result.segment) j["segment"].push_back(to_json(r));
    j["music"] = result.music ? to_json(*result.music) : nlohmann::json(nullptr);

    std::string text = prov.header_line();
    if (!result.segment.empty()) text += format_segment_table(result.segment);
    if (result.music) {
        text += format_music_table(*result.music);
        for (const auto &w : result.music->warnings) out << "warning: " << w << '\n';
    }
    detail::ensure_directory(args.out_dir);
    write_file_atomic(json_path, j.dump(2) + "\n");
    write_file_atomic(text_path, text);
    out << text.substr(text.find('\n') + 1);
    return result;
}

struct SynthArgs {
    std::optional<std::string> spec;  ///< defaults when absent
    std::optional<std::uint64_t> seed;  ///< overrides the spec's seed
    std::string out_dir;
};

/// Writes `corpus.jsonl`, `annotations.csv` and `provenance.json` into the output directory.
inline SynthCorpus cmd_synth(const SynthArgs &args, std::ostream &out) {
    const auto corpus_path = detail::join_path(args.out_dir, "corpus.jsonl");
    const auto ann_path = detail::join_path(args.out_dir, "annotations.csv");
    const auto prov_path = detail::join_path(args.out_dir, "provenance.json");
    std::vector<std::string> inputs;
    if (args.spec) inputs.push_back(*args.spec);
    detail::check_distinct_paths(inputs, {corpus_path, ann_path, prov_path});

    std::string spec_text;
    if (args.spec) spec_text = read_file(*args.spec);
    auto spec = parse_synth_spec(spec_text, args.spec.value_or("synth spec"));
    if (args.seed) spec.seed = *args.seed;
    auto corpus = generate_corpus(spec);

    std::ostringstream works, rows;
    write_corpus(works, corpus.works);
    write_annotations(rows, corpus.annotations);
    const Provenance prov{"synth", crc32_of(spec_text + "\nseed=" + std::to_string(spec.seed)), std::nullopt};
    auto p = prov.to_json();
    p["seed"] = spec.seed;
    detail::ensure_directory(args.out_dir);
    write_file_atomic(corpus_path, works.str());
    write_file_atomic(ann_path, rows.str());
    write_file_atomic(prov_path, p.dump(2) + "\n");
    out << "seed " << spec.seed << ": " << corpus.works.size() << " works, " << corpus.annotations.size() << " annotation rows\n";
    return corpus;
}

/// Runs `fn`, reporting any failure on `err` and mapping it to an exit code.
inline int run_command(const std::function<void()> &fn, std::ostream &err) {
    try {
        fn();
        return kExitOk;
    } catch (const ParseError &e) {
        err << "parse error: " << e.what() << '\n';
        return kExitParse;
    } catch (const FormatError &e) {
        err << "format error: " << e.what() << '\n';
        return kExitParse;
    } catch (const ValidationError &e) {
        err << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const GridMismatch &e) {
        err << "grid mismatch: " << e.what() << '\n';
        return kExitValidation;
    } catch (const AlignmentError &e) {
        err << "alignment error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError &e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ConfigError &e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace segplag
