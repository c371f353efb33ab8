#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "segplag/cli.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string weights;
    std::string k;
    std::string tolerance;
    std::string mode;
    std::string seed;
    std::string threshold;

    void add_to(CLI::App *app) {
        app->add_option("--config", config, "key = value config file");
        app->add_option("--weights", weights, "w_p,w_o,w_c");
        app->add_option("--k", k, "vote depth (query) or k list (eval)");
        app->add_option("--tolerance", tolerance, "temporal tolerance in seconds");
        app->add_option("--mode", mode, "comma list of smp_timestamps, smp_all_segments, full_indices, or none");
        app->add_option("--seed", seed, "fold seed (eval) or generator seed (synth)");
        app->add_option("--threshold", threshold, "match report threshold");
    }

    segplag::RunConfig resolve(bool k_is_list) const {
        std::vector<std::pair<std::string, std::string>> overrides;
        auto flag = [&](const char *key, const std::string &v) {
            if (!v.empty()) overrides.emplace_back(key, v);
        };
        flag("weights", weights);
        flag(k_is_list ? "k_values" : "k", k);
        flag("tolerance", tolerance);
        flag("modes", mode);
        flag("seed", seed);
        flag("threshold", threshold);
        return segplag::load_run_config(config.empty() ? std::nullopt : std::optional<std::string>(config), overrides);
    }
};

std::optional<std::string> opt(const std::string &s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); }

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Segment-level music plagiarism detection"};
    app.set_version_flag("--version", std::string(segplag::kToolVersion));
    app.require_subcommand(1);

    CommonFlags flags;
    std::string corpus, annotations, distractors, index, queries, library, out, spec;

    auto *ingest = app.add_subcommand("ingest", "Parse and validate a corpus and optional annotations");
    ingest->add_option("corpus", corpus, "corpus JSON lines file")->required();
    ingest->add_option("--annotations", annotations, "annotation CSV");
    flags.add_to(ingest);

    auto *idx = app.add_subcommand("index", "Build and persist a segment index");
    idx->add_option("corpus", corpus, "corpus JSON lines file")->required();
    idx->add_option("--out", out, "index file")->required();
    flags.add_to(idx);

    auto *query = app.add_subcommand("query", "Rank indexed works against each query work");
    query->add_option("index", index, "index file")->required();
    query->add_option("queries", queries, "query corpus")->required();
    query->add_option("--library", library, "corpus with the indexed works' titles");
    query->add_option("--out", out, "output directory")->required();
    flags.add_to(query);

    auto *eval = app.add_subcommand("eval", "Segment- and music-level evaluation");
    eval->add_option("corpus", corpus, "corpus JSON lines file")->required();
    eval->add_option("--annotations", annotations, "annotation CSV");
    eval->add_option("--distractors", distractors, "distractor corpus");
    eval->add_option("--out", out, "output directory")->required();
    flags.add_to(eval);

    auto *synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted copies");
    synth->add_option("--spec", spec, "synth spec file (key = value)");
    synth->add_option("--seed", flags.seed, "generator seed");
    synth->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return segplag::kExitConfig;
    }

    return segplag::run_command(
        [&] {
            if (*ingest) {
                segplag::cmd_ingest({corpus, opt(annotations), flags.resolve(false)}, std::cout);
            } else if (*idx) {
                segplag::cmd_index({corpus, out, flags.resolve(false)}, std::cout);
            } else if (*query) {
                segplag::cmd_query({index, queries, opt(library), out, flags.resolve(false)}, std::cout);
            } else if (*eval) {
                segplag::cmd_eval({corpus, opt(annotations), opt(distractors), out, flags.resolve(true)}, std::cout);
            } else if (*synth) {
                std::optional<std::uint64_t> seed;
                if (!flags.seed.empty()) {
                    const auto s = segplag::detail::parse_integer(flags.seed);
                    if (!s || *s < 0) throw segplag::ConfigError("--seed must be a non-negative integer");
                    seed = static_cast<std::uint64_t>(*s);
                }
                segplag::cmd_synth({opt(spec), seed, out}, std::cout);
            }
        },
        std::cerr);
}
