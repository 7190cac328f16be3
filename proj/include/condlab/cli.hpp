#pragma once

#include "condlab/verify.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace condlab {

namespace cli_detail {

struct Options {
    std::string mode = "lab";
    std::uint64_t n = 0;
    int kappa = -1;
    std::uint64_t rho = 0;
    unsigned tau = 0;
    std::string label = "NO";
    std::string tester = "uniform-fresh";
    std::string oracle = "cond";
    unsigned q = 0;
    std::uint64_t trials = 1;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    std::string out = "json";
    bool reveal = false;
    std::string suite = "all";
};

inline void add_instance_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--mode", o.mode)->check(CLI::IsMember({"paper", "lab"}));
    cmd->add_option("--n", o.n);
    cmd->add_option("--kappa", o.kappa);
    cmd->add_option("--rho", o.rho);
    cmd->add_option("--tau", o.tau);
    cmd->add_option("--label", o.label)->check(CLI::IsMember({"YES", "NO"}));
}

inline void add_common_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--trials", o.trials)->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out)->check(CLI::IsMember({"json", "csv"}));
}

inline EquivParams params_from(const Options& o, RandomSource& rng) {
    if (o.n == 0) throw CLI::ValidationError("--n is required");
    if (o.mode == "paper") return derive_paper_params(o.n, rng);
    if (o.kappa < 0 || o.rho == 0 || o.tau == 0)
        throw CLI::ValidationError("lab mode needs --kappa, --rho and --tau");
    return EquivParams::lab(o.n, unsigned(o.kappa), o.rho, o.tau);
}

inline Label label_from(const Options& o) {
    return o.label == "YES" ? Label::YES : Label::NO;
}

inline std::uint64_t require_seed(const Options& o) {
    if (!o.seed) throw CLI::ValidationError("--seed is required for stochastic commands");
    return *o.seed;
}

inline std::string tester_spec_with_q(const Options& o) {
    std::string spec = o.tester;
    if (o.q > 0) {
        spec += spec.find(':') == std::string::npos ? ":" : ",";
        spec += "q=" + std::to_string(o.q);
    }
    return spec;
}

inline int cmd_gen_instance(const Options& o, std::ostream& out) {
    std::uint64_t seed = require_seed(o);
    RandomSource rng = RandomSource::stream(seed, 0);
    EquivParams p = params_from(o, rng);
    Label label = label_from(o);
    if (o.out != "json") throw CLI::ValidationError("gen-instance emits json only");
    if (p.m <= kRealizeLimit) {
        auto pair = gen_equivalence(p, label, rng);
        out << instance_to_json(pair, seed).dump(2) << "\n";
    } else {
        // deferred instance: parameters plus seed are the full serialization
        Json j{{"schema_version", kSchemaVersion},
               {"family", "equivalence"},
               {"label", label_name(label)},
               {"params", params_to_json(p)},
               {"seed", seed},
               {"epsilon", label == Label::NO ? "1/4" : "0"},
               {"tv_exact", label == Label::NO ? "1/4" : "0"},
               {"realization", "deferred"}};
        out << j.dump(2) << "\n";
    }
    return 0;
}

inline int cmd_run_tester(const Options& o, std::ostream& out) {
    std::uint64_t seed = require_seed(o);
    RandomSource prng = RandomSource::stream(seed, ~std::uint64_t(0));
    EquivParams p = params_from(o, prng);
    Label label = label_from(o);
    PairSchema schema = PairSchema::from(p, label);
    auto tester = make_tester(tester_spec_with_q(o));
    OracleKind kind = o.oracle == "wcond" ? OracleKind::WCOND : OracleKind::COND;
    if (o.reveal && o.out == "csv")
        throw CLI::ValidationError("--reveal requires --out json");

    struct Row {
        Verdict verdict;
        std::uint32_t queries;
        std::uint64_t node;
        Json transcript;
    };
    std::vector<Row> rows(o.trials);
    parallel_trials(o.trials, o.jobs, [&](std::uint64_t t) {
        std::uint64_t run_seed = mix64(seed + RandomSource::golden * (t + 1));
        RunResult rr = run(*tester, schema, kind, run_seed);
        rows[t] = Row{rr.verdict, rr.transcript.query_count(),
                      node_id(rr.transcript.configurations()),
                      o.reveal ? transcript_to_json(rr.transcript, true) : Json{}};
    });

    if (o.out == "csv") {
        out << "trial,verdict,queries,node_id\n";
        for (std::uint64_t t = 0; t < o.trials; ++t)
            out << t << ',' << verdict_name(rows[t].verdict) << ',' << rows[t].queries << ','
                << rows[t].node << "\n";
        return 0;
    }
    Json results = Json::array();
    for (std::uint64_t t = 0; t < o.trials; ++t) {
        Json r{{"trial", t},
               {"verdict", verdict_name(rows[t].verdict)},
               {"queries", rows[t].queries},
               {"node_id", rows[t].node}};
        if (o.reveal) r["transcript"] = rows[t].transcript;
        results.push_back(r);
    }
    Json j{{"schema_version", kSchemaVersion},
           {"command", "run-tester"},
           {"seed", seed},
           {"trials", o.trials},
           {"tester", o.tester},
           {"oracle", o.oracle},
           {"label", label_name(label)},
           {"params", params_to_json(p)},
           {"results", results}};
    out << j.dump(2) << "\n";
    return 0;
}

inline int cmd_compare_oracles(const Options& o, std::ostream& out) {
    std::uint64_t seed = require_seed(o);
    RandomSource prng = RandomSource::stream(seed, ~std::uint64_t(0));
    EquivParams p = params_from(o, prng);
    Label label = label_from(o);
    PairSchema schema = PairSchema::from(p, label);
    auto tester = make_tester(tester_spec_with_q(o));
    unsigned q = tester->budget();
    auto runner = [&](int side, std::uint64_t t) {
        return run(*tester, schema, side == 0 ? OracleKind::COND : OracleKind::WCOND,
                   mix64(seed + RandomSource::golden * (t * 2 + std::uint64_t(side) + 1)));
    };
    auto ap = AnalysisParams::lab(Rational(8), Rational(4), 2, Rational(8));
    auto rep = estimate_level_tv(runner, schema, schema, q, o.trials, ap, LevelTvFilter{}, 20, o.jobs);

    if (o.out == "csv") {
        out << "level,tv,se\n";
        for (unsigned i = 1; i <= q; ++i)
            out << i << ',' << rep.levels[i - 1].tv << ',' << rep.levels[i - 1].se << "\n";
        return 0;
    }
    Json levels = Json::array();
    for (unsigned i = 1; i <= q; ++i)
        levels.push_back(Json{{"level", i},
                              {"tv", rep.levels[i - 1].tv},
                              {"se", rep.levels[i - 1].se}});
    Json j{{"schema_version", kSchemaVersion},
           {"command", "compare-oracles"},
           {"seed", seed},
           {"trials_per_side", o.trials},
           {"tester", o.tester},
           {"label", label_name(label)},
           {"params", params_to_json(p)},
           {"gamma_eff", rep.gamma_eff},
           {"node_collisions", rep.node_collisions},
           {"levels", levels}};
    out << j.dump(2) << "\n";
    return 0;
}

inline int cmd_distinguish(const Options& o, std::ostream& out) {
    std::uint64_t seed = require_seed(o);
    RandomSource prng = RandomSource::stream(seed, ~std::uint64_t(0));
    EquivParams p = params_from(o, prng);
    Label label = label_from(o);
    DistinguisherConfig cfg;
    struct Row {
        Verdict verdict;
        std::uint64_t queries;
        std::uint32_t found;
        std::uint32_t pairs;
    };
    std::vector<Row> rows(o.trials);
    parallel_trials(o.trials, o.jobs, [&](std::uint64_t t) {
        RandomSource gen = RandomSource::stream(seed, t * 2);
        auto pair = gen_equivalence(p, label, gen);
        RandomSource rng = RandomSource::stream(seed, t * 2 + 1);
        auto res = known_support_distinguish(pair, p.m, cfg, rng);
        rows[t] = Row{res.verdict, res.queries, res.found, res.pairs_probed};
    });
    if (o.out == "json") {
        Json results = Json::array();
        for (std::uint64_t t = 0; t < o.trials; ++t)
            results.push_back(Json{{"trial", t},
                                   {"verdict", verdict_name(rows[t].verdict)},
                                   {"queries", rows[t].queries},
                                   {"found", rows[t].found},
                                   {"pairs_probed", rows[t].pairs}});
        Json j{{"schema_version", kSchemaVersion},
               {"command", "distinguish"},
               {"seed", seed},
               {"trials", o.trials},
               {"label", label_name(label)},
               {"params", params_to_json(p)},
               {"results", results}};
        out << j.dump(2) << "\n";
        return 0;
    }
    out << "trial,label,verdict,queries,found,pairs_probed\n";
    for (std::uint64_t t = 0; t < o.trials; ++t)
        out << t << ',' << label_name(label) << ',' << verdict_name(rows[t].verdict) << ','
            << rows[t].queries << ',' << rows[t].found << ',' << rows[t].pairs << "\n";
    return 0;
}

inline int cmd_verify(const Options& o, std::ostream& out) {
    std::uint64_t seed = require_seed(o);
    std::vector<std::string> names;
    if (o.suite == "all")
        names = verify_suite_names();
    else
        names.push_back(o.suite);
    Json reports = Json::array();
    bool all_pass = true;
    for (const std::string& name : names) {
        CheckReport r = run_verify_suite(name, seed, o.trials, o.jobs);
        all_pass = all_pass && r.pass;
        reports.push_back(Json{{"suite", r.name}, {"report", r.payload}});
    }
    Json j{{"schema_version", kSchemaVersion},
           {"command", "verify"},
           {"seed", seed},
           {"trials", o.trials},
           {"pass", all_pass},
           {"reports", reports}};
    out << j.dump(2) << "\n";
    return all_pass ? 0 : 1;
}

} // namespace cli_detail

/// Exit codes: 0 success, 1 a verification suite failed its threshold,
/// 2 usage or parameter error.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CLI::App app{"condlab: conditional-sampling distribution-testing laboratory"};
    app.require_subcommand(1);
    Options o;

    CLI::App* gen = app.add_subcommand("gen-instance", "generate an instance pair");
    add_instance_flags(gen, o);
    add_common_flags(gen, o);

    CLI::App* rt = app.add_subcommand("run-tester", "run a core-adaptive tester");
    add_instance_flags(rt, o);
    add_common_flags(rt, o);
    rt->add_option("--tester", o.tester);
    rt->add_option("--oracle", o.oracle)->check(CLI::IsMember({"cond", "wcond"}));
    rt->add_option("--q", o.q);
    rt->add_flag("--reveal", o.reveal);

    CLI::App* co = app.add_subcommand("compare-oracles", "COND vs WCOND level TV");
    add_instance_flags(co, o);
    add_common_flags(co, o);
    co->add_option("--tester", o.tester);
    co->add_option("--q", o.q);

    CLI::App* di = app.add_subcommand("distinguish", "known-support distinguisher trials");
    add_instance_flags(di, o);
    add_common_flags(di, o);

    CLI::App* ve = app.add_subcommand("verify", "run verification suites");
    ve->add_option("suite", o.suite, "suite name or 'all'");
    add_common_flags(ve, o);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_instance(o, out);
        if (rt->parsed()) return cmd_run_tester(o, out);
        if (co->parsed()) return cmd_compare_oracles(o, out);
        if (di->parsed()) return cmd_distinguish(o, out);
        if (ve->parsed()) return cmd_verify(o, out);
    } catch (const CLI::ValidationError& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << "no command given\n";
    return 2;
}

} // namespace condlab
