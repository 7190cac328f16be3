#pragma once

#include "condlab/analysis.hpp"
#include "condlab/instances.hpp"
#include "condlab/oracles.hpp"
#include "condlab/testers.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace condlab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";

inline std::string weight_str(Weight w) { return weight_to_int(w).str(); }

inline Json params_to_json(const EquivParams& p) {
    return Json{{"n", p.n},     {"kappa", p.kappa}, {"b", p.b},
                {"rho", p.rho}, {"tau", p.tau},     {"m", p.m}};
}

inline Json directive_to_json(const QueryDirective& d) {
    Json fresh = Json::array();
    for (auto& [sig, count] : d.fresh_counts) fresh.push_back(Json{{"sig", sig}, {"count", count}});
    return Json{{"which", d.which},
                {"all_fresh", d.all_fresh},
                {"old_picks", d.old_picks},
                {"fresh_counts", fresh}};
}

inline Json configuration_to_json(const Configuration& c) {
    return Json{{"arity", c.arity}, {"collide", c.collide}, {"member", c.member}};
}

/// Tester-visible transcript: directives and configurations only. The sealed
/// section (samples, masses, layout, label) is appended only when `reveal`.
inline Json transcript_to_json(const Transcript& t, bool reveal) {
    Json q = Json::array();
    for (const auto& rec : t.queries) {
        Json jq{{"directive", directive_to_json(rec.directive)},
                {"configuration", configuration_to_json(rec.config)}};
        if (reveal) {
            Json cells = Json::array();
            for (std::size_t ci = 0; ci < rec.cells.size(); ++ci) {
                Json jc{{"sig", rec.cells[ci].parent_sig},
                        {"slot", rec.cells[ci].slot},
                        {"count", rec.cells[ci].count}};
                if (ci < rec.cell_members.size()) jc["members"] = rec.cell_members[ci];
                cells.push_back(jc);
            }
            Json atoms = Json::array();
            for (auto& [sig, size] : rec.atoms_after)
                atoms.push_back(Json{{"sig", sig}, {"size", size}});
            Json pools = Json::array();
            for (const auto& p : rec.pools_after)
                pools.push_back(Json{{"sig", p.parent_sig}, {"slot", p.slot}, {"count", p.count}});
            Json samples = Json::array();
            for (const auto& s : rec.samples_after)
                samples.push_back(Json{{"token", s.token}, {"slot", s.slot}, {"sig", s.sig}});
            jq["sealed"] = Json{{"old_tokens", rec.old_tokens},
                               {"cells", cells},
                               {"u_w1", weight_str(rec.u_w[0])},
                               {"u_w2", weight_str(rec.u_w[1])},
                               {"a_w1", weight_str(rec.a_w[0])},
                               {"a_w2", weight_str(rec.a_w[1])},
                               {"step1", rec.step1},
                               {"picked_sig", rec.picked_sig},
                               {"picked_slot", rec.picked_slot},
                               {"fallback_uniform", rec.fallback_uniform},
                               {"sample_token", rec.sample.token},
                               {"sample_slot", rec.sample.slot},
                               {"atoms", atoms},
                               {"pools", pools},
                               {"samples", samples}};
        }
        q.push_back(jq);
    }
    Json out{{"schema_version", kSchemaVersion},
             {"oracle", oracle_name(t.kind)},
             {"n", t.n},
             {"query_count", t.query_count()},
             {"queries", q}};
    if (reveal) {
        out["sealed"] = Json{{"params", params_to_json(t.params)},
                             {"label", label_name(t.label)},
                             {"denom", t.denom.str()}};
    }
    return out;
}

inline std::string transcript_dump(const Transcript& t, bool reveal) {
    return transcript_to_json(t, reveal).dump();
}

/// Full revealed dump minus the oracle tag: the run content that the
/// restricted-tester coupling makes identical across COND and WCOND.
inline std::string transcript_body_dump(const Transcript& t) {
    Json j = transcript_to_json(t, true);
    j.erase("oracle");
    return j.dump();
}

inline Json instance_to_json(const InstancePair& pair, std::uint64_t seed) {
    // serialized as parameters + seed; supports are regenerable, never dumped
    Json buckets = Json::array();
    for (unsigned j = 1; j <= pair.params().tau; ++j) {
        buckets.push_back(Json{{"j", j},
                               {"size", pair.params().bucket_size(j)},
                               {"mass", rational_str(Rational(1, Int(pair.params().tau)))}});
    }
    return Json{{"schema_version", kSchemaVersion},
                {"family", "equivalence"},
                {"label", label_name(pair.label())},
                {"params", params_to_json(pair.params())},
                {"seed", seed},
                {"epsilon", rational_str(pair.epsilon())},
                {"tv_exact", rational_str(pair_tv_exact(pair))},
                {"buckets", buckets}};
}

} // namespace condlab
