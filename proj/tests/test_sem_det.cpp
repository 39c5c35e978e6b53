#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "protolang/errors.hpp"
#include "protolang/parser.hpp"
#include "protolang/sem_det.hpp"
#include "support/generators.hpp"

using namespace protolang;

namespace {

std::string slurp(const std::string& name) {
    std::ifstream in(std::string(FIXTURES_DIR) + "/" + name);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Crn no_reactions(std::size_t n) {
    Crn c;
    for (std::size_t i = 0; i < n; ++i) c.species.push_back({"S" + std::to_string(i), i});
    c.validate();
    return c;
}

bool result_eq(const EvalResult& a, const EvalResult& b) {
    if (a.sample.conc != b.sample.conc) return false;
    if (a.sample.volume_l != b.sample.volume_l) return false;
    if (a.sample.temperature_k != b.sample.temperature_k) return false;
    if (a.elapsed_s != b.elapsed_s) return false;
    if (a.observations.size() != b.observations.size()) return false;
    for (std::size_t i = 0; i < a.observations.size(); ++i) {
        if (a.observations[i].conc != b.observations[i].conc) return false;
        if (a.observations[i].idn != b.observations[i].idn) return false;
        if (a.observations[i].time_s != b.observations[i].time_s) return false;
    }
    return true;
}

// independent elapsed-time oracle: max over root-to-leaf paths of summed
// equilibrate durations
double elapsed_oracle(const ProtocolPtr& p, std::map<std::string, double> env) {
    return std::visit(
        [&](const auto& n) -> double {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                return env.at(n.name);
            } else if constexpr (std::is_same_v<T, InitialNode>) {
                return 0.0;
            } else if constexpr (std::is_same_v<T, MixNode>) {
                return std::max(elapsed_oracle(n.left, env), elapsed_oracle(n.right, env));
            } else if constexpr (std::is_same_v<T, LetNode>) {
                auto env2 = env;
                env2[n.var] = elapsed_oracle(n.bound, env);
                return elapsed_oracle(n.body, env2);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                auto env2 = env;
                double e = elapsed_oracle(n.source, env);
                env2[n.take_var] = e;
                env2[n.rest_var] = e;
                return elapsed_oracle(n.body, env2);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                auto env2 = env;
                env2[n.take_var] = elapsed_oracle(n.source, env);
                return elapsed_oracle(n.body, env2);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                return elapsed_oracle(n.inner, env) + n.duration_s;
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                return elapsed_oracle(n.inner, env);
            } else {
                return elapsed_oracle(std::get<ObserveNode>(p->node).inner, env);
            }
        },
        p->node);
}

}  // namespace

TEST_CASE("mix is the volume-weighted average") {
    Crn crn = no_reactions(1);
    EvalResult r = eval(mix(initial({1.0}, 1.0, 300.0), initial({3.0}, 1.0, 300.0)), crn, {},
                        {});
    CHECK(r.sample.conc[0] == 2.0);
    CHECK(r.sample.volume_l == 2.0);
    CHECK(r.sample.temperature_k == 300.0);
    CHECK(r.elapsed_s == 0.0);
}

TEST_CASE("mix temperatures are volume-weighted too") {
    Crn crn = no_reactions(1);
    EvalResult r = eval(mix(initial({0.0}, 1.0, 280.0), initial({0.0}, 3.0, 320.0)), crn, {},
                        {});
    CHECK(r.sample.temperature_k == doctest::Approx(310.0).epsilon(1e-15));
}

TEST_CASE("mix with an empty sample is the identity (discard-sugar reading)") {
    Crn crn = no_reactions(2);
    ProtocolPtr s = initial({0.25, 0.5}, 0.7, 291.0);
    EvalResult direct = eval(s, crn, {}, {});
    EvalResult mixed = eval(mix(dispose(initial({1.0, 1.0}, 1.0, 300.0)), s), crn, {}, {});
    CHECK(mixed.sample.conc == direct.sample.conc);
    CHECK(mixed.sample.volume_l == direct.sample.volume_l);
    CHECK(mixed.sample.temperature_k == direct.sample.temperature_k);
}

TEST_CASE("mix of two empty samples warns and yields the empty sample") {
    Crn crn = no_reactions(1);
    std::vector<std::string> warnings;
    EvalHooks hooks;
    hooks.warnings = &warnings;
    EvalResult r = eval(mix(dispose(initial({1.0}, 1.0, 300.0)),
                            dispose(initial({2.0}, 1.0, 300.0))),
                        crn, {}, {}, hooks);
    CHECK(r.sample.volume_l == 0.0);
    CHECK(r.sample.conc == std::vector<double>{0.0});
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("empty samples") != std::string::npos);
}

TEST_CASE("example 4: initial H+ after mixing, with and without H+ in B") {
    Crn crn = parse_crn(slurp("titration.crn"));
    auto idx = crn.species_index("H+");
    REQUIRE(idx);
    double p1 = 0.3, p2 = 0.6;
    double h_b = std::pow(10.0, -7.4);

    // the protocol as written in the titration fixture: B has no H+
    std::string as_written =
        "let A = sample([H+ = 0.1 M, Cl- = 0.1 M]; 1.0 mL; 298.15 K) in\n"
        "let B = sample([Na+ = 0.1 M, OH- = 0.1 M]; 1.0 mL; 298.15 K) in\n"
        "let a, _ = Dispense(A, 0.3) in\n"
        "let b, _ = Dispense(B, 0.6) in\n"
        "Mix(a, b)";
    EvalResult r = eval(assign_ids(desugar(parse_protocol(as_written, crn))), crn, {}, {});
    CHECK(r.sample.conc[*idx] ==
          doctest::Approx(0.1 * p1 / (p1 + p2)).epsilon(1e-14));

    // the published formula presumes sample B at pH 7.4
    std::string with_ph =
        "let A = sample([H+ = 0.1 M, Cl- = 0.1 M]; 1.0 mL; 298.15 K) in\n"
        "let B = sample([Na+ = 0.1 M, OH- = 0.1 M, H+ = 3.9810717055349726e-8 M]; 1.0 mL; "
        "298.15 K) in\n"
        "let a, _ = Dispense(A, 0.3) in\n"
        "let b, _ = Dispense(B, 0.6) in\n"
        "Mix(a, b)";
    EvalResult r2 = eval(assign_ids(desugar(parse_protocol(with_ph, crn))), crn, {}, {});
    CHECK(r2.sample.conc[*idx] ==
          doctest::Approx((p1 * 0.1 + p2 * h_b) / (p1 + p2)).epsilon(1e-12));
}

TEST_CASE("equilibrate over zero time is the identity") {
    Crn crn = parse_crn(slurp("titration.crn"));
    std::string text =
        "let A = sample([H+ = 0.1 M, Cl- = 0.1 M]; 1.0 mL; 298.15 K) in\n"
        "let B = sample([Na+ = 0.1 M, OH- = 0.1 M]; 1.0 mL; 298.15 K) in\n"
        "let a, _ = Dispense(A, 0.5) in\n"
        "let b, _ = Dispense(B, 0.5) in\n";
    ProtocolPtr with_eq =
        assign_ids(desugar(parse_protocol(text + "Equilibrate(Mix(a, b), 0 s)", crn)));
    ProtocolPtr without =
        assign_ids(desugar(parse_protocol(text + "Mix(a, b)", crn)));
    EvalResult a = eval(with_eq, crn, {}, {});
    EvalResult b = eval(without, crn, {}, {});
    CHECK(result_eq(a, b));
}

TEST_CASE("titration fixture matches the closed form") {
    Crn crn = parse_crn(slurp("titration.crn"));
    ProtocolPtr p = assign_ids(desugar(parse_protocol(slurp("titration.protocol"), crn)));
    FlowConfig cfg;
    EvalResult r = eval(p, crn, {}, cfg);
    auto idx = crn.species_index("H+");
    double k = 2.81e-10, c0 = 0.05, n0 = 0.05, t = 1e4;
    double expected = c0 / (1.0 + k * n0 * n0 * c0 * t);
    CHECK(std::abs(r.sample.conc[*idx] - expected) <= 10.0 * cfg.rel_tol * expected);
    CHECK(r.elapsed_s == 1e4);
    CHECK(r.sample.volume_l == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("dispense partitions the volume exactly") {
    Crn crn = no_reactions(1);
    RandomStream rng(7);
    for (int i = 0; i < 500; ++i) {
        double v = 1e-6 + rng.uniform01();
        double p = 0.001 + 0.998 * rng.uniform01();
        std::vector<Sample> outs;
        EvalHooks hooks;
        hooks.on_step = [&](const StepRecord& s) {
            if (s.op == StepRecord::dispense) outs = s.outputs;
        };
        ProtocolPtr proto = dispense("x", "y", initial({0.5}, v, 300.0), p,
                                     mix(var("x"), var("y")));
        eval(proto, crn, {}, {}, hooks);
        REQUIRE(outs.size() == 2);
        CHECK(outs[0].volume_l + outs[1].volume_l == v);  // bitwise
        CHECK(outs[0].conc == std::vector<double>{0.5});
        CHECK(outs[1].conc == std::vector<double>{0.5});
        CHECK(outs[0].temperature_k == 300.0);
    }
}

TEST_CASE("observations: order, duplicates, times, dispose keeps them") {
    Crn crn = no_reactions(1);
    // Observe(Equilibrate(Observe(s, 7), 5), 7) records idn 7 twice
    ProtocolPtr p = observe(equilibrate(observe(initial({1.0}, 1.0, 300.0), 7), 5.0), 7);
    EvalResult r = eval(p, crn, {}, {});
    REQUIRE(r.observations.size() == 2);
    CHECK(r.observations[0].idn == 7);
    CHECK(r.observations[0].time_s == 0.0);
    CHECK(r.observations[1].idn == 7);
    CHECK(r.observations[1].time_s == 5.0);
    CHECK(r.elapsed_s == 5.0);

    // dispose preserves the subterm's observations
    EvalResult d = eval(dispose(p), crn, {}, {});
    CHECK(d.observations.size() == 2);
    CHECK(d.sample.volume_l == 0.0);

    // mix concatenates left then right
    ProtocolPtr two = mix(observe(initial({1.0}, 1.0, 300.0), 1),
                          observe(initial({2.0}, 1.0, 300.0), 2));
    EvalResult m = eval(two, crn, {}, {});
    REQUIRE(m.observations.size() == 2);
    CHECK(m.observations[0].idn == 1);
    CHECK(m.observations[1].idn == 2);
}

TEST_CASE("unbound variables raise EvalError") {
    Crn crn = no_reactions(1);
    CHECK_THROWS_AS(eval(var("ghost"), crn, {}, {}), EvalError);
}

TEST_CASE("sugar must be desugared before evaluation") {
    Crn crn = no_reactions(1);
    ProtocolPtr sugar = dispense_discard("a", initial({1.0}, 1.0, 300.0), 0.5, var("a"));
    CHECK_THROWS_AS(eval(sugar, crn, {}, {}), EvalError);
    CHECK_NOTHROW(eval(desugar(sugar), crn, {}, {}));
}

TEST_CASE("ill-posed dynamics propagate from the integrator") {
    Crn crn = parse_crn("units: M, s\n2X ->{1} 3X\n");
    ProtocolPtr p = equilibrate(initial({1.0}, 1.0, 300.0), 2.0);
    CHECK_THROWS_AS(eval(p, crn, {}, {}), IllPosedError);
}

TEST_CASE("per-species moles are conserved through reaction-free evaluation") {
    Crn crn = no_reactions(3);
    RandomStream rng(2024);
    testgen::GenConfig cfg;
    cfg.species = 3;
    for (int i = 0; i < 100; ++i) {
        testgen::NameSupply names{"v", 0};
        ProtocolPtr p = testgen::gen_closed(rng, cfg, names);
        EvalHooks hooks;
        bool ok = true;
        hooks.on_step = [&](const StepRecord& s) {
            std::vector<double> in(3, 0.0), out(3, 0.0);
            for (const Sample& smp : s.inputs)
                for (std::size_t j = 0; j < 3; ++j) in[j] += smp.conc[j] * smp.volume_l;
            for (const Sample& smp : s.outputs)
                for (std::size_t j = 0; j < 3; ++j) out[j] += smp.conc[j] * smp.volume_l;
            if (s.op == StepRecord::initial || s.op == StepRecord::dispose) return;
            for (std::size_t j = 0; j < 3; ++j) {
                double scale = std::max({1e-30, std::abs(in[j]), std::abs(out[j])});
                if (std::abs(in[j] - out[j]) > 1e-12 * scale) ok = false;
            }
        };
        eval(p, crn, {}, {}, hooks);
        CHECK(ok);
    }
}

TEST_CASE("proposition 1: let equals substitution, bit for bit") {
    Crn crn = parse_crn("units: M, s\nS0 + S1 ->{0.4} S2\n");
    RandomStream rng(555);
    testgen::GenConfig cfg;
    cfg.species = 3;
    cfg.max_time_s = 1.0;
    FlowConfig flow;
    for (int i = 0; i < 60; ++i) {
        testgen::NameSupply n2{"b", 0};
        testgen::NameSupply n1{"c", 0};
        ProtocolPtr p2 = testgen::gen_protocol(rng, cfg, {"x"}, n2);
        ProtocolPtr p1 = testgen::gen_protocol(rng, cfg, {}, n1);
        ProtocolPtr let_form = let("x", p1, p2);
        ProtocolPtr subst_form = substitute(p2, "x", p1);
        EvalResult a = eval(let_form, crn, {}, flow);
        EvalResult b = eval(subst_form, crn, {}, flow);
        CHECK(result_eq(a, b));
    }
}

TEST_CASE("evaluation is invariant under alpha renaming") {
    Crn crn = parse_crn("units: M, s\nS0 + S1 ->{0.4} S2\n");
    RandomStream rng(556);
    testgen::GenConfig cfg;
    cfg.species = 3;
    cfg.max_time_s = 1.0;
    for (int i = 0; i < 60; ++i) {
        testgen::NameSupply names{"b", 0};
        ProtocolPtr body = testgen::gen_protocol(rng, cfg, {"x"}, names);
        ProtocolPtr bound = testgen::gen_protocol(rng, cfg, {}, names);
        ProtocolPtr p = let("x", bound, body);
        ProtocolPtr renamed = alpha_rename(p, {}, BinderSlot::let_var, "fresh_name");
        CHECK(result_eq(eval(p, crn, {}, {}), eval(renamed, crn, {}, {})));
    }
}

TEST_CASE("elapsed time equals the path-maximum oracle") {
    Crn crn = no_reactions(2);
    RandomStream rng(808);
    testgen::GenConfig cfg;
    cfg.species = 2;
    for (int i = 0; i < 100; ++i) {
        testgen::NameSupply names{"v", 0};
        ProtocolPtr p = testgen::gen_closed(rng, cfg, names);
        EvalResult r = eval(p, crn, {}, {});
        CHECK(r.elapsed_s == doctest::Approx(elapsed_oracle(p, {})).epsilon(1e-12));
    }
}

TEST_CASE("mix is commutative and associative within 1e-12") {
    Crn crn = no_reactions(2);
    RandomStream rng(31);
    for (int i = 0; i < 200; ++i) {
        auto s = [&](int) {
            return initial({rng.uniform01(), rng.uniform01()}, 0.1 + rng.uniform01(),
                           280.0 + 40.0 * rng.uniform01());
        };
        ProtocolPtr a = s(0), b = s(1), c = s(2);
        EvalResult ab = eval(mix(a, b), crn, {}, {});
        EvalResult ba = eval(mix(b, a), crn, {}, {});
        for (int j = 0; j < 2; ++j)
            CHECK(ab.sample.conc[j] ==
                  doctest::Approx(ba.sample.conc[j]).epsilon(1e-12));
        EvalResult ab_c = eval(mix(mix(a, b), c), crn, {}, {});
        EvalResult a_bc = eval(mix(a, mix(b, c)), crn, {}, {});
        for (int j = 0; j < 2; ++j)
            CHECK(ab_c.sample.conc[j] ==
                  doctest::Approx(a_bc.sample.conc[j]).epsilon(1e-12));
        CHECK(ab_c.sample.volume_l == doctest::Approx(a_bc.sample.volume_l).epsilon(1e-12));
    }
}

TEST_CASE("equilibrate traces are delivered in execution order") {
    Crn crn = parse_crn("units: M, s\nS0 ->{0.1} S1\n");
    ProtocolPtr p = assign_ids(
        equilibrate(equilibrate(initial({1.0, 0.0}, 1.0, 300.0), 2.0), 3.0));
    std::vector<EquilibrateTrace> traces;
    EvalHooks hooks;
    hooks.on_equilibrate = [&](const EquilibrateTrace& t) { traces.push_back(t); };
    eval(p, crn, {}, {}, hooks);
    REQUIRE(traces.size() == 2);
    CHECK(traces[0].duration_s == 2.0);
    CHECK(traces[0].start_elapsed_s == 0.0);
    CHECK(traces[1].duration_s == 3.0);
    CHECK(traces[1].start_elapsed_s == 2.0);
    CHECK(traces[1].trajectory.final_state()[1] > 0.0);
}
