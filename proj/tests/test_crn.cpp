#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protolang/crn.hpp"
#include "protolang/errors.hpp"
#include "protolang/rng.hpp"

using namespace protolang;

namespace {

Crn make_crn(std::vector<std::string> names, std::vector<Reaction> reactions,
             ConcUnit unit = ConcUnit::molar) {
    Crn c;
    for (std::size_t i = 0; i < names.size(); ++i) c.species.push_back({names[i], i});
    c.reactions = std::move(reactions);
    c.declared_unit = unit;
    c.validate();
    return c;
}

// The paper's titration network with species ordered H2O, Na+, OH-, Cl-, H+.
Crn titration_crn() {
    Reaction r;
    r.source = {0, 1, 1, 1, 1};
    r.product = {1, 1, 0, 1, 0};
    r.rate = 2.81e-10;
    return make_crn({"H2O", "Na+", "OH-", "Cl-", "H+"}, {r});
}

}  // namespace

TEST_CASE("net_change is product minus source") {
    Reaction r;
    r.source = {1, 0, 1};
    r.product = {0, 2, 0};
    r.rate = 1.0;
    CHECK(net_change(r) == std::vector<int>{-1, 2, -1});

    Reaction ident;
    ident.source = {1, 1, 0};
    ident.product = {1, 1, 0};
    ident.rate = 1.0;
    CHECK(net_change(ident) == std::vector<int>{0, 0, 0});
    CHECK(is_null_effect(ident));

    Reaction two;
    two.source = {2, 0};
    two.product = {0, 1};
    two.rate = 1.0;
    CHECK(net_change(two) == std::vector<int>{-2, 1});
}

TEST_CASE("mass-action propensity") {
    Crn c = make_crn({"A", "B"}, {});
    Reaction r;
    r.source = {1, 1};
    r.product = {0, 2};
    r.rate = 0.5;
    std::vector<double> conc{2.0, 3.0};
    CHECK(propensity(c, r, conc, 298.15) == 3.0);

    // zero factor from an absent reactant
    conc = {0.0, 3.0};
    CHECK(propensity(c, r, conc, 298.15) == 0.0);

    // quartic propensity from the titration network
    Crn t = titration_crn();
    std::vector<double> tc{0.0, 0.05, 0.05, 0.05, 0.05};
    double gamma = propensity(t, t.reactions[0], tc, 298.0);
    CHECK(gamma == doctest::Approx(1.75625e-15).epsilon(1e-12));
}

TEST_CASE("propensity clamps round-off negatives and rejects larger ones") {
    Crn c = make_crn({"A"}, {});
    Reaction r;
    r.source = {1};
    r.product = {0};
    r.rate = 2.0;
    std::vector<double> tiny{-1e-13};
    CHECK(propensity(c, r, tiny, 300.0) == 0.0);
    std::vector<double> bad{-1e-9};
    CHECK_THROWS_AS(propensity(c, r, bad, 300.0), NegativeConcentrationError);
}

TEST_CASE("drift of the titration network") {
    Crn t = titration_crn();
    std::vector<double> conc{0.0, 0.05, 0.05, 0.05, 0.05};
    std::vector<double> f = drift(t, conc, 1e-3, 298.0);
    double g = 1.75625e-15;
    CHECK(f[4] == doctest::Approx(-g).epsilon(1e-12));  // H+
    CHECK(f[2] == doctest::Approx(-g).epsilon(1e-12));  // OH-
    CHECK(f[0] == doctest::Approx(+g).epsilon(1e-12));  // H2O
    CHECK(f[1] == 0.0);                                 // Na+ conserved
    CHECK(f[3] == 0.0);                                 // Cl- conserved
    CHECK(f[4] == f[2]);
}

TEST_CASE("empty reaction list gives the zero drift") {
    Crn c = make_crn({"A", "B", "C"}, {});
    std::vector<double> conc{1.0, 2.0, 3.0};
    for (double v : drift(c, conc, 1.0, 300.0)) CHECK(v == 0.0);
}

TEST_CASE("degradation to the empty complex") {
    Crn c = make_crn({"A"}, {});
    Reaction r;
    r.source = {1};
    r.product = {0};
    r.rate = 0.7;
    c.reactions.push_back(r);
    std::vector<double> conc{2.0};
    CHECK(drift(c, conc, 1.0, 300.0)[0] == -1.4);
}

TEST_CASE("drift rejects dimension mismatches") {
    Crn c = make_crn({"A", "B"}, {});
    std::vector<double> wrong{1.0};
    CHECK_THROWS_AS(drift(c, wrong, 1.0, 300.0), StructuralError);
}

TEST_CASE("property: drift equals the loop oracle over random networks") {
    RandomStream rng(1234);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t ns = 1 + rng.next_u64() % 5;
        std::size_t nr = rng.next_u64() % 6;
        Crn c;
        for (std::size_t i = 0; i < ns; ++i)
            c.species.push_back({"S" + std::to_string(i), i});
        for (std::size_t t = 0; t < nr; ++t) {
            Reaction r;
            r.source.resize(ns);
            r.product.resize(ns);
            for (std::size_t i = 0; i < ns; ++i) {
                r.source[i] = rng.next_u64() % 3;
                r.product[i] = rng.next_u64() % 3;
            }
            r.rate = 0.1 + rng.uniform01();
            c.reactions.push_back(r);
        }
        c.validate();
        std::vector<double> conc(ns);
        for (double& v : conc) v = 2.0 * rng.uniform01();

        std::vector<double> f = drift(c, conc, 1.0, 300.0);
        // independent oracle: accumulate nu * gamma reaction by reaction
        std::vector<double> oracle(ns, 0.0);
        for (const Reaction& r : c.reactions) {
            double gamma = r.rate;
            for (std::size_t i = 0; i < ns; ++i)
                for (unsigned m = 0; m < r.source[i]; ++m) gamma *= conc[i];
            std::vector<int> nu = net_change(r);
            for (std::size_t i = 0; i < ns; ++i) oracle[i] += nu[i] * gamma;
        }
        for (std::size_t i = 0; i < ns; ++i) CHECK(f[i] == oracle[i]);
    }
}

TEST_CASE("property: propensity is monotone in source concentrations") {
    RandomStream rng(99);
    Crn c = make_crn({"A", "B", "C"}, {});
    Reaction r;
    r.source = {2, 1, 0};
    r.product = {0, 0, 1};
    r.rate = 0.37;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> conc{rng.uniform01(), rng.uniform01(), rng.uniform01()};
        std::vector<double> bumped = conc;
        std::size_t which = rng.next_u64() % 2;  // only source species matter
        bumped[which] += rng.uniform01();
        CHECK(propensity(c, r, bumped, 300.0) >= propensity(c, r, conc, 300.0));
    }
}

TEST_CASE("lint flags superlinear autocatalysis but not the titration") {
    Crn t = titration_crn();
    CHECK(lint_crn(t).empty());

    Reaction r;
    r.source = {2};
    r.product = {3};
    r.rate = 1.0;
    Crn bad = make_crn({"X"}, {r});
    auto warnings = lint_crn(bad);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("Lipschitz") != std::string::npos);

    // A + B -> 2B is fine (first order in B)
    Reaction logistic;
    logistic.source = {1, 1};
    logistic.product = {0, 2};
    logistic.rate = 1.0;
    CHECK(lint_crn(make_crn({"A", "B"}, {logistic})).empty());
}
