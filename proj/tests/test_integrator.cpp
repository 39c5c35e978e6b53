#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protolang/crn.hpp"
#include "protolang/errors.hpp"
#include "protolang/integrator.hpp"

using namespace protolang;

namespace {

VectorField quadratic_decay(double k, double n0) {
    // dH/dt = -k n0^2 H^2, H(t) = c0 / (1 + k n0^2 c0 t)
    return [k, n0](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -k * n0 * n0 * y[0] * y[0];
    };
}

}  // namespace

TEST_CASE("zero field holds the state exactly") {
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 0.0; };
    std::vector<double> x0{0.37};
    FlowConfig cfg;
    Trajectory traj = integrate(f, x0, 123.0, cfg);
    CHECK(traj.final_state()[0] == 0.37);
    CHECK(traj.at(77.7)[0] == 0.37);
}

TEST_CASE("titration closed form within 10x rel_tol") {
    double k = 2.81e-10, n0 = 0.05, c0 = 0.05, t = 1e4;
    FlowConfig cfg;
    std::vector<double> x0{c0};
    Trajectory traj = integrate(quadratic_decay(k, n0), x0, t, cfg);
    double expected = c0 / (1.0 + k * n0 * n0 * c0 * t);
    CHECK(std::abs(traj.final_state()[0] - expected) <=
          10.0 * cfg.rel_tol * std::abs(expected));
}

TEST_CASE("fast quadratic decay also matches its closed form") {
    double k = 10.0, n0 = 1.0, c0 = 1.0, t = 50.0;
    FlowConfig cfg;
    std::vector<double> x0{c0};
    Trajectory traj = integrate(quadratic_decay(k, n0), x0, t, cfg);
    double expected = c0 / (1.0 + k * c0 * t);
    CHECK(traj.final_state()[0] == doctest::Approx(expected).epsilon(10 * cfg.rel_tol));
}

TEST_CASE("finite-time blowup reports IllPosed") {
    VectorField f = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = y[0] * y[0];
    };
    std::vector<double> x0{1.0};
    FlowConfig cfg;  // true solution 1/(1-t) escapes at t=1
    CHECK_THROWS_AS(integrate(f, x0, 2.0, cfg), IllPosedError);
}

TEST_CASE("exit_time: linear clock hits its threshold") {
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 1.0; };
    std::vector<double> x0{0.0};
    double theta = 2.5;
    StatePredicate guard = [theta](double, std::span<const double> y) {
        return y[0] >= theta;
    };
    FlowConfig cfg;
    cfg.horizon = 100.0;
    ExitResult r = exit_time(f, x0, guard, cfg);
    REQUIRE(r.exited);
    CHECK(std::abs(r.t - theta) <= 1e-9 * std::max(1.0, theta));
}

TEST_CASE("exit_time: guard already true at the initial state") {
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 1.0; };
    std::vector<double> x0{5.0};
    StatePredicate guard = [](double, std::span<const double> y) { return y[0] >= 1.0; };
    FlowConfig cfg;
    cfg.horizon = 10.0;
    ExitResult r = exit_time(f, x0, guard, cfg);
    REQUIRE(r.exited);
    CHECK(r.t == 0.0);
    CHECK(r.state[0] == 5.0);
}

TEST_CASE("exit_time: decaying exponential crosses 1/2 at ln 2") {
    VectorField f = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -y[0];
    };
    std::vector<double> x0{1.0};
    StatePredicate guard = [](double, std::span<const double> y) { return y[0] <= 0.5; };
    FlowConfig cfg;
    cfg.horizon = 50.0;
    ExitResult r = exit_time(f, x0, guard, cfg);
    REQUIRE(r.exited);
    CHECK(std::abs(r.t - std::log(2.0)) <= 1e-8);
}

TEST_CASE("exit_time: no crossing within the horizon") {
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 1.0; };
    std::vector<double> x0{0.0};
    StatePredicate guard = [](double, std::span<const double> y) { return y[0] >= 1e9; };
    FlowConfig cfg;
    cfg.horizon = 10.0;
    ExitResult r = exit_time(f, x0, guard, cfg);
    CHECK_FALSE(r.exited);
    CHECK(r.t == cfg.horizon);
}

TEST_CASE("accumulator: constant intensity hits E/lambda") {
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 0.0; };
    ScalarField lam = [](double, std::span<const double>) { return 0.25; };
    std::vector<double> x0{1.0};
    FlowConfig cfg;
    cfg.horizon = 1e6;
    HitResult r = integrate_with_accumulator(f, x0, lam, 2.0, cfg);
    REQUIRE(r.hit);
    CHECK(r.t == doctest::Approx(8.0).epsilon(1e-6));
}

TEST_CASE("accumulator: linearly growing intensity integrates to t^2/2") {
    // clock coordinate drives lambda(t) = t; the integral reaches 2 at t = 2
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 1.0; };
    ScalarField lam = [](double, std::span<const double> y) { return y[0]; };
    std::vector<double> x0{0.0};
    FlowConfig cfg;
    cfg.horizon = 100.0;
    HitResult r = integrate_with_accumulator(f, x0, lam, 2.0, cfg);
    REQUIRE(r.hit);
    CHECK(r.t == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("accumulator: zero intensity never fires") {
    VectorField f = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 0.0; };
    ScalarField lam = [](double, std::span<const double>) { return 0.0; };
    std::vector<double> x0{1.0};
    FlowConfig cfg;
    cfg.horizon = 25.0;
    HitResult r = integrate_with_accumulator(f, x0, lam, 1.0, cfg);
    CHECK_FALSE(r.hit);
    CHECK(r.t == 25.0);
}

TEST_CASE("conservation under the flow of a conservative network") {
    // A + B <-> C conserves A+C and B+C
    Crn crn;
    crn.species = {{"A", 0}, {"B", 1}, {"C", 2}};
    Reaction fwd;
    fwd.source = {1, 1, 0};
    fwd.product = {0, 0, 1};
    fwd.rate = 2.0;
    Reaction bwd;
    bwd.source = {0, 0, 1};
    bwd.product = {1, 1, 0};
    bwd.rate = 0.5;
    crn.reactions = {fwd, bwd};
    crn.validate();

    VectorField f = [&crn](double, std::span<const double> y, std::span<double> dy) {
        drift_into(crn, y, 1.0, 300.0, dy);
    };
    std::vector<double> x0{0.8, 0.6, 0.1};
    FlowConfig cfg;
    cfg.project_nonnegative = true;
    Trajectory traj = integrate(f, x0, 40.0, cfg);
    auto yf = traj.final_state();
    double w1_0 = x0[0] + x0[2], w2_0 = x0[1] + x0[2];
    CHECK(std::abs(yf[0] + yf[2] - w1_0) <= 10.0 * (cfg.abs_tol + cfg.rel_tol * w1_0));
    CHECK(std::abs(yf[1] + yf[2] - w2_0) <= 10.0 * (cfg.abs_tol + cfg.rel_tol * w2_0));
}

TEST_CASE("halving the tolerances never increases the error") {
    double k = 10.0, n0 = 1.0, c0 = 1.0, t = 5.0;
    double expected = c0 / (1.0 + k * c0 * t);
    double prev_err = -1.0;
    for (int level = 0; level < 4; ++level) {
        FlowConfig cfg;
        cfg.rel_tol = 1e-4 * std::pow(0.5, level);
        cfg.abs_tol = 1e-6 * std::pow(0.5, level);
        std::vector<double> x0{c0};
        Trajectory traj = integrate(quadratic_decay(k, n0), x0, t, cfg);
        double err = std::abs(traj.final_state()[0] - expected);
        if (prev_err >= 0.0) CHECK(err <= prev_err * 1.000001);
        prev_err = err;
    }
}

TEST_CASE("guard stays false on a fine grid strictly before the exit time") {
    VectorField f = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -y[0];
    };
    std::vector<double> x0{1.0};
    StatePredicate guard = [](double, std::span<const double> y) { return y[0] <= 0.5; };
    FlowConfig cfg;
    cfg.horizon = 10.0;
    ExitResult r = exit_time(f, x0, guard, cfg);
    REQUIRE(r.exited);
    Trajectory traj = integrate(f, x0, r.t, cfg);
    double tol = 1e-9 * std::max(1.0, r.t);
    for (int i = 0; i < 1000; ++i) {
        double t = (r.t - tol) * i / 1000.0;
        CHECK_FALSE(guard(t, traj.at(t)));
    }
}

TEST_CASE("dense-output queries agree with a re-integration to the query time") {
    VectorField f = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -0.8 * y[0];
        dy[1] = 0.3 * y[0] - 0.1 * y[1];
    };
    std::vector<double> x0{2.0, 0.5};
    FlowConfig cfg;
    Trajectory traj = integrate(f, x0, 12.0, cfg);
    for (double tq : {0.37, 1.9, 5.55, 11.2}) {
        Trajectory direct = integrate(f, x0, tq, cfg);
        auto dense = traj.at(tq);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            double ref = direct.final_state()[i];
            CHECK(std::abs(dense[i] - ref) <= 10.0 * (cfg.abs_tol + cfg.rel_tol * std::abs(ref)));
        }
    }
}

TEST_CASE("integration over zero duration is the identity") {
    VectorField f = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = 100.0 * y[0];
    };
    std::vector<double> x0{3.0};
    FlowConfig cfg;
    Trajectory traj = integrate(f, x0, 0.0, cfg);
    CHECK(traj.final_state()[0] == 3.0);
    CHECK(traj.end_time() == 0.0);
}
