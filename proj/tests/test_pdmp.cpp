#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protolang/errors.hpp"
#include "protolang/pdmp.hpp"
#include "support/stats.hpp"

using namespace protolang;

namespace {

// one mode, constant intensity, Dirac self-reset at a fixed point
Pdmp poisson_clock(double lambda) {
    Pdmp h;
    h.mode_names = {"only"};
    h.dim = 1;
    h.field = [](int, double, std::span<const double>, std::span<double> dx) { dx[0] = 0.0; };
    h.intensity = [lambda](int, std::span<const double>, int) { return lambda; };
    // self-reset: Davis-style processes jump between distinct modes, but a
    // single recurrent mode with a Dirac reset exercises the same machinery
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) {
        return HybridState{s.mode, {1.0}};
    };
    return h;
}

}  // namespace

TEST_CASE("zero intensity, no guard: one segment to the horizon (Remark 1)") {
    Pdmp h;
    h.mode_names = {"flow"};
    h.dim = 1;
    h.field = [](int, double, std::span<const double> x, std::span<double> dx) {
        dx[0] = -x[0];
    };
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) { return s; };
    RandomStream rng(1);
    std::vector<double> x0{1.0};
    HybridPath path = execute(h, 0, x0, 3.0, rng);
    REQUIRE(path.segments.size() == 1);
    CHECK(path.segments[0].cause == ExitCause::horizon);
    CHECK(path.segments[0].t_exit == 3.0);
    CHECK(path.segments[0].x_exit[0] == doctest::Approx(std::exp(-3.0)).epsilon(1e-7));
}

TEST_CASE("total_intensity sums over every target, self included") {
    Pdmp h;
    h.mode_names = {"a", "b", "c"};
    h.dim = 1;
    h.intensity = [](int q, std::span<const double>, int q_to) {
        return q == 0 ? (q_to == 1 ? 0.25 : 0.5) : 0.0;
    };
    std::vector<double> x{0.0};
    CHECK(h.total_intensity(0, x) == 1.25);
    CHECK(h.total_intensity(1, x) == 0.0);
}

TEST_CASE("constant-intensity jump times are Exp(lambda)") {
    const double lambda = 0.5;
    const std::size_t n = 100000;
    Pdmp h = poisson_clock(lambda);
    RandomStream rng(20240601);
    std::vector<double> x0{1.0};
    ExecuteOptions opts;
    opts.max_jumps = 2 * n;
    // horizon sized for ~1.2n jumps; harvest exactly n inter-jump times
    HybridPath path = execute(h, 0, x0, 1.2 * n / lambda, rng, opts);
    std::vector<double> gaps;
    for (const PathSegment& seg : path.segments) {
        if (seg.cause != ExitCause::jump) continue;
        gaps.push_back(seg.t_exit - seg.t_enter);
        if (gaps.size() == n) break;
    }
    REQUIRE(gaps.size() == n);

    double m = teststats::mean(gaps);
    double target = 1.0 / lambda;
    CHECK(std::abs(m - target) <= 3.0 * target / std::sqrt(static_cast<double>(n)));

    double d = teststats::ks_statistic(
        gaps, [lambda](double t) { return 1.0 - std::exp(-lambda * t); });
    CHECK(d < teststats::ks_critical(0.001) / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("clock guard fires exactly at the threshold") {
    const double theta = 4.25;
    Pdmp h;
    h.mode_names = {"armed", "done"};
    h.dim = 1;
    h.field = [](int, double, std::span<const double>, std::span<double> dx) { dx[0] = 1.0; };
    h.guard = [theta](int q, std::span<const double> x) { return q == 0 && x[0] >= theta; };
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) {
        return HybridState{1, s.x};
    };
    RandomStream rng(7);
    std::vector<double> x0{0.0};
    HybridPath path = execute(h, 0, x0, 10.0, rng);
    REQUIRE(path.segments.size() == 2);
    CHECK(path.segments[0].cause == ExitCause::guard);
    CHECK(std::abs(path.segments[0].t_exit - theta) <= 1e-9 * std::max(1.0, theta));
    CHECK(path.segments[1].mode == 1);
    CHECK(path.segments[1].cause == ExitCause::horizon);
}

TEST_CASE("guard has priority when the intensity threshold lies beyond it") {
    // tiny intensity, guard at theta: essentially every exit is the guard's
    const double theta = 1.0;
    Pdmp h;
    h.mode_names = {"armed", "done"};
    h.dim = 1;
    h.field = [](int, double, std::span<const double>, std::span<double> dx) { dx[0] = 1.0; };
    h.guard = [theta](int q, std::span<const double> x) { return q == 0 && x[0] >= theta; };
    h.intensity = [](int q, std::span<const double>, int q_to) {
        return q == 0 && q_to == 1 ? 1e-12 : 0.0;
    };
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) {
        return HybridState{1, s.x};
    };
    RandomStream rng(99);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x0{0.0};
        HybridPath path = execute(h, 0, x0, 10.0, rng);
        CHECK(path.segments[0].cause == ExitCause::guard);
        CHECK(std::abs(path.segments[0].t_exit - theta) <= 1e-9);
    }
}

TEST_CASE("guard true on entry jumps immediately") {
    Pdmp h;
    h.mode_names = {"armed", "done"};
    h.dim = 1;
    h.field = [](int, double, std::span<const double>, std::span<double> dx) { dx[0] = 0.0; };
    h.guard = [](int q, std::span<const double>) { return q == 0; };
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) {
        return HybridState{1, s.x};
    };
    RandomStream rng(3);
    std::vector<double> x0{0.5};
    HybridPath path = execute(h, 0, x0, 1.0, rng);
    REQUIRE(path.segments.size() == 2);
    CHECK(path.segments[0].t_exit == 0.0);
    CHECK(path.segments[0].cause == ExitCause::guard);
}

TEST_CASE("survival function") {
    const double lambda = 0.7;
    Pdmp h = poisson_clock(lambda);
    std::vector<double> x{1.0};
    CHECK(survival(h, 0, x, 2.0) == doctest::Approx(std::exp(-2.0 * lambda)).epsilon(1e-7));
    CHECK(survival(h, 0, x, 0.0) == 1.0);

    // with a clock guard at theta, survival drops to zero past t*
    Pdmp g;
    g.mode_names = {"armed"};
    g.dim = 1;
    g.field = [](int, double, std::span<const double>, std::span<double> dx) { dx[0] = 1.0; };
    g.guard = [](int, std::span<const double> x2) { return x2[0] >= 1.5; };
    g.intensity = [lambda](int, std::span<const double>, int) { return lambda; };
    g.reset = [](const HybridState& s, ExitCause, RandomStream&) { return s; };
    std::vector<double> y{0.0};
    CHECK(survival(g, 0, y, 1.0) == doctest::Approx(std::exp(-lambda)).epsilon(1e-7));
    CHECK(survival(g, 0, y, 2.0) == 0.0);

    // zero intensity before the guard: survival 1
    Pdmp z = g;
    z.intensity = nullptr;
    CHECK(survival(z, 0, y, 1.0) == 1.0);
}

TEST_CASE("path continuity: segment flows satisfy the mode ODE; resets are exact") {
    Pdmp h;
    h.mode_names = {"decay", "grow"};
    h.dim = 1;
    h.field = [](int q, double, std::span<const double> x, std::span<double> dx) {
        dx[0] = q == 0 ? -x[0] : 0.2 * x[0];
    };
    h.guard = [](int q, std::span<const double> x) { return q == 0 && x[0] <= 0.5; };
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) {
        return HybridState{1, {7.0}};  // Dirac reset to a known state
    };
    RandomStream rng(11);
    std::vector<double> x0{1.0};
    ExecuteOptions opts;
    opts.keep_trajectories = true;
    HybridPath path = execute(h, 0, x0, 2.0, rng, opts);
    REQUIRE(path.segments.size() == 2);
    // mode-0 flow matches exp(-t) pointwise
    const Trajectory& t0 = path.trajectories[0];
    for (double t : {0.1, 0.3, 0.6}) {
        if (t > t0.end_time()) continue;
        CHECK(t0.at(t)[0] == doctest::Approx(std::exp(-t)).epsilon(1e-6));
    }
    // reset lands exactly on the Dirac point
    CHECK(path.segments[1].x_enter[0] == 7.0);
    // and the second segment grows from it
    CHECK(path.segments[1].x_exit[0] > 7.0);
}

TEST_CASE("same seed, same path, bit for bit") {
    Pdmp h = poisson_clock(0.9);
    ExecuteOptions opts;
    opts.max_jumps = 100000;
    auto run = [&](std::uint64_t seed) {
        RandomStream rng(seed);
        std::vector<double> x0{1.0};
        return execute(h, 0, x0, 500.0, rng, opts);
    };
    HybridPath a = run(42), b = run(42), c = run(43);
    REQUIRE(a.segments.size() == b.segments.size());
    for (std::size_t i = 0; i < a.segments.size(); ++i) {
        CHECK(a.segments[i].t_exit == b.segments[i].t_exit);
        CHECK(a.segments[i].x_exit == b.segments[i].x_exit);
        CHECK(a.segments[i].cause == b.segments[i].cause);
    }
    REQUIRE(c.segments.size() > 1);
    CHECK(a.segments[0].t_exit != c.segments[0].t_exit);
}

TEST_CASE("runaway jumping trips the Zeno cap") {
    Pdmp h = poisson_clock(1e6);
    RandomStream rng(5);
    std::vector<double> x0{1.0};
    ExecuteOptions opts;
    opts.max_jumps = 500;
    CHECK_THROWS_AS(execute(h, 0, x0, 1e9, rng, opts), ZenoError);
}

TEST_CASE("state-dependent intensity via time rescaling") {
    // lambda(x) = x with clock dx/dt = 1: P(T > t) = exp(-t^2/2)
    Pdmp h;
    h.mode_names = {"ramp"};
    h.dim = 1;
    h.field = [](int, double, std::span<const double>, std::span<double> dx) { dx[0] = 1.0; };
    h.intensity = [](int, std::span<const double> x, int) { return x[0]; };
    h.reset = [](const HybridState& s, ExitCause, RandomStream&) {
        return HybridState{s.mode, {0.0}};
    };
    const std::size_t n = 20000;
    RandomStream rng(31415);
    std::vector<double> gaps;
    std::vector<double> x0{0.0};
    ExecuteOptions opts;
    opts.max_jumps = 2 * n;
    // mean inter-jump time is sqrt(pi/2); size the horizon for ~1.2n jumps
    HybridPath path = execute(h, 0, x0, 1.2 * n * std::sqrt(1.5707963267948966), rng, opts);
    for (const PathSegment& seg : path.segments) {
        if (seg.cause != ExitCause::jump) continue;
        gaps.push_back(seg.t_exit - seg.t_enter);
        if (gaps.size() == n) break;
    }
    REQUIRE(gaps.size() == n);
    double d = teststats::ks_statistic(
        gaps, [](double t) { return 1.0 - std::exp(-0.5 * t * t); });
    CHECK(d < teststats::ks_critical(0.001) / std::sqrt(static_cast<double>(n)));
}
