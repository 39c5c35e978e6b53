#include "protolang/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "protolang/errors.hpp"

namespace protolang {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b_hat (5th minus embedded 4th order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense-output coefficients (Hairer, Norsett, Wanner; dopri5.f).
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

constexpr double kTimeTolFactor = 1e-9;
constexpr std::size_t kMaxSteps = 100'000'000;

struct Stepper {
    const VectorField& f;
    FlowConfig cfg;
    std::size_t n;

    std::vector<double> y;   // current state
    std::vector<double> k1;  // derivative at y (FSAL)
    double t = 0.0;
    double h = 0.0;

    std::array<std::vector<double>, 7> k;
    std::vector<double> y_stage;
    std::vector<double> y_next;

    Stepper(const VectorField& field, std::span<const double> x0, const FlowConfig& config)
        : f(field), cfg(config), n(x0.size()), y(x0.begin(), x0.end()) {
        for (auto& ki : k) ki.resize(n);
        y_stage.resize(n);
        y_next.resize(n);
        k1.resize(n);
        f(0.0, y, k1);
        check_finite(k1, 0.0);
    }

    void check_finite(const std::vector<double>& v, double at) const {
        for (double x : v)
            if (!std::isfinite(x))
                throw IllPosedError("non-finite value during integration", at);
    }

    double error_scale(std::size_t i) const {
        return cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y[i]), std::abs(y_next[i]));
    }

    double initial_step(double duration) const {
        double d0 = 0.0, d1n = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
            d0 += (y[i] / sc) * (y[i] / sc);
            d1n += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / n);
        d1n = std::sqrt(d1n / n);
        double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
        h0 = std::min(h0, duration);
        return std::min(h0, cfg.max_step);
    }

    // One accepted step; on return t/y/k1 advanced and rcont filled. The
    // last step lands exactly on t_end; underflow is judged on the step
    // controller's h, not on the final clip.
    void step(double t_end, DenseStep& dense) {
        std::size_t rejects = 0;
        for (;;) {
            double h_cand = std::min(h, cfg.max_step);
            bool last = std::isfinite(t_end) && h_cand >= t_end - t;
            double h_try = last ? t_end - t : h_cand;
            if (!last &&
                h_try <= std::numeric_limits<double>::epsilon() * 16.0 * std::max(1.0, std::abs(t)))
                throw IllPosedError("step size underflow", t);

            // stages
            for (std::size_t i = 0; i < n; ++i) k[0][i] = k1[i];
            stage(h_try, c2, {a21}, 1);
            stage(h_try, c3, {a31, a32}, 2);
            stage(h_try, c4, {a41, a42, a43}, 3);
            stage(h_try, c5, {a51, a52, a53, a54}, 4);
            stage(h_try, 1.0, {a61, a62, a63, a64, a65}, 5);
            for (std::size_t i = 0; i < n; ++i)
                y_next[i] = y[i] + h_try * (b1 * k[0][i] + b3 * k[2][i] + b4 * k[3][i] +
                                            b5 * k[4][i] + b6 * k[5][i]);
            f(t + h_try, y_next, k[6]);

            double err = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double e = h_try * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] +
                                    e6 * k[5][i] + e7 * k[6][i]);
                double sc = error_scale(i);
                err += (e / sc) * (e / sc);
            }
            err = std::sqrt(err / n);
            if (!std::isfinite(err)) err = 1e10;

            if (err <= 1.0) {
                check_finite(y_next, t + h_try);
                for (double v : y_next)
                    if (std::abs(v) > cfg.blowup_threshold)
                        throw IllPosedError("state exceeded blowup threshold", t + h_try);
                if (cfg.project_nonnegative) {
                    // the round-off band scales with the absolute error budget
                    double band = std::max(1e-12, 10.0 * cfg.abs_tol);
                    for (std::size_t i = 0; i < n; ++i) {
                        if (y_next[i] < 0.0) {
                            if (y_next[i] <= -band)
                                throw NegativeConcentrationError(
                                    "integration produced a concentration below the "
                                    "round-off band");
                            y_next[i] = 0.0;
                        }
                    }
                }

                fill_dense(dense, h_try);
                t = last ? t_end : t + h_try;
                std::swap(y, y_next);
                std::swap(k1, k[6]);  // FSAL
                double grow = err == 0.0 ? 5.0
                                         : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                h = h_try * grow;
                return;
            }
            h = h_try * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
            if (++rejects > 1000) throw IllPosedError("step control failed to converge", t);
        }
    }

    void stage(double h_try, double c, std::initializer_list<double> as, std::size_t idx) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            std::size_t j = 0;
            for (double a : as) acc += a * k[j++][i];
            y_stage[i] = y[i] + h_try * acc;
        }
        f(t + c * h_try, y_stage, k[idx]);
    }

    void fill_dense(DenseStep& dense, double h_used) const {
        dense.t0 = t;
        dense.h = h_used;
        for (auto& rc : dense.rcont) rc.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double ydiff = y_next[i] - y[i];
            double bspl = h_used * k[0][i] - ydiff;
            dense.rcont[0][i] = y[i];
            dense.rcont[1][i] = ydiff;
            dense.rcont[2][i] = bspl;
            dense.rcont[3][i] = ydiff - h_used * k[6][i] - bspl;
            dense.rcont[4][i] = h_used * (d1 * k[0][i] + d3 * k[2][i] + d4 * k[3][i] +
                                          d5 * k[4][i] + d6 * k[5][i] + d7 * k[6][i]);
        }
    }
};

double time_tolerance(double t) { return kTimeTolFactor * std::max(1.0, std::abs(t)); }

}  // namespace

void DenseStep::eval(double t, std::span<double> out) const {
    double theta = h == 0.0 ? 0.0 : (t - t0) / h;
    theta = std::clamp(theta, 0.0, 1.0);
    double theta1 = 1.0 - theta;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = rcont[0][i] +
                 theta * (rcont[1][i] +
                          theta1 * (rcont[2][i] +
                                    theta * (rcont[3][i] + theta1 * rcont[4][i])));
    }
}

Trajectory::Trajectory(double t0, std::vector<double> y0)
    : t_start_(t0), t_end_(t0), y_start_(y0), y_end_(std::move(y0)) {}

void Trajectory::append(DenseStep step, std::vector<double> y_end, double t_end) {
    steps_.push_back(std::move(step));
    y_end_ = std::move(y_end);
    t_end_ = t_end;
}

void Trajectory::at_into(double t, std::span<double> out) const {
    if (steps_.empty() || t <= t_start_) {
        std::copy(y_start_.begin(), y_start_.end(), out.begin());
        return;
    }
    if (t >= t_end_) {
        std::copy(y_end_.begin(), y_end_.end(), out.begin());
        return;
    }
    // binary search for the step containing t
    std::size_t lo = 0, hi = steps_.size() - 1;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (steps_[mid].t0 + steps_[mid].h < t)
            lo = mid + 1;
        else
            hi = mid;
    }
    steps_[lo].eval(t, out);
}

std::vector<double> Trajectory::at(double t) const {
    std::vector<double> out(y_start_.size());
    at_into(t, out);
    return out;
}

Trajectory integrate(const VectorField& f, std::span<const double> x0, double duration,
                     const FlowConfig& cfg) {
    if (duration < 0.0) throw StructuralError("integrate: negative duration");
    Trajectory traj(0.0, std::vector<double>(x0.begin(), x0.end()));
    if (duration == 0.0) return traj;

    Stepper st(f, x0, cfg);
    st.h = st.initial_step(duration);
    DenseStep dense;
    std::size_t steps = 0;
    while (st.t < duration) {
        st.step(duration, dense);
        traj.append(dense, st.y, st.t);
        if (++steps > kMaxSteps) throw IllPosedError("step count limit exceeded", st.t);
    }
    return traj;
}

EventResult flow_until_event(const VectorField& f, std::span<const double> x0,
                             const StatePredicate* guard, const ScalarField* aux,
                             double stop_level, double duration_cap, const FlowConfig& cfg,
                             bool keep_trajectory) {
    const std::size_t n = x0.size();
    EventResult result;

    if (guard && (*guard)(0.0, x0)) {
        result.event = FlowEvent::guard;
        result.t = 0.0;
        result.state.assign(x0.begin(), x0.end());
        if (keep_trajectory)
            result.trajectory = Trajectory(0.0, std::vector<double>(x0.begin(), x0.end()));
        return result;
    }

    // Augment with the accumulator coordinate when an intensity is given.
    const bool with_aux = aux != nullptr;
    std::vector<double> z0(x0.begin(), x0.end());
    if (with_aux) z0.push_back(0.0);

    VectorField fz = [&](double t, std::span<const double> z, std::span<double> dz) {
        f(t, z.subspan(0, n), dz.subspan(0, n));
        if (with_aux) {
            double lambda = (*aux)(t, z.subspan(0, n));
            if (lambda < 0.0)
                throw StructuralError("intensity/accumulator field must be nonnegative");
            dz[n] = lambda;
        }
    };

    // The accumulator starts at 0 and is monotone nondecreasing, so the
    // nonnegative projection never fires on it; cfg can be reused as-is.
    Stepper st(fz, z0, cfg);
    st.h = st.initial_step(std::isfinite(duration_cap) ? duration_cap : 1.0);

    Trajectory traj(0.0, std::vector<double>(x0.begin(), x0.end()));
    DenseStep dense;
    std::vector<double> zbuf(z0.size());
    std::vector<double> probe(z0.size());

    auto state_at = [&](const DenseStep& d, double t, std::span<double> out) {
        d.eval(t, out);
    };

    std::size_t steps = 0;
    while (st.t < duration_cap) {
        double t_prev = st.t;
        st.step(duration_cap, dense);
        if (++steps > kMaxSteps) throw IllPosedError("step count limit exceeded", st.t);

        double t_guard = std::numeric_limits<double>::infinity();
        double t_accum = std::numeric_limits<double>::infinity();

        if (guard) {
            // sample the dense output; bisect inside the first true interval
            constexpr int kProbes = 8;
            double lo = t_prev, hi = std::numeric_limits<double>::quiet_NaN();
            for (int i = 1; i <= kProbes; ++i) {
                double tt = t_prev + (st.t - t_prev) * i / kProbes;
                state_at(dense, tt, probe);
                if ((*guard)(tt, std::span<const double>(probe).subspan(0, n))) {
                    hi = tt;
                    break;
                }
                lo = tt;
            }
            if (!std::isnan(hi)) {
                double tol = time_tolerance(hi);
                while (hi - lo > tol) {
                    double mid = 0.5 * (lo + hi);
                    state_at(dense, mid, probe);
                    if ((*guard)(mid, std::span<const double>(probe).subspan(0, n)))
                        hi = mid;
                    else
                        lo = mid;
                }
                t_guard = hi;
            }
        }

        if (with_aux && st.y[n] >= stop_level) {
            // accumulator is monotone within the step: bisect the crossing
            double lo = t_prev, hi = st.t;
            double tol = time_tolerance(hi);
            while (hi - lo > tol) {
                double mid = 0.5 * (lo + hi);
                state_at(dense, mid, probe);
                if (probe[n] >= stop_level)
                    hi = mid;
                else
                    lo = mid;
            }
            t_accum = hi;
        }

        if (t_guard < std::numeric_limits<double>::infinity() ||
            t_accum < std::numeric_limits<double>::infinity()) {
            // ties resolve to the guard: the survival function is cut off at t*
            bool guard_first = t_guard <= t_accum;
            double t_event = guard_first ? t_guard : t_accum;
            state_at(dense, t_event, zbuf);
            result.event = guard_first ? FlowEvent::guard : FlowEvent::accumulator;
            result.t = t_event;
            result.state.assign(zbuf.begin(), zbuf.begin() + n);
            if (cfg.project_nonnegative)
                for (double& v : result.state)
                    if (v < 0.0 && v > -1e-12) v = 0.0;
            result.accumulated = with_aux ? zbuf[n] : 0.0;
            if (keep_trajectory) {
                // Keep the step's original h (the dense polynomial is
                // parameterized by it); the trajectory end time is the
                // event time, so queries never run past it.
                DenseStep cut = dense;
                for (auto& rc : cut.rcont) rc.resize(n);
                traj.append(cut, std::vector<double>(result.state), t_event);
                result.trajectory = std::move(traj);
            }
            return result;
        }

        if (keep_trajectory) {
            DenseStep orig = dense;
            for (auto& rc : orig.rcont) rc.resize(n);
            traj.append(orig, std::vector<double>(st.y.begin(), st.y.begin() + n), st.t);
        }
    }

    result.event = FlowEvent::horizon;
    result.t = st.t;
    result.state.assign(st.y.begin(), st.y.begin() + n);
    result.accumulated = with_aux ? st.y[n] : 0.0;
    if (keep_trajectory) result.trajectory = std::move(traj);
    return result;
}

ExitResult exit_time(const VectorField& f, std::span<const double> x0,
                     const StatePredicate& guard, const FlowConfig& cfg) {
    EventResult ev = flow_until_event(f, x0, &guard, nullptr, 0.0, cfg.horizon, cfg, false);
    ExitResult r;
    if (ev.event == FlowEvent::guard) {
        r.exited = true;
        r.t = ev.t;
        r.state = std::move(ev.state);
    } else {
        r.exited = false;
        r.t = cfg.horizon;
        r.state = std::move(ev.state);
    }
    return r;
}

HitResult integrate_with_accumulator(const VectorField& f, std::span<const double> x0,
                                     const ScalarField& aux, double stop_level,
                                     const FlowConfig& cfg) {
    EventResult ev = flow_until_event(f, x0, nullptr, &aux, stop_level, cfg.horizon, cfg, false);
    HitResult r;
    if (ev.event == FlowEvent::accumulator) {
        r.hit = true;
        r.t = ev.t;
        r.state = std::move(ev.state);
    } else {
        r.hit = false;
        r.t = cfg.horizon;
        r.state = std::move(ev.state);
    }
    return r;
}

}  // namespace protolang
