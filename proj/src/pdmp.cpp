#include "protolang/pdmp.hpp"

#include <cmath>
#include <limits>

#include "protolang/errors.hpp"

namespace protolang {

double Pdmp::total_intensity(int q, std::span<const double> x) const {
    if (!intensity) return 0.0;
    double sum = 0.0;
    // The q'==q term counts: the reset kernel may keep mass in the current
    // mode (a pure jump process on one mode is the degenerate case).
    for (std::size_t j = 0; j < num_modes(); ++j)
        sum += intensity(q, x, static_cast<int>(j));
    return sum;
}

HybridPath execute(const Pdmp& pdmp, int q0, std::span<const double> x0, double horizon,
                   RandomStream& rng, const ExecuteOptions& opts) {
    if (!(horizon > 0.0)) throw StructuralError("execute: horizon must be positive");
    if (x0.size() != pdmp.dim) throw StructuralError("execute: state dimension mismatch");

    HybridPath path;
    HybridState current{q0, std::vector<double>(x0.begin(), x0.end())};
    double t = 0.0;
    std::size_t jumps = 0;

    while (t < horizon) {
        const int q = current.mode;
        VectorField field = [&pdmp, q](double tt, std::span<const double> y,
                                       std::span<double> dy) {
            pdmp.field(q, tt, y, dy);
        };
        StatePredicate guard;
        const StatePredicate* guard_ptr = nullptr;
        if (pdmp.guard) {
            guard = [&pdmp, q](double, std::span<const double> y) {
                return pdmp.guard(q, y);
            };
            guard_ptr = &guard;
        }
        ScalarField lambda;
        const ScalarField* lambda_ptr = nullptr;
        double stop_level = std::numeric_limits<double>::infinity();
        if (pdmp.intensity) {
            lambda = [&pdmp, q](double, std::span<const double> y) {
                return pdmp.total_intensity(q, y);
            };
            lambda_ptr = &lambda;
            stop_level = rng.exponential();  // Exp(1) threshold; T via time rescaling
        }

        EventResult ev = flow_until_event(field, current.x, guard_ptr, lambda_ptr, stop_level,
                                          horizon - t, opts.flow, opts.keep_trajectories);

        PathSegment seg;
        seg.mode = q;
        seg.t_enter = t;
        seg.t_exit = t + ev.t;
        seg.x_enter = current.x;
        seg.x_exit = ev.state;
        seg.cause = ev.event == FlowEvent::guard ? ExitCause::guard
                    : ev.event == FlowEvent::accumulator ? ExitCause::jump
                                                         : ExitCause::horizon;
        path.segments.push_back(seg);
        if (opts.keep_trajectories) path.trajectories.push_back(std::move(ev.trajectory));

        t += ev.t;
        if (ev.event == FlowEvent::horizon) break;

        if (++jumps > opts.max_jumps)
            throw ZenoError("jump count exceeded max_jumps=" + std::to_string(opts.max_jumps) +
                            " at t=" + std::to_string(t));
        current = pdmp.reset(HybridState{q, std::move(seg.x_exit)}, seg.cause, rng);
        if (current.x.size() != pdmp.dim)
            throw StructuralError("reset kernel returned a state of wrong dimension");
    }
    return path;
}

double survival(const Pdmp& pdmp, int q, std::span<const double> x, double t,
                const FlowConfig& cfg) {
    if (t < 0.0) throw StructuralError("survival: t must be nonnegative");
    if (t == 0.0 && !pdmp.guard) return 1.0;

    VectorField field = [&pdmp, q](double tt, std::span<const double> y, std::span<double> dy) {
        pdmp.field(q, tt, y, dy);
    };
    StatePredicate guard;
    const StatePredicate* guard_ptr = nullptr;
    if (pdmp.guard) {
        guard = [&pdmp, q](double, std::span<const double> y) { return pdmp.guard(q, y); };
        guard_ptr = &guard;
    }
    ScalarField lambda;
    const ScalarField* lambda_ptr = nullptr;
    if (pdmp.intensity) {
        lambda = [&pdmp, q](double, std::span<const double> y) {
            return pdmp.total_intensity(q, y);
        };
        lambda_ptr = &lambda;
    }

    EventResult ev = flow_until_event(field, x, guard_ptr, lambda_ptr,
                                      std::numeric_limits<double>::infinity(), t, cfg, false);
    if (ev.event == FlowEvent::guard) return 0.0;  // t*(q,x,G) <= t
    return std::exp(-ev.accumulated);
}

}  // namespace protolang
