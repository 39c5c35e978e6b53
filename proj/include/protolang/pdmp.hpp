#ifndef PROTOLANG_PDMP_HPP
#define PROTOLANG_PDMP_HPP

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protolang/integrator.hpp"
#include "protolang/rng.hpp"

namespace protolang {

struct HybridState {
    int mode = 0;
    std::vector<double> x;
};

enum class ExitCause { guard, jump, horizon };

// Piecewise deterministic Markov process (Q, d, G, F, Lambda, R). Modes
// are indices into mode_names. The intensity is given per target mode;
// total_intensity sums over targets. The reset kernel is an operational
// sampling procedure over hybrid states, applied at both guard exits and
// intensity-triggered jumps.
struct Pdmp {
    std::vector<std::string> mode_names;
    std::size_t dim = 0;
    std::function<void(int q, double t, std::span<const double> x, std::span<double> dx)> field;
    std::function<double(int q, std::span<const double> x, int q_to)> intensity;  // may be null
    std::function<bool(int q, std::span<const double> x)> guard;                  // may be null
    std::function<HybridState(const HybridState& exit_state, ExitCause cause,
                              RandomStream& rng)>
        reset;

    std::size_t num_modes() const { return mode_names.size(); }
    double total_intensity(int q, std::span<const double> x) const;
};

struct PathSegment {
    int mode = 0;
    double t_enter = 0.0;
    double t_exit = 0.0;
    std::vector<double> x_enter;
    std::vector<double> x_exit;
    ExitCause cause = ExitCause::horizon;
};

struct HybridPath {
    std::vector<PathSegment> segments;
    std::vector<Trajectory> trajectories;  // parallel to segments when kept

    const PathSegment& final_segment() const { return segments.back(); }
};

struct ExecuteOptions {
    std::size_t max_jumps = 1'000'000;
    bool keep_trajectories = false;
    FlowConfig flow;
};

// Executes the process from (q0, x0) until the horizon: in each mode the
// dwell T is sampled via exponential time-rescaling against the integrated
// intensity, cut off at the guard's exit time; the reset kernel produces
// the next hybrid state. Throws ZenoError past max_jumps.
HybridPath execute(const Pdmp& pdmp, int q0, std::span<const double> x0, double horizon,
                   RandomStream& rng, const ExecuteOptions& opts = {});

// Survival function f(q, t, x): exp(-integral of the total intensity along
// the flow) for t before the guard exit time, 0 afterwards.
double survival(const Pdmp& pdmp, int q, std::span<const double> x, double t,
                const FlowConfig& cfg = {});

}  // namespace protolang

#endif
