#ifndef PROTOLANG_INTEGRATOR_HPP
#define PROTOLANG_INTEGRATOR_HPP

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace protolang {

struct FlowConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
    double blowup_threshold = 1e12;
    // Horizon for event searches (exit_time / accumulator). Must be finite
    // for a NoExit/NoHit verdict to be reachable.
    double horizon = std::numeric_limits<double>::infinity();
    // Project entries in (-1e-12, 0) to 0 after each accepted step; entries
    // below the tolerance raise NegativeConcentrationError. Off by default;
    // chemistry evaluators switch it on.
    bool project_nonnegative = false;
};

// dy/dt = f(t, y). The callee writes into dydt (same length as y).
using VectorField = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;
// Boolean guard over the state.
using StatePredicate = std::function<bool(double t, std::span<const double> y)>;
// Nonnegative scalar field (jump intensity along a trajectory).
using ScalarField = std::function<double(double t, std::span<const double> y)>;

// One accepted Dormand-Prince step with its 4th-order dense-output
// coefficients (rcont1..rcont5 in Hairer's notation).
struct DenseStep {
    double t0 = 0.0;
    double h = 0.0;
    std::array<std::vector<double>, 5> rcont;
    void eval(double t, std::span<double> out) const;
};

class Trajectory {
  public:
    Trajectory() = default;
    Trajectory(double t0, std::vector<double> y0);

    double start_time() const { return t_start_; }
    double end_time() const { return t_end_; }
    std::span<const double> initial_state() const { return y_start_; }
    std::span<const double> final_state() const { return y_end_; }
    const std::vector<DenseStep>& steps() const { return steps_; }

    // Dense query for any t in [start_time, end_time].
    std::vector<double> at(double t) const;
    void at_into(double t, std::span<double> out) const;

    void append(DenseStep step, std::vector<double> y_end, double t_end);

  private:
    double t_start_ = 0.0;
    double t_end_ = 0.0;
    std::vector<double> y_start_;
    std::vector<double> y_end_;
    std::vector<DenseStep> steps_;
};

// Integrates y' = f over [0, duration] from x0. Throws IllPosedError on
// state blowup or step-size underflow.
Trajectory integrate(const VectorField& f, std::span<const double> x0, double duration,
                     const FlowConfig& cfg);

struct ExitResult {
    bool exited = false;  // false: no guard crossing within cfg.horizon
    double t = 0.0;
    std::vector<double> state;
};

// First time the guard becomes true along the flow (Eq. exit-time
// semantics: t* = inf{t : guard}). Guard true at x0 yields t* = 0.
ExitResult exit_time(const VectorField& f, std::span<const double> x0,
                     const StatePredicate& guard, const FlowConfig& cfg);

struct HitResult {
    bool hit = false;  // false: accumulator never reached stop_level within horizon
    double t = 0.0;
    std::vector<double> state;
};

// Augments the state with a = integral of aux along the flow and reports
// the first time a >= stop_level. aux must be pointwise nonnegative.
HitResult integrate_with_accumulator(const VectorField& f, std::span<const double> x0,
                                     const ScalarField& aux, double stop_level,
                                     const FlowConfig& cfg);

// Shared event-detection core used by the PDMP engine: flows until the
// guard fires, the aux accumulator reaches stop_level, or duration_cap is
// reached, whichever happens first.
enum class FlowEvent { guard, accumulator, horizon };

struct EventResult {
    FlowEvent event = FlowEvent::horizon;
    double t = 0.0;
    std::vector<double> state;
    double accumulated = 0.0;
    Trajectory trajectory;  // over the original (unaugmented) coordinates
};

EventResult flow_until_event(const VectorField& f, std::span<const double> x0,
                             const StatePredicate* guard, const ScalarField* aux,
                             double stop_level, double duration_cap, const FlowConfig& cfg,
                             bool keep_trajectory);

}  // namespace protolang

#endif
