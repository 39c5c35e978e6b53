#ifndef PROTOLANG_SEM_DET_HPP
#define PROTOLANG_SEM_DET_HPP

#include <functional>
#include <map>
#include <utility>
#include <string>
#include <vector>

#include "protolang/ast.hpp"
#include "protolang/crn.hpp"
#include "protolang/integrator.hpp"

namespace protolang {

// A sample (x0, V, T): concentrations in mol/L, volume in liters,
// temperature in Kelvin. The Dispose result is exactly (0-vector, 0, 0).
struct Sample {
    std::vector<double> conc;
    double volume_l = 0.0;
    double temperature_k = 0.0;
};

struct Observation {
    std::vector<double> conc;
    unsigned idn = 0;
    double time_s = 0.0;
};

// The meaning of a protocol: final sample, ordered observation list, and
// elapsed time (max over root-to-leaf paths of summed equilibrations).
struct EvalResult {
    Sample sample;
    std::vector<Observation> observations;
    double elapsed_s = 0.0;
};

using Env = std::map<std::string, EvalResult>;

struct EquilibrateTrace {
    NodeId node = kNoNodeId;
    double start_elapsed_s = 0.0;
    double duration_s = 0.0;
    Trajectory trajectory;
};

// Per-operation record for conservation/bookkeeping oracles.
struct StepRecord {
    enum Op { initial, mix, dispense, equilibrate, dispose } op;
    std::vector<Sample> inputs;
    std::vector<Sample> outputs;
};

struct EvalHooks {
    std::vector<std::string>* warnings = nullptr;
    std::function<void(const EquilibrateTrace&)> on_equilibrate;
    std::function<void(const StepRecord&)> on_step;
};

// Customization point for the stochastic semantics: the deterministic
// evaluator runs with the identity implementations below, so a degenerate
// noise configuration takes bit-identical floating-point paths.
class EvalEffects {
  public:
    virtual ~EvalEffects() = default;
    virtual const Crn& active_crn(const Crn& base) { return base; }
    virtual double dispense_fraction(const Protocol&, double /*volume_l*/, double p) {
        return p;
    }
    virtual double equilibrate_duration(const Protocol&, double t_s) { return t_s; }
    virtual void observe_adjust(const Protocol&, std::vector<double>& /*conc*/) {}
};

// Deterministic semantics: structural recursion over a desugared protocol.
// Throws EvalError (unbound variable, sugar encountered), IllPosedError
// (from the integrator), and the sampling errors of the active effects.
EvalResult eval(const ProtocolPtr& p, const Crn& crn, const Env& env, const FlowConfig& cfg,
                const EvalHooks& hooks = {});

EvalResult eval_with_effects(const ProtocolPtr& p, const Crn& crn, const Env& env,
                             const FlowConfig& cfg, const EvalHooks& hooks,
                             EvalEffects& effects);

// Splits V into (V*p', the rest) such that the two parts sum back to V
// bitwise; shared by the evaluators and the compiled process resets.
std::pair<double, double> split_volume(double volume, double p);

// The observation-free projection: just the sample.
Sample eval_projected(const ProtocolPtr& p, const Crn& crn, const Env& env,
                      const FlowConfig& cfg);

}  // namespace protolang

#endif
