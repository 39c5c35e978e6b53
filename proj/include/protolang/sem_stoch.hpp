#ifndef PROTOLANG_SEM_STOCH_HPP
#define PROTOLANG_SEM_STOCH_HPP

#include <optional>
#include <string>

#include "protolang/pdmp.hpp"
#include "protolang/rng.hpp"
#include "protolang/sem_det.hpp"

namespace protolang {

// Noise models of the stochastic semantics. Defaults are all degenerate:
// with this configuration eval_stoch is bit-identical to eval.
struct DispenseNoise {
    enum Kind { deterministic, truncated_gaussian } kind = deterministic;
    // Relative sigma on the fraction, or an absolute volume sigma (ISO 8655
    // style: 0.3 uL per 1 mL operation => sigma_abs_volume_l = 3e-7, giving
    // sigma = sigma_abs_volume_l / V).
    double sigma_rel = 0.0;
    std::optional<double> sigma_abs_volume_l;
    double lo = 1e-6;  // truncation bounds, strictly inside (0,1)
    double hi = 1.0 - 1e-6;
};

struct EquilibrateNoise {
    enum Kind { deterministic, exponential } kind = deterministic;
};

struct RateNoise {
    // sub_poisson: k ~ Normal(k, variance k/2), resampled to be positive.
    // gaussian: per-reaction sigmas.
    enum Kind { none, sub_poisson, gaussian } kind = none;
    std::vector<double> sigma;  // gaussian kind: one entry per reaction
};

struct ObserveNoise {
    enum Kind { none, additive_gaussian } kind = none;
    double sigma = 0.0;
};

struct NoiseConfig {
    DispenseNoise dispense;
    EquilibrateNoise equilibrate;
    RateNoise rates;
    ObserveNoise observe;

    bool is_degenerate() const;
    void validate() const;  // throws StructuralError

    static NoiseConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
    static NoiseConfig load_file(const std::string& path);
};

// Draws p' from the truncated Gaussian centered at p (Dirac at p when the
// configured sigma is zero). Rejection sampling capped at 10^4 attempts.
double sample_dispense_fraction(const NoiseConfig& noise, double volume_l, double p,
                                RandomStream& rng);

// I = -t ln(u): exponential with mean t. Throws for t <= 0.
double sample_equilibrate_time(double t_s, RandomStream& rng);
double exponential_from_uniform(double t_s, double u);

// One extrinsic draw of all rate constants (fresh network per execution).
Crn perturb_rates(const Crn& crn, const NoiseConfig& noise, RandomStream& rng);

// Stochastic semantics. Randomness is keyed per AST node: operation at
// node id k draws from run_stream.child(1 + k); rate perturbation uses
// run_stream.child(0). Node ids are assigned on demand if missing.
EvalResult eval_stoch(const ProtocolPtr& p, const Crn& crn, const Env& env,
                      const FlowConfig& cfg, const NoiseConfig& noise,
                      const RandomStream& run_stream, const EvalHooks& hooks = {});

// Protocol compiled to an explicit PDMP. Modes are the protocol's discrete
// boundaries in evaluation order: one zero-dwell mode per dispense, one
// dwell mode per equilibrate, plus a terminal mode. Instantaneous
// operations (initial conditions, mixes, disposals, observations) are
// folded into the initial state and the reset maps. The continuous state
// holds one (conc, volume, temperature) block per live sample slot plus a
// per-mode clock as the last coordinate.
struct CompiledProtocol {
    Pdmp pdmp;
    int initial_mode = 0;
    std::vector<double> initial_state;
    int terminal_mode = 0;
    std::size_t species_count = 0;
    std::size_t block_count = 0;
    int final_block = 0;  // slot holding the protocol's value in the terminal mode

    std::size_t block_offset(int block) const {
        return static_cast<std::size_t>(block) * (species_count + 2);
    }
    // Requires the path to have reached the terminal mode.
    Sample decode_final_sample(const HybridPath& path) const;
};

// Rejects rate noise (extrinsic rate draws are not representable in a
// single compiled process; perturb the network before compiling instead).
CompiledProtocol compile_to_pdmp(const ProtocolPtr& p, const Crn& crn,
                                 const NoiseConfig& noise);

}  // namespace protolang

#endif
