#ifndef PROTOLANG_SMC_HPP
#define PROTOLANG_SMC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "protolang/parser.hpp"
#include "protolang/sem_stoch.hpp"

namespace protolang {

// Membership predicate over a protocol outcome: a species concentration
// inside [lo, hi], read from the final sample or from the observation with
// a given identifier (latest one when identifiers repeat).
struct Predicate {
    std::string species;
    double lo = 0.0;
    double hi = 0.0;
    enum At { final_sample, observation } at = final_sample;
    unsigned idn = 0;

    bool evaluate(const EvalResult& r, const Crn& crn) const;

    // "Output in [3.0e-4,3.5e-4] at final"  |  "X in [0,1] at obs:3"
    static Predicate parse(const std::string& text);
    std::string to_text() const;
};

struct Estimate {
    double p_hat = 0.0;
    std::size_t n = 0;          // runs contributing to p_hat
    std::size_t successes = 0;
    double ci_lo = 0.0;         // Clopper-Pearson exact interval at 1-delta
    double ci_hi = 1.0;
    double delta = 0.0;
    std::uint64_t seed = 0;     // stream identity of this estimate
    std::size_t failures = 0;   // runs skipped under ErrorPolicy::skip
};

enum class ErrorPolicy { fail_fast, skip };

// Chernoff-Hoeffding planner: smallest n with Prob(|p_hat - p| > eps) <= delta.
std::size_t required_samples(double epsilon, double delta);

// Exact binomial (Clopper-Pearson) interval at confidence 1-delta.
std::pair<double, double> clopper_pearson(std::size_t successes, std::size_t n, double delta);

// Runs n independent stochastic executions on child streams 0..n-1 of
// `stream` and estimates Prob(pred). Deterministic given the stream seed,
// independent of `threads` (0 = hardware default).
Estimate estimate(const ProtocolPtr& p, const Crn& crn, const Predicate& pred, std::size_t n,
                  double delta, const NoiseConfig& noise, const FlowConfig& flow,
                  const RandomStream& stream, ErrorPolicy policy = ErrorPolicy::fail_fast,
                  unsigned threads = 0);

Estimate estimate(const ProtocolPtr& p, const Crn& crn, const Predicate& pred, std::size_t n,
                  double delta, const NoiseConfig& noise, const FlowConfig& flow,
                  std::uint64_t seed, ErrorPolicy policy = ErrorPolicy::fail_fast,
                  unsigned threads = 0);

struct SweepAxis {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t steps = 1;

    std::vector<double> values() const;
};

struct SweepCell {
    std::vector<double> params;  // one value per axis
    Estimate est;
    bool failed = false;
    std::string error;
};

struct SweepGrid {
    std::vector<SweepAxis> axes;
    std::vector<SweepCell> cells;  // row-major, last axis fastest
    std::size_t runs_per_cell = 0;
    double delta = 0.0;
    std::uint64_t seed = 0;

    // Cells statistically indistinguishable from the best: every cell whose
    // interval overlaps the interval of the highest point estimate. Exact
    // ties are always included.
    std::vector<std::size_t> argmax_set() const;

    std::string to_csv() const;
    std::string to_json_text() const;
};

// Instantiates the template per cell (cell c uses child stream c of the
// root) and estimates the predicate on each.
SweepGrid sweep(const ProtocolTemplate& tmpl, const Crn& crn,
                const std::vector<SweepAxis>& axes, const Predicate& pred, std::size_t n,
                double delta, const NoiseConfig& noise, const FlowConfig& flow,
                std::uint64_t seed, ErrorPolicy policy = ErrorPolicy::fail_fast,
                unsigned threads = 0);

}  // namespace protolang

#endif
