#ifndef PROTOLANG_CRN_HPP
#define PROTOLANG_CRN_HPP

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace protolang {

// Unit of concentration declared by a .crn file header. Everything is
// converted to mol/L at ingestion except `arbitrary`, which passes raw
// numbers through untouched (used by networks whose published constants
// only form a coherent system in unnamed units).
enum class ConcUnit { molar, milli_molar, micro_molar, nano_molar, arbitrary };

int conc_unit_exp10(ConcUnit u);  // mol/L = value * 10^exp; arbitrary -> 0
std::string_view conc_unit_name(ConcUnit u);

struct Species {
    std::string name;
    std::size_t index = 0;
};

// One reaction tau = (source, product, rate). Stoichiometry vectors always
// have length |species| of the owning network.
struct Reaction {
    std::vector<unsigned> source;
    std::vector<unsigned> product;
    double rate = 0.0;  // per second, at the network's concentration scale

    unsigned order() const;  // total source stoichiometry
};

struct Crn {
    std::vector<Species> species;
    std::vector<Reaction> reactions;
    ConcUnit declared_unit = ConcUnit::molar;

    std::size_t size() const { return species.size(); }
    std::optional<std::size_t> species_index(std::string_view name) const;

    // Throws StructuralError on dimension mismatches, duplicate species
    // names, or nonpositive rates.
    void validate() const;
};

// A CRN with an initial concentration vector.
struct Crs {
    Crn crn;
    std::vector<double> initial;
};

// Net change vector: product - source, componentwise.
std::vector<int> net_change(const Reaction& r);

// Mass-action propensity k * prod conc_S^(source_S). Temperature is part
// of the interface; rates are constants at their reference temperature, so
// it does not enter the value. Entries in (-1e-12, 0) are treated as zero;
// anything more negative throws NegativeConcentrationError.
double propensity(const Crn& crn, const Reaction& r, std::span<const double> conc,
                  double temperature_k);

// Drift of the rate equations: sum over reactions of net_change * propensity.
// Volume is threaded for interface fidelity; pure mass-action concentration
// dynamics do not depend on it.
std::vector<double> drift(const Crn& crn, std::span<const double> conc, double volume_l,
                          double temperature_k);

// Allocation-free variant for integrator inner loops.
void drift_into(const Crn& crn, std::span<const double> conc, double volume_l,
                double temperature_k, std::span<double> out);

// Right-hand-side variant for adaptive integration: negative excursions
// (stage evaluations probe slightly outside the orthant) are evaluated as
// zero concentration instead of raising.
void drift_into_clamped(const Crn& crn, std::span<const double> conc, double volume_l,
                        double temperature_k, std::span<double> out);

bool is_null_effect(const Reaction& r);  // net change identically zero

// Static warnings: null-effect reactions and autocatalytic superlinear
// source complexes (e.g. X + X -> X + X + X), which break the global
// Lipschitz condition the stochastic semantics assumes.
std::vector<std::string> lint_crn(const Crn& crn);

}  // namespace protolang

#endif
