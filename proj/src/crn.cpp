#include "protolang/crn.hpp"

#include <cmath>
#include <set>
#include <string>

#include "protolang/errors.hpp"

namespace protolang {

namespace {
constexpr double kNegativeTolerance = 1e-12;

double clamped(double c, std::size_t index) {
    if (c >= 0.0) return c;
    if (c > -kNegativeTolerance) return 0.0;
    throw NegativeConcentrationError("concentration of species #" + std::to_string(index) +
                                     " is " + std::to_string(c) +
                                     " (below round-off tolerance -1e-12)");
}
}  // namespace

int conc_unit_exp10(ConcUnit u) {
    switch (u) {
        case ConcUnit::molar: return 0;
        case ConcUnit::milli_molar: return -3;
        case ConcUnit::micro_molar: return -6;
        case ConcUnit::nano_molar: return -9;
        case ConcUnit::arbitrary: return 0;
    }
    return 0;
}

std::string_view conc_unit_name(ConcUnit u) {
    switch (u) {
        case ConcUnit::molar: return "M";
        case ConcUnit::milli_molar: return "mM";
        case ConcUnit::micro_molar: return "uM";
        case ConcUnit::nano_molar: return "nM";
        case ConcUnit::arbitrary: return "au";
    }
    return "M";
}

unsigned Reaction::order() const {
    unsigned n = 0;
    for (unsigned s : source) n += s;
    return n;
}

std::optional<std::size_t> Crn::species_index(std::string_view name) const {
    for (const Species& s : species)
        if (s.name == name) return s.index;
    return std::nullopt;
}

void Crn::validate() const {
    std::set<std::string> names;
    for (std::size_t i = 0; i < species.size(); ++i) {
        if (species[i].index != i)
            throw StructuralError("species index out of order: " + species[i].name);
        if (!names.insert(species[i].name).second)
            throw StructuralError("duplicate species name: " + species[i].name);
    }
    for (const Reaction& r : reactions) {
        if (r.source.size() != species.size() || r.product.size() != species.size())
            throw StructuralError("reaction stoichiometry length does not match species count");
        if (!(r.rate > 0.0) || !std::isfinite(r.rate))
            throw StructuralError("reaction rate must be positive and finite");
    }
}

std::vector<int> net_change(const Reaction& r) {
    std::vector<int> v(r.source.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<int>(r.product[i]) - static_cast<int>(r.source[i]);
    return v;
}

bool is_null_effect(const Reaction& r) {
    for (std::size_t i = 0; i < r.source.size(); ++i)
        if (r.product[i] != r.source[i]) return false;
    return true;
}

double propensity(const Crn& crn, const Reaction& r, std::span<const double> conc,
                  double /*temperature_k*/) {
    if (conc.size() != crn.size() || r.source.size() != crn.size())
        throw StructuralError("propensity: dimension mismatch");
    double value = r.rate;
    for (std::size_t i = 0; i < conc.size(); ++i) {
        unsigned m = r.source[i];
        if (m == 0) continue;
        double c = clamped(conc[i], i);
        for (unsigned j = 0; j < m; ++j) value *= c;
    }
    return value;
}

void drift_into(const Crn& crn, std::span<const double> conc, double volume_l,
                double temperature_k, std::span<double> out) {
    (void)volume_l;
    if (conc.size() != crn.size() || out.size() != crn.size())
        throw StructuralError("drift: dimension mismatch");
    for (double& v : out) v = 0.0;
    for (const Reaction& r : crn.reactions) {
        double gamma = propensity(crn, r, conc, temperature_k);
        if (gamma == 0.0) continue;
        for (std::size_t i = 0; i < out.size(); ++i) {
            int nu = static_cast<int>(r.product[i]) - static_cast<int>(r.source[i]);
            if (nu != 0) out[i] += nu * gamma;
        }
    }
}

std::vector<double> drift(const Crn& crn, std::span<const double> conc, double volume_l,
                          double temperature_k) {
    std::vector<double> out(crn.size());
    drift_into(crn, conc, volume_l, temperature_k, out);
    return out;
}

void drift_into_clamped(const Crn& crn, std::span<const double> conc, double volume_l,
                        double temperature_k, std::span<double> out) {
    thread_local std::vector<double> scratch;
    scratch.assign(conc.begin(), conc.end());
    for (double& c : scratch)
        if (c < 0.0) c = 0.0;
    drift_into(crn, scratch, volume_l, temperature_k, out);
}

std::vector<std::string> lint_crn(const Crn& crn) {
    std::vector<std::string> warnings;
    for (std::size_t t = 0; t < crn.reactions.size(); ++t) {
        const Reaction& r = crn.reactions[t];
        if (is_null_effect(r))
            warnings.push_back("reaction #" + std::to_string(t) +
                               " has zero net change (dynamically inert)");
        for (std::size_t i = 0; i < r.source.size(); ++i) {
            if (r.source[i] >= 2 && r.product[i] > r.source[i]) {
                warnings.push_back(
                    "reaction #" + std::to_string(t) + " is autocatalytic in " +
                    crn.species[i].name +
                    " with superlinear kinetics; the drift is not globally Lipschitz "
                    "and solutions may blow up in finite time");
                break;
            }
        }
    }
    return warnings;
}

}  // namespace protolang
