#include "protolang/smc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "protolang/errors.hpp"
#include "protolang/numfmt.hpp"

namespace protolang {

namespace {

// Regularized incomplete beta function I_x(a,b), continued-fraction form.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double beta_inc_reg(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// Quantile of Beta(a,b) by bisection; monotone and bounded, so 90
// halvings give full double precision.
double beta_inv(double a, double b, double p) {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 90; ++i) {
        double mid = 0.5 * (lo + hi);
        if (beta_inc_reg(a, b, mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

unsigned worker_count(unsigned requested, std::size_t jobs) {
    unsigned hw = std::thread::hardware_concurrency();
    unsigned t = requested ? requested : (hw ? hw : 1);
    return static_cast<unsigned>(std::min<std::size_t>(t, jobs ? jobs : 1));
}

}  // namespace

bool Predicate::evaluate(const EvalResult& r, const Crn& crn) const {
    auto idx = crn.species_index(species);
    if (!idx) throw StructuralError("predicate names unknown species '" + species + "'");
    double value;
    if (at == final_sample) {
        value = r.sample.conc.at(*idx);
    } else {
        const Observation* found = nullptr;
        for (const Observation& o : r.observations)
            if (o.idn == idn) found = &o;  // latest wins on duplicate identifiers
        if (!found)
            throw EvalError("no observation with identifier " + std::to_string(idn));
        value = found->conc.at(*idx);
    }
    return value >= lo && value <= hi;
}

Predicate Predicate::parse(const std::string& text) {
    std::istringstream in(text);
    Predicate p;
    std::string word;
    if (!(in >> p.species)) throw StructuralError("empty predicate");
    if (!(in >> word) || word != "in")
        throw StructuralError("predicate: expected 'in' after the species name");
    std::string rest;
    std::getline(in, rest);
    auto lb = rest.find('[');
    auto comma = rest.find(',', lb);
    auto rb = rest.find(']', comma);
    if (lb == std::string::npos || comma == std::string::npos || rb == std::string::npos)
        throw StructuralError("predicate: expected an interval [lo,hi]");
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (!parse_double(trim(rest.substr(lb + 1, comma - lb - 1)), p.lo) ||
        !parse_double(trim(rest.substr(comma + 1, rb - comma - 1)), p.hi))
        throw StructuralError("predicate: malformed interval bounds");
    if (p.lo > p.hi) throw StructuralError("predicate: interval requires lo <= hi");
    std::istringstream tail(rest.substr(rb + 1));
    if (!(tail >> word) || word != "at")
        throw StructuralError("predicate: expected 'at final' or 'at obs:<idn>'");
    if (!(tail >> word)) throw StructuralError("predicate: missing evaluation point");
    if (word == "final") {
        p.at = final_sample;
    } else if (word.rfind("obs:", 0) == 0) {
        p.at = observation;
        p.idn = static_cast<unsigned>(std::stoul(word.substr(4)));
    } else {
        throw StructuralError("predicate: unknown evaluation point '" + word + "'");
    }
    return p;
}

std::string Predicate::to_text() const {
    std::string s = species + " in [" + format_double(lo) + "," + format_double(hi) + "] at ";
    if (at == final_sample) return s + "final";
    return s + "obs:" + std::to_string(idn);
}

std::size_t required_samples(double epsilon, double delta) {
    if (!(epsilon > 0.0 && epsilon < 1.0 && delta > 0.0 && delta < 1.0))
        throw StructuralError("required_samples: epsilon and delta must lie in (0,1)");
    double n = std::log(2.0 / delta) / (2.0 * epsilon * epsilon);
    return static_cast<std::size_t>(std::max(1.0, std::ceil(n)));
}

std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double delta) {
    if (n == 0 || k > n) throw StructuralError("clopper_pearson: need 0 <= k <= n, n > 0");
    double a = delta / 2.0;
    double lo = k == 0 ? 0.0 : beta_inv(static_cast<double>(k), static_cast<double>(n - k + 1), a);
    double hi = k == n ? 1.0
                       : beta_inv(static_cast<double>(k + 1), static_cast<double>(n - k),
                                  1.0 - a);
    return {lo, hi};
}

Estimate estimate(const ProtocolPtr& p, const Crn& crn, const Predicate& pred, std::size_t n,
                  double delta, const NoiseConfig& noise, const FlowConfig& flow,
                  const RandomStream& stream, ErrorPolicy policy, unsigned threads) {
    if (n < 1) throw StructuralError("estimate: need n >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw StructuralError("estimate: delta must be in (0,1)");

    ProtocolPtr prepared = p->id == kNoNodeId ? assign_ids(p) : p;

    // 0 = unsatisfied, 1 = satisfied, 2 = failed run
    std::vector<std::uint8_t> outcome(n, 0);
    std::vector<std::string> messages(n);

    unsigned workers = worker_count(threads, n);
    auto body = [&](std::size_t run) {
        try {
            RandomStream run_stream = stream.child(run);
            EvalResult r = eval_stoch(prepared, crn, {}, flow, noise, run_stream);
            outcome[run] = pred.evaluate(r, crn) ? 1 : 0;
        } catch (const std::exception& e) {
            outcome[run] = 2;
            messages[run] = e.what();
        }
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t i = w; i < n; i += workers) body(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    std::size_t successes = 0, failures = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (outcome[i] == 2) {
            if (policy == ErrorPolicy::fail_fast)
                throw EvalError("run " + std::to_string(i) + " failed: " + messages[i]);
            ++failures;
        } else if (outcome[i] == 1) {
            ++successes;
        }
    }
    std::size_t effective = n - failures;
    if (effective == 0) throw EvalError("estimate: every run failed");

    Estimate est;
    est.n = effective;
    est.successes = successes;
    est.p_hat = static_cast<double>(successes) / static_cast<double>(effective);
    auto [lo, hi] = clopper_pearson(successes, effective, delta);
    est.ci_lo = lo;
    est.ci_hi = hi;
    est.delta = delta;
    est.seed = stream.seed();
    est.failures = failures;
    return est;
}

Estimate estimate(const ProtocolPtr& p, const Crn& crn, const Predicate& pred, std::size_t n,
                  double delta, const NoiseConfig& noise, const FlowConfig& flow,
                  std::uint64_t seed, ErrorPolicy policy, unsigned threads) {
    return estimate(p, crn, pred, n, delta, noise, flow, RandomStream(seed), policy, threads);
}

std::vector<double> SweepAxis::values() const {
    if (steps == 0) throw StructuralError("sweep axis needs at least one step");
    std::vector<double> v;
    v.reserve(steps);
    if (steps == 1) {
        v.push_back(lo);
        return v;
    }
    for (std::size_t i = 0; i < steps; ++i)
        v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1));
    return v;
}

std::vector<std::size_t> SweepGrid::argmax_set() const {
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!cells[i].failed && cells[i].est.p_hat > best) {
            best = cells[i].est.p_hat;
            best_idx = i;
        }
    }
    std::vector<std::size_t> out;
    if (best < 0.0) return out;
    double cutoff = cells[best_idx].est.ci_lo;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (!cells[i].failed && cells[i].est.ci_hi >= cutoff) out.push_back(i);
    return out;
}

std::string SweepGrid::to_csv() const {
    std::ostringstream os;
    os << "# protolang sweep grid, schema_version=1\n";
    for (const SweepAxis& a : axes) os << a.name << ",";
    os << "p_hat,ci_lo,ci_hi,n\n";
    for (const SweepCell& c : cells) {
        for (double v : c.params) os << format_double(v) << ",";
        if (c.failed) {
            os << "nan,nan,nan," << runs_per_cell << "\n";
        } else {
            os << format_double(c.est.p_hat) << "," << format_double(c.est.ci_lo) << ","
               << format_double(c.est.ci_hi) << "," << c.est.n << "\n";
        }
    }
    return os.str();
}

std::string SweepGrid::to_json_text() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["delta"] = delta;
    j["runs_per_cell"] = runs_per_cell;
    j["seed"] = seed;
    for (const SweepAxis& a : axes) {
        nlohmann::json ja;
        ja["name"] = a.name;
        ja["values"] = a.values();
        j["axes"].push_back(ja);
    }
    j["cells"] = nlohmann::json::array();
    for (const SweepCell& c : cells) {
        nlohmann::json jc;
        jc["params"] = c.params;
        if (c.failed) {
            jc["error"] = c.error;
        } else {
            jc["p_hat"] = c.est.p_hat;
            jc["ci_lo"] = c.est.ci_lo;
            jc["ci_hi"] = c.est.ci_hi;
            jc["successes"] = c.est.successes;
            jc["n"] = c.est.n;
            jc["failures"] = c.est.failures;
        }
        j["cells"].push_back(jc);
    }
    j["argmax_cells"] = argmax_set();
    return j.dump(2) + "\n";
}

SweepGrid sweep(const ProtocolTemplate& tmpl, const Crn& crn,
                const std::vector<SweepAxis>& axes, const Predicate& pred, std::size_t n,
                double delta, const NoiseConfig& noise, const FlowConfig& flow,
                std::uint64_t seed, ErrorPolicy policy, unsigned threads) {
    if (axes.empty()) throw StructuralError("sweep: need at least one axis");
    for (const ParsedHole& h : tmpl.holes) {
        bool bound = std::any_of(axes.begin(), axes.end(),
                                 [&](const SweepAxis& a) { return a.name == h.name; });
        if (!bound) throw StructuralError("unbound template parameter '" + h.name + "'");
    }
    for (const SweepAxis& a : axes) {
        bool used = std::any_of(tmpl.holes.begin(), tmpl.holes.end(),
                                [&](const ParsedHole& h) { return h.name == a.name; });
        if (!used)
            throw StructuralError("sweep axis '" + a.name +
                                  "' does not appear in the template");
    }

    std::vector<std::vector<double>> values;
    values.reserve(axes.size());
    std::size_t total = 1;
    for (const SweepAxis& a : axes) {
        values.push_back(a.values());
        total *= values.back().size();
    }

    SweepGrid grid;
    grid.axes = axes;
    grid.runs_per_cell = n;
    grid.delta = delta;
    grid.seed = seed;
    grid.cells.resize(total);

    RandomStream root(seed);
    for (std::size_t c = 0; c < total; ++c) {
        SweepCell& cell = grid.cells[c];
        std::map<std::string, double> assignment;
        std::size_t rem = c;
        for (std::size_t ax = axes.size(); ax-- > 0;) {
            std::size_t k = rem % values[ax].size();
            rem /= values[ax].size();
            assignment[axes[ax].name] = values[ax][k];
        }
        cell.params.reserve(axes.size());
        for (std::size_t ax = 0; ax < axes.size(); ++ax)
            cell.params.push_back(assignment[axes[ax].name]);
        try {
            ProtocolPtr proto = instantiate(tmpl, crn, assignment);
            proto = assign_ids(desugar(proto));
            auto violations = check_linear(proto);
            if (!violations.empty())
                throw StructuralError("instantiated protocol is not linear/closed");
            cell.est = estimate(proto, crn, pred, n, delta, noise, flow, root.child(c),
                                policy, threads);
        } catch (const std::exception& e) {
            if (policy == ErrorPolicy::fail_fast) throw;
            cell.failed = true;
            cell.error = e.what();
        }
    }
    return grid;
}

}  // namespace protolang
