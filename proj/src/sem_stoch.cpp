#include "protolang/sem_stoch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "protolang/errors.hpp"

namespace protolang {

namespace {
constexpr int kRejectionCap = 10'000;
}

bool NoiseConfig::is_degenerate() const {
    bool dispense_off = dispense.kind == DispenseNoise::deterministic ||
                        (dispense.sigma_rel == 0.0 && !dispense.sigma_abs_volume_l);
    return dispense_off && equilibrate.kind == EquilibrateNoise::deterministic &&
           rates.kind == RateNoise::none && observe.kind == ObserveNoise::none;
}

void NoiseConfig::validate() const {
    if (!(0.0 < dispense.lo && dispense.lo < dispense.hi && dispense.hi < 1.0))
        throw StructuralError("dispense truncation bounds must satisfy 0 < lo < hi < 1");
    if (dispense.sigma_rel < 0.0)
        throw StructuralError("dispense sigma must be nonnegative");
    if (dispense.sigma_abs_volume_l && *dispense.sigma_abs_volume_l < 0.0)
        throw StructuralError("dispense volume sigma must be nonnegative");
    if (observe.sigma < 0.0) throw StructuralError("observe sigma must be nonnegative");
    for (double s : rates.sigma)
        if (s < 0.0) throw StructuralError("rate sigma must be nonnegative");
}

NoiseConfig NoiseConfig::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    NoiseConfig cfg;
    if (j.contains("dispense")) {
        const auto& d = j.at("dispense");
        std::string kind = d.value("kind", "deterministic");
        if (kind == "truncated_gaussian") {
            cfg.dispense.kind = DispenseNoise::truncated_gaussian;
            if (d.contains("sigma_rel")) cfg.dispense.sigma_rel = d.at("sigma_rel");
            if (d.contains("sigma_abs_volume_l"))
                cfg.dispense.sigma_abs_volume_l = double(d.at("sigma_abs_volume_l"));
            if (d.contains("bounds")) {
                cfg.dispense.lo = d.at("bounds").at(0);
                cfg.dispense.hi = d.at("bounds").at(1);
            }
        } else if (kind != "deterministic") {
            throw StructuralError("unknown dispense noise kind '" + kind + "'");
        }
    }
    if (j.contains("equilibrate")) {
        std::string kind = j.at("equilibrate").value("kind", "deterministic");
        if (kind == "exponential")
            cfg.equilibrate.kind = EquilibrateNoise::exponential;
        else if (kind != "deterministic")
            throw StructuralError("unknown equilibrate noise kind '" + kind + "'");
    }
    if (j.contains("rates")) {
        std::string kind = j.at("rates").value("kind", "none");
        if (kind == "sub_poisson") {
            cfg.rates.kind = RateNoise::sub_poisson;
        } else if (kind == "gaussian") {
            cfg.rates.kind = RateNoise::gaussian;
            cfg.rates.sigma = j.at("rates").at("sigma").get<std::vector<double>>();
        } else if (kind != "none") {
            throw StructuralError("unknown rate noise kind '" + kind + "'");
        }
    }
    if (j.contains("observe")) {
        std::string kind = j.at("observe").value("kind", "none");
        if (kind == "additive_gaussian") {
            cfg.observe.kind = ObserveNoise::additive_gaussian;
            cfg.observe.sigma = j.at("observe").at("sigma");
        } else if (kind != "none") {
            throw StructuralError("unknown observe noise kind '" + kind + "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::string NoiseConfig::to_json_text() const {
    nlohmann::json j;
    if (dispense.kind == DispenseNoise::truncated_gaussian) {
        j["dispense"]["kind"] = "truncated_gaussian";
        if (dispense.sigma_abs_volume_l)
            j["dispense"]["sigma_abs_volume_l"] = *dispense.sigma_abs_volume_l;
        else
            j["dispense"]["sigma_rel"] = dispense.sigma_rel;
        j["dispense"]["bounds"] = {dispense.lo, dispense.hi};
    } else {
        j["dispense"]["kind"] = "deterministic";
    }
    j["equilibrate"]["kind"] =
        equilibrate.kind == EquilibrateNoise::exponential ? "exponential" : "deterministic";
    switch (rates.kind) {
        case RateNoise::none: j["rates"]["kind"] = "none"; break;
        case RateNoise::sub_poisson: j["rates"]["kind"] = "sub_poisson"; break;
        case RateNoise::gaussian:
            j["rates"]["kind"] = "gaussian";
            j["rates"]["sigma"] = rates.sigma;
            break;
    }
    if (observe.kind == ObserveNoise::additive_gaussian) {
        j["observe"]["kind"] = "additive_gaussian";
        j["observe"]["sigma"] = observe.sigma;
    } else {
        j["observe"]["kind"] = "none";
    }
    return j.dump(2) + "\n";
}

NoiseConfig NoiseConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open noise config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

double sample_dispense_fraction(const NoiseConfig& noise, double volume_l, double p,
                                RandomStream& rng) {
    if (!(p > 0.0 && p < 1.0))
        throw StructuralError("dispense fraction must lie strictly inside (0,1)");
    const DispenseNoise& d = noise.dispense;
    if (d.kind == DispenseNoise::deterministic) return p;
    double sigma;
    if (d.sigma_abs_volume_l) {
        if (!(volume_l > 0.0))
            throw StructuralError("absolute dispense sigma requires a positive volume");
        sigma = *d.sigma_abs_volume_l / volume_l;
    } else {
        sigma = d.sigma_rel;
    }
    if (sigma == 0.0) return p;  // Dirac degenerate mode
    for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
        double g = p + sigma * rng.normal();
        if (g > d.lo && g < d.hi) return g;
    }
    throw TruncationError("truncated Gaussian rejection failed " +
                          std::to_string(kRejectionCap) + " times (p=" + std::to_string(p) +
                          " outside bounds?)");
}

double exponential_from_uniform(double t_s, double u) {
    if (!(t_s > 0.0))
        throw NonpositiveEquilibrateError(
            "exponential equilibrate time requires a positive nominal duration");
    return -t_s * std::log(u);
}

double sample_equilibrate_time(double t_s, RandomStream& rng) {
    if (!(t_s > 0.0))
        throw NonpositiveEquilibrateError(
            "exponential equilibrate time requires a positive nominal duration");
    return exponential_from_uniform(t_s, rng.uniform_open01());
}

Crn perturb_rates(const Crn& crn, const NoiseConfig& noise, RandomStream& rng) {
    if (noise.rates.kind == RateNoise::none) return crn;
    if (noise.rates.kind == RateNoise::gaussian &&
        noise.rates.sigma.size() != crn.reactions.size())
        throw StructuralError("gaussian rate noise needs one sigma per reaction");
    Crn out = crn;
    for (std::size_t i = 0; i < out.reactions.size(); ++i) {
        double k = out.reactions[i].rate;
        double sigma = noise.rates.kind == RateNoise::sub_poisson ? std::sqrt(k / 2.0)
                                                                  : noise.rates.sigma[i];
        if (sigma == 0.0) continue;
        bool accepted = false;
        for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
            double draw = k + sigma * rng.normal();
            if (draw > 0.0) {
                out.reactions[i].rate = draw;
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw TruncationError("positive-rate rejection failed for reaction #" +
                                  std::to_string(i));
    }
    return out;
}

namespace {

class StochEffects final : public EvalEffects {
  public:
    StochEffects(const Crn& base, const NoiseConfig& noise, const RandomStream& run)
        : noise_(noise), run_(run) {
        if (noise.rates.kind != RateNoise::none) {
            RandomStream rates_stream = run_.child(0);
            perturbed_ = perturb_rates(base, noise, rates_stream);
        }
    }

    const Crn& active_crn(const Crn& base) override {
        return perturbed_ ? *perturbed_ : base;
    }

    double dispense_fraction(const Protocol& node, double volume_l, double p) override {
        RandomStream s = stream_for(node);
        return sample_dispense_fraction(noise_, volume_l, p, s);
    }

    double equilibrate_duration(const Protocol& node, double t_s) override {
        if (noise_.equilibrate.kind == EquilibrateNoise::deterministic) return t_s;
        RandomStream s = stream_for(node);
        return sample_equilibrate_time(t_s, s);
    }

    void observe_adjust(const Protocol& node, std::vector<double>& conc) override {
        if (noise_.observe.kind == ObserveNoise::none || noise_.observe.sigma == 0.0) return;
        RandomStream s = stream_for(node);
        for (double& c : conc) c += noise_.observe.sigma * s.normal();
    }

  private:
    RandomStream stream_for(const Protocol& node) const {
        if (node.id == kNoNodeId)
            throw EvalError("stochastic evaluation requires node ids (assign_ids)");
        return run_.child(1 + static_cast<std::uint64_t>(node.id));
    }

    const NoiseConfig& noise_;
    RandomStream run_;
    std::optional<Crn> perturbed_;
};

}  // namespace

EvalResult eval_stoch(const ProtocolPtr& p, const Crn& crn, const Env& env,
                      const FlowConfig& cfg, const NoiseConfig& noise,
                      const RandomStream& run_stream, const EvalHooks& hooks) {
    noise.validate();
    ProtocolPtr prepared = p->id == kNoNodeId ? assign_ids(p) : p;
    StochEffects effects(crn, noise, run_stream);
    return eval_with_effects(prepared, crn, env, cfg, hooks, effects);
}

// ---------------------------------------------------------------------------
// Compilation to an explicit PDMP.

namespace {

struct OpInit {
    int block;
    std::vector<double> conc;
    double vol, temp;
};
struct OpMix {
    int a, b, dst;  // dst aliases a
};
struct OpDispose {
    int block;
};
struct OpObserve {
    int block;
    unsigned idn;
};
using MachineOp = std::variant<OpInit, OpMix, OpDispose, OpObserve>;

struct Boundary {
    enum Kind { dispense, equilibrate_dwell } kind;
    // dispense: src keeps V*p', rest gets V*(1-p')
    int src_block = 0;
    int rest_block = 0;
    double fraction = 0.0;
    // equilibrate
    int eq_block = 0;
    double nominal_s = 0.0;
    std::string label;
};

struct Segment {
    std::vector<MachineOp> ops;  // applied before entering the next mode
};

struct CompileState {
    const Crn& crn;
    std::map<std::string, int> env;
    std::vector<bool> in_use;
    std::vector<Segment> segments{1};
    std::vector<Boundary> boundaries;

    int alloc() {
        for (std::size_t i = 0; i < in_use.size(); ++i) {
            if (!in_use[i]) {
                in_use[i] = true;
                return static_cast<int>(i);
            }
        }
        in_use.push_back(true);
        return static_cast<int>(in_use.size()) - 1;
    }
    void release(int b) { in_use[b] = false; }

    void push_op(MachineOp op) { segments.back().ops.push_back(std::move(op)); }

    void push_boundary(Boundary b) {
        boundaries.push_back(std::move(b));
        segments.emplace_back();
    }

    int compile(const ProtocolPtr& p) {
        return std::visit(
            [&](const auto& n) -> int {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, VarNode>) {
                    auto it = env.find(n.name);
                    if (it == env.end())
                        throw EvalError("unbound variable '" + n.name + "'");
                    int b = it->second;
                    env.erase(it);  // linear use
                    return b;
                } else if constexpr (std::is_same_v<T, InitialNode>) {
                    int b = alloc();
                    push_op(OpInit{b, n.conc, n.volume_l, n.temperature_k});
                    return b;
                } else if constexpr (std::is_same_v<T, MixNode>) {
                    int a = compile(n.left);
                    int c = compile(n.right);
                    push_op(OpMix{a, c, a});
                    release(c);
                    return a;
                } else if constexpr (std::is_same_v<T, LetNode>) {
                    int b = compile(n.bound);
                    env[n.var] = b;
                    return compile(n.body);
                } else if constexpr (std::is_same_v<T, DispenseNode>) {
                    int src = compile(n.source);
                    int rest = alloc();
                    Boundary bd;
                    bd.kind = Boundary::dispense;
                    bd.src_block = src;
                    bd.rest_block = rest;
                    bd.fraction = n.fraction;
                    bd.label = "dispense-" + n.take_var;
                    push_boundary(std::move(bd));
                    env[n.take_var] = src;
                    env[n.rest_var] = rest;
                    return compile(n.body);
                } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                    throw EvalError("compile_to_pdmp requires a desugared protocol");
                } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                    int b = compile(n.inner);
                    Boundary bd;
                    bd.kind = Boundary::equilibrate_dwell;
                    bd.eq_block = b;
                    bd.nominal_s = n.duration_s;
                    bd.label = "equilibrate-" + std::to_string(boundaries.size());
                    push_boundary(std::move(bd));
                    return b;
                } else if constexpr (std::is_same_v<T, DisposeNode>) {
                    int b = compile(n.inner);
                    push_op(OpDispose{b});
                    return b;  // holds the empty sample; may still be mixed
                } else {
                    const auto& o = std::get<ObserveNode>(p->node);
                    int b = compile(o.inner);
                    push_op(OpObserve{b, o.idn});
                    return b;
                }
            },
            p->node);
    }
};

struct MachineLayout {
    std::size_t species = 0;
    std::size_t blocks = 0;

    std::size_t dim() const { return blocks * (species + 2) + 1; }
    std::size_t conc(int block) const { return block * (species + 2); }
    std::size_t vol(int block) const { return conc(block) + species; }
    std::size_t temp(int block) const { return conc(block) + species + 1; }
    std::size_t clock() const { return dim() - 1; }
};

void apply_ops(const MachineLayout& lay, const std::vector<MachineOp>& ops,
               std::vector<double>& x) {
    for (const MachineOp& mop : ops) {
        std::visit(
            [&](const auto& op) {
                using T = std::decay_t<decltype(op)>;
                if constexpr (std::is_same_v<T, OpInit>) {
                    std::copy(op.conc.begin(), op.conc.end(), x.begin() + lay.conc(op.block));
                    x[lay.vol(op.block)] = op.vol;
                    x[lay.temp(op.block)] = op.temp;
                } else if constexpr (std::is_same_v<T, OpMix>) {
                    double v1 = x[lay.vol(op.a)], v2 = x[lay.vol(op.b)];
                    if (v1 == 0.0 && v2 == 0.0) {
                        for (std::size_t i = 0; i < lay.species; ++i)
                            x[lay.conc(op.dst) + i] = 0.0;
                        x[lay.vol(op.dst)] = 0.0;
                        x[lay.temp(op.dst)] = 0.0;
                    } else if (v1 == 0.0) {
                        for (std::size_t i = 0; i < lay.species; ++i)
                            x[lay.conc(op.dst) + i] = x[lay.conc(op.b) + i];
                        x[lay.vol(op.dst)] = v2;
                        x[lay.temp(op.dst)] = x[lay.temp(op.b)];
                    } else if (v2 == 0.0) {
                        for (std::size_t i = 0; i < lay.species; ++i)
                            x[lay.conc(op.dst) + i] = x[lay.conc(op.a) + i];
                        x[lay.vol(op.dst)] = v1;
                        x[lay.temp(op.dst)] = x[lay.temp(op.a)];
                    } else {
                        double vsum = v1 + v2;
                        for (std::size_t i = 0; i < lay.species; ++i)
                            x[lay.conc(op.dst) + i] =
                                (x[lay.conc(op.a) + i] * v1 + x[lay.conc(op.b) + i] * v2) /
                                vsum;
                        double tmix = (x[lay.temp(op.a)] * v1 + x[lay.temp(op.b)] * v2) / vsum;
                        x[lay.vol(op.dst)] = vsum;
                        x[lay.temp(op.dst)] = tmix;
                    }
                } else if constexpr (std::is_same_v<T, OpDispose>) {
                    for (std::size_t i = 0; i < lay.species; ++i) x[lay.conc(op.block) + i] = 0.0;
                    x[lay.vol(op.block)] = 0.0;
                    x[lay.temp(op.block)] = 0.0;
                } else {
                    // observations are not part of the compiled state
                }
            },
            mop);
    }
}

}  // namespace

Sample CompiledProtocol::decode_final_sample(const HybridPath& path) const {
    const PathSegment& last = path.final_segment();
    if (last.mode != terminal_mode)
        throw EvalError("execution did not reach the terminal mode; extend the horizon");
    MachineLayout lay{species_count, block_count};
    Sample s;
    s.conc.assign(last.x_exit.begin() + lay.conc(final_block),
                  last.x_exit.begin() + lay.conc(final_block) + species_count);
    s.volume_l = last.x_exit[lay.vol(final_block)];
    s.temperature_k = last.x_exit[lay.temp(final_block)];
    return s;
}

CompiledProtocol compile_to_pdmp(const ProtocolPtr& p, const Crn& crn,
                                 const NoiseConfig& noise) {
    noise.validate();
    if (noise.rates.kind != RateNoise::none)
        throw StructuralError(
            "compile_to_pdmp: rate noise is extrinsic (one draw per run); perturb the "
            "network before compiling");
    auto violations = check_linear(p);
    if (!violations.empty())
        throw StructuralError("compile_to_pdmp: protocol is not linear/closed");

    CompileState cs{crn};
    int final_block = cs.compile(p);

    MachineLayout lay{crn.size(), cs.in_use.size()};
    const bool exp_dwell = noise.equilibrate.kind == EquilibrateNoise::exponential;

    if (exp_dwell)
        for (const Boundary& b : cs.boundaries)
            if (b.kind == Boundary::equilibrate_dwell && !(b.nominal_s > 0.0))
                throw NonpositiveEquilibrateError(
                    "exponential equilibrate time requires a positive nominal duration");

    CompiledProtocol out;
    out.species_count = crn.size();
    out.block_count = cs.in_use.size();
    out.final_block = final_block;
    out.initial_mode = 0;
    out.terminal_mode = static_cast<int>(cs.boundaries.size());

    out.initial_state.assign(lay.dim(), 0.0);
    apply_ops(lay, cs.segments[0].ops, out.initial_state);

    Pdmp& H = out.pdmp;
    H.dim = lay.dim();
    for (const Boundary& b : cs.boundaries) H.mode_names.push_back(b.label);
    H.mode_names.push_back("terminal");

    auto boundaries = std::make_shared<std::vector<Boundary>>(cs.boundaries);
    auto segments = std::make_shared<std::vector<Segment>>(cs.segments);
    auto crn_copy = std::make_shared<Crn>(crn);
    auto noise_copy = std::make_shared<NoiseConfig>(noise);
    const int terminal = out.terminal_mode;

    H.field = [boundaries, crn_copy, lay, terminal](int q, double, std::span<const double> x,
                                                    std::span<double> dx) {
        std::fill(dx.begin(), dx.end(), 0.0);
        dx[lay.clock()] = 1.0;
        if (q == terminal) return;
        const Boundary& b = (*boundaries)[q];
        if (b.kind == Boundary::equilibrate_dwell) {
            auto conc = x.subspan(lay.conc(b.eq_block), lay.species);
            auto dconc = dx.subspan(lay.conc(b.eq_block), lay.species);
            drift_into_clamped(*crn_copy, conc, x[lay.vol(b.eq_block)],
                               x[lay.temp(b.eq_block)], dconc);
        }
    };

    // Dispense modes exit immediately through an always-true guard;
    // deterministic equilibrates exit on the dwell clock.
    H.guard = [boundaries, lay, terminal, exp_dwell](int q, std::span<const double> x) {
        if (q == terminal) return false;
        const Boundary& b = (*boundaries)[q];
        if (b.kind == Boundary::dispense) return true;
        if (!exp_dwell) return x[lay.clock()] >= b.nominal_s;
        return false;
    };

    if (exp_dwell) {
        H.intensity = [boundaries, terminal](int q, std::span<const double>, int q_to) {
            if (q == terminal || q_to != q + 1) return 0.0;
            const Boundary& b = (*boundaries)[q];
            return b.kind == Boundary::equilibrate_dwell ? 1.0 / b.nominal_s : 0.0;
        };
    }

    H.reset = [boundaries, segments, noise_copy, lay](const HybridState& exit_state,
                                                      ExitCause, RandomStream& rng) {
        const int q = exit_state.mode;
        const Boundary& b = (*boundaries)[q];
        HybridState next{q + 1, exit_state.x};
        if (b.kind == Boundary::dispense) {
            double v = next.x[lay.vol(b.src_block)];
            double p_eff = sample_dispense_fraction(*noise_copy, v, b.fraction, rng);
            auto [v_take, v_rest] = split_volume(v, p_eff);
            for (std::size_t i = 0; i < lay.species; ++i)
                next.x[lay.conc(b.rest_block) + i] = next.x[lay.conc(b.src_block) + i];
            next.x[lay.vol(b.src_block)] = v_take;
            next.x[lay.vol(b.rest_block)] = v_rest;
            next.x[lay.temp(b.rest_block)] = next.x[lay.temp(b.src_block)];
        }
        apply_ops(lay, (*segments)[q + 1].ops, next.x);
        next.x[lay.clock()] = 0.0;  // dwell clock restarts per mode
        return next;
    };

    return out;
}

}  // namespace protolang
