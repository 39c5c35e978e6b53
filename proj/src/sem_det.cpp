#include "protolang/sem_det.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "protolang/errors.hpp"

namespace protolang {

std::pair<double, double> split_volume(double volume, double p) {
    double v_take = volume * p;
    double v_rest = volume - v_take;
    for (int i = 0; i < 8 && v_take + v_rest != volume; ++i) {
        double s = v_take + v_rest;
        double dir = s < volume ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
        double& minor = v_take <= v_rest ? v_take : v_rest;
        double& major = v_take <= v_rest ? v_rest : v_take;
        double cand = std::nextafter(minor, dir);
        double moved = v_take <= v_rest ? cand + v_rest : v_take + cand;
        if (moved != s)
            minor = cand;
        else
            major = std::nextafter(major, dir);
    }
    return {v_take, v_rest};
}

namespace {

struct Evaluator {
    const Crn& crn;
    const FlowConfig& cfg;
    const EvalHooks& hooks;
    EvalEffects& effects;

    void warn(std::string msg) const {
        if (hooks.warnings) hooks.warnings->push_back(std::move(msg));
    }

    void step(StepRecord::Op op, std::vector<Sample> in, std::vector<Sample> out) const {
        if (hooks.on_step) hooks.on_step({op, std::move(in), std::move(out)});
    }

    EvalResult run(const ProtocolPtr& p, const Env& env) {
        return std::visit(
            [&](const auto& n) -> EvalResult {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, VarNode>) {
                    auto it = env.find(n.name);
                    if (it == env.end())
                        throw EvalError("unbound variable '" + n.name + "'");
                    return it->second;
                } else if constexpr (std::is_same_v<T, InitialNode>) {
                    if (n.conc.size() != crn.size())
                        throw StructuralError(
                            "initial condition dimension does not match the network");
                    EvalResult r{{n.conc, n.volume_l, n.temperature_k}, {}, 0.0};
                    step(StepRecord::initial, {}, {r.sample});
                    return r;
                } else if constexpr (std::is_same_v<T, MixNode>) {
                    EvalResult a = run(n.left, env);
                    EvalResult b = run(n.right, env);
                    return mix_results(std::move(a), std::move(b));
                } else if constexpr (std::is_same_v<T, LetNode>) {
                    EvalResult bound = run(n.bound, env);
                    Env extended = env;
                    extended[n.var] = std::move(bound);
                    return run(n.body, extended);
                } else if constexpr (std::is_same_v<T, DispenseNode>) {
                    EvalResult src = run(n.source, env);
                    double p_eff = effects.dispense_fraction(*p, src.sample.volume_l,
                                                             n.fraction);
                    auto [v_take, v_rest] = split_volume(src.sample.volume_l, p_eff);
                    EvalResult take{{src.sample.conc, v_take, src.sample.temperature_k},
                                    std::move(src.observations), src.elapsed_s};
                    EvalResult rest{{src.sample.conc, v_rest, src.sample.temperature_k},
                                    {}, src.elapsed_s};
                    step(StepRecord::dispense, {src.sample}, {take.sample, rest.sample});
                    Env extended = env;
                    extended[n.take_var] = std::move(take);
                    extended[n.rest_var] = std::move(rest);
                    return run(n.body, extended);
                } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                    throw EvalError("protocol contains surface sugar; run desugar() first");
                } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                    EvalResult r = run(n.inner, env);
                    double duration = effects.equilibrate_duration(*p, n.duration_s);
                    return equilibrate_result(std::move(r), duration, *p);
                } else if constexpr (std::is_same_v<T, DisposeNode>) {
                    EvalResult r = run(n.inner, env);
                    Sample empty{std::vector<double>(crn.size(), 0.0), 0.0, 0.0};
                    step(StepRecord::dispose, {r.sample}, {empty});
                    return EvalResult{std::move(empty), std::move(r.observations),
                                      r.elapsed_s};
                } else {
                    const auto& o = std::get<ObserveNode>(p->node);
                    EvalResult r = run(o.inner, env);
                    std::vector<double> seen = r.sample.conc;
                    effects.observe_adjust(*p, seen);
                    r.observations.push_back({std::move(seen), o.idn, r.elapsed_s});
                    return r;
                }
            },
            p->node);
    }

    EvalResult mix_results(EvalResult a, EvalResult b) {
        const Sample& s1 = a.sample;
        const Sample& s2 = b.sample;
        if (s1.conc.size() != s2.conc.size())
            throw StructuralError("mix: sample dimensions differ");
        Sample out;
        if (s1.volume_l == 0.0 && s2.volume_l == 0.0) {
            warn("Mix of two empty samples (0/0 in the volume-weighted mean); "
                 "yielding the empty sample");
            out = Sample{std::vector<double>(s1.conc.size(), 0.0), 0.0, 0.0};
        } else if (s1.volume_l == 0.0) {
            out = s2;  // exact limit of the weighted mean
        } else if (s2.volume_l == 0.0) {
            out = s1;
        } else {
            double vsum = s1.volume_l + s2.volume_l;
            out.conc.resize(s1.conc.size());
            for (std::size_t i = 0; i < out.conc.size(); ++i)
                out.conc[i] = (s1.conc[i] * s1.volume_l + s2.conc[i] * s2.volume_l) / vsum;
            out.volume_l = vsum;
            out.temperature_k =
                (s1.temperature_k * s1.volume_l + s2.temperature_k * s2.volume_l) / vsum;
        }
        step(StepRecord::mix, {s1, s2}, {out});
        EvalResult r;
        r.sample = std::move(out);
        r.observations = std::move(a.observations);
        r.observations.insert(r.observations.end(),
                              std::make_move_iterator(b.observations.begin()),
                              std::make_move_iterator(b.observations.end()));
        r.elapsed_s = std::max(a.elapsed_s, b.elapsed_s);
        return r;
    }

    EvalResult equilibrate_result(EvalResult r, double duration, const Protocol& node) {
        if (duration < 0.0)
            throw StructuralError("equilibrate duration must be nonnegative");
        Sample before = r.sample;
        const Crn& active = effects.active_crn(crn);
        if (duration > 0.0 && !active.reactions.empty()) {
            double volume = r.sample.volume_l;
            double temp = r.sample.temperature_k;
            VectorField field = [&active, volume, temp](double, std::span<const double> y,
                                                        std::span<double> dy) {
                drift_into_clamped(active, y, volume, temp, dy);
            };
            FlowConfig run_cfg = cfg;
            run_cfg.project_nonnegative = true;
            Trajectory traj = integrate(field, r.sample.conc, duration, run_cfg);
            r.sample.conc.assign(traj.final_state().begin(), traj.final_state().end());
            if (hooks.on_equilibrate)
                hooks.on_equilibrate({node.id, r.elapsed_s, duration, std::move(traj)});
        } else if (hooks.on_equilibrate) {
            hooks.on_equilibrate(
                {node.id, r.elapsed_s, duration, Trajectory(0.0, r.sample.conc)});
        }
        step(StepRecord::equilibrate, {before}, {r.sample});
        r.elapsed_s += duration;
        return r;
    }
};

}  // namespace

EvalResult eval_with_effects(const ProtocolPtr& p, const Crn& crn, const Env& env,
                             const FlowConfig& cfg, const EvalHooks& hooks,
                             EvalEffects& effects) {
    Evaluator ev{crn, cfg, hooks, effects};
    return ev.run(p, env);
}

EvalResult eval(const ProtocolPtr& p, const Crn& crn, const Env& env, const FlowConfig& cfg,
                const EvalHooks& hooks) {
    EvalEffects identity;
    return eval_with_effects(p, crn, env, cfg, hooks, identity);
}

Sample eval_projected(const ProtocolPtr& p, const Crn& crn, const Env& env,
                      const FlowConfig& cfg) {
    return eval(p, crn, env, cfg).sample;
}

}  // namespace protolang
