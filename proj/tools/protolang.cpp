// Command-line front end: check, simulate, sweep, replay.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "protolang/errors.hpp"
#include "protolang/numfmt.hpp"
#include "protolang/parser.hpp"
#include "protolang/sem_stoch.hpp"
#include "protolang/smc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace protolang;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitRuntimeError = 2;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StructuralError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructuralError("cannot write '" + path.string() + "'");
    out << content;
}

void print_diag(const std::string& severity, const std::string& code,
                const std::string& message, const SourceSpan* span = nullptr) {
    json j;
    j["severity"] = severity;
    j["code"] = code;
    j["message"] = message;
    if (span && span->valid()) {
        j["span"] = {{"line", span->line_start},
                     {"col", span->col_start},
                     {"end_line", span->line_end},
                     {"end_col", span->col_end}};
    }
    std::cout << j.dump() << "\n";
}

struct CommonArgs {
    std::string protocol_path;
    std::string crn_path;
    std::string noise_path;
    std::string mode = "det";
    std::uint64_t seed = 0;
    std::size_t runs = 1;
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    bool trace = false;
    std::string out_dir;
    unsigned threads = 0;
    // sweep
    std::vector<std::string> params;
    std::string predicate;
    double delta = 0.01;
    std::string policy = "failfast";
};

struct LoadedInputs {
    Crn crn;
    std::vector<std::string> crn_warnings;
    ProtocolPtr protocol;           // desugared, ids assigned
    ProtocolPtr surface;            // as parsed
    std::optional<ProtocolTemplate> tmpl;
    NoiseConfig noise;
};

void check_equilibrate_positive(const ProtocolPtr& p, std::vector<SourceSpan>& bad) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, MixNode>) {
                check_equilibrate_positive(n.left, bad);
                check_equilibrate_positive(n.right, bad);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                check_equilibrate_positive(n.bound, bad);
                check_equilibrate_positive(n.body, bad);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                check_equilibrate_positive(n.source, bad);
                check_equilibrate_positive(n.body, bad);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                check_equilibrate_positive(n.source, bad);
                check_equilibrate_positive(n.body, bad);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                if (!(n.duration_s > 0.0)) bad.push_back(p->span);
                check_equilibrate_positive(n.inner, bad);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                check_equilibrate_positive(n.inner, bad);
            } else if constexpr (std::is_same_v<T, ObserveNode>) {
                check_equilibrate_positive(n.inner, bad);
            }
        },
        p->node);
}

// Parses and statically checks the inputs, emitting JSON-line diagnostics.
// Returns nullopt when an error diagnostic was emitted.
std::optional<LoadedInputs> load_and_check(const CommonArgs& args, bool allow_template) {
    LoadedInputs in;
    bool failed = false;
    try {
        in.crn = parse_crn(read_file(args.crn_path), &in.crn_warnings);
    } catch (const ParseError& e) {
        print_diag("error", "crn-syntax", e.what(), &e.span);
        return std::nullopt;
    } catch (const std::exception& e) {
        print_diag("error", "crn-invalid", e.what());
        return std::nullopt;
    }
    for (const std::string& w : in.crn_warnings) {
        bool lipschitz = w.find("Lipschitz") != std::string::npos;
        print_diag("warning", lipschitz ? "assumption1-lipschitz" : "crn-lint", w);
    }

    std::string text;
    try {
        text = read_file(args.protocol_path);
        if (allow_template) {
            in.tmpl = parse_protocol_template(text, in.crn);
            if (in.tmpl->holes.empty()) in.surface = parse_protocol(text, in.crn);
        } else {
            in.surface = parse_protocol(text, in.crn);
        }
    } catch (const ParseError& e) {
        print_diag("error", "protocol-syntax", e.what(), &e.span);
        return std::nullopt;
    } catch (const std::exception& e) {
        print_diag("error", "protocol-invalid", e.what());
        return std::nullopt;
    }

    if (in.surface) {
        in.protocol = assign_ids(desugar(in.surface));
        for (const LinearityViolation& v : check_linear(in.protocol)) {
            failed = true;
            std::string msg;
            switch (v.kind) {
                case LinearityViolation::duplicated:
                    msg = "variable '" + v.var + "' is used " + std::to_string(v.count) +
                          " times; linear protocols use each sample exactly once";
                    break;
                case LinearityViolation::unused:
                    msg = "variable '" + v.var + "' is never used; samples cannot be "
                          "silently discarded (use Dispose)";
                    break;
                case LinearityViolation::unbound:
                    msg = "variable '" + v.var + "' is unbound; protocols must be closed";
                    break;
            }
            print_diag("error", v.kind == LinearityViolation::unbound ? "unbound" : "linearity",
                       msg, &v.span);
        }
        if (args.mode == "stoch") {
            std::vector<SourceSpan> bad;
            check_equilibrate_positive(in.surface, bad);
            for (const SourceSpan& s : bad) {
                failed = true;
                print_diag("error", "assumption1-equilibrate",
                           "stochastic equilibrate times are exponential with mean t; "
                           "t must be strictly positive",
                           &s);
            }
        }
    }

    if (!args.noise_path.empty()) {
        try {
            in.noise = NoiseConfig::load_file(args.noise_path);
        } catch (const std::exception& e) {
            print_diag("error", "noise-invalid", e.what());
            return std::nullopt;
        }
    }
    if (failed) return std::nullopt;
    return in;
}

json make_manifest(const std::string& command, const CommonArgs& args) {
    json j;
    j["schema_version"] = 1;
    j["tool"] = "protolang";
    j["version"] = kVersion;
    j["command"] = command;
    json a;
    a["protocol"] = fs::absolute(args.protocol_path).string();
    a["crn"] = fs::absolute(args.crn_path).string();
    a["mode"] = args.mode;
    if (args.noise_path.empty())
        a["noise"] = nullptr;
    else
        a["noise"] = fs::absolute(args.noise_path).string();
    a["seed"] = args.seed;
    a["runs"] = args.runs;
    a["rel_tol"] = args.rel_tol;
    a["abs_tol"] = args.abs_tol;
    a["trace"] = args.trace;
    if (command == "sweep") {
        a["params"] = args.params;
        a["predicate"] = args.predicate;
        a["delta"] = args.delta;
        a["policy"] = args.policy;
    }
    j["args"] = a;
    return j;
}

std::string csv_header(const Crn& crn, const std::string& lead, const std::string& tail) {
    std::string h = lead;
    for (const Species& s : crn.species) h += "," + s.name;
    if (!tail.empty()) h += "," + tail;
    return h + "\n";
}

int run_simulate(const CommonArgs& args) {
    auto loaded = load_and_check(args, /*allow_template=*/false);
    if (!loaded) return kExitUserError;
    LoadedInputs& in = *loaded;

    fs::create_directories(args.out_dir);
    FlowConfig flow;
    flow.rel_tol = args.rel_tol;
    flow.abs_tol = args.abs_tol;

    if (args.mode == "det") {
        std::vector<EquilibrateTrace> traces;
        EvalHooks hooks;
        if (args.trace)
            hooks.on_equilibrate = [&](const EquilibrateTrace& t) { traces.push_back(t); };
        EvalResult r = eval(in.protocol, in.crn, {}, flow, hooks);

        json out;
        out["schema_version"] = 1;
        out["elapsed_s"] = r.elapsed_s;
        json conc;
        for (const Species& s : in.crn.species) conc[s.name] = r.sample.conc[s.index];
        out["sample"] = {{"concentrations", conc},
                         {"volume_l", r.sample.volume_l},
                         {"temperature_k", r.sample.temperature_k}};
        out["observations"] = json::array();
        for (const Observation& o : r.observations) {
            json jo;
            jo["idn"] = o.idn;
            jo["time_s"] = o.time_s;
            json oc;
            for (const Species& s : in.crn.species) oc[s.name] = o.conc[s.index];
            jo["concentrations"] = oc;
            out["observations"].push_back(jo);
        }
        write_file(fs::path(args.out_dir) / "final.json", out.dump(2) + "\n");

        for (std::size_t k = 0; k < traces.size(); ++k) {
            const Trajectory& traj = traces[k].trajectory;
            std::ostringstream csv;
            csv << "# protolang trace, schema_version=1\n";
            csv << csv_header(in.crn, "time_s", "");
            std::vector<double> y(in.crn.size());
            auto emit = [&](double t_local) {
                traj.at_into(t_local, y);
                csv << format_double(traces[k].start_elapsed_s + t_local);
                for (double v : y) csv << "," << format_double(v);
                csv << "\n";
            };
            emit(0.0);
            for (const DenseStep& s : traj.steps()) emit(std::min(s.t0 + s.h, traj.end_time()));
            write_file(fs::path(args.out_dir) / ("trace_" + std::to_string(k) + ".csv"),
                       csv.str());
        }
    } else {
        RandomStream root(args.seed);
        std::size_t n = args.runs;
        std::vector<EvalResult> results(n);
        std::vector<std::string> errors(n);
        unsigned hw = std::thread::hardware_concurrency();
        unsigned workers = args.threads ? args.threads : (hw ? hw : 1);
        workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
        auto body = [&](std::size_t i) {
            try {
                results[i] = eval_stoch(in.protocol, in.crn, {}, flow, in.noise, root.child(i));
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        };
        if (workers <= 1) {
            for (std::size_t i = 0; i < n; ++i) body(i);
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w)
                pool.emplace_back([&, w]() {
                    for (std::size_t i = w; i < n; i += workers) body(i);
                });
            for (auto& th : pool) th.join();
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!errors[i].empty()) {
                print_diag("error", "run-failed",
                           "run " + std::to_string(i) + ": " + errors[i]);
                return kExitRuntimeError;
            }
        }

        std::ostringstream runs_csv;
        runs_csv << "# protolang runs, schema_version=1\n";
        runs_csv << csv_header(in.crn, "run_index,seed", "elapsed_s");
        std::ostringstream obs_csv;
        obs_csv << "# protolang observations, schema_version=1\n";
        obs_csv << csv_header(in.crn, "run_index,idn,time_s", "");
        for (std::size_t i = 0; i < n; ++i) {
            const EvalResult& r = results[i];
            runs_csv << i << "," << root.child(i).seed();
            for (const Species& s : in.crn.species)
                runs_csv << "," << format_double(r.sample.conc[s.index]);
            runs_csv << "," << format_double(r.elapsed_s) << "\n";
            for (const Observation& o : r.observations) {
                obs_csv << i << "," << o.idn << "," << format_double(o.time_s);
                for (const Species& s : in.crn.species)
                    obs_csv << "," << format_double(o.conc[s.index]);
                obs_csv << "\n";
            }
        }
        write_file(fs::path(args.out_dir) / "runs.csv", runs_csv.str());
        write_file(fs::path(args.out_dir) / "observations.csv", obs_csv.str());
    }

    write_file(fs::path(args.out_dir) / "manifest.json",
               make_manifest("simulate", args).dump(2) + "\n");
    return kExitOk;
}

SweepAxis parse_axis(const std::string& spec) {
    auto eq = spec.find('=');
    auto c1 = spec.find(':', eq);
    auto c2 = spec.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (eq == std::string::npos || c1 == std::string::npos || c2 == std::string::npos)
        throw StructuralError("malformed --param '" + spec + "'; expected name=lo:hi:steps");
    SweepAxis a;
    a.name = spec.substr(0, eq);
    double steps;
    if (!parse_double(spec.substr(eq + 1, c1 - eq - 1), a.lo) ||
        !parse_double(spec.substr(c1 + 1, c2 - c1 - 1), a.hi) ||
        !parse_double(spec.substr(c2 + 1), steps) || steps < 1.0)
        throw StructuralError("malformed --param '" + spec + "'; expected name=lo:hi:steps");
    a.steps = static_cast<std::size_t>(steps);
    return a;
}

int run_sweep(const CommonArgs& args) {
    auto loaded = load_and_check(args, /*allow_template=*/true);
    if (!loaded) return kExitUserError;
    LoadedInputs& in = *loaded;
    if (!in.tmpl) {
        print_diag("error", "sweep-template", "sweep requires a protocol template");
        return kExitUserError;
    }

    std::vector<SweepAxis> axes;
    for (const std::string& spec : args.params) axes.push_back(parse_axis(spec));
    Predicate pred = Predicate::parse(args.predicate);

    // static check of a sample cell (midpoint instantiation)
    {
        std::map<std::string, double> mid;
        for (const SweepAxis& a : axes) mid[a.name] = 0.5 * (a.lo + a.hi);
        ProtocolPtr cell = assign_ids(desugar(instantiate(*in.tmpl, in.crn, mid)));
        auto violations = check_linear(cell);
        if (!violations.empty()) {
            print_diag("error", "linearity", "instantiated template is not linear/closed");
            return kExitUserError;
        }
    }

    FlowConfig flow;
    flow.rel_tol = args.rel_tol;
    flow.abs_tol = args.abs_tol;
    ErrorPolicy policy = args.policy == "skip" ? ErrorPolicy::skip : ErrorPolicy::fail_fast;

    SweepGrid grid = sweep(*in.tmpl, in.crn, axes, pred, args.runs, args.delta, in.noise,
                           flow, args.seed, policy, args.threads);

    fs::create_directories(args.out_dir);
    write_file(fs::path(args.out_dir) / "grid.csv", grid.to_csv());
    write_file(fs::path(args.out_dir) / "grid.json", grid.to_json_text());
    write_file(fs::path(args.out_dir) / "manifest.json",
               make_manifest("sweep", args).dump(2) + "\n");

    std::cout << "argmax cells (statistically indistinguishable from the best):\n";
    for (std::size_t idx : grid.argmax_set()) {
        const SweepCell& c = grid.cells[idx];
        std::cout << "  ";
        for (std::size_t ax = 0; ax < axes.size(); ++ax)
            std::cout << axes[ax].name << "=" << format_double(c.params[ax]) << " ";
        std::cout << "p_hat=" << format_double(c.est.p_hat) << " ci=["
                  << format_double(c.est.ci_lo) << "," << format_double(c.est.ci_hi) << "]\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"protolang: an experimental-protocol language over chemical "
                 "reaction networks"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonArgs args;

    CLI::App* check = app.add_subcommand("check", "parse and statically check a protocol");
    check->add_option("--protocol", args.protocol_path, "protocol file")->required();
    check->add_option("--crn", args.crn_path, "reaction network file")->required();
    check->add_option("--mode", args.mode, "det|stoch (stoch adds Assumption-1 lints)");

    CLI::App* sim = app.add_subcommand("simulate", "evaluate a protocol");
    sim->add_option("--protocol", args.protocol_path)->required();
    sim->add_option("--crn", args.crn_path)->required();
    sim->add_option("--mode", args.mode, "det|stoch");
    sim->add_option("--noise", args.noise_path, "noise config (JSON)");
    sim->add_option("--seed", args.seed);
    sim->add_option("--runs", args.runs);
    sim->add_option("--rel-tol", args.rel_tol);
    sim->add_option("--abs-tol", args.abs_tol);
    sim->add_flag("--trace", args.trace, "write dense trajectories per equilibrate (det)");
    sim->add_option("--threads", args.threads);
    sim->add_option("--out", args.out_dir)->required();

    CLI::App* sw = app.add_subcommand("sweep", "grid sweep over template parameters");
    sw->add_option("--protocol", args.protocol_path, "protocol template")->required();
    sw->add_option("--crn", args.crn_path)->required();
    sw->add_option("--param", args.params, "axis spec name=lo:hi:steps (repeatable)")
        ->required();
    sw->add_option("--predicate", args.predicate,
                   "\"species in [lo,hi] at final\" or \"... at obs:<idn>\"")
        ->required();
    sw->add_option("--runs", args.runs)->required();
    sw->add_option("--delta", args.delta, "CI level is 1-delta");
    sw->add_option("--noise", args.noise_path);
    sw->add_option("--seed", args.seed);
    sw->add_option("--policy", args.policy, "failfast|skip");
    sw->add_option("--threads", args.threads);
    sw->add_option("--out", args.out_dir)->required();

    std::string manifest_path;
    CLI::App* replay = app.add_subcommand("replay", "re-run a command from its manifest");
    replay->add_option("manifest", manifest_path, "manifest.json path")->required();
    replay->add_option("--out", args.out_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(check)) {
            args.runs = 1;
            auto loaded = load_and_check(args, false);
            if (!loaded) return kExitUserError;
            print_diag("info", "ok", "protocol is well-formed");
            return kExitOk;
        }
        if (app.got_subcommand(sim)) {
            if (args.mode != "det" && args.mode != "stoch")
                throw StructuralError("--mode must be det or stoch");
            return run_simulate(args);
        }
        if (app.got_subcommand(sw)) {
            args.mode = "stoch";
            return run_sweep(args);
        }
        if (app.got_subcommand(replay)) {
            json m = json::parse(read_file(manifest_path));
            if (m.value("schema_version", 0) != 1 || !m.contains("args"))
                throw StructuralError("unsupported manifest");
            const json& a = m["args"];
            CommonArgs r;
            r.protocol_path = a.at("protocol");
            r.crn_path = a.at("crn");
            r.mode = a.at("mode");
            if (!a.at("noise").is_null()) r.noise_path = a.at("noise");
            r.seed = a.at("seed");
            r.runs = a.at("runs");
            r.rel_tol = a.at("rel_tol");
            r.abs_tol = a.at("abs_tol");
            r.trace = a.at("trace");
            r.out_dir = args.out_dir;
            std::string command = m.at("command");
            if (command == "simulate") return run_simulate(r);
            if (command == "sweep") {
                r.params = a.at("params").get<std::vector<std::string>>();
                r.predicate = a.at("predicate");
                r.delta = a.at("delta");
                r.policy = a.at("policy");
                return run_sweep(r);
            }
            throw StructuralError("manifest command '" + command + "' is not replayable");
        }
    } catch (const ParseError& e) {
        print_diag("error", "syntax", e.what(), &e.span);
        return kExitUserError;
    } catch (const StructuralError& e) {
        print_diag("error", "invalid-input", e.what());
        return kExitUserError;
    } catch (const IllPosedError& e) {
        print_diag("error", "ill-posed", e.what());
        return kExitRuntimeError;
    } catch (const std::exception& e) {
        print_diag("error", "runtime", e.what());
        return kExitRuntimeError;
    }
    return kExitOk;
}
