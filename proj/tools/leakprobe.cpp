#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "leakprobe/errors.hpp"
#include "leakprobe/gadgets.hpp"
#include "leakprobe/manager.hpp"

using namespace leakprobe;

namespace {

enum Exit { kClean = 0, kLeaks = 1, kUsage = 2, kSimulation = 3 };

struct Inputs {
    std::string netlist, labels, stimuli, gadget;
    std::string fixture;  // <dir>/<name>
};

struct ModelFlags {
    std::string preset;
    bool glitches = true, transitions = false, stability = true, overapprox = false;
    std::string granularity = "bit";
    uint32_t order = 1;
    CLI::Option *o_glitches = nullptr, *o_transitions = nullptr, *o_stability = nullptr, *o_overapprox = nullptr,
                *o_granularity = nullptr;
};

struct RunFlags {
    uint32_t enum_limit = kDefaultEnumLimit;
    bool stop = false, no_cache = false, reset_unstable = false, keep_going = false, leaks_only = false;
    uint32_t jobs = 1;
    std::string report;
    std::string mode = "mixed";
    uint64_t max_duplets = 50'000'000;
};

void add_inputs(CLI::App* app, Inputs& in, bool gadget) {
    app->add_option("--netlist", in.netlist, "netlist JSON");
    app->add_option("--labels", in.labels, "symbol labels JSON");
    app->add_option("--stimuli", in.stimuli, "stimuli JSONL");
    if (gadget) app->add_option("--gadget", in.gadget, "gadget description JSON");
    app->add_option("--fixture", in.fixture, "fixture as <dir>/<name>, replaces the file options");
}

void add_model(CLI::App* app, ModelFlags& m) {
    app->add_option("--model", m.preset, "preset: rr1sw, or g,t with g and t in {0,1}");
    m.o_glitches = app->add_flag("--glitches", m.glitches, "glitch-extended probes");
    m.o_transitions = app->add_flag("--transitions", m.transitions, "transition-extended probes");
    m.o_stability = app->add_flag("--stability", m.stability, "use stability information");
    m.o_granularity =
        app->add_option("--granularity", m.granularity, "bit or sw")->check(CLI::IsMember({"bit", "sw"}));
    m.o_overapprox = app->add_flag("--overapprox", m.overapprox, "over-approximate (1,1) probes");
    app->add_option("--order", m.order, "probing order d")->check(CLI::Range(1u, 16u));
}

void add_run(CLI::App* app, RunFlags& r) {
    app->add_option("--enum-limit", r.enum_limit, "symbolic bits allowed for enumeration");
    app->add_flag("--stop-on-first-leak", r.stop);
    app->add_flag("--no-cache", r.no_cache);
    app->add_option("--report", r.report, "write the JSONL report here");
    app->add_option("--jobs", r.jobs, "verification workers")->check(CLI::Range(1u, 256u));
    app->add_flag("--reset-unstable", r.reset_unstable, "registers are unstable at cycle 0");
    app->add_flag("--keep-going", r.keep_going, "record consistency violations instead of failing");
    app->add_flag("--leaks-only", r.leaks_only, "omit secure entries from the report");
    app->add_option("--mode", r.mode, "d-uplet grouping for order > 1")
        ->check(CLI::IsMember({"mixed", "spatial", "temporal"}));
    app->add_option("--max-duplets", r.max_duplets);
}

LeakageModel build_model(const ModelFlags& f) {
    LeakageModel m;
    if (f.preset == "rr1sw") {
        m = LeakageModel::rr1sw();
    } else if (!f.preset.empty()) {
        if (f.preset.size() != 3 || f.preset[1] != ',' || (f.preset[0] != '0' && f.preset[0] != '1') ||
            (f.preset[2] != '0' && f.preset[2] != '1'))
            throw CLI::ValidationError("--model", "expected rr1sw or g,t");
        m.glitches = f.preset[0] == '1';
        m.transitions = f.preset[2] == '1';
    }
    if (f.o_glitches->count()) m.glitches = f.glitches;
    if (f.o_transitions->count()) m.transitions = f.transitions;
    if (f.o_stability->count()) m.use_stability = f.stability;
    if (f.o_overapprox->count()) m.overapprox = f.overapprox;
    if (f.o_granularity->count()) m.granularity = f.granularity == "sw" ? Granularity::SupportWise : Granularity::Bit;
    m.order = f.order;
    m.validate();
    return m;
}

Fixture load_inputs(const Inputs& in, bool need_gadget) {
    if (!in.fixture.empty()) {
        std::filesystem::path p(in.fixture);
        Fixture f = load_fixture(p.parent_path().string(), p.filename().string());
        if (need_gadget && !f.gadget) throw IoError("fixture '" + in.fixture + "' has no gadget description");
        return f;
    }
    if (in.netlist.empty() || in.labels.empty() || in.stimuli.empty())
        throw CLI::ValidationError("inputs", "--netlist, --labels and --stimuli (or --fixture) are required");
    if (need_gadget && in.gadget.empty()) throw CLI::ValidationError("--gadget", "required without --fixture");
    Fixture f;
    f.circuit = load_netlist(in.netlist);
    f.name = std::filesystem::path(in.netlist).stem().string();
    f.labels = load_labels(in.labels);
    f.stimuli = load_stimuli(in.stimuli, f.circuit);
    if (need_gadget) f.gadget = parse_gadget(read_file(in.gadget), f.circuit, f.labels, f.stimuli);
    return f;
}

void write_report(const std::string& path, const std::string& text) {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
}

RunOptions run_options(const RunFlags& r) {
    RunOptions o;
    o.enum_limit = r.enum_limit;
    o.stop_on_first_leak = r.stop;
    o.use_cache = !r.no_cache;
    o.jobs = r.jobs;
    o.reset_unstable = r.reset_unstable;
    o.keep_going = r.keep_going;
    o.record_secure = !r.leaks_only;
    return o;
}

int cmd_verify(const Inputs& in, const ModelFlags& mf, const RunFlags& rf) {
    LeakageModel model = build_model(mf);
    Fixture f = load_inputs(in, false);
    RunOptions opts = run_options(rf);
    if (model.order > 1) {
        HigherOrderOptions ho;
        ho.mode = rf.mode == "spatial" ? DupletMode::Spatial
                  : rf.mode == "temporal" ? DupletMode::Temporal
                                          : DupletMode::Mixed;
        ho.max_duplets = rf.max_duplets;
        ho.stop_on_first_leak = rf.stop;
        ho.run = opts;
        HigherOrderReport r = run_higher_order(f.circuit, f.stimuli, f.labels, model, model.order, ho);
        write_report(rf.report, r.to_json() + "\n");
        std::cout << "order " << r.order << " (" << duplet_mode_name(r.mode) << "): " << r.positions
                  << " positions, " << r.duplets << " of " << r.expected_duplets << " d-uplets checked, "
                  << r.leaking << " leaking, " << r.inconclusive << " inconclusive\n";
        if (!r.first_leak.empty()) {
            std::cout << "first non-secure d-uplet:";
            for (auto& l : r.first_leak) std::cout << " " << l;
            std::cout << "\n";
        }
        std::cout << (r.secure() ? "secure" : "not secure") << "\n";
        return r.secure() ? kClean : kLeaks;
    }
    LeakReport r = run(f.circuit, f.stimuli, f.labels, model, opts);
    write_report(rf.report, r.to_jsonl());
    const ReportSummary& s = r.summary;
    for (auto& e : r.entries) {
        if (e.verdict == VerdictKind::Secure) continue;
        std::cout << "cycle " << e.cycle << " " << e.wire << ": " << verdict_name(e.verdict);
        if (e.witness) std::cout << " (" << e.witness->evidence << ")";
        std::cout << "\n";
    }
    for (auto& [cycle, msg] : r.warnings) std::cout << "warning at cycle " << cycle << ": " << msg << "\n";
    std::cout << "model " << model.facet() << ", " << s.cycles << " cycles, " << s.leaking_cycles
              << " leaking; expr_to_verify " << s.expr_to_verify << ", verified " << s.verified_expr
              << ", cache hits " << s.cache_hits << ", trivial " << s.trivial_skipped << "\n";
    return r.leaks() ? kLeaks : kClean;
}

int cmd_probing(bool strong, const Inputs& in, const ModelFlags& mf, const RunFlags& rf) {
    Fixture f = load_inputs(in, true);
    ProbeOptions po;
    po.glitches = mf.o_glitches->count() ? mf.glitches : true;
    po.enum_limit = rf.enum_limit;
    uint32_t d = mf.order ? mf.order : f.gadget->order;
    Verdict v = strong ? check_sni(*f.gadget, d, po) : check_ni(*f.gadget, d, po);
    nlohmann::ordered_json j;
    j["gadget"] = f.gadget->name;
    j["property"] = strong ? "SNI" : "NI";
    j["order"] = d;
    j["glitches"] = po.glitches;
    j["verdict"] = verdict_name(v.kind);
    if (!v.reason.empty()) j["reason"] = v.reason;
    if (v.witness) j["evidence"] = v.witness->evidence;
    write_report(rf.report, j.dump() + "\n");
    std::cout << (strong ? "SNI" : "NI") << " order " << d << (po.glitches ? " with" : " without")
              << " glitches: " << verdict_name(v.kind) << "\n";
    if (v.witness) std::cout << v.witness->evidence << "\n";
    return v.secure() ? kClean : kLeaks;
}

int cmd_gen(const std::string& dir, const std::string& select, uint32_t max_order, uint32_t random,
            uint64_t seed) {
    std::vector<Fixture> fx;
    if (select == "all" || select == "gadgets")
        for (uint32_t d = 1; d <= max_order; ++d) {
            fx.push_back(gen_dom_and(d));
            fx.push_back(gen_isw_and(d));
        }
    if (select == "all" || select == "counterexamples")
        for (Fixture& f : gen_counterexamples()) fx.push_back(std::move(f));
    if (select == "random" || (select == "all" && random > 0))
        for (uint32_t i = 0; i < random; ++i) {
            fx.push_back(gen_random_circuit(seed + i));
            fx.back().name = "random_" + std::to_string(seed + i);
        }
    size_t files = 0;
    for (const Fixture& f : fx) files += write_fixture(f, dir).size();
    std::cout << "wrote " << fx.size() << " fixtures (" << files << " files) to " << dir << "\n";
    return kClean;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Leakage verifier for masked gate-level netlists"};
    app.require_subcommand(1);

    Inputs in;
    ModelFlags mf;
    RunFlags rf;
    CLI::App* verify = app.add_subcommand("verify", "verify every cycle under a probing model");
    add_inputs(verify, in, false);
    add_model(verify, mf);
    add_run(verify, rf);

    Inputs pin;
    ModelFlags pmf;
    RunFlags prf;
    CLI::App* ni = app.add_subcommand("ni", "non-interference of a gadget");
    CLI::App* sni = app.add_subcommand("sni", "strong non-interference of a gadget");
    for (CLI::App* a : {ni, sni}) {
        add_inputs(a, pin, true);
        pmf.o_glitches = a->add_flag("--glitches", pmf.glitches, "glitch-extended probes");
        a->add_option("--order", pmf.order, "number of probes d")->check(CLI::Range(1u, 16u));
        a->add_option("--enum-limit", prf.enum_limit);
        a->add_option("--report", prf.report);
    }

    std::string gen_dir = "fixtures", select = "all";
    uint32_t max_order = 3, random = 0;
    uint64_t seed = 0;
    CLI::App* gen = app.add_subcommand("gen-fixtures", "write generated fixtures");
    gen->add_option("--out", gen_dir, "output directory");
    gen->add_option("--select", select)->check(CLI::IsMember({"all", "gadgets", "counterexamples", "random"}));
    gen->add_option("--max-order", max_order)->check(CLI::Range(1u, 8u));
    gen->add_option("--random", random, "number of random circuits");
    gen->add_option("--seed", seed, "first random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kClean : kUsage;
    }

    try {
        if (*verify) return cmd_verify(in, mf, rf);
        if (*ni || *sni) {
            CLI::App* a = *ni ? ni : sni;
            pmf.o_glitches = a->get_option("--glitches");
            if (!a->get_option("--order")->count()) pmf.order = 0;
            return cmd_probing(a == sni, pin, pmf, prf);
        }
        if (*gen) return cmd_gen(gen_dir, select, max_order, random, seed);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return kSimulation;
    } catch (const CombinatorialLoop& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return kSimulation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
