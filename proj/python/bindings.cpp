#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "leakprobe/errors.hpp"
#include "leakprobe/gadgets.hpp"
#include "leakprobe/manager.hpp"

namespace py = pybind11;
using namespace leakprobe;

namespace {

py::dict assignment_dict(const Assignment& a) {
    py::dict d;
    for (auto& [n, v] : a) d[py::str(n)] = v.bits();
    return d;
}

py::object witness_obj(const std::optional<Witness>& w) {
    if (!w) return py::none();
    py::dict d;
    d["first"] = assignment_dict(w->first);
    d["second"] = assignment_dict(w->second);
    d["publics"] = assignment_dict(w->publics);
    d["evidence"] = w->evidence;
    return d;
}

std::string kind_str(VerdictKind k) { return std::string(verdict_name(k)); }

Fixture from_strings(const std::string& netlist, const std::string& labels, const std::string& stimuli,
                     const std::optional<std::string>& gadget, const std::string& name) {
    Fixture f;
    f.name = name;
    f.circuit = parse_netlist(netlist);
    f.labels = parse_labels(labels);
    f.stimuli = parse_stimuli(stimuli, f.circuit);
    if (gadget) f.gadget = parse_gadget(*gadget, f.circuit, f.labels, f.stimuli);
    return f;
}

DupletMode mode_of(const std::string& m) {
    if (m == "mixed") return DupletMode::Mixed;
    if (m == "spatial") return DupletMode::Spatial;
    if (m == "temporal") return DupletMode::Temporal;
    throw py::value_error("mode must be mixed, spatial or temporal");
}

RunOptions run_options(uint32_t enum_limit, bool stop, bool use_cache, uint32_t jobs, bool reset_unstable,
                       bool keep_going, bool reduce, bool past_rule) {
    RunOptions o;
    o.enum_limit = enum_limit;
    o.stop_on_first_leak = stop;
    o.use_cache = use_cache;
    o.jobs = jobs;
    o.reset_unstable = reset_unstable;
    o.keep_going = keep_going;
    o.selection.reduce = reduce;
    o.selection.past_stability_rule = past_rule;
    return o;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Leakage verification of masked gate-level netlists";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<SimulationError>(m, "SimulationError", PyExc_RuntimeError);

    py::class_<Verdict>(m, "Verdict")
        .def_property_readonly("kind", [](const Verdict& v) { return kind_str(v.kind); })
        .def_property_readonly("secure", &Verdict::secure)
        .def_readonly("reason", &Verdict::reason)
        .def_property_readonly("witness", [](const Verdict& v) { return witness_obj(v.witness); })
        .def("__repr__", [](const Verdict& v) { return "<Verdict " + kind_str(v.kind) + ">"; });

    py::class_<Fixture>(m, "Fixture")
        .def_readonly("name", &Fixture::name)
        .def_property_readonly("netlist", [](const Fixture& f) { return serialize_netlist(f.circuit); })
        .def_property_readonly("labels", [](const Fixture& f) { return serialize_labels(f.labels); })
        .def_property_readonly("stimuli", [](const Fixture& f) { return serialize_stimuli(f.stimuli, f.circuit); })
        .def_property_readonly("gadget", [](const Fixture& f) -> py::object {
            if (!f.gadget) return py::none();
            return py::str(serialize_gadget(*f.gadget));
        })
        .def_property_readonly("wires", [](const Fixture& f) {
            std::vector<std::string> out;
            for (auto& w : f.circuit.wires) out.push_back(w.name);
            return out;
        })
        .def_property_readonly("cycles", [](const Fixture& f) { return f.stimuli.frames.size(); })
        .def("write", &write_fixture, py::arg("dir"));

    m.def("fixture_from_strings", &from_strings, py::arg("netlist"), py::arg("labels"), py::arg("stimuli"),
          py::arg("gadget") = std::nullopt, py::arg("name") = "design");
    m.def("load_fixture", &load_fixture, py::arg("dir"), py::arg("name"));
    m.def("gen_dom_and", &gen_dom_and, py::arg("d"));
    m.def("gen_isw_and", &gen_isw_and, py::arg("d"));
    m.def("gen_counterexamples", &gen_counterexamples);
    m.def(
        "gen_random_circuit", [](uint64_t seed) { return gen_random_circuit(seed); }, py::arg("seed"));

    py::class_<LeakageModel>(m, "Model")
        .def(py::init([](bool glitches, bool transitions, bool stability, const std::string& granularity,
                         bool overapprox) {
                 LeakageModel lm;
                 lm.glitches = glitches;
                 lm.transitions = transitions;
                 lm.use_stability = stability;
                 if (granularity != "bit" && granularity != "sw") throw py::value_error("granularity must be bit or sw");
                 lm.granularity = granularity == "sw" ? Granularity::SupportWise : Granularity::Bit;
                 lm.overapprox = overapprox;
                 lm.validate();
                 return lm;
             }),
             py::arg("glitches") = true, py::arg("transitions") = false, py::arg("stability") = true,
             py::arg("granularity") = "bit", py::arg("overapprox") = false)
        .def_static("rr1sw", &LeakageModel::rr1sw)
        .def_readonly("glitches", &LeakageModel::glitches)
        .def_readonly("transitions", &LeakageModel::transitions)
        .def_readonly("stability", &LeakageModel::use_stability)
        .def_readonly("overapprox", &LeakageModel::overapprox)
        .def_property_readonly("granularity",
                               [](const LeakageModel& lm) {
                                   return lm.granularity == Granularity::SupportWise ? "sw" : "bit";
                               })
        .def_property_readonly("facet", &LeakageModel::facet);

    py::class_<ReportEntry>(m, "ReportEntry")
        .def_readonly("cycle", &ReportEntry::cycle)
        .def_readonly("wire", &ReportEntry::wire)
        .def_readonly("facet", &ReportEntry::facet)
        .def_property_readonly("verdict", [](const ReportEntry& e) { return kind_str(e.verdict); })
        .def_readonly("exprs", &ReportEntry::exprs)
        .def_property_readonly("witness", [](const ReportEntry& e) { return witness_obj(e.witness); });

    py::class_<LeakReport>(m, "Report")
        .def_readonly("entries", &LeakReport::entries)
        .def_readonly("warnings", &LeakReport::warnings)
        .def_property_readonly("leaks", &LeakReport::leaks)
        .def_property_readonly("summary",
                               [](const LeakReport& r) {
                                   const ReportSummary& s = r.summary;
                                   py::dict d;
                                   d["cycles"] = s.cycles;
                                   d["leaking_cycles"] = s.leaking_cycles;
                                   d["expr_to_verify"] = s.expr_to_verify;
                                   d["verified_expr"] = s.verified_expr;
                                   d["cache_hits"] = s.cache_hits;
                                   d["trivial_skipped"] = s.trivial_skipped;
                                   return d;
                               })
        .def("to_jsonl", &LeakReport::to_jsonl);

    m.def(
        "verify",
        [](const Fixture& f, const LeakageModel& model, uint32_t enum_limit, bool stop, bool use_cache, uint32_t jobs,
           bool reset_unstable, bool keep_going, bool reduce, bool past_rule) {
            RunOptions o = run_options(enum_limit, stop, use_cache, jobs, reset_unstable, keep_going, reduce, past_rule);
            py::gil_scoped_release release;
            return run(f.circuit, f.stimuli, f.labels, model, o);
        },
        py::arg("fixture"), py::arg("model") = LeakageModel{}, py::arg("enum_limit") = kDefaultEnumLimit,
        py::arg("stop_on_first_leak") = false, py::arg("use_cache") = true, py::arg("jobs") = 1,
        py::arg("reset_unstable") = false, py::arg("keep_going") = false, py::arg("reduce") = true,
        py::arg("past_stability_rule") = true);

    py::class_<HigherOrderReport>(m, "HigherOrderReport")
        .def_readonly("order", &HigherOrderReport::order)
        .def_property_readonly("mode", [](const HigherOrderReport& r) { return std::string(duplet_mode_name(r.mode)); })
        .def_readonly("positions", &HigherOrderReport::positions)
        .def_readonly("duplets", &HigherOrderReport::duplets)
        .def_readonly("expected_duplets", &HigherOrderReport::expected_duplets)
        .def_readonly("leaking", &HigherOrderReport::leaking)
        .def_readonly("inconclusive", &HigherOrderReport::inconclusive)
        .def_readonly("first_leak", &HigherOrderReport::first_leak)
        .def_property_readonly("secure", &HigherOrderReport::secure)
        .def("to_json", &HigherOrderReport::to_json);

    m.def(
        "verify_higher_order",
        [](const Fixture& f, uint32_t d, const LeakageModel& model, const std::string& mode, uint64_t max_duplets,
           bool stop) {
            HigherOrderOptions o;
            o.mode = mode_of(mode);
            o.max_duplets = max_duplets;
            o.stop_on_first_leak = stop;
            py::gil_scoped_release release;
            return run_higher_order(f.circuit, f.stimuli, f.labels, model, d, o);
        },
        py::arg("fixture"), py::arg("d"), py::arg("model") = LeakageModel{}, py::arg("mode") = "mixed",
        py::arg("max_duplets") = 50'000'000, py::arg("stop_on_first_leak") = false);

    auto probing = [](bool strong) {
        return [strong](const Fixture& f, std::optional<uint32_t> d, bool glitches, uint32_t enum_limit) {
            if (!f.gadget) throw py::value_error("fixture has no gadget description");
            ProbeOptions po{glitches, enum_limit};
            uint32_t order = d.value_or(f.gadget->order);
            py::gil_scoped_release release;
            return strong ? check_sni(*f.gadget, order, po) : check_ni(*f.gadget, order, po);
        };
    };
    m.def("check_ni", probing(false), py::arg("fixture"), py::arg("d") = std::nullopt, py::arg("glitches") = true,
          py::arg("enum_limit") = 24);
    m.def("check_sni", probing(true), py::arg("fixture"), py::arg("d") = std::nullopt, py::arg("glitches") = true,
          py::arg("enum_limit") = 24);

    m.def(
        "check_exprs",
        [](const std::vector<std::string>& exprs, const std::string& labels, uint32_t enum_limit,
           const std::string& method) {
            SymbolTable t = parse_labels(labels);
            ExprSet s;
            for (auto& e : exprs) s.insert(parse_expr(e, t.width_fn()));
            if (method == "substitution") return check_substitution(s, t);
            if (method == "enumeration") return check_enumeration(s, t, enum_limit);
            if (method == "auto") return check(s, t, enum_limit);
            throw py::value_error("method must be auto, substitution or enumeration");
        },
        py::arg("exprs"), py::arg("labels"), py::arg("enum_limit") = kDefaultEnumLimit, py::arg("method") = "auto");
}
