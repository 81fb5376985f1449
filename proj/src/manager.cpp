#include "leakprobe/manager.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <json.hpp>

#include "leakprobe/errors.hpp"

namespace leakprobe {

using ojson = nlohmann::ordered_json;

LeakageModel LeakageModel::rr1sw() {
    LeakageModel m;
    m.glitches = true;
    m.transitions = true;
    m.use_stability = true;
    m.granularity = Granularity::SupportWise;
    m.overapprox = true;
    return m;
}

std::string LeakageModel::facet() const {
    if (glitches && transitions) return "transition+glitch";
    if (glitches) return "glitch";
    if (transitions) return "transition";
    return "value";
}

void LeakageModel::validate() const {
    if (order == 0) throw MalformedDocument("probing order must be at least 1");
    if (granularity == Granularity::SupportWise && !use_stability)
        throw MalformedDocument("support-wise probing requires stability");
}

ExprSet expr_set_for(const Valuation& cur, const Valuation& prev, const LeakageModel& model,
                     std::optional<uint32_t> rank) {
    ExprSet s;
    auto value = [&](const Valuation& v) { s.insert(rank ? bit(v.symb, *rank) : v.symb); };
    auto flat = [&](const Valuation& v) {
        if (rank) {
            for (Expr e : v.lset[*rank]) s.insert(e);
            return;
        }
        for (auto& l : v.lset)
            for (Expr e : l) s.insert(e);
    };
    if (!model.glitches) {
        value(cur);
        if (model.transitions) value(prev);
        return s;
    }
    flat(cur);
    if (model.transitions) {
        if (model.overapprox) flat(prev);
        else value(prev);
    }
    return s;
}

Valuation recombine_split_wires(const Split& s, const std::vector<Valuation>& vals) {
    std::vector<const Valuation*> member(s.width, nullptr);
    for (const SplitBit& b : s.bits) member.at(b.index) = &vals.at(b.wire);
    Valuation v;
    std::vector<Expr> msb_first;
    uint64_t conc = 0, stab = 0;
    v.lset.resize(s.width);
    for (uint32_t i = 0; i < s.width; ++i) {
        const Valuation& m = *member[i];
        conc |= (m.conc.bits() & 1) << i;
        stab |= (m.stab.bits() & 1) << i;
        v.lset[i] = m.lset.at(0);
    }
    for (uint32_t i = s.width; i-- > 0;) msb_first.push_back(member[i]->symb);
    v.symb = concat(msb_first);
    v.conc = BitVec(s.width, conc);
    v.stab = BitVec(s.width, stab);
    return v;
}

namespace {

// Gates whose output drops some input ranks even when nothing is stable.
bool drops_ranks(const Circuit& c, const Gate& g) {
    switch (g.kind) {
    case GateKind::Shl:
    case GateKind::Shr:
    case GateKind::Sshr:
        return g.params.amount && *g.params.amount > 0;
    case GateKind::Trunc:
        return c.wire(g.output).width < c.wire(g.inputs[0]).width;
    case GateKind::Blit:
    case GateKind::MemRead:
    case GateKind::MemWrite:
        return true;
    default:
        return false;
    }
}

void stability_rule(const Circuit& c, const std::vector<Valuation>& vals, std::set<WireId>& out) {
    for (const Gate& g : c.gates) {
        if (vals[g.output].stab.bits() != 0) out.insert(g.inputs.begin(), g.inputs.end());
        if (g.kind != GateKind::Mux) continue;
        const Valuation& sel = vals[g.inputs[0]];
        if (!sel.stable(0)) continue;
        if (sel.symb.is_const()) {
            out.insert(g.inputs[sel.symb.const_value() ? 1 : 2]);
        } else {
            out.insert(g.inputs[1]);
            out.insert(g.inputs[2]);
        }
    }
}

std::string bit_label(const Wire& w, uint32_t i) {
    return w.width == 1 ? w.name : w.name + "[" + std::to_string(i) + "]";
}

} // namespace

std::vector<Target> wires_to_verify(const Circuit& c, const StructuralIndex& index, const LeakageModel& model,
                                    const SimState& state, const SelectionOptions& opts) {
    std::vector<Target> out;
    bool reducible = opts.reduce && model.glitches && (!model.transitions || model.uses_overapprox());
    if (!reducible) {
        for (WireId w = 0; w < c.wires.size(); ++w) out.push_back(Target{Target::Kind::Wire, w});
    } else {
        std::set<WireId> ws(index.register_input_wires.begin(), index.register_input_wires.end());
        ws.insert(index.primary_output_wires.begin(), index.primary_output_wires.end());
        ws.insert(index.split_wires.begin(), index.split_wires.end());
        stability_rule(c, state.current, ws);
        if (model.uses_overapprox() && opts.past_stability_rule) stability_rule(c, state.previous, ws);
        for (const Gate& g : c.gates)
            if (drops_ranks(c, g)) ws.insert(g.inputs.begin(), g.inputs.end());
        for (WireId w = 0; w < c.wires.size(); ++w)
            if (index.fanout[w].empty() && index.register_fanout[w].empty()) ws.insert(w);
        for (WireId w : ws) out.push_back(Target{Target::Kind::Wire, w});
    }
    if (model.granularity == Granularity::SupportWise)
        for (uint32_t i = 0; i < c.splits.size(); ++i) out.push_back(Target{Target::Kind::Split, i});
    return out;
}

std::vector<NamedSet> target_sets(const Circuit& c, const Target& t, const LeakageModel& model,
                                  const SimState& state) {
    std::vector<NamedSet> out;
    if (t.kind == Target::Kind::Split) {
        const Split& s = c.splits.at(t.id);
        Valuation cur = recombine_split_wires(s, state.current);
        Valuation prev = recombine_split_wires(s, state.previous);
        out.push_back(NamedSet{s.parent, std::nullopt, expr_set_for(cur, prev, model)});
        return out;
    }
    const Wire& w = c.wire(t.id);
    const Valuation& cur = state.current[t.id];
    const Valuation& prev = state.previous[t.id];
    if (model.granularity == Granularity::SupportWise) {
        out.push_back(NamedSet{w.name, w.src, expr_set_for(cur, prev, model)});
        return out;
    }
    for (uint32_t i = 0; i < w.width; ++i) out.push_back(NamedSet{bit_label(w, i), w.src, expr_set_for(cur, prev, model, i)});
    return out;
}

std::string cache_key(const ExprSet& set) { return set.key(); }

std::optional<Verdict> VerdictCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

Verdict VerdictCache::put(const std::string& key, Verdict v) {
    std::lock_guard lock(mu_);
    return map_.emplace(key, std::move(v)).first->second;
}

size_t VerdictCache::size() const {
    std::lock_guard lock(mu_);
    return map_.size();
}

// ---------------------------------------------------------------------------
// report

bool LeakReport::leaks() const { return summary.leaking_cycles > 0; }

namespace {

ojson assignment_json(const Assignment& a) {
    ojson j = ojson::object();
    for (auto& [n, v] : a) j[n] = v.to_string();
    return j;
}

ojson witness_json(const Witness& w) {
    ojson j;
    j["first"] = assignment_json(w.first);
    j["second"] = assignment_json(w.second);
    if (!w.publics.empty()) j["publics"] = assignment_json(w.publics);
    j["evidence"] = w.evidence;
    return j;
}

template <class F>
void parallel_for(size_t n, uint32_t jobs, F&& f) {
    if (jobs <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (uint32_t t = 0; t < std::min<size_t>(jobs, n); ++t) {
        pool.emplace_back([&] {
            for (size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace

std::string LeakReport::to_jsonl() const {
    std::string out;
    for (const ReportEntry& e : entries) {
        ojson j;
        j["cycle"] = e.cycle;
        j["wire"] = e.wire;
        if (e.src) j["src"] = {{"file", e.src->file}, {"line", e.src->line}};
        j["facet"] = e.facet;
        j["verdict"] = verdict_name(e.verdict);
        j["exprs"] = e.exprs;
        if (e.witness) j["witness"] = witness_json(*e.witness);
        out += j.dump() + "\n";
    }
    for (auto& [cycle, msg] : warnings) {
        ojson j;
        j["cycle"] = cycle;
        j["warning"] = msg;
        out += j.dump() + "\n";
    }
    ojson s;
    s["cycles"] = summary.cycles;
    s["leaking_cycles"] = summary.leaking_cycles;
    s["expr_to_verify"] = summary.expr_to_verify;
    s["verified_expr"] = summary.verified_expr;
    s["cache_hits"] = summary.cache_hits;
    s["trivial_skipped"] = summary.trivial_skipped;
    out += s.dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// run

namespace {

SimOptions sim_options(const LeakageModel& model, const RunOptions& opts) {
    SimOptions so;
    so.reset_unstable = opts.reset_unstable;
    so.stability = model.use_stability;
    so.keep_going = opts.keep_going;
    so.hook = opts.hook;
    return so;
}

std::vector<NamedSet> sets_for(const Circuit& c, const std::vector<Target>& targets, const LeakageModel& model,
                               const SimState& st) {
    std::vector<NamedSet> sets;
    for (const Target& t : targets)
        for (NamedSet& s : target_sets(c, t, model, st)) sets.push_back(std::move(s));
    std::stable_sort(sets.begin(), sets.end(),
                     [](const NamedSet& a, const NamedSet& b) { return a.label < b.label; });
    return sets;
}

} // namespace

LeakReport run(const Circuit& c, const Stimuli& stimuli, const SymbolTable& labels, const LeakageModel& model,
               const RunOptions& opts) {
    model.validate();
    LeakReport rep;
    VerdictCache cache;
    std::set<std::string> baseline_seen;
    LeakageModel baseline = model;
    baseline.overapprox = false;
    SelectionOptions all_wires = opts.selection;
    all_wires.reduce = false;

    Simulator sim(c, stimuli, sim_options(model, opts));
    StructuralIndex index = structural_index(c);
    bool stop = false;
    while (!sim.done() && !stop) {
        sim.step();
        const SimState& st = sim.state();
        uint32_t cycle = st.cycle;
        ++rep.summary.cycles;
        if (opts.on_cycle) opts.on_cycle(st);
        for (auto& w : st.warnings) rep.warnings.emplace_back(cycle, w);
        for (auto& [wire, detail] : st.violations)
            rep.warnings.emplace_back(cycle, "consistency violation on '" + wire + "': " + detail);

        for (const NamedSet& s : sets_for(c, wires_to_verify(c, index, baseline, st, all_wires), baseline, st)) {
            if (s.set.empty()) continue;
            if (!opts.use_cache || baseline_seen.insert(cache_key(s.set)).second) ++rep.summary.expr_to_verify;
        }

        std::vector<NamedSet> sets = sets_for(c, wires_to_verify(c, index, model, st, opts.selection), model, st);
        // Resolve every set to a slot in `jobs`; duplicates share a slot.
        std::vector<long> slot(sets.size(), -1);
        std::vector<const ExprSet*> jobs;
        std::vector<std::string> job_keys;
        std::vector<std::optional<Verdict>> cached(sets.size());
        std::map<std::string, size_t> in_cycle;
        for (size_t i = 0; i < sets.size(); ++i) {
            if (sets[i].set.empty()) {
                ++rep.summary.trivial_skipped;
                continue;
            }
            if (!opts.use_cache) {
                slot[i] = static_cast<long>(jobs.size());
                jobs.push_back(&sets[i].set);
                job_keys.emplace_back();
                continue;
            }
            std::string key = cache_key(sets[i].set);
            if (auto hit = cache.get(key)) {
                cached[i] = std::move(hit);
                ++rep.summary.cache_hits;
                continue;
            }
            auto [it, fresh] = in_cycle.emplace(key, jobs.size());
            if (fresh) {
                jobs.push_back(&sets[i].set);
                job_keys.push_back(key);
            } else {
                ++rep.summary.cache_hits;
            }
            slot[i] = static_cast<long>(it->second);
        }
        std::vector<Verdict> results(jobs.size());
        parallel_for(jobs.size(), opts.jobs, [&](size_t j) { results[j] = check(*jobs[j], labels, opts.enum_limit); });
        rep.summary.verified_expr += jobs.size();
        if (opts.use_cache)
            for (size_t j = 0; j < jobs.size(); ++j) cache.put(job_keys[j], results[j]);

        bool leaked = false;
        for (size_t i = 0; i < sets.size(); ++i) {
            if (sets[i].set.empty()) continue;
            const Verdict& v = cached[i] ? *cached[i] : results[static_cast<size_t>(slot[i])];
            if (v.secure() && !opts.record_secure) continue;
            ReportEntry e;
            e.cycle = cycle;
            e.wire = sets[i].label;
            e.src = sets[i].src;
            e.facet = model.facet();
            e.verdict = v.kind;
            e.exprs = sets[i].set.rendered();
            e.witness = v.witness;
            e.reason = v.reason;
            rep.entries.push_back(std::move(e));
            if (!v.secure()) {
                leaked = true;
                if (opts.stop_on_first_leak) {
                    stop = true;
                    break;
                }
            }
        }
        if (leaked) ++rep.summary.leaking_cycles;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// higher order

std::string_view duplet_mode_name(DupletMode m) {
    switch (m) {
    case DupletMode::Spatial: return "spatial";
    case DupletMode::Temporal: return "temporal";
    case DupletMode::Mixed: return "mixed";
    }
    return "?";
}

uint64_t binomial(uint64_t n, uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > UINT64_MAX) return UINT64_MAX;
    }
    return static_cast<uint64_t>(r);
}

uint64_t enumerate_duplets(uint32_t p, uint32_t d, uint64_t cap,
                           const std::function<bool(const std::vector<uint32_t>&)>& fn) {
    uint64_t total = binomial(p, d);
    if (total > cap) throw TooMany(total, cap);
    if (d == 0 || d > p) return 0;
    std::vector<uint32_t> idx(d);
    for (uint32_t i = 0; i < d; ++i) idx[i] = i;
    uint64_t n = 0;
    while (true) {
        ++n;
        if (!fn(idx)) return n;
        uint32_t i = d;
        while (i > 0 && idx[i - 1] == p - d + i - 1) --i;
        if (i == 0) return n;
        ++idx[i - 1];
        for (uint32_t j = i; j < d; ++j) idx[j] = idx[j - 1] + 1;
    }
}

std::vector<Position> collect_positions(const Circuit& c, const Stimuli& stimuli, const LeakageModel& model,
                                        const RunOptions& opts) {
    model.validate();
    Simulator sim(c, stimuli, sim_options(model, opts));
    StructuralIndex index = structural_index(c);
    SelectionOptions all;
    all.reduce = false;
    std::vector<Position> out;
    while (!sim.done()) {
        sim.step();
        const SimState& st = sim.state();
        for (NamedSet& s : sets_for(c, wires_to_verify(c, index, model, st, all), model, st)) {
            if (s.set.empty()) continue;
            out.push_back(Position{st.cycle, s.label, std::move(s.set)});
        }
    }
    return out;
}

std::string HigherOrderReport::to_json() const {
    ojson j;
    j["order"] = order;
    j["mode"] = duplet_mode_name(mode);
    j["positions"] = positions;
    j["duplets"] = duplets;
    j["expected_duplets"] = expected_duplets;
    j["leaking"] = leaking;
    j["inconclusive"] = inconclusive;
    j["cache_hits"] = cache_hits;
    j["verdict"] = secure() ? "secure" : (leaking ? "leaks" : "inconclusive");
    if (!first_leak.empty()) j["first_leak"] = first_leak;
    if (first_verdict && first_verdict->witness) j["witness"] = witness_json(*first_verdict->witness);
    return j.dump();
}

HigherOrderReport run_higher_order(const Circuit& c, const Stimuli& stimuli, const SymbolTable& labels,
                                   const LeakageModel& model, uint32_t d, const HigherOrderOptions& opts) {
    std::vector<Position> pos = collect_positions(c, stimuli, model, opts.run);
    HigherOrderReport rep;
    rep.order = d;
    rep.mode = opts.mode;
    rep.positions = pos.size();

    std::vector<std::vector<uint32_t>> groups;
    if (opts.mode == DupletMode::Mixed) {
        groups.emplace_back(pos.size());
        for (uint32_t i = 0; i < pos.size(); ++i) groups[0][i] = i;
    } else {
        std::map<std::string, std::vector<uint32_t>> by;
        for (uint32_t i = 0; i < pos.size(); ++i) {
            std::string key = opts.mode == DupletMode::Spatial ? std::to_string(pos[i].cycle) : pos[i].label;
            by[key].push_back(i);
        }
        for (auto& [k, g] : by) groups.push_back(std::move(g));
    }
    for (auto& g : groups) {
        uint64_t n = binomial(g.size(), d);
        rep.expected_duplets = n > UINT64_MAX - rep.expected_duplets ? UINT64_MAX : rep.expected_duplets + n;
    }
    if (rep.expected_duplets > opts.max_duplets) throw TooMany(rep.expected_duplets, opts.max_duplets);

    VerdictCache cache;
    bool stop = false;
    for (auto& g : groups) {
        if (stop) break;
        rep.duplets += enumerate_duplets(static_cast<uint32_t>(g.size()), d, opts.max_duplets,
                                         [&](const std::vector<uint32_t>& idx) {
            ExprSet u;
            for (uint32_t i : idx) u.insert(pos[g[i]].set);
            std::string key = cache_key(u);
            Verdict v;
            if (auto hit = opts.run.use_cache ? cache.get(key) : std::nullopt) {
                v = *hit;
                ++rep.cache_hits;
            } else {
                v = check(u, labels, opts.run.enum_limit);
                if (opts.run.use_cache) cache.put(key, v);
            }
            if (v.secure()) return true;
            if (v.kind == VerdictKind::Leaks) ++rep.leaking;
            else ++rep.inconclusive;
            if (rep.first_leak.empty()) {
                for (uint32_t i : idx)
                    rep.first_leak.push_back(pos[g[i]].label + "@" + std::to_string(pos[g[i]].cycle));
                rep.first_verdict = v;
            }
            if (opts.stop_on_first_leak) {
                stop = true;
                return false;
            }
            return true;
        });
    }
    return rep;
}

} // namespace leakprobe
