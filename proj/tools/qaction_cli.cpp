#include "qaction/qaction.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qaction;

namespace {

enum ExitCode { ok = 0, config_error = 2, numerical_error = 3 };

struct RunContext {
    fs::path config_dir;
    fs::path out;
    unsigned workers = 0;
    TableFormat format = TableFormat::csv;
    bool gnuplot = false;
};

// ---- config helpers

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw InputError(where + " must be a JSON object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k)) throw InputError("unknown key '" + k + "' in " + where);
}

json read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

Grid parse_grid(const json& j, int dim) {
    allow_keys(j, {"half_width", "points"}, "grid");
    auto pair_of = [&](const char* key, auto tag) {
        using T = decltype(tag);
        const auto& v = j.at(key);
        if (v.is_array()) {
            if (v.size() != 2) throw InputError(std::string("grid.") + key + " needs two entries");
            return std::array<T, 2>{v[0].get<T>(), v[1].get<T>()};
        }
        return std::array<T, 2>{v.get<T>(), v.get<T>()};
    };
    return Grid(dim, pair_of("half_width", 0.0), pair_of("points", 0));
}

std::vector<BoundaryPair> parse_pairs(const json& j, int dim) {
    allow_keys(j, {"lo", "hi", "count", "list"}, "pairs");
    if (j.contains("list")) {
        std::vector<BoundaryPair> out;
        for (const auto& e : j.at("list")) {
            const std::size_t n = static_cast<std::size_t>(2 * dim);
            if (!e.is_array() || e.size() != n)
                throw InputError("each pair needs " + std::to_string(n) + " coordinates");
            BoundaryPair p;
            for (int a = 0; a < dim; ++a) {
                p.initial[static_cast<std::size_t>(a)] = e[static_cast<std::size_t>(a)].get<double>();
                p.final[static_cast<std::size_t>(a)] = e[static_cast<std::size_t>(dim + a)].get<double>();
            }
            out.push_back(p);
        }
        if (out.empty()) throw InputError("pair list is empty");
        return out;
    }
    const double lo = j.at("lo").get<double>(), hi = j.at("hi").get<double>();
    if (!(lo <= hi)) throw InputError("pair range needs lo <= hi");
    return tensor_pairs(dim, lo, hi, j.at("count").get<int>());
}

std::vector<double> parse_times(const json& j) {
    std::vector<double> out;
    if (j.is_array())
        for (const auto& t : j) out.push_back(t.get<double>());
    else
        out.push_back(j.get<double>());
    if (out.empty()) throw InputError("no transition times given");
    for (double t : out)
        if (!(t > 0.0)) throw InputError("transition time must be positive");
    return out;
}

PolynomialPotential::Exponent parse_monomial(const json& j, int dim) {
    if (j.is_number_integer()) {
        if (dim != 1) throw InputError("2-D ansatz monomials are written [a, b]");
        return {j.get<int>(), 0};
    }
    if (!j.is_array() || static_cast<int>(j.size()) != dim) throw InputError("ansatz monomial arity mismatch");
    return {j[0].get<int>(), dim == 2 ? j[1].get<int>() : 0};
}

Ansatz parse_ansatz(const json& j, const ActionSpec& classical) {
    allow_keys(j, {"terms", "fit_mass", "kinetic_xy"}, "ansatz");
    Ansatz a;
    a.fit_mass = j.value("fit_mass", true);
    a.kinetic_xy = j.value("kinetic_xy", false);
    const auto& terms = j.at("terms");
    if (terms.is_string()) {
        if (terms.get<std::string>() != "classical") throw InputError("ansatz.terms must be a list or \"classical\"");
        auto from = Ansatz::from_potential(classical.potential(), a.fit_mass);
        a.terms = std::move(from.terms);
        return a;
    }
    // A term is one monomial or a list of monomials sharing a coefficient.
    const int dim = classical.dimension();
    for (const auto& t : terms) {
        BasisTerm b;
        const bool single = dim == 1 ? t.is_number_integer() : (t.is_array() && !t.empty() && t[0].is_number_integer());
        if (single) {
            b.monomials.push_back(parse_monomial(t, dim));
        } else {
            if (!t.is_array() || t.empty()) throw InputError("ansatz term must be a monomial or a list of monomials");
            for (const auto& m : t) b.monomials.push_back(parse_monomial(m, dim));
        }
        a.terms.push_back(std::move(b));
    }
    return a;
}

NelderMeadOptions parse_optimizer(const json& j) {
    allow_keys(j, {"initial_step", "diameter_tolerance", "max_evaluations", "restarts", "polish_passes"}, "optimizer");
    NelderMeadOptions o;
    o.initial_step = j.value("initial_step", o.initial_step);
    o.diameter_tolerance = j.value("diameter_tolerance", o.diameter_tolerance);
    o.max_evaluations = j.value("max_evaluations", o.max_evaluations);
    o.restarts = j.value("restarts", o.restarts);
    o.polish_passes = j.value("polish_passes", o.polish_passes);
    if (!(o.initial_step > 0.0) || !(o.diameter_tolerance > 0.0) || o.max_evaluations < 1 || o.restarts < 0)
        throw InputError("optimizer settings out of range");
    return o;
}

SectionSpec parse_section(const json& j) {
    allow_keys(j, {"axis", "value", "orientation", "energy", "reference", "orbits", "seed", "max_crossings", "dt",
                   "max_time"},
               "section");
    SectionSpec s;
    if (j.contains("axis")) {
        const auto& ax = j.at("axis");
        if (ax.is_string()) {
            const auto name = ax.get<std::string>();
            if (name != "x" && name != "y") throw InputError("section.axis must be \"x\" or \"y\"");
            s.axis = name == "x" ? 0 : 1;
        } else {
            s.axis = ax.get<int>();
        }
    }
    s.value = j.value("value", s.value);
    s.orientation = j.value("orientation", s.orientation);
    s.energy = j.at("energy").get<double>();
    const auto ref = j.value("reference", std::string("above_minimum"));
    if (ref == "above_minimum") s.reference = EnergyReference::above_minimum;
    else if (ref == "absolute") s.reference = EnergyReference::absolute;
    else throw InputError("section.reference must be \"above_minimum\" or \"absolute\"");
    s.max_crossings = j.value("max_crossings", s.max_crossings);
    s.dt = j.value("dt", s.dt);
    s.max_time = j.value("max_time", s.max_time);
    if (s.axis != 0 && s.axis != 1) throw InputError("section.axis must be 0 or 1");
    if (s.orientation != 1 && s.orientation != -1) throw InputError("section.orientation must be +1 or -1");
    return s;
}

fs::path resolve(const RunContext& ctx, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : ctx.config_dir / path;
}

void require_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
    const auto probe = dir / ".qaction_write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw InputError("output directory is not writable: " + dir.string());
    }
    fs::remove(probe, ec);
}

std::string table_name(const RunContext& ctx, const std::string& stem) { return stem + extension(ctx.format); }

// ---- commands

int cmd_propagate(const json& cfg, const RunContext& ctx) {
    allow_keys(cfg, {"action", "grid", "T", "pairs", "trajectories"}, "propagate config");
    const auto action = action_from_json(cfg.at("action"), Confinement::required);
    const auto grid = parse_grid(cfg.at("grid"), action.dimension());
    const auto times = parse_times(cfg.at("T"));
    const auto pairs = parse_pairs(cfg.at("pairs"), action.dimension());
    struct TrajectoryRequest {
        Point xi, xf;
        double T;
        int nodes;
    };
    std::vector<TrajectoryRequest> traj;
    if (cfg.contains("trajectories")) {
        for (const auto& t : cfg.at("trajectories")) {
            allow_keys(t, {"xi", "xf", "T", "nodes"}, "trajectory request");
            TrajectoryRequest r{{0.0, 0.0}, {0.0, 0.0}, t.at("T").get<double>(), t.value("nodes", 257)};
            auto point = [&](const json& v) {
                if (v.is_number()) return Point{v.get<double>(), 0.0};
                return Point{v.at(0).get<double>(), v.at(1).get<double>()};
            };
            r.xi = point(t.at("xi"));
            r.xf = point(t.at("xf"));
            traj.push_back(r);
        }
    }
    require_writable(ctx.out);

    const SpectralPropagator prop(action, grid, *std::min_element(times.begin(), times.end()));
    Table all(action.dimension() == 2 ? std::vector<std::string>{"xi", "yi", "xf", "yf", "T", "G"}
                                      : std::vector<std::string>{"xi", "xf", "T", "G"});
    for (double T : times) {
        const auto t = propagator_table(prop.table(pairs, T));
        for (const auto& r : t.rows) all.row(r);
    }
    OutputSet out(ctx.out);
    out.add(table_name(ctx, "propagator"), render(all, ctx.format));
    out.add(table_name(ctx, "spectrum"), render(spectrum_table(prop.spectral()), ctx.format));
    for (std::size_t k = 0; k < traj.size(); ++k) {
        BvpOptions opt;
        opt.time_nodes = traj[k].nodes;
        const auto sol = solve_euclidean_bvp(action, traj[k].xi, traj[k].xf, traj[k].T, opt);
        out.add(table_name(ctx, "trajectory_" + std::to_string(k)), render(trajectory_table(action, sol), ctx.format));
    }
    out.commit();
    return ok;
}

int cmd_fit(const json& cfg, const RunContext& ctx) {
    allow_keys(cfg, {"action", "grid", "T", "T_list", "pairs", "ansatz", "time_nodes", "optimizer", "start"},
               "fit config");
    const auto action = action_from_json(cfg.at("action"), Confinement::required);
    const auto grid = parse_grid(cfg.at("grid"), action.dimension());
    if (cfg.contains("T") == cfg.contains("T_list")) throw InputError("fit config needs exactly one of T and T_list");
    const auto times = parse_times(cfg.contains("T") ? cfg.at("T") : cfg.at("T_list"));
    const bool flow = cfg.contains("T_list");
    if (flow && times.size() < 2) throw InputError("T_list needs at least two times");
    if (!cfg.contains("pairs")) throw InputError("fit config needs a pair list");
    const auto pairs = parse_pairs(cfg.at("pairs"), action.dimension());
    const auto ansatz = cfg.contains("ansatz") ? parse_ansatz(cfg.at("ansatz"), action)
                                               : Ansatz::from_potential(action.potential(), true);
    FitOptions opts;
    if (cfg.contains("optimizer")) opts.optimizer = parse_optimizer(cfg.at("optimizer"));
    if (cfg.contains("start")) opts.start = action_from_json(cfg.at("start"));
    const int time_nodes = cfg.value("time_nodes", 0);
    if (time_nodes != 0 && time_nodes < 33) throw InputError("time_nodes must be 0 (automatic) or at least 33");
    require_writable(ctx.out);

    const SpectralPropagator prop(action, grid, *std::min_element(times.begin(), times.end()));
    std::vector<FitResult> results;
    std::optional<FitProblem> last;
    for (double T : times) {
        auto problem = make_fit_problem(action, prop, T, pairs, ansatz, ctx.workers);
        problem.time_nodes = time_nodes;
        auto r = fit_quantum_action(problem, opts);
        if (flow) opts.start = r.quantum;
        results.push_back(std::move(r));
        last = std::move(problem);
    }
    const auto& final_fit = results.back();
    OutputSet out(ctx.out);
    out.add("fit.json", dump_json(fit_result_to_json(final_fit)));
    out.add(table_name(ctx, "residuals"), render(fit_residual_table(*last, final_fit), ctx.format));
    if (flow) {
        out.add(table_name(ctx, "flow"), render(flow_table(results), ctx.format));
        json all = json::array();
        for (const auto& r : results) all.push_back(fit_result_to_json(r));
        out.add("fit_flow.json", dump_json(all));
    }
    for (const auto& r : results)
        if (!r.converged)
            std::cerr << "warning: fit at T=" << r.T << " did not reach the simplex tolerance\n";
    out.commit();
    return ok;
}

int cmd_analytic(const json& cfg, const RunContext& ctx) {
    allow_keys(cfg, {"action", "grid", "energy", "quantum_fit", "hydrogen"}, "analytic config");
    if (!cfg.contains("action") && !cfg.contains("hydrogen"))
        throw InputError("analytic config needs an action, a hydrogen block, or both");
    std::optional<ActionSpec> action;
    std::optional<Grid> grid;
    std::optional<FitResult> fitted;
    if (cfg.contains("action")) {
        action = action_from_json(cfg.at("action"), Confinement::required);
        if (action->dimension() != 1) throw InputError("analytic command works on 1-D actions");
        grid = parse_grid(cfg.at("grid"), 1);
        if (grid->points() % 2 == 0) throw InputError("analytic grid needs an odd number of points");
        if (cfg.contains("quantum_fit"))
            fitted = fit_result_from_json(read_config(resolve(ctx, cfg.at("quantum_fit").get<std::string>())));
    } else if (cfg.contains("quantum_fit") || cfg.contains("grid") || cfg.contains("energy")) {
        throw InputError("grid, energy and quantum_fit need an action");
    }
    int l_max = 0;
    HydrogenUnits units;
    if (cfg.contains("hydrogen")) {
        const auto& h = cfg.at("hydrogen");
        allow_keys(h, {"l_max", "hbar", "mass", "charge_squared"}, "hydrogen");
        l_max = h.at("l_max").get<int>();
        units.hbar = h.value("hbar", units.hbar);
        units.mass = h.value("mass", units.mass);
        units.charge_squared = h.value("charge_squared", units.charge_squared);
        if (l_max < 1) throw InputError("hydrogen.l_max must be at least 1");
    }
    require_writable(ctx.out);

    OutputSet out(ctx.out);
    if (action) {
        const auto spectral = spectral_ground_state(*action, *grid);
        const double e_in = cfg.contains("energy") ? cfg.at("energy").get<double>() : spectral.energy;
        const auto profile = invert_transformation_law(*action, e_in, *grid);
        const auto psi = ground_state_from_profile(profile, action->hbar());
        const auto residual = transformation_law_residual(*action, profile.energy, profile);

        Table gs({"x", "psi", "psi_spectral"});
        for (int i = 0; i < grid->points(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            gs.row({grid->coordinate(i), psi.wavefunction[k], spectral.wavefunction[k]});
        }
        std::vector<std::string> cols{"x", "U", "residual"};
        if (fitted) cols.push_back("residual_fit");
        Table law(cols);
        const double x_star = fitted ? detail::quantum_minimum(fitted->quantum).position[0] : 0.0;
        for (int i = 0; i < grid->points(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double x = grid->coordinate(i);
            std::vector<double> row{x, profile.u[k], residual[k]};
            if (fitted) {
                // singular at the quantum-potential minimum
                row.push_back(std::abs(x - x_star) < 0.5 * grid->spacing()
                                  ? 0.0
                                  : transformation_law_residual(*action, profile.energy, fitted->quantum, x));
            }
            law.row(std::move(row));
        }
        auto report = wkb_report_to_json(wkb_compare(*action, profile, *grid));
        report["matching_error"] = profile.matching_error;
        report["requested_energy"] = e_in;
        if (fitted) {
            const auto q = wkb_compare(*action, fitted->quantum, profile.energy, *grid);
            report["quantum_action_wkb_distance"] = q.quantum_distance;
        }
        out.add(table_name(ctx, "ground_state"), render(gs, ctx.format));
        out.add(table_name(ctx, "transformation_law"), render(law, ctx.format));
        out.add("wkb.json", dump_json(report));
    }
    if (l_max > 0) {
        std::vector<HydrogenSector> rows;
        for (int l = 1; l <= l_max; ++l) rows.push_back(hydrogen_sector(l, units));
        out.add(table_name(ctx, "hydrogen"), render(hydrogen_table(rows), ctx.format));
    }
    out.commit();
    return ok;
}

int cmd_poincare(const json& cfg, const RunContext& ctx) {
    allow_keys(cfg, {"action", "section", "boxes", "quantum_fit", "energy_scan"}, "poincare config");
    const auto action = action_from_json(cfg.at("action"), Confinement::required);
    if (action.dimension() != 2) throw InputError("poincare command needs a 2-D action");
    const auto& sj = cfg.at("section");
    auto spec = parse_section(sj);
    const int orbits = sj.value("orbits", 24);
    const auto seed = sj.value("seed", std::uint64_t{1});
    if (orbits < 1) throw InputError("section.orbits must be positive");
    int nq = 64, np = 64;
    if (cfg.contains("boxes")) {
        const auto& b = cfg.at("boxes");
        if (!b.is_array() || b.size() != 2) throw InputError("boxes must be [nq, np]");
        nq = b[0].get<int>();
        np = b[1].get<int>();
        if (nq < 1 || np < 1) throw InputError("box counts must be positive");
    }
    std::optional<FitResult> fitted;
    if (cfg.contains("quantum_fit"))
        fitted = fit_result_from_json(read_config(resolve(ctx, cfg.at("quantum_fit").get<std::string>())));
    if (fitted && fitted->quantum.dimension() != 2) throw InputError("quantum_fit must hold a 2-D action");
    std::vector<double> scan;
    if (cfg.contains("energy_scan")) scan = parse_times(cfg.at("energy_scan"));
    require_writable(ctx.out);

    auto section_for = [&](const ActionSpec& a, SectionSpec s) {
        s.initial_conditions = shell_initial_conditions(a, s, orbits, seed);
        return generate_section(a, s, ctx.workers);
    };
    OutputSet out(ctx.out);
    const auto classical = section_for(action, spec);
    const auto sec_name = [&](const std::string& stem) {
        return ctx.format == TableFormat::json ? stem + ".json" : stem + ".csv";
    };
    out.add(sec_name("section_classical"), render(section_table(classical), ctx.format));
    if (ctx.gnuplot) out.add("section_classical.dat", render(section_table(classical), TableFormat::gnuplot));

    json report;
    if (fitted) {
        const auto quantum = section_for(fitted->quantum, spec);
        out.add(sec_name("section_quantum"), render(section_table(quantum), ctx.format));
        if (ctx.gnuplot) out.add("section_quantum.dat", render(section_table(quantum), TableFormat::gnuplot));
        report = comparison_to_json(compare_sections(classical, quantum, nq, np));
    } else {
        const auto th = thickness_stats(classical);
        report = {{"occupancy_classical", section_occupancy(classical, nq, np)},
                  {"occupied_classical", section_occupied_boxes(classical, nq, np)},
                  {"thickness_classical", {{"median", th.median}, {"max", th.max}, {"orbits", th.orbits}}}};
    }
    report["energy"] = spec.energy;
    report["reference"] = spec.reference == EnergyReference::absolute ? "absolute" : "above_minimum";
    report["absolute_energy_classical"] = classical.energy;
    report["boxes"] = {nq, np};
    report["orbits"] = orbits;
    out.add("comparison.json", dump_json(report));

    if (!scan.empty()) {
        std::vector<std::string> cols{"E", "occupancy_classical"};
        if (fitted) cols.push_back("occupancy_quantum");
        Table occ(cols);
        for (double e : scan) {
            auto s = spec;
            s.energy = e;
            const auto c = section_for(action, s);
            std::vector<double> row{e, 0.0};
            if (fitted) {
                const auto cmp = compare_sections(c, section_for(fitted->quantum, s), nq, np);
                row[1] = cmp.occupancy_first;
                row.push_back(cmp.occupancy_second);
            } else {
                row[1] = section_occupancy(c, nq, np);
            }
            occ.row(std::move(row));
        }
        out.add(table_name(ctx, "occupancy_scan"), render(occ, ctx.format));
    }
    out.commit();
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum-action toolkit: Euclidean propagators, quantum-action fits, asymptotics, Poincare sections"};
    app.require_subcommand(1);
    std::string config, out_dir, format = "csv";
    unsigned workers = 0;
    bool gnuplot = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_option("--workers", workers, "Worker threads (0 = all cores)");
        sub->add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "json"}));
    };
    auto* propagate = app.add_subcommand("propagate", "Euclidean transition amplitudes and spectrum");
    auto* fit = app.add_subcommand("fit", "Fit a quantum action to propagator data");
    auto* analytic = app.add_subcommand("analytic", "Transformation law, WKB comparison and hydrogen table");
    auto* poincare = app.add_subcommand("poincare", "Classical and quantum Poincare sections");
    for (auto* s : {propagate, fit, analytic, poincare}) add_common(s);
    poincare->add_flag("--gnuplot", gnuplot, "Also write gnuplot block files for the sections");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    try {
        RunContext ctx;
        ctx.config_dir = fs::absolute(config).parent_path();
        ctx.out = out_dir;
        ctx.workers = workers;
        ctx.format = format == "json" ? TableFormat::json : TableFormat::csv;
        ctx.gnuplot = gnuplot;
        const auto cfg = read_config(config);
        if (propagate->parsed()) return cmd_propagate(cfg, ctx);
        if (fit->parsed()) return cmd_fit(cfg, ctx);
        if (analytic->parsed()) return cmd_analytic(cfg, ctx);
        return cmd_poincare(cfg, ctx);
    } catch (const InputError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const DomainError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return numerical_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return numerical_error;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return numerical_error;
    }
}
