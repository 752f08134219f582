// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.
#include "qaction/qaction.hpp"

#include <boost/rational.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;
using namespace qaction;

namespace {

// pinned tolerances and budgets
constexpr double kernel_rel_tol = 1e-4;
constexpr double origin_value = 0.36800;
constexpr double origin_tol = 1e-5;
constexpr double ho_fit_tol = 1e-3;
constexpr double short_time_rel_tol = 0.02;
constexpr double inversion_tol = 1e-8;
constexpr double overlap_tol = 1e-6;
constexpr double fitted_law_tol = 1e-2;
constexpr double wkb_exact_tol = 1e-6;
constexpr double scale_kernel_tol = 1e-6;
constexpr double scale_fit_tol = 1e-4;
constexpr double ellipse_tol = 1e-6;
constexpr double drift_tol = 1e-8;

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Report {
public:
    void run(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = s < budget_s;
        const bool pass = o.pass && in_time;
        failures_ += pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.1fs of %.0fs%s]\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), s,
                    budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    int failures() const noexcept { return failures_; }

private:
    int failures_ = 0;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ActionSpec harmonic() { return ActionSpec(PolynomialPotential::one_d({{2, 0.5}})); }
ActionSpec quartic() { return ActionSpec(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}})); }
ActionSpec model(double v22) {
    return ActionSpec(PolynomialPotential(2, {{{2, 0}, 0.5}, {{0, 2}, 0.5}, {{2, 2}, v22}}));
}

double ho_kernel(double xi, double xf, double T) {
    return ho_exact_propagator(1.0, 1.0, 1.0, xi, xf, T, TimeKind::euclidean).real();
}

Outcome c1() {
    const SpectralPropagator prop(harmonic(), Grid(8.0, 16001), 0.5);
    const auto pairs = tensor_pairs(1, -2.0, 2.0, 9);
    double worst = 0.0;
    for (double T : {0.5, 1.0, 2.0, 4.0})
        for (const auto& p : pairs) {
            const double exact = ho_kernel(p.initial[0], p.final[0], T);
            worst = std::max(worst, std::abs(prop.evaluate(p, T)[0] - exact) / exact);
        }
    const double g0 = prop.evaluate(BoundaryPair::one_d(0, 0), 1.0)[0];
    return {worst < kernel_rel_tol && std::abs(g0 - origin_value) < origin_tol,
            fmt("max rel err %.2e over 81 pairs x 4 T; G(0,0;1) = %.7f", worst, g0)};
}

Outcome c2() {
    const SpectralPropagator prop(harmonic(), Grid(8.0, 4001), 8.0);
    const auto problem = make_fit_problem(harmonic(), prop, 8.0, tensor_pairs(1, -2, 2, 11),
                                          Ansatz::from_potential(harmonic().potential()));
    const auto r = fit_quantum_action(problem);
    const double dm = std::abs(r.quantum.mass() - 1), d2 = std::abs(r.coefficient({2, 0}) - 0.5),
                 d0 = std::abs(r.coefficient({0, 0}) - 0.5);
    return {dm < ho_fit_tol && d2 < ho_fit_tol && d0 < ho_fit_tol,
            fmt("m=%.7f v2=%.7f v0=%.7f rms=%.1e", r.quantum.mass(), r.coefficient({2, 0}), r.coefficient({0, 0}),
                r.rms_residual)};
}

Outcome c3() {
    const double T = 0.05;
    const SpectralPropagator prop(quartic(), Grid(4.0, 1601), T);
    std::vector<BoundaryPair> pairs;
    for (int i = 0; i < 11; ++i)
        for (double d : {-0.2, -0.1, 0.0, 0.1, 0.2}) pairs.push_back(BoundaryPair::one_d(-2 + 0.4 * i, -2 + 0.4 * i + d));
    auto problem = make_fit_problem(quartic(), prop, T, pairs, Ansatz::from_potential(quartic().potential()));
    problem.time_nodes = 33;
    const auto r = fit_quantum_action(problem);
    const double em = std::abs(r.quantum.mass() - 1), e2 = std::abs(r.coefficient({2, 0}) / 0.5 - 1),
                 e4 = std::abs(r.coefficient({4, 0}) / 0.1 - 1);
    return {std::max({em, e2, e4}) < short_time_rel_tol,
            fmt("rel dev m %.2e, v2 %.2e, v4 %.2e", em, e2, e4)};
}

Outcome c4() {
    const Grid g(8.0, 6401);
    const auto p = invert_transformation_law(harmonic(), 0.5, g);
    double u_err = 0.0;
    for (int i = 0; i < g.points(); ++i) u_err = std::max(u_err, std::abs(p.u[static_cast<std::size_t>(i)] - g.coordinate(i) * g.coordinate(i)));

    const Grid gq(6.0, 4801);
    const auto spec = spectral_ground_state(quartic(), gq);
    const auto pq = invert_transformation_law(quartic(), spec.energy, gq);
    const double ov = overlap(ground_state_from_profile(pq).wavefunction, spec.wavefunction, gq.spacing());

    const SpectralPropagator prop(quartic(), Grid(6.0, 2401), 10.0);
    Ansatz ansatz;
    ansatz.terms = {{{{2, 0}}}, {{{4, 0}}}, {{{6, 0}}}};
    const auto fit = fit_quantum_action(make_fit_problem(quartic(), prop, 10.0, tensor_pairs(1, -2, 2, 9), ansatz));
    double law = 0.0;
    for (int i = 0; i <= 180; ++i) {
        const double x = 0.2 + 1.8 * i / 180.0;
        for (double s : {-1.0, 1.0})
            law = std::max(law, std::abs(transformation_law_residual(quartic(), spec.energy, fit.quantum, s * x)));
    }
    return {u_err < inversion_tol && ov >= 1 - overlap_tol && law < fitted_law_tol,
            fmt("HO |U-x^2| %.1e; quartic overlap 1-%.1e; fitted-action law residual %.2e", u_err, 1 - ov, law)};
}

Outcome c5() {
    const Grid g(8.0, 6401);
    const auto ho = wkb_compare(harmonic(), ActionSpec(PolynomialPotential::one_d({{0, 0.5}, {2, 0.5}})), 0.5, g);
    bool beats = ho.classical_distance > ho.quantum_distance;
    std::string others;
    const Grid gq(6.0, 4801);
    for (const auto& a : {quartic(), ActionSpec(PolynomialPotential::one_d({{2, 1.0}, {4, 0.5}, {6, 0.05}}))}) {
        const auto p = invert_transformation_law(a, spectral_ground_state(a, gq).energy, gq);
        const auto r = wkb_compare(a, p, gq);
        beats = beats && r.classical_distance > r.quantum_distance;
        others += fmt("; %.1e vs %.1e", r.quantum_distance, r.classical_distance);
    }
    return {ho.quantum_distance < wkb_exact_tol && beats,
            fmt("HO quantum %.1e vs classical %.1e", ho.quantum_distance, ho.classical_distance) + others};
}

Outcome c6() {
    using R = boost::rational<long long>;
    bool all = true;
    for (int l = 1; l <= 10; ++l) {
        all = all && hydrogen_identities_exact<long long>(l);
        // independent recomputation in atomic units
        const R mu(l * l, 2), nu(l, l + 1);
        all = all && (-nu * nu / (R(4) * mu) == -R(1, 2) / R((l + 1) * (l + 1)));
        all = all && (R(2) * mu / nu == R(l * (l + 1)));
    }
    return {all, "l = 1..10 exact rational identities"};
}

Outcome c7() {
    double kernel_dev = 0.0;
    for (double alpha : {0.5, 2.0}) {
        const auto [a, Ta] = apply_scale_transform(harmonic(), 2.0, ScaleTransform(alpha));
        const SpectralPropagator base(harmonic(), Grid(6.0, 801), 2.0), scaled(a, Grid(6.0, 801), Ta);
        for (const auto& p : tensor_pairs(1, -1.5, 1.5, 5)) {
            const double g0 = base.evaluate(p, 2.0)[0];
            kernel_dev = std::max(kernel_dev, std::abs(scaled.evaluate(p, Ta)[0] - g0) / g0);
        }
    }
    const SpectralPropagator p0(harmonic(), Grid(8.0, 4001), 2.0);
    const auto fit0 = fit_quantum_action(make_fit_problem(harmonic(), p0, 2.0, tensor_pairs(1, -2, 2, 7),
                                                          Ansatz::from_potential(harmonic().potential())));
    double fit_dev = 0.0;
    for (double alpha : {0.5, 2.0}) {
        const ScaleTransform s(alpha);
        const auto [a, Ta] = apply_scale_transform(harmonic(), 2.0, s);
        const SpectralPropagator pa(a, Grid(8.0, 4001), Ta);
        const auto r = fit_quantum_action(
            make_fit_problem(a, pa, Ta, tensor_pairs(1, -2, 2, 7), Ansatz::from_potential(a.potential())));
        const auto [expect, Te] = apply_scale_transform(fit0.quantum, 2.0, s);
        (void)Te;
        fit_dev = std::max({fit_dev, std::abs(r.quantum.mass() / expect.mass() - 1),
                            std::abs(r.coefficient({2, 0}) / expect.potential().coefficient({2, 0}) - 1),
                            std::abs(r.coefficient({0, 0}) / expect.potential().coefficient({0, 0}) - 1)});
    }
    return {kernel_dev < scale_kernel_tol && fit_dev < scale_fit_tol,
            fmt("kernel rel dev %.1e; fit rel dev %.1e", kernel_dev, fit_dev)};
}

Outcome c8() {
    // (i) uncoupled ellipses
    const auto free = model(0.0);
    SectionSpec s;
    s.energy = 1.0;
    s.max_crossings = 100;
    s.initial_conditions = shell_initial_conditions(free, s, 16);
    const auto sec0 = generate_section(free, s);
    double ellipse = 0.0;
    for (int id = 0; id < sec0.orbit_count(); ++id) {
        const auto& ic = s.initial_conditions[static_cast<std::size_t>(id)];
        const double ex = 0.5 * (ic.momentum[0] * ic.momentum[0] + ic.position[0] * ic.position[0]);
        for (const auto& p : sec0.orbit(id)) ellipse = std::max(ellipse, std::abs(0.5 * (p.p * p.p + p.q * p.q) - ex));
    }

    // (ii) occupancy from low to high energy at equal point counts
    const auto coupled = model(0.05);
    auto occ = [&](double e) {
        SectionSpec t;
        t.energy = e;
        t.initial_conditions = shell_initial_conditions(coupled, t, 24);
        return section_occupancy(generate_section(coupled, t));
    };
    const double lo = occ(1.0), hi = occ(50.0);

    // (iii) quantum action on the 64 x 64 grid
    const SpectralPropagator prop(coupled, Grid::square(5.0, 64), 8.0);
    const auto fit = fit_quantum_action(
        make_fit_problem(coupled, prop, 8.0, tensor_pairs(2, -2, 2, 5), Ansatz::symmetric_quartic_2d()));

    // (iv) 10^7 symplectic steps
    PhaseState st{{2.0, 0.5}, {0.0, 0.0}};
    st.momentum[1] = std::sqrt(2 * (10.0 - hamiltonian(coupled, st)));
    const double e0 = hamiltonian(coupled, st);
    double drift = 0.0;
    integrate_realtime(coupled, st, 1e4, 1e-3, [&](std::size_t k, double, const PhaseState& x) {
        if (k % 100 == 0) drift = std::max(drift, std::abs(hamiltonian(coupled, x) - e0) / e0);
    });

    const bool pass = ellipse < ellipse_tol && hi > lo && fit.coefficient({2, 2}) < 0.05 && drift < drift_tol;
    return {pass, fmt("ellipse dev %.1e; occupancy %.3f -> %.3f; fitted m=%.4f v0=%.4f v2=%.4f v22=%.5f v4=%.5f "
                      "rms=%.1e converged=%d; drift %.1e over 1e7 steps",
                      ellipse, lo, hi, fit.quantum.mass(), fit.coefficient({0, 0}), fit.coefficient({2, 0}),
                      fit.coefficient({2, 2}), fit.coefficient({4, 0}), fit.rms_residual, int(fit.converged), drift)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome c9() {
    const fs::path dir = fs::temp_directory_path() / "qaction_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string ho = R"({"mass": 1.0, "hbar": 1.0, "potential": {"dim": 1, "terms": [{"exp": [2], "coef": 0.5}]}})";
    const std::string m2 = R"({"potential": {"dim": 2, "terms": [{"exp": [2, 0], "coef": 0.5}, {"exp": [0, 2], "coef": 0.5}, {"exp": [2, 2], "coef": 0.05}]}})";
    FitResult q;
    q.quantum = ActionSpec(PolynomialPotential(2, {{{0, 0}, 1.0}, {{2, 0}, 0.52}, {{0, 2}, 0.52}, {{2, 2}, 0.0496}}));
    q.T = 8.0;
    std::ofstream(dir / "q.json") << dump_json(fit_result_to_json(q));
    const std::vector<std::pair<std::string, std::string>> jobs{
        {"propagate", R"({"action": )" + ho + R"(, "grid": {"half_width": 8, "points": 2001}, "T": [0.5, 1], "pairs": {"lo": -2, "hi": 2, "count": 5}, "trajectories": [{"xi": 0, "xf": 1, "T": 1}]})"},
        {"fit", R"({"action": )" + ho + R"(, "grid": {"half_width": 8, "points": 2001}, "T_list": [2, 4], "pairs": {"lo": -2, "hi": 2, "count": 5}, "ansatz": {"terms": "classical"}})"},
        {"analytic", R"({"action": )" + ho + R"(, "grid": {"half_width": 8, "points": 1601}, "hydrogen": {"l_max": 10}})"},
        {"poincare", R"({"action": )" + m2 + R"(, "section": {"energy": 5, "orbits": 8, "max_crossings": 100}, "quantum_fit": "q.json", "energy_scan": [1, 10]})"}};
    int files = 0;
    std::string bad;
    for (const auto& [cmd, cfg] : jobs) {
        const auto path = dir / (cmd + ".json");
        std::ofstream(path) << cfg;
        for (const char* run : {"a", "b"}) {
            const std::string line = std::string(QACTION_CLI) + " " + cmd + " --config " + path.string() + " --out " +
                                     (dir / (cmd + run)).string() + (run[0] == 'a' ? " --workers 1" : " --workers 4") +
                                     (cmd == "poincare" ? " --gnuplot" : "");
            const int st = std::system(line.c_str());
            if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) return {false, cmd + " exited with failure"};
        }
        for (const auto& e : fs::directory_iterator(dir / (cmd + "a"))) {
            ++files;
            if (slurp(e.path()) != slurp(dir / (cmd + "b") / e.path().filename())) bad += " " + cmd + "/" + e.path().filename().string();
        }
    }
    fs::remove_all(dir);
    return {bad.empty() && files > 0, bad.empty() ? fmt("%d files identical across reruns and worker counts", files)
                                                  : "differs:" + bad};
}

} // namespace

int main() {
    Report r;
    r.run(1, "harmonic kernel", 10, c1);
    r.run(2, "exact representability", 300, c2);
    r.run(3, "short-time limit", 300, c3);
    r.run(4, "transformation law", 120, c4);
    r.run(5, "quantum-substituted WKB", 60, c5);
    r.run(6, "hydrogen sector", 1, c6);
    r.run(7, "scale symmetry", 600, c7);
    r.run(8, "chaos pipeline", 1800, c8);
    r.run(9, "determinism", 600, c9);
    std::printf("%d of 9 criteria failed\n", r.failures());
    return r.failures();
}
