#pragma once

#include "qaction/asymptotics.hpp"
#include "qaction/chaos.hpp"
#include "qaction/error.hpp"
#include "qaction/propagator.hpp"
#include "qaction/qfit.hpp"
#include "qaction/spectral.hpp"
#include "qaction/trajectory.hpp"

#include <cstdio>
#include <nlohmann/json.hpp>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace qaction {

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Numeric table rendered as CSV, as a JSON array of row objects, or as a gnuplot block file.
/// `group` splits gnuplot output into blocks separated by blank lines.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<int> group;

    explicit Table(std::vector<std::string> cols) : columns(std::move(cols)) {}

    Table& row(std::vector<double> values, int g = 0) {
        if (values.size() != columns.size()) throw InputError("table row width does not match header");
        rows.push_back(std::move(values));
        group.push_back(g);
        return *this;
    }
};

enum class TableFormat { csv, json, gnuplot };

inline std::string render_csv(const Table& t, char sep = ',', bool blank_between_groups = false,
                              const std::string& header_prefix = "") {
    std::string out = header_prefix;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += sep;
        out += t.columns[i];
    }
    out += '\n';
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (blank_between_groups && r && t.group[r] != t.group[r - 1]) out += '\n';
        for (std::size_t i = 0; i < t.rows[r].size(); ++i) {
            if (i) out += sep;
            out += format_number(t.rows[r][i]);
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json table_to_json(const Table& t) {
    auto arr = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json o = nlohmann::json::object();
        for (std::size_t i = 0; i < r.size(); ++i) o[t.columns[i]] = r[i];
        arr.push_back(std::move(o));
    }
    return arr;
}

inline std::string render(const Table& t, TableFormat f) {
    switch (f) {
    case TableFormat::json: return table_to_json(t).dump(2) + "\n";
    case TableFormat::gnuplot: return render_csv(t, ' ', true, "# ");
    default: return render_csv(t);
    }
}

inline const char* extension(TableFormat f) {
    return f == TableFormat::json ? ".json" : f == TableFormat::gnuplot ? ".dat" : ".csv";
}

/// Files staged in memory and published together: each is written to a temporary sibling and
/// renamed into place only after every write succeeded. A failed rename removes the files
/// already published by this commit.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
    const std::vector<std::pair<std::string, std::string>>& files() const noexcept { return files_; }

    void commit() const {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw InputError("cannot create output directory " + dir_.string() + ": " + ec.message());
        std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
        auto discard = [&] {
            for (const auto& [tmp, _] : staged) std::filesystem::remove(tmp, ec);
        };
        for (const auto& [name, content] : files_) {
            const auto target = dir_ / name;
            auto tmp = target;
            tmp += ".tmp";
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (f) f.write(content.data(), static_cast<std::streamsize>(content.size()));
            f.close();
            staged.emplace_back(tmp, target);
            if (!f) {
                discard();
                throw InputError("cannot write " + target.string());
            }
        }
        for (std::size_t i = 0; i < staged.size(); ++i) {
            const auto& [tmp, target] = staged[i];
            std::filesystem::rename(tmp, target, ec);
            if (ec) {
                const std::string why = ec.message();
                for (std::size_t k = 0; k < i; ++k) std::filesystem::remove(staged[k].second, ec);
                discard();
                throw InputError("cannot publish " + target.string() + ": " + why);
            }
        }
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

inline Table propagator_table(const PropagatorTable& t) {
    const bool two = t.dimension() == 2;
    Table out(two ? std::vector<std::string>{"xi", "yi", "xf", "yf", "T", "G"}
                  : std::vector<std::string>{"xi", "xf", "T", "G"});
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto& p = t.pairs[i];
        if (two) out.row({p.initial[0], p.initial[1], p.final[0], p.final[1], t.T, t.amplitudes[i]});
        else out.row({p.initial[0], p.final[0], t.T, t.amplitudes[i]});
    }
    return out;
}

inline Table spectrum_table(const SpectralData& s) {
    Table out({"n", "E_n"});
    for (std::size_t n = 0; n < s.size(); ++n) out.row({static_cast<double>(n), s.eigenvalues[n]});
    return out;
}

/// Momenta are M v with velocities from the mesh stencil.
inline Table trajectory_table(const ActionSpec& a, const TrajectorySolution& sol) {
    const bool two = sol.dimension == 2;
    Table out(two ? std::vector<std::string>{"t", "x", "y", "px", "py"} : std::vector<std::string>{"t", "x", "px"});
    const auto v = detail::mesh_velocities(sol.path, sol.time_step());
    for (std::size_t k = 0; k < sol.nodes(); ++k) {
        if (two) {
            const double px = a.mass() * v[k][0] + a.kinetic_coupling() * v[k][1];
            const double py = a.mass() * v[k][1] + a.kinetic_coupling() * v[k][0];
            out.row({sol.times[k], sol.path[k][0], sol.path[k][1], px, py});
        } else {
            out.row({sol.times[k], sol.path[k][0], a.mass() * v[k][0]});
        }
    }
    return out;
}

inline Table flow_table(const std::vector<FitResult>& flow) {
    Table out({"T", "m", "v0", "v2", "v22", "v4", "rms"});
    for (const auto& r : flow)
        out.row({r.T, r.quantum.mass(), r.coefficient({0, 0}), r.coefficient({2, 0}), r.coefficient({2, 2}),
                 r.coefficient({4, 0}), r.rms_residual});
    return out;
}

inline Table fit_residual_table(const FitProblem& problem, const FitResult& r) {
    const bool two = problem.classical.dimension() == 2;
    Table out(two ? std::vector<std::string>{"xi", "yi", "xf", "yf", "residual"}
                  : std::vector<std::string>{"xi", "xf", "residual"});
    for (std::size_t i = 0; i < r.per_pair_residuals.size() && i < problem.pairs().size(); ++i) {
        const auto& p = problem.pairs()[i];
        if (two) out.row({p.initial[0], p.initial[1], p.final[0], p.final[1], r.per_pair_residuals[i]});
        else out.row({p.initial[0], p.final[0], r.per_pair_residuals[i]});
    }
    return out;
}

inline Table hydrogen_table(const std::vector<HydrogenSector>& rows) {
    Table out({"l", "mu", "nu", "E_l"});
    for (const auto& h : rows) out.row({static_cast<double>(h.l), h.mu, h.nu, h.energy});
    return out;
}

/// `orbit,x,px` for a y = const plane, `orbit,y,py` for x = const.
inline Table section_table(const PoincareSection& s) {
    const std::string q = s.spec.axis == 1 ? "x" : "y";
    Table out({"orbit", q, "p" + q});
    for (const auto& p : s.points) out.row({static_cast<double>(p.orbit), p.q, p.p}, p.orbit);
    return out;
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

} // namespace qaction
