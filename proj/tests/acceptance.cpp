// Acceptance suite: one PASS/FAIL line per criterion. Pipeline outputs are produced by
// the runner and every metric is recomputed here from the written CSV/JSON files.
#include "hetdim/cycle_solver.hpp"
#include "hetdim/local_map.hpp"
#include "hetdim/runner.hpp"
#include "hetdim/serialization.hpp"
#include "hetdim/tangency_forge.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hetdim;

namespace {

const fs::path kConfigDir = HETDIM_CONFIG_DIR;

struct Verdict {
    bool pass = false;
    std::string detail;
};

class Table {
public:
    explicit Table(const fs::path& path) {
        std::istringstream in(read_text_file(path));
        std::string line;
        std::getline(in, line);
        header_ = split(line);
        while (std::getline(in, line))
            if (!line.empty()) rows_.push_back(split(line));
    }
    [[nodiscard]] std::size_t size() const { return rows_.size(); }
    [[nodiscard]] double num(std::size_t row, const std::string& col) const { return std::stod(text(row, col)); }
    [[nodiscard]] const std::string& text(std::size_t row, const std::string& col) const {
        const auto it = std::find(header_.begin(), header_.end(), col);
        if (it == header_.end()) throw std::runtime_error("missing column " + col);
        return rows_.at(row).at(static_cast<std::size_t>(it - header_.begin()));
    }

private:
    static std::vector<std::string> split(const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct Runs {
    fs::path root;
    fs::path main, repeat, forge_negative, leaf;
};

fs::path run_config(const std::string& name, const fs::path& out) {
    RunOverrides o;
    o.output_dir = out;
    (void)run_experiments(load_config(kConfigDir / name), o);
    return out;
}

Verdict identities() {
    double worst = 0.0;
    for (const auto& nl : {Nonlinearity{}, Nonlinearity{NonlinearityKind::polynomial, 0.05}}) {
        const auto model = build_model(Multipliers{}, 3, nl, Vec::Constant(1, -1.0), true);
        const int n = 10;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int l = 0; l < n; ++l) {
                    const auto at = [n](int q) { return -1.0 + 2.0 * q / (n - 1); };
                    const double x = at(i), y = at(j), z = at(l);
                    const Vec wu = (Vec(3) << 0.0, y, 0.0).finished();
                    const Vec ws = (Vec(3) << x, 0.0, z).finished();
                    const Vec xy = (Vec(3) << x, y, 0.0).finished();
                    const Vec p = (Vec(3) << x, y, z).finished();
                    const Vec f_wu = model.nonlinear(wu), f_ws = model.nonlinear(ws), f_xy = model.nonlinear(xy);
                    const Mat j_wu = model.nonlinear_jacobian(wu), j_ws = model.nonlinear_jacobian(ws);
                    const double commute = (model.reflect(model.map(p)) - model.map(model.reflect(p))).cwiseAbs().maxCoeff();
                    worst = std::max({worst, std::abs(f_wu(0)), std::abs(f_wu(2)), std::abs(f_ws(1)), std::abs(f_ws(0)),
                                      std::abs(f_wu(1)), std::abs(j_wu(0, 0)), std::abs(j_wu(2, 0)),
                                      std::abs(j_ws(1, 1)), std::abs(f_xy(2)), std::abs(f_xy(0)), commute});
                }
    }
    return {worst < 1e-12, fmt::format("worst identity/commutation residual {:.3e} over 2 x 10^3 points", worst)};
}

Verdict cross_form() {
    double round_trip = 0.0, linear = 0.0;
    const std::vector<std::array<double, 3>> starts{{0.4, 0.2, 0.03}, {-0.3, -0.15, 0.2}, {0.1, 0.5, -0.2}};
    for (const auto& nl : {Nonlinearity{}, Nonlinearity{NonlinearityKind::polynomial, 0.05}}) {
        const auto model = build_model(Multipliers{}, 3, nl, Vec::Constant(1, -1.0), true);
        for (int k = 1; k <= 30; ++k)
            for (const auto& [x0, yk, z0] : starts) {
                const auto cf = solve_cross_form(model, x0, yk, Vec::Constant(1, z0), k);
                const auto orb = iterate_local(model, SplitVector(x0, cf.y_0, Vec::Constant(1, z0)), k);
                round_trip = std::max({round_trip, std::abs(orb.end(0) - cf.x_k), std::abs(orb.end(1) - yk),
                                       std::abs(orb.end(2) - cf.z_k(0))});
                if (!model.is_linear()) continue;
                const double xk = x0 * std::pow(0.55, k), y0 = yk * std::pow(2.2, -k), zk = z0 * std::pow(0.25, k);
                linear = std::max({linear, std::abs(cf.x_k - xk) / std::abs(xk), std::abs(cf.y_0 - y0) / std::abs(y0),
                                   std::abs(cf.z_k(0) - zk) / std::abs(zk)});
            }
    }
    return {round_trip < 1e-11 && linear < 1e-14,
            fmt::format("round trip {:.3e} (k <= 30, both tiers), linear relative error {:.3e}", round_trip, linear)};
}

Verdict forge_asymptotics(const Runs& runs) {
    std::string detail;
    bool ok = true;
    for (const auto& [dir, config] : {std::pair{runs.main, "acceptance.json"}, std::pair{runs.forge_negative, "forge_cdx_negative.json"}}) {
        const auto cfg = load_config(kConfigDir / config);
        const auto& co = cfg.coeffs;
        const bool positive = co.c * co.d * co.x_plus > 0.0;
        const Table t(dir / "forge_tangency.csv");
        std::map<int, std::vector<std::pair<int, double>>> by_branch;
        for (std::size_t r = 0; r < t.size(); ++r) {
            const int k = static_cast<int>(t.num(r, "k"));
            const double ref = positive ? -co.c * co.x_plus * std::pow(cfg.model.multipliers.lambda, k)
                                        : co.y_minus * std::pow(cfg.model.multipliers.gamma, -k);
            by_branch[static_cast<int>(t.num(r, "branch"))].emplace_back(k, std::abs(t.num(r, "mu_k") / ref - 1.0));
        }
        for (auto& [branch, devs] : by_branch) {
            std::sort(devs.begin(), devs.end());
            bool dec = devs.size() >= 7;
            for (std::size_t i = 1; i < devs.size(); ++i) dec = dec && devs[i].second < devs[i - 1].second;
            const bool first = devs.front().first == 12 && devs.front().second < 0.2;
            ok = ok && dec && first && devs.back().first == 24;
            detail += fmt::format("{}cdx{} branch {}: dev(12)={:.4f} dev(24)={:.2e}{}", detail.empty() ? "" : "; ",
                                  positive ? ">0" : "<0", branch, devs.front().second, devs.back().second,
                                  dec ? "" : " not decreasing");
        }
    }
    return {ok, detail};
}

Verdict branch_signs(const Runs& runs) {
    bool ok = true;
    int compared = 0;
    for (const auto& [dir, config] : {std::pair{runs.main, "acceptance.json"}, std::pair{runs.forge_negative, "forge_cdx_negative.json"}}) {
        const auto cfg = load_config(kConfigDir / config);
        const Table t(dir / "forge_tangency.csv");
        std::map<int, std::map<int, int>> signs;
        for (std::size_t r = 0; r < t.size(); ++r) {
            const int branch = static_cast<int>(t.num(r, "branch"));
            const int sign = static_cast<int>(t.num(r, "c_sign"));
            signs[static_cast<int>(t.num(r, "k"))][branch] = sign;
            ok = ok && sign == predicted_c_sign(cfg.coeffs, branch);
            ++compared;
        }
        for (const auto& [k, s] : signs) ok = ok && s.size() == 2 && s.at(1) == -s.at(2);
        ok = ok && signs.size() == cfg.forge_ks.size();
    }
    return {ok, fmt::format("{} branches compared with the closed-form sign, both c d x+ cases", compared)};
}

Verdict index_criterion(const Runs& runs) {
    const Table t(runs.main / "period2_sweep.csv");
    int agree = 0, reductions = 0;
    double worst_trace = 0.0, worst_det = 0.0;
    std::set<double> targets;
    for (std::size_t r = 0; r < t.size(); ++r) {
        targets.insert(t.num(r, "s_target"));
        const bool inside = std::abs(t.num(r, "s_formula")) < 1.0;
        if (inside == (static_cast<int>(t.num(r, "index")) == 2)) ++agree;
        if (t.num(r, "k") >= 16 && t.num(r, "m") >= 16) {
            ++reductions;
            const double trp = t.num(r, "trace_predicted"), detp = t.num(r, "det_predicted");
            worst_trace = std::max(worst_trace, std::abs(t.num(r, "trace_measured") - trp) /
                                                    std::max(std::abs(trp), std::abs(detp + 1.0)));
            worst_det = std::max(worst_det, std::abs(t.num(r, "det_measured") / detp - 1.0));
        }
    }
    const bool ok = t.size() >= 50 && agree == static_cast<int>(t.size()) && targets == std::set<double>{-0.9, 0.0, 0.9} &&
                    reductions > 0 && worst_trace < 0.1 && worst_det < 0.1;
    return {ok, fmt::format("{}/{} orbits agree; k,m >= 16 ({} orbits): trace err {:.2e}, det err {:.2e}", agree,
                            t.size(), reductions, worst_trace, worst_det)};
}

Verdict cone_battery(const Runs& runs) {
    const Table t(runs.main / "cone_battery.csv");
    const Table sweep(runs.main / "period2_sweep.csv");
    double cu = 0.0, s = 0.0, comp = 0.0, b = 0.0;
    for (std::size_t r = 0; r < t.size(); ++r) {
        cu = std::max(cu, t.num(r, "cu_contraction"));
        s = std::max(s, t.num(r, "s_contraction"));
        comp = std::max(comp, t.num(r, "complementarity_error"));
        b = std::max(b, t.num(r, "bound_B"));
    }
    const bool ok = t.size() == sweep.size() && cu < 1.0 && s < 1.0 && comp < 1e-8 && b <= 10.0;
    return {ok, fmt::format("{} orbits: max contraction cu {:.2e} s {:.2e}, spectrum error {:.2e}, B = {:.3e}", t.size(),
                            cu, s, comp, b)};
}

double log_slope(const std::vector<double>& k, const std::vector<double>& v) {
    const double n = static_cast<double>(k.size());
    double sk = 0, sy = 0, skk = 0, sky = 0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double y = std::log(v[i]);
        sk += k[i];
        sy += y;
        skk += k[i] * k[i];
        sky += k[i] * y;
    }
    return (n * sky - sk * sy) / (n * skk - sk * sk);
}

Verdict leaf_exponents(const Runs& runs) {
    const auto cfg = load_config(kConfigDir / "leaf_fit.json");
    const auto& mu = cfg.model.multipliers;
    const Table t(runs.leaf / "leaf_fit.csv");
    std::vector<double> k, p1, p2;
    for (std::size_t r = 0; r < t.size(); ++r) {
        k.push_back(t.num(r, "k"));
        p1.push_back(t.num(r, "phi1_max"));
        p2.push_back(t.num(r, "phi2_max"));
    }
    const double ref1 = std::log(mu.lambda0 / std::abs(mu.lambda));
    const double ref2 = std::log(std::abs(mu.lambda_hat) / std::abs(mu.gamma));
    const double s1 = log_slope(k, p1), s2 = log_slope(k, p2);
    const double e1 = std::abs(s1 / ref1 - 1.0), e2 = std::abs(s2 / ref2 - 1.0);
    const bool ok = k.front() == 8 && k.back() == 20 && e1 < 0.1 && e2 < 0.1;
    return {ok, fmt::format("phi1 slope {:.4f} vs {:.4f} ({:.1f}%), phi2 slope {:.4f} vs {:.4f} ({:.1f}%)", s1, ref1,
                            100 * e1, s2, ref2, 100 * e2)};
}

Verdict symmetric_certificates(const Runs& runs) {
    const auto cfg = load_config(kConfigDir / "acceptance.json");
    const Table t(runs.main / "hetdim_symmetric.csv");
    bool ok = t.size() == cfg.schedule.size() && t.size() >= 3;
    double residual = 0.0, gap = 0.0, area = 0.0, last_mu = INFINITY, product_error = 0.0;
    int replayed = 0;
    for (std::size_t r = 0; r < t.size(); ++r) {
        const int k = static_cast<int>(t.num(r, "k")), m = static_cast<int>(t.num(r, "m"));
        const auto doc = read_json_file(runs.main / "certificates" / fmt::format("cycle_k{}_m{}.json", k, m));
        int outside = 0;
        for (const auto& z : doc.at("index_evidence")) {
            const double modulus = std::hypot(z[0].get<double>(), z[1].get<double>());
            ok = ok && std::abs(modulus - 1.0) > kIndexAmbiguity;
            if (modulus > 1.0) ++outside;
        }
        ok = ok && outside == 2;
        if (replay_certificate(doc).pass) ++replayed;
        residual = std::max({residual, t.num(r, "leg_residual"), t.num(r, "closure_residual"), t.num(r, "joint_residual")});
        gap = std::max(gap, std::abs(t.num(r, "gap")));
        ok = ok && t.num(r, "transverse_iterations") <= t.num(r, "transverse_bound");
        area = std::max(area, std::abs(t.num(r, "area_factor") / t.num(r, "predicted_area_factor") - 1.0));
        const double mu = std::abs(t.num(r, "mu"));
        ok = ok && mu < last_mu;
        last_mu = mu;
        if (r + 1 == t.size()) {
            const auto& co = cfg.coeffs;
            const double product = std::pow(cfg.model.multipliers.lambda, k) * std::pow(t.num(r, "gamma"), m);
            product_error = std::abs(product / (2.0 * co.y_minus / (co.c * co.x_plus)) - 1.0);
        }
    }
    ok = ok && replayed == static_cast<int>(t.size()) && residual < 1e-10 && gap < 1e-8 && area <= 0.15 &&
         product_error < 0.05;
    return {ok, fmt::format("{} certificates ({} replayed), residual {:.2e}, gap {:.2e}, product error {:.2e} at "
                            "largest k, area error {:.2e}",
                            t.size(), replayed, residual, gap, product_error, area)};
}

Verdict general_cross_check(const Runs& runs) {
    const Table sym(runs.main / "hetdim_symmetric.csv");
    const Table gen(runs.main / "hetdim_general.csv");
    bool ok = sym.size() == gen.size() && gen.size() > 0;
    double split = 0.0, dmu = 0.0, dtheta = 0.0;
    for (std::size_t r = 0; ok && r < gen.size(); ++r) {
        ok = sym.num(r, "k") == gen.num(r, "k") && sym.num(r, "m") == gen.num(r, "m");
        split = std::max(split, std::abs(gen.num(r, "mu") - gen.num(r, "mu2")));
        dmu = std::max(dmu, std::abs(gen.num(r, "mu") / sym.num(r, "mu") - 1.0));
        dtheta = std::max(dtheta, std::abs(gen.num(r, "theta") - sym.num(r, "theta")));
    }
    ok = ok && split < 1e-9 && dmu < 1e-9 && dtheta < 1e-10;
    return {ok, fmt::format("{} pairs: |mu1-mu2| {:.2e}, relative mu difference {:.2e}, theta difference {:.2e}",
                            gen.size(), split, dmu, dtheta)};
}

Verdict flow_checks(const Runs& runs) {
    const auto flow = read_json_file(runs.main / "flow_exponents.json");
    // Closed-form exponents at the origin of each flow.
    const double sigma = 10, rho = 28, b = 8.0 / 3.0;
    const double lorenz_beta = (-(sigma + 1) + std::sqrt((sigma + 1) * (sigma + 1) + 4 * sigma * (rho - 1))) / 2;
    const double lorenz_margin = -b + 2 * lorenz_beta / 3;
    const double ms_beta = (-1.0 + std::sqrt(5.0)) / 2, ms_strong = (-1.0 - std::sqrt(5.0)) / 2, ms_alpha = -0.5;
    const auto& lz = flow.at("lorenz").at("check");
    const auto& ms = flow.at("morioka_shimizu").at("check");
    bool ok = !lz.at("ok").get<bool>() && std::abs(lz.at("weak_margin").get<double>() - 5.219) < 1e-3 &&
              std::abs(lz.at("weak_margin").get<double>() - lorenz_margin) < 1e-12;
    ok = ok && ms.at("ok").get<bool>() && ms.at("strong_margin").get<double>() < 0.0 &&
         ms.at("weak_margin").get<double>() < 0.0 &&
         std::abs(ms.at("strong_margin").get<double>() - (ms_strong - 2 * ms_alpha)) < 1e-12 &&
         std::abs(ms.at("weak_margin").get<double>() - (ms_alpha + 2 * ms_beta / 3)) < 1e-12;

    const auto cfg = load_config(kConfigDir / "acceptance.json");
    const auto& abs = cfg.abs;
    double q = INFINITY;
    for (int i = 1; i <= 1000; ++i) {
        const double u = abs.half_width * i / 1000.0;
        q = std::min(q, abs.A * abs.rho * std::pow(u, abs.rho - 1.0));
    }
    const auto rep = read_json_file(runs.main / "abs_report.json");
    ok = ok && q > 1.0 && rep.at("orbits").get<int>() >= 10000 && rep.at("escapes").get<int>() == 0 &&
         rep.at("min_expansion").get<double>() > 1.0 && rep.at("max_image").get<double>() <= abs.half_width;
    const Table orbits(runs.main / "abs_orbits.csv");
    for (std::size_t r = 0; r < orbits.size(); ++r) ok = ok && std::abs(orbits.num(r, "u")) <= abs.half_width;
    return {ok, fmt::format("Lorenz margin {:.5f} (oracle {:.5f}), Morioka-Shimizu margins {:.6f} / {:.6f}, q = {:.3f}, "
                            "{} escapes in {} orbits",
                            lz.at("weak_margin").get<double>(), lorenz_margin, ms.at("strong_margin").get<double>(),
                            ms.at("weak_margin").get<double>(), q, rep.at("escapes").get<int>(),
                            rep.at("orbits").get<int>())};
}

std::string comparable(const fs::path& file) {
    if (file.filename() != "manifest.json") return read_text_file(file);
    auto j = read_json_file(file);
    j.erase("wall_time_seconds");
    return j.dump();
}

Verdict determinism(const Runs& runs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(runs.main))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), runs.main));
    std::sort(files.begin(), files.end());
    std::size_t repeat_count = 0;
    for (const auto& e : fs::recursive_directory_iterator(runs.repeat))
        if (e.is_regular_file()) ++repeat_count;
    bool ok = !files.empty() && repeat_count == files.size();
    std::string differing;
    for (const auto& f : files) {
        if (fs::exists(runs.repeat / f) && comparable(runs.main / f) == comparable(runs.repeat / f)) continue;
        ok = false;
        differing += " " + f.string();
    }
    return {ok, fmt::format("{} files compared (manifest wall time excluded){}", files.size(),
                            differing.empty() ? "" : "; differ:" + differing)};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    Runs runs;
    runs.root = fs::temp_directory_path() / fmt::format("hetdim_acceptance_{}", std::random_device{}());
    fs::create_directories(runs.root);
    try {
        runs.main = run_config("acceptance.json", runs.root / "first");
        runs.repeat = run_config("acceptance.json", runs.root / "second");
        runs.forge_negative = run_config("forge_cdx_negative.json", runs.root / "forge_negative");
        runs.leaf = run_config("leaf_fit.json", runs.root / "leaf");
    } catch (const std::exception& e) {
        fmt::print("FAIL setup: {}\n", e.what());
        return 1;
    }

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"normal-form identities", identities},
        {"cross-form fidelity", cross_form},
        {"secondary-tangency asymptotics", [&] { return forge_asymptotics(runs); }},
        {"branch-sign law", [&] { return branch_signs(runs); }},
        {"index-2 criterion", [&] { return index_criterion(runs); }},
        {"cone battery", [&] { return cone_battery(runs); }},
        {"leaf exponents", [&] { return leaf_exponents(runs); }},
        {"cycle certificates", [&] { return symmetric_certificates(runs); }},
        {"general-case cross-check", [&] { return general_cross_check(runs); }},
        {"flow-side checks", [&] { return flow_checks(runs); }},
        {"determinism", [&] { return determinism(runs); }},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        if (!v.pass) ++failures;
        fmt::print("{} {:2d} {}: {}\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail);
    }
    std::error_code ec;
    fs::remove_all(runs.root, ec);
    return failures == 0 ? 0 : 1;
}
