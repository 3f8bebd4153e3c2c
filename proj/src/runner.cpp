#include "hetdim/runner.hpp"

#include "hetdim/cone_analysis.hpp"
#include "hetdim/cycle_solver.hpp"
#include "hetdim/numerics.hpp"
#include "hetdim/tangency_forge.hpp"

#include <Eigen/Core>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <thread>

namespace hetdim {

namespace {

constexpr double kForgeResidual = 1e-10;
constexpr double kAsymptoticStart = 0.2;
constexpr double kReductionTolerance = 0.1;
constexpr double kReductionMinStay = 16;
constexpr double kComplementarity = 1e-8;
constexpr double kGlobalB = 10.0;
constexpr double kLeafSlopeTolerance = 0.1;
constexpr double kProductTolerance = 0.05;
constexpr double kTieTolerance = 1e-9;
constexpr double kLorenzMargin = 5.21846;
constexpr double kLorenzMarginTolerance = 1e-3;

const std::map<std::string, Experiment>& experiment_names() {
    static const std::map<std::string, Experiment> names{
        {"forge_tangency", Experiment::forge_tangency}, {"period2_sweep", Experiment::period2_sweep},
        {"hetdim_symmetric", Experiment::hetdim_symmetric}, {"hetdim_general", Experiment::hetdim_general},
        {"cone_battery", Experiment::cone_battery}, {"leaf_fit", Experiment::leaf_fit},
        {"c3prime_scan", Experiment::c3prime_scan}, {"abs_orbits", Experiment::abs_orbits},
    };
    return names;
}

std::string join(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }

void expect_object(const Json& j, const std::string& ptr, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw InputError(ptr.empty() ? "/" : ptr, "expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw InputError(join(ptr, key), "unknown key");
}

double number_or(const Json& j, const std::string& key, double fallback, const std::string& ptr) {
    return j.contains(key) ? read_number(j.at(key), join(ptr, key)) : fallback;
}

int int_or(const Json& j, const std::string& key, int fallback, const std::string& ptr) {
    return j.contains(key) ? read_int(j.at(key), join(ptr, key)) : fallback;
}

std::vector<int> read_ints(const Json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty()) throw InputError(ptr, "expected a non-empty array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_int(j[i], join(ptr, std::to_string(i))));
    return out;
}

std::vector<double> read_numbers(const Json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty()) throw InputError(ptr, "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_number(j[i], join(ptr, std::to_string(i))));
    return out;
}

void require_even(const std::vector<int>& values, const std::string& ptr, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] % 2 != 0)
            throw InputError(join(ptr, std::to_string(i)), fmt::format("itinerary parity: {} must be even", what));
        if (values[i] <= 0) throw InputError(join(ptr, std::to_string(i)), fmt::format("{} must be positive", what));
    }
}

std::vector<ScheduleEntry> read_schedule(const Json& j, const std::string& ptr) {
    expect_object(j, ptr, {"k", "m", "theta_star"});
    if (!j.contains("k")) throw InputError(join(ptr, "k"), "missing required field");
    const auto ks = read_ints(j.at("k"), join(ptr, "k"));
    require_even(ks, join(ptr, "k"), "k");
    std::vector<int> ms;
    if (j.contains("m")) {
        if (j.contains("theta_star")) throw InputError(join(ptr, "theta_star"), "give either m or theta_star");
        ms = read_ints(j.at("m"), join(ptr, "m"));
        if (ms.size() != ks.size()) throw InputError(join(ptr, "m"), "needs one entry per k");
    } else if (j.contains("theta_star")) {
        const double theta = read_number(j.at("theta_star"), join(ptr, "theta_star"));
        if (!(theta > 0.0 && theta < 1.0)) throw InputError(join(ptr, "theta_star"), "must lie in (0, 1)");
        for (int k : ks) ms.push_back(2 * static_cast<int>(std::lround(theta * k / 2.0)));
    } else {
        throw InputError(join(ptr, "m"), "missing m (or theta_star)");
    }
    require_even(ms, join(ptr, "m"), "m");
    std::vector<ScheduleEntry> out;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] <= ms[i]) throw InputError(join(join(ptr, "k"), std::to_string(i)), "schedule: k must exceed m");
        out.push_back({ks[i], ms[i]});
    }
    return out;
}

// ---- work fan-out ----

template <typename T>
struct Outcome {
    std::optional<T> value;
    std::string error;
};

/// Runs fn(0..n-1) on up to `jobs` threads; results come back in index order.
template <typename T>
std::vector<Outcome<T>> fan_out(int jobs, std::size_t n, const std::function<T(std::size_t)>& fn) {
    std::vector<Outcome<T>> out(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i].value = fn(i);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    const auto threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    return out;
}

/// Every file goes through here, from the orchestrating thread only.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    void text(const std::string& rel, const std::string& content) {
        const auto path = root_ / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << content;
        written_.insert(rel);
        spdlog::debug("wrote {}", path.string());
    }
    void json(const std::string& rel, const Json& j) { text(rel, j.dump(2) + "\n"); }
    void csv(const std::string& rel, const CsvTable& t) { text(rel, t.str()); }

    [[nodiscard]] std::vector<std::string> written() const { return {written_.begin(), written_.end()}; }

private:
    std::filesystem::path root_;
    std::set<std::string> written_;
};

class CheckLog {
public:
    explicit CheckLog(std::string experiment) : experiment_(std::move(experiment)) {}

    /// Passes when value <= tolerance.
    void at_most(std::string name, double value, double tolerance) {
        add(std::move(name), value, tolerance, value <= tolerance);
    }
    void add(std::string name, double value, double tolerance, bool pass, std::string note = {}) {
        if (!pass) spdlog::warn("{}: {} failed (value {}, tolerance {})", experiment_, name, value, tolerance);
        checks_.push_back({experiment_, std::move(name), value, tolerance, pass, std::move(note)});
    }
    void failed_item(std::string item, const std::string& error) {
        spdlog::error("{}: {} failed: {}", experiment_, item, error);
        checks_.push_back({experiment_, std::move(item), std::nan(""), 0.0, false, error});
    }
    void merge(const std::vector<CertificateCheck>& cc, const std::string& prefix) {
        for (const auto& c : cc) add(prefix + " " + c.name, c.value, c.tolerance, c.pass);
    }
    [[nodiscard]] std::vector<SummaryCheck> take() { return std::move(checks_); }

private:
    std::string experiment_;
    std::vector<SummaryCheck> checks_;
};

std::string item_name(int k, int m) { return fmt::format("k={} m={}", k, m); }

// ---- experiments ----

struct Context {
    const ExperimentConfig& config;
    SaddleModel model;
    int jobs;
    ArtifactWriter& writer;
    std::map<int, CycleCertificate> symmetric_certs;  ///< by k, for the general cross-check
};

double asymptotic_reference(const SaddleModel& model, const GlobalMapCoeffs& k, int stay) {
    if (k.c * k.d * k.x_plus > 0.0) return -k.c * k.x_plus * std::pow(model.lambda(), stay);
    return k.y_minus * std::pow(model.gamma(), -stay);
}

void run_forge(Context& ctx, CheckLog& log) {
    const auto& ks = ctx.config.forge_ks;
    const auto& coeffs = ctx.config.coeffs;
    const auto results = fan_out<std::array<TangencyBranch, 2>>(
        ctx.jobs, ks.size(), [&](std::size_t i) { return solve_secondary_tangency(ctx.model, coeffs, ks[i]); });

    CsvTable table({"k", "branch", "mu_k", "X", "Y", "c_sign", "straddle_ok", "residual"});
    Json branches = Json::array();
    std::array<std::vector<double>, 2> deviation;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const auto& r = results[i];
        if (!r.value) {
            log.failed_item(fmt::format("k={}", ks[i]), r.error);
            continue;
        }
        const auto& pair = *r.value;
        const double ref = asymptotic_reference(ctx.model, coeffs, ks[i]);
        for (int b = 0; b < 2; ++b) {
            const auto& t = pair[b];
            table.row(cells(t.k, t.branch, t.mu_k, t.X, t.Y, t.c_sign, t.straddle_ok, t.residual));
            auto j = to_json(t);
            j["asymptotic_reference"] = ref;
            j["asymptotic_deviation"] = std::abs(t.mu_k / ref - 1.0);
            j["predicted_c_sign"] = predicted_c_sign(coeffs, t.branch);
            branches.push_back(std::move(j));
            deviation[b].push_back(std::abs(t.mu_k / ref - 1.0));
            log.at_most(fmt::format("k={} branch={} residual", t.k, t.branch), t.residual, kForgeResidual);
        }
        const int mismatches = (pair[0].c_sign != -pair[1].c_sign ? 1 : 0) +
                               (pair[0].c_sign != predicted_c_sign(coeffs, pair[0].branch) ? 1 : 0) +
                               (pair[1].c_sign != predicted_c_sign(coeffs, pair[1].branch) ? 1 : 0);
        log.add(fmt::format("k={} branch sign law", ks[i]), mismatches, 0, mismatches == 0);
    }
    for (int b = 0; b < 2; ++b) {
        const auto& dev = deviation[b];
        if (dev.empty()) continue;
        log.at_most(fmt::format("branch={} asymptotic deviation at first k", b + 1), dev.front(), kAsymptoticStart);
        int rises = 0;
        for (std::size_t i = 1; i < dev.size(); ++i) rises += dev[i] < dev[i - 1] ? 0 : 1;
        log.add(fmt::format("branch={} asymptotic deviation decreasing", b + 1), rises, 0, rises == 0);
    }
    ctx.writer.csv("forge_tangency.csv", table);
    ctx.writer.json("forge_tangency.json", Json{{"case", to_string(classify_case(coeffs))}, {"branches", branches}});
}

struct GridPoint {
    int k, m;
    double s_target;
};

std::vector<GridPoint> grid_points(const SweepGrid& g) {
    std::vector<GridPoint> out;
    for (int k : g.ks)
        for (int m : g.ks)
            if (k > m)
                for (double s : g.s_targets) out.push_back({k, m, s});
    return out;
}

std::string grid_name(const GridPoint& p) { return fmt::format("k={} m={} s={}", p.k, p.m, format_number(p.s_target)); }

struct SweepRow {
    TargetedOrbit solved;
    Index2Check check;
};

void run_period2_sweep(Context& ctx, CheckLog& log) {
    const auto points = grid_points(ctx.config.sweep);
    const auto& coeffs = ctx.config.coeffs;
    const auto results = fan_out<SweepRow>(ctx.jobs, points.size(), [&](std::size_t i) {
        const auto& p = points[i];
        auto solved = solve_period2_with_s(ctx.model, coeffs, p.k, p.m, p.s_target, ctx.config.sweep.branch);
        auto check = index2_criterion(ctx.model, solved.orbit, coeffs);
        return SweepRow{std::move(solved), check};
    });

    CsvTable table({"k", "m", "s_target", "mu", "eta1", "eta2", "s_formula", "s_measured", "index", "match",
                    "trace_measured", "trace_predicted", "det_measured", "det_predicted", "trace_error", "det_error"});
    int agreed = 0;
    int solved = 0;
    double worst_trace = 0.0;
    double worst_det = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto& r = results[i];
        if (!r.value) {
            log.failed_item(grid_name(p), r.error);
            continue;
        }
        const auto& [t, c] = *r.value;
        // The trace error is scaled by det + 1, the normalisation of s; the trace itself vanishes near s = 0.
        const double trace_error =
            std::abs(c.trace_measured - c.trace_predicted) / std::max(std::abs(c.trace_predicted), std::abs(c.det_predicted + 1.0));
        const double det_error = std::abs(c.det_measured / c.det_predicted - 1.0);
        table.row(cells(p.k, p.m, p.s_target, t.mu, t.orbit.eta1, t.orbit.eta2, c.s, c.s_measured, c.index, c.match,
                        c.trace_measured, c.trace_predicted, c.det_measured, c.det_predicted, trace_error, det_error));
        ++solved;
        agreed += c.match ? 1 : 0;
        if (!c.match) log.add(grid_name(p) + " index criterion", c.s, 1.0, false);
        if (p.k >= kReductionMinStay && p.m >= kReductionMinStay) {
            worst_trace = std::max(worst_trace, trace_error);
            worst_det = std::max(worst_det, det_error);
        }
    }
    log.add("index criterion agreement", solved ? static_cast<double>(agreed) / solved : 0.0, 1.0,
            solved > 0 && agreed == solved);
    log.at_most("trace reduction error (k, m >= 16)", worst_trace, kReductionTolerance);
    log.at_most("det reduction error (k, m >= 16)", worst_det, kReductionTolerance);
    ctx.writer.csv("period2_sweep.csv", table);
}

/// Largest distance from an eigenvalue of `full` to its partner in `parts` (greedy nearest matching).
double multiset_distance(std::vector<std::complex<double>> full, std::vector<std::complex<double>> parts) {
    if (full.size() != parts.size()) return INFINITY;
    double worst = 0.0;
    for (const auto& z : full) {
        const auto it = std::min_element(parts.begin(), parts.end(), [&](const auto& a, const auto& b) {
            return std::abs(a - z) < std::abs(b - z);
        });
        worst = std::max(worst, std::abs(*it - z));
        parts.erase(it);
    }
    return worst;
}

struct ConeRow {
    ConeWitness cu;
    ConeWitness s;
    double complementarity = 0.0;
    double radius = 0.0;
};

void run_cone_battery(Context& ctx, CheckLog& log) {
    const auto points = grid_points(ctx.config.sweep);
    const auto& coeffs = ctx.config.coeffs;
    const double lambda_hat = std::abs(ctx.config.model.multipliers.lambda_hat);
    const auto results = fan_out<ConeRow>(ctx.jobs, points.size(), [&](std::size_t i) {
        const auto& p = points[i];
        const auto solved = solve_period2_with_s(ctx.model, coeffs, p.k, p.m, p.s_target, ctx.config.sweep.branch);
        const auto& chain = solved.orbit.chain;
        ConeRow row{invariant_cu_subspace(chain), invariant_s_subspace(chain, std::pow(lambda_hat, p.k + p.m)), 0.0,
                    0.0};
        const auto full = spectrum(chain_product(chain));
        auto parts = row.cu.eigenvalues;
        parts.insert(parts.end(), row.s.eigenvalues.begin(), row.s.eigenvalues.end());
        row.radius = std::abs(full.front());
        row.complementarity = multiset_distance(full, parts) / std::max(1.0, row.radius);
        return row;
    });

    CsvTable table({"k", "m", "s_target", "cu_K", "cu_contraction", "s_K", "s_contraction", "bound_B",
                    "complementarity_error", "spectral_radius"});
    double worst_ratio = 0.0;
    double worst_split = 0.0;
    double worst_B = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto& r = results[i];
        if (!r.value) {
            log.failed_item(grid_name(p), r.error);
            continue;
        }
        const auto& c = *r.value;
        table.row(cells(p.k, p.m, p.s_target, c.cu.K_const, c.cu.contraction_ratio, c.s.K_const,
                        c.s.contraction_ratio, c.s.bound_B, c.complementarity, c.radius));
        worst_ratio = std::max({worst_ratio, c.cu.contraction_ratio, c.s.contraction_ratio});
        worst_split = std::max(worst_split, c.complementarity);
        worst_B = std::max(worst_B, c.s.bound_B);
    }
    log.add("strict cone contraction", worst_ratio, 1.0, worst_ratio < 1.0);
    log.at_most("spectral complementarity", worst_split, kComplementarity);
    log.at_most("global bound B", worst_B, kGlobalB);
    ctx.writer.csv("cone_battery.csv", table);
}

void run_leaf_fit(Context& ctx, CheckLog& log) {
    const auto& cfg = ctx.config;
    LeafFit fit;
    try {
        fit = fit_leaf_exponents(ctx.model, cfg.coeffs, cfg.leaf_ks, cfg.leaf_half_width);
    } catch (const std::exception& e) {
        log.failed_item("leaf fit", e.what());
        return;
    }
    const auto& mu = cfg.model.multipliers;
    const double ref1 = std::log(std::abs(mu.lambda0) / std::abs(mu.lambda));
    const double ref2 = std::log(std::abs(mu.lambda_hat) / std::abs(mu.gamma));
    CsvTable table({"k", "phi1_max", "phi2_max", "c1", "c2"});
    for (const auto& s : fit.samples)
        table.row(cells(s.k, s.phi1.cwiseAbs().maxCoeff(), s.phi2.cwiseAbs().maxCoeff(), s.c1, s.c2));
    const double err1 = std::abs(fit.slope1 / ref1 - 1.0);
    const double err2 = std::abs(fit.slope2 / ref2 - 1.0);
    log.at_most("phi1 decay exponent", err1, kLeafSlopeTolerance);
    log.at_most("phi2 decay exponent", err2, kLeafSlopeTolerance);
    ctx.writer.csv("leaf_fit.csv", table);
    ctx.writer.json("leaf_fit.json", Json{{"slope1", fit.slope1},
                                          {"slope1_reference", ref1},
                                          {"slope1_error", err1},
                                          {"slope2", fit.slope2},
                                          {"slope2_reference", ref2},
                                          {"slope2_error", err2}});
}

struct SolvedCycle {
    CycleCertificate cert;
    std::vector<CertificateCheck> checks;
};

CsvTable cycle_table() {
    return CsvTable({"k", "m", "mu", "mu2", "gamma", "theta", "product", "product_reference", "gap", "index",
                     "joint_residual", "leg_residual", "closure_residual", "transverse_iterations",
                     "transverse_bound", "area_factor", "predicted_area_factor"});
}

void cycle_row(CsvTable& table, const CycleCertificate& c) {
    const auto& t = c.transverse;
    const double nan = std::nan("");
    table.row(cells(c.k, c.m, c.mu, c.mu2, c.gamma, c.theta, c.product, c.product_reference, c.quasi.gap, c.index,
                    c.joint_residual, c.orbit.leg_residual, c.orbit.closure_residual,
                    t ? t->iterations_used : -1, t ? t->iteration_bound : -1, t ? t->area_factor : nan,
                    t ? t->predicted_area_factor : nan));
}

void schedule_trend(CheckLog& log, const std::vector<CycleCertificate>& certs) {
    if (certs.empty()) return;
    const auto& last = *std::max_element(certs.begin(), certs.end(),
                                         [](const auto& a, const auto& b) { return a.k < b.k; });
    log.at_most(fmt::format("{} product vs reference", item_name(last.k, last.m)),
                std::abs(last.product / last.product_reference - 1.0), kProductTolerance);
    auto sorted = certs;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
    int rises = 0;
    for (std::size_t i = 1; i < sorted.size(); ++i) rises += std::abs(sorted[i].mu) < std::abs(sorted[i - 1].mu) ? 0 : 1;
    log.add("|mu| strictly decreasing along the schedule", rises, 0, rises == 0);
}

void run_hetdim_symmetric(Context& ctx, CheckLog& log) {
    const auto& cfg = ctx.config;
    const auto results = fan_out<SolvedCycle>(ctx.jobs, cfg.schedule.size(), [&](std::size_t i) {
        const auto [k, m] = cfg.schedule[i];
        auto cert = solve_hetdim_symmetric(ctx.model, cfg.coeffs, k, m, cfg.s_target, cfg.branch);
        auto checks = certificate_checks(cycle_setting(ctx.model, cfg.coeffs, std::nullopt, cert), cert);
        return SolvedCycle{std::move(cert), std::move(checks)};
    });
    auto table = cycle_table();
    std::vector<CycleCertificate> certs;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto [k, m] = cfg.schedule[i];
        const auto& r = results[i];
        if (!r.value) {
            log.failed_item(item_name(k, m), r.error);
            continue;
        }
        const auto& [cert, checks] = *r.value;
        log.merge(checks, item_name(k, m));
        cycle_row(table, cert);
        ctx.writer.json(fmt::format("certificates/cycle_k{}_m{}.json", k, m),
                        to_json(CertificateDocument{cfg.model, cfg.coeffs, std::nullopt, cert, checks}));
        ctx.symmetric_certs.emplace(k, cert);
        certs.push_back(cert);
    }
    schedule_trend(log, certs);
    ctx.writer.csv("hetdim_symmetric.csv", table);
}

GlobalMapCoeffs partner_coeffs(const ExperimentConfig& cfg) {
    return cfg.coeffs2 ? *cfg.coeffs2 : conjugate_z(cfg.coeffs, cfg.model.symmetry_signs);
}

void run_hetdim_general(Context& ctx, CheckLog& log) {
    const auto& cfg = ctx.config;
    const auto coeffs2 = partner_coeffs(cfg);
    const auto results = fan_out<SolvedCycle>(ctx.jobs, cfg.schedule.size(), [&](std::size_t i) {
        const auto [k, m] = cfg.schedule[i];
        auto cert = solve_hetdim_general(ctx.model, cfg.coeffs, coeffs2, k, m, cfg.s_target, cfg.branch);
        auto checks = certificate_checks(cycle_setting(ctx.model, cfg.coeffs, coeffs2, cert), cert, coeffs2);
        return SolvedCycle{std::move(cert), std::move(checks)};
    });
    auto table = cycle_table();
    std::vector<CycleCertificate> certs;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto [k, m] = cfg.schedule[i];
        const auto& r = results[i];
        const auto name = item_name(k, m);
        if (!r.value) {
            log.failed_item(name, r.error);
            continue;
        }
        const auto& [cert, checks] = *r.value;
        log.merge(checks, name);
        if (!cert.mu_shift) log.at_most(name + " |mu1 - mu2|", std::abs(cert.mu - cert.mu2), kTieTolerance);
        if (const auto it = ctx.symmetric_certs.find(k); it != ctx.symmetric_certs.end()) {
            const auto& sym = it->second;
            log.at_most(name + " mu vs symmetric (relative)", std::abs(cert.mu - sym.mu) / std::abs(sym.mu),
                        kTieTolerance);
            log.at_most(name + " theta vs symmetric", std::abs(cert.theta - sym.theta), kTieTolerance);
        }
        cycle_row(table, cert);
        ctx.writer.json(fmt::format("certificates/cycle_general_k{}_m{}.json", k, m),
                        to_json(CertificateDocument{cfg.model, cfg.coeffs, coeffs2, cert, checks}));
        certs.push_back(cert);
    }
    schedule_trend(log, certs);
    ctx.writer.csv("hetdim_general.csv", table);
}

void run_c3prime_scan(Context& ctx, CheckLog& log) {
    const auto& cfg = ctx.config;
    std::vector<MoriokaShimizuParams> grid;
    for (double a : cfg.c3_alpha)
        for (double l : cfg.c3_lambda) grid.push_back({a, l});
    const auto results = fan_out<FlowExponents>(ctx.jobs, grid.size(),
                                                [&](std::size_t i) { return equilibrium_exponents(grid[i]); });
    CsvTable table({"alpha", "lambda", "beta", "alpha_weak", "alpha1", "strong_margin", "weak_margin", "ok"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& r = results[i];
        if (!r.value) {
            log.failed_item(fmt::format("alpha={} lambda={}", format_number(grid[i].alpha), format_number(grid[i].lambda)),
                            r.error);
            continue;
        }
        const auto& e = *r.value;
        const auto c = check_c3prime(e);
        table.row(cells(grid[i].alpha, grid[i].lambda, e.beta, e.alpha,
                        e.alpha_strong.empty() ? std::nan("") : e.alpha_strong.front(), c.strong_margin,
                        c.weak_margin, c.ok));
    }

    const auto lorenz = equilibrium_exponents(LorenzParams{});
    const auto lorenz_check = check_c3prime(lorenz);
    const auto ms = equilibrium_exponents(MoriokaShimizuParams{});
    const auto ms_check = check_c3prime(ms);
    log.at_most("classical Lorenz weak margin", std::abs(lorenz_check.weak_margin - kLorenzMargin),
                kLorenzMarginTolerance);
    log.add("classical Lorenz violates the condition", lorenz_check.ok ? 1 : 0, 0, !lorenz_check.ok);
    log.add("Morioka-Shimizu (0.5, 1) satisfies the condition", ms_check.weak_margin, 0, ms_check.ok);
    ctx.writer.csv("c3prime_scan.csv", table);
    ctx.writer.json("flow_exponents.json",
                    Json{{"lorenz", {{"exponents", to_json(lorenz)}, {"check", to_json(lorenz_check)}}},
                         {"morioka_shimizu", {{"exponents", to_json(ms)}, {"check", to_json(ms_check)}}}});
}

void run_abs_orbits(Context& ctx, CheckLog& log) {
    const auto& cfg = ctx.config;
    const auto report = abs_trapping_batch(cfg.abs, cfg.seed, cfg.abs_orbit_count, cfg.abs_steps);
    log.add("quotient expansion", report.min_expansion, 1.0, report.min_expansion > 1.0);
    log.add("quotient image inside the domain", report.max_image, cfg.abs.half_width,
            report.max_image < cfg.abs.half_width);
    log.add("trapping region invariance", report.escapes, 0, report.escapes == 0);

    // Exported sample orbits use their own stream so the batch above is unaffected.
    std::mt19937_64 rng(cfg.seed + 1);
    std::uniform_real_distribution<double> dist(-cfg.abs.half_width, cfg.abs.half_width);
    CsvTable table({"orbit", "step", "u", "v", "symbol"});
    for (int o = 0; o < cfg.abs_export; ++o) {
        const double u0 = dist(rng);
        const double v0 = dist(rng);
        for (const auto& p : simulate_poincare(cfg.abs, u0, v0, cfg.abs_steps).points)
            table.row(cells(o, p.step, p.u, p.v, p.symbol));
    }
    ctx.writer.csv("abs_orbits.csv", table);
    ctx.writer.json("abs_report.json", Json{{"orbits", report.orbits},
                                            {"steps", cfg.abs_steps},
                                            {"escapes", report.escapes},
                                            {"absorbed", report.absorbed},
                                            {"min_expansion", report.min_expansion},
                                            {"max_image", report.max_image}});
}

Json to_json(const SummaryCheck& c) {
    Json j{{"name", c.name},
           {"value", std::isnan(c.value) ? Json(nullptr) : Json(c.value)},
           {"tolerance", c.tolerance},
           {"pass", c.pass}};
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

Json versions() {
    return Json{{"hetdim", kToolVersion},
                {"compiler", __VERSION__},
                {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                              NLOHMANN_JSON_VERSION_PATCH)},
                {"fmt", FMT_VERSION},
                {"spdlog", fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH)}};
}

InputError located(const InputError& e, const std::filesystem::path& path, const SourceMap& map) {
    if (e.where.empty() || e.where.front() != '/') return e;
    const auto loc = map.locate(e.where == "/" ? "" : e.where);
    const std::string what = std::string(e.what()).substr(e.where.size() + 2);
    return InputError(fmt::format("{}:{} ({})", path.string(), loc, e.where), what);
}

}  // namespace

std::string to_string(Experiment e) {
    for (const auto& [name, value] : experiment_names())
        if (value == e) return name;
    return "unknown";
}

ExperimentConfig config_from_json(const Json& j) {
    expect_object(j, "",
                  {"model", "coeffs", "coeffs2", "experiments", "schedule", "s_target", "branch", "seed",
                   "output_dir", "jobs", "forge_tangency", "period2_sweep", "leaf_fit", "c3prime_scan",
                   "abs_orbits"});
    ExperimentConfig cfg;
    cfg.source = j;
    if (j.contains("model")) cfg.model = model_spec_from_json(j.at("model"), "/model");
    try {
        (void)cfg.model.build();
    } catch (const std::exception& e) {
        throw InputError("/model", e.what());
    }
    if (!j.contains("coeffs")) throw InputError("/coeffs", "missing required field");
    cfg.coeffs = coeffs_from_json(j.at("coeffs"), cfg.model.dim, "/coeffs");
    if (j.contains("coeffs2")) cfg.coeffs2 = coeffs_from_json(j.at("coeffs2"), cfg.model.dim, "/coeffs2");

    if (!j.contains("experiments") || !j.at("experiments").is_array() || j.at("experiments").empty())
        throw InputError("/experiments", "expected a non-empty array of experiment names");
    const auto& names = experiment_names();
    for (std::size_t i = 0; i < j.at("experiments").size(); ++i) {
        const auto& e = j.at("experiments")[i];
        const auto ptr = join("/experiments", std::to_string(i));
        if (!e.is_string() || !names.contains(e.get<std::string>())) throw InputError(ptr, "unknown experiment");
        const auto exp = names.at(e.get<std::string>());
        if (std::find(cfg.experiments.begin(), cfg.experiments.end(), exp) != cfg.experiments.end())
            throw InputError(ptr, "experiment listed twice");
        cfg.experiments.push_back(exp);
    }
    const auto wants = [&](Experiment e) {
        return std::find(cfg.experiments.begin(), cfg.experiments.end(), e) != cfg.experiments.end();
    };

    if (j.contains("schedule")) cfg.schedule = read_schedule(j.at("schedule"), "/schedule");
    if ((wants(Experiment::hetdim_symmetric) || wants(Experiment::hetdim_general)) && cfg.schedule.empty())
        throw InputError("/schedule", "cycle experiments need a schedule");
    cfg.s_target = number_or(j, "s_target", 0.0, "");
    if (!(std::abs(cfg.s_target) < 1.0)) throw InputError("/s_target", "must lie in (-1, 1)");
    cfg.branch = int_or(j, "branch", 1, "");
    if (cfg.branch != 1 && cfg.branch != 2) throw InputError("/branch", "expected 1 or 2");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw InputError("/seed", "expected a non-negative integer");
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw InputError("/output_dir", "expected a string");
        cfg.output_dir = j.at("output_dir").get<std::string>();
    }
    cfg.jobs = int_or(j, "jobs", 0, "");
    if (cfg.jobs < 0) throw InputError("/jobs", "must be non-negative");

    if (wants(Experiment::hetdim_symmetric)) {
        if (!cfg.model.symmetric) throw InputError("/model/symmetric", "hetdim_symmetric needs a symmetric model");
        if (!(cfg.coeffs.c * cfg.coeffs.x_plus * cfg.coeffs.y_minus > 0.0))
            throw InputError("/coeffs", "hetdim_symmetric needs c x_plus y_minus > 0");
    }
    if (wants(Experiment::hetdim_general) && !cfg.coeffs2 && !cfg.model.symmetric)
        throw InputError("/coeffs2", "hetdim_general needs coeffs2 unless the model is symmetric");

    if (j.contains("forge_tangency")) {
        const auto& f = j.at("forge_tangency");
        expect_object(f, "/forge_tangency", {"k"});
        if (f.contains("k")) cfg.forge_ks = read_ints(f.at("k"), "/forge_tangency/k");
        for (std::size_t i = 0; i < cfg.forge_ks.size(); ++i)
            if (cfg.forge_ks[i] < 1) throw InputError(fmt::format("/forge_tangency/k/{}", i), "must be positive");
    }
    if (j.contains("period2_sweep")) {
        const auto& s = j.at("period2_sweep");
        expect_object(s, "/period2_sweep", {"k", "s_targets", "branch"});
        if (s.contains("k")) cfg.sweep.ks = read_ints(s.at("k"), "/period2_sweep/k");
        require_even(cfg.sweep.ks, "/period2_sweep/k", "k");
        if (s.contains("s_targets")) cfg.sweep.s_targets = read_numbers(s.at("s_targets"), "/period2_sweep/s_targets");
        cfg.sweep.branch = int_or(s, "branch", 1, "/period2_sweep");
        if (cfg.sweep.branch != 1 && cfg.sweep.branch != 2) throw InputError("/period2_sweep/branch", "expected 1 or 2");
    }
    if (j.contains("leaf_fit")) {
        const auto& l = j.at("leaf_fit");
        expect_object(l, "/leaf_fit", {"k", "half_width"});
        if (l.contains("k")) cfg.leaf_ks = read_ints(l.at("k"), "/leaf_fit/k");
        if (cfg.leaf_ks.size() < 6) throw InputError("/leaf_fit/k", "needs at least 6 stay numbers");
        cfg.leaf_half_width = number_or(l, "half_width", cfg.leaf_half_width, "/leaf_fit");
        if (!(cfg.leaf_half_width > 0.0)) throw InputError("/leaf_fit/half_width", "must be positive");
    }
    if (j.contains("c3prime_scan")) {
        const auto& c = j.at("c3prime_scan");
        expect_object(c, "/c3prime_scan", {"alpha", "lambda"});
        if (c.contains("alpha")) cfg.c3_alpha = read_numbers(c.at("alpha"), "/c3prime_scan/alpha");
        if (c.contains("lambda")) cfg.c3_lambda = read_numbers(c.at("lambda"), "/c3prime_scan/lambda");
    }
    if (j.contains("abs_orbits")) {
        const auto& a = j.at("abs_orbits");
        const std::string p = "/abs_orbits";
        expect_object(a, p,
                      {"A", "rho", "nu", "contraction", "offset", "drift", "half_width", "orbits", "steps", "export"});
        auto& m = cfg.abs;
        m.A = number_or(a, "A", m.A, p);
        m.rho = number_or(a, "rho", m.rho, p);
        m.nu = number_or(a, "nu", m.nu, p);
        m.contraction = number_or(a, "contraction", m.contraction, p);
        m.offset = number_or(a, "offset", m.offset, p);
        m.drift = number_or(a, "drift", m.drift, p);
        m.half_width = number_or(a, "half_width", m.half_width, p);
        cfg.abs_orbit_count = int_or(a, "orbits", cfg.abs_orbit_count, p);
        cfg.abs_steps = int_or(a, "steps", cfg.abs_steps, p);
        cfg.abs_export = int_or(a, "export", cfg.abs_export, p);
        if (cfg.abs_orbit_count < 1 || cfg.abs_steps < 1 || cfg.abs_export < 0)
            throw InputError(p, "orbits and steps must be positive, export non-negative");
    }
    if (wants(Experiment::abs_orbits)) {
        try {
            cfg.abs.validate();
        } catch (const std::exception& e) {
            throw InputError("/abs_orbits", e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    Json j;
    try {
        j = parse_json(text);
    } catch (const InputError& e) {
        throw InputError(path.string() + ":" + e.where, std::string(e.what()).substr(e.where.size() + 2));
    }
    try {
        return config_from_json(j);
    } catch (const InputError& e) {
        throw located(e, path, SourceMap::of(text));
    }
}

RunSummary run_experiments(const ExperimentConfig& config, const RunOverrides& overrides) {
    const auto started = std::chrono::steady_clock::now();
    RunSummary summary;
    summary.output_dir = overrides.output_dir.value_or(config.output_dir);
    int jobs = overrides.jobs.value_or(config.jobs);
    if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    ArtifactWriter writer(summary.output_dir);
    Context ctx{config, config.model.build(), jobs, writer, {}};
    spdlog::info("writing to {} with {} jobs", summary.output_dir.string(), jobs);

    // The general cross-check reads the symmetric certificates, so that experiment goes first.
    auto order = config.experiments;
    std::stable_partition(order.begin(), order.end(), [](Experiment e) { return e == Experiment::hetdim_symmetric; });

    std::map<Experiment, std::vector<SummaryCheck>> by_experiment;
    for (const auto e : order) {
        const auto name = to_string(e);
        spdlog::info("running {}", name);
        CheckLog log(name);
        switch (e) {
            case Experiment::forge_tangency: run_forge(ctx, log); break;
            case Experiment::period2_sweep: run_period2_sweep(ctx, log); break;
            case Experiment::hetdim_symmetric: run_hetdim_symmetric(ctx, log); break;
            case Experiment::hetdim_general: run_hetdim_general(ctx, log); break;
            case Experiment::cone_battery: run_cone_battery(ctx, log); break;
            case Experiment::leaf_fit: run_leaf_fit(ctx, log); break;
            case Experiment::c3prime_scan: run_c3prime_scan(ctx, log); break;
            case Experiment::abs_orbits: run_abs_orbits(ctx, log); break;
        }
        by_experiment[e] = log.take();
    }

    Json experiments = Json::object();
    Json failures = Json::array();
    summary.pass = true;
    for (const auto e : config.experiments) {
        const auto& checks = by_experiment[e];
        Json list = Json::array();
        bool pass = true;
        for (const auto& c : checks) {
            list.push_back(to_json(c));
            pass = pass && c.pass;
            if (!c.pass) failures.push_back(fmt::format("{}: {}", c.experiment, c.name));
            summary.checks.push_back(c);
        }
        experiments[to_string(e)] = Json{{"pass", pass}, {"checks", list}};
        summary.pass = summary.pass && pass;
    }
    writer.json("summary.json", Json{{"pass", summary.pass}, {"failures", failures}, {"experiments", experiments}});

    summary.outputs = writer.written();
    summary.outputs.push_back("manifest.json");
    std::sort(summary.outputs.begin(), summary.outputs.end());
    Json names = Json::array();
    for (const auto e : config.experiments) names.push_back(to_string(e));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    writer.json("manifest.json", Json{{"tool", "hetdim"},
                                      {"certificate_schema", kCertificateSchema},
                                      {"versions", versions()},
                                      {"config", config.source},
                                      {"seed", config.seed},
                                      {"jobs", jobs},
                                      {"experiments", names},
                                      {"outputs", summary.outputs},
                                      {"wall_time_seconds", wall}});
    return summary;
}

int run_experiment(const std::filesystem::path& config_path, const RunOverrides& overrides, std::ostream& out,
                   std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInput;
    }
    try {
        const auto summary = run_experiments(cfg, overrides);
        for (const auto& c : summary.checks)
            if (!c.pass)
                err << "FAIL " << c.experiment << ": " << c.name << (c.note.empty() ? "" : " (" + c.note + ")")
                    << "\n";
        out << (summary.pass ? "all checks passed" : "some checks failed") << " (" << summary.checks.size()
            << " checks), outputs in " << summary.output_dir.string() << "\n";
        return summary.pass ? kExitOk : kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

ReplayReport replay_certificate(const Json& certificate) {
    const auto doc = certificate_from_json(certificate);
    SaddleModel model = [&] {
        try {
            return doc.model.build();
        } catch (const std::exception& e) {
            throw InputError("/model", e.what());
        }
    }();
    const auto& cert = doc.cert;
    std::vector<CertificateCheck> checks;
    try {
        checks = certificate_checks(cycle_setting(model, doc.coeffs, doc.coeffs2, cert), cert, doc.coeffs2);
    } catch (const std::exception& e) {
        checks.push_back({"setting", std::nan(""), 0.0, false});
        spdlog::error("cannot rebuild the certificate setting: {}", e.what());
    }
    ReplayReport rep;
    rep.pass = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
    rep.report = Json{{"mode", to_string(cert.mode)},
                      {"k", cert.k},
                      {"m", cert.m},
                      {"pass", rep.pass},
                      {"checks", to_json(checks)}};
    return rep;
}

int replay_certificate_file(const std::filesystem::path& path, std::ostream& out, std::ostream& err) {
    ReplayReport rep;
    try {
        rep = replay_certificate(read_json_file(path));
    } catch (const InputError& e) {
        err << "input error: " << path.string() << ": " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    out << rep.report.dump(2) << "\n";
    return rep.pass ? kExitOk : kExitNumeric;
}

Json check_model(const ExperimentConfig& config) {
    const auto model = config.model.build();
    const auto r = check_conditions(model, config.coeffs, config.coeffs2);
    Json margins = Json::array();
    for (const auto& m : r.margins) margins.push_back(Json{{"name", m.name}, {"value", m.value}, {"ok", m.ok}});
    Json j{{"c1", r.c1_ok}, {"c2", r.c2_ok}, {"c3", r.c3_ok}};
    if (r.c3prime_ok) j["c3prime"] = *r.c3prime_ok;
    j["c4_leaf_gap"] = r.c4_leaf_gap;
    j["theta"] = r.theta;
    j["case"] = to_string(classify_case(config.coeffs));
    j["margins"] = margins;
    j["ok"] = r.c1_ok && r.c2_ok && r.c3_ok && r.c3prime_ok.value_or(true);
    return j;
}

int check_model_file(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
    try {
        const auto report = check_model(load_config(config_path));
        out << report.dump(2) << "\n";
        return report.at("ok").get<bool>() ? kExitOk : kExitNumeric;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace hetdim
