#include "dfols/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace dfols {

using json = nlohmann::json;

double solved_threshold(double a0, double a_star, double tau) { return a_star + tau * (a0 - a_star); }

double measure_true(const RunRecord& record, double tau_p) {
    const double thr = solved_threshold(record.f0_true, record.f_star, tau_p);
    for (const TraceEntry& e : record.trace)
        if (e.f_true <= thr) return static_cast<double>(e.index);
    return kNeverSolved;
}

double measure_noisy(const RunRecord& record, double tau_p, const NoiseModel& noise) {
    const double e0 = expected_noisy_objective(noise, record.f0_true, record.m);
    const double es = expected_noisy_objective(noise, record.f_star, record.m);
    const double thr = solved_threshold(e0, es, tau_p);
    for (const TraceEntry& e : record.trace)
        if (e.f_noisy <= thr) return static_cast<double>(e.index);
    return kNeverSolved;
}

double tau_crit(const LeastSquaresProblem& problem, const NoiseModel& noise, int n_samples, std::uint64_t seed) {
    if (noise.deterministic()) return 0.0;
    const double sigma = noise_std_at(problem, noise, problem.x_star, n_samples, seed);
    const double gap = expected_noisy_objective(noise, problem.f0(), problem.m) -
                       expected_noisy_objective(noise, problem.f_star, problem.m);
    if (!(gap > 0.0)) throw DegenerateProblemError();
    const double tau_hat = sigma / gap;
    if (tau_hat <= 0.0) return 0.0;
    return std::pow(10.0, std::ceil(std::log10(tau_hat)));
}

double tau_p(double tau, double tau_crit_value) { return std::min(1e-1, std::max(tau_crit_value, tau)); }

std::string to_string(Measure m) { return m == Measure::true_f ? "true" : "noisy"; }

std::string to_string(TauMode t) { return t == TauMode::fixed ? "fixed" : "adaptive"; }

double DataProfile::at(double a) const {
    double v = 0.0;
    for (std::size_t i = 0; i < alpha.size() && alpha[i] <= a; ++i) v = proportion[i];
    return v;
}

std::vector<double> default_alpha_grid(double max_alpha) {
    std::vector<double> g;
    auto add_range = [&](int lo, int hi, double step) {
        for (int k = lo; k <= hi; ++k) {
            const double a = k * step;
            if (a > max_alpha) return;
            g.push_back(a);
        }
    };
    add_range(1, 100, 0.1);
    add_range(11, 100, 1.0);
    add_range(11, 100, 10.0);
    add_range(11, 100000, 100.0);
    if (g.empty() || g.back() < max_alpha) g.push_back(max_alpha);
    return g;
}

DataProfile data_profile(const std::vector<RunRecord>& records, Measure measure, double tau, TauMode mode,
                         const std::map<std::string, double>& tau_crits, const std::vector<double>& alphas) {
    DataProfile prof;
    prof.measure = measure;
    prof.tau_mode = mode;
    prof.tau = tau;
    prof.alpha = alphas;
    prof.proportion.assign(alphas.size(), 0.0);

    std::vector<std::string> problems;
    std::vector<std::uint64_t> seeds;
    for (const RunRecord& r : records) {
        if (std::find(problems.begin(), problems.end(), r.problem) == problems.end()) problems.push_back(r.problem);
        if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    }
    if (problems.empty()) return prof;

    for (std::uint64_t seed : seeds) {
        // (N_p, n_p + 1) per problem run with this seed; missing runs count as unsolved.
        std::vector<std::pair<double, double>> need;
        for (const RunRecord& r : records) {
            if (r.seed != seed) continue;
            double tc = 0.0;
            const auto it = tau_crits.find(r.problem);
            if (it != tau_crits.end()) tc = it->second;
            const double tp = mode == TauMode::adaptive ? tau_p(tau, tc) : tau;
            const double np = measure == Measure::true_f ? measure_true(r, tp) : measure_noisy(r, tp, r.noise);
            need.emplace_back(np, static_cast<double>(r.n + 1));
        }
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            int solved = 0;
            for (const auto& [np, scale] : need)
                if (np <= alphas[a] * scale) ++solved;
            prof.proportion[a] += static_cast<double>(solved) / static_cast<double>(problems.size());
        }
    }
    for (double& v : prof.proportion) v /= static_cast<double>(seeds.size());
    return prof;
}

int pinit_for(const std::string& mode, int n) {
    if (mode == "full") return 0;
    if (mode == "2") return 1;
    if (mode == "quartern") return std::max(1, n / 4 - 1);
    if (mode == "halfn") return std::max(1, n / 2 - 1);
    throw std::invalid_argument("unknown pinit mode: " + mode);
}

SolverParams make_params(const SolverOptions& options, const LeastSquaresProblem& problem, const NoiseModel& noise,
                         double budget_multiplier) {
    const int n = problem.n;
    bool noisy = false;
    if (options.defaults == "noisy")
        noisy = true;
    else if (options.defaults == "auto")
        noisy = !noise.deterministic();
    else if (options.defaults != "smooth")
        throw std::invalid_argument("unknown defaults: " + options.defaults);
    SolverParams p = noisy ? SolverParams::noisy_defaults(n) : SolverParams::smooth_defaults(n);
    if (options.restarts) p.restarts.kind = *options.restarts;
    if (options.autodetect) p.restarts.autodetect = *options.autodetect;
    p.nsamples = sampling::parse(options.nsamples);
    if (options.regression_multiplier > 0.0)
        p.p = std::max(n, static_cast<int>(std::lround(options.regression_multiplier * (n + 1))) - 1);
    p.p_init = pinit_for(options.pinit, n);
    p.growing = options.growing;
    p.delta0 = 0.1 * std::max(problem.x0.lpNorm<Eigen::Infinity>(), 1.0);
    p.rho_end = 1e-8;
    p.max_evals = static_cast<long>(std::ceil(budget_multiplier * (n + 1)));
    p.record_diagnostics = false;
    return p;
}

std::vector<LeastSquaresProblem> expand_problems(const std::vector<std::string>& names) {
    std::vector<LeastSquaresProblem> out;
    std::set<std::string> seen;
    for (const std::string& key : names) {
        std::vector<LeastSquaresProblem> part = catalog(key);
        if (part.empty()) throw UnknownProblemError(key);
        for (auto& p : part)
            if (seen.insert(p.name).second) out.push_back(std::move(p));
    }
    return out;
}

RunRecord run_problem(const LeastSquaresProblem& problem, const SolverOptions& options, const NoiseModel& noise,
                      std::uint64_t seed, double budget_multiplier) {
    RunRecord rec;
    rec.problem = problem.name;
    rec.config = options.label;
    rec.noise = noise;
    rec.seed = seed;
    rec.n = problem.n;
    rec.m = problem.m;
    rec.f0_true = problem.f0();
    rec.f_star = problem.f_star;

    double best_true = kNeverSolved, best_noisy = kNeverSolved;
    auto observer = [&](const Vector& x, const Evaluation& e, long n_evals) {
        if (!e.ok) return;
        const double ft = problem.f(x);
        if (rec.trace.empty() || ft < best_true || e.f < best_noisy) rec.trace.push_back({n_evals, ft, e.f});
        best_true = std::min(best_true, ft);
        best_noisy = std::min(best_noisy, e.f);
    };

    try {
        const SolverParams params = make_params(options, problem, noise, budget_multiplier);
        rec.budget = params.max_evals;
        NoisyProblem np(problem, noise, seed);
        const std::uint64_t solver_seed = mix_keys({seed, hash_string(problem.name), 0x5eedULL});
        const Results res = solve(np.callback(), problem.x0, problem.bounds, params, solver_seed, observer);
        rec.n_evals = res.n_evals;
        rec.exit_flag = res.exit_flag;
        rec.n_restarts = res.n_restarts;
        rec.f_final = problem.f(res.x);
        rec.cauchy_violations = res.cauchy_violations;
        rec.cauchy_checks = res.cauchy_checks;
    } catch (const std::exception& ex) {
        rec.failed = true;
        rec.error = ex.what();
        rec.f_final = best_true;
    }
    return rec;
}

std::vector<RunRecord> run_suite(const SuiteConfig& config) {
    const std::vector<LeastSquaresProblem> problems = expand_problems(config.problems);
    struct Task {
        std::size_t problem;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < problems.size(); ++i)
        for (std::uint64_t s : config.seeds) tasks.push_back({i, s});
    std::vector<RunRecord> out(tasks.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t k = next++; k < tasks.size(); k = next++)
            out[k] = run_problem(problems[tasks[k].problem], config.solver, config.noise, tasks[k].seed,
                                 config.budget_multiplier);
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(tasks.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

std::map<std::string, double> suite_tau_crits(const SuiteConfig& config) {
    std::map<std::string, double> out;
    for (const LeastSquaresProblem& p : expand_problems(config.problems))
        out[p.name] = tau_crit(p, config.noise, config.tau_crit_samples);
    return out;
}

std::vector<DataProfile> suite_profiles(const SuiteConfig& config, const std::vector<RunRecord>& records,
                                        const std::map<std::string, double>& tau_crits) {
    std::vector<Measure> measures;
    if (config.measure != "noisy") measures.push_back(Measure::true_f);
    if (config.measure != "true") measures.push_back(Measure::noisy);
    const std::vector<double> alphas = default_alpha_grid(config.budget_multiplier);
    std::vector<DataProfile> out;
    for (Measure m : measures)
        for (TauMode mode : {TauMode::adaptive, TauMode::fixed})
            out.push_back(data_profile(records, m, config.tau, mode, tau_crits, alphas));
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string records_csv(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    os << "problem,seed,eval_index,f_true,f_noisy\n";
    for (const RunRecord& r : records)
        for (const TraceEntry& e : r.trace)
            os << r.problem << ',' << r.seed << ',' << e.index << ',' << format_double(e.f_true) << ','
               << format_double(e.f_noisy) << '\n';
    return os.str();
}

std::string profiles_csv(const std::vector<DataProfile>& profiles) {
    std::ostringstream os;
    os << "alpha,proportion,measure,tau_mode\n";
    for (const DataProfile& p : profiles)
        for (std::size_t i = 0; i < p.alpha.size(); ++i)
            os << format_double(p.alpha[i]) << ',' << format_double(p.proportion[i]) << ',' << to_string(p.measure)
               << ',' << to_string(p.tau_mode) << '\n';
    return os.str();
}

std::string profiles_svg(const std::vector<DataProfile>& profiles, const std::string& title) {
    const double W = 640, H = 420, left = 60, right = 170, top = 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    double amin = kNeverSolved, amax = 0.0;
    for (const DataProfile& p : profiles)
        for (double a : p.alpha)
            if (a > 0.0) {
                amin = std::min(amin, a);
                amax = std::max(amax, a);
            }
    if (!(amin < amax)) {
        amin = 0.1;
        amax = 10.0;
    }
    const double l0 = std::log10(amin), l1 = std::log10(amax);
    auto px = [&](double a) { return left + pw * (std::log10(std::max(a, amin)) - l0) / (l1 - l0); };
    auto py = [&](double v) { return top + ph * (1.0 - v); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream os;
    char buf[160];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                  left, top, pw, ph);
    os << buf;
    for (int k = 0; k <= 4; ++k) {
        const double v = 0.25 * k;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n",
                      left - 6, py(v) + 4, v);
        os << buf;
    }
    for (int e = static_cast<int>(std::ceil(l0)); e <= static_cast<int>(std::floor(l1)); ++e) {
        const double a = std::pow(10.0, e);
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">1e%d</text>\n",
                      px(a), top + ph + 16, e);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">budget in simplex gradients</text>\n",
                  left + pw / 2, H - 12);
    os << buf;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const DataProfile& p = profiles[i];
        const char* c = colors[i % 6];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        double prev = 0.0;
        for (std::size_t k = 0; k < p.alpha.size(); ++k) {
            if (p.alpha[k] < amin) {
                prev = p.proportion[k];
                continue;
            }
            std::snprintf(buf, sizeof buf, "%.2f,%.2f %.2f,%.2f ", px(p.alpha[k]), py(prev), px(p.alpha[k]),
                          py(p.proportion[k]));
            os << buf;
            prev = p.proportion[k];
        }
        os << "\"/>\n";
        const double ly = top + 16 + 18 * static_cast<double>(i);
        std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      left + pw + 10, ly, left + pw + 30, ly, c);
        os << buf;
        os << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
           << to_string(p.measure) << ", " << to_string(p.tau_mode) << " tau</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

namespace {

RestartKind restart_from(const std::string& s) { return parse_restart_kind(s); }

GrowingMode growing_from(const std::string& s) {
    if (s == "svd") return GrowingMode::svd_repair;
    if (s == "perturb") return GrowingMode::perturb_step;
    throw std::invalid_argument("unknown growing mode: " + s);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw std::invalid_argument(std::string("unknown key in ") + where + ": " + it.key());
    }
}

}  // namespace

SuiteConfig suite_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad config: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("bad config: expected an object");
    check_keys(j, {"problems", "noise", "solver", "seeds", "budget_multiplier", "tau", "measure", "jobs",
                   "tau_crit_samples"},
               "config");
    SuiteConfig c;
    try {
        if (j.contains("problems")) {
            c.problems.clear();
            if (j["problems"].is_string())
                c.problems.push_back(j["problems"].get<std::string>());
            else
                c.problems = j["problems"].get<std::vector<std::string>>();
        }
        if (j.contains("noise")) {
            const json& nz = j["noise"];
            if (nz.is_string()) {
                c.noise = NoiseModel::parse(nz.get<std::string>());
            } else {
                check_keys(nz, {"kind", "sigma"}, "noise");
                const std::string kind = nz.value("kind", std::string("none"));
                const double sigma = nz.value("sigma", 0.0);
                if (sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
                c.noise = NoiseModel::parse(kind == "none" ? kind : kind + ":" + format_double(sigma));
            }
        }
        if (j.contains("seeds")) {
            c.seeds.clear();
            if (j["seeds"].is_number_integer()) {
                const int k = j["seeds"].get<int>();
                for (int s = 0; s < k; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
            } else {
                c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
            }
        }
        c.budget_multiplier = j.value("budget_multiplier", c.budget_multiplier);
        c.tau = j.value("tau", c.tau);
        c.measure = j.value("measure", c.measure);
        c.jobs = j.value("jobs", c.jobs);
        c.tau_crit_samples = j.value("tau_crit_samples", c.tau_crit_samples);
        if (j.contains("solver")) {
            const json& s = j["solver"];
            check_keys(s, {"label", "defaults", "restarts", "autodetect", "nsamples", "regression_points", "pinit",
                           "growing"},
                       "solver");
            c.solver.label = s.value("label", c.solver.label);
            c.solver.defaults = s.value("defaults", c.solver.defaults);
            if (s.contains("restarts")) c.solver.restarts = restart_from(s["restarts"].get<std::string>());
            if (s.contains("autodetect")) c.solver.autodetect = s["autodetect"].get<bool>();
            c.solver.nsamples = s.value("nsamples", c.solver.nsamples);
            c.solver.regression_multiplier = s.value("regression_points", c.solver.regression_multiplier);
            c.solver.pinit = s.value("pinit", c.solver.pinit);
            if (s.contains("growing")) c.solver.growing = growing_from(s["growing"].get<std::string>());
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad config: ") + e.what());
    }
    if (c.measure != "true" && c.measure != "noisy" && c.measure != "both")
        throw std::invalid_argument("unknown measure: " + c.measure);
    if (!(c.tau > 0.0 && c.tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
    if (!(c.budget_multiplier > 0.0)) throw std::invalid_argument("budget_multiplier must be positive");
    if (c.seeds.empty()) throw std::invalid_argument("at least one seed is needed");
    return c;
}

std::string summary_json(const SuiteConfig& config, const std::vector<RunRecord>& records,
                         const std::vector<DataProfile>& profiles, const std::map<std::string, double>& tau_crits) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json j;
    j["config"] = {{"problems", config.problems},
                   {"noise", {{"kind", to_string(config.noise.kind)}, {"sigma", config.noise.sigma}}},
                   {"seeds", config.seeds},
                   {"budget_multiplier", config.budget_multiplier},
                   {"tau", config.tau},
                   {"measure", config.measure},
                   {"solver", {{"label", config.solver.label}, {"defaults", config.solver.defaults},
                               {"nsamples", config.solver.nsamples}, {"pinit", config.solver.pinit},
                               {"regression_points", config.solver.regression_multiplier}}}};
    if (config.solver.restarts) j["config"]["solver"]["restarts"] = to_string(*config.solver.restarts);
    if (config.solver.autodetect) j["config"]["solver"]["autodetect"] = *config.solver.autodetect;

    json runs = json::array(), failures = json::array();
    long violations = 0, checks = 0;
    for (const RunRecord& r : records) {
        runs.push_back({{"problem", r.problem},
                        {"seed", r.seed},
                        {"n", r.n},
                        {"n_evals", r.n_evals},
                        {"exit_flag", to_string(r.exit_flag)},
                        {"n_restarts", r.n_restarts},
                        {"f_final", num(r.f_final)},
                        {"f_star", num(r.f_star)},
                        {"f0", num(r.f0_true)},
                        {"cauchy_violations", r.cauchy_violations}});
        violations += r.cauchy_violations;
        checks += r.cauchy_checks;
        if (r.failed) failures.push_back({{"problem", r.problem}, {"seed", r.seed}, {"error", r.error}});
    }
    j["runs"] = runs;
    j["failures"] = failures;
    j["cauchy"] = {{"checks", checks}, {"violations", violations}};
    json tc = json::object();
    for (const auto& [name, v] : tau_crits) tc[name] = v;
    j["tau_crit"] = tc;
    json pf = json::array();
    for (const DataProfile& p : profiles)
        pf.push_back({{"measure", to_string(p.measure)},
                      {"tau_mode", to_string(p.tau_mode)},
                      {"tau", p.tau},
                      {"final_proportion", p.final()}});
    j["profiles"] = pf;
    return j.dump(2) + "\n";
}

}  // namespace dfols
