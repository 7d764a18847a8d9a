// Batch front end: parse a JSON configuration, dispatch one command, emit
// CSV reports or human-readable summaries.
//
// Exit codes: 0 success, 1 domain/convergence failure, 2 configuration error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nard/nard.hpp"

namespace {

using nlohmann::json;

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nard::Vector vector_from(const json& j, const std::string& what) {
    if (!j.is_array()) throw config_error(what + ": expected an array of numbers");
    nard::Vector v;
    v.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_number()) throw config_error(what + ": expected numeric entries");
        v.push_back(e.get<double>());
    }
    return v;
}

nard::Matrix matrix_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw config_error(what + ": expected a nested array");
    nard::Matrix m(j.size(), j.front().is_array() ? j.front().size() : 0);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != m.cols)
            throw config_error(what + ": rows must be arrays of equal length");
        for (std::size_t k = 0; k < m.cols; ++k) {
            if (!j[i][k].is_number()) throw config_error(what + ": expected numeric entries");
            m(i, k) = j[i][k].get<double>();
        }
    }
    if (!nard::all_finite(m)) throw config_error(what + ": entries must be finite");
    return m;
}

struct RunConfig {
    json parameters;
    std::optional<nard::GaussMarkovSource> gauss;
    std::optional<nard::FiniteSource> finite;
    std::string output; // from config; --out overrides
};

RunConfig load_config(const std::string& path, const std::string& command) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (doc.contains("command")) {
        const std::string declared = doc["command"].get<std::string>();
        if (declared != command)
            throw config_error("config declares command '" + declared + "' but '" + command +
                               "' was requested");
    }
    if (!doc.contains("source") || !doc["source"].is_object())
        throw config_error("config needs a 'source' object");
    const json& src = doc["source"];
    RunConfig cfg;
    if (src.contains("gauss_markov") == src.contains("finite"))
        throw config_error("source must contain exactly one of 'gauss_markov' or 'finite'");
    try {
        if (src.contains("gauss_markov")) {
            const json& g = src["gauss_markov"];
            nard::GaussMarkovSource s;
            s.A = matrix_from(g.at("A"), "source A");
            s.B = matrix_from(g.at("B"), "source B");
            s.C = matrix_from(g.at("C"), "source C");
            s.N = matrix_from(g.at("N"), "source N");
            s.x0_mean = vector_from(g.at("x0_mean"), "source x0_mean");
            s.x0_cov = matrix_from(g.at("x0_cov"), "source x0_cov");
            s.check_shapes();
            cfg.gauss = std::move(s);
        } else {
            const json& f = src["finite"];
            nard::FiniteSource s;
            s.initial_pmf = vector_from(f.at("initial_pmf"), "source initial_pmf");
            s.transition = matrix_from(f.at("transition"), "source transition");
            s.distortion = matrix_from(f.at("distortion"), "source distortion");
            s.x_alphabet = s.initial_pmf.size();
            s.y_alphabet = s.distortion.cols;
            s.horizon = f.at("horizon").get<std::size_t>();
            s.check();
            cfg.finite = std::move(s);
        }
    } catch (const json::exception& e) {
        throw config_error(std::string("source block: ") + e.what());
    } catch (const nard::precondition_error& e) {
        throw config_error(std::string("source block: ") + e.what());
    }
    cfg.parameters = doc.value("parameters", json::object());
    cfg.output = doc.value("output", std::string{});
    return cfg;
}

double param_num(const json& p, const char* key, double fallback) {
    if (!p.contains(key)) return fallback;
    if (!p[key].is_number()) throw config_error(std::string("parameter ") + key + " must be numeric");
    return p[key].get<double>();
}

/// Channel noise covariance from the 'Q' parameter (diagonal entries);
/// defaults to the identity.
nard::Matrix channel_q(const json& p, std::size_t dims) {
    if (!p.contains("Q")) return nard::Matrix::identity(dims);
    const nard::Vector diag = vector_from(p["Q"], "parameter Q");
    if (diag.size() != dims)
        throw config_error("parameter Q must list one diagonal entry per observation dimension");
    for (double v : diag)
        if (!(v > 0.0)) throw config_error("parameter Q entries must be positive");
    return nard::Matrix::diagonal(diag);
}

struct OutputTarget {
    std::ofstream file;
    bool to_file = false;
    std::ostream& stream() { return to_file ? file : std::cout; }

    explicit OutputTarget(const std::string& path) {
        if (!path.empty()) {
            file.open(path, std::ios::binary | std::ios::trunc);
            if (!file) throw config_error("cannot open output file: " + path);
            to_file = true;
        }
    }
};

const nard::GaussMarkovSource& need_gauss(const RunConfig& cfg) {
    if (!cfg.gauss) throw config_error("this command needs a gauss_markov source");
    return *cfg.gauss;
}

/// Commands that run the coupled recursion require a source passing the
/// mode and covariance checks.
const nard::GaussMarkovSource& need_valid_gauss(const RunConfig& cfg) {
    const nard::GaussMarkovSource& src = need_gauss(cfg);
    const nard::ValidationReport rep = nard::validate(src);
    if (!rep.pass)
        throw nard::model_error("source failed validation:\n" + rep.summary());
    return src;
}

const nard::FiniteSource& need_finite(const RunConfig& cfg) {
    if (!cfg.finite) throw config_error("this command needs a finite source");
    return *cfg.finite;
}

std::string rate_line(double nats, const std::string& unit) {
    std::ostringstream os;
    if (unit == "bits")
        os << nard::csv::num(nats / std::log(2.0)) << " bits";
    else
        os << nard::csv::num(nats) << " nats";
    return os.str();
}

int cmd_validate(const RunConfig& cfg, OutputTarget& out) {
    if (cfg.gauss) {
        const nard::ValidationReport rep = nard::validate(*cfg.gauss);
        out.stream() << rep.summary();
        return rep.pass ? 0 : 1;
    }
    need_finite(cfg); // construction already ran check()
    out.stream() << "finite source tables are consistent\n";
    return 0;
}

int cmd_stationary(const RunConfig& cfg, OutputTarget& out, const std::string& unit) {
    const nard::GaussMarkovSource& src = need_valid_gauss(cfg);
    const json& p = cfg.parameters;
    const nard::Matrix q = channel_q(p, src.obs_dim());
    const double tol = param_num(p, "tol", 1e-12);
    const auto max_iter = static_cast<std::size_t>(param_num(p, "max_iter", 20000));

    double d;
    if (p.contains("D") == p.contains("R"))
        throw config_error("stationary needs exactly one of parameters D or R");
    if (p.contains("D")) {
        d = param_num(p, "D", 0.0);
    } else {
        const double rate = param_num(p, "R", 0.0);
        const nard::RDPoint pt = nard::rna_inverse(src, rate, q, tol, max_iter);
        d = pt.distortion;
        out.stream() << "distortion for rate " << rate_line(rate, unit) << ": "
                     << nard::csv::num(d) << "\n";
    }

    const nard::StationarySolution sol = nard::stationary_solution(src, d, q, tol, max_iter);
    auto& os = out.stream();
    os << "requested distortion: " << nard::csv::num(d) << "\n";
    os << "achieved distortion:  " << nard::csv::num(sol.distortion) << "\n";
    os << "rate: " << rate_line(sol.rate_nats, unit) << "\n";
    os << "power: " << nard::csv::num(sol.power) << "\n";
    os << "iterations: " << sol.iterations << ", residual: " << nard::csv::num(sol.residual)
       << "\n";
    os << "innovation eigenvalues:";
    for (double v : sol.lambda_inf) os << ' ' << nard::csv::num(v);
    os << "\nper-dimension distortion:";
    for (double v : sol.operators.allocation.delta) os << ' ' << nard::csv::num(v);
    os << "\nper-dimension gain:";
    for (double v : sol.operators.allocation.eta) os << ' ' << nard::csv::num(v);
    os << "\nerror covariance:\n";
    for (std::size_t i = 0; i < sol.sigma_inf.rows; ++i) {
        for (std::size_t j = 0; j < sol.sigma_inf.cols; ++j)
            os << (j ? " " : "  ") << nard::csv::num(sol.sigma_inf(i, j));
        os << "\n";
    }
    return 0;
}

int cmd_rd_curve(const RunConfig& cfg, OutputTarget& out) {
    const nard::GaussMarkovSource& src = need_valid_gauss(cfg);
    const json& p = cfg.parameters;
    if (!p.contains("D_grid")) throw config_error("rd-curve needs parameter D_grid");
    const nard::Vector grid = vector_from(p["D_grid"], "parameter D_grid");
    const nard::Matrix q = channel_q(p, src.obs_dim());
    const double tol = param_num(p, "tol", 1e-12);
    const auto max_iter = static_cast<std::size_t>(param_num(p, "max_iter", 20000));
    const auto points = nard::sweep(src, grid, q, tol, max_iter);
    nard::csv::write_rd_curve(out.stream(), points);
    return 0;
}

int cmd_simulate(const RunConfig& cfg, OutputTarget& out, std::optional<std::uint64_t> seed_flag) {
    const nard::GaussMarkovSource& src = need_valid_gauss(cfg);
    const json& p = cfg.parameters;
    const nard::Matrix q = channel_q(p, src.obs_dim());
    const double d = param_num(p, "D", 0.0);
    if (!(d > 0.0)) throw config_error("simulate needs parameter D > 0");
    const auto steps = static_cast<std::size_t>(param_num(p, "T", 0.0));
    if (steps == 0) throw config_error("simulate needs parameter T >= 1");
    const double tol = param_num(p, "tol", 1e-12);
    const auto max_iter = static_cast<std::size_t>(param_num(p, "max_iter", 20000));
    const auto seed = seed_flag.value_or(static_cast<std::uint64_t>(param_num(p, "seed", 0.0)));

    const nard::StationarySolution sol = nard::stationary_solution(src, d, q, tol, max_iter);
    const nard::SimulationReport rep = nard::simulate_pipeline(src, sol, steps, seed);
    nard::csv::write_simulation(out.stream(), rep);
    out.stream().flush(); // the trace is complete before the summary goes out

    const double target = sol.distortion;
    std::cerr << "empirical distortion " << nard::csv::num(rep.empirical_distortion) << " (se "
              << nard::csv::num(rep.distortion_se) << "), target " << nard::csv::num(target)
              << ", relative gap "
              << nard::csv::num(std::abs(rep.empirical_distortion - target) / target) << "\n";
    std::cerr << "empirical power " << nard::csv::num(rep.empirical_power) << " (se "
              << nard::csv::num(rep.power_se) << "), predicted " << nard::csv::num(sol.power)
              << "\n";
    return 0;
}

int cmd_solve_kernel(const RunConfig& cfg, OutputTarget& out, const std::string& dump_path) {
    const nard::FiniteSource& src = need_finite(cfg);
    const json& p = cfg.parameters;
    const double d = param_num(p, "D", 0.0);
    if (!(d > 0.0)) throw config_error("solve-kernel needs parameter D > 0");
    const double tol = param_num(p, "tol", 1e-9);
    const nard::SolverResult res = nard::solve_for_distortion(src, d, tol);
    nard::csv::write_solver_result(out.stream(), res);
    if (!dump_path.empty()) {
        std::ofstream dump(dump_path, std::ios::binary | std::ios::trunc);
        if (!dump) throw config_error("cannot open kernel dump file: " + dump_path);
        nard::csv::dump_kernel(dump, res.kernel);
    }
    return 0;
}

int cmd_oracle_check(const RunConfig& cfg, OutputTarget& out) {
    const nard::FiniteSource& src = need_finite(cfg);
    const json& p = cfg.parameters;
    const double d = param_num(p, "D", 0.0);
    if (!(d > 0.0)) throw config_error("oracle-check needs parameter D > 0");
    const double tol = param_num(p, "tol", 1e-9);
    const double tol_match = param_num(p, "tol_match", 1e-4);

    const nard::SolverResult res = nard::solve_for_distortion(src, d, tol);
    const double oracle = nard::brute_force_oracle(src, d);
    const double gap = std::abs(res.rate_per_letter_nats() - oracle);
    auto& os = out.stream();
    os << "solver rate: " << nard::csv::num(res.rate_per_letter_nats()) << " nats/letter\n";
    os << "oracle rate: " << nard::csv::num(oracle) << " nats/letter\n";
    os << "gap: " << nard::csv::num(gap) << " (tolerance " << nard::csv::num(tol_match) << ")\n";
    if (gap > tol_match) {
        std::cerr << "oracle-check: solver and oracle disagree beyond tolerance\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonanticipative rate-distortion toolbox"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string rate_unit = "nats";
    std::string dump_path;
    std::optional<std::uint64_t> seed;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"validate", "check detectability, stabilizability and covariance assumptions"},
        {"stationary", "stationary solution for a distortion budget D or target rate R"},
        {"rd-curve", "rate-distortion curve over D_grid, written as CSV"},
        {"simulate", "Monte Carlo run of the realized pipeline, written as CSV"},
        {"solve-kernel", "optimal causal kernel of a finite source at distortion D"},
        {"oracle-check", "compare the kernel solver against the brute-force reference"}};
    for (const auto& [name, blurb] : commands) {
        CLI::App* sub = app.add_subcommand(name, blurb);
        sub->add_option("--config", config_path, "path to the JSON configuration")->required();
        sub->add_option("--out", out_path, "output path (default: config 'output' or stdout)");
        sub->add_option("--seed", seed, "override the configured random seed");
        sub->add_option("--rate-unit", rate_unit, "nats or bits")
            ->check(CLI::IsMember({"nats", "bits"}));
        if (name == "solve-kernel")
            sub->add_option("--dump-kernel", dump_path, "also write the kernel tables here");
    }

    CLI11_PARSE(app, argc, argv);
    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();

    try {
        RunConfig cfg = load_config(config_path, command);
        if (sub->count("--rate-unit") == 0 && cfg.parameters.contains("rate_unit")) {
            rate_unit = cfg.parameters["rate_unit"].get<std::string>();
            if (rate_unit != "nats" && rate_unit != "bits")
                throw config_error("parameter rate_unit must be 'nats' or 'bits'");
        }
        const std::string target = out_path.empty() ? cfg.output : out_path;
        OutputTarget out(target);
        try {
            if (command == "validate") return cmd_validate(cfg, out);
            if (command == "stationary") return cmd_stationary(cfg, out, rate_unit);
            if (command == "rd-curve") return cmd_rd_curve(cfg, out);
            if (command == "simulate") return cmd_simulate(cfg, out, seed);
            if (command == "solve-kernel") return cmd_solve_kernel(cfg, out, dump_path);
            if (command == "oracle-check") return cmd_oracle_check(cfg, out);
            throw config_error("unknown command: " + command);
        } catch (const config_error&) {
            throw;
        } catch (const nard::error& e) {
            std::cerr << command << ": " << e.what() << "\n";
            return 1;
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
