#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mich/bench.hpp"
#include "mich/csv.hpp"
#include "mich/engine.hpp"
#include "mich/engine_multivariate.hpp"
#include "mich/engine_poisson.hpp"
#include "mich/merge_multivariate.hpp"
#include "mich/metrics.hpp"
#include "mich/postprocess.hpp"
#include "mich/priors.hpp"
#include "mich/report.hpp"
#include "mich/simulate.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_data = 2;
constexpr int exit_numerical = 3;

struct DetectArgs {
    std::string input;
    std::string out;
    std::string model = "gaussian";
    int L = 0, K = 0, J = 0;
    bool auto_counts = false;
    std::string classes = "J";
    double alpha = 0.1;
    double delta = 0.5;
    double tol = 1e-5;
    double omega0 = 1e-3, u0 = 1e-3, v0 = 1e-3;
    std::string prior = "weighted";
    bool no_intercept = false;
    bool no_reverse = false;
    bool no_merge = false;
    std::uint64_t seed = 0;
};

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

mich::MichConfig base_config(const DetectArgs& a) {
    mich::MichConfig cfg;
    cfg.L = a.L;
    cfg.K = a.K;
    cfg.J = a.J;
    cfg.prior.omega0 = a.omega0;
    cfg.prior.u0 = a.u0;
    cfg.prior.v0 = a.v0;
    cfg.uniform_locations = a.prior == "uniform";
    cfg.tol = a.tol;
    cfg.estimate_intercept = !a.no_intercept;
    cfg.reverse_restart = !a.no_reverse;
    return cfg;
}

std::vector<mich::SearchClass> parse_classes(const std::string& s) {
    std::vector<mich::SearchClass> out;
    for (char ch : s) {
        switch (ch) {
            case 'L': out.push_back(mich::SearchClass::L); break;
            case 'K': out.push_back(mich::SearchClass::K); break;
            case 'J': out.push_back(mich::SearchClass::J); break;
            case ',': break;
            default: throw mich::DomainError("unknown class in --classes");
        }
    }
    if (out.empty()) throw mich::DomainError("--classes must name at least one of L,K,J");
    return out;
}

int cmd_detect(const DetectArgs& a) {
    mich::CsvTable table = mich::read_csv_file(a.input);
    const std::size_t T = table.rows();
    nlohmann::json doc;

    if (a.model == "gaussian" || a.model == "poisson") {
        if (table.cols() != 1)
            throw mich::CsvError("expected a single series column", 1);
        const std::vector<double>& y = table.columns[0];
        mich::MichConfig cfg = base_config(a);
        mich::MichFit fit;
        if (a.model == "poisson") {
            cfg.model = mich::Model::poisson;
            if (!a.auto_counts && a.L < 1)
                throw mich::DomainError("detect: poisson needs -L >= 1");
            cfg.L = a.auto_counts ? 0 : a.L;
            cfg.K = cfg.J = 0;
            if (a.auto_counts) {
                fit = mich::auto_select_count<mich::MichFit>(
                    T, [&](int n, const mich::MichFit* warm) {
                        mich::MichConfig c = cfg;
                        c.L = n;
                        return warm ? mich::backfit_poisson(y, c, *warm)
                                    : mich::backfit_poisson(y, c);
                    });
            } else {
                fit = mich::backfit_poisson(y, cfg);
            }
            if (!a.no_merge) {
                auto refit = [&](const mich::MichFit& warm, mich::ComponentClass) {
                    mich::MichConfig c = warm.cfg;
                    --c.L;
                    mich::MichFit w = warm;
                    w.cfg = c;
                    return mich::backfit_poisson(y, c, w);
                };
                fit = mich::merge_duplicates(std::move(fit), T, a.delta, 0.9, std::nullopt,
                                             refit);
            }
        } else {
            if (a.auto_counts) {
                fit = mich::auto_select(y, cfg, parse_classes(a.classes));
            } else {
                if (cfg.total() < 1)
                    throw mich::DomainError("detect: need at least one of -L/-K/-J");
                fit = mich::reverse_restart_fit(y, cfg);
            }
            if (!a.no_merge) fit = mich::merge_duplicates(y, std::move(fit), a.delta);
        }
        auto rep = mich::summarize(fit, T, a.alpha, a.delta);
        doc = mich::detection_report(rep, cfg.model, T, 1, fit.mu0, fit.lambda0, fit.elbo(),
                                     fit.iterations, fit.cfg.L, fit.cfg.K, fit.cfg.J);
    } else if (a.model == "mvmean") {
        const std::size_t d = table.cols();
        Eigen::MatrixXd y(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(d));
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t t = 0; t < T; ++t)
                y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
                    table.columns[c][t];
        mich::MichConfig cfg = base_config(a);
        cfg.model = mich::Model::multivariate_mean;
        cfg.K = cfg.J = 0;
        mich::MultiMichFit fit;
        if (a.auto_counts) {
            fit = mich::auto_select_count<mich::MultiMichFit>(
                T, [&](int n, const mich::MultiMichFit* warm) {
                    mich::MichConfig c = cfg;
                    c.L = n;
                    return warm ? mich::backfit_multivariate(y, c, std::nullopt, *warm)
                                : mich::backfit_multivariate(y, c);
                });
        } else {
            if (cfg.L < 1) throw mich::DomainError("detect: mvmean needs -L >= 1");
            fit = mich::reverse_restart_multivariate(y, cfg);
        }
        if (!a.no_merge) fit = mich::merge_duplicates_multivariate(y, std::move(fit), a.delta);
        mich::ChangeReport rep;
        for (const mich::MultiComponent& c : fit.components)
            rep.components.push_back(mich::detail::report_one(
                mich::ComponentClass::mean, c.post.pi_bar, T, a.alpha, a.delta));
        mich::detail::tally(rep);
        doc = mich::detection_report(rep, cfg.model, T, d, 0.0, 1.0, fit.elbo(),
                                     fit.iterations, static_cast<int>(fit.components.size()),
                                     0, 0);
        doc["mu0_vector"] = std::vector<double>(fit.mu0.data(), fit.mu0.data() + fit.mu0.size());
    } else {
        throw mich::DomainError("unknown --model " + a.model);
    }
    write_text(a.out, doc.dump(2) + "\n");
    return exit_ok;
}

struct SimArgs {
    std::size_t T = 100;
    int changes = 2;
    std::size_t min_space = 15;
    double C = std::sqrt(200.0);
    std::string noise = "gaussian";
    double theta = 0.3;
    double nu = 4.0;
    std::size_t d = 1;
    double p = 1.0;
    double rho = 0.0;
    bool vanishing = false;
    std::uint64_t seed = 1;
};

mich::SimulationSpec to_spec(const SimArgs& a) {
    mich::SimulationSpec spec;
    spec.T = a.T;
    spec.n_changes = a.changes;
    spec.min_space = a.min_space;
    spec.C = a.C;
    spec.d = a.d;
    spec.p = a.p;
    spec.rho = a.rho;
    spec.vanishing = a.vanishing;
    spec.nu = a.nu;
    spec.theta = a.theta;
    spec.seed = a.seed;
    if (a.noise == "gaussian") spec.noise = mich::NoiseKind::gaussian;
    else if (a.noise == "student") spec.noise = mich::NoiseKind::student;
    else if (a.noise == "laplace") spec.noise = mich::NoiseKind::laplace;
    else if (a.noise == "ma2") spec.noise = mich::NoiseKind::ma2;
    else throw mich::DomainError("unknown --noise " + a.noise);
    return spec;
}

nlohmann::json truth_json(const mich::GroundTruth& truth, const mich::SimulationSpec& spec) {
    nlohmann::json doc;
    doc["schema_version"] = "1";
    doc["T"] = spec.T;
    doc["d"] = spec.d;
    doc["seed"] = spec.seed;
    nlohmann::json tau = nlohmann::json::array();
    for (std::size_t t : truth.tau) tau.push_back(t + 1);
    doc["tau"] = std::move(tau);
    if (spec.d == 1) {
        doc["mu_segments"] = truth.mu_segments;
        doc["sigma_segments"] = truth.sigma_segments;
    } else {
        nlohmann::json mu = nlohmann::json::array();
        for (Eigen::Index r = 0; r < truth.mu_segments_multi.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < truth.mu_segments_multi.cols(); ++c)
                row.push_back(truth.mu_segments_multi(r, c));
            mu.push_back(std::move(row));
        }
        doc["mu_segments"] = std::move(mu);
    }
    return doc;
}

int cmd_simulate(const SimArgs& a, const std::string& out_data, const std::string& out_truth) {
    const mich::SimulationSpec spec = to_spec(a);
    std::string csv;
    mich::GroundTruth truth;
    if (a.d == 1) {
        auto [y, tr] = mich::generate_sim1(spec);
        truth = std::move(tr);
        csv = "y\n";
        for (double v : y) csv += format_double(v) + "\n";
    } else {
        auto [y, tr] = mich::generate_sim2(spec);
        truth = std::move(tr);
        for (std::size_t c = 0; c < a.d; ++c) csv += (c ? "," : "") + ("y" + std::to_string(c + 1));
        csv += "\n";
        for (Eigen::Index t = 0; t < y.rows(); ++t) {
            for (Eigen::Index c = 0; c < y.cols(); ++c)
                csv += (c ? "," : "") + format_double(y(t, c));
            csv += "\n";
        }
    }
    write_text(out_data, csv);
    if (!out_truth.empty()) write_text(out_truth, truth_json(truth, spec).dump(2) + "\n");
    return exit_ok;
}

int cmd_bench(const SimArgs& a, const DetectArgs& d, int replicates, const std::string& out) {
    mich::SimulationSpec spec = to_spec(a);
    mich::BenchConfig bench;
    bench.mich = base_config(d);
    bench.mich.tol = d.tol;
    bench.mich.model = a.d > 1 ? mich::Model::multivariate_mean : mich::Model::gaussian;
    bench.auto_counts = d.auto_counts;
    bench.merge = !d.no_merge;
    bench.alpha = d.alpha;
    bench.delta = d.delta;
    auto result = mich::run_bench(spec, bench, replicates);
    std::string csv = "bias,hausdorff,fpsle,fnsle,ci_len,ccd,time_s\n";
    const mich::MetricsRow& m = result.mean;
    csv += format_double(m.bias) + "," + format_double(m.hausdorff) + "," +
           format_double(m.fpsle) + "," + format_double(m.fnsle) + "," +
           format_double(m.mean_ci_length) + "," + format_double(mich::ccd_ratio(m)) + "," +
           format_double(m.runtime_seconds) + "\n";
    write_text(out, csv);
    if (result.failures > 0)
        std::cerr << result.failures << " replicate(s) failed\n";
    return exit_ok;
}

int cmd_priors(const std::string& kind, std::size_t T, std::size_t d, const std::string& out) {
    mich::LocationPrior prior;
    if (kind == "uniform") prior = mich::uniform_prior(T);
    else if (kind == "weighted-mean") prior = mich::weighted_mean_prior(T, d);
    else if (kind == "weighted-var") prior = mich::weighted_var_prior(T);
    else if (kind == "weighted-meanvar") prior = mich::weighted_meanvar_prior(T);
    else throw mich::DomainError("unknown --kind " + kind);
    std::string csv;
    for (std::size_t t = 0; t < prior.pi.size(); ++t)
        csv += (t ? "," : "") + format_double(prior.pi[t]);
    csv += "\n";
    write_text(out, csv);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MICH change-point detection"};
    app.require_subcommand(1);

    DetectArgs da;
    auto* detect = app.add_subcommand("detect", "fit the model and report change-points");
    detect->add_option("input", da.input, "input CSV, one column per series")->required();
    detect->add_option("--model", da.model, "gaussian|mvmean|poisson");
    detect->add_option("-L", da.L, "mean components");
    detect->add_option("-K", da.K, "variance components");
    detect->add_option("-J", da.J, "joint components");
    detect->add_flag("--auto", da.auto_counts, "select counts by ELBO");
    detect->add_option("--classes", da.classes, "classes searched by --auto, e.g. J or L,K");
    detect->add_option("--alpha", da.alpha, "credible set level");
    detect->add_option("--delta", da.delta, "detection rule exponent");
    detect->add_option("--tol", da.tol, "ELBO relative tolerance");
    detect->add_option("--omega0", da.omega0, "prior jump precision");
    detect->add_option("--u0", da.u0, "prior shape");
    detect->add_option("--v0", da.v0, "prior rate");
    detect->add_option("--prior", da.prior, "uniform|weighted location prior");
    detect->add_flag("--no-intercept", da.no_intercept, "fix mu0, lambda0 instead of EB");
    detect->add_flag("--no-reverse", da.no_reverse, "disable the reversed-series restart");
    detect->add_flag("--no-merge", da.no_merge, "disable duplicate merging");
    detect->add_option("--seed", da.seed, "accepted for interface parity");
    detect->add_option("--out", da.out, "report path (default stdout)");

    SimArgs sa;
    std::string sim_out = "data.csv", sim_truth = "truth.json";
    auto* simulate = app.add_subcommand("simulate", "generate benchmark data");
    simulate->add_option("--T", sa.T, "series length");
    simulate->add_option("--J,--changes", sa.changes, "number of changes");
    simulate->add_option("--min-space", sa.min_space, "minimum spacing");
    simulate->add_option("--C", sa.C, "signal constant");
    simulate->add_option("--noise", sa.noise, "gaussian|student|laplace|ma2");
    simulate->add_option("--theta", sa.theta, "ma2 coefficient");
    simulate->add_option("--nu", sa.nu, "student degrees of freedom");
    simulate->add_option("--d", sa.d, "dimension (d > 1 switches to the mean study)");
    simulate->add_option("--p", sa.p, "active proportion");
    simulate->add_option("--rho", sa.rho, "spatial correlation");
    simulate->add_flag("--vanishing", sa.vanishing, "shrink jumps by sqrt(active count)");
    simulate->add_option("--seed", sa.seed, "seed");
    simulate->add_option("--out", sim_out, "data CSV path");
    simulate->add_option("--truth", sim_truth, "truth JSON path (empty to skip)");

    SimArgs ba;
    DetectArgs bd;
    int replicates = 100;
    std::string bench_out;
    auto* bench = app.add_subcommand("bench", "replicated simulation benchmark");
    bench->add_option("--T", ba.T, "series length");
    bench->add_option("--J,--changes", ba.changes, "number of changes");
    bench->add_option("--min-space", ba.min_space, "minimum spacing");
    bench->add_option("--C", ba.C, "signal constant");
    bench->add_option("--noise", ba.noise, "gaussian|student|laplace|ma2");
    bench->add_option("--theta", ba.theta, "ma2 coefficient");
    bench->add_option("--nu", ba.nu, "student degrees of freedom");
    bench->add_option("--d", ba.d, "dimension");
    bench->add_option("--p", ba.p, "active proportion");
    bench->add_option("--rho", ba.rho, "spatial correlation");
    bench->add_option("--seed", ba.seed, "master seed");
    bench->add_option("--replicates", replicates, "replicate count");
    bench->add_flag("--auto", bd.auto_counts, "select counts by ELBO");
    bench->add_option("--alpha", bd.alpha, "credible set level");
    bench->add_option("--delta", bd.delta, "detection rule exponent");
    bench->add_option("--tol", bd.tol, "ELBO relative tolerance");
    bench->add_flag("--no-merge", bd.no_merge, "disable duplicate merging");
    bench->add_flag("--no-reverse", bd.no_reverse, "disable reverse restarts");
    bench->add_option("--out", bench_out, "metrics CSV path (default stdout)");

    std::string prior_kind = "weighted-meanvar";
    std::size_t prior_T = 100, prior_d = 1;
    std::string prior_out;
    auto* priors = app.add_subcommand("priors", "emit a location prior as CSV");
    priors->add_option("--kind", prior_kind,
                       "uniform|weighted-mean|weighted-var|weighted-meanvar");
    priors->add_option("--T", prior_T, "series length");
    priors->add_option("--d", prior_d, "dimension (weighted-mean)");
    priors->add_option("--out", prior_out, "output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (detect->parsed()) return cmd_detect(da);
        if (simulate->parsed()) return cmd_simulate(sa, sim_out, sim_truth);
        if (bench->parsed()) return cmd_bench(ba, bd, replicates, bench_out);
        if (priors->parsed()) return cmd_priors(prior_kind, prior_T, prior_d, prior_out);
    } catch (const mich::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const mich::CsvError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const mich::DomainError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}
