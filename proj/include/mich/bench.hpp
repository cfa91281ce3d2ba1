#ifndef MICH_BENCH_HPP
#define MICH_BENCH_HPP

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "mich/engine.hpp"
#include "mich/engine_multivariate.hpp"
#include "mich/merge_multivariate.hpp"
#include "mich/metrics.hpp"
#include "mich/postprocess.hpp"
#include "mich/simulate.hpp"

namespace mich {

struct BenchConfig {
    MichConfig mich;           // model, counts, priors, tolerances
    bool auto_counts = false;  // select counts by ELBO instead of using cfg's
    bool merge = true;
    double alpha = 0.1;
    double delta = 0.5;
};

struct BenchResult {
    MetricsRow mean;  // per-replicate averages; ccd fields hold the ratio's parts
    std::vector<MetricsRow> rows;
    int failures = 0;
};

namespace detail {

inline int bench_threads() {
    if (const char* env = std::getenv("MICH_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

inline std::vector<std::size_t> detected_locations(const ChangeReport& rep) {
    std::vector<std::size_t> tau;
    for (const ComponentReport& r : rep.components)
        if (r.detected) tau.push_back(r.map_index);
    std::sort(tau.begin(), tau.end());
    return tau;
}

inline MetricsRow score_replicate(const ChangeReport& rep, const GroundTruth& truth,
                                  std::size_t T, int n_true, double seconds) {
    MetricsRow row;
    auto tau_hat = detected_locations(rep);
    row.bias = std::abs(static_cast<double>(n_true) - static_cast<double>(tau_hat.size()));
    row.hausdorff = hausdorff(tau_hat, truth.tau, T);
    auto [fp, fn] = fpsle_fnsle(tau_hat, truth.tau, T);
    row.fpsle = fp;
    row.fnsle = fn;
    double len = 0.0;
    int detected = 0;
    for (const ComponentReport& r : rep.components) {
        if (!r.detected) continue;
        len += static_cast<double>(r.cs.indices.size());
        ++detected;
    }
    row.mean_ci_length = detected > 0 ? len / detected : 0.0;
    ccd_update(row, truth.tau, rep.components, T);
    row.runtime_seconds = seconds;
    return row;
}

inline MetricsRow run_one_gaussian(const SimulationSpec& spec, const BenchConfig& cfg,
                                   std::uint64_t seed) {
    SimulationSpec s = spec;
    s.seed = seed;
    auto [y, truth] = generate_sim1(s);
    const auto start = std::chrono::steady_clock::now();
    MichFit fit;
    if (cfg.auto_counts) {
        fit = auto_select(y, cfg.mich, {SearchClass::J});
    } else {
        MichConfig mc = cfg.mich;
        mc.J = spec.n_changes;
        mc.L = mc.K = 0;
        fit = reverse_restart_fit(y, mc);
    }
    if (cfg.merge) fit = merge_duplicates(y, std::move(fit), cfg.delta);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    auto rep = summarize(fit, y.size(), cfg.alpha, cfg.delta);
    return score_replicate(rep, truth, y.size(), spec.n_changes, dt.count());
}

inline MetricsRow run_one_multivariate(const SimulationSpec& spec, const BenchConfig& cfg,
                                       std::uint64_t seed) {
    SimulationSpec s = spec;
    s.seed = seed;
    auto [y, truth] = generate_sim2(s);
    const auto start = std::chrono::steady_clock::now();
    MichConfig mc = cfg.mich;
    mc.L = spec.n_changes;
    mc.K = mc.J = 0;
    MultiMichFit fit = reverse_restart_multivariate(y, mc);
    if (cfg.merge) fit = merge_duplicates_multivariate(y, std::move(fit), cfg.delta);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    ChangeReport rep;
    for (const MultiComponent& c : fit.components)
        rep.components.push_back(detail::report_one(ComponentClass::mean, c.post.pi_bar,
                                                    static_cast<std::size_t>(y.rows()),
                                                    cfg.alpha, cfg.delta));
    detail::tally(rep);
    return score_replicate(rep, truth, static_cast<std::size_t>(y.rows()), spec.n_changes,
                           dt.count());
}

}  // namespace detail

// Run `replicates` independent draws of the configured simulation, fitting
// and scoring each one. Replicate r uses seed master ^ r, so the table is a
// pure function of the spec. Failed replicates are counted, not fatal.
inline BenchResult run_bench(const SimulationSpec& spec, const BenchConfig& cfg,
                             int replicates) {
    if (replicates < 1) throw DomainError("run_bench: need at least one replicate");
    BenchResult result;
    result.rows.resize(static_cast<std::size_t>(replicates));
    std::vector<char> ok(static_cast<std::size_t>(replicates), 0);

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= replicates) return;
            try {
                const std::uint64_t seed = spec.seed ^ static_cast<std::uint64_t>(r);
                result.rows[static_cast<std::size_t>(r)] =
                    cfg.mich.model == Model::multivariate_mean
                        ? detail::run_one_multivariate(spec, cfg, seed)
                        : detail::run_one_gaussian(spec, cfg, seed);
                ok[static_cast<std::size_t>(r)] = 1;
            } catch (const std::exception&) {
                ok[static_cast<std::size_t>(r)] = 0;
            }
        }
    };
    const int n_threads = std::min(detail::bench_threads(), replicates);
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    MetricsRow sum;
    int n_ok = 0;
    for (int r = 0; r < replicates; ++r) {
        if (!ok[static_cast<std::size_t>(r)]) {
            ++result.failures;
            continue;
        }
        const MetricsRow& row = result.rows[static_cast<std::size_t>(r)];
        sum.bias += row.bias;
        sum.hausdorff += row.hausdorff;
        sum.fpsle += row.fpsle;
        sum.fnsle += row.fnsle;
        sum.mean_ci_length += row.mean_ci_length;
        sum.ccd_numerator += row.ccd_numerator;
        sum.ccd_denominator += row.ccd_denominator;
        sum.runtime_seconds += row.runtime_seconds;
        ++n_ok;
    }
    if (n_ok > 0) {
        sum.bias /= n_ok;
        sum.hausdorff /= n_ok;
        sum.fpsle /= n_ok;
        sum.fnsle /= n_ok;
        sum.mean_ci_length /= n_ok;
        sum.runtime_seconds /= n_ok;
    }
    result.mean = sum;
    return result;
}

inline double ccd_ratio(const MetricsRow& row) {
    return row.ccd_denominator > 0.0 ? row.ccd_numerator / row.ccd_denominator : 0.0;
}

}  // namespace mich

#endif  // MICH_BENCH_HPP
