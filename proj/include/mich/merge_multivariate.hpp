#ifndef MICH_MERGE_MULTIVARIATE_HPP
#define MICH_MERGE_MULTIVARIATE_HPP

#include <algorithm>
#include <optional>

#include "mich/engine_multivariate.hpp"
#include "mich/postprocess.hpp"

namespace mich {

// Duplicate merge for the multivariate mean model: same greedy rule as the
// univariate fit, with every component in the single mean class, and the
// same ELBO guard so only genuinely redundant components are removed.
inline MultiMichFit merge_duplicates_multivariate(
    const Eigen::MatrixXd& y, MultiMichFit fit, double delta, double alpha_gate = 0.9,
    std::optional<double> beta = std::nullopt) {
    const std::size_t T = static_cast<std::size_t>(y.rows());
    const double threshold = beta ? *beta : default_merge_threshold(T, delta);
    std::vector<std::pair<std::size_t, std::size_t>> rejected;
    for (;;) {
        std::vector<bool> gate(fit.components.size());
        for (std::size_t i = 0; i < fit.components.size(); ++i) {
            auto cs = credible_set(fit.components[i].post.pi_bar, alpha_gate);
            gate[i] = detect(cs, T, delta);
        }
        double best = -1.0;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < fit.components.size(); ++i) {
            if (!gate[i]) continue;
            for (std::size_t j = i + 1; j < fit.components.size(); ++j) {
                if (!gate[j]) continue;
                if (std::find(rejected.begin(), rejected.end(), std::pair{i, j}) !=
                    rejected.end())
                    continue;
                double ip = 0.0;
                for (std::size_t t = 0; t < T; ++t)
                    ip += fit.components[i].post.pi_bar[t] * fit.components[j].post.pi_bar[t];
                if (ip > best) {
                    best = ip;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best < threshold) break;
        auto peak = [&](std::size_t i) {
            return *std::max_element(fit.components[i].post.pi_bar.begin(),
                                     fit.components[i].post.pi_bar.end());
        };
        const std::size_t drop = peak(bi) < peak(bj) ? bi : bj;
        MultiMichFit warm = fit;
        warm.components.erase(warm.components.begin() + static_cast<std::ptrdiff_t>(drop));
        MichConfig cfg = fit.cfg;
        --cfg.L;
        warm.cfg = cfg;
        const int merges = fit.diagnostics.merges + 1;
        MultiMichFit merged = backfit_multivariate(y, cfg, std::nullopt, warm);
        if (merged.elbo() < fit.elbo() - 1e-9 * std::abs(fit.elbo())) {
            rejected.emplace_back(bi, bj);
            continue;
        }
        fit = std::move(merged);
        fit.diagnostics.merges = merges;
        rejected.clear();
    }
    return fit;
}

}  // namespace mich

#endif  // MICH_MERGE_MULTIVARIATE_HPP
