#ifndef MICH_POSTPROCESS_HPP
#define MICH_POSTPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "mich/engine.hpp"

namespace mich {

// Smallest index attaining the maximum posterior probability (zero-based).
inline std::size_t map_estimate(std::span<const double> pi_bar) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < pi_bar.size(); ++t)
        if (pi_bar[t] > pi_bar[best]) best = t;
    return best;
}

struct CredibleSet {
    std::vector<std::size_t> indices;  // sorted, zero-based
    double mass = 0.0;
    double alpha = 0.0;
    bool detected = false;
};

// Greedy level-(1-alpha) credible set: indices join in decreasing order of
// probability (ties toward the smaller index) until the mass is reached,
// which is a minimum-cardinality solution of the underlying knapsack.
inline CredibleSet credible_set(std::span<const double> pi_bar, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw DomainError("credible_set: alpha must lie in (0, 1)");
    std::vector<std::size_t> order(pi_bar.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pi_bar[a] > pi_bar[b]; });
    CredibleSet cs;
    cs.alpha = alpha;
    for (std::size_t idx : order) {
        cs.indices.push_back(idx);
        cs.mass += pi_bar[idx];
        if (cs.mass >= 1.0 - alpha) break;
    }
    std::sort(cs.indices.begin(), cs.indices.end());
    return cs;
}

// Detection rule: the set is small enough, |CS| <= (ln T)^(1+delta).
inline bool detect(const CredibleSet& cs, std::size_t T, double delta) {
    if (!(delta > 0.0)) throw DomainError("detect: delta must be positive");
    return static_cast<double>(cs.indices.size()) <=
           std::pow(std::log(static_cast<double>(T)), 1.0 + delta);
}

inline double default_merge_threshold(std::size_t T, double delta) {
    return std::pow(std::log(static_cast<double>(T)), 1.0 + delta) /
           (static_cast<double>(T) * static_cast<double>(T));
}

struct ComponentReport {
    ComponentClass cls;
    std::size_t map_index = 0;  // zero-based
    double map_probability = 0.0;
    CredibleSet cs;
    bool detected = false;
};

struct ChangeReport {
    std::vector<ComponentReport> components;
    int L_hat = 0, K_hat = 0, J_hat = 0, N_hat = 0;
};

namespace detail {

inline ComponentReport report_one(ComponentClass cls, std::span<const double> pi_bar,
                                  std::size_t T, double alpha, double delta) {
    ComponentReport r;
    r.cls = cls;
    r.map_index = map_estimate(pi_bar);
    r.map_probability = pi_bar[r.map_index];
    r.cs = credible_set(pi_bar, alpha);
    r.detected = detect(r.cs, T, delta);
    r.cs.detected = r.detected;
    return r;
}

inline void tally(ChangeReport& rep) {
    for (const ComponentReport& r : rep.components) {
        if (!r.detected) continue;
        ++rep.N_hat;
        switch (r.cls) {
            case ComponentClass::mean: ++rep.L_hat; break;
            case ComponentClass::var: ++rep.K_hat; break;
            case ComponentClass::meanvar: ++rep.J_hat; break;
            case ComponentClass::poisson_rate: ++rep.L_hat; break;
        }
    }
}

}  // namespace detail

inline ChangeReport summarize(const MichFit& fit, std::size_t T, double alpha,
                              double delta) {
    ChangeReport rep;
    for (const Component& c : fit.components)
        rep.components.push_back(detail::report_one(c.cls, c.pi_bar, T, alpha, delta));
    detail::tally(rep);
    return rep;
}

// Greedy duplicate merge. Candidates are same-class components whose
// alpha_gate-level credible sets pass the detection rule; pairs are tried by
// decreasing location overlap <pi_i, pi_i'> while the overlap exceeds beta,
// dropping the member with the smaller peak probability and refitting warm
// from the survivors. A merge only sticks if the refit ELBO does not fall:
// true duplicates gain the redundant component's KL cost back, while a pair
// covering two distinct changes loses likelihood, so the ELBO separates the
// two cases. `refit` maps a warm-start fit with one fewer component of the
// given class to a converged fit.
inline MichFit merge_duplicates(
    MichFit fit, std::size_t T, double delta, double alpha_gate,
    std::optional<double> beta,
    const std::function<MichFit(const MichFit&, ComponentClass)>& refit) {
    const double threshold = beta ? *beta : default_merge_threshold(T, delta);
    std::vector<std::pair<std::size_t, std::size_t>> rejected;
    for (;;) {
        std::vector<bool> gate(fit.components.size());
        for (std::size_t i = 0; i < fit.components.size(); ++i) {
            auto cs = credible_set(fit.components[i].pi_bar, alpha_gate);
            gate[i] = detect(cs, T, delta);
        }
        double best = -1.0;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < fit.components.size(); ++i) {
            if (!gate[i]) continue;
            for (std::size_t j = i + 1; j < fit.components.size(); ++j) {
                if (!gate[j] || fit.components[i].cls != fit.components[j].cls) continue;
                if (std::find(rejected.begin(), rejected.end(), std::pair{i, j}) !=
                    rejected.end())
                    continue;
                double ip = 0.0;
                for (std::size_t t = 0; t < fit.components[i].pi_bar.size(); ++t)
                    ip += fit.components[i].pi_bar[t] * fit.components[j].pi_bar[t];
                if (ip > best) {
                    best = ip;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best < threshold) break;
        const double peak_i =
            *std::max_element(fit.components[bi].pi_bar.begin(), fit.components[bi].pi_bar.end());
        const double peak_j =
            *std::max_element(fit.components[bj].pi_bar.begin(), fit.components[bj].pi_bar.end());
        const std::size_t drop = peak_i < peak_j ? bi : bj;
        const ComponentClass cls = fit.components[drop].cls;
        MichFit warm = fit;
        warm.components.erase(warm.components.begin() + static_cast<std::ptrdiff_t>(drop));
        const int merges = fit.diagnostics.merges + 1;
        MichFit merged = refit(warm, cls);
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

// merge_duplicates bound to the Gaussian backfitting engine.
inline MichFit merge_duplicates(std::span<const double> y, MichFit fit, double delta,
                                double alpha_gate = 0.9,
                                std::optional<double> beta = std::nullopt) {
    const std::size_t T = y.size();
    auto refit = [y](const MichFit& warm, ComponentClass cls) {
        MichConfig cfg = warm.cfg;
        switch (cls) {
            case ComponentClass::mean: --cfg.L; break;
            case ComponentClass::var: --cfg.K; break;
            case ComponentClass::meanvar: --cfg.J; break;
            case ComponentClass::poisson_rate:
                throw DomainError("merge_duplicates: poisson fits use their own refit");
        }
        MichFit w = warm;
        w.cfg = cfg;
        return backfit(y, cfg, w);
    };
    return merge_duplicates(std::move(fit), T, delta, alpha_gate, beta, refit);
}

// Single-count ELBO search shared by the model variants that only stack one
// component class. fit_at(n, warm) fits with n components, warm-starting from
// `warm` when non-null.
template <class Fit, class FitAt>
Fit auto_select_count(std::size_t T, FitAt fit_at) {
    const int patience =
        static_cast<int>(std::ceil(std::log(static_cast<double>(std::max<std::size_t>(T, 2)))));
    const int cap = static_cast<int>(std::ceil(
        static_cast<double>(T) / std::log(static_cast<double>(std::max<std::size_t>(T, 3)))));
    Fit current = fit_at(0, nullptr);
    Fit best = current;
    int stale = 0;
    for (int n = 1; n <= cap; ++n) {
        Fit cand = fit_at(n, &current);
        if (cand.elbo() < current.elbo()) {
            Fit cold = fit_at(n, nullptr);
            if (cold.elbo() > cand.elbo()) cand = std::move(cold);
        }
        current = std::move(cand);
        if (current.elbo() > best.elbo()) {
            best = current;
            stale = 0;
        } else if (++stale >= patience) {
            break;
        }
    }
    return best;
}

struct ComponentCounts {
    int L = 0, K = 0, J = 0;
};

enum class SearchClass { L, K, J };

// ELBO-guided selection of the component counts. Starts from the null model,
// greedily increments the class giving the largest converged ELBO, keeps
// searching ceil(ln T) steps past the running maximum, and retries from a
// cold start whenever a step decreases the ELBO. Returns the best fit seen.
inline MichFit auto_select(std::span<const double> y, MichConfig cfg,
                           std::vector<SearchClass> classes) {
    if (classes.empty()) throw DomainError("auto_select: need at least one class");
    const std::size_t T = y.size();
    const int patience =
        static_cast<int>(std::ceil(std::log(static_cast<double>(std::max<std::size_t>(T, 2)))));
    const int cap = static_cast<int>(std::ceil(
        static_cast<double>(T) / std::log(static_cast<double>(std::max<std::size_t>(T, 3)))));

    auto with_counts = [&cfg](ComponentCounts n) {
        MichConfig c = cfg;
        c.L = n.L;
        c.K = n.K;
        c.J = n.J;
        return c;
    };

    ComponentCounts counts;
    MichFit current = backfit(y, with_counts(counts));
    MichFit best = current;
    int stale = 0;

    while (counts.L + counts.K + counts.J < cap) {
        MichFit chosen;
        ComponentCounts chosen_counts;
        bool any = false;
        for (SearchClass cls : classes) {
            ComponentCounts next = counts;
            if (cls == SearchClass::L) ++next.L;
            if (cls == SearchClass::K) ++next.K;
            if (cls == SearchClass::J) ++next.J;
            MichFit cand = backfit(y, with_counts(next), current);
            if (!any || cand.elbo() > chosen.elbo()) {
                chosen = std::move(cand);
                chosen_counts = next;
                any = true;
            }
        }
        if (chosen.elbo() < current.elbo()) {
            // a decrease can mean the warm start trapped the fit; try cold
            MichFit cold = backfit(y, with_counts(chosen_counts));
            if (cold.elbo() > chosen.elbo()) chosen = std::move(cold);
        }
        counts = chosen_counts;
        current = std::move(chosen);
        if (current.elbo() > best.elbo()) {
            best = current;
            stale = 0;
        } else if (++stale >= patience) {
            break;
        }
    }
    return best;
}

}  // namespace mich

#endif  // MICH_POSTPROCESS_HPP
