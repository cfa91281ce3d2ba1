#ifndef MICH_METRICS_HPP
#define MICH_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "mich/postprocess.hpp"

namespace mich {

struct MetricsRow {
    double bias = 0.0;       // |J* - J_hat|
    double hausdorff = 0.0;
    double fpsle = 0.0;
    double fnsle = 0.0;
    double mean_ci_length = 0.0;
    double ccd_numerator = 0.0;
    double ccd_denominator = 0.0;
    double runtime_seconds = 0.0;
};

namespace detail {

// Pad a one-based change-point list with the conventional endpoints 1, T+1.
inline std::vector<double> with_endpoints(const std::vector<std::size_t>& tau_zero_based,
                                          std::size_t T) {
    std::vector<double> out;
    out.reserve(tau_zero_based.size() + 2);
    out.push_back(1.0);
    for (std::size_t t : tau_zero_based) out.push_back(static_cast<double>(t + 1));
    out.push_back(static_cast<double>(T + 1));
    return out;
}

inline double directed_max_min(const std::vector<double>& from, const std::vector<double>& to) {
    double worst = 0.0;
    for (double a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (double b : to) best = std::min(best, std::abs(a - b));
        worst = std::max(worst, best);
    }
    return worst;
}

inline double fpsle_directed(const std::vector<double>& est, const std::vector<double>& tru) {
    // est and tru both carry the endpoint padding; each estimated segment is
    // matched to the true segment containing its midpoint
    const std::size_t J_hat = est.size() - 2;
    double total = 0.0;
    for (std::size_t j = 1; j < est.size(); ++j) {
        const double mid = 0.5 * (est[j - 1] + est[j]);
        std::size_t i = 1;
        while (i + 1 < tru.size() && !(tru[i - 1] < mid && mid <= tru[i])) ++i;
        total += std::abs(est[j - 1] - tru[i - 1]) + std::abs(est[j] - tru[i]);
    }
    return total / (2.0 * static_cast<double>(J_hat + 1));
}

}  // namespace detail

// Two-sided Hausdorff-style error with endpoint padding on both sets.
inline double hausdorff(const std::vector<std::size_t>& tau_hat,
                        const std::vector<std::size_t>& tau, std::size_t T) {
    auto a = detail::with_endpoints(tau_hat, T);
    auto b = detail::with_endpoints(tau, T);
    return detail::directed_max_min(b, a) + detail::directed_max_min(a, b);
}

// False positive and false negative sensitive location errors.
inline std::pair<double, double> fpsle_fnsle(const std::vector<std::size_t>& tau_hat,
                                             const std::vector<std::size_t>& tau,
                                             std::size_t T) {
    auto est = detail::with_endpoints(tau_hat, T);
    auto tru = detail::with_endpoints(tau, T);
    return {detail::fpsle_directed(est, tru), detail::fpsle_directed(tru, est)};
}

inline double ccd_window(std::size_t T) {
    return std::min(std::sqrt(static_cast<double>(T)) / 2.0, 15.0);
}

// Coverage conditional on detection: a true change counts toward the
// denominator when some estimate lands within the window, and toward the
// numerator when additionally one of those in-window estimates' credible sets
// covers it.
inline void ccd_update(MetricsRow& row, const std::vector<std::size_t>& tau,
                       const std::vector<ComponentReport>& detections, std::size_t T) {
    const double w = ccd_window(T);
    for (std::size_t true_cp : tau) {
        bool in_window = false, covered = false;
        for (const ComponentReport& r : detections) {
            if (!r.detected) continue;
            if (std::abs(static_cast<double>(r.map_index) - static_cast<double>(true_cp)) <= w) {
                in_window = true;
                if (std::binary_search(r.cs.indices.begin(), r.cs.indices.end(), true_cp))
                    covered = true;
            }
        }
        if (in_window) {
            row.ccd_denominator += 1.0;
            if (covered) row.ccd_numerator += 1.0;
        }
    }
}

}  // namespace mich

#endif  // MICH_METRICS_HPP
