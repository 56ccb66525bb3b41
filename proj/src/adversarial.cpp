#include "hsi/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "hsi/errors.hpp"
#include "hsi/rng.hpp"

namespace hsi::adversarial {

std::string AttackConfig::validate() const {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be finite and >= 0");
    if (!(alpha > 0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and > 0");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma))
        throw ConfigError("noise_sigma must be finite and >= 0");
    if (alpha > epsilon && epsilon > 0)
        return "attack step alpha exceeds radius epsilon; each step will saturate the ball";
    return "";
}

std::vector<double> atmospheric_noise(std::span<const double> values, double noise_sigma,
                                      std::uint64_t seed) {
    if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
    std::vector<double> out(values.begin(), values.end());
    if (noise_sigma == 0.0) return out;
    Rng rng(seed);
    for (double& v : out) v += noise_sigma * rng.next_gaussian();
    return out;
}

std::vector<double> pgd_core(const InputGradientFn& gradient, std::span<const double> values,
                             const AttackConfig& config, const StepObserver& observer) {
    config.validate();
    const std::size_t n = values.size();
    std::vector<double> out(values.begin(), values.end());
    if (config.epsilon == 0.0) return out;  // degenerate ball

    std::vector<double> delta(n, 0.0);
    if (config.random_start) {
        Rng rng(derive_seed(config.seed, "pgd-start"));
        for (double& d : delta) d = rng.next_range(-config.epsilon, config.epsilon);
    }

    std::vector<double> point(n);
    for (int step = 1; step <= config.steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) point[i] = values[i] + delta[i];
        const std::vector<double> g = gradient(point);
        if (g.size() != n) throw DataError("input gradient size mismatch in PGD");
        for (std::size_t i = 0; i < n; ++i) {
            const double sign = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
            delta[i] = std::clamp(delta[i] + config.alpha * sign, -config.epsilon, config.epsilon);
        }
        if (observer) observer(step, delta);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double v = values[i] + delta[i];
        // x + delta rounds; nudge until the recomputed difference passes the
        // exact <= epsilon check (at most a couple of ulps)
        while (v - values[i] > config.epsilon) v = std::nextafter(v, -HUGE_VAL);
        while (values[i] - v > config.epsilon) v = std::nextafter(v, HUGE_VAL);
        out[i] = v;
    }
    return out;
}

std::vector<double> pgd_attack(const classifier::Params& params,
                               std::span<const double> patch_values, int label,
                               const AttackConfig& config, const StepObserver& observer) {
    if (label < 1) throw DataError("PGD attack needs a labeled sample");
    const InputGradientFn grad = [&](std::span<const double> x) {
        return classifier::grad_input(params, x, label);
    };
    return pgd_core(grad, patch_values, config, observer);
}

std::vector<double> compound_perturb(const classifier::Params& params,
                                     std::span<const double> patch_values, int label,
                                     const AttackConfig& config) {
    config.validate();
    const std::vector<double> noised =
        atmospheric_noise(patch_values, config.noise_sigma, config.seed);
    return pgd_attack(params, noised, label, config);
}

}  // namespace hsi::adversarial
