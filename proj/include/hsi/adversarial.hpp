#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hsi/classifier.hpp"

namespace hsi::adversarial {

struct AttackConfig {
    double epsilon = 0.03;     // l-inf radius around the (possibly noised) input
    double alpha = 0.01;       // ascent step size
    int steps = 10;
    double noise_sigma = 0.0;  // additive Gaussian noise std
    std::uint64_t seed = 0;
    bool random_start = false;  // start PGD from a uniform draw inside the ball

    // Throws on invalid values; returns a human-readable warning for legal
    // but questionable settings (alpha > epsilon), empty string otherwise.
    std::string validate() const;
};

// Adds i.i.d. zero-mean Gaussian noise with std noise_sigma to every
// coordinate. sigma == 0 returns the input bit-for-bit.
std::vector<double> atmospheric_noise(std::span<const double> values, double noise_sigma,
                                      std::uint64_t seed);

// Loss gradient w.r.t. the input at a candidate point; the engine below only
// ever needs the gradient, so tests can drive it with closed-form models.
using InputGradientFn = std::function<std::vector<double>(std::span<const double>)>;

// Called after every projected step with the current perturbation delta
// (x_current = x_original + delta). Lets tests verify the constraint holds
// at every iterate, not just at the end.
using StepObserver = std::function<void(int step, std::span<const double> delta)>;

// Iterated signed-gradient ascent. The perturbation delta is clipped to
// [-epsilon, +epsilon] componentwise after every step, so the returned point
// satisfies the l-inf constraint around `values` exactly.
std::vector<double> pgd_core(const InputGradientFn& gradient, std::span<const double> values,
                             const AttackConfig& config, const StepObserver& observer = {});

// PGD against the patch classifier: ascends the cross-entropy of the true
// label. Untargeted, no random start unless configured.
std::vector<double> pgd_attack(const classifier::Params& params,
                               std::span<const double> patch_values, int label,
                               const AttackConfig& config, const StepObserver& observer = {});

// Atmospheric noise first, then PGD around the noised input: the noise and
// the adversarial perturbation are separate budgets.
std::vector<double> compound_perturb(const classifier::Params& params,
                                     std::span<const double> patch_values, int label,
                                     const AttackConfig& config);

}  // namespace hsi::adversarial
