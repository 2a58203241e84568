// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "baret/errors.hpp"
#include "baret/latent.hpp"

namespace baret {

// Guidance scale here is the classifier-free guidance weight, not the
// embedding interpolation parameter. eta is fixed at 0 (deterministic
// DDIM); the field exists so configs serialize the full sampler identity.
struct SamplerConfig {
    double guidance_scale = 7.5;
    int steps = 50;
    double eta = 0.0;
};

inline SamplerConfig inversion_sampler(int steps = 50) { return {1.0, steps, 0.0}; }

// eps_uncond + w * (eps_cond - eps_uncond). w = 0 and w = 1 return the
// respective input unchanged.
inline LatentTensor cfg_combine(const LatentTensor& eps_uncond, const LatentTensor& eps_cond,
                                double guidance_scale) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    if (!std::isfinite(guidance_scale))
        throw ParameterError("cfg_combine: guidance scale must be finite");
    if (guidance_scale == 0.0) return eps_uncond;
    if (guidance_scale == 1.0) return eps_cond;
    LatentTensor out = eps_uncond;
    const float w = float(guidance_scale);
    out.data = eps_uncond.data + w * (eps_cond.data - eps_uncond.data);
    return out;
}

inline void check_abar(double abar, const char* where) {
    if (!(abar > 0.0 && abar <= 1.0))
        throw ParameterError(std::string(where) + ": alpha_bar must lie in (0,1]");
}

// One deterministic DDIM update toward lower noise:
//   x0_hat = (z_t - sqrt(1-abar_t) * eps) / sqrt(abar_t)
//   z_prev = sqrt(abar_prev) * x0_hat + sqrt(1-abar_prev) * eps
inline LatentTensor ddim_sample_step(const LatentTensor& z_t, const LatentTensor& eps,
                                     double abar_t, double abar_prev) {
    require_same_shape(z_t, eps, "ddim_sample_step");
    check_abar(abar_t, "ddim_sample_step");
    check_abar(abar_prev, "ddim_sample_step");
    const float s_at = float(std::sqrt(abar_t));
    const float s1_at = float(std::sqrt(1.0 - abar_t));
    const float s_ap = float(std::sqrt(abar_prev));
    const float s1_ap = float(std::sqrt(1.0 - abar_prev));
    LatentTensor out = z_t;
    Eigen::MatrixXf x0 = (z_t.data - s1_at * eps.data) / s_at;
    out.data = s_ap * x0 + s1_ap * eps.data;
    return out;
}

// The same update run in the noising direction (abar_next < abar_t).
inline LatentTensor ddim_invert_step(const LatentTensor& z_t, const LatentTensor& eps,
                                     double abar_t, double abar_next) {
    require_same_shape(z_t, eps, "ddim_invert_step");
    check_abar(abar_t, "ddim_invert_step");
    check_abar(abar_next, "ddim_invert_step");
    return ddim_sample_step(z_t, eps, abar_t, abar_next);
}

// d z_prev / d eps for the update above; used by the embedding optimizer.
inline double ddim_step_eps_coeff(double abar_t, double abar_prev) {
    const double s_at = std::sqrt(abar_t);
    const double s1_at = std::sqrt(1.0 - abar_t);
    const double s_ap = std::sqrt(abar_prev);
    const double s1_ap = std::sqrt(1.0 - abar_prev);
    return s1_ap - s_ap * s1_at / s_at;
}

}  // namespace baret
