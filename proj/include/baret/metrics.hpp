// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "baret/errors.hpp"
#include "baret/latent.hpp"

namespace baret {

inline constexpr double kPsnrCap = 99.0;

// 10*log10(255^2 / MSE) over 8-bit channels, capped at 99 dB.
inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("psnr: image dimensions differ");
    double sum_sq = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = double(a.rgb[i]) - double(b.rgb[i]);
        sum_sq += d * d;
    }
    const double mse = sum_sq / double(a.rgb.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

inline double latent_mse(const LatentTensor& a, const LatentTensor& b) {
    require_same_shape(a, b, "latent_mse");
    return double((a.data - b.data).squaredNorm()) / double(a.data.size());
}

// PSNR in latent space against a unit peak; toy latents live in [0,1].
inline double latent_psnr(const LatentTensor& a, const LatentTensor& b, double peak = 1.0) {
    const double mse = latent_mse(a, b);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

// Plug-in interface for perceptual scorers. Pretrained models are external
// plug-ins; a missing scorer downgrades the report and never fails a run.
class PerceptualScorer {
public:
    virtual ~PerceptualScorer() = default;
    virtual std::string name() const = 0;
    // Image fidelity of `edited` against `original`, higher is closer.
    virtual double image_fidelity(const Image& original, const Image& edited) const = 0;
    // Alignment of `edited` with the target prompt, higher is better.
    virtual double text_alignment(const Image& edited, const std::string& prompt) const = 0;
};

inline std::map<std::string, std::shared_ptr<PerceptualScorer>>& scorer_registry() {
    static std::map<std::string, std::shared_ptr<PerceptualScorer>> registry;
    return registry;
}

inline void register_scorer(std::shared_ptr<PerceptualScorer> scorer) {
    scorer_registry()[scorer->name()] = std::move(scorer);
}

inline std::shared_ptr<PerceptualScorer> find_scorer(const std::string& name) {
    auto& reg = scorer_registry();
    auto it = reg.find(name);
    return it == reg.end() ? nullptr : it->second;
}

struct MetricsReport {
    double psnr_db = 0.0;
    double latent_mse_value = 0.0;
    std::optional<double> fidelity_score;
    std::optional<double> alignment_score;
    std::string scorer_name;  // empty when no scorer contributed
};

}  // namespace baret
