// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "baret/ddim.hpp"
#include "baret/rng.hpp"

using namespace baret;

namespace {

LatentTensor random_latent(Rng& rng, int c = 2, int h = 4, int w = 4) {
    LatentTensor z(c, h, w);
    for (long i = 0; i < z.data.size(); ++i) z.data.data()[i] = float(rng.normal());
    return z;
}

}  // namespace

TEST_CASE("cfg_combine identities") {
    Rng rng(11);
    const LatentTensor e_u = random_latent(rng);
    const LatentTensor e_c = random_latent(rng);

    SECTION("guidance 1 returns the conditional branch") {
        const LatentTensor out = cfg_combine(e_u, e_c, 1.0);
        REQUIRE(out.data.cwiseEqual(e_c.data).all());
    }
    SECTION("guidance 0 returns the unconditional branch") {
        const LatentTensor out = cfg_combine(e_u, e_c, 0.0);
        REQUIRE(out.data.cwiseEqual(e_u.data).all());
    }
    SECTION("equal branches are a fixed point at guidance 7.5") {
        const LatentTensor out = cfg_combine(e_c, e_c, 7.5);
        REQUIRE(out.data.cwiseEqual(e_c.data).all());
    }
    SECTION("zeros and ones at guidance 7.5") {
        const LatentTensor zeros = LatentTensor::zeros({2, 4, 4});
        const LatentTensor ones = LatentTensor::constant({2, 4, 4}, 1.0f);
        const LatentTensor out = cfg_combine(zeros, ones, 7.5);
        REQUIRE((out.data.array() == 7.5f).all());
    }
    SECTION("shape mismatch is rejected") {
        const LatentTensor small = LatentTensor::zeros({2, 2, 2});
        REQUIRE_THROWS_AS(cfg_combine(e_u, small, 7.5), ShapeError);
    }
}

TEST_CASE("cfg_combine is affine in each argument") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const LatentTensor e_u = random_latent(rng);
        const LatentTensor e_c = random_latent(rng);
        const double w = rng.uniform(0.0, 10.0);
        const LatentTensor out = cfg_combine(e_u, e_c, w);
        Eigen::MatrixXf expected =
            e_u.data + float(w) * (e_c.data - e_u.data);
        REQUIRE((out.data - expected).cwiseAbs().maxCoeff() == 0.0f);
    }
}

TEST_CASE("ddim_sample_step closed-form cases") {
    SECTION("zero noise with equal abar is the identity") {
        Rng rng(13);
        const LatentTensor z = random_latent(rng);
        const LatentTensor eps = LatentTensor::zeros(z.shape());
        const LatentTensor out = ddim_sample_step(z, eps, 0.37, 0.37);
        REQUIRE((out.data - z.data).cwiseAbs().maxCoeff() <= 1e-6f);
    }
    SECTION("abar_prev = 1 returns the x0 estimate") {
        Rng rng(14);
        const LatentTensor z = random_latent(rng);
        const LatentTensor eps = random_latent(rng);
        const double a = 0.42;
        const LatentTensor out = ddim_sample_step(z, eps, a, 1.0);
        const Eigen::MatrixXf x0 =
            (z.data - float(std::sqrt(1.0 - a)) * eps.data) / float(std::sqrt(a));
        REQUIRE((out.data - x0).cwiseAbs().maxCoeff() <= 1e-6f);
    }
    SECTION("scalar example against the double-precision oracle") {
        // z=1, eps=0.5, abar_t=0.25, abar_prev=0.64:
        //   x0 = (1 - sqrt(0.75)*0.5)/0.5, out = 0.8*x0 + 0.6*0.5
        LatentTensor z(1, 1, 1), eps(1, 1, 1);
        z.data(0, 0) = 1.0f;
        eps.data(0, 0) = 0.5f;
        const LatentTensor out = ddim_sample_step(z, eps, 0.25, 0.64);
        REQUIRE(out.data(0, 0) == Catch::Approx(1.2071796769724492).epsilon(1e-6));
    }
    SECTION("abar outside (0,1] is rejected") {
        LatentTensor z(1, 1, 1), eps(1, 1, 1);
        REQUIRE_THROWS_AS(ddim_sample_step(z, eps, 0.0, 0.5), ParameterError);
        REQUIRE_THROWS_AS(ddim_sample_step(z, eps, 0.5, 1.5), ParameterError);
        REQUIRE_THROWS_AS(ddim_sample_step(z, eps, -0.1, 0.5), ParameterError);
    }
}

TEST_CASE("ddim_invert_step mirrors the sampler") {
    Rng rng(15);
    SECTION("zero noise with equal abar is the identity") {
        const LatentTensor z = random_latent(rng);
        const LatentTensor eps = LatentTensor::zeros(z.shape());
        const LatentTensor out = ddim_invert_step(z, eps, 0.8, 0.8);
        REQUIRE((out.data - z.data).cwiseAbs().maxCoeff() <= 1e-6f);
    }
    SECTION("sample of invert with shared eps is the identity") {
        for (int trial = 0; trial < 25; ++trial) {
            const LatentTensor z = random_latent(rng);
            const LatentTensor eps = random_latent(rng);
            const double a = rng.uniform(0.05, 0.95);
            const double a_next = rng.uniform(0.01, a - 0.005);
            const LatentTensor noised = ddim_invert_step(z, eps, a, a_next);
            const LatentTensor back = ddim_sample_step(noised, eps, a_next, a);
            REQUIRE((back.data - z.data).cwiseAbs().maxCoeff() <= 1e-5f);
        }
    }
}
