// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "baret/backbone.hpp"
#include "baret/schedule.hpp"
#include "baret/toy/toy_backbone.hpp"
#include "baret/toy/toy_train.hpp"

using namespace baret;
using toy::ToyBackbone;
using toy::ToyBackboneConfig;

namespace {

ToyBackboneConfig small_config() {
    ToyBackboneConfig cfg;
    cfg.latent_height = 8;
    cfg.latent_width = 8;
    cfg.base_channels = 12;
    cfg.attn_dim = 8;
    cfg.heads = 2;
    cfg.text_dim = 6;
    cfg.seed = 77;
    return cfg;
}

LatentTensor random_latent(Rng& rng, const LatentShape& s) {
    LatentTensor z(s.channels, s.height, s.width);
    for (long i = 0; i < z.data.size(); ++i) z.data.data()[i] = float(rng.normal());
    return z;
}

}  // namespace

TEST_CASE("encode_text basics") {
    const ToyBackbone backbone{small_config()};

    SECTION("empty prompt is the null embedding") {
        const TextEmbedding e = backbone.encode_text("");
        REQUIRE(e.is_null);
        REQUIRE(e.length() == 1);
        REQUIRE(backbone.null_embedding().bit_equal(e));
    }
    SECTION("same prompt twice is bit-identical") {
        const TextEmbedding a = backbone.encode_text("red square tall on blue");
        const TextEmbedding b = backbone.encode_text("red square tall on blue");
        REQUIRE(a.bit_equal(b));
        REQUIRE_FALSE(a.is_null);
    }
    SECTION("shape follows the config") {
        const TextEmbedding e = backbone.encode_text("red square");
        REQUIRE(e.length() == 3);  // marker token + 2 prompt tokens
        REQUIRE(e.dim() == small_config().text_dim);
    }
    SECTION("unknown token raises a vocabulary error") {
        REQUIRE_THROWS_AS(backbone.encode_text("red dragon"), VocabularyError);
    }
    SECTION("over-long prompt raises a vocabulary error") {
        REQUIRE_THROWS_AS(backbone.encode_text("red red red red red red red red"),
                          VocabularyError);
    }
}

TEST_CASE("predict_noise capture is row-stochastic over every layer") {
    const ToyBackbone backbone{small_config()};
    Rng rng(31);
    const LatentTensor z = random_latent(rng, backbone.latent_shape());
    const TextEmbedding e = backbone.encode_text("green circle wide on red");

    AttentionCapture cap;
    backbone.predict_noise(z, 500, e, &cap);
    REQUIRE(cap.step_index == 500);
    REQUIRE(cap.layers.size() == backbone.attention_layers().size());
    for (const auto& info : backbone.attention_layers()) {
        REQUIRE(cap.layers.count(info.id) == 1);
        const auto& maps = cap.layers.at(info.id);
        REQUIRE(maps.kind == info.kind);
        REQUIRE(int(maps.heads.size()) == small_config().heads);
        for (const auto& m : maps.heads) {
            REQUIRE(rows_stochastic(m));
            if (info.kind == AttentionKind::cross_attention) REQUIRE(m.cols() == e.length());
        }
    }
}

TEST_CASE("self-injection of freshly captured maps is a bitwise no-op") {
    const ToyBackbone backbone{small_config()};
    Rng rng(32);
    const LatentTensor z = random_latent(rng, backbone.latent_shape());
    const TextEmbedding e = backbone.encode_text("blue bar tall on yellow");

    AttentionCapture cap;
    const LatentTensor plain = backbone.predict_noise(z, 250, e, &cap);
    InjectionDirective dir;
    for (const auto& [id, maps] : cap.layers)
        dir.entries[id] = {maps.kind, InjectionSource::reconstruction, maps.heads};
    const LatentTensor injected = backbone.predict_noise(z, 250, e, nullptr, &dir);
    REQUIRE(injected.data.cwiseEqual(plain.data).all());
}

TEST_CASE("injection validates layer ids and shapes") {
    const ToyBackbone backbone{small_config()};
    Rng rng(33);
    const LatentTensor z = random_latent(rng, backbone.latent_shape());
    const TextEmbedding e = backbone.encode_text("red cross wide on cyan");

    AttentionCapture cap;
    backbone.predict_noise(z, 100, e, &cap);

    SECTION("unknown layer id") {
        InjectionDirective dir;
        dir.entries["nope"] = {AttentionKind::self_attention, InjectionSource::reconstruction,
                               cap.layers.at("L1.self").heads};
        REQUIRE_THROWS_AS(backbone.predict_noise(z, 100, e, nullptr, &dir), InjectionError);
    }
    SECTION("kind mismatch") {
        InjectionDirective dir;
        dir.entries["L1.self"] = {AttentionKind::cross_attention, InjectionSource::transition,
                                  cap.layers.at("L1.self").heads};
        REQUIRE_THROWS_AS(backbone.predict_noise(z, 100, e, nullptr, &dir), InjectionError);
    }
    SECTION("shape mismatch") {
        InjectionDirective dir;
        dir.entries["L1.self"] = {AttentionKind::self_attention, InjectionSource::reconstruction,
                                  cap.layers.at("L2.self").heads};
        REQUIRE_THROWS_AS(backbone.predict_noise(z, 100, e, nullptr, &dir), InjectionError);
    }
}

TEST_CASE("deterministic forward pass") {
    const ToyBackbone a{small_config()};
    const ToyBackbone b{small_config()};
    REQUIRE(a.weights_hash() == b.weights_hash());

    Rng rng(34);
    const LatentTensor z = random_latent(rng, a.latent_shape());
    const TextEmbedding e = a.encode_text("magenta square tall on green");
    const LatentTensor eps1 = a.predict_noise(z, 321, e);
    const LatentTensor eps2 = b.predict_noise(z, 321, e);
    REQUIRE(eps1.data.cwiseEqual(eps2.data).all());

    ToyBackboneConfig other = small_config();
    other.seed = 78;
    REQUIRE(ToyBackbone{other}.weights_hash() != a.weights_hash());
}

TEST_CASE("gradient_wrt_embedding matches central differences in double precision") {
    // Double instantiation of the same weights; step 1e-5, tolerance 1e-4.
    const ToyBackboneConfig cfg = small_config();
    const ToyBackbone fbackbone{cfg};
    const toy::ToyModel<double> model = fbackbone.model().cast<double>();

    Rng rng(35);
    nn::Mat<double> z(cfg.latent_channels, cfg.latent_height * cfg.latent_width);
    for (long i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    const std::vector<int> ids = model.tokenize("white bar wide on blue");
    const nn::Mat<double> emb = model.encode_tokens(ids);
    nn::Mat<double> weights(z.rows(), z.cols());
    for (long i = 0; i < weights.size(); ++i) weights.data()[i] = rng.normal();
    const int t = 640;

    auto loss_at = [&](const nn::Mat<double>& e) {
        nn::Tape<double> tape;
        const auto nodes = model.push_params(tape, false);
        const int eps = model.forward(tape, nodes, tape.constant(z), t, tape.constant(e));
        return (tape.val(eps).array() * weights.array()).mean();
    };

    // Analytic gradient through the tape.
    nn::Tape<double> tape;
    const auto nodes = model.push_params(tape, false);
    const int en = tape.leaf(emb, true);
    const int eps = model.forward(tape, nodes, tape.constant(z), t, en);
    nn::Mat<double> seed = weights / double(weights.size());
    tape.backward_from(eps, seed);
    const nn::Mat<double> analytic = tape.grad(en);

    const double h = 1e-5;
    for (long i = 0; i < emb.size(); ++i) {
        nn::Mat<double> ep = emb, em = emb;
        ep.data()[i] += h;
        em.data()[i] -= h;
        const double fd = (loss_at(ep) - loss_at(em)) / (2.0 * h);
        const double a = analytic.data()[i];
        const double scale = std::max({std::abs(a), std::abs(fd), 1e-8});
        INFO("entry " << i << " analytic " << a << " fd " << fd);
        REQUIRE(std::abs(a - fd) / scale <= 1e-4);
    }
}

TEST_CASE("constant loss yields a zero embedding gradient") {
    const ToyBackbone backbone{small_config()};
    Rng rng(36);
    const LatentTensor z = random_latent(rng, backbone.latent_shape());
    const TextEmbedding e = backbone.encode_text("red square");
    auto loss = [&](const LatentTensor& eps) {
        return std::pair<double, LatentTensor>{4.2, LatentTensor::zeros(eps.shape())};
    };
    double value = 0;
    const Eigen::MatrixXf g = backbone.gradient_wrt_embedding(loss, z, 77, e, &value);
    REQUIRE(value == 4.2);
    REQUIRE(g.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("toy codec round trip is exact") {
    const ToyBackbone backbone{small_config()};
    Rng rng(37);
    Image img(8, 8);
    for (auto& px : img.rgb) px = uint8_t(rng.uniform_int(0, 255));

    const LatentTensor z = backbone.encode_image(img);
    const Image back = backbone.decode_image(z);
    REQUIRE(back.rgb == img.rgb);

    SECTION("all-zero image maps to an all-zero latent") {
        const Image black(8, 8);
        REQUIRE(backbone.encode_image(black).data.cwiseAbs().maxCoeff() == 0.0f);
    }
    SECTION("wrong dimensions are rejected") {
        REQUIRE_THROWS_AS(backbone.encode_image(Image(4, 4)), ShapeError);
    }
}

TEST_CASE("capability probe passes for the toy backbone") {
    const ToyBackbone backbone{small_config()};
    REQUIRE_NOTHROW(probe_capabilities(backbone));
}

TEST_CASE("toy training halves the validation loss and is seed-deterministic") {
    ToyBackboneConfig cfg = small_config();
    cfg.latent_height = 16;
    cfg.latent_width = 16;
    const NoiseSchedule noise = make_schedule(1000, 0.00085, 0.012, 50);
    toy::ToyDatasetSpec data;
    toy::ToyTrainConfig train;
    train.steps = 120;
    train.batch = 4;
    train.val_every = 0;
    train.val_size = 8;

    toy::TrainReport rep1, rep2;
    const ToyBackbone b1 = toy::train_toy_backbone(cfg, noise, data, train, &rep1);
    const ToyBackbone b2 = toy::train_toy_backbone(cfg, noise, data, train, &rep2);

    REQUIRE(rep1.loss_curve.size() == 120);
    REQUIRE(rep1.final_val < rep1.initial_val);
    REQUIRE(b1.weights_hash() == b2.weights_hash());

    SECTION("zero steps keeps the random initialization and an empty curve") {
        toy::ToyTrainConfig none = train;
        none.steps = 0;
        toy::TrainReport rep;
        const ToyBackbone b = toy::train_toy_backbone(cfg, noise, data, none, &rep);
        REQUIRE(rep.loss_curve.empty());
        REQUIRE(b.weights_hash() == ToyBackbone{cfg}.weights_hash());
    }
}
