// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "baret/errors.hpp"

namespace baret {

// Contract for plugging pretrained latent-diffusion weights behind the
// Backbone interface. The weights themselves are an external dependency
// and never part of the test path; what this module pins down is the
// manifest an adapter must ship:
//
//   {
//     "name": "...",             identifier of the weight set
//     "latent_shape": [C, H, W],
//     "text_dim": D,
//     "attention_layers": [ {"id": "...", "kind": "self"|"cross"}, ... ],
//     "tensors": [ {"name": "...", "shape": [..]}, ... ]
//   }
//
// An implementation backed by such weights must honor the full Backbone
// surface: deterministic encode_text, predict_noise with capture and
// injection on every listed attention layer, exact embedding gradients
// when it advertises them, and a (possibly lossy) latent codec whose
// round-trip quality it reports rather than asserts.
struct AdapterTensorSpec {
    std::string name;
    std::vector<int> shape;
};

struct AdapterManifest {
    std::string name;
    std::vector<int> latent_shape;  // C, H, W
    int text_dim = 0;
    std::vector<std::pair<std::string, std::string>> attention_layers;  // id, kind
    std::vector<AdapterTensorSpec> tensors;
};

inline void validate_adapter_manifest(const AdapterManifest& m);

inline AdapterManifest parse_adapter_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open adapter manifest " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("adapter manifest is not valid JSON: " + std::string(e.what()));
    }
    AdapterManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.latent_shape = j.at("latent_shape").get<std::vector<int>>();
        m.text_dim = j.at("text_dim").get<int>();
        for (const auto& layer : j.at("attention_layers")) {
            m.attention_layers.emplace_back(layer.at("id").get<std::string>(),
                                            layer.at("kind").get<std::string>());
        }
        for (const auto& t : j.at("tensors")) {
            m.tensors.push_back(
                {t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("adapter manifest missing required field: " + std::string(e.what()));
    }
    validate_adapter_manifest(m);
    return m;
}

inline void validate_adapter_manifest(const AdapterManifest& m) {
    if (m.latent_shape.size() != 3 || m.latent_shape[0] < 1 || m.latent_shape[1] < 1 ||
        m.latent_shape[2] < 1)
        throw ConfigError("adapter manifest: latent_shape must be [C, H, W]");
    if (m.text_dim < 1) throw ConfigError("adapter manifest: text_dim must be positive");
    bool has_self = false, has_cross = false;
    for (const auto& [id, kind] : m.attention_layers) {
        if (id.empty()) throw ConfigError("adapter manifest: empty attention layer id");
        if (kind == "self")
            has_self = true;
        else if (kind == "cross")
            has_cross = true;
        else
            throw ConfigError("adapter manifest: attention kind must be self or cross");
    }
    if (!has_self || !has_cross)
        throw ConfigError("adapter manifest: need at least one self and one cross layer");
    if (m.tensors.empty()) throw ConfigError("adapter manifest: tensor list is empty");
    for (const auto& t : m.tensors) {
        if (t.name.empty()) throw ConfigError("adapter manifest: empty tensor name");
        for (int d : t.shape)
            if (d < 1) throw ConfigError("adapter manifest: bad shape for " + t.name);
    }
}

}  // namespace baret
