// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "baret/backbone.hpp"
#include "baret/io/container.hpp"
#include "baret/nn/tape.hpp"
#include "baret/rng.hpp"
#include "baret/toy/toy_data.hpp"

namespace baret::toy {

struct ToyBackboneConfig {
    int latent_channels = 4;
    int latent_height = 16;
    int latent_width = 16;
    int base_channels = 32;
    int heads = 2;
    int attn_dim = 32;
    int text_dim = 16;
    int time_dim = 32;
    int time_hidden = 64;
    int max_prompt_len = 8;
    std::vector<std::string> vocab = default_vocab();
    uint64_t seed = 1234;

    void validate() const {
        if (latent_channels < 1 || latent_height < 4 || latent_width < 4)
            throw ParameterError("toy config: latent size too small");
        if (latent_height % 2 || latent_width % 2)
            throw ParameterError("toy config: latent size must be even");
        if (attn_dim % heads) throw ParameterError("toy config: attn_dim must divide by heads");
        if (vocab.empty()) throw ParameterError("toy config: empty vocab");
    }
};

namespace detail {

template <class S>
struct ConvBlockP {
    nn::Mat<S> w, b, wt, bt, gamma, beta;
};
template <class S>
struct AttnP {
    nn::Mat<S> gamma, beta, wq, wk, wv, wo;
};

template <class S>
struct ToyParams {
    nn::Mat<S> tok_table, pos_table;
    nn::Mat<S> wt1, bt1;
    nn::Mat<S> conv_in_w, conv_in_b;
    ConvBlockP<S> enc16, enc8, bottom8, dec16;
    AttnP<S> sa16, ca16, sa8, ca8;
    nn::Mat<S> conv_out_w, conv_out_b;

    template <class F>
    void for_each(F&& f) {
        f("tok_table", tok_table);
        f("pos_table", pos_table);
        f("time.w1", wt1);
        f("time.b1", bt1);
        f("conv_in.w", conv_in_w);
        f("conv_in.b", conv_in_b);
        auto block = [&](const char* name, ConvBlockP<S>& p) {
            const std::string base(name);
            f((base + ".w").c_str(), p.w);
            f((base + ".b").c_str(), p.b);
            f((base + ".wt").c_str(), p.wt);
            f((base + ".bt").c_str(), p.bt);
            f((base + ".gamma").c_str(), p.gamma);
            f((base + ".beta").c_str(), p.beta);
        };
        auto attn = [&](const char* name, AttnP<S>& p) {
            const std::string base(name);
            f((base + ".gamma").c_str(), p.gamma);
            f((base + ".beta").c_str(), p.beta);
            f((base + ".wq").c_str(), p.wq);
            f((base + ".wk").c_str(), p.wk);
            f((base + ".wv").c_str(), p.wv);
            f((base + ".wo").c_str(), p.wo);
        };
        block("enc16", enc16);
        attn("sa16", sa16);
        attn("ca16", ca16);
        block("enc8", enc8);
        attn("sa8", sa8);
        attn("ca8", ca8);
        block("bottom8", bottom8);
        block("dec16", dec16);
        f("conv_out.w", conv_out_w);
        f("conv_out.b", conv_out_b);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<ToyParams*>(this)->for_each(
            [&](const char* n, nn::Mat<S>& m) { f(n, static_cast<const nn::Mat<S>&>(m)); });
    }
};

// Tape node ids of one forward pass's parameter set.
struct ParamNodes {
    std::map<std::string, int> id;
    int operator()(const std::string& name) const {
        auto it = id.find(name);
        if (it == id.end()) throw ParameterError("unknown parameter " + name);
        return it->second;
    }
};

}  // namespace detail

// Scalar-generic denoiser + text encoder. The float instantiation backs
// the Backbone interface; tests instantiate the double version for
// finite-difference gradient checks.
template <class S>
class ToyModel {
public:
    using M = nn::Mat<S>;

    ToyModel() = default;
    explicit ToyModel(const ToyBackboneConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        plan_hi_ = nn::Im2colPlan::make(cfg.latent_height, cfg.latent_width);
        plan_lo_ = nn::Im2colPlan::make(cfg.latent_height / 2, cfg.latent_width / 2);
        init_weights();
    }

    const ToyBackboneConfig& config() const { return cfg_; }
    detail::ToyParams<S>& params() { return p_; }
    const detail::ToyParams<S>& params() const { return p_; }

    static std::vector<AttentionLayerInfo> attention_layer_list() {
        return {{"L1.self", AttentionKind::self_attention},
                {"L1.cross", AttentionKind::cross_attention},
                {"L2.self", AttentionKind::self_attention},
                {"L2.cross", AttentionKind::cross_attention}};
    }

    template <class S2>
    ToyModel<S2> cast() const {
        ToyModel<S2> out;
        out.cfg_ = cfg_;
        out.plan_hi_ = plan_hi_;
        out.plan_lo_ = plan_lo_;
        const_cast<detail::ToyParams<S>&>(p_).for_each([&](const char* name, nn::Mat<S>& m) {
            nn::Mat<S2> converted = m.template cast<S2>();
            out.p_.for_each([&](const char* n2, nn::Mat<S2>& dst) {
                if (std::string(name) == n2) dst = converted;
            });
        });
        return out;
    }

    std::vector<int> tokenize(std::string_view prompt) const {
        std::vector<int> ids = {bos_id()};
        std::istringstream ss{std::string(prompt)};
        std::string tok;
        while (ss >> tok) {
            int found = -1;
            for (size_t i = 0; i < cfg_.vocab.size(); ++i)
                if (cfg_.vocab[i] == tok) {
                    found = int(i);
                    break;
                }
            if (found < 0) throw VocabularyError("unknown token '" + tok + "'");
            ids.push_back(found);
        }
        if (int(ids.size()) > cfg_.max_prompt_len)
            throw VocabularyError("prompt longer than max_prompt_len");
        return ids;
    }

    int bos_id() const { return int(cfg_.vocab.size()); }

    // Value-only text encoding: token row + positional row.
    M encode_tokens(const std::vector<int>& ids) const {
        M e(long(ids.size()), cfg_.text_dim);
        for (size_t i = 0; i < ids.size(); ++i)
            e.row(long(i)) = p_.tok_table.row(ids[i]) + p_.pos_table.row(long(i));
        return e;
    }

    // Same encoding on a tape, for training gradients through the tables.
    int encode_tokens_node(nn::Tape<S>& tp, int tok_table_node, int pos_table_node,
                           const std::vector<int>& ids) const {
        std::vector<int> pos(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) pos[i] = int(i);
        return tp.add(tp.gather_rows(tok_table_node, ids), tp.gather_rows(pos_table_node, pos));
    }

    // Pushes every parameter onto the tape. With needs_grad the returned
    // mapping can be used to read parameter gradients back out.
    detail::ParamNodes push_params(nn::Tape<S>& tp, bool needs_grad) const {
        detail::ParamNodes nodes;
        p_.for_each([&](const char* name, const M& m) { nodes.id[name] = tp.leaf(m, needs_grad); });
        return nodes;
    }

    M time_features(int timestep) const {
        const int half = cfg_.time_dim / 2;
        M out(cfg_.time_dim, 1);
        for (int i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(10000.0) * double(i) / double(half - 1));
            out(i, 0) = S(std::sin(double(timestep) * f));
            out(half + i, 0) = S(std::cos(double(timestep) * f));
        }
        return out;
    }

    // Builds the denoiser graph; returns the eps node (C x H*W).
    int forward(nn::Tape<S>& tp, const detail::ParamNodes& n, int z_node, int timestep,
                int emb_node, AttentionCapture* capture = nullptr,
                const InjectionDirective* directive = nullptr) const {
        if (directive) validate_directive(*directive, int(tp.val(emb_node).rows()));
        if (capture) capture->layers.clear();

        const int tsin = tp.constant(time_features(timestep));
        const int tfeat = tp.silu(tp.add(tp.matmul(n("time.w1"), tsin), n("time.b1")));

        auto conv = [&](int x, const std::string& base, const nn::Im2colPlan& plan) {
            return tp.add_col_broadcast(tp.matmul(n(base + ".w"), tp.im2col3x3(x, plan)),
                                        n(base + ".b"));
        };
        auto conv_block = [&](int x, const std::string& base, const nn::Im2colPlan& plan,
                              bool residual) {
            int h = conv(x, base, plan);
            const int tbias = tp.add(tp.matmul(n(base + ".wt"), tfeat), n(base + ".bt"));
            h = tp.add_col_broadcast(h, tbias);
            h = tp.silu(tp.norm_cols(h, n(base + ".gamma"), n(base + ".beta")));
            return residual ? tp.add(h, x) : h;
        };

        const int h0 = conv(z_node, "conv_in", plan_hi_);
        int h = conv_block(h0, "enc16", plan_hi_, true);
        h = attention(tp, n, h, emb_node, "sa16", "L1.self", AttentionKind::self_attention,
                      capture, directive);
        h = attention(tp, n, h, emb_node, "ca16", "L1.cross", AttentionKind::cross_attention,
                      capture, directive);
        const int skip = h;
        int g = tp.avg_pool2x2(h, cfg_.latent_height, cfg_.latent_width);
        g = conv_block(g, "enc8", plan_lo_, true);
        g = attention(tp, n, g, emb_node, "sa8", "L2.self", AttentionKind::self_attention, capture,
                      directive);
        g = attention(tp, n, g, emb_node, "ca8", "L2.cross", AttentionKind::cross_attention,
                      capture, directive);
        g = conv_block(g, "bottom8", plan_lo_, true);
        g = tp.upsample2x(g, cfg_.latent_height / 2, cfg_.latent_width / 2);
        int d = tp.concat_rows(g, skip);
        d = conv_block(d, "dec16", plan_hi_, false);
        return conv(d, "conv_out", plan_hi_);
    }

    uint64_t weights_hash() const {
        uint64_t h = kFnvOffset;
        p_.for_each([&](const char*, const M& m) {
            if constexpr (std::is_same_v<S, float>) {
                h = fnv1a64_floats(m.data(), size_t(m.size()), h);
            } else {
                for (long i = 0; i < m.size(); ++i) {
                    const double v = double(m.data()[i]);
                    h = fnv1a64(&v, sizeof v, h);
                }
            }
        });
        return h;
    }

private:
    template <class>
    friend class ToyModel;

    void validate_directive(const InjectionDirective& dir, int emb_len) const {
        const int p_hi = cfg_.latent_height * cfg_.latent_width;
        const int p_lo = p_hi / 4;
        for (const auto& [id, entry] : dir.entries) {
            const AttentionLayerInfo* info = nullptr;
            static const auto layers = attention_layer_list();
            for (const auto& l : layers)
                if (l.id == id) info = &l;
            if (!info) throw InjectionError("directive names unknown layer '" + id + "'");
            if (info->kind != entry.kind)
                throw InjectionError("directive kind mismatch at layer '" + id + "'");
            if (int(entry.heads.size()) != cfg_.heads)
                throw InjectionError("directive head count mismatch at layer '" + id + "'");
            const int queries = (id.rfind("L1", 0) == 0) ? p_hi : p_lo;
            const int keys =
                entry.kind == AttentionKind::self_attention ? queries : emb_len;
            for (const auto& m : entry.heads)
                if (m.rows() != queries || m.cols() != keys)
                    throw InjectionError("directive map shape mismatch at layer '" + id + "'");
        }
    }

    int attention(nn::Tape<S>& tp, const detail::ParamNodes& n, int x, int emb_node,
                  const std::string& base, const std::string& layer_id, AttentionKind kind,
                  AttentionCapture* capture, const InjectionDirective* directive) const {
        const bool is_self = kind == AttentionKind::self_attention;
        const int ln = tp.norm_cols(x, n(base + ".gamma"), n(base + ".beta"));
        const int kv_src = is_self ? ln : emb_node;
        const int v = is_self ? tp.matmul(n(base + ".wv"), kv_src)
                              : tp.matmul_nt(n(base + ".wv"), kv_src);

        const InjectionDirective::Entry* inj = directive ? directive->find(layer_id) : nullptr;
        int q = -1, k = -1;
        if (!inj) {
            q = tp.matmul(n(base + ".wq"), ln);
            k = is_self ? tp.matmul(n(base + ".wk"), kv_src)
                        : tp.matmul_nt(n(base + ".wk"), kv_src);
        }

        const int d = cfg_.attn_dim / cfg_.heads;
        const S inv_sqrt_d = S(1) / S(std::sqrt(double(d)));
        int out_heads = -1;
        for (int hidx = 0; hidx < cfg_.heads; ++hidx) {
            int probs;
            if (inj) {
                probs = tp.constant(inj->heads[size_t(hidx)].template cast<S>());
            } else {
                const int qh = tp.slice_rows(q, hidx * d, d);
                const int kh = tp.slice_rows(k, hidx * d, d);
                probs = tp.softmax_rows(tp.scale(tp.matmul_tn(qh, kh), inv_sqrt_d));
            }
            if (capture) {
                auto& rec = capture->layers[layer_id];
                rec.kind = kind;
                if constexpr (std::is_same_v<S, float>) {
                    rec.heads.push_back(tp.val(probs));
                } else {
                    rec.heads.push_back(tp.val(probs).template cast<float>());
                }
            }
            const int vh = tp.slice_rows(v, hidx * d, d);
            const int oh = tp.matmul_nt(vh, probs);
            out_heads = hidx == 0 ? oh : tp.concat_rows(out_heads, oh);
        }
        return tp.add(x, tp.matmul(n(base + ".wo"), out_heads));
    }

    void init_weights() {
        Rng rng(cfg_.seed);
        auto normal_mat = [&](long r, long c, double std) {
            M m(r, c);
            for (long i = 0; i < m.size(); ++i) m.data()[i] = S(rng.normal() * std);
            return m;
        };
        auto he = [&](long r, long c) { return normal_mat(r, c, std::sqrt(2.0 / double(c))); };
        const int C = cfg_.base_channels;
        const int Cl = cfg_.latent_channels;
        const int A = cfg_.attn_dim;
        const int D = cfg_.text_dim;

        p_.tok_table = normal_mat(long(cfg_.vocab.size()) + 1, D, 0.5);
        p_.pos_table = normal_mat(cfg_.max_prompt_len, D, 0.1);
        p_.wt1 = he(cfg_.time_hidden, cfg_.time_dim);
        p_.bt1 = M::Zero(cfg_.time_hidden, 1);
        p_.conv_in_w = he(C, 9 * Cl);
        p_.conv_in_b = M::Zero(C, 1);
        auto make_block = [&](detail::ConvBlockP<S>& blk, int cin, int cout) {
            blk.w = he(cout, 9 * cin);
            blk.b = M::Zero(cout, 1);
            blk.wt = normal_mat(cout, cfg_.time_hidden, 0.05);
            blk.bt = M::Zero(cout, 1);
            blk.gamma = M::Ones(cout, 1);
            blk.beta = M::Zero(cout, 1);
        };
        auto make_attn = [&](detail::AttnP<S>& at, int kv_dim) {
            at.gamma = M::Ones(C, 1);
            at.beta = M::Zero(C, 1);
            at.wq = he(A, C);
            at.wk = he(A, kv_dim);
            at.wv = he(A, kv_dim);
            at.wo = normal_mat(C, A, 0.05);
        };
        make_block(p_.enc16, C, C);
        make_attn(p_.sa16, C);
        make_attn(p_.ca16, D);
        make_block(p_.enc8, C, C);
        make_attn(p_.sa8, C);
        make_attn(p_.ca8, D);
        make_block(p_.bottom8, C, C);
        make_block(p_.dec16, 2 * C, C);
        p_.conv_out_w = normal_mat(Cl, 9 * C, 0.02);
        p_.conv_out_b = M::Zero(Cl, 1);
    }

    ToyBackboneConfig cfg_;
    detail::ToyParams<S> p_;
    nn::Im2colPlan plan_hi_, plan_lo_;
};

// Float instantiation behind the Backbone interface, plus the identity
// latent codec: RGB channels scaled to [0,1], remaining channels zero.
class ToyBackbone final : public Backbone {
public:
    ToyBackbone() : ToyBackbone(ToyBackboneConfig{}) {}
    explicit ToyBackbone(const ToyBackboneConfig& cfg) : model_(cfg) { cache_null(); }
    explicit ToyBackbone(ToyModel<float> model) : model_(std::move(model)) { cache_null(); }

    ToyModel<float>& model() { return model_; }
    const ToyModel<float>& model() const { return model_; }
    const ToyBackboneConfig& config() const { return model_.config(); }

    LatentShape latent_shape() const override {
        const auto& c = model_.config();
        return {c.latent_channels, c.latent_height, c.latent_width};
    }
    std::vector<AttentionLayerInfo> attention_layers() const override {
        return ToyModel<float>::attention_layer_list();
    }
    BackboneCaps capabilities() const override { return {true, true, true}; }

    TextEmbedding encode_text(std::string_view prompt) const override {
        TextEmbedding e;
        const auto ids = model_.tokenize(prompt);
        e.tokens = model_.encode_tokens(ids);
        e.is_null = ids.size() == 1;
        return e;
    }
    const TextEmbedding& null_embedding() const override { return null_emb_; }

    LatentTensor predict_noise(const LatentTensor& z, int timestep, const TextEmbedding& embedding,
                               AttentionCapture* capture = nullptr,
                               const InjectionDirective* directive = nullptr) const override {
        check_inputs(z, embedding);
        nn::Tape<float> tp;
        const auto nodes = model_.push_params(tp, false);
        const int zn = tp.constant(z.data);
        const int en = tp.constant(embedding.tokens);
        const int eps = model_.forward(tp, nodes, zn, timestep, en, capture, directive);
        if (capture) capture->step_index = timestep;
        LatentTensor out = z;
        out.data = tp.val(eps);
        if (!out.all_finite()) throw NumericError("toy backbone produced non-finite noise");
        return out;
    }

    Eigen::MatrixXf gradient_wrt_embedding(const LossFn& loss, const LatentTensor& z, int timestep,
                                           const TextEmbedding& embedding,
                                           double* loss_value = nullptr) const override {
        check_inputs(z, embedding);
        nn::Tape<float> tp;
        const auto nodes = model_.push_params(tp, false);
        const int zn = tp.constant(z.data);
        const int en = tp.leaf(embedding.tokens, true);
        const int eps = model_.forward(tp, nodes, zn, timestep, en);
        LatentTensor eps_val = z;
        eps_val.data = tp.val(eps);
        auto [value, dloss_deps] = loss(eps_val);
        if (loss_value) *loss_value = value;
        require_same_shape(eps_val, dloss_deps, "gradient_wrt_embedding");
        tp.backward_from(eps, dloss_deps.data);
        return tp.grad(en);
    }

    LatentTensor encode_image(const Image& image) const override {
        const auto s = latent_shape();
        if (image.width != s.width || image.height != s.height)
            throw ShapeError("encode_image: image size does not match latent shape");
        LatentTensor z(s.channels, s.height, s.width);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                for (int c = 0; c < 3 && c < s.channels; ++c)
                    z.data(c, y * s.width + x) = float(image.at(x, y, c)) / 255.0f;
        return z;
    }

    Image decode_image(const LatentTensor& latent) const override {
        const auto s = latent_shape();
        if (latent.shape() != s) throw ShapeError("decode_image: latent shape mismatch");
        Image img(s.width, s.height);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                for (int c = 0; c < 3 && c < s.channels; ++c) {
                    const float v = std::clamp(latent.data(c, y * s.width + x), 0.0f, 1.0f);
                    img.at(x, y, c) = uint8_t(std::lround(v * 255.0f));
                }
        return img;
    }

    uint64_t weights_hash() const { return model_.weights_hash(); }

private:
    void check_inputs(const LatentTensor& z, const TextEmbedding& embedding) const {
        if (z.shape() != latent_shape()) throw ShapeError("toy backbone: latent shape mismatch");
        if (embedding.dim() != model_.config().text_dim)
            throw ShapeError("toy backbone: embedding dim mismatch");
        if (embedding.length() < 1) throw ShapeError("toy backbone: empty embedding");
    }
    void cache_null() { null_emb_ = encode_text(""); }

    ToyModel<float> model_;
    TextEmbedding null_emb_;
};

}  // namespace baret::toy
