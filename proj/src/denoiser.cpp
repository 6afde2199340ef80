#include "moca/denoiser.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "moca/core/error.hpp"
#include "moca/kernels/kernels.hpp"

namespace moca {

using nn::AttnCache;
using nn::GnCache;
using nn::P;
using nn::ParamMap;

std::vector<std::string> default_vocab() {
    return {
        "a",       "on",      "background", "moving",
        "black",   "red",     "green",      "blue",     "yellow", "magenta", "cyan", "white",
        "square",  "circle",  "triangle",
        "right",   "left",    "up",         "down",
        "upright", "upleft",  "downright",  "downleft", "still",
        "plain",   "grayscale", "sepia",
    };
}

void DenoiserConfig::validate() const {
    if (latent_channels < 1) throw usage_error("denoiser: latent_channels must be positive");
    if (base_width % groups != 0)
        throw usage_error("denoiser: base_width must be divisible by " + std::to_string(groups));
    if (feat_width % 2 != 0) throw usage_error("denoiser: feat_width must be even");
    if (max_frames < 1 || max_text_len < 1)
        throw usage_error("denoiser: frame/text capacity must be positive");
    if (num_train_steps < 2) throw usage_error("denoiser: num_train_steps must be at least 2");
    if (vocab.empty()) throw usage_error("denoiser: vocabulary is empty");
    std::set<std::string> seen(vocab.begin(), vocab.end());
    if (seen.size() != vocab.size()) throw usage_error("denoiser: vocabulary has duplicate words");
}

namespace {

constexpr double kMagScale = 25.0;  // spreads px/frame magnitudes over the sinusoid periods

Tensor copy_rows(const Tensor& m, int64_t r0, int64_t r1) {
    const int64_t w = m.dim(1);
    Tensor out({r1 - r0, w});
    std::copy(m.ptr() + r0 * w, m.ptr() + r1 * w, out.ptr());
    return out;
}

void paste_rows(Tensor& m, int64_t r0, const Tensor& rows) {
    const int64_t w = m.dim(1);
    std::copy(rows.ptr(), rows.ptr() + rows.numel(), m.ptr() + r0 * w);
}

void add_into(Tensor& dst, const Tensor& src) {
    check_same_shape(dst, src, "denoiser add");
    kernels::active().axpy_acc(src.numel(), 1.0f, src.ptr(), dst.ptr());
}

// y[n, c, :, :] += bias[n, c]
void add_channel_bias(Tensor& y, const Tensor& bias) {
    const int64_t n = y.dim(0), c = y.dim(1), hw = y.dim(2) * y.dim(3);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float b = bias[i * c + ch];
            float* row = y.ptr() + (i * c + ch) * hw;
            for (int64_t p = 0; p < hw; ++p) row[p] += b;
        }
}

// rows[n, c] = sum over h*w of dy[n, c, :, :]
Tensor channel_bias_grad(const Tensor& dy) {
    const int64_t n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
    Tensor rows({n, c});
    for (int64_t i = 0; i < n * c; ++i)
        rows[i] = static_cast<float>(kernels::active().reduce_sum(hw, dy.ptr() + i * hw));
    return rows;
}

// ---- blocks: each owns its parameters, a cache struct, and a backward that
// mirrors its forward. All residual branches end in a zero-initialized layer
// so a fresh model is the identity map (v-prediction starts at exactly zero).

// gn -> silu -> conv3x3 -> +emb bias -> gn -> silu -> conv3x3(zero) -> +x
struct ResBlock {
    P gn1_g, gn1_b, conv1_w, conv1_b, emb_w, emb_b, gn2_g, gn2_b, conv2_w, conv2_b;

    struct C {
        Tensor x, gn1_out, silu1, conv1b, gn2_out, silu2;
        GnCache g1, g2;
    };

    void init(Rng& rng, int ch, int emb_width) {
        gn1_g.init_const({ch}, 1.0f);
        gn1_b.init_zero({ch});
        conv1_w.init_normal(rng, {ch, ch, 3, 3}, std::sqrt(2.0 / (ch * 9.0)));
        conv1_b.init_zero({ch});
        emb_w.init_normal(rng, {ch, emb_width}, std::sqrt(1.0 / emb_width));
        emb_b.init_zero({ch});
        gn2_g.init_const({ch}, 1.0f);
        gn2_b.init_zero({ch});
        conv2_w.init_zero({ch, ch, 3, 3});
        conv2_b.init_zero({ch});
    }

    Tensor forward(const Tensor& x, const Tensor& emb_silu, int groups, C* c) const {
        GnCache g1, g2;
        Tensor t1 = nn::groupnorm_fwd(x, gn1_g, gn1_b, groups, g1);
        Tensor t2 = nn::silu_fwd(t1);
        Tensor t3 = nn::conv2d_fwd(t2, conv1_w, conv1_b, 1, 1, 1, 1);
        add_channel_bias(t3, nn::linear_fwd(emb_silu, emb_w, emb_b));
        Tensor t4 = nn::groupnorm_fwd(t3, gn2_g, gn2_b, groups, g2);
        Tensor t5 = nn::silu_fwd(t4);
        Tensor y = nn::conv2d_fwd(t5, conv2_w, conv2_b, 1, 1, 1, 1);
        add_into(y, x);
        if (c) {
            c->x = x;
            c->gn1_out = std::move(t1);
            c->silu1 = std::move(t2);
            c->conv1b = std::move(t3);
            c->gn2_out = std::move(t4);
            c->silu2 = std::move(t5);
            c->g1 = std::move(g1);
            c->g2 = std::move(g2);
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const Tensor& emb_silu, Tensor& d_emb_silu, int groups, C& c) {
        Tensor d5 = nn::conv2d_bwd(c.silu2, conv2_w, conv2_b, dy, 1, 1, 1, 1);
        Tensor d4 = nn::silu_bwd(c.gn2_out, d5);
        Tensor d3 = nn::groupnorm_bwd(c.conv1b, gn2_g, gn2_g, gn2_b, d4, groups, c.g2);
        add_into(d_emb_silu, nn::linear_bwd(emb_silu, emb_w, emb_b, channel_bias_grad(d3)));
        Tensor d2 = nn::conv2d_bwd(c.silu1, conv1_w, conv1_b, d3, 1, 1, 1, 1);
        Tensor d1 = nn::silu_bwd(c.gn1_out, d2);
        Tensor dx = nn::groupnorm_bwd(c.x, gn1_g, gn1_g, gn1_b, d1, groups, c.g1);
        add_into(dx, dy);
        return dx;
    }

    void collect(const std::string& p, ParamMap& m) {
        nn::collect(m, p + ".gn1.g", gn1_g);
        nn::collect(m, p + ".gn1.b", gn1_b);
        nn::collect(m, p + ".conv1.w", conv1_w);
        nn::collect(m, p + ".conv1.b", conv1_b);
        nn::collect(m, p + ".emb.w", emb_w);
        nn::collect(m, p + ".emb.b", emb_b);
        nn::collect(m, p + ".gn2.g", gn2_g);
        nn::collect(m, p + ".gn2.b", gn2_b);
        nn::collect(m, p + ".conv2.w", conv2_w);
        nn::collect(m, p + ".conv2.b", conv2_b);
    }
};

// gn -> silu -> conv over the frame axis (zero-init) -> +x
struct TemporalConvBlock {
    P gn_g, gn_b, w, b;

    struct C {
        Tensor x, gn_out, tm;
        GnCache g;
        int64_t bsz = 0, t = 0, h = 0, wd = 0;
    };

    void init(int ch) {
        gn_g.init_const({ch}, 1.0f);
        gn_b.init_zero({ch});
        w.init_zero({ch, ch, 3, 1});
        b.init_zero({ch});
    }

    Tensor forward(const Tensor& x, int64_t bsz, int64_t t, int groups, C* c) const {
        GnCache g;
        Tensor t1 = nn::groupnorm_fwd(x, gn_g, gn_b, groups, g);
        Tensor t2 = nn::silu_fwd(t1);
        Tensor tm = nn::to_time_major(t2, bsz, t);
        Tensor ym = nn::conv2d_fwd(tm, w, b, 1, 1, 1, 0);
        Tensor y = nn::from_time_major(ym, x.dim(2), x.dim(3));
        add_into(y, x);
        if (c) {
            c->x = x;
            c->gn_out = std::move(t1);
            c->tm = std::move(tm);
            c->g = std::move(g);
            c->bsz = bsz;
            c->t = t;
            c->h = x.dim(2);
            c->wd = x.dim(3);
        }
        return y;
    }

    Tensor backward(const Tensor& dy, int groups, C& c) {
        Tensor dym = nn::to_time_major(dy, c.bsz, c.t);
        Tensor dtm = nn::conv2d_bwd(c.tm, w, b, dym, 1, 1, 1, 0);
        Tensor d2 = nn::from_time_major(dtm, c.h, c.wd);
        Tensor d1 = nn::silu_bwd(c.gn_out, d2);
        Tensor dx = nn::groupnorm_bwd(c.x, gn_g, gn_g, gn_b, d1, groups, c.g);
        add_into(dx, dy);
        return dx;
    }

    void collect(const std::string& p, ParamMap& m) {
        nn::collect(m, p + ".gn.g", gn_g);
        nn::collect(m, p + ".gn.b", gn_b);
        nn::collect(m, p + ".w", w);
        nn::collect(m, p + ".b", b);
    }
};

// Self-attention over equal contiguous token windows: per-image windows of
// spatial tokens, or per-position windows over the frame axis.
struct WindowAttn {
    P gn_g, gn_b, qw, qb, kw, kb, vw, vb, ow, ob;

    struct C {
        Tensor x, gn_out, tk, q, k, v, attn_out;
        std::vector<AttnCache> ac;
        GnCache g;
    };

    void init(Rng& rng, int ch) {
        gn_g.init_const({ch}, 1.0f);
        gn_b.init_zero({ch});
        const double s = std::sqrt(1.0 / ch);
        qw.init_normal(rng, {ch, ch}, s);
        qb.init_zero({ch});
        kw.init_normal(rng, {ch, ch}, s);
        kb.init_zero({ch});
        vw.init_normal(rng, {ch, ch}, s);
        vb.init_zero({ch});
        ow.init_zero({ch, ch});
        ob.init_zero({ch});
    }

    Tensor forward(const Tensor& x, bool temporal, int64_t bsz, int64_t t, int groups, C* c) const {
        const int64_t h = x.dim(2), wd = x.dim(3);
        GnCache g;
        Tensor t1 = nn::groupnorm_fwd(x, gn_g, gn_b, groups, g);
        Tensor tk = temporal ? nn::time_tokens(t1, bsz, t) : nn::chw_to_tokens(t1);
        Tensor q = nn::linear_fwd(tk, qw, qb);
        Tensor k = nn::linear_fwd(tk, kw, kb);
        Tensor v = nn::linear_fwd(tk, vw, vb);
        const int64_t win = temporal ? t : h * wd;
        const int64_t nwin = tk.dim(0) / win;
        Tensor attn_out({tk.dim(0), tk.dim(1)});
        std::vector<AttnCache> ac(static_cast<size_t>(nwin));
        for (int64_t wi = 0; wi < nwin; ++wi) {
            Tensor qs = copy_rows(q, wi * win, (wi + 1) * win);
            Tensor ks = copy_rows(k, wi * win, (wi + 1) * win);
            Tensor vs = copy_rows(v, wi * win, (wi + 1) * win);
            Tensor os = nn::attention_fwd(qs, ks, vs, ac[static_cast<size_t>(wi)]);
            paste_rows(attn_out, wi * win, os);
        }
        Tensor o = nn::linear_fwd(attn_out, ow, ob);
        Tensor y = temporal ? nn::time_tokens_inv(o, bsz, t, x.dim(1), h, wd)
                            : nn::tokens_to_chw(o, x.dim(1), h, wd);
        add_into(y, x);
        if (c) {
            c->x = x;
            c->gn_out = std::move(t1);
            c->tk = std::move(tk);
            c->q = std::move(q);
            c->k = std::move(k);
            c->v = std::move(v);
            c->attn_out = std::move(attn_out);
            c->ac = std::move(ac);
            c->g = std::move(g);
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool temporal, int64_t bsz, int64_t t, int groups, C& c) {
        const int64_t h = dy.dim(2), wd = dy.dim(3);
        Tensor d_o = temporal ? nn::time_tokens(dy, bsz, t) : nn::chw_to_tokens(dy);
        Tensor d_attn = nn::linear_bwd(c.attn_out, ow, ob, d_o);
        const int64_t win = temporal ? t : h * wd;
        const int64_t nwin = c.tk.dim(0) / win;
        Tensor dq(c.q.shape), dk(c.k.shape), dv(c.v.shape);
        for (int64_t wi = 0; wi < nwin; ++wi) {
            Tensor qs = copy_rows(c.q, wi * win, (wi + 1) * win);
            Tensor ks = copy_rows(c.k, wi * win, (wi + 1) * win);
            Tensor vs = copy_rows(c.v, wi * win, (wi + 1) * win);
            Tensor dos = copy_rows(d_attn, wi * win, (wi + 1) * win);
            Tensor dqs, dks, dvs;
            nn::attention_bwd(qs, ks, vs, c.ac[static_cast<size_t>(wi)], dos, dqs, dks, dvs);
            paste_rows(dq, wi * win, dqs);
            paste_rows(dk, wi * win, dks);
            paste_rows(dv, wi * win, dvs);
        }
        Tensor dtk = nn::linear_bwd(c.tk, qw, qb, dq);
        add_into(dtk, nn::linear_bwd(c.tk, kw, kb, dk));
        add_into(dtk, nn::linear_bwd(c.tk, vw, vb, dv));
        Tensor d1 = temporal ? nn::time_tokens_inv(dtk, bsz, t, dy.dim(1), h, wd)
                             : nn::tokens_to_chw(dtk, dy.dim(1), h, wd);
        Tensor dx = nn::groupnorm_bwd(c.x, gn_g, gn_g, gn_b, d1, groups, c.g);
        add_into(dx, dy);
        return dx;
    }

    void collect(const std::string& p, ParamMap& m) {
        nn::collect(m, p + ".gn.g", gn_g);
        nn::collect(m, p + ".gn.b", gn_b);
        nn::collect(m, p + ".q.w", qw);
        nn::collect(m, p + ".q.b", qb);
        nn::collect(m, p + ".k.w", kw);
        nn::collect(m, p + ".k.b", kb);
        nn::collect(m, p + ".v.w", vw);
        nn::collect(m, p + ".v.b", vb);
        nn::collect(m, p + ".o.w", ow);
        nn::collect(m, p + ".o.b", ob);
    }
};

// Text cross-attention: queries from every frame token of a sample, keys and
// values from that sample's text rows.
struct CrossAttnBlock {
    P gn_g, gn_b, qw, qb, kw, kb, vw, vb, ow, ob;

    struct C {
        Tensor x, gn_out, tk, q, attn_out;
        std::vector<Tensor> ks, vs;
        std::vector<AttnCache> ac;
        GnCache g;
    };

    void init(Rng& rng, int ch, int text_width) {
        gn_g.init_const({ch}, 1.0f);
        gn_b.init_zero({ch});
        qw.init_normal(rng, {ch, ch}, std::sqrt(1.0 / ch));
        qb.init_zero({ch});
        kw.init_normal(rng, {ch, text_width}, std::sqrt(1.0 / text_width));
        kb.init_zero({ch});
        vw.init_normal(rng, {ch, text_width}, std::sqrt(1.0 / text_width));
        vb.init_zero({ch});
        ow.init_zero({ch, ch});
        ob.init_zero({ch});
    }

    Tensor forward(const Tensor& x, const std::vector<Tensor>& texts, int64_t t, int groups,
                   C* c) const {
        const int64_t bsz = static_cast<int64_t>(texts.size());
        const int64_t h = x.dim(2), wd = x.dim(3), win = t * h * wd;
        GnCache g;
        Tensor t1 = nn::groupnorm_fwd(x, gn_g, gn_b, groups, g);
        Tensor tk = nn::chw_to_tokens(t1);
        Tensor q = nn::linear_fwd(tk, qw, qb);
        Tensor attn_out({tk.dim(0), tk.dim(1)});
        std::vector<Tensor> ks(static_cast<size_t>(bsz)), vs(static_cast<size_t>(bsz));
        std::vector<AttnCache> ac(static_cast<size_t>(bsz));
        for (int64_t bi = 0; bi < bsz; ++bi) {
            const size_t bs = static_cast<size_t>(bi);
            ks[bs] = nn::linear_fwd(texts[bs], kw, kb);
            vs[bs] = nn::linear_fwd(texts[bs], vw, vb);
            Tensor qs = copy_rows(q, bi * win, (bi + 1) * win);
            Tensor os = nn::attention_fwd(qs, ks[bs], vs[bs], ac[bs]);
            paste_rows(attn_out, bi * win, os);
        }
        Tensor o = nn::linear_fwd(attn_out, ow, ob);
        Tensor y = nn::tokens_to_chw(o, x.dim(1), h, wd);
        add_into(y, x);
        if (c) {
            c->x = x;
            c->gn_out = std::move(t1);
            c->tk = std::move(tk);
            c->q = std::move(q);
            c->attn_out = std::move(attn_out);
            c->ks = std::move(ks);
            c->vs = std::move(vs);
            c->ac = std::move(ac);
            c->g = std::move(g);
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const std::vector<Tensor>& texts,
                    std::vector<Tensor>& d_texts, int64_t t, int groups, C& c) {
        const int64_t bsz = static_cast<int64_t>(texts.size());
        const int64_t h = dy.dim(2), wd = dy.dim(3), win = t * h * wd;
        Tensor d_o = nn::chw_to_tokens(dy);
        Tensor d_attn = nn::linear_bwd(c.attn_out, ow, ob, d_o);
        Tensor dq(c.q.shape);
        for (int64_t bi = 0; bi < bsz; ++bi) {
            const size_t bs = static_cast<size_t>(bi);
            Tensor qs = copy_rows(c.q, bi * win, (bi + 1) * win);
            Tensor dos = copy_rows(d_attn, bi * win, (bi + 1) * win);
            Tensor dqs, dks, dvs;
            nn::attention_bwd(qs, c.ks[bs], c.vs[bs], c.ac[bs], dos, dqs, dks, dvs);
            paste_rows(dq, bi * win, dqs);
            add_into(d_texts[bs], nn::linear_bwd(texts[bs], kw, kb, dks));
            add_into(d_texts[bs], nn::linear_bwd(texts[bs], vw, vb, dvs));
        }
        Tensor dtk = nn::linear_bwd(c.tk, qw, qb, dq);
        Tensor d1 = nn::tokens_to_chw(dtk, dy.dim(1), h, wd);
        Tensor dx = nn::groupnorm_bwd(c.x, gn_g, gn_g, gn_b, d1, groups, c.g);
        add_into(dx, dy);
        return dx;
    }

    void collect(const std::string& p, ParamMap& m) {
        nn::collect(m, p + ".gn.g", gn_g);
        nn::collect(m, p + ".gn.b", gn_b);
        nn::collect(m, p + ".q.w", qw);
        nn::collect(m, p + ".q.b", qb);
        nn::collect(m, p + ".k.w", kw);
        nn::collect(m, p + ".k.b", kb);
        nn::collect(m, p + ".v.w", vw);
        nn::collect(m, p + ".v.b", vb);
        nn::collect(m, p + ".o.w", ow);
        nn::collect(m, p + ".o.b", ob);
    }
};

Tensor text_rows_from_ids(const std::vector<int>& ids, const P& table, const P& pos,
                          const P& null_tok) {
    const int64_t d = table.v.dim(1);
    if (ids.empty()) {
        Tensor rows({1, d});
        std::copy(null_tok.v.ptr(), null_tok.v.ptr() + d, rows.ptr());
        return rows;
    }
    Tensor rows({static_cast<int64_t>(ids.size()), d});
    for (size_t l = 0; l < ids.size(); ++l) {
        const float* trow = table.v.ptr() + static_cast<int64_t>(ids[l]) * d;
        const float* prow = pos.v.ptr() + static_cast<int64_t>(l) * d;
        float* out = rows.ptr() + static_cast<int64_t>(l) * d;
        for (int64_t j = 0; j < d; ++j) out[j] = trow[j] + prow[j];
    }
    return rows;
}

}  // namespace

// ---- model ---------------------------------------------------------------

struct Denoiser::Impl {
    DenoiserConfig cfg;

    P conv_in_w, conv_in_b;
    ResBlock rb_d1;
    TemporalConvBlock tc_d1;
    WindowAttn ta_d1;
    CrossAttnBlock ca_d1;
    P down_w, down_b;
    ResBlock rb_m1;
    WindowAttn sa_m;
    CrossAttnBlock ca_m;
    TemporalConvBlock tc_m;
    WindowAttn ta_m;
    ResBlock rb_m2;
    P up_w, up_b, fuse_w, fuse_b;
    ResBlock rb_u1;
    TemporalConvBlock tc_u1;
    WindowAttn ta_u1;
    CrossAttnBlock ca_u1;
    P gn_out_g, gn_out_b, conv_out_w, conv_out_b;

    P mlp1_w, mlp1_b, mlp2_w, mlp2_b;
    P mag_proj_w, mag_proj_b, null_mag;
    P frame_emb;
    P tok_table, tok_pos, null_tok;

    void init(Rng& rng) {
        const int C = cfg.latent_channels, W0 = cfg.base_width, W1 = 2 * cfg.base_width;
        const int E = cfg.emb_width, F = cfg.feat_width, D = cfg.text_width;
        conv_in_w.init_normal(rng, {W0, 3 * C, 1, 1}, std::sqrt(2.0 / (3.0 * C)));
        conv_in_b.init_zero({W0});
        rb_d1.init(rng, W0, E);
        tc_d1.init(W0);
        ta_d1.init(rng, W0);
        ca_d1.init(rng, W0, D);
        down_w.init_normal(rng, {W1, W0, 3, 3}, std::sqrt(2.0 / (W0 * 9.0)));
        down_b.init_zero({W1});
        rb_m1.init(rng, W1, E);
        sa_m.init(rng, W1);
        ca_m.init(rng, W1, D);
        tc_m.init(W1);
        ta_m.init(rng, W1);
        rb_m2.init(rng, W1, E);
        up_w.init_normal(rng, {W0, W1, 3, 3}, std::sqrt(2.0 / (W1 * 9.0)));
        up_b.init_zero({W0});
        fuse_w.init_normal(rng, {W0, 2 * W0, 1, 1}, std::sqrt(2.0 / (2.0 * W0)));
        fuse_b.init_zero({W0});
        rb_u1.init(rng, W0, E);
        tc_u1.init(W0);
        ta_u1.init(rng, W0);
        ca_u1.init(rng, W0, D);
        gn_out_g.init_const({W0}, 1.0f);
        gn_out_b.init_zero({W0});
        conv_out_w.init_zero({C, W0, 3, 3});
        conv_out_b.init_zero({C});

        mlp1_w.init_normal(rng, {E, F}, std::sqrt(2.0 / F));
        mlp1_b.init_zero({E});
        mlp2_w.init_normal(rng, {E, E}, std::sqrt(2.0 / E));
        mlp2_b.init_zero({E});
        mag_proj_w.init_normal(rng, {F, F}, std::sqrt(1.0 / F));
        mag_proj_b.init_zero({F});
        null_mag.init_normal(rng, {F}, 0.2);
        frame_emb.init_normal(rng, {cfg.max_frames, E}, 0.02);
        tok_table.init_normal(rng, {static_cast<int64_t>(cfg.vocab.size()), D}, 0.2);
        tok_pos.init_normal(rng, {cfg.max_text_len, D}, 0.02);
        null_tok.init_normal(rng, {1, D}, 0.2);
    }

    void collect(ParamMap& m) {
        nn::collect(m, "conv_in.w", conv_in_w);
        nn::collect(m, "conv_in.b", conv_in_b);
        rb_d1.collect("rb_d1", m);
        tc_d1.collect("tc_d1", m);
        ta_d1.collect("ta_d1", m);
        ca_d1.collect("ca_d1", m);
        nn::collect(m, "down.w", down_w);
        nn::collect(m, "down.b", down_b);
        rb_m1.collect("rb_m1", m);
        sa_m.collect("sa_m", m);
        ca_m.collect("ca_m", m);
        tc_m.collect("tc_m", m);
        ta_m.collect("ta_m", m);
        rb_m2.collect("rb_m2", m);
        nn::collect(m, "up.w", up_w);
        nn::collect(m, "up.b", up_b);
        nn::collect(m, "fuse.w", fuse_w);
        nn::collect(m, "fuse.b", fuse_b);
        rb_u1.collect("rb_u1", m);
        tc_u1.collect("tc_u1", m);
        ta_u1.collect("ta_u1", m);
        ca_u1.collect("ca_u1", m);
        nn::collect(m, "gn_out.g", gn_out_g);
        nn::collect(m, "gn_out.b", gn_out_b);
        nn::collect(m, "conv_out.w", conv_out_w);
        nn::collect(m, "conv_out.b", conv_out_b);
        nn::collect(m, "mlp1.w", mlp1_w);
        nn::collect(m, "mlp1.b", mlp1_b);
        nn::collect(m, "mlp2.w", mlp2_w);
        nn::collect(m, "mlp2.b", mlp2_b);
        nn::collect(m, "mag_proj.w", mag_proj_w);
        nn::collect(m, "mag_proj.b", mag_proj_b);
        nn::collect(m, "null_mag", null_mag);
        nn::collect(m, "frame_emb", frame_emb);
        nn::collect(m, "tok_table", tok_table);
        nn::collect(m, "tok_pos", tok_pos);
        nn::collect(m, "null_tok", null_tok);
    }
};

struct Denoiser::Cache::Body {
    int64_t bsz = 0, t = 0, h = 0, w = 0;
    bool temporal = false;

    Tensor x_in;
    ResBlock::C rb_d1, rb_m1, rb_m2, rb_u1;
    TemporalConvBlock::C tc_d1, tc_m, tc_u1;
    WindowAttn::C ta_d1, sa_m, ta_m, ta_u1;
    CrossAttnBlock::C ca_d1, ca_m, ca_u1;
    Tensor skip, u_pre_conv, f_concat;
    Tensor gn_final_in, gn_final_out, silu_final;
    GnCache g_final;

    Tensor feat0, e1, e1s, emb_rows, emb_silu;
    std::vector<Tensor> mag_feats;  // raw sinusoid rows; empty tensor = null motion
    std::vector<Tensor> texts;      // per-sample embedded rows
};

Denoiser::Cache::Cache() : body(std::make_unique<Body>()) {}
Denoiser::Cache::~Cache() = default;
Denoiser::Cache::Cache(Cache&&) noexcept = default;

Denoiser::Denoiser(DenoiserConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    impl_ = std::make_unique<Impl>();
    impl_->cfg = cfg_;
    Rng rng(init_seed);
    impl_->init(rng);
}

Denoiser::~Denoiser() = default;
Denoiser::Denoiser(Denoiser&&) noexcept = default;
Denoiser& Denoiser::operator=(Denoiser&&) noexcept = default;

nn::ParamMap Denoiser::params() {
    ParamMap m;
    impl_->collect(m);
    return m;
}

int64_t Denoiser::param_count() {
    int64_t n = 0;
    for (const auto& pr : params()) n += pr.p->v.numel();
    return n;
}

void Denoiser::zero_grads() {
    for (auto& pr : params()) pr.p->zero_grad();
}

std::vector<int> Denoiser::tokenize(const std::string& prompt) const {
    std::string cleaned;
    cleaned.reserve(prompt.size());
    for (char ch : prompt)
        cleaned += (ch == ',' || ch == '.' || ch == ';' || ch == ':' || ch == '!' || ch == '?')
                       ? ' '
                       : ch;
    std::istringstream in(cleaned);
    std::vector<int> ids;
    std::string word;
    while (in >> word) {
        int id = -1;
        for (size_t i = 0; i < cfg_.vocab.size(); ++i)
            if (cfg_.vocab[i] == word) {
                id = static_cast<int>(i);
                break;
            }
        if (id < 0) throw usage_error("out-of-vocabulary token '" + word + "'");
        ids.push_back(id);
    }
    if (static_cast<int>(ids.size()) > cfg_.max_text_len)
        throw usage_error("prompt has " + std::to_string(ids.size()) + " tokens, limit is " +
                          std::to_string(cfg_.max_text_len));
    return ids;
}

Tensor Denoiser::embed_text(const std::string& prompt) const {
    return text_rows_from_ids(tokenize(prompt), impl_->tok_table, impl_->tok_pos, impl_->null_tok);
}

Tensor Denoiser::embed_magnitude(double m, bool is_null) const {
    Tensor out({cfg_.feat_width});
    if (is_null) {
        std::copy(impl_->null_mag.v.ptr(), impl_->null_mag.v.ptr() + cfg_.feat_width, out.ptr());
        return out;
    }
    if (m < 0.0) throw usage_error("flow magnitude must be non-negative");
    Tensor feat = nn::sinusoid_features(kMagScale * m, cfg_.feat_width);
    feat.reshape({1, cfg_.feat_width});
    Tensor proj = nn::linear_fwd(feat, impl_->mag_proj_w, impl_->mag_proj_b);
    std::copy(proj.ptr(), proj.ptr() + cfg_.feat_width, out.ptr());
    return out;
}

Tensor Denoiser::forward(const std::vector<Sample>& batch, Cache* cache) const {
    if (batch.empty()) throw runtime_failure("denoiser: empty batch");
    const Impl& im = *impl_;
    const int C = cfg_.latent_channels, G = cfg_.groups;
    const int64_t B = static_cast<int64_t>(batch.size());
    if (batch[0].z.ndim() != 4)
        throw runtime_failure("denoiser: latent must be [T,C,H,W], got " + batch[0].z.shape_str());
    const int64_t T = batch[0].z.dim(0), H = batch[0].z.dim(2), W = batch[0].z.dim(3);
    if (T < 1 || T > cfg_.max_frames)
        throw runtime_failure("denoiser: clip length " + std::to_string(T) +
                              " outside [1, max_frames=" + std::to_string(cfg_.max_frames) + "]");
    if (H % 2 != 0 || W % 2 != 0 || H < 2 || W < 2)
        throw runtime_failure("denoiser: latent H and W must be even, got " + batch[0].z.shape_str());

    // ---- input concat (noisy | first-frame | motion) + per-sample conditioning
    Tensor x({B * T, 3 * C, H, W});
    const int64_t plane = static_cast<int64_t>(C) * H * W;
    std::vector<Tensor> texts(static_cast<size_t>(B));
    Tensor feat0({B, cfg_.feat_width});
    std::vector<Tensor> mag_feats(static_cast<size_t>(B));
    for (int64_t bi = 0; bi < B; ++bi) {
        const Sample& s = batch[static_cast<size_t>(bi)];
        const size_t bs = static_cast<size_t>(bi);
        if (s.z.ndim() != 4 || s.z.dim(0) != T || s.z.dim(1) != C || s.z.dim(2) != H ||
            s.z.dim(3) != W)
            throw runtime_failure("denoiser: latent shape " + s.z.shape_str() +
                                  " inconsistent in batch");
        if (s.t < 0 || s.t > cfg_.num_train_steps)
            throw runtime_failure("denoiser: timestep " + std::to_string(s.t) + " outside schedule");
        const ConditioningBundle& cond = s.cond;
        if (cond.has_image &&
            (cond.image.ndim() != 3 || cond.image.dim(0) != C || cond.image.dim(1) != H ||
             cond.image.dim(2) != W))
            throw runtime_failure("denoiser: image conditioning shape " + cond.image.shape_str() +
                                  " mismatch");
        if (cond.has_motion &&
            (cond.motion.ndim() != 4 || cond.motion.dim(0) != T || cond.motion.dim(1) != C ||
             cond.motion.dim(2) != H || cond.motion.dim(3) != W))
            throw runtime_failure("denoiser: motion conditioning shape " + cond.motion.shape_str() +
                                  " mismatch");
        for (int64_t f = 0; f < T; ++f) {
            float* row = x.ptr() + (bi * T + f) * 3 * plane;
            std::copy(s.z.ptr() + f * plane, s.z.ptr() + (f + 1) * plane, row);
            if (cond.has_image) std::copy(cond.image.ptr(), cond.image.ptr() + plane, row + plane);
            if (cond.has_motion)
                std::copy(cond.motion.ptr() + f * plane, cond.motion.ptr() + (f + 1) * plane,
                          row + 2 * plane);
        }
        std::vector<int> ids;
        if (cond.has_text) {
            for (int id : cond.text_ids)
                if (id < 0 || id >= static_cast<int>(cfg_.vocab.size()))
                    throw runtime_failure("denoiser: token id out of range");
            ids = cond.text_ids;
        }
        texts[bs] = text_rows_from_ids(ids, im.tok_table, im.tok_pos, im.null_tok);
        Tensor tf = nn::sinusoid_features(static_cast<double>(s.t), cfg_.feat_width);
        if (cond.has_motion) {
            if (cond.magnitude < 0.0) throw usage_error("flow magnitude must be non-negative");
            Tensor mf = nn::sinusoid_features(kMagScale * cond.magnitude, cfg_.feat_width);
            mf.reshape({1, cfg_.feat_width});
            Tensor proj = nn::linear_fwd(mf, im.mag_proj_w, im.mag_proj_b);
            for (int64_t j = 0; j < cfg_.feat_width; ++j)
                feat0[bi * cfg_.feat_width + j] = tf[j] + proj[j];
            mag_feats[bs] = std::move(mf);
        } else {
            for (int64_t j = 0; j < cfg_.feat_width; ++j)
                feat0[bi * cfg_.feat_width + j] = tf[j] + im.null_mag.v[j];
        }
    }

    // ---- conditioning trunk: (timestep + magnitude) -> MLP, plus a frame row
    Tensor e1 = nn::linear_fwd(feat0, im.mlp1_w, im.mlp1_b);
    Tensor e1s = nn::silu_fwd(e1);
    Tensor e2 = nn::linear_fwd(e1s, im.mlp2_w, im.mlp2_b);
    Tensor emb_rows({B * T, cfg_.emb_width});
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t f = 0; f < T; ++f)
            for (int64_t j = 0; j < cfg_.emb_width; ++j)
                emb_rows[(bi * T + f) * cfg_.emb_width + j] =
                    e2[bi * cfg_.emb_width + j] + im.frame_emb.v[f * cfg_.emb_width + j];
    Tensor emb_silu = nn::silu_fwd(emb_rows);

    const bool temporal = cfg_.temporal_depth > 0;
    Cache::Body local;
    Cache::Body& cb = cache ? *cache->body : local;
    Cache::Body* cp = cache ? cache->body.get() : nullptr;
    cb.bsz = B;
    cb.t = T;
    cb.h = H;
    cb.w = W;
    cb.temporal = temporal;

    // ---- trunk
    Tensor h = nn::conv2d_fwd(x, im.conv_in_w, im.conv_in_b, 1, 1, 0, 0);
    if (cp) cb.x_in = std::move(x);
    h = im.rb_d1.forward(h, emb_silu, G, cp ? &cb.rb_d1 : nullptr);
    if (temporal) {
        h = im.tc_d1.forward(h, B, T, G, cp ? &cb.tc_d1 : nullptr);
        h = im.ta_d1.forward(h, true, B, T, G, cp ? &cb.ta_d1 : nullptr);
    }
    h = im.ca_d1.forward(h, texts, T, G, cp ? &cb.ca_d1 : nullptr);
    Tensor skip = h;
    h = nn::conv2d_fwd(h, im.down_w, im.down_b, 2, 2, 1, 1);
    h = im.rb_m1.forward(h, emb_silu, G, cp ? &cb.rb_m1 : nullptr);
    h = im.sa_m.forward(h, false, B, T, G, cp ? &cb.sa_m : nullptr);
    h = im.ca_m.forward(h, texts, T, G, cp ? &cb.ca_m : nullptr);
    if (temporal) {
        h = im.tc_m.forward(h, B, T, G, cp ? &cb.tc_m : nullptr);
        h = im.ta_m.forward(h, true, B, T, G, cp ? &cb.ta_m : nullptr);
    }
    h = im.rb_m2.forward(h, emb_silu, G, cp ? &cb.rb_m2 : nullptr);
    Tensor u0 = nn::upsample2x_fwd(h);
    h = nn::conv2d_fwd(u0, im.up_w, im.up_b, 1, 1, 1, 1);
    if (cp) cb.u_pre_conv = std::move(u0);
    Tensor f0 = nn::concat_channels(h, skip);
    if (cp) cb.skip = std::move(skip);
    h = nn::conv2d_fwd(f0, im.fuse_w, im.fuse_b, 1, 1, 0, 0);
    if (cp) cb.f_concat = std::move(f0);
    h = im.rb_u1.forward(h, emb_silu, G, cp ? &cb.rb_u1 : nullptr);
    if (temporal) {
        h = im.tc_u1.forward(h, B, T, G, cp ? &cb.tc_u1 : nullptr);
        h = im.ta_u1.forward(h, true, B, T, G, cp ? &cb.ta_u1 : nullptr);
    }
    h = im.ca_u1.forward(h, texts, T, G, cp ? &cb.ca_u1 : nullptr);
    GnCache gfin;
    Tensor gfo = nn::groupnorm_fwd(h, im.gn_out_g, im.gn_out_b, G, gfin);
    if (cp) cb.gn_final_in = std::move(h);
    Tensor gss = nn::silu_fwd(gfo);
    Tensor out = nn::conv2d_fwd(gss, im.conv_out_w, im.conv_out_b, 1, 1, 1, 1);
    if (cp) {
        cb.gn_final_out = std::move(gfo);
        cb.silu_final = std::move(gss);
        cb.g_final = std::move(gfin);
        cb.feat0 = std::move(feat0);
        cb.e1 = std::move(e1);
        cb.e1s = std::move(e1s);
        cb.emb_rows = std::move(emb_rows);
        cb.emb_silu = std::move(emb_silu);
        cb.mag_feats = std::move(mag_feats);
        cb.texts = std::move(texts);
    }
    return out;
}

void Denoiser::backward(const Tensor& dout, const std::vector<Sample>& batch, Cache& cache) {
    Impl& im = *impl_;
    Cache::Body& cb = *cache.body;
    const int G = cfg_.groups;
    const int64_t B = cb.bsz, T = cb.t;
    if (static_cast<int64_t>(batch.size()) != B || cb.x_in.numel() == 0)
        throw runtime_failure("denoiser: backward batch does not match cached forward");

    Tensor d_emb_silu(cb.emb_silu.shape);
    std::vector<Tensor> d_texts(static_cast<size_t>(B));
    for (int64_t bi = 0; bi < B; ++bi)
        d_texts[static_cast<size_t>(bi)] = Tensor(cb.texts[static_cast<size_t>(bi)].shape);

    // ---- trunk, reversed
    Tensor d = nn::conv2d_bwd(cb.silu_final, im.conv_out_w, im.conv_out_b, dout, 1, 1, 1, 1);
    d = nn::silu_bwd(cb.gn_final_out, d);
    d = nn::groupnorm_bwd(cb.gn_final_in, im.gn_out_g, im.gn_out_g, im.gn_out_b, d, G, cb.g_final);
    d = im.ca_u1.backward(d, cb.texts, d_texts, T, G, cb.ca_u1);
    if (cb.temporal) {
        d = im.ta_u1.backward(d, true, B, T, G, cb.ta_u1);
        d = im.tc_u1.backward(d, G, cb.tc_u1);
    }
    d = im.rb_u1.backward(d, cb.emb_silu, d_emb_silu, G, cb.rb_u1);
    Tensor df = nn::conv2d_bwd(cb.f_concat, im.fuse_w, im.fuse_b, d, 1, 1, 0, 0);
    Tensor d_up_out, d_skip;
    nn::split_channels(df, cfg_.base_width, d_up_out, d_skip);
    Tensor du = nn::conv2d_bwd(cb.u_pre_conv, im.up_w, im.up_b, d_up_out, 1, 1, 1, 1);
    d = nn::upsample2x_bwd(du);
    d = im.rb_m2.backward(d, cb.emb_silu, d_emb_silu, G, cb.rb_m2);
    if (cb.temporal) {
        d = im.ta_m.backward(d, true, B, T, G, cb.ta_m);
        d = im.tc_m.backward(d, G, cb.tc_m);
    }
    d = im.ca_m.backward(d, cb.texts, d_texts, T, G, cb.ca_m);
    d = im.sa_m.backward(d, false, B, T, G, cb.sa_m);
    d = im.rb_m1.backward(d, cb.emb_silu, d_emb_silu, G, cb.rb_m1);
    d = nn::conv2d_bwd(cb.skip, im.down_w, im.down_b, d, 2, 2, 1, 1);
    add_into(d, d_skip);
    d = im.ca_d1.backward(d, cb.texts, d_texts, T, G, cb.ca_d1);
    if (cb.temporal) {
        d = im.ta_d1.backward(d, true, B, T, G, cb.ta_d1);
        d = im.tc_d1.backward(d, G, cb.tc_d1);
    }
    d = im.rb_d1.backward(d, cb.emb_silu, d_emb_silu, G, cb.rb_d1);
    nn::conv2d_bwd(cb.x_in, im.conv_in_w, im.conv_in_b, d, 1, 1, 0, 0);

    // ---- conditioning trunk, reversed
    Tensor d_emb_rows = nn::silu_bwd(cb.emb_rows, d_emb_silu);
    Tensor dE2({B, cfg_.emb_width});
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t f = 0; f < T; ++f) {
            const float* src = d_emb_rows.ptr() + (bi * T + f) * cfg_.emb_width;
            float* frow = im.frame_emb.g.ptr() + f * cfg_.emb_width;
            float* erow = dE2.ptr() + bi * cfg_.emb_width;
            for (int64_t j = 0; j < cfg_.emb_width; ++j) {
                frow[j] += src[j];
                erow[j] += src[j];
            }
        }
    Tensor d_e1s = nn::linear_bwd(cb.e1s, im.mlp2_w, im.mlp2_b, dE2);
    Tensor d_e1 = nn::silu_bwd(cb.e1, d_e1s);
    Tensor d_feat0 = nn::linear_bwd(cb.feat0, im.mlp1_w, im.mlp1_b, d_e1);
    for (int64_t bi = 0; bi < B; ++bi) {
        const size_t bs = static_cast<size_t>(bi);
        Tensor drow = copy_rows(d_feat0, bi, bi + 1);
        if (batch[bs].cond.has_motion) {
            nn::linear_bwd(cb.mag_feats[bs], im.mag_proj_w, im.mag_proj_b, drow);
        } else {
            kernels::active().axpy_acc(cfg_.feat_width, 1.0f, drow.ptr(), im.null_mag.g.ptr());
        }
    }

    // ---- text tables, scatter-add
    const int64_t D = cfg_.text_width;
    for (int64_t bi = 0; bi < B; ++bi) {
        const size_t bs = static_cast<size_t>(bi);
        const Tensor& dt = d_texts[bs];
        if (batch[bs].cond.has_text && !batch[bs].cond.text_ids.empty()) {
            const auto& ids = batch[bs].cond.text_ids;
            for (size_t l = 0; l < ids.size(); ++l) {
                const float* src = dt.ptr() + static_cast<int64_t>(l) * D;
                kernels::active().axpy_acc(D, 1.0f, src,
                                           im.tok_table.g.ptr() + static_cast<int64_t>(ids[l]) * D);
                kernels::active().axpy_acc(D, 1.0f, src,
                                           im.tok_pos.g.ptr() + static_cast<int64_t>(l) * D);
            }
        } else {
            kernels::active().axpy_acc(D, 1.0f, dt.ptr(), im.null_tok.g.ptr());
        }
    }
}

Tensor Denoiser::denoise(const LatentVideo& z, int t, const ConditioningBundle& cond) const {
    std::vector<Sample> batch(1);
    batch[0].z = z.latents;
    batch[0].t = t;
    batch[0].cond = cond;
    Tensor out = forward(batch, nullptr);
    out.reshape({z.t(), z.c(), z.h(), z.w()});
    return out;
}

}  // namespace moca
