#pragma once

// The per-agent planner network.
//
//   X0      = [X | U] W_enc + b_enc
//   repeat K times:
//     Q, K, V = Xk W_{q,k,v} + b
//     A~      = row_softmax(g(Q K^T, A))        g: per-entry ReLU MLP 2-16-16-16-1
//     Xk+1    = Xk + LSTM(A~ V; H)
//   values  = XK W_dec + b_dec, masked softmax over uncovered nodes
//
// Communication: messages are the final encodings XK. A receiver projects
// each message node-wise (shared weights) into queries and values, projects
// its own last message into a key, and attends over senders with the
// Frobenius inner product of the flattened n x c blocks.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marvin/features.hpp"
#include "marvin/graph.hpp"
#include "marvin/nn/params.hpp"
#include "marvin/nn/tape.hpp"

namespace marvin {

enum class CommKind { Attention, Mean, MaxPool };

inline std::string to_string(CommKind k) {
    switch (k) {
        case CommKind::Attention: return "attention";
        case CommKind::Mean: return "commnet-mean";
        case CommKind::MaxPool: return "maxpool";
    }
    return "?";
}

inline CommKind comm_kind_from_string(const std::string& s) {
    if (s == "attention") return CommKind::Attention;
    if (s == "commnet-mean" || s == "mean") return CommKind::Mean;
    if (s == "maxpool") return CommKind::MaxPool;
    throw Error("unknown communication kind \"" + s + "\"");
}

struct AblationFlags {
    bool attention = true;
    bool dense_adjacency = true;
    bool lstm = true;

    static AblationFlags full() { return {}; }
    static AblationFlags no_lstm() { return {true, true, false}; }
    static AblationFlags gat() { return {true, false, false}; }
    static AblationFlags gvin() { return {false, false, false}; }

    std::string name() const {
        if (attention && dense_adjacency && lstm) return "full";
        if (attention && dense_adjacency) return "no-lstm";
        if (attention && !dense_adjacency && !lstm) return "gat";
        if (!attention && !dense_adjacency && !lstm) return "gvin";
        return std::string("custom(") + (attention ? "A" : "a") + (dense_adjacency ? "D" : "d") + (lstm ? "L" : "l") +
               ")";
    }
};

struct ModelConfig {
    std::size_t encoding = 16;
    std::size_t comm_channels = kCommChannels;
    std::vector<std::size_t> fusion_hidden{16, 16, 16};
    int iterations = 5;  // K
    AblationFlags ablation;
    CommKind comm = CommKind::Attention;

    nlohmann::json to_json() const {
        return {{"encoding", encoding},
                {"comm_channels", comm_channels},
                {"fusion_hidden", fusion_hidden},
                {"iterations", iterations},
                {"attention", ablation.attention},
                {"dense_adjacency", ablation.dense_adjacency},
                {"lstm", ablation.lstm},
                {"comm", to_string(comm)}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.encoding = j.value("encoding", c.encoding);
        c.comm_channels = j.value("comm_channels", c.comm_channels);
        if (j.contains("fusion_hidden")) c.fusion_hidden = j["fusion_hidden"].get<std::vector<std::size_t>>();
        c.iterations = j.value("iterations", c.iterations);
        c.ablation.attention = j.value("attention", true);
        c.ablation.dense_adjacency = j.value("dense_adjacency", true);
        c.ablation.lstm = j.value("lstm", true);
        c.comm = comm_kind_from_string(j.value("comm", std::string("attention")));
        if (c.iterations < 1) throw Error("model config: iterations must be >= 1");
        if (c.encoding == 0 || c.comm_channels == 0) throw Error("model config: widths must be positive");
        return c;
    }
};

/// Graph-dependent planner inputs, computed once per graph.
struct PlannerGraph {
    nn::Tensor adjacency;    // n x n, fed to the fusion MLP with the attention scores
    nn::Tensor propagation;  // n x n row-stochastic matrix used when attention is off

    static PlannerGraph build(const Matrix& normalized_distance, const Matrix& connectivity, const AblationFlags& f) {
        PlannerGraph pg;
        const std::size_t n = connectivity.rows;
        pg.adjacency = nn::Tensor::from_matrix(f.dense_adjacency ? normalized_distance : connectivity);
        pg.propagation = nn::Tensor({n, n}, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double z = 0.0;
            if (f.dense_adjacency) {
                double mn = normalized_distance(i, 0);
                for (std::size_t j = 0; j < n; ++j) mn = std::min(mn, normalized_distance(i, j));
                for (std::size_t j = 0; j < n; ++j) z += (pg.propagation(i, j) = std::exp(-(normalized_distance(i, j) - mn)));
            } else {
                for (std::size_t j = 0; j < n; ++j) z += (pg.propagation(i, j) = connectivity(i, j));
            }
            if (z == 0.0) {
                pg.propagation(i, i) = 1.0;
                z = 1.0;
            }
            for (std::size_t j = 0; j < n; ++j) pg.propagation(i, j) /= z;
        }
        return pg;
    }

    static PlannerGraph build(const GraphContext& ctx, const AblationFlags& f) {
        return build(ctx.norm.A, connectivity_matrix(ctx.graph), f);
    }
};

class MarvinModel {
public:
    using Bound = std::span<const nn::Var>;

    explicit MarvinModel(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
        Rng rng(derive_seed(seed, 0x1f83d9ab));
        const std::size_t d = cfg_.encoding, c = cfg_.comm_channels;
        const std::size_t in = kNodeFeatures + c;
        enc_W_ = store_.add_uniform("enc.W", {in, d}, in, rng);
        enc_b_ = store_.add_uniform("enc.b", {d}, in, rng);
        if (cfg_.ablation.attention) {
            q_W_ = store_.add_uniform("att.Wq", {d, d}, d, rng);
            q_b_ = store_.add_uniform("att.bq", {d}, d, rng);
            k_W_ = store_.add_uniform("att.Wk", {d, d}, d, rng);
            k_b_ = store_.add_uniform("att.bk", {d}, d, rng);
        }
        v_W_ = store_.add_uniform("att.Wv", {d, d}, d, rng);
        v_b_ = store_.add_uniform("att.bv", {d}, d, rng);
        if (cfg_.ablation.attention) {
            std::size_t prev = 2;
            std::vector<std::size_t> widths = cfg_.fusion_hidden;
            widths.push_back(1);
            for (std::size_t l = 0; l < widths.size(); ++l) {
                const std::string p = "fuse.l" + std::to_string(l);
                fuse_.push_back({store_.add_uniform(p + ".W", {prev, widths[l]}, prev, rng),
                                 store_.add_uniform(p + ".b", {widths[l]}, prev, rng)});
                prev = widths[l];
            }
        }
        if (cfg_.ablation.lstm) {
            lstm_Wx_ = store_.add_uniform("lstm.Wx", {d, 4 * d}, d, rng);
            lstm_Wh_ = store_.add_uniform("lstm.Wh", {d, 4 * d}, d, rng);
            lstm_b_ = store_.add_uniform("lstm.b", {4 * d}, d, rng);
        } else {
            upd_W_ = store_.add_uniform("upd.W", {d, d}, d, rng);
            upd_b_ = store_.add_uniform("upd.b", {d}, d, rng);
        }
        dec_W_ = store_.add_uniform("dec.W", {d, 1}, d, rng);
        dec_b_ = store_.add_uniform("dec.b", {1}, d, rng);
        if (c != d) {
            msg_W_ = store_.add_uniform("msg.W", {d, c}, d, rng);
            msg_b_ = store_.add_uniform("msg.b", {c}, d, rng);
        }
        if (cfg_.comm == CommKind::Attention) {
            cq_W_ = store_.add_uniform("comm.Wq", {c, c}, c, rng);
            cq_b_ = store_.add_uniform("comm.bq", {c}, c, rng);
            ck_W_ = store_.add_uniform("comm.Wk", {c, c}, c, rng);
            ck_b_ = store_.add_uniform("comm.bk", {c}, c, rng);
        }
        cv_W_ = store_.add_uniform("comm.Wv", {c, c}, c, rng);
        cv_b_ = store_.add_uniform("comm.bv", {c}, c, rng);
    }

    /// Rebuilds a model around stored parameters (names and shapes must match
    /// the configuration).
    MarvinModel(ModelConfig cfg, const nn::ParamStore& params) : MarvinModel(std::move(cfg), 0) {
        if (params.size() != store_.size())
            throw Error("checkpoint has " + std::to_string(params.size()) + " tensors, model expects " +
                        std::to_string(store_.size()));
        for (std::size_t i = 0; i < store_.size(); ++i) {
            const auto& src = params.at(store_[i].name);
            if (src.value.shape != store_[i].value.shape)
                throw Error("checkpoint tensor \"" + src.name + "\" has shape " + src.value.shape_str() + ", expected " +
                            store_[i].value.shape_str());
        }
        nn::ParamStore ordered;
        for (std::size_t i = 0; i < store_.size(); ++i) {
            const auto& src = params.at(store_[i].name);
            ordered.add(src.name, src.value);
            ordered[i].m = src.m;
            ordered[i].v = src.v;
        }
        ordered.set_step(params.step());
        store_ = std::move(ordered);
    }

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }

    // -- building blocks (all operate on parameters bound to a tape) ---------

    nn::Var encode(nn::Tape& t, Bound p, nn::Var X, nn::Var U) const {
        const auto& xv = t.value(X);
        const auto& uv = t.value(U);
        if (xv.cols() != kNodeFeatures || uv.cols() != cfg_.comm_channels)
            throw Error("encode: expected widths " + std::to_string(kNodeFeatures) + " and " +
                        std::to_string(cfg_.comm_channels) + ", got " + xv.shape_str() + " and " + uv.shape_str());
        return nn::linear(t, nn::concat_cols(t, X, U), p[enc_W_], p[enc_b_]);
    }

    /// Fused attention weights A~ (rows sum to one).
    nn::Var fused_attention(nn::Tape& t, Bound p, nn::Var Xk, nn::Var A, nn::Var propagation) const {
        if (!cfg_.ablation.attention) return propagation;
        const std::size_t n = t.value(Xk).rows();
        if (t.value(A).rows() != n || t.value(A).cols() != n)
            throw Error("attention_block: adjacency " + t.value(A).shape_str() + " does not match " +
                        std::to_string(n) + " nodes");
        nn::Var Q = nn::linear(t, Xk, p[q_W_], p[q_b_]);
        nn::Var K = nn::linear(t, Xk, p[k_W_], p[k_b_]);
        nn::Var S = nn::attention_scores(t, Q, K);
        std::vector<nn::LinearLayer> layers;
        for (const auto& l : fuse_) layers.push_back({p[l.W], p[l.b]});
        nn::Var logits = nn::mlp_relu(t, nn::pair_rows(t, S, A), layers);
        return nn::row_softmax(t, nn::reshape(t, logits, {n, n}));
    }

    nn::Var attention_block(nn::Tape& t, Bound p, nn::Var Xk, nn::Var A, nn::Var propagation) const {
        nn::Var V = nn::linear(t, Xk, p[v_W_], p[v_b_]);
        return nn::matmul(t, fused_attention(t, p, Xk, A, propagation), V);
    }

    /// K residual refinement rounds; the LSTM state starts at zero.
    nn::Var value_iterate(nn::Tape& t, Bound p, nn::Var X0, nn::Var A, nn::Var propagation, int K) const {
        if (K < 1) throw Error("value_iterate: K must be >= 1");
        const std::size_t n = t.value(X0).rows(), d = cfg_.encoding;
        nn::Var X = X0;
        nn::LstmState s{t.constant(nn::Tensor({n, d})), t.constant(nn::Tensor({n, d}))};
        for (int k = 0; k < K; ++k) {
            nn::Var m = attention_block(t, p, X, A, propagation);
            nn::Var delta;
            if (cfg_.ablation.lstm) {
                s = nn::lstm_cell(t, m, s, {p[lstm_Wx_], p[lstm_Wh_], p[lstm_b_]});
                delta = s.h;
            } else {
                delta = nn::relu(t, nn::linear(t, m, p[upd_W_], p[upd_b_]));
            }
            X = nn::add(t, X, delta);
        }
        return X;
    }

    /// Scalar value per node, shape [n].
    nn::Var decode(nn::Tape& t, Bound p, nn::Var XK) const {
        const std::size_t n = t.value(XK).rows();
        return nn::reshape(t, nn::linear(t, XK, p[dec_W_], p[dec_b_]), {n});
    }

    /// Broadcast message derived from the final encoding.
    nn::Var message(nn::Tape& t, Bound p, nn::Var XK) const {
        if (cfg_.comm_channels == cfg_.encoding) return XK;
        return nn::linear(t, XK, p[msg_W_], p[msg_b_]);
    }

    /// Aggregated communication input U (n x c). An empty inbox yields zeros.
    nn::Var aggregate(nn::Tape& t, Bound p, std::span<const nn::Var> inbox, std::optional<nn::Var> self_last,
                      std::size_t n) const {
        const std::size_t c = cfg_.comm_channels;
        if (inbox.empty()) return t.constant(nn::Tensor({n, c}));
        std::vector<nn::Var> values;
        for (auto m : inbox) {
            if (t.value(m).rows() != n || t.value(m).cols() != c)
                throw Error("aggregate: message shape " + t.value(m).shape_str() + " does not match " +
                            std::to_string(n) + "x" + std::to_string(c));
            values.push_back(nn::linear(t, m, p[cv_W_], p[cv_b_]));
        }
        switch (cfg_.comm) {
            case CommKind::Mean: return nn::mean_of(t, values);
            case CommKind::MaxPool: return nn::max_of(t, values);
            case CommKind::Attention: break;
        }
        nn::Var own = self_last ? *self_last : t.constant(nn::Tensor({n, c}));
        nn::Var key = nn::linear(t, own, p[ck_W_], p[ck_b_]);
        std::vector<nn::Var> scores;
        for (auto m : inbox) scores.push_back(nn::dot_all(t, nn::linear(t, m, p[cq_W_], p[cq_b_]), key));
        std::vector<char> all(scores.size(), 1);
        nn::Var alpha = nn::masked_softmax(t, nn::stack_scalars(t, scores), all);
        return nn::weighted_sum(t, alpha, values);
    }

    /// Attention weights over senders, for inspection.
    std::vector<double> comm_weights(std::span<const Matrix> inbox, const Matrix* self_last) const {
        nn::Tape t;
        auto p = bind_constants(t);
        const std::size_t c = cfg_.comm_channels;
        std::vector<double> out;
        if (inbox.empty() || cfg_.comm != CommKind::Attention) return out;
        const std::size_t n = inbox[0].rows;
        nn::Var own = self_last ? t.constant(nn::Tensor::from_matrix(*self_last)) : t.constant(nn::Tensor({n, c}));
        nn::Var key = nn::linear(t, own, p[ck_W_], p[ck_b_]);
        std::vector<nn::Var> scores;
        for (const auto& m : inbox)
            scores.push_back(nn::dot_all(t, nn::linear(t, t.constant(nn::Tensor::from_matrix(m)), p[cq_W_], p[cq_b_]), key));
        std::vector<char> all(scores.size(), 1);
        return t.value(nn::masked_softmax(t, nn::stack_scalars(t, scores), all)).data;
    }

    std::vector<nn::Var> bind_constants(nn::Tape& t) const {
        std::vector<nn::Var> vars;
        for (const auto& prm : store_.params()) vars.push_back(t.constant(prm.value));
        return vars;
    }

    // -- full decision forward ------------------------------------------------

    struct Inputs {
        const Matrix& X;                 // n x 10 node features
        std::span<const Matrix> inbox;   // messages from other agents
        const Matrix* self_last;         // own previous message, may be null
        const PlannerGraph& graph;
        int iterations;                  // K at this call
    };

    struct Forward {
        nn::Var U, X0, XK, values, message;
    };

    Forward forward(nn::Tape& t, Bound p, const Inputs& in) const {
        const std::size_t n = in.X.rows;
        std::vector<nn::Var> msgs;
        for (const auto& m : in.inbox) msgs.push_back(t.constant(nn::Tensor::from_matrix(m)));
        std::optional<nn::Var> own;
        if (in.self_last) own = t.constant(nn::Tensor::from_matrix(*in.self_last));
        Forward f;
        f.U = aggregate(t, p, msgs, own, n);
        f.X0 = encode(t, p, t.constant(nn::Tensor::from_matrix(in.X)), f.U);
        nn::Var A = t.constant(in.graph.adjacency);
        nn::Var P = t.constant(in.graph.propagation);
        f.XK = value_iterate(t, p, f.X0, A, P, in.iterations);
        f.values = decode(t, p, f.XK);
        f.message = message(t, p, f.XK);
        return f;
    }

private:
    struct LayerIdx {
        std::size_t W, b;
    };

    ModelConfig cfg_;
    nn::ParamStore store_;
    std::size_t enc_W_ = 0, enc_b_ = 0;
    std::size_t q_W_ = 0, q_b_ = 0, k_W_ = 0, k_b_ = 0, v_W_ = 0, v_b_ = 0;
    std::vector<LayerIdx> fuse_;
    std::size_t lstm_Wx_ = 0, lstm_Wh_ = 0, lstm_b_ = 0;
    std::size_t upd_W_ = 0, upd_b_ = 0;
    std::size_t dec_W_ = 0, dec_b_ = 0;
    std::size_t msg_W_ = 0, msg_b_ = 0;
    std::size_t cq_W_ = 0, cq_b_ = 0, ck_W_ = 0, ck_b_ = 0, cv_W_ = 0, cv_b_ = 0;
};

// ---------------------------------------------------------------------------
// Action selection

enum class SelectMode { Greedy, Sample };

struct Selection {
    std::vector<double> probs;
    NodeId chosen = 0;
    double log_prob = 0.0;
};

/// Masked softmax over node values, then argmax (ties to the lowest id) or a
/// draw from the distribution.
inline Selection select_action(std::span<const double> values, std::span<const char> allowed, SelectMode mode,
                               Rng* rng) {
    nn::Tape t;
    auto v = t.constant(nn::Tensor({values.size()}, std::vector<double>(values.begin(), values.end())));
    Selection s;
    s.probs = t.value(nn::masked_softmax(t, v, allowed)).data;
    if (mode == SelectMode::Greedy || rng == nullptr) {
        double best = -1.0;
        for (std::size_t k = 0; k < s.probs.size(); ++k)
            if (allowed[k] && s.probs[k] > best) {
                best = s.probs[k];
                s.chosen = k;
            }
    } else {
        const double u = uniform01(*rng);
        double acc = 0.0;
        std::size_t last_allowed = 0;
        bool picked = false;
        for (std::size_t k = 0; k < s.probs.size(); ++k) {
            if (!allowed[k]) continue;
            last_allowed = k;
            acc += s.probs[k];
            if (u < acc) {
                s.chosen = k;
                picked = true;
                break;
            }
        }
        if (!picked) s.chosen = last_allowed;
    }
    s.log_prob = std::log(s.probs[s.chosen]);
    return s;
}

}  // namespace marvin
