// Single-layer Elman network trained on aligned (input symbol, output string)
// steps, with a spectral-norm penalty on the recurrent weights. The trained
// model exposes hidden-state traces, which downstream clustering turns into
// FST states.
//
// Besides the main transduction objective there are two alternates: a next
// aligned-pair language model and a binary accept/reject classifier over
// corrupted outputs. All three share one trainer; a sequence is compiled to a
// per-position program of (embedded token, head token, target) triples, or to
// a sequence-level binary target.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fstforge/alignment.hpp"
#include "fstforge/errors.hpp"
#include "fstforge/rng.hpp"
#include "fstforge/symbol_table.hpp"

namespace fstforge {

enum class Objective { transduction, language_model, binary_classification };

inline std::string objective_name(Objective o) {
    switch (o) {
        case Objective::transduction: return "transduction";
        case Objective::language_model: return "lm";
        case Objective::binary_classification: return "binary";
    }
    throw ConfigError("bad objective enum");
}

inline Objective parse_objective(const std::string& s) {
    if (s == "transduction") return Objective::transduction;
    if (s == "lm" || s == "language_model") return Objective::language_model;
    if (s == "binary" || s == "binary_classification")
        return Objective::binary_classification;
    throw ConfigError("unknown objective: " + s);
}

// Output labels are whole merged output strings treated atomically.
// Label 0 is always the empty string; the rest follow in sorted order.
struct OutputVocab {
    std::vector<std::vector<SymbolId>> labels;
    std::map<std::vector<SymbolId>, std::uint32_t> index;

    static OutputVocab build(const std::vector<MergedSequence>& data) {
        std::set<std::vector<SymbolId>> seen;
        seen.insert({});
        for (const auto& seq : data)
            for (const auto& s : seq.steps) seen.insert(s.out);
        OutputVocab v;
        for (const auto& label : seen) {
            v.index.emplace(label, static_cast<std::uint32_t>(v.labels.size()));
            v.labels.push_back(label);
        }
        return v;
    }

    std::uint32_t size() const { return static_cast<std::uint32_t>(labels.size()); }
    bool contains(const std::vector<SymbolId>& label) const {
        return index.count(label) > 0;
    }
    std::uint32_t require(const std::vector<SymbolId>& label) const {
        auto it = index.find(label);
        if (it == index.end()) throw UnknownSymbolError("output label not in vocabulary");
        return it->second;
    }
    const std::vector<SymbolId>& label(std::uint32_t id) const { return labels.at(id); }

    bool operator==(const OutputVocab& o) const { return labels == o.labels; }
};

// Joint (input symbol, output label) token vocabulary for the alternate
// objectives. Token ids are dense; one extra embedding row past the end
// serves as the begin-of-sequence token for the language model.
struct PairVocab {
    std::vector<std::pair<SymbolId, std::uint32_t>> tokens;
    std::map<std::pair<SymbolId, std::uint32_t>, std::uint32_t> index;

    void add(SymbolId in, std::uint32_t label) {
        if (index.emplace(std::make_pair(in, label),
                          static_cast<std::uint32_t>(tokens.size()))
                .second)
            tokens.emplace_back(in, label);
    }
    std::uint32_t size() const { return static_cast<std::uint32_t>(tokens.size()); }
    std::uint32_t bos() const { return size(); }
    std::uint32_t require(SymbolId in, std::uint32_t label) const {
        auto it = index.find({in, label});
        if (it == index.end()) throw UnknownSymbolError("aligned pair not in vocabulary");
        return it->second;
    }

    bool operator==(const PairVocab& o) const { return tokens == o.tokens; }
};

struct TrainConfig {
    int d = 32;
    double lambda_sn = 0.1;
    double lr = 1e-3;
    double dropout = 0.0;
    double label_smoothing = 0.1;
    int batch_size = 16;
    int epochs = 200;
    std::uint64_t seed = 0;
    Objective objective = Objective::transduction;
    bool use_bias = true;
    bool average_sn = false;  // average the two matrix norms instead of summing
    double grad_clip = 5.0;
    double weight_decay = 0.01;

    bool operator==(const TrainConfig&) const = default;
};

struct ModelParams {
    int d = 0;
    Eigen::MatrixXd input_embed;  // one row per token
    Eigen::MatrixXd W_h;          // d x d
    Eigen::MatrixXd W_x;          // d x d, applied to the embedded token
    Eigen::VectorXd b_h;
    Eigen::MatrixXd W_y;  // head_vocab x 2d, reads concat(h_prev, embed)
    Eigen::VectorXd b_y;
    Eigen::VectorXd w_bin;  // accept head; empty unless binary objective
    double b_bin = 0.0;
};

// Persistent left/right vector estimate for one weight matrix.
struct PowerIterState {
    Eigen::VectorXd u;
    std::mt19937_64 rng;

    PowerIterState() : rng(0) {}
    PowerIterState(Eigen::Index dim, std::mt19937_64 r) : rng(std::move(r)) {
        reset(dim);
    }
    void reset(Eigen::Index dim) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        u.resize(dim);
        for (Eigen::Index i = 0; i < dim; ++i) u[i] = gauss(rng);
        double n = u.norm();
        if (n > 0) u /= n;
    }
};

// One power-iteration round: v = normalize(W u), estimate = |W u|, then
// u <- normalize(W^T v) for the next call. A zero matrix yields 0 and a
// fresh random u.
inline double spectral_norm(const Eigen::MatrixXd& W, int iters, PowerIterState& st) {
    if (iters < 1) throw ConfigError("spectral_norm requires iters >= 1");
    if (st.u.size() != W.cols()) st.reset(W.cols());
    double sigma = 0.0;
    for (int i = 0; i < iters; ++i) {
        Eigen::VectorXd wu = W * st.u;
        sigma = wu.norm();
        if (sigma == 0.0) {
            st.reset(W.cols());
            return 0.0;
        }
        Eigen::VectorXd v = wu / sigma;
        Eigen::VectorXd wtv = W.transpose() * v;
        double n = wtv.norm();
        if (n > 0) st.u = wtv / n;
    }
    return sigma;
}

inline double spectral_norm(const Eigen::MatrixXd& W, int iters = 100) {
    PowerIterState st(W.cols(), substream(0, "specnorm-oneshot"));
    return spectral_norm(W, iters, st);
}

inline constexpr std::uint32_t kNoLabel = 0xffffffffu;

// Hidden states h[0..T] for one string plus the per-position
// (input symbol, output label) decisions.
struct HiddenTrace {
    std::vector<Eigen::VectorXd> h;
    std::vector<std::pair<SymbolId, std::uint32_t>> steps;
};

namespace detail {

inline void check_token(const ModelParams& m, std::uint32_t id) {
    if (static_cast<Eigen::Index>(id) >= m.input_embed.rows())
        throw UnknownSymbolError("token id " + std::to_string(id) +
                                 " outside embedding table");
}

inline Eigen::VectorXd step_state(const ModelParams& m, const Eigen::VectorXd& h,
                                  std::uint32_t token) {
    check_token(m, token);
    Eigen::VectorXd a = m.W_h * h + m.W_x * m.input_embed.row(token).transpose();
    if (m.b_h.size()) a += m.b_h;
    return a.array().tanh();
}

}  // namespace detail

inline HiddenTrace forward(const ModelParams& m, std::span<const SymbolId> input) {
    HiddenTrace tr;
    tr.h.push_back(Eigen::VectorXd::Zero(m.d));
    for (SymbolId x : input) {
        tr.h.push_back(detail::step_state(m, tr.h.back(), x));
        tr.steps.emplace_back(x, kNoLabel);
    }
    return tr;
}

inline HiddenTrace forward(const ModelParams& m, const std::vector<SymbolId>& input) {
    return forward(m, std::span<const SymbolId>(input));
}

// Distribution over the head vocabulary given the state before the token
// and the token about to be consumed.
inline Eigen::VectorXd predict_step(const ModelParams& m, const Eigen::VectorXd& h,
                                    std::uint32_t next_token) {
    detail::check_token(m, next_token);
    Eigen::VectorXd cat(2 * m.d);
    cat << h, m.input_embed.row(next_token).transpose();
    Eigen::VectorXd z = m.W_y * cat;
    if (m.b_y.size()) z += m.b_y;
    z.array() -= z.maxCoeff();
    Eigen::VectorXd p = z.array().exp();
    return p / p.sum();
}

namespace detail {

struct StepProgram {
    std::uint32_t embed_id;  // token consumed by the recurrence
    std::uint32_t head_id;   // token shown to the prediction head
    std::uint32_t target;    // head target class (unused for binary)
};

struct SeqProgram {
    std::vector<StepProgram> steps;
    int binary_target = -1;  // -1 for per-position objectives
};

struct Grads {
    Eigen::MatrixXd E, W_h, W_x, W_y;
    Eigen::VectorXd b_h, b_y, w_bin;
    double b_bin = 0.0;

    static Grads zeros_like(const ModelParams& m) {
        Grads g;
        g.E = Eigen::MatrixXd::Zero(m.input_embed.rows(), m.input_embed.cols());
        g.W_h = Eigen::MatrixXd::Zero(m.W_h.rows(), m.W_h.cols());
        g.W_x = Eigen::MatrixXd::Zero(m.W_x.rows(), m.W_x.cols());
        g.W_y = Eigen::MatrixXd::Zero(m.W_y.rows(), m.W_y.cols());
        g.b_h = Eigen::VectorXd::Zero(m.b_h.size());
        g.b_y = Eigen::VectorXd::Zero(m.b_y.size());
        g.w_bin = Eigen::VectorXd::Zero(m.w_bin.size());
        g.b_bin = 0.0;
        return g;
    }
    double squared_norm() const {
        return E.squaredNorm() + W_h.squaredNorm() + W_x.squaredNorm() +
               W_y.squaredNorm() + b_h.squaredNorm() + b_y.squaredNorm() +
               w_bin.squaredNorm() + b_bin * b_bin;
    }
    void scale(double s) {
        E *= s;
        W_h *= s;
        W_x *= s;
        W_y *= s;
        b_h *= s;
        b_y *= s;
        w_bin *= s;
        b_bin *= s;
    }
};

struct BackwardResult {
    double value = 0.0;       // full loss including the penalty term
    double data_term = 0.0;   // cross-entropy / BCE part only
    Grads grads;
};

// Loss and exact gradients for one batch, holding the power-iteration
// vectors fixed (the spectral estimate is then |W u|, whose gradient in W
// is v u^T). Dropout masks are drawn from `dropout_rng` when given.
inline BackwardResult loss_and_gradients(const ModelParams& m,
                                         const std::vector<const SeqProgram*>& batch,
                                         const TrainConfig& cfg,
                                         const Eigen::VectorXd& u_h,
                                         const Eigen::VectorXd& u_x,
                                         std::mt19937_64* dropout_rng) {
    BackwardResult res;
    res.grads = Grads::zeros_like(m);
    const int d = m.d;
    const auto V = static_cast<std::uint32_t>(m.W_y.rows());

    long total = 0;
    for (const auto* sp : batch) {
        if (sp->binary_target >= 0)
            ++total;
        else
            total += static_cast<long>(sp->steps.size());
    }
    if (total == 0) throw ConfigError("empty batch");
    const double invN = 1.0 / static_cast<double>(total);

    const double keep = 1.0 - cfg.dropout;
    std::bernoulli_distribution keep_dist(keep);
    auto draw_mask = [&](Eigen::VectorXd& mask) {
        if (cfg.dropout <= 0.0 || !dropout_rng) {
            mask.setOnes(d);
            return;
        }
        mask.resize(d);
        for (int i = 0; i < d; ++i) mask[i] = keep_dist(*dropout_rng) ? 1.0 / keep : 0.0;
    };

    for (const auto* sp : batch) {
        const auto& steps = sp->steps;
        const auto T = steps.size();
        std::vector<Eigen::VectorXd> h(T + 1);
        h[0] = Eigen::VectorXd::Zero(d);
        for (std::size_t t = 0; t < T; ++t)
            h[t + 1] = step_state(m, h[t], steps[t].embed_id);

        std::vector<Eigen::VectorXd> dh(T + 1, Eigen::VectorXd::Zero(d));

        if (sp->binary_target >= 0) {
            Eigen::VectorXd mask;
            draw_mask(mask);
            Eigen::VectorXd hd = h[T].cwiseProduct(mask);
            double logit = m.w_bin.dot(hd) + m.b_bin;
            double p = 1.0 / (1.0 + std::exp(-logit));
            double y = sp->binary_target;
            res.data_term += -(y * std::log(std::max(p, 1e-300)) +
                               (1 - y) * std::log(std::max(1 - p, 1e-300))) *
                             invN;
            double dlogit = (p - y) * invN;
            res.grads.w_bin += dlogit * hd;
            res.grads.b_bin += dlogit;
            dh[T] += (dlogit * m.w_bin).cwiseProduct(mask);
        } else {
            for (std::size_t t = 0; t < T; ++t) {
                Eigen::VectorXd mask;
                draw_mask(mask);
                Eigen::VectorXd hd = h[t].cwiseProduct(mask);
                check_token(m, steps[t].head_id);
                Eigen::VectorXd e = m.input_embed.row(steps[t].head_id).transpose();
                Eigen::VectorXd cat(2 * d);
                cat << hd, e;
                Eigen::VectorXd z = m.W_y * cat;
                if (m.b_y.size()) z += m.b_y;
                z.array() -= z.maxCoeff();
                Eigen::VectorXd p = z.array().exp();
                p /= p.sum();

                const double s = cfg.label_smoothing;
                Eigen::VectorXd q = Eigen::VectorXd::Constant(V, s / V);
                q[steps[t].target] += 1.0 - s;
                res.data_term += -(q.array() * p.array().max(1e-300).log()).sum() * invN;

                Eigen::VectorXd dz = (p - q) * invN;
                res.grads.W_y += dz * cat.transpose();
                if (m.b_y.size()) res.grads.b_y += dz;
                Eigen::VectorXd dcat = m.W_y.transpose() * dz;
                dh[t] += dcat.head(d).cwiseProduct(mask);
                res.grads.E.row(steps[t].head_id) += dcat.tail(d).transpose();
            }
        }

        for (std::size_t t = T; t > 0; --t) {
            Eigen::VectorXd da =
                dh[t].cwiseProduct((1.0 - h[t].array().square()).matrix());
            res.grads.W_h += da * h[t - 1].transpose();
            res.grads.W_x +=
                da * m.input_embed.row(steps[t - 1].embed_id);
            if (m.b_h.size()) res.grads.b_h += da;
            dh[t - 1] += m.W_h.transpose() * da;
            res.grads.E.row(steps[t - 1].embed_id) +=
                (m.W_x.transpose() * da).transpose();
        }
    }

    double penalty = 0.0;
    if (cfg.lambda_sn > 0.0) {
        const double w = cfg.lambda_sn * (cfg.average_sn ? 0.5 : 1.0);
        auto add_penalty = [&](const Eigen::MatrixXd& W, const Eigen::VectorXd& u,
                               Eigen::MatrixXd& gW) {
            Eigen::VectorXd wu = W * u;
            double sigma = wu.norm();
            penalty += w * sigma;
            if (sigma > 0) gW += w * (wu / sigma) * u.transpose();
        };
        add_penalty(m.W_h, u_h, res.grads.W_h);
        add_penalty(m.W_x, u_x, res.grads.W_x);
    }
    res.value = res.data_term + penalty;
    return res;
}

inline std::vector<SeqProgram> transduction_programs(
    const std::vector<MergedSequence>& data, const OutputVocab& vocab) {
    std::vector<SeqProgram> out;
    out.reserve(data.size());
    for (const auto& seq : data) {
        SeqProgram sp;
        for (const auto& s : seq.steps)
            sp.steps.push_back({s.in, s.in, vocab.require(s.out)});
        out.push_back(std::move(sp));
    }
    return out;
}

inline std::vector<SeqProgram> lm_programs(const std::vector<MergedSequence>& data,
                                           const OutputVocab& vocab,
                                           const PairVocab& pairs) {
    std::vector<SeqProgram> out;
    out.reserve(data.size());
    for (const auto& seq : data) {
        SeqProgram sp;
        std::uint32_t prev = pairs.bos();
        for (const auto& s : seq.steps) {
            std::uint32_t tok = pairs.require(s.in, vocab.require(s.out));
            sp.steps.push_back({tok, prev, tok});
            prev = tok;
        }
        out.push_back(std::move(sp));
    }
    return out;
}

// Corrupt one output character; returns nothing when the example has no
// output characters to corrupt.
inline std::optional<MergedSequence> corrupt_output(
    const MergedSequence& seq, const std::vector<SymbolId>& out_alphabet,
    std::mt19937_64& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < seq.steps.size(); ++i)
        for (std::size_t k = 0; k < seq.steps[i].out.size(); ++k) slots.emplace_back(i, k);
    if (slots.empty() || out_alphabet.size() < 2) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
    auto [i, k] = slots[pick(rng)];
    MergedSequence bad = seq;
    SymbolId cur = bad.steps[i].out[k];
    std::uniform_int_distribution<std::size_t> sym(0, out_alphabet.size() - 1);
    SymbolId repl = cur;
    while (repl == cur) repl = out_alphabet[sym(rng)];
    bad.steps[i].out[k] = repl;
    return bad;
}

}  // namespace detail

struct TrainedModel {
    ModelParams params;
    OutputVocab vocab;
    PairVocab pairs;  // empty for the transduction objective
    Objective objective = Objective::transduction;
    std::uint32_t num_input_ids = 0;
};

inline void validate_config(const TrainConfig& cfg) {
    if (cfg.d != 16 && cfg.d != 32 && cfg.d != 64 && cfg.d != 128)
        throw ConfigError("hidden dim must be one of 16/32/64/128");
    if (!(cfg.lr > 0.0) || cfg.lr > 0.1) throw ConfigError("learning rate out of range");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout out of range");
    if (cfg.label_smoothing < 0.0 || cfg.label_smoothing >= 1.0)
        throw ConfigError("label smoothing out of range");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    if (cfg.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (cfg.lambda_sn < 0.0) throw ConfigError("spectral penalty must be nonnegative");
}

// Mean label-smoothed cross-entropy over all positions plus the spectral
// penalty, with the norms computed to convergence.
inline double loss(const ModelParams& m, const std::vector<MergedSequence>& batch,
                   const TrainConfig& cfg, const OutputVocab& vocab) {
    if (batch.empty()) throw ConfigError("loss requires a nonempty batch");
    auto programs = detail::transduction_programs(batch, vocab);
    std::vector<const detail::SeqProgram*> ptrs;
    for (const auto& p : programs) ptrs.push_back(&p);
    TrainConfig plain = cfg;
    plain.dropout = 0.0;
    plain.lambda_sn = 0.0;
    auto res = detail::loss_and_gradients(m, ptrs, plain, Eigen::VectorXd::Zero(m.d),
                                          Eigen::VectorXd::Zero(m.d), nullptr);
    double penalty = spectral_norm(m.W_h, 100) + spectral_norm(m.W_x, 100);
    if (cfg.average_sn) penalty *= 0.5;
    return res.data_term + cfg.lambda_sn * penalty;
}

namespace detail {

struct AdamState {
    Grads m, v;
    long t = 0;
};

inline void adamw_update(ModelParams& p, const Grads& g, AdamState& st,
                         const TrainConfig& cfg) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++st.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    auto upd = [&](auto& theta, auto& m1, auto& m2, const auto& grad) {
        if (theta.size() == 0) return;
        m1 = b1 * m1 + (1 - b1) * grad;
        m2 = (b2 * m2.array() + (1 - b2) * grad.array().square()).matrix();
        auto mhat = m1.array() / c1;
        auto vhat = m2.array() / c2;
        theta =
            (theta.array() - cfg.lr * (mhat / (vhat.sqrt() + eps) + cfg.weight_decay * theta.array()))
                .matrix();
    };
    upd(p.input_embed, st.m.E, st.v.E, g.E);
    upd(p.W_h, st.m.W_h, st.v.W_h, g.W_h);
    upd(p.W_x, st.m.W_x, st.v.W_x, g.W_x);
    upd(p.W_y, st.m.W_y, st.v.W_y, g.W_y);
    upd(p.b_h, st.m.b_h, st.v.b_h, g.b_h);
    upd(p.b_y, st.m.b_y, st.v.b_y, g.b_y);
    upd(p.w_bin, st.m.w_bin, st.v.w_bin, g.w_bin);
    {
        double& th = p.b_bin;
        double& m1 = st.m.b_bin;
        double& m2 = st.v.b_bin;
        m1 = b1 * m1 + (1 - b1) * g.b_bin;
        m2 = b2 * m2 + (1 - b2) * g.b_bin * g.b_bin;
        th -= cfg.lr * ((m1 / c1) / (std::sqrt(m2 / c2) + eps) + cfg.weight_decay * th);
    }
}

inline void fill_uniform(Eigen::MatrixXd& M, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c) M(r, c) = dist(rng);
}

inline ModelParams init_params(int d, Eigen::Index embed_rows, Eigen::Index head_rows,
                               bool binary, bool use_bias, std::mt19937_64& rng) {
    ModelParams m;
    m.d = d;
    m.input_embed.resize(embed_rows, d);
    m.W_h.resize(d, d);
    m.W_x.resize(d, d);
    m.W_y.resize(head_rows, 2 * d);
    fill_uniform(m.input_embed, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    fill_uniform(m.W_h, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    fill_uniform(m.W_x, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    fill_uniform(m.W_y, 1.0 / std::sqrt(2.0 * d), rng);
    m.b_h = use_bias ? Eigen::VectorXd::Zero(d) : Eigen::VectorXd();
    m.b_y = use_bias && head_rows ? Eigen::VectorXd::Zero(head_rows) : Eigen::VectorXd();
    if (binary) {
        Eigen::MatrixXd wb(d, 1);
        fill_uniform(wb, 1.0 / std::sqrt(static_cast<double>(d)), rng);
        m.w_bin = wb.col(0);
    }
    return m;
}

}  // namespace detail

inline TrainedModel train(const std::vector<MergedSequence>& data,
                          const TrainConfig& cfg) {
    validate_config(cfg);
    if (data.empty()) throw ConfigError("train requires nonempty data");

    TrainedModel tm;
    tm.objective = cfg.objective;
    tm.vocab = OutputVocab::build(data);
    for (const auto& seq : data)
        for (const auto& s : seq.steps)
            tm.num_input_ids = std::max(tm.num_input_ids, s.in + 1);

    std::vector<detail::SeqProgram> programs;
    Eigen::Index embed_rows = 0, head_rows = 0;
    bool binary = cfg.objective == Objective::binary_classification;

    if (cfg.objective == Objective::transduction) {
        programs = detail::transduction_programs(data, tm.vocab);
        embed_rows = tm.num_input_ids;
        head_rows = tm.vocab.size();
    } else if (cfg.objective == Objective::language_model) {
        for (const auto& seq : data)
            for (const auto& s : seq.steps) tm.pairs.add(s.in, tm.vocab.require(s.out));
        programs = detail::lm_programs(data, tm.vocab, tm.pairs);
        embed_rows = tm.pairs.size() + 1;  // + begin-of-sequence row
        head_rows = tm.pairs.size();
    } else {
        std::set<SymbolId> out_set;
        for (const auto& seq : data)
            for (const auto& s : seq.steps) out_set.insert(s.out.begin(), s.out.end());
        std::vector<SymbolId> out_alphabet(out_set.begin(), out_set.end());
        auto neg_rng = substream(cfg.seed, "negatives");
        std::vector<MergedSequence> negatives;
        for (const auto& seq : data)
            if (auto bad = detail::corrupt_output(seq, out_alphabet, neg_rng))
                negatives.push_back(std::move(*bad));
        // Corrupted labels may fall outside the positive vocabulary.
        std::vector<MergedSequence> all = data;
        all.insert(all.end(), negatives.begin(), negatives.end());
        tm.vocab = OutputVocab::build(all);
        for (const auto& seq : all)
            for (const auto& s : seq.steps) tm.pairs.add(s.in, tm.vocab.require(s.out));
        for (const auto& seq : data) {
            detail::SeqProgram sp;
            for (const auto& s : seq.steps) {
                std::uint32_t tok = tm.pairs.require(s.in, tm.vocab.require(s.out));
                sp.steps.push_back({tok, tok, 0});
            }
            sp.binary_target = 1;
            programs.push_back(std::move(sp));
        }
        for (const auto& seq : negatives) {
            detail::SeqProgram sp;
            for (const auto& s : seq.steps) {
                std::uint32_t tok = tm.pairs.require(s.in, tm.vocab.require(s.out));
                sp.steps.push_back({tok, tok, 0});
            }
            sp.binary_target = 0;
            programs.push_back(std::move(sp));
        }
        embed_rows = tm.pairs.size() + 1;
        head_rows = 0;
    }

    auto init_rng = substream(cfg.seed, "init");
    tm.params = detail::init_params(cfg.d, embed_rows, head_rows, binary, cfg.use_bias,
                                    init_rng);

    detail::AdamState adam;
    adam.m = detail::Grads::zeros_like(tm.params);
    adam.v = detail::Grads::zeros_like(tm.params);

    PowerIterState st_h(cfg.d, substream(cfg.seed, "specnorm", 0));
    PowerIterState st_x(cfg.d, substream(cfg.seed, "specnorm", 1));
    auto shuffle_rng = substream(cfg.seed, "shuffle");
    auto dropout_rng = substream(cfg.seed, "dropout");

    std::vector<std::size_t> order(programs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const detail::SeqProgram*> batch;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                 ++i)
                batch.push_back(&programs[order[i]]);
            auto res = detail::loss_and_gradients(tm.params, batch, cfg, st_h.u, st_x.u,
                                                  &dropout_rng);

            // Advance the power iteration against the pre-update weights.
            auto advance_u = [](const Eigen::MatrixXd& W, PowerIterState& st) {
                Eigen::VectorXd wu = W * st.u;
                double sigma = wu.norm();
                if (sigma == 0.0) {
                    st.reset(W.cols());
                    return;
                }
                Eigen::VectorXd wtv = W.transpose() * (wu / sigma);
                double n = wtv.norm();
                if (n > 0) st.u = wtv / n;
            };
            advance_u(tm.params.W_h, st_h);
            advance_u(tm.params.W_x, st_x);

            double gnorm = std::sqrt(res.grads.squared_norm());
            if (cfg.grad_clip > 0 && gnorm > cfg.grad_clip)
                res.grads.scale(cfg.grad_clip / gnorm);
            detail::adamw_update(tm.params, res.grads, adam, cfg);
        }
    }
    return tm;
}

inline TrainedModel alt_objectives(const std::vector<MergedSequence>& data,
                                   const TrainConfig& cfg) {
    if (cfg.objective == Objective::transduction)
        throw ConfigError("alt_objectives requires a non-transduction objective");
    return train(data, cfg);
}

// Trace over gold-aligned steps; states are the model's own hidden states
// under the objective's token encoding.
inline HiddenTrace trace_gold(const TrainedModel& tm, const MergedSequence& seq) {
    HiddenTrace tr;
    tr.h.push_back(Eigen::VectorXd::Zero(tm.params.d));
    for (const auto& s : seq.steps) {
        std::uint32_t label = tm.vocab.require(s.out);
        std::uint32_t tok = tm.objective == Objective::transduction
                                ? s.in
                                : tm.pairs.require(s.in, label);
        tr.h.push_back(detail::step_state(tm.params, tr.h.back(), tok));
        tr.steps.emplace_back(s.in, label);
    }
    return tr;
}

// Trace over a raw input string with labels chosen by the model: plain
// argmax for transduction, constrained next-pair argmax for the language
// model, accept-head lookahead for the binary classifier.
inline HiddenTrace trace_decode(const TrainedModel& tm, std::span<const SymbolId> input) {
    HiddenTrace tr;
    tr.h.push_back(Eigen::VectorXd::Zero(tm.params.d));
    if (tm.objective == Objective::transduction) {
        for (SymbolId x : input) {
            Eigen::VectorXd p = predict_step(tm.params, tr.h.back(), x);
            Eigen::Index best = 0;
            for (Eigen::Index i = 1; i < p.size(); ++i)
                if (p[i] > p[best]) best = i;
            tr.h.push_back(detail::step_state(tm.params, tr.h.back(), x));
            tr.steps.emplace_back(x, static_cast<std::uint32_t>(best));
        }
        return tr;
    }
    if (tm.objective == Objective::language_model) {
        std::uint32_t prev = tm.pairs.bos();
        for (SymbolId x : input) {
            Eigen::VectorXd p = predict_step(tm.params, tr.h.back(), prev);
            long best = -1;
            for (std::uint32_t t = 0; t < tm.pairs.size(); ++t) {
                if (tm.pairs.tokens[t].first != x) continue;
                if (best < 0 || p[t] > p[best]) best = t;
            }
            if (best < 0)
                throw UnknownSymbolError("no aligned pair observed for input symbol");
            tr.h.push_back(detail::step_state(tm.params, tr.h.back(),
                                              static_cast<std::uint32_t>(best)));
            tr.steps.emplace_back(x, tm.pairs.tokens[best].second);
            prev = static_cast<std::uint32_t>(best);
        }
        return tr;
    }
    for (SymbolId x : input) {
        long best = -1;
        double best_score = 0.0;
        Eigen::VectorXd best_h;
        for (std::uint32_t t = 0; t < tm.pairs.size(); ++t) {
            if (tm.pairs.tokens[t].first != x) continue;
            Eigen::VectorXd hc = detail::step_state(tm.params, tr.h.back(), t);
            double score = tm.params.w_bin.dot(hc) + tm.params.b_bin;
            if (best < 0 || score > best_score) {
                best = t;
                best_score = score;
                best_h = std::move(hc);
            }
        }
        if (best < 0) throw UnknownSymbolError("no aligned pair observed for input symbol");
        tr.h.push_back(std::move(best_h));
        tr.steps.emplace_back(x, tm.pairs.tokens[best].second);
    }
    return tr;
}

inline HiddenTrace trace_decode(const TrainedModel& tm,
                                const std::vector<SymbolId>& input) {
    return trace_decode(tm, std::span<const SymbolId>(input));
}

// --- checkpoint serialization ---

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
    nlohmann::json j;
    j["rows"] = M.rows();
    j["cols"] = M.cols();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(M.size()));
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c) flat.push_back(M(r, c));
    j["data"] = std::move(flat);
    return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    Eigen::Index rows = j.at("rows"), cols = j.at("cols");
    const auto& flat = j.at("data");
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw ConfigError("checkpoint matrix size mismatch");
    Eigen::MatrixXd M(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = flat[i++];
    return M;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    std::vector<double> flat(v.data(), v.data() + v.size());
    return nlohmann::json(flat);
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i];
    return v;
}

inline nlohmann::json table_to_json(const SymbolTable& t) {
    std::vector<std::string> names;
    for (SymbolId i = 0; i < t.size(); ++i) names.push_back(t.name(i));
    return nlohmann::json(names);
}

inline SymbolTable table_from_json(const nlohmann::json& j) {
    SymbolTable t;
    for (std::size_t i = 1; i < j.size(); ++i) t.intern(j[i].get<std::string>());
    return t;
}

}  // namespace detail

inline nlohmann::json model_to_json(const TrainedModel& tm, const SymbolTable& in_table,
                                    const SymbolTable& out_table) {
    nlohmann::json j;
    j["format"] = "fst-forge-model";
    j["version"] = 1;
    j["objective"] = objective_name(tm.objective);
    j["d"] = tm.params.d;
    j["num_input_ids"] = tm.num_input_ids;
    j["input_symbols"] = detail::table_to_json(in_table);
    j["output_symbols"] = detail::table_to_json(out_table);
    j["output_vocab"] = tm.vocab.labels;
    nlohmann::json pj = nlohmann::json::array();
    for (const auto& [in, label] : tm.pairs.tokens) pj.push_back({in, label});
    j["pair_tokens"] = std::move(pj);
    j["params"] = {{"input_embed", detail::matrix_to_json(tm.params.input_embed)},
                   {"W_h", detail::matrix_to_json(tm.params.W_h)},
                   {"W_x", detail::matrix_to_json(tm.params.W_x)},
                   {"W_y", detail::matrix_to_json(tm.params.W_y)},
                   {"b_h", detail::vector_to_json(tm.params.b_h)},
                   {"b_y", detail::vector_to_json(tm.params.b_y)},
                   {"w_bin", detail::vector_to_json(tm.params.w_bin)},
                   {"b_bin", tm.params.b_bin}};
    return j;
}

struct LoadedModel {
    TrainedModel model;
    SymbolTable in_table;
    SymbolTable out_table;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "fst-forge-model" || j.value("version", 0) != 1)
        throw ConfigError("not a recognized model checkpoint");
    LoadedModel lm;
    lm.model.objective = parse_objective(j.at("objective"));
    lm.model.num_input_ids = j.at("num_input_ids");
    lm.in_table = detail::table_from_json(j.at("input_symbols"));
    lm.out_table = detail::table_from_json(j.at("output_symbols"));
    for (const auto& label : j.at("output_vocab")) {
        std::vector<SymbolId> ids;
        for (const auto& id : label) ids.push_back(id.get<SymbolId>());
        lm.model.vocab.index.emplace(ids, lm.model.vocab.size());
        lm.model.vocab.labels.push_back(std::move(ids));
    }
    for (const auto& tok : j.at("pair_tokens"))
        lm.model.pairs.add(tok[0].get<SymbolId>(), tok[1].get<std::uint32_t>());
    const auto& pj = j.at("params");
    auto& p = lm.model.params;
    p.d = j.at("d");
    p.input_embed = detail::matrix_from_json(pj.at("input_embed"));
    p.W_h = detail::matrix_from_json(pj.at("W_h"));
    p.W_x = detail::matrix_from_json(pj.at("W_x"));
    p.W_y = detail::matrix_from_json(pj.at("W_y"));
    p.b_h = detail::vector_from_json(pj.at("b_h"));
    p.b_y = detail::vector_from_json(pj.at("b_y"));
    p.w_bin = detail::vector_from_json(pj.at("w_bin"));
    p.b_bin = pj.at("b_bin");
    if (p.input_embed.cols() != p.d || p.W_h.rows() != p.d || p.W_h.cols() != p.d ||
        p.W_x.rows() != p.d || p.W_x.cols() != p.d ||
        (p.W_y.size() && p.W_y.cols() != 2 * p.d) ||
        (p.b_h.size() && p.b_h.size() != p.d))
        throw ConfigError("checkpoint shapes are inconsistent");
    return lm;
}

}  // namespace fstforge
