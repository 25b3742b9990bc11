#include "popt/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace popt::train {

void TokenSequence::validate() const {
    require(vocab_size >= 1, ErrorKind::validation, "TokenSequence: vocab_size must be >= 1");
    require(!target_tokens.empty(), ErrorKind::validation,
            "TokenSequence: target must be non-empty");
    for (int t : condition_tokens) {
        require(t >= 0 && t < vocab_size, ErrorKind::validation,
                "TokenSequence: condition token out of vocab: " + std::to_string(t));
    }
    for (int t : target_tokens) {
        require(t >= 0 && t < vocab_size, ErrorKind::validation,
                "TokenSequence: target token out of vocab: " + std::to_string(t));
    }
}

std::vector<int> encode_text(std::string_view text, int vocab_size, std::size_t max_tokens) {
    require(vocab_size >= 1, ErrorKind::validation, "encode_text: vocab_size must be >= 1");
    std::vector<int> tokens;
    tokens.reserve(std::min(text.size(), max_tokens));
    for (unsigned char c : text) {
        if (tokens.size() >= max_tokens) break;
        tokens.push_back(static_cast<int>(c) % vocab_size);
    }
    return tokens;
}

void ModelLayout::validate() const {
    require(vocab_size >= 1 && vocab_size <= 64, ErrorKind::validation,
            "ModelLayout: vocab_size must be in [1,64]");
    require(embed_dim >= 1, ErrorKind::validation, "ModelLayout: embed_dim must be >= 1");
    require(context_window >= 1, ErrorKind::validation,
            "ModelLayout: context_window must be >= 1");
    require(hidden_dim >= 1, ErrorKind::validation, "ModelLayout: hidden_dim must be >= 1");
}

std::size_t ModelLayout::w1_offset() const {
    return static_cast<std::size_t>(vocab_size + 1) * static_cast<std::size_t>(embed_dim);
}

std::size_t ModelLayout::b1_offset() const {
    return w1_offset() + static_cast<std::size_t>(hidden_dim) *
                             static_cast<std::size_t>(context_window) *
                             static_cast<std::size_t>(embed_dim);
}

std::size_t ModelLayout::w2_offset() const {
    return b1_offset() + static_cast<std::size_t>(hidden_dim);
}

std::size_t ModelLayout::b2_offset() const {
    return w2_offset() +
           static_cast<std::size_t>(vocab_size) * static_cast<std::size_t>(hidden_dim);
}

std::size_t ModelLayout::param_count() const {
    return b2_offset() + static_cast<std::size_t>(vocab_size);
}

bool ModelParams::all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

ModelParams ModelParams::init(const ModelLayout& layout, ModelRole role, std::uint64_t seed,
                              double init_std) {
    layout.validate();
    ModelParams p;
    p.layout = layout;
    p.role = role;
    p.values.resize(layout.param_count());
    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> dist(0.0, init_std);
    for (double& v : p.values) v = dist(rng);
    return p;
}

ModelParams ModelParams::zeros(const ModelLayout& layout, ModelRole role) {
    layout.validate();
    ModelParams p;
    p.layout = layout;
    p.role = role;
    p.values.assign(layout.param_count(), 0.0);
    return p;
}

// ---------------------------------------------------------------------------

namespace {

struct Workspace {
    std::vector<int> context;      // window token ids (oldest first)
    std::vector<double> hidden;    // tanh activations
    std::vector<double> logits;
    std::vector<double> probs;
};

// Fills ws.context for target position i: the last W tokens of
// condition ++ target[0..i), padded with the pad row before the start.
void gather_context(const ModelLayout& layout, const TokenSequence& seq, std::size_t i,
                    std::vector<int>& context) {
    const int w = layout.context_window;
    context.resize(static_cast<std::size_t>(w));
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(seq.condition_tokens.size());
    const std::ptrdiff_t end = m + static_cast<std::ptrdiff_t>(i);  // tokens before position i
    for (int k = 0; k < w; ++k) {
        std::ptrdiff_t pos = end - w + k;
        int token;
        if (pos < 0) {
            token = layout.pad_row();
        } else if (pos < m) {
            token = seq.condition_tokens[static_cast<std::size_t>(pos)];
        } else {
            token = seq.target_tokens[static_cast<std::size_t>(pos - m)];
        }
        context[static_cast<std::size_t>(k)] = token;
    }
}

// Computes hidden, logits, probs for one position; returns log P(target_i).
double forward_position(const ModelParams& model, const TokenSequence& seq, std::size_t i,
                        Workspace& ws) {
    const ModelLayout& L = model.layout;
    const int V = L.vocab_size;
    const int E = L.embed_dim;
    const int W = L.context_window;
    const int H = L.hidden_dim;
    const double* p = model.values.data();

    gather_context(L, seq, i, ws.context);

    ws.hidden.assign(static_cast<std::size_t>(H), 0.0);
    const double* w1 = p + L.w1_offset();
    const double* b1 = p + L.b1_offset();
    for (int h = 0; h < H; ++h) {
        double acc = b1[h];
        const double* row = w1 + static_cast<std::size_t>(h) * static_cast<std::size_t>(W * E);
        for (int k = 0; k < W; ++k) {
            const double* emb =
                p + L.embed_offset() +
                static_cast<std::size_t>(ws.context[static_cast<std::size_t>(k)]) *
                    static_cast<std::size_t>(E);
            const double* wseg = row + static_cast<std::size_t>(k * E);
            for (int e = 0; e < E; ++e) acc += wseg[e] * emb[e];
        }
        ws.hidden[static_cast<std::size_t>(h)] = std::tanh(acc);
    }

    ws.logits.assign(static_cast<std::size_t>(V), 0.0);
    const double* w2 = p + L.w2_offset();
    const double* b2 = p + L.b2_offset();
    for (int v = 0; v < V; ++v) {
        double acc = b2[v];
        const double* row = w2 + static_cast<std::size_t>(v) * static_cast<std::size_t>(H);
        for (int h = 0; h < H; ++h) acc += row[h] * ws.hidden[static_cast<std::size_t>(h)];
        ws.logits[static_cast<std::size_t>(v)] = acc;
    }

    double max_logit = ws.logits[0];
    for (double z : ws.logits) max_logit = std::max(max_logit, z);
    double sum_exp = 0.0;
    ws.probs.resize(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) {
        double e = std::exp(ws.logits[static_cast<std::size_t>(v)] - max_logit);
        ws.probs[static_cast<std::size_t>(v)] = e;
        sum_exp += e;
    }
    for (double& q : ws.probs) q /= sum_exp;

    int target = seq.target_tokens[i];
    return ws.logits[static_cast<std::size_t>(target)] - max_logit - std::log(sum_exp);
}

}  // namespace

double log_prob(const ModelParams& model, const TokenSequence& seq) {
    seq.validate();
    require(seq.vocab_size == model.layout.vocab_size, ErrorKind::validation,
            "log_prob: sequence vocab does not match model vocab");
    Workspace ws;
    double total = 0.0;
    for (std::size_t i = 0; i < seq.target_tokens.size(); ++i) {
        total += forward_position(model, seq, i, ws);
    }
    require(std::isfinite(total), ErrorKind::validation, "log_prob: non-finite result");
    return total;
}

void accumulate_log_prob_grad(const ModelParams& model, const TokenSequence& seq, double coeff,
                              std::vector<double>& grad) {
    seq.validate();
    require(grad.size() == model.param_count(), ErrorKind::validation,
            "accumulate_log_prob_grad: gradient size mismatch");

    const ModelLayout& L = model.layout;
    const int V = L.vocab_size;
    const int E = L.embed_dim;
    const int W = L.context_window;
    const int H = L.hidden_dim;
    const double* p = model.values.data();
    double* g = grad.data();

    Workspace ws;
    std::vector<double> dlogits(static_cast<std::size_t>(V));
    std::vector<double> dhidden(static_cast<std::size_t>(H));

    for (std::size_t i = 0; i < seq.target_tokens.size(); ++i) {
        forward_position(model, seq, i, ws);
        int target = seq.target_tokens[i];

        // d log P(target) / d logits = onehot(target) - probs
        for (int v = 0; v < V; ++v) {
            dlogits[static_cast<std::size_t>(v)] =
                coeff * ((v == target ? 1.0 : 0.0) - ws.probs[static_cast<std::size_t>(v)]);
        }

        const double* w2 = p + L.w2_offset();
        double* g_w2 = g + L.w2_offset();
        double* g_b2 = g + L.b2_offset();
        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        for (int v = 0; v < V; ++v) {
            double dv = dlogits[static_cast<std::size_t>(v)];
            if (dv == 0.0) continue;
            const double* row = w2 + static_cast<std::size_t>(v) * static_cast<std::size_t>(H);
            double* grow = g_w2 + static_cast<std::size_t>(v) * static_cast<std::size_t>(H);
            for (int h = 0; h < H; ++h) {
                grow[h] += dv * ws.hidden[static_cast<std::size_t>(h)];
                dhidden[static_cast<std::size_t>(h)] += dv * row[h];
            }
            g_b2[v] += dv;
        }

        const double* w1 = p + L.w1_offset();
        double* g_w1 = g + L.w1_offset();
        double* g_b1 = g + L.b1_offset();
        for (int h = 0; h < H; ++h) {
            double hv = ws.hidden[static_cast<std::size_t>(h)];
            double da = dhidden[static_cast<std::size_t>(h)] * (1.0 - hv * hv);
            if (da == 0.0) continue;
            const double* row = w1 + static_cast<std::size_t>(h) * static_cast<std::size_t>(W * E);
            double* grow = g_w1 + static_cast<std::size_t>(h) * static_cast<std::size_t>(W * E);
            for (int k = 0; k < W; ++k) {
                std::size_t emb_row =
                    L.embed_offset() +
                    static_cast<std::size_t>(ws.context[static_cast<std::size_t>(k)]) *
                        static_cast<std::size_t>(E);
                const double* emb = p + emb_row;
                double* g_emb = g + emb_row;
                const double* wseg = row + static_cast<std::size_t>(k * E);
                double* gseg = grow + static_cast<std::size_t>(k * E);
                for (int e = 0; e < E; ++e) {
                    gseg[e] += da * emb[e];
                    g_emb[e] += da * wseg[e];
                }
            }
            g_b1[h] += da;
        }
    }
}

}  // namespace popt::train
