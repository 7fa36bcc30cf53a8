#include "aces/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "aces/errors.hpp"
#include "aces/metrics.hpp"
#include "aces/parallel.hpp"
#include "aces/rng.hpp"
#include "aces/version.hpp"

namespace aces::model {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kFeatShift = 3.0;
constexpr double kFeatScale = 0.25;

double logsumexp2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Gabor-style projection bases (Hann window folded in), cached per geometry.
struct FrontendBasis {
    Eigen::MatrixXd cosb;  // n_filters x frame_size
    Eigen::MatrixXd sinb;
};

std::shared_ptr<const FrontendBasis> frontend_basis(const ModelConfig& cfg) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const FrontendBasis>> cache;
    std::ostringstream key;
    key << cfg.frame_size << '/' << cfg.n_filters << '/' << cfg.filter_min_hz << '/'
        << cfg.filter_max_hz << '/' << cfg.sample_rate;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key.str());
    if (it != cache.end()) return it->second;

    auto basis = std::make_shared<FrontendBasis>();
    basis->cosb.resize(cfg.n_filters, cfg.frame_size);
    basis->sinb.resize(cfg.n_filters, cfg.frame_size);
    const double log_lo = std::log(cfg.filter_min_hz);
    const double log_hi = std::log(cfg.filter_max_hz);
    for (int f = 0; f < cfg.n_filters; ++f) {
        const double frac = cfg.n_filters == 1
                                ? 0.0
                                : static_cast<double>(f) / static_cast<double>(cfg.n_filters - 1);
        const double hz = std::exp(log_lo + frac * (log_hi - log_lo));
        const double omega = 2.0 * M_PI * hz / static_cast<double>(cfg.sample_rate);
        for (int n = 0; n < cfg.frame_size; ++n) {
            const double w =
                0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) /
                                      static_cast<double>(cfg.frame_size - 1)));
            basis->cosb(f, n) = w * std::cos(omega * static_cast<double>(n));
            basis->sinb(f, n) = w * std::sin(omega * static_cast<double>(n));
        }
    }
    cache[key.str()] = basis;
    return basis;
}

struct Cache {
    Eigen::MatrixXd frames;   // frame_size x T
    Eigen::MatrixXd c, s;     // n_filters x T
    Eigen::MatrixXd inv_p;    // 1 / (c^2 + s^2 + eps)
    Eigen::MatrixXd feat;     // n_filters x T (scaled log power)
    std::vector<Eigen::MatrixXd> z;  // pre-conv affine outputs
    std::vector<Eigen::MatrixXd> h;  // post-activation states
    Eigen::MatrixXd logits;
};

// depthwise temporal conv: out(:,t) = sum_j taps(:,j+r) .* in(:,t+j), zero pad
void depthwise_conv(const Eigen::MatrixXd& in, const Eigen::MatrixXd& taps, int radius,
                    Eigen::MatrixXd& out) {
    const int t_total = static_cast<int>(in.cols());
    out.setZero(in.rows(), t_total);
    for (int j = -radius; j <= radius; ++j) {
        const int t0 = std::max(0, -j);
        const int t1 = t_total - 1 - std::max(0, j);
        if (t1 < t0) continue;
        const int len = t1 - t0 + 1;
        out.middleCols(t0, len).array() +=
            in.middleCols(t0 + j, len).array().colwise() * taps.col(j + radius).array();
    }
}

// gradient of depthwise conv w.r.t. its input (conv with flipped taps)
void depthwise_conv_grad_input(const Eigen::MatrixXd& dout, const Eigen::MatrixXd& taps,
                               int radius, Eigen::MatrixXd& din) {
    const int t_total = static_cast<int>(dout.cols());
    din.setZero(dout.rows(), t_total);
    for (int j = -radius; j <= radius; ++j) {
        const int t0 = std::max(0, -j);
        const int t1 = t_total - 1 - std::max(0, j);
        if (t1 < t0) continue;
        const int len = t1 - t0 + 1;
        din.middleCols(t0 + j, len).array() +=
            dout.middleCols(t0, len).array().colwise() * taps.col(j + radius).array();
    }
}

void depthwise_conv_grad_taps(const Eigen::MatrixXd& dout, const Eigen::MatrixXd& in, int radius,
                              Eigen::MatrixXd& dtaps) {
    const int t_total = static_cast<int>(dout.cols());
    dtaps.setZero(in.rows(), 2 * radius + 1);
    for (int j = -radius; j <= radius; ++j) {
        const int t0 = std::max(0, -j);
        const int t1 = t_total - 1 - std::max(0, j);
        if (t1 < t0) continue;
        const int len = t1 - t0 + 1;
        dtaps.col(j + radius) =
            (dout.middleCols(t0, len).array() * in.middleCols(t0 + j, len).array())
                .rowwise()
                .sum();
    }
}

Cache run_forward(const std::vector<double>& waveform, const Params& params,
                  const ModelConfig& cfg, const HookSpec* hook) {
    if (static_cast<int>(waveform.size()) < cfg.frame_size) {
        throw ConfigError("forward: waveform shorter than one frame (" +
                          std::to_string(waveform.size()) + " < " +
                          std::to_string(cfg.frame_size) + ")");
    }
    if (hook && (hook->layer < 1 || hook->layer > cfg.n_layers)) {
        throw ConfigError("forward: hook layer out of range");
    }
    const int t_total = frame_count(waveform.size(), cfg);
    auto basis = frontend_basis(cfg);

    Cache cc;
    cc.frames.resize(cfg.frame_size, t_total);
    for (int t = 0; t < t_total; ++t) {
        cc.frames.col(t) = Eigen::Map<const Eigen::VectorXd>(
            waveform.data() + static_cast<std::size_t>(t) * cfg.hop, cfg.frame_size);
    }
    cc.c.noalias() = basis->cosb * cc.frames;
    cc.s.noalias() = basis->sinb * cc.frames;
    Eigen::MatrixXd power = cc.c.array().square() + cc.s.array().square() + cfg.eps_log;
    cc.inv_p = power.array().inverse();
    cc.feat = (power.array().log() + kFeatShift) * kFeatScale;

    cc.z.resize(static_cast<std::size_t>(cfg.n_layers));
    cc.h.resize(static_cast<std::size_t>(cfg.n_layers));
    const Eigen::MatrixXd* below = &cc.feat;
    Eigen::MatrixXd mixed;
    for (int l = 0; l < cfg.n_layers; ++l) {
        cc.z[l].noalias() = params.w[l] * (*below);
        cc.z[l].colwise() += params.b[l];
        depthwise_conv(cc.z[l], params.conv[l], cfg.conv_radius, mixed);
        cc.h[l] = mixed.array().tanh();
        if (hook && hook->layer == l + 1 && hook->u.cols() > 0 && hook->alpha != 0.0) {
            if (hook->pooled_shift) {
                Eigen::VectorXd pooled = cc.h[l].rowwise().mean();
                Eigen::VectorXd shift =
                    hook->alpha * (hook->u * (hook->u.transpose() * pooled));
                cc.h[l].colwise() -= shift;
            } else {
                // h <- h - alpha * U (U^T h)
                cc.h[l].noalias() -= hook->alpha * (hook->u * (hook->u.transpose() * cc.h[l]));
            }
        }
        below = &cc.h[l];
    }
    cc.logits.noalias() = params.w_head * (*below);
    cc.logits.colwise() += params.b_head;
    return cc;
}

struct BackwardOut {
    Params grads;             // valid when want_params
    Eigen::VectorXd dwave;    // valid when want_input
};

// Reverse pass from dlogits (plus an optional extra gradient injected at one
// layer's post-activation states). Forward hooks are not supported here;
// attacks are crafted against the un-hooked model and training never hooks.
BackwardOut run_backward(const Cache& cc, const std::vector<double>& waveform,
                         const Params& params, const ModelConfig& cfg,
                         const Eigen::MatrixXd& dlogits, int inject_layer,
                         const Eigen::MatrixXd* dh_inject, bool want_params, bool want_input) {
    BackwardOut out;
    if (want_params) out.grads = Params::zeros_like(params);

    Eigen::MatrixXd dh = params.w_head.transpose() * dlogits;
    if (want_params) {
        out.grads.w_head.noalias() = dlogits * cc.h.back().transpose();
        out.grads.b_head = dlogits.rowwise().sum();
    }

    Eigen::MatrixXd da, dz, dbelow;
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        if (inject_layer == l + 1 && dh_inject) dh += *dh_inject;
        da = dh.array() * (1.0 - cc.h[l].array().square());
        depthwise_conv_grad_input(da, params.conv[l], cfg.conv_radius, dz);
        const Eigen::MatrixXd& below = (l == 0) ? cc.feat : cc.h[l - 1];
        if (want_params) {
            depthwise_conv_grad_taps(da, cc.z[l], cfg.conv_radius, out.grads.conv[l]);
            out.grads.w[l].noalias() = dz * below.transpose();
            out.grads.b[l] = dz.rowwise().sum();
        }
        dh.noalias() = params.w[l].transpose() * dz;
    }

    if (want_input) {
        // dh now holds dL/dfeat
        Eigen::MatrixXd dp = dh.array() * kFeatScale * cc.inv_p.array();
        Eigen::MatrixXd dc = 2.0 * cc.c.array() * dp.array();
        Eigen::MatrixXd ds = 2.0 * cc.s.array() * dp.array();
        auto basis = frontend_basis(cfg);
        Eigen::MatrixXd dframes = basis->cosb.transpose() * dc + basis->sinb.transpose() * ds;
        out.dwave = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(waveform.size()));
        const int t_total = static_cast<int>(dframes.cols());
        for (int t = 0; t < t_total; ++t) {
            out.dwave.segment(static_cast<Eigen::Index>(t) * cfg.hop, cfg.frame_size) +=
                dframes.col(t);
        }
    }
    return out;
}

Eigen::MatrixXd log_softmax_cols(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd lp = logits;
    for (Eigen::Index t = 0; t < lp.cols(); ++t) {
        const double m = lp.col(t).maxCoeff();
        const double lse = m + std::log((lp.col(t).array() - m).exp().sum());
        lp.col(t).array() -= lse;
    }
    return lp;
}

std::vector<int> extend_with_blanks(const std::vector<int>& target, int blank) {
    std::vector<int> ext;
    ext.reserve(2 * target.size() + 1);
    ext.push_back(blank);
    for (int tok : target) {
        ext.push_back(tok);
        ext.push_back(blank);
    }
    return ext;
}

void check_ctc_inputs(const Eigen::MatrixXd& logits, const std::vector<int>& target) {
    const int v_dim = static_cast<int>(logits.rows());
    for (int tok : target) {
        if (tok < 0 || tok >= v_dim - 1) {
            throw ConfigError("ctc: target token out of vocabulary: " + std::to_string(tok));
        }
    }
    const int t_total = static_cast<int>(logits.cols());
    if (t_total < ctc_min_frames(target)) {
        throw NumericalError("ctc: target infeasible, needs " +
                             std::to_string(ctc_min_frames(target)) + " frames but logits have " +
                             std::to_string(t_total));
    }
}

}  // namespace

void validate(const ModelConfig& cfg) {
    if (cfg.n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (cfg.hidden_dim < 2) throw ConfigError("model: hidden_dim must be >= 2");
    if (cfg.hop <= 0 || cfg.frame_size < cfg.hop) {
        throw ConfigError("model: require frame_size >= hop > 0");
    }
    if (cfg.n_filters < 1) throw ConfigError("model: n_filters must be >= 1");
    if (cfg.vocab < 2) throw ConfigError("model: vocab must be >= 2");
    if (cfg.conv_radius < 0) throw ConfigError("model: conv_radius must be >= 0");
    if (cfg.eps_log <= 0) throw ConfigError("model: eps_log must be > 0");
    if (cfg.filter_max_hz <= cfg.filter_min_hz || cfg.filter_min_hz <= 0) {
        throw ConfigError("model: bad filter band");
    }
    if (cfg.filter_max_hz >= 0.5 * cfg.sample_rate) {
        throw ConfigError("model: filter_max_hz above Nyquist");
    }
}

int logit_dim(const ModelConfig& cfg) { return cfg.vocab + 1; }
int blank_id(const ModelConfig& cfg) { return cfg.vocab; }

int frame_count(std::size_t samples, const ModelConfig& cfg) {
    if (static_cast<int>(samples) < cfg.frame_size) return 0;
    return static_cast<int>((samples - static_cast<std::size_t>(cfg.frame_size)) /
                            static_cast<std::size_t>(cfg.hop)) +
           1;
}

double Params::squared_norm() const {
    double sum = 0.0;
    for (const auto& m : w) sum += m.squaredNorm();
    for (const auto& v : b) sum += v.squaredNorm();
    for (const auto& m : conv) sum += m.squaredNorm();
    sum += w_head.squaredNorm() + b_head.squaredNorm();
    return sum;
}

void Params::axpy(double a, const Params& other) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += a * other.w[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += a * other.b[i];
    for (std::size_t i = 0; i < conv.size(); ++i) conv[i] += a * other.conv[i];
    w_head += a * other.w_head;
    b_head += a * other.b_head;
}

void Params::scale(double a) {
    for (auto& m : w) m *= a;
    for (auto& v : b) v *= a;
    for (auto& m : conv) m *= a;
    w_head *= a;
    b_head *= a;
}

Params Params::zeros_like(const Params& p) {
    Params z;
    z.w.reserve(p.w.size());
    z.b.reserve(p.b.size());
    z.conv.reserve(p.conv.size());
    for (const auto& m : p.w) z.w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& v : p.b) z.b.push_back(Eigen::VectorXd::Zero(v.size()));
    for (const auto& m : p.conv) z.conv.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    z.w_head = Eigen::MatrixXd::Zero(p.w_head.rows(), p.w_head.cols());
    z.b_head = Eigen::VectorXd::Zero(p.b_head.size());
    return z;
}

Params init_params(const ModelConfig& cfg) {
    validate(cfg);
    Rng rng(hash_combine(cfg.seed, hash_string("model-init")));
    auto gaussian_matrix = [&](int rows, int cols, double scale) {
        Eigen::MatrixXd m(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.gaussian();
        }
        return m;
    };
    Params p;
    const int d = cfg.hidden_dim;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const int fan_in = (l == 0) ? cfg.n_filters : d;
        p.w.push_back(gaussian_matrix(d, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
        p.b.push_back(Eigen::VectorXd::Zero(d));
        // smoothing taps around identity, slightly perturbed per channel
        Eigen::MatrixXd taps(d, 2 * cfg.conv_radius + 1);
        for (int r = 0; r < d; ++r) {
            for (int j = -cfg.conv_radius; j <= cfg.conv_radius; ++j) {
                double base = j == 0 ? 0.6 : (std::abs(j) == 1 ? 0.15 : 0.05);
                taps(r, j + cfg.conv_radius) = base + 0.01 * rng.gaussian();
            }
        }
        p.conv.push_back(std::move(taps));
    }
    p.w_head = gaussian_matrix(logit_dim(cfg), d, 1.0 / std::sqrt(static_cast<double>(d)));
    p.b_head = Eigen::VectorXd::Zero(logit_dim(cfg));
    return p;
}

HiddenStates forward(const std::vector<double>& waveform, const Params& params,
                     const ModelConfig& cfg, const HookSpec* hook) {
    Cache cc = run_forward(waveform, params, cfg, hook);
    HiddenStates hs;
    hs.layers = std::move(cc.h);
    hs.logits = std::move(cc.logits);
    return hs;
}

Eigen::VectorXd pooled_embedding(const HiddenStates& states, int layer) {
    if (layer < 1 || layer > static_cast<int>(states.layers.size())) {
        throw ConfigError("pooled_embedding: layer out of range");
    }
    return states.layers[layer - 1].rowwise().mean();
}

Eigen::VectorXd pooled_embedding(const std::vector<double>& waveform, const Params& params,
                                 const ModelConfig& cfg, int layer) {
    return pooled_embedding(forward(waveform, params, cfg), layer);
}

int ctc_min_frames(const std::vector<int>& target) {
    int repeats = 0;
    for (std::size_t i = 1; i < target.size(); ++i) {
        if (target[i] == target[i - 1]) ++repeats;
    }
    return static_cast<int>(target.size()) + repeats;
}

double ctc_loss(const Eigen::MatrixXd& logits, const std::vector<int>& target) {
    check_ctc_inputs(logits, target);
    const int t_total = static_cast<int>(logits.cols());
    const int blank = static_cast<int>(logits.rows()) - 1;
    const Eigen::MatrixXd lp = log_softmax_cols(logits);
    const std::vector<int> ext = extend_with_blanks(target, blank);
    const int s_total = static_cast<int>(ext.size());

    std::vector<double> alpha(static_cast<std::size_t>(s_total), kNegInf);
    std::vector<double> prev(alpha);
    alpha[0] = lp(ext[0], 0);
    if (s_total > 1) alpha[1] = lp(ext[1], 0);
    for (int t = 1; t < t_total; ++t) {
        std::swap(prev, alpha);
        for (int s = 0; s < s_total; ++s) {
            double acc = prev[s];
            if (s >= 1) acc = logsumexp2(acc, prev[s - 1]);
            if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) {
                acc = logsumexp2(acc, prev[s - 2]);
            }
            alpha[s] = acc == kNegInf ? kNegInf : acc + lp(ext[s], t);
        }
    }
    const double logp =
        s_total > 1 ? logsumexp2(alpha[s_total - 1], alpha[s_total - 2]) : alpha[0];
    if (logp == kNegInf || !std::isfinite(logp)) {
        throw NumericalError("ctc: zero-probability target");
    }
    return -logp;
}

CtcGrad ctc_loss_grad(const Eigen::MatrixXd& logits, const std::vector<int>& target) {
    check_ctc_inputs(logits, target);
    const int t_total = static_cast<int>(logits.cols());
    const int v_dim = static_cast<int>(logits.rows());
    const int blank = v_dim - 1;
    const Eigen::MatrixXd lp = log_softmax_cols(logits);
    const std::vector<int> ext = extend_with_blanks(target, blank);
    const int s_total = static_cast<int>(ext.size());

    Eigen::MatrixXd alpha(s_total, t_total);
    alpha.setConstant(kNegInf);
    alpha(0, 0) = lp(ext[0], 0);
    if (s_total > 1) alpha(1, 0) = lp(ext[1], 0);
    for (int t = 1; t < t_total; ++t) {
        for (int s = 0; s < s_total; ++s) {
            double acc = alpha(s, t - 1);
            if (s >= 1) acc = logsumexp2(acc, alpha(s - 1, t - 1));
            if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) {
                acc = logsumexp2(acc, alpha(s - 2, t - 1));
            }
            alpha(s, t) = acc == kNegInf ? kNegInf : acc + lp(ext[s], t);
        }
    }
    const double logp = s_total > 1
                            ? logsumexp2(alpha(s_total - 1, t_total - 1),
                                         alpha(s_total - 2, t_total - 1))
                            : alpha(0, t_total - 1);
    if (logp == kNegInf || !std::isfinite(logp)) {
        throw NumericalError("ctc: zero-probability target");
    }

    // beta excludes the emission at t, so gamma = alpha + beta - logp
    Eigen::MatrixXd beta(s_total, t_total);
    beta.setConstant(kNegInf);
    beta(s_total - 1, t_total - 1) = 0.0;
    if (s_total > 1) beta(s_total - 2, t_total - 1) = 0.0;
    for (int t = t_total - 2; t >= 0; --t) {
        for (int s = 0; s < s_total; ++s) {
            double acc = lp(ext[s], t + 1) + beta(s, t + 1);
            if (s + 1 < s_total) {
                acc = logsumexp2(acc, lp(ext[s + 1], t + 1) + beta(s + 1, t + 1));
            }
            if (s + 2 < s_total && ext[s + 2] != blank && ext[s + 2] != ext[s]) {
                acc = logsumexp2(acc, lp(ext[s + 2], t + 1) + beta(s + 2, t + 1));
            }
            beta(s, t) = acc;
        }
    }

    CtcGrad out;
    out.loss = -logp;
    out.dlogits = lp.array().exp();  // softmax probabilities
    for (int t = 0; t < t_total; ++t) {
        for (int s = 0; s < s_total; ++s) {
            const double g = alpha(s, t) + beta(s, t) - logp;
            if (g > -700.0) out.dlogits(ext[s], t) -= std::exp(g);
        }
    }
    return out;
}

std::vector<int> ctc_greedy_decode(const Eigen::MatrixXd& logits) {
    const int t_total = static_cast<int>(logits.cols());
    const int v_dim = static_cast<int>(logits.rows());
    const int blank = v_dim - 1;
    std::vector<int> decoded;
    int prev = -1;
    for (int t = 0; t < t_total; ++t) {
        int best = 0;
        double best_val = logits(0, t);
        for (int v = 1; v < v_dim; ++v) {
            if (logits(v, t) > best_val) {
                best_val = logits(v, t);
                best = v;
            }
        }
        if (best != blank && best != prev) decoded.push_back(best);
        prev = best;
    }
    return decoded;
}

std::vector<int> transcribe(const std::vector<double>& waveform, const Params& params,
                            const ModelConfig& cfg, const HookSpec* hook) {
    return ctc_greedy_decode(forward(waveform, params, cfg, hook).logits);
}

InputGrad objective_grad_wrt_input(const std::vector<double>& waveform,
                                   const std::vector<int>& target, const Params& params,
                                   const ModelConfig& cfg, const ObjectiveSpec& spec) {
    Cache cc = run_forward(waveform, params, cfg, nullptr);
    CtcGrad ctc = ctc_loss_grad(cc.logits, target);

    InputGrad out;
    out.ctc = ctc.loss;

    Eigen::MatrixXd dh_inject;
    const bool couple = spec.beta != 0.0 && spec.u != nullptr && spec.u->cols() > 0;
    if (couple) {
        if (spec.layer < 1 || spec.layer > cfg.n_layers) {
            throw ConfigError("objective: coupling layer out of range");
        }
        const Eigen::MatrixXd& h = cc.h[spec.layer - 1];
        const double t_inv = 1.0 / static_cast<double>(h.cols());
        if (spec.per_frame) {
            if (spec.clean_frames.rows() != h.rows() || spec.clean_frames.cols() != h.cols()) {
                throw ConfigError("objective: clean_frames shape mismatch");
            }
            Eigen::MatrixXd diff = h - spec.clean_frames;
            Eigen::MatrixXd proj = *spec.u * (spec.u->transpose() * diff);
            out.coupling = proj.squaredNorm() * t_inv;
            dh_inject = (2.0 * spec.beta * t_inv) * proj;
        } else {
            if (spec.clean_pooled.size() != h.rows()) {
                throw ConfigError("objective: clean_pooled size mismatch");
            }
            Eigen::VectorXd diff = h.rowwise().mean() - spec.clean_pooled;
            Eigen::VectorXd proj = *spec.u * (spec.u->transpose() * diff);
            out.coupling = proj.squaredNorm();
            // d/dh_t of ||P (mean_t h_t - e0)||^2 = (2/T) P diff, equal per frame
            Eigen::VectorXd per_frame = (2.0 * spec.beta * t_inv) * proj;
            dh_inject = per_frame.replicate(1, h.cols());
        }
    }
    out.objective = out.ctc + spec.beta * out.coupling;

    BackwardOut bw = run_backward(cc, waveform, params, cfg, ctc.dlogits,
                                  couple ? spec.layer : 0, couple ? &dh_inject : nullptr,
                                  /*want_params=*/false, /*want_input=*/true);
    out.grad = std::move(bw.dwave);
    return out;
}

namespace {

struct UttGrad {
    double loss = 0.0;
    Params grads;
};

UttGrad utterance_grad(const corpus::Utterance& u, const Params& params,
                       const ModelConfig& cfg) {
    Cache cc = run_forward(u.waveform, params, cfg, nullptr);
    CtcGrad ctc = ctc_loss_grad(cc.logits, u.text);
    const double inv_len = 1.0 / static_cast<double>(u.text.size());
    ctc.dlogits *= inv_len;
    BackwardOut bw = run_backward(cc, u.waveform, params, cfg, ctc.dlogits, 0, nullptr,
                                  /*want_params=*/true, /*want_input=*/false);
    UttGrad out;
    out.loss = ctc.loss * inv_len;
    out.grads = std::move(bw.grads);
    return out;
}

}  // namespace

TrainResult train(const std::vector<corpus::Utterance>& data, const ModelConfig& cfg,
                  const TrainOptions& opts) {
    validate(cfg);
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].split == "train") train_idx.push_back(i);
        else if (data[i].split == "validation") val_idx.push_back(i);
    }
    if (train_idx.empty()) throw ConfigError("train: empty train split");
    if (val_idx.empty()) throw ConfigError("train: empty validation split");
    for (std::size_t i : train_idx) {
        for (int tok : data[i].text) {
            if (tok < 0 || tok >= cfg.vocab) {
                throw ConfigError("train: token out of vocabulary in " + data[i].id);
            }
        }
    }

    TrainResult result;
    result.params = init_params(cfg);
    Params velocity = Params::zeros_like(result.params);
    double lr = opts.lr;

    auto validate_epoch = [&](int epoch, double train_loss) {
        std::vector<double> wers(val_idx.size());
        std::vector<std::string> accents(val_idx.size());
        parallel_for(val_idx.size(), opts.jobs, [&](std::size_t k) {
            const corpus::Utterance& u = data[val_idx[k]];
            std::vector<int> hyp = transcribe(u.waveform, result.params, cfg);
            wers[k] = metrics::wer(hyp, u.text);
            accents[k] = u.accent;
        });
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss;
        stats.val_accent_wer = metrics::per_accent_mean(wers, accents);
        double sum = 0.0;
        for (const auto& [a, wv] : stats.val_accent_wer) sum += wv;
        stats.val_mean_wer = sum / static_cast<double>(stats.val_accent_wer.size());
        return stats;
    };

    bool converged = false;
    for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
        Rng shuffle_rng(hash_combine(hash_combine(opts.seed, hash_string("epoch-shuffle")),
                                     static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = train_idx;
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size),
                                      order.size() - start);
            std::vector<UttGrad> slots(count);
            parallel_for(count, opts.jobs, [&](std::size_t k) {
                slots[k] = utterance_grad(data[order[start + k]], result.params, cfg);
            });
            // fixed reduction order keeps training bit-identical across jobs
            Params batch_grad = Params::zeros_like(result.params);
            double batch_loss = 0.0;
            for (const auto& slot : slots) {
                batch_grad.axpy(1.0, slot.grads);
                batch_loss += slot.loss;
            }
            const double inv_count = 1.0 / static_cast<double>(count);
            batch_grad.scale(inv_count);
            batch_loss *= inv_count;
            if (!std::isfinite(batch_loss)) {
                throw NumericalError("train: non-finite batch loss at epoch " +
                                     std::to_string(epoch));
            }
            const double gnorm = std::sqrt(batch_grad.squared_norm());
            if (gnorm > opts.grad_clip) batch_grad.scale(opts.grad_clip / gnorm);
            velocity.scale(opts.momentum);
            velocity.axpy(-lr, batch_grad);
            result.params.axpy(1.0, velocity);
            epoch_loss += batch_loss * static_cast<double>(count);
            seen += count;
        }
        epoch_loss /= static_cast<double>(seen);

        EpochStats stats = validate_epoch(epoch, epoch_loss);
        result.history.push_back(stats);
        result.stopped_epoch = epoch;

        bool ok = stats.val_mean_wer <= opts.target_val_wer;
        if (ok && opts.require_reference_lowest) {
            auto it = stats.val_accent_wer.find(opts.reference_accent);
            if (it == stats.val_accent_wer.end()) {
                throw ConfigError("train: reference accent missing from validation split");
            }
            for (const auto& [a, wv] : stats.val_accent_wer) {
                if (a != opts.reference_accent && wv <= it->second) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok && epoch >= opts.min_epochs) {
            converged = true;
            break;
        }
        lr *= opts.lr_decay;
    }

    if (!converged) {
        const EpochStats& last = result.history.back();
        std::ostringstream msg;
        msg << "train: thresholds unmet after " << result.stopped_epoch
            << " epochs (val mean WER " << last.val_mean_wer << ", target "
            << opts.target_val_wer << "; per-accent:";
        for (const auto& [a, wv] : last.val_accent_wer) msg << ' ' << a << '=' << wv;
        msg << ")";
        throw NumericalError(msg.str());
    }
    return result;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    }
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
        throw ConfigError("checkpoint: matrix payload size mismatch");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
    }
    return m;
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"n_layers", c.n_layers},
                          {"hidden_dim", c.hidden_dim},
                          {"frame_size", c.frame_size},
                          {"hop", c.hop},
                          {"n_filters", c.n_filters},
                          {"vocab", c.vocab},
                          {"conv_radius", c.conv_radius},
                          {"eps_log", c.eps_log},
                          {"filter_min_hz", c.filter_min_hz},
                          {"filter_max_hz", c.filter_max_hz},
                          {"sample_rate", c.sample_rate},
                          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.frame_size = j.at("frame_size").get<int>();
    c.hop = j.at("hop").get<int>();
    c.n_filters = j.at("n_filters").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.conv_radius = j.at("conv_radius").get<int>();
    c.eps_log = j.at("eps_log").get<double>();
    c.filter_min_hz = j.at("filter_min_hz").get<double>();
    c.filter_max_hz = j.at("filter_max_hz").get<double>();
    c.sample_rate = j.at("sample_rate").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json j;
    j["format"] = "aces-checkpoint-v1";
    j["tool_version"] = kToolVersion;
    j["config"] = config_to_json(ckpt.config);
    j["meta"] = ckpt.meta;
    nlohmann::json layers = nlohmann::json::array();
    for (int l = 0; l < ckpt.config.n_layers; ++l) {
        layers.push_back(nlohmann::json{{"w", matrix_to_json(ckpt.params.w[l])},
                                        {"b", matrix_to_json(ckpt.params.b[l])},
                                        {"conv", matrix_to_json(ckpt.params.conv[l])}});
    }
    j["layers"] = layers;
    j["head"] = nlohmann::json{{"w", matrix_to_json(ckpt.params.w_head)},
                               {"b", matrix_to_json(ckpt.params.b_head)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_checkpoint: cannot open " + path);
    out << j.dump(1) << "\n";
    if (!out.good()) throw ConfigError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_checkpoint: bad JSON in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "aces-checkpoint-v1") {
        throw ConfigError("load_checkpoint: unknown format in " + path);
    }
    Checkpoint ckpt;
    ckpt.config = config_from_json(j.at("config"));
    validate(ckpt.config);
    if (j.contains("meta")) {
        ckpt.meta = j.at("meta").get<std::map<std::string, std::string>>();
    }
    const auto& layers = j.at("layers");
    if (static_cast<int>(layers.size()) != ckpt.config.n_layers) {
        throw ConfigError("load_checkpoint: layer count mismatch");
    }
    const int d = ckpt.config.hidden_dim;
    for (int l = 0; l < ckpt.config.n_layers; ++l) {
        Eigen::MatrixXd w = matrix_from_json(layers[l].at("w"));
        Eigen::MatrixXd b = matrix_from_json(layers[l].at("b"));
        Eigen::MatrixXd conv = matrix_from_json(layers[l].at("conv"));
        const int fan_in = (l == 0) ? ckpt.config.n_filters : d;
        if (w.rows() != d || w.cols() != fan_in || b.rows() != d || b.cols() != 1 ||
            conv.rows() != d || conv.cols() != 2 * ckpt.config.conv_radius + 1) {
            throw ConfigError("load_checkpoint: layer " + std::to_string(l + 1) +
                              " shape mismatch against config");
        }
        ckpt.params.w.push_back(std::move(w));
        ckpt.params.b.push_back(Eigen::VectorXd(b.col(0)));
        ckpt.params.conv.push_back(std::move(conv));
    }
    Eigen::MatrixXd wh = matrix_from_json(j.at("head").at("w"));
    Eigen::MatrixXd bh = matrix_from_json(j.at("head").at("b"));
    if (wh.rows() != logit_dim(ckpt.config) || wh.cols() != d ||
        bh.rows() != logit_dim(ckpt.config) || bh.cols() != 1) {
        throw ConfigError("load_checkpoint: head shape mismatch against config");
    }
    ckpt.params.w_head = std::move(wh);
    ckpt.params.b_head = Eigen::VectorXd(bh.col(0));
    return ckpt;
}

}  // namespace aces::model
