#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aces/corpus.hpp"

namespace aces::model {

// Frame-level CTC recognizer over a Gabor-style power filterbank frontend.
// Everything is double precision; the whole map waveform -> loss is smooth,
// so exact reverse-mode gradients w.r.t. both parameters and the raw
// waveform are available (waveform gradients drive the PGD attack).
struct ModelConfig {
    int n_layers = 4;        // layers indexed 1..n_layers in the public API
    int hidden_dim = 64;     // d
    int frame_size = 128;
    int hop = 64;
    int n_filters = 20;
    int vocab = 12;          // tokens; blank id == vocab, logits dim = vocab+1
    int conv_radius = 2;     // depthwise temporal window = 2r+1
    double eps_log = 1e-5;   // smooth log compression offset
    double filter_min_hz = 150.0;
    double filter_max_hz = 3600.0;
    int sample_rate = 8000;
    std::uint64_t seed = 1;
};

void validate(const ModelConfig& config);
int logit_dim(const ModelConfig& config);          // vocab + 1
int blank_id(const ModelConfig& config);           // == vocab
int frame_count(std::size_t samples, const ModelConfig& config);

struct Params {
    std::vector<Eigen::MatrixXd> w;     // [n_layers]; w[0]: d x n_filters, rest d x d
    std::vector<Eigen::VectorXd> b;     // [n_layers]; d
    std::vector<Eigen::MatrixXd> conv;  // [n_layers]; d x (2r+1) depthwise taps
    Eigen::MatrixXd w_head;             // (vocab+1) x d
    Eigen::VectorXd b_head;             // vocab+1

    double squared_norm() const;
    void axpy(double a, const Params& other);  // this += a * other
    void scale(double a);
    static Params zeros_like(const Params& p);
};

Params init_params(const ModelConfig& config);

// Inference-time partial project-out at one layer: frames h_t of the layer's
// states become h_t - alpha * U U^T h_t before downstream layers run. With
// pooled_shift set, the subtracted vector is alpha * U U^T pooled(h) for
// every frame instead (same pooled embedding by linearity).
struct HookSpec {
    int layer = 1;         // 1-based
    double alpha = 0.0;
    Eigen::MatrixXd u;     // d x k, orthonormal columns; k == 0 means no-op
    bool pooled_shift = false;
};

struct HiddenStates {
    std::vector<Eigen::MatrixXd> layers;  // [n_layers]; d x T, post-activation
    Eigen::MatrixXd logits;               // (vocab+1) x T
    int frames() const { return static_cast<int>(logits.cols()); }
};

HiddenStates forward(const std::vector<double>& waveform, const Params& params,
                     const ModelConfig& config, const HookSpec* hook = nullptr);

Eigen::VectorXd pooled_embedding(const HiddenStates& states, int layer);
Eigen::VectorXd pooled_embedding(const std::vector<double>& waveform, const Params& params,
                                 const ModelConfig& config, int layer);

// --- CTC ---------------------------------------------------------------

// Minimal frame count that can emit `target` (length + forced blanks
// between repeats). Targets longer than that for the given T are infeasible.
int ctc_min_frames(const std::vector<int>& target);

// -log p(target | softmax(logits)) by the log-space forward recursion over
// the blank-extended label sequence. Throws NumericalError on infeasible
// targets rather than returning an infinite loss.
double ctc_loss(const Eigen::MatrixXd& logits, const std::vector<int>& target);

struct CtcGrad {
    double loss = 0.0;
    Eigen::MatrixXd dlogits;  // same shape as logits
};
CtcGrad ctc_loss_grad(const Eigen::MatrixXd& logits, const std::vector<int>& target);

// Per-frame argmax (first index wins ties), collapse adjacent repeats,
// remove blanks.
std::vector<int> ctc_greedy_decode(const Eigen::MatrixXd& logits);

std::vector<int> transcribe(const std::vector<double>& waveform, const Params& params,
                            const ModelConfig& config, const HookSpec* hook = nullptr);

// --- gradients w.r.t. the waveform --------------------------------------

// Objective = ctc_loss(x) + beta * coupling(x), where coupling is the
// squared norm of the subspace-projected representation shift at `layer`
// relative to the supplied clean reference (pooled by default, or averaged
// per-frame when per_frame is set).
struct ObjectiveSpec {
    double beta = 0.0;
    int layer = 1;                       // 1-based
    const Eigen::MatrixXd* u = nullptr;  // d x k orthonormal; nullptr => beta ignored
    bool per_frame = false;
    Eigen::VectorXd clean_pooled;        // d (pooled variant)
    Eigen::MatrixXd clean_frames;        // d x T (per-frame variant)
};

struct InputGrad {
    double objective = 0.0;
    double ctc = 0.0;
    double coupling = 0.0;  // the squared-norm term, without beta
    Eigen::VectorXd grad;   // d objective / d waveform
};

InputGrad objective_grad_wrt_input(const std::vector<double>& waveform,
                                   const std::vector<int>& target, const Params& params,
                                   const ModelConfig& config, const ObjectiveSpec& spec);

// --- training ------------------------------------------------------------

struct TrainOptions {
    int max_epochs = 60;
    int min_epochs = 4;
    int batch_size = 16;
    double lr = 0.08;
    double momentum = 0.9;
    double lr_decay = 0.97;
    double grad_clip = 5.0;            // global-norm clip per batch
    double target_val_wer = 0.35;      // stop once mean validation WER is below
    bool require_reference_lowest = true;
    std::string reference_accent = "a0";
    std::uint64_t seed = 7;
    int jobs = 1;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mean_wer = 0.0;
    std::map<std::string, double> val_accent_wer;
};

struct TrainResult {
    Params params;
    std::vector<EpochStats> history;
    int stopped_epoch = 0;
};

// Momentum SGD with a fixed schedule and seeded shuffling; deterministic for
// a fixed seed regardless of `jobs` (per-utterance gradients are reduced in
// index order). Throws NumericalError with final metrics if the validation
// thresholds are not met within max_epochs.
TrainResult train(const std::vector<corpus::Utterance>& data, const ModelConfig& config,
                  const TrainOptions& opts);

// --- checkpoint ----------------------------------------------------------

struct Checkpoint {
    ModelConfig config;
    Params params;
    std::map<std::string, std::string> meta;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // validates shapes

}  // namespace aces::model
