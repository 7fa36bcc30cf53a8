#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace aces::subspace {

enum class Method { ridge, lda, centroid_diff, linear_probe, random, permuted };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct Diagnostics {
    double probe_accuracy = 0.0;
    double split_half_angle_deg = 0.0;
    double wer_projection_r = 0.0;
};

// A subspace is an equivalence class of orthonormal bases; everything
// downstream depends on U only through the projector U U^T.
struct Subspace {
    Eigen::MatrixXd u;       // d x k, orthonormal columns
    int layer = 0;           // 1-based encoder layer the embeddings came from
    int k = 0;
    Method method = Method::ridge;
    std::uint64_t fit_seed = 0;
    Eigen::VectorXd center;  // fit-split global mean, reused at audit time
    // per-class centroids in projected coordinates (n_classes x k), from the
    // fit set; empty for data-free subspaces (random)
    Eigen::MatrixXd class_centroids;
    Diagnostics diagnostics;

    int dim() const { return static_cast<int>(u.rows()); }
};

struct LabeledEmbeddings {
    Eigen::MatrixXd x;        // N x d, one row per utterance
    std::vector<int> labels;  // class indices in [0, n_classes)
    int n_classes = 0;
};

struct FitOptions {
    double ridge_lambda = 1e-2;
    double lda_gamma_scale = 1e-3;  // shrinkage gamma = scale * trace(S_w) / d
    int probe_steps = 300;
    double probe_lr = 0.5;
    std::uint64_t seed = 0;
};

Subspace fit_centroid_diff(const LabeledEmbeddings& data, int k);
Subspace fit_ridge_probe(const LabeledEmbeddings& data, int k, double lambda);
Subspace fit_lda(const LabeledEmbeddings& data, int k, double gamma_scale = 1e-3);
Subspace fit_linear_probe(const LabeledEmbeddings& data, int k, int steps, double lr,
                          std::uint64_t seed);
Subspace fit(Method method, const LabeledEmbeddings& data, int k, const FitOptions& opts);

Eigen::MatrixXd projector(const Subspace& subspace);  // P = U U^T

bool is_orthonormal(const Eigen::MatrixXd& u, double tol = 1e-8);

// Held-out nearest-centroid accuracy in projected coordinates (centroids are
// the fit-set ones stored in the subspace).
double probe_accuracy(const Subspace& subspace, const LabeledEmbeddings& heldout);

// arccos of the singular values of U1^T U2, degrees, ascending.
std::vector<double> principal_angles(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2);

// Largest principal angle between fits on two explicit datasets.
double angle_between_fits(const LabeledEmbeddings& half_a, const LabeledEmbeddings& half_b,
                          Method method, int k, const FitOptions& opts);

// Random-half split stability (max principal angle, degrees). Resplits up to
// a bounded number of times if a class is missing from a half.
double split_half_stability(const LabeledEmbeddings& data, Method method, int k,
                            const FitOptions& opts, std::uint64_t seed);

// Pearson r between ||U^T (e - center)|| and per-utterance WER.
double wer_projection_correlation(const Subspace& subspace, const Eigen::MatrixXd& embeddings,
                                  const std::vector<double>& wers);

struct SweepCell {
    int layer = 0;
    int k = 0;
    Method method = Method::ridge;
    double probe_accuracy = 0.0;
    double split_half_angle_deg = 0.0;
    double wer_projection_r = 0.0;
};

struct Selection {
    SweepCell chosen;
    bool stability_warning = false;  // no candidate met the threshold
};

// Max probe accuracy among cells whose split-half angle is within the
// threshold; ties broken by smaller k, then smaller layer, then method order.
Selection select_layer_k(const std::vector<SweepCell>& sweep, double stability_threshold_deg);

Subspace random_subspace(int dim, int k, std::uint64_t seed);

Subspace permuted_label_subspace(const LabeledEmbeddings& data, Method method, int k,
                                 const FitOptions& opts, std::uint64_t seed);
// Explicit-permutation variant (test hook; identity permutation reproduces
// the real fit).
Subspace permuted_label_subspace(const LabeledEmbeddings& data, Method method, int k,
                                 const FitOptions& opts, const std::vector<int>& permutation);

void save_subspace(const Subspace& subspace, const std::string& path,
                   const std::string& meta_comment = "");
Subspace load_subspace(const std::string& path);

}  // namespace aces::subspace
