#include "aces/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "aces/errors.hpp"
#include "aces/metrics.hpp"
#include "aces/rng.hpp"
#include "aces/version.hpp"

namespace aces::subspace {

namespace {

constexpr int kSplitRetries = 8;

void check_data(const LabeledEmbeddings& data) {
    if (data.n_classes < 2) throw ConfigError("subspace: need >= 2 classes");
    if (data.x.rows() != static_cast<Eigen::Index>(data.labels.size())) {
        throw ConfigError("subspace: rows/labels mismatch");
    }
    if (data.x.rows() < data.n_classes) {
        throw ConfigError("subspace: fewer samples than classes");
    }
    std::set<int> seen;
    for (int l : data.labels) {
        if (l < 0 || l >= data.n_classes) throw ConfigError("subspace: label out of range");
        seen.insert(l);
    }
    if (static_cast<int>(seen.size()) < 2) {
        throw ConfigError("subspace: need samples from >= 2 classes");
    }
}

Eigen::VectorXd global_mean(const Eigen::MatrixXd& x) { return x.colwise().mean(); }

// class centroids of (already centered) rows; n_classes x d
Eigen::MatrixXd class_means(const Eigen::MatrixXd& xc, const std::vector<int>& labels,
                            int n_classes) {
    Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n_classes, xc.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_classes);
    for (Eigen::Index i = 0; i < xc.rows(); ++i) {
        mu.row(labels[static_cast<std::size_t>(i)]) += xc.row(i);
        counts(labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int a = 0; a < n_classes; ++a) {
        if (counts(a) > 0.0) mu.row(a) /= counts(a);
    }
    return mu;
}

Eigen::MatrixXd top_left_singular(const Eigen::MatrixXd& m, int k, const char* what) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    if (k > sv.size()) {
        throw ConfigError(std::string(what) + ": k exceeds available rank");
    }
    const double floor = 1e-12 * std::max(1.0, sv(0));
    if (sv(k - 1) <= floor) {
        throw NumericalError(std::string(what) + ": rank-deficient fit (singular value " +
                             std::to_string(sv(k - 1)) + " at k=" + std::to_string(k) + ")");
    }
    return svd.matrixU().leftCols(k);
}

Subspace finish_fit(const LabeledEmbeddings& data, Eigen::MatrixXd u,
                    const Eigen::VectorXd& center, Method method, int k) {
    Subspace s;
    s.u = std::move(u);
    s.k = k;
    s.method = method;
    s.center = center;
    // fit-set centroids in projected coordinates for the nearest-centroid probe
    Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
    Eigen::MatrixXd coords = xc * s.u;  // N x k
    s.class_centroids = class_means(coords, data.labels, data.n_classes);
    return s;
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::ridge: return "ridge";
        case Method::lda: return "lda";
        case Method::centroid_diff: return "centroid_diff";
        case Method::linear_probe: return "linear_probe";
        case Method::random: return "random";
        case Method::permuted: return "permuted";
    }
    return "unknown";
}

Method method_from_name(const std::string& name) {
    if (name == "ridge") return Method::ridge;
    if (name == "lda") return Method::lda;
    if (name == "centroid_diff") return Method::centroid_diff;
    if (name == "linear_probe") return Method::linear_probe;
    if (name == "random") return Method::random;
    if (name == "permuted") return Method::permuted;
    throw ConfigError("unknown subspace method: " + name);
}

Subspace fit_centroid_diff(const LabeledEmbeddings& data, int k) {
    check_data(data);
    const int d = static_cast<int>(data.x.cols());
    if (k < 1 || k > std::min(data.n_classes - 1, d)) {
        throw ConfigError("fit_centroid_diff: k must lie in [1, min(classes-1, d)]");
    }
    Eigen::VectorXd center = global_mean(data.x);
    Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
    Eigen::MatrixXd mu = class_means(xc, data.labels, data.n_classes);  // A x d
    Eigen::MatrixXd u = top_left_singular(mu.transpose(), k, "fit_centroid_diff");
    return finish_fit(data, std::move(u), center, Method::centroid_diff, k);
}

Subspace fit_ridge_probe(const LabeledEmbeddings& data, int k, double lambda) {
    check_data(data);
    if (lambda <= 0.0) throw ConfigError("fit_ridge_probe: lambda must be > 0");
    const int d = static_cast<int>(data.x.cols());
    if (k < 1 || k >= d) throw ConfigError("fit_ridge_probe: k must lie in [1, d)");
    const Eigen::Index n = data.x.rows();
    Eigen::VectorXd center = global_mean(data.x);
    Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, data.n_classes);
    for (Eigen::Index i = 0; i < n; ++i) y(i, data.labels[static_cast<std::size_t>(i)]) = 1.0;
    y.rowwise() -= y.colwise().mean();
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    Eigen::MatrixXd w = gram.ldlt().solve(xc.transpose() * y);  // d x A
    Eigen::MatrixXd u = top_left_singular(w, k, "fit_ridge_probe");
    return finish_fit(data, std::move(u), center, Method::ridge, k);
}

Subspace fit_lda(const LabeledEmbeddings& data, int k, double gamma_scale) {
    check_data(data);
    const int d = static_cast<int>(data.x.cols());
    if (k < 1 || k > data.n_classes - 1) {
        throw ConfigError("fit_lda: k must lie in [1, classes-1]");
    }
    Eigen::VectorXd center = global_mean(data.x);
    Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
    Eigen::MatrixXd mu = class_means(xc, data.labels, data.n_classes);  // A x d

    Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(data.n_classes);
    for (Eigen::Index i = 0; i < xc.rows(); ++i) {
        const int a = data.labels[static_cast<std::size_t>(i)];
        Eigen::VectorXd dev = xc.row(i).transpose() - mu.row(a).transpose();
        sw.noalias() += dev * dev.transpose();
        counts(a) += 1.0;
    }
    for (int a = 0; a < data.n_classes; ++a) {
        sb.noalias() += counts(a) * mu.row(a).transpose() * mu.row(a);
    }
    const double gamma = gamma_scale * sw.trace() / static_cast<double>(d);
    sw.diagonal().array() += std::max(gamma, 1e-12);

    Eigen::LLT<Eigen::MatrixXd> llt(sw);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("fit_lda: within-class scatter not positive definite");
    }
    // symmetric whitening: solve L M L^T = S_b, eigendecompose, map back
    Eigen::MatrixXd l_inv_sb = llt.matrixL().solve(sb);
    Eigen::MatrixXd m = llt.matrixL().solve(l_inv_sb.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (eig.info() != Eigen::Success) throw NumericalError("fit_lda: eigensolver failed");
    // eigenvalues ascending; take the top k, then undo the whitening
    Eigen::MatrixXd top = eig.eigenvectors().rightCols(k).rowwise().reverse();
    Eigen::MatrixXd dirs = llt.matrixL().transpose().solve(top);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(dirs);
    Eigen::MatrixXd u = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    return finish_fit(data, std::move(u), center, Method::lda, k);
}

Subspace fit_linear_probe(const LabeledEmbeddings& data, int k, int steps, double lr,
                          std::uint64_t seed) {
    check_data(data);
    const int d = static_cast<int>(data.x.cols());
    const int a_total = data.n_classes;
    if (k < 1 || k >= d) throw ConfigError("fit_linear_probe: k must lie in [1, d)");
    const Eigen::Index n = data.x.rows();
    Eigen::VectorXd center = global_mean(data.x);
    Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();

    Rng rng(hash_combine(seed, hash_string("linear-probe")));
    Eigen::MatrixXd w(d, a_total);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < a_total; ++c) w(r, c) = 0.01 * rng.gaussian();
    }
    Eigen::VectorXd bias = Eigen::VectorXd::Zero(a_total);

    const double inv_n = 1.0 / static_cast<double>(n);
    double prev_loss = std::numeric_limits<double>::infinity();
    int rises = 0;
    for (int step = 0; step < steps; ++step) {
        Eigen::MatrixXd scores = xc * w;  // N x A
        scores.rowwise() += bias.transpose();
        double loss = 0.0;
        Eigen::MatrixXd probs(n, a_total);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mx = scores.row(i).maxCoeff();
            Eigen::ArrayXd e = (scores.row(i).array() - mx).exp();
            const double z = e.sum();
            probs.row(i) = (e / z).matrix().transpose();
            loss -= std::log(std::max(probs(i, data.labels[static_cast<std::size_t>(i)]), 1e-300));
        }
        loss *= inv_n;
        if (loss > prev_loss + 1e-12) {
            if (++rises >= 10) {
                throw NumericalError("fit_linear_probe: diverging (loss rose 10 evals)");
            }
        } else {
            rises = 0;
        }
        prev_loss = loss;
        for (Eigen::Index i = 0; i < n; ++i) {
            probs(i, data.labels[static_cast<std::size_t>(i)]) -= 1.0;
        }
        w -= lr * inv_n * (xc.transpose() * probs);
        bias -= lr * inv_n * probs.colwise().sum().transpose();
    }
    Eigen::MatrixXd u = top_left_singular(w, k, "fit_linear_probe");
    return finish_fit(data, std::move(u), center, Method::linear_probe, k);
}

Subspace fit(Method method, const LabeledEmbeddings& data, int k, const FitOptions& opts) {
    switch (method) {
        case Method::ridge: return fit_ridge_probe(data, k, opts.ridge_lambda);
        case Method::lda: return fit_lda(data, k, opts.lda_gamma_scale);
        case Method::centroid_diff: return fit_centroid_diff(data, k);
        case Method::linear_probe:
            return fit_linear_probe(data, k, opts.probe_steps, opts.probe_lr, opts.seed);
        default:
            throw ConfigError("fit: method must be a data-driven fit");
    }
}

Eigen::MatrixXd projector(const Subspace& subspace) { return subspace.u * subspace.u.transpose(); }

bool is_orthonormal(const Eigen::MatrixXd& u, double tol) {
    if (u.cols() == 0) return false;
    Eigen::MatrixXd gram = u.transpose() * u;
    gram -= Eigen::MatrixXd::Identity(u.cols(), u.cols());
    return gram.cwiseAbs().maxCoeff() < tol;
}

double probe_accuracy(const Subspace& subspace, const LabeledEmbeddings& heldout) {
    if (subspace.class_centroids.rows() == 0) {
        throw ConfigError("probe_accuracy: subspace has no fit centroids");
    }
    if (heldout.x.cols() != subspace.u.rows()) {
        throw ConfigError("probe_accuracy: dimension mismatch");
    }
    Eigen::MatrixXd coords =
        (heldout.x.rowwise() - subspace.center.transpose()) * subspace.u;  // N x k
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        int best = 0;
        double best_d = (coords.row(i) - subspace.class_centroids.row(0)).squaredNorm();
        for (int a = 1; a < subspace.class_centroids.rows(); ++a) {
            const double dist = (coords.row(i) - subspace.class_centroids.row(a)).squaredNorm();
            if (dist < best_d) {
                best_d = dist;
                best = a;
            }
        }
        if (best == heldout.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(coords.rows());
}

std::vector<double> principal_angles(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2) {
    if (u1.rows() != u2.rows() || u1.cols() != u2.cols()) {
        throw ConfigError("principal_angles: shape mismatch");
    }
    if (!is_orthonormal(u1) || !is_orthonormal(u2)) {
        throw ConfigError("principal_angles: inputs must be orthonormal");
    }
    const Eigen::Index k = u1.cols();
    Eigen::MatrixXd m = u1.transpose() * u2;
    Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(m);
    // arccos of near-unit singular values loses half the digits; the
    // sine-based values from the residual recover small angles exactly
    Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(u2 - u1 * m);
    std::vector<double> cos_angles(static_cast<std::size_t>(k));
    std::vector<double> sin_angles(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
        cos_angles[static_cast<std::size_t>(i)] =
            std::acos(std::clamp(cos_svd.singularValues()(i), 0.0, 1.0));
        // sine singular values come out descending; reverse pairs them with
        // the ascending-angle order of the cosine route
        sin_angles[static_cast<std::size_t>(i)] =
            std::asin(std::clamp(sin_svd.singularValues()(k - 1 - i), 0.0, 1.0));
    }
    std::vector<double> angles(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
        const double rad = cos_angles[static_cast<std::size_t>(i)] < M_PI / 4.0
                               ? sin_angles[static_cast<std::size_t>(i)]
                               : cos_angles[static_cast<std::size_t>(i)];
        angles[static_cast<std::size_t>(i)] = rad * 180.0 / M_PI;
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

double angle_between_fits(const LabeledEmbeddings& half_a, const LabeledEmbeddings& half_b,
                          Method method, int k, const FitOptions& opts) {
    Subspace sa = fit(method, half_a, k, opts);
    Subspace sb = fit(method, half_b, k, opts);
    std::vector<double> angles = principal_angles(sa.u, sb.u);
    return angles.back();
}

double split_half_stability(const LabeledEmbeddings& data, Method method, int k,
                            const FitOptions& opts, std::uint64_t seed) {
    check_data(data);
    const Eigen::Index n = data.x.rows();
    for (int attempt = 0; attempt < kSplitRetries; ++attempt) {
        Rng rng(hash_combine(hash_combine(seed, hash_string("split-half")),
                             static_cast<std::uint64_t>(attempt)));
        std::vector<std::size_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const std::size_t half = order.size() / 2;

        auto subset = [&](std::size_t lo, std::size_t hi) {
            LabeledEmbeddings part;
            part.n_classes = data.n_classes;
            part.x.resize(static_cast<Eigen::Index>(hi - lo), data.x.cols());
            part.labels.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                part.x.row(static_cast<Eigen::Index>(i - lo)) =
                    data.x.row(static_cast<Eigen::Index>(order[i]));
                part.labels.push_back(data.labels[order[i]]);
            }
            return part;
        };
        LabeledEmbeddings a = subset(0, half);
        LabeledEmbeddings b = subset(half, order.size());

        auto counts_ok = [&](const LabeledEmbeddings& part) {
            std::vector<int> counts(static_cast<std::size_t>(part.n_classes), 0);
            for (int l : part.labels) counts[static_cast<std::size_t>(l)]++;
            return std::all_of(counts.begin(), counts.end(), [](int c) { return c >= 2; });
        };
        if (!counts_ok(a) || !counts_ok(b)) continue;
        return angle_between_fits(a, b, method, k, opts);
    }
    throw NumericalError("split_half_stability: could not form class-complete halves after " +
                         std::to_string(kSplitRetries) + " resplits");
}

double wer_projection_correlation(const Subspace& subspace, const Eigen::MatrixXd& embeddings,
                                  const std::vector<double>& wers) {
    if (embeddings.rows() != static_cast<Eigen::Index>(wers.size())) {
        throw ConfigError("wer_projection_correlation: rows/wers mismatch");
    }
    Eigen::MatrixXd coords =
        (embeddings.rowwise() - subspace.center.transpose()) * subspace.u;
    std::vector<double> proj(static_cast<std::size_t>(coords.rows()));
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        proj[static_cast<std::size_t>(i)] = coords.row(i).norm();
    }
    // metrics::pearson_r enforces n >= 3 and nonzero variance
    return metrics::pearson_r(proj, wers);
}

Selection select_layer_k(const std::vector<SweepCell>& sweep, double stability_threshold_deg) {
    if (sweep.empty()) throw ConfigError("select_layer_k: empty sweep");
    auto better = [](const SweepCell& a, const SweepCell& b) {
        if (a.probe_accuracy != b.probe_accuracy) return a.probe_accuracy > b.probe_accuracy;
        if (a.k != b.k) return a.k < b.k;
        if (a.layer != b.layer) return a.layer < b.layer;
        return static_cast<int>(a.method) < static_cast<int>(b.method);
    };
    const SweepCell* best_stable = nullptr;
    const SweepCell* best_any = nullptr;
    for (const auto& cell : sweep) {
        if (!best_any || better(cell, *best_any)) best_any = &cell;
        if (cell.split_half_angle_deg <= stability_threshold_deg) {
            if (!best_stable || better(cell, *best_stable)) best_stable = &cell;
        }
    }
    Selection sel;
    if (best_stable) {
        sel.chosen = *best_stable;
    } else {
        sel.chosen = *best_any;
        sel.stability_warning = true;
    }
    return sel;
}

Subspace random_subspace(int dim, int k, std::uint64_t seed) {
    if (k < 1 || k >= dim) throw ConfigError("random_subspace: need 1 <= k < d");
    Rng rng(hash_combine(seed, hash_string("random-subspace")));
    Eigen::MatrixXd g(dim, k);
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < k; ++c) g(r, c) = rng.gaussian();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Subspace s;
    s.u = qr.householderQ() * Eigen::MatrixXd::Identity(dim, k);
    s.k = k;
    s.method = Method::random;
    s.fit_seed = seed;
    s.center = Eigen::VectorXd::Zero(dim);
    return s;
}

Subspace permuted_label_subspace(const LabeledEmbeddings& data, Method method, int k,
                                 const FitOptions& opts, const std::vector<int>& permutation) {
    if (permutation.size() != data.labels.size()) {
        throw ConfigError("permuted_label_subspace: permutation size mismatch");
    }
    LabeledEmbeddings shuffled = data;
    for (std::size_t i = 0; i < permutation.size(); ++i) {
        shuffled.labels[i] = data.labels[static_cast<std::size_t>(permutation[i])];
    }
    Subspace s = fit(method, shuffled, k, opts);
    s.method = Method::permuted;
    return s;
}

Subspace permuted_label_subspace(const LabeledEmbeddings& data, Method method, int k,
                                 const FitOptions& opts, std::uint64_t seed) {
    Rng rng(hash_combine(seed, hash_string("label-permutation")));
    std::vector<int> perm(data.labels.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Subspace s = permuted_label_subspace(data, method, k, opts, perm);
    s.fit_seed = seed;
    return s;
}

void save_subspace(const Subspace& s, const std::string& path, const std::string& meta_comment) {
    nlohmann::json j;
    j["format"] = "aces-subspace-v1";
    j["tool_version"] = kToolVersion;
    if (!meta_comment.empty()) j["meta"] = meta_comment;
    j["d"] = s.dim();
    j["k"] = s.k;
    j["layer"] = s.layer;
    j["method"] = method_name(s.method);
    j["seed"] = s.fit_seed;
    std::vector<double> u_flat;
    u_flat.reserve(static_cast<std::size_t>(s.u.size()));
    for (Eigen::Index r = 0; r < s.u.rows(); ++r) {
        for (Eigen::Index c = 0; c < s.u.cols(); ++c) u_flat.push_back(s.u(r, c));
    }
    j["u_row_major"] = u_flat;
    j["center"] = std::vector<double>(s.center.data(), s.center.data() + s.center.size());
    std::vector<double> cent_flat;
    for (Eigen::Index r = 0; r < s.class_centroids.rows(); ++r) {
        for (Eigen::Index c = 0; c < s.class_centroids.cols(); ++c) {
            cent_flat.push_back(s.class_centroids(r, c));
        }
    }
    j["class_centroids_row_major"] = cent_flat;
    j["n_classes"] = s.class_centroids.rows();
    j["diagnostics"] = {{"probe_accuracy", s.diagnostics.probe_accuracy},
                        {"split_half_angle_deg", s.diagnostics.split_half_angle_deg},
                        {"wer_projection_r", s.diagnostics.wer_projection_r}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_subspace: cannot open " + path);
    out << j.dump(1) << "\n";
    if (!out.good()) throw ConfigError("save_subspace: write failed for " + path);
}

Subspace load_subspace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("load_subspace: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_subspace: bad JSON in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "aces-subspace-v1") {
        throw ConfigError("load_subspace: unknown format in " + path);
    }
    Subspace s;
    const int d = j.at("d").get<int>();
    s.k = j.at("k").get<int>();
    s.layer = j.at("layer").get<int>();
    s.method = method_from_name(j.at("method").get<std::string>());
    s.fit_seed = j.at("seed").get<std::uint64_t>();
    const auto u_flat = j.at("u_row_major").get<std::vector<double>>();
    if (static_cast<int>(u_flat.size()) != d * s.k) {
        throw ConfigError("load_subspace: U payload size mismatch");
    }
    s.u.resize(d, s.k);
    std::size_t idx = 0;
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < s.k; ++c) s.u(r, c) = u_flat[idx++];
    }
    const auto center = j.at("center").get<std::vector<double>>();
    if (static_cast<int>(center.size()) != d) {
        throw ConfigError("load_subspace: center size mismatch");
    }
    s.center = Eigen::Map<const Eigen::VectorXd>(center.data(), d);
    const int n_classes = j.at("n_classes").get<int>();
    const auto cent_flat = j.at("class_centroids_row_major").get<std::vector<double>>();
    if (static_cast<int>(cent_flat.size()) != n_classes * s.k) {
        throw ConfigError("load_subspace: centroid payload size mismatch");
    }
    s.class_centroids.resize(n_classes, s.k);
    idx = 0;
    for (int r = 0; r < n_classes; ++r) {
        for (int c = 0; c < s.k; ++c) s.class_centroids(r, c) = cent_flat[idx++];
    }
    if (j.contains("diagnostics")) {
        const auto& dg = j.at("diagnostics");
        s.diagnostics.probe_accuracy = dg.value("probe_accuracy", 0.0);
        s.diagnostics.split_half_angle_deg = dg.value("split_half_angle_deg", 0.0);
        s.diagnostics.wer_projection_r = dg.value("wer_projection_r", 0.0);
    }
    if (!is_orthonormal(s.u, 1e-6)) {
        throw NumericalError("load_subspace: stored basis is not orthonormal");
    }
    return s;
}

}  // namespace aces::subspace
