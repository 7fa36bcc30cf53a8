#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "aces/errors.hpp"
#include "aces/rng.hpp"
#include "aces/subspace.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace aces;
using test_util::TempDir;

namespace {

// Gaussian blobs with controllable class separation along random directions.
subspace::LabeledEmbeddings gaussian_clusters(int n_classes, int per_class, int dim,
                                              double separation, std::uint64_t seed,
                                              double within_scale = 1.0) {
    Rng rng(seed);
    Eigen::MatrixXd centers(n_classes, dim);
    for (int a = 0; a < n_classes; ++a) {
        for (int j = 0; j < dim; ++j) centers(a, j) = separation * rng.gaussian();
    }
    subspace::LabeledEmbeddings data;
    data.n_classes = n_classes;
    data.x.resize(n_classes * per_class, dim);
    for (int a = 0; a < n_classes; ++a) {
        for (int i = 0; i < per_class; ++i) {
            const Eigen::Index row = a * per_class + i;
            for (int j = 0; j < dim; ++j) {
                data.x(row, j) = centers(a, j) + within_scale * rng.gaussian();
            }
            data.labels.push_back(a);
        }
    }
    return data;
}

Eigen::VectorXd span_direction(const subspace::Subspace& s) { return s.u.col(0); }

double projector_distance(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2) {
    return (u1 * u1.transpose() - u2 * u2.transpose()).norm();
}

}  // namespace

TEST_CASE("centroid-diff on two classes spans the centroid difference") {
    auto data = gaussian_clusters(2, 40, 6, 4.0, 1);
    subspace::Subspace s = subspace::fit_centroid_diff(data, 1);
    CHECK(subspace::is_orthonormal(s.u));

    Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(6), mu1 = Eigen::VectorXd::Zero(6);
    int n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        if (data.labels[static_cast<std::size_t>(i)] == 0) {
            mu0 += data.x.row(i).transpose();
            ++n0;
        } else {
            mu1 += data.x.row(i).transpose();
            ++n1;
        }
    }
    mu0 /= n0;
    mu1 /= n1;
    Eigen::VectorXd diff = (mu0 - mu1).normalized();
    CHECK(std::abs(diff.dot(span_direction(s))) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("centroid-diff degenerate and rank limits") {
    auto data = gaussian_clusters(3, 30, 8, 3.0, 2);
    CHECK_THROWS(subspace::fit_centroid_diff(data, 3));  // k > A-1

    // identical centroids: rank-deficient
    subspace::LabeledEmbeddings flat;
    flat.n_classes = 2;
    flat.x = Eigen::MatrixXd::Zero(8, 4);
    for (int i = 0; i < 8; ++i) flat.labels.push_back(i % 2);
    CHECK_THROWS_AS(subspace::fit_centroid_diff(flat, 1), NumericalError);
}

TEST_CASE("well-separated clusters give high projected probe accuracy") {
    auto fit_data = gaussian_clusters(3, 60, 10, 6.0, 3);
    auto heldout = gaussian_clusters(3, 40, 10, 6.0, 3);  // same centers (same seed stream)
    subspace::Subspace s = subspace::fit_centroid_diff(fit_data, 2);
    CHECK(subspace::probe_accuracy(s, heldout) > 0.95);
}

TEST_CASE("ridge probe") {
    auto data = gaussian_clusters(3, 50, 8, 4.0, 4);

    SUBCASE("matches an independent dense solve of the normal equations") {
        const double lambda = 0.37;
        subspace::Subspace s = subspace::fit_ridge_probe(data, 2, lambda);
        // oracle: full-pivot LU on (X^T X + lambda I) W = X^T Y, centered
        Eigen::VectorXd center = data.x.colwise().mean();
        Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
        Eigen::MatrixXd y = Eigen::MatrixXd::Zero(data.x.rows(), 3);
        for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
            y(i, data.labels[static_cast<std::size_t>(i)]) = 1.0;
        }
        y.rowwise() -= y.colwise().mean();
        Eigen::MatrixXd lhs = xc.transpose() * xc + lambda * Eigen::MatrixXd::Identity(8, 8);
        Eigen::MatrixXd w = lhs.fullPivLu().solve(xc.transpose() * y);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU);
        Eigen::MatrixXd u_oracle = svd.matrixU().leftCols(2);
        CHECK(projector_distance(s.u, u_oracle) < 1e-8);
    }
    SUBCASE("large lambda limit approaches the X^T Y span") {
        subspace::Subspace s = subspace::fit_ridge_probe(data, 2, 1e6);
        Eigen::VectorXd center = data.x.colwise().mean();
        Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
        Eigen::MatrixXd y = Eigen::MatrixXd::Zero(data.x.rows(), 3);
        for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
            y(i, data.labels[static_cast<std::size_t>(i)]) = 1.0;
        }
        y.rowwise() -= y.colwise().mean();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(xc.transpose() * y, Eigen::ComputeThinU);
        CHECK(projector_distance(s.u, svd.matrixU().leftCols(2)) < 1e-4);
    }
    SUBCASE("duplicating every row and label preserves the span") {
        subspace::LabeledEmbeddings doubled;
        doubled.n_classes = data.n_classes;
        doubled.x.resize(data.x.rows() * 2, data.x.cols());
        doubled.x << data.x, data.x;
        doubled.labels = data.labels;
        doubled.labels.insert(doubled.labels.end(), data.labels.begin(), data.labels.end());
        // duplication doubles X^T X and X^T Y, so the scaled problem with
        // doubled lambda is literally the same linear system
        subspace::Subspace s1 = subspace::fit_ridge_probe(data, 2, 1e-2);
        subspace::Subspace s2 = subspace::fit_ridge_probe(doubled, 2, 2e-2);
        CHECK(projector_distance(s1.u, s2.u) < 1e-8);
        // at fixed small lambda the span is preserved to within the
        // shrinkage perturbation
        subspace::Subspace s3 = subspace::fit_ridge_probe(doubled, 2, 1e-2);
        CHECK(projector_distance(s1.u, s3.u) < 1e-3);
    }
    SUBCASE("lambda must be positive") {
        CHECK_THROWS_AS(subspace::fit_ridge_probe(data, 2, 0.0), ConfigError);
    }
}

TEST_CASE("lda") {
    SUBCASE("two classes align with S_w^-1 (mu1 - mu2)") {
        auto data = gaussian_clusters(2, 80, 6, 3.0, 7, 1.5);
        subspace::Subspace s = subspace::fit_lda(data, 1, 1e-9);
        // direct 2-class formula oracle
        Eigen::VectorXd center = data.x.colwise().mean();
        Eigen::MatrixXd xc = data.x.rowwise() - center.transpose();
        Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(6), mu1 = Eigen::VectorXd::Zero(6);
        int n0 = 0, n1 = 0;
        for (Eigen::Index i = 0; i < xc.rows(); ++i) {
            if (data.labels[static_cast<std::size_t>(i)] == 0) {
                mu0 += xc.row(i).transpose();
                n0++;
            } else {
                mu1 += xc.row(i).transpose();
                n1++;
            }
        }
        mu0 /= n0;
        mu1 /= n1;
        Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(6, 6);
        for (Eigen::Index i = 0; i < xc.rows(); ++i) {
            const Eigen::VectorXd& mu = data.labels[static_cast<std::size_t>(i)] == 0 ? mu0 : mu1;
            Eigen::VectorXd dev = xc.row(i).transpose() - mu;
            sw += dev * dev.transpose();
        }
        sw.diagonal().array() += 1e-9 * sw.trace() / 6.0;
        Eigen::VectorXd dir = sw.fullPivLu().solve(mu0 - mu1).normalized();
        CHECK(std::abs(dir.dot(span_direction(s))) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("isotropic scatter reduces LDA to centroid-diff") {
        auto data = gaussian_clusters(3, 200, 5, 5.0, 8, 1.0);
        subspace::Subspace lda = subspace::fit_lda(data, 2, 1e-6);
        subspace::Subspace cd = subspace::fit_centroid_diff(data, 2);
        auto angles = subspace::principal_angles(lda.u, cd.u);
        CHECK(angles.back() < 10.0);  // approximately w.p. high for isotropic scatter
    }
    SUBCASE("infinite-shrinkage limit equals centroid-diff exactly") {
        auto data = gaussian_clusters(3, 60, 5, 3.0, 9, 2.0);
        subspace::Subspace lda = subspace::fit_lda(data, 2, 1e6);
        subspace::Subspace cd = subspace::fit_centroid_diff(data, 2);
        auto angles = subspace::principal_angles(lda.u, cd.u);
        CHECK(angles.back() < 0.5);
    }
    SUBCASE("k capped at A-1") {
        auto data = gaussian_clusters(3, 30, 6, 3.0, 10);
        CHECK_THROWS_AS(subspace::fit_lda(data, 3, 1e-3), ConfigError);
    }
}

TEST_CASE("linear probe") {
    SUBCASE("linearly separable two-class toy trains to accuracy 1") {
        auto data = gaussian_clusters(2, 60, 4, 8.0, 11, 0.5);
        subspace::Subspace s = subspace::fit_linear_probe(data, 1, 400, 0.5, 13);
        CHECK(subspace::probe_accuracy(s, data) == doctest::Approx(1.0));
    }
    SUBCASE("zero steps leaves a random-init span") {
        auto data = gaussian_clusters(4, 50, 8, 5.0, 12, 0.8);
        auto heldout = gaussian_clusters(4, 50, 8, 5.0, 12, 0.8);
        subspace::Subspace s = subspace::fit_linear_probe(data, 2, 0, 0.5, 14);
        CHECK(subspace::is_orthonormal(s.u));
        const double acc = subspace::probe_accuracy(s, heldout);
        subspace::Subspace trained = subspace::fit_linear_probe(data, 2, 400, 0.5, 14);
        CHECK(subspace::probe_accuracy(trained, heldout) > acc);
    }
    SUBCASE("same seed twice gives identical U") {
        auto data = gaussian_clusters(3, 40, 6, 3.0, 13);
        subspace::Subspace a = subspace::fit_linear_probe(data, 2, 100, 0.5, 15);
        subspace::Subspace b = subspace::fit_linear_probe(data, 2, 100, 0.5, 15);
        CHECK((a.u - b.u).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("projector algebra") {
    auto data = gaussian_clusters(3, 40, 8, 4.0, 16);
    subspace::Subspace s = subspace::fit_ridge_probe(data, 2, 1e-2);
    Eigen::MatrixXd p = subspace::projector(s);

    CHECK((p * p - p).norm() < 1e-8);                       // idempotent
    CHECK((p - p.transpose()).norm() < 1e-12);              // symmetric
    CHECK(p.trace() == doctest::Approx(2.0).epsilon(1e-6));  // trace = k
    CHECK((p * s.u - s.u).norm() < 1e-10);                  // fixes its range

    SUBCASE("complete basis gives the identity projector") {
        Rng rng(17);
        Eigen::MatrixXd g(5, 5);
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 5; ++c) g(r, c) = rng.gaussian();
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        subspace::Subspace full;
        full.u = qr.householderQ() * Eigen::MatrixXd::Identity(5, 5);
        full.k = 5;
        CHECK((subspace::projector(full) - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-10);
    }
    SUBCASE("projection contracts") {
        Rng rng(18);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::VectorXd x(8);
            for (int i = 0; i < 8; ++i) x(i) = rng.gaussian();
            CHECK((p * x).norm() <= x.norm() + 1e-12);
        }
    }
    SUBCASE("span equivalence: U R has the same projector for orthogonal R") {
        Rng rng(19);
        Eigen::MatrixXd g(2, 2);
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) g(r, c) = rng.gaussian();
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd rot = qr.householderQ();
        CHECK(projector_distance(s.u, s.u * rot) < 1e-8);
    }
}

TEST_CASE("probe accuracy corner cases") {
    auto data = gaussian_clusters(3, 30, 6, 4.0, 20);
    subspace::Subspace s = subspace::fit_centroid_diff(data, 2);

    SUBCASE("single-class heldout labeled by its own centroid is perfect") {
        subspace::LabeledEmbeddings one;
        one.n_classes = 3;
        // strongly separated class 1 samples
        for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
            if (data.labels[static_cast<std::size_t>(i)] == 1) {
                one.x.conservativeResize(one.x.rows() + 1, 6);
                one.x.row(one.x.rows() - 1) = data.x.row(i);
                one.labels.push_back(1);
            }
        }
        CHECK(subspace::probe_accuracy(s, one) == doctest::Approx(1.0));
    }
    SUBCASE("random subspace has no centroids to probe with") {
        subspace::Subspace r = subspace::random_subspace(6, 2, 3);
        CHECK_THROWS_AS(subspace::probe_accuracy(r, data), ConfigError);
    }
}

TEST_CASE("principal angles") {
    subspace::Subspace a = subspace::random_subspace(10, 3, 1);

    SUBCASE("identical spans give zero angles") {
        auto angles = subspace::principal_angles(a.u, a.u);
        for (double deg : angles) CHECK(deg == doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("orthogonal 1-d subspaces in R^2 are 90 degrees apart") {
        Eigen::MatrixXd e1(2, 1), e2(2, 1);
        e1 << 1, 0;
        e2 << 0, 1;
        auto angles = subspace::principal_angles(e1, e2);
        CHECK(angles[0] == doctest::Approx(90.0).epsilon(1e-9));
    }
    SUBCASE("first angle matches the power-iteration oracle") {
        subspace::Subspace u1 = subspace::random_subspace(64, 8, 2);
        subspace::Subspace u2 = subspace::random_subspace(64, 8, 3);
        auto angles = subspace::principal_angles(u1.u, u2.u);
        const double oracle_cos = oracles::max_cosine_power_iteration(u1.u, u2.u);
        CHECK(angles.front() ==
              doctest::Approx(std::acos(std::clamp(oracle_cos, 0.0, 1.0)) * 180.0 / M_PI)
                  .epsilon(1e-6));
    }
    SUBCASE("non-orthonormal inputs are rejected") {
        Eigen::MatrixXd bad = 2.0 * a.u;
        CHECK_THROWS_AS(subspace::principal_angles(a.u, bad), ConfigError);
    }
}

TEST_CASE("split-half stability") {
    subspace::FitOptions opts;

    SUBCASE("identical halves agree perfectly") {
        auto data = gaussian_clusters(3, 40, 8, 4.0, 22);
        const double angle =
            subspace::angle_between_fits(data, data, subspace::Method::ridge, 2, opts);
        CHECK(angle < 1e-6);
    }
    SUBCASE("real labels are more stable than permuted labels") {
        auto data = gaussian_clusters(4, 60, 12, 5.0, 23, 1.5);
        double real_sum = 0.0, perm_sum = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            real_sum +=
                subspace::split_half_stability(data, subspace::Method::ridge, 3, opts, seed);
            // destroy the labels, then measure stability of the noise fit
            subspace::LabeledEmbeddings shuffled = data;
            Rng rng(900 + seed);
            rng.shuffle(shuffled.labels);
            perm_sum += subspace::split_half_stability(shuffled, subspace::Method::ridge, 3,
                                                       opts, seed);
        }
        CHECK(real_sum / 5.0 < perm_sum / 5.0);
    }
    SUBCASE("class-incomplete data fails after bounded resplits") {
        subspace::LabeledEmbeddings data = gaussian_clusters(2, 30, 5, 3.0, 24);
        // a third class with a single sample can never have 2 per half
        data.n_classes = 3;
        data.x.conservativeResize(data.x.rows() + 1, 5);
        data.x.row(data.x.rows() - 1).setZero();
        data.labels.push_back(2);
        CHECK_THROWS_AS(
            subspace::split_half_stability(data, subspace::Method::centroid_diff, 1, opts, 1),
            NumericalError);
    }
}

TEST_CASE("wer-projection correlation") {
    auto data = gaussian_clusters(3, 40, 6, 4.0, 25);
    subspace::Subspace s = subspace::fit_centroid_diff(data, 2);

    SUBCASE("wer equal to the projection gives r = 1") {
        Eigen::MatrixXd coords = (data.x.rowwise() - s.center.transpose()) * s.u;
        std::vector<double> wers;
        for (Eigen::Index i = 0; i < coords.rows(); ++i) wers.push_back(coords.row(i).norm());
        CHECK(subspace::wer_projection_correlation(s, data.x, wers) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant projections raise a zero-variance error") {
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(5, 6);
        subspace::Subspace zs = s;
        zs.center = Eigen::VectorXd::Zero(6);
        std::vector<double> wers = {0.1, 0.2, 0.3, 0.4, 0.5};
        CHECK_THROWS(subspace::wer_projection_correlation(zs, x, wers));
    }
}

TEST_CASE("layer/k selection") {
    using subspace::Method;
    using subspace::SweepCell;

    SUBCASE("single candidate is returned") {
        SweepCell only{2, 4, Method::ridge, 0.8, 30.0, 0.2};
        auto sel = subspace::select_layer_k({only}, 60.0);
        CHECK(sel.chosen.layer == 2);
        CHECK(!sel.stability_warning);
    }
    SUBCASE("accuracy ties break toward smaller k") {
        SweepCell k8{2, 8, Method::ridge, 0.9, 30.0, 0.2};
        SweepCell k4{2, 4, Method::ridge, 0.9, 30.0, 0.2};
        auto sel = subspace::select_layer_k({k8, k4}, 60.0);
        CHECK(sel.chosen.k == 4);
    }
    SUBCASE("unstable cells are filtered out") {
        SweepCell unstable{1, 4, Method::ridge, 0.99, 85.0, 0.2};
        SweepCell stable{3, 8, Method::ridge, 0.7, 40.0, 0.2};
        auto sel = subspace::select_layer_k({unstable, stable}, 60.0);
        CHECK(sel.chosen.layer == 3);
        CHECK(!sel.stability_warning);
    }
    SUBCASE("no stable candidate falls back with a warning") {
        SweepCell a{1, 4, Method::ridge, 0.99, 85.0, 0.2};
        SweepCell b{2, 4, Method::ridge, 0.5, 80.0, 0.2};
        auto sel = subspace::select_layer_k({a, b}, 60.0);
        CHECK(sel.chosen.layer == 1);
        CHECK(sel.stability_warning);
    }
}

TEST_CASE("random subspaces") {
    subspace::Subspace s = subspace::random_subspace(64, 8, 5);
    CHECK(subspace::is_orthonormal(s.u));
    subspace::Subspace again = subspace::random_subspace(64, 8, 5);
    CHECK((s.u - again.u).cwiseAbs().maxCoeff() == 0.0);

    SUBCASE("expected squared projection of random unit vectors is k/d") {
        Rng rng(600);
        double sum = 0.0;
        const int trials = 1000;
        for (int i = 0; i < trials; ++i) {
            Eigen::VectorXd v(64);
            for (int j = 0; j < 64; ++j) v(j) = rng.gaussian();
            v.normalize();
            sum += (s.u.transpose() * v).squaredNorm();
        }
        const double expected = 8.0 / 64.0;
        CHECK(sum / trials == doctest::Approx(expected).epsilon(0.2));
    }
}

TEST_CASE("permuted-label subspaces") {
    auto data = gaussian_clusters(4, 50, 10, 5.0, 26, 1.0);
    subspace::FitOptions opts;

    SUBCASE("identity permutation reproduces the real fit") {
        std::vector<int> identity(data.labels.size());
        std::iota(identity.begin(), identity.end(), 0);
        subspace::Subspace real = subspace::fit(subspace::Method::ridge, data, 3, opts);
        subspace::Subspace perm = subspace::permuted_label_subspace(
            data, subspace::Method::ridge, 3, opts, identity);
        CHECK(projector_distance(real.u, perm.u) < 1e-12);
        CHECK(perm.method == subspace::Method::permuted);
    }
    SUBCASE("shuffled labels lose most of the probe signal") {
        // overlapping clusters: nearest-centroid predictions are then noise-
        // driven rather than quantized per true cluster
        auto blobs = gaussian_clusters(4, 120, 10, 1.2, 30, 1.0);
        auto heldout = gaussian_clusters(4, 120, 10, 1.2, 30, 1.0);
        subspace::Subspace perm = subspace::permuted_label_subspace(
            blobs, subspace::Method::ridge, 3, opts, std::uint64_t{41});
        const double acc = subspace::probe_accuracy(perm, heldout);
        subspace::Subspace real = subspace::fit(subspace::Method::ridge, blobs, 3, opts);
        const double real_acc = subspace::probe_accuracy(real, heldout);
        CHECK(acc < 0.5);
        CHECK(real_acc > acc + 0.3);  // real-vs-permuted separation invariant
    }
}

TEST_CASE("method agreement beats real-vs-permuted distance") {
    auto data = gaussian_clusters(4, 80, 12, 5.0, 27, 1.2);
    subspace::FitOptions opts;
    subspace::Subspace ridge = subspace::fit(subspace::Method::ridge, data, 3, opts);
    subspace::Subspace lda = subspace::fit(subspace::Method::lda, data, 3, opts);
    subspace::Subspace cd = subspace::fit(subspace::Method::centroid_diff, data, 3, opts);
    subspace::Subspace perm =
        subspace::permuted_label_subspace(data, subspace::Method::ridge, 3, opts, std::uint64_t{5});

    const double rl = subspace::principal_angles(ridge.u, lda.u).back();
    const double rc = subspace::principal_angles(ridge.u, cd.u).back();
    const double lc = subspace::principal_angles(lda.u, cd.u).back();
    const double rp = subspace::principal_angles(ridge.u, perm.u).back();
    CHECK(std::max({rl, rc, lc}) < rp);
}

TEST_CASE("subspace file round-trip") {
    TempDir tmp;
    auto data = gaussian_clusters(3, 40, 8, 4.0, 28);
    subspace::Subspace s = subspace::fit_ridge_probe(data, 2, 1e-2);
    s.layer = 3;
    s.fit_seed = 99;
    s.diagnostics.probe_accuracy = 0.91;
    const std::string path = (tmp.path / "sub.json").string();
    subspace::save_subspace(s, path, "meta");
    subspace::Subspace loaded = subspace::load_subspace(path);
    CHECK(loaded.layer == 3);
    CHECK(loaded.k == 2);
    CHECK(loaded.method == subspace::Method::ridge);
    CHECK((loaded.u - s.u).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((loaded.center - s.center).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((loaded.class_centroids - s.class_centroids).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(loaded.diagnostics.probe_accuracy == doctest::Approx(0.91));
}
