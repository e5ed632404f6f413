#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "stylegen/losses.hpp"
#include "stylegen/optim.hpp"

using namespace stylegen;

namespace {

EncoderSpec tiny_spec(std::uint64_t seed = 3, int p = 32, int d = 16) {
    EncoderSpec spec;
    spec.joint_dim = p;
    spec.token_dim = d;
    spec.seed = seed;
    return spec;
}

Matrix random_theta(std::uint64_t seed, std::size_t k, std::size_t d, double std_dev = 0.3) {
    SeededRng rng(seed);
    Matrix theta(k, d);
    for (double& v : theta.data) v = std_dev * rng.gaussian();
    return theta;
}

std::vector<int> iota_indices(int k) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
}

// Backend whose features are dictated per (kind, class), for checking loss
// formulas against hand-set geometry. Theta is ignored.
class FormulaBackend final : public EncoderBackend {
public:
    FormulaBackend(int p, int d) {
        spec_.backend_id = "mock";
        spec_.joint_dim = p;
        spec_.token_dim = d;
    }

    std::map<std::string, Vec> content_features;       // by class name
    std::map<std::string, Vec> style_content_features; // by class name

    const EncoderSpec& spec() const override { return spec_; }

    JointFeature encode_text(const PromptTemplate& prompt,
                             std::span<const double>) const override {
        if (prompt.kind == PromptKind::content)
            return {content_features.at(*prompt.class_name), FeatureKind::content};
        if (prompt.kind == PromptKind::style_content)
            return {style_content_features.at(*prompt.class_name), FeatureKind::style_content};
        fail(ErrorCode::config, "FormulaBackend has no style features");
    }

    TextEncoding encode_text_traced(const PromptTemplate& prompt,
                                    std::span<const double> theta) const override {
        TextEncoding out{encode_text(prompt, theta), nullptr};
        const auto d = static_cast<std::size_t>(spec_.token_dim);
        out.grad_theta = [d](std::span<const double>) { return Vec(d, 0.0); };
        return out;
    }

    JointFeature encode_image(const ImageRef&) const override {
        fail(ErrorCode::config, "FormulaBackend has no images");
    }

    std::uint64_t parameter_checksum() const override { return 0; }

private:
    EncoderSpec spec_;
};

Vec basis(std::size_t dim, std::size_t axis) {
    Vec v(dim, 0.0);
    v[axis] = 1.0;
    return v;
}

} // namespace

TEST_CASE("aligned-template cross-entropy has the closed form", "[losses]") {
    // K=2, scale 1: logits (1, -1), loss = ln(1 + e^-2).
    EtfTemplate etf2 = build_etf(2, 8, 0);
    std::vector<int> labels = {0, 1};
    FeatureLoss l2 = etf_cross_entropy(etf2.vectors, etf2, labels, 1.0, false);
    CHECK(l2.value == Catch::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-9));
    CHECK(l2.value == Catch::Approx(0.126928).margin(1e-6));

    // General K, scale s: ln(1 + (K-1) e^{-sK/(K-1)}).
    for (int k : {2, 4, 16}) {
        for (double s : {1.0, 5.0}) {
            EtfTemplate etf = build_etf(k, 64, 1);
            FeatureLoss l = etf_cross_entropy(etf.vectors, etf, iota_indices(k), s, false);
            const double expected = std::log(1.0 + (k - 1) * std::exp(-s * k / (k - 1.0)));
            REQUIRE(l.value == Catch::Approx(expected).margin(1e-9));
        }
    }
}

TEST_CASE("cross-entropy matches an independent log-sum-exp oracle", "[losses]") {
    EtfTemplate etf = build_etf(5, 16, 2);
    SeededRng rng(4);
    Matrix features(7, 16);
    for (double& v : features.data) v = rng.gaussian();
    for (std::size_t r = 0; r < features.rows; ++r) normalize(features.row(r));
    std::vector<int> labels = {0, 4, 2, 2, 1, 3, 0};

    for (double scale : {1.0, 3.5}) {
        FeatureLoss l = etf_cross_entropy(features, etf, labels, scale, false);
        CHECK(l.value ==
              Catch::Approx(oracles::ce_oracle(features, etf.vectors, labels, scale))
                  .margin(1e-10));
    }

    CHECK_THROWS_AS(etf_cross_entropy(features, etf,
                                      std::vector<int>{9, 0, 0, 0, 0, 0, 0}, 1.0, false),
                    Error);
    Matrix bad(2, 8, 0.5);
    CHECK_THROWS_AS(etf_cross_entropy(bad, etf, std::vector<int>{0, 1}, 1.0, false), Error);
}

TEST_CASE("style diversity penalty endpoints", "[losses]") {
    Matrix ortho(3, 4);
    ortho.set_row(0, basis(4, 0));
    ortho.set_row(1, basis(4, 1));
    ortho.set_row(2, basis(4, 2));
    CHECK(style_diversity_penalty(ortho) == Catch::Approx(0.0).margin(1e-12));

    Matrix same(4, 4);
    for (std::size_t r = 0; r < 4; ++r) same.set_row(r, basis(4, 1));
    CHECK(style_diversity_penalty(same) == Catch::Approx(6.0).margin(1e-12)); // K(K-1)/2
}

TEST_CASE("consistency loss formula endpoints via a dictated backend", "[losses]") {
    const int k = 3;
    FormulaBackend backend(8, 4);
    std::vector<std::string> css = {"cat", "car"};
    backend.content_features["cat"] = basis(8, 0);
    backend.content_features["car"] = basis(8, 1);

    Matrix theta(static_cast<std::size_t>(k), 4, 0.0);
    ContentFeatureCache cache(backend);

    SECTION("style-content equal to content gives -K*|css|") {
        backend.style_content_features["cat"] = basis(8, 0);
        backend.style_content_features["car"] = basis(8, 1);
        ThetaLoss l =
            semantic_consistency_loss(theta, iota_indices(k), css, backend, cache, false);
        CHECK(l.value == Catch::Approx(-double(k) * 2.0).margin(1e-12));
    }

    SECTION("orthogonal style-content gives 0") {
        backend.style_content_features["cat"] = basis(8, 5);
        backend.style_content_features["car"] = basis(8, 6);
        ThetaLoss l =
            semantic_consistency_loss(theta, iota_indices(k), css, backend, cache, false);
        CHECK(l.value == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("consistency loss matches a hand-rolled double loop on the mock", "[losses]") {
    MockEncoder enc(tiny_spec(9));
    Matrix theta = random_theta(1, 2, 16);
    std::vector<std::string> css = {"metal", "family0 things"};

    ContentFeatureCache cache(enc);
    ThetaLoss l = semantic_consistency_loss(theta, iota_indices(2), css, enc, cache, false);

    double expected = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (const auto& name : css) {
            const Vec fc =
                enc.encode_text(assemble_prompt(PromptKind::content, std::nullopt, name)).v;
            const Vec fsc =
                enc.encode_text(assemble_prompt(PromptKind::style_content, i, name),
                                theta.row(static_cast<std::size_t>(i)))
                    .v;
            expected -= cosine(fc, fsc);
        }
    }
    CHECK(l.value == Catch::Approx(expected).margin(1e-10));
}

TEST_CASE("lambda 0 reduces the prompt loss to the diversity term", "[losses]") {
    MockEncoder enc(tiny_spec(5));
    Matrix theta = random_theta(2, 3, 16);
    std::vector<std::string> cats = {"kind0 family0", "kind1 family0"};
    ContentFeatureCache cache(enc);
    Matrix no_reference(0, 32);

    double style_part = 0.0, content_part = 0.0;
    ThetaLoss together = baseline_prompt_loss(theta, iota_indices(3), no_reference, cats, 0.0,
                                              enc, cache, &style_part, &content_part, false);
    ThetaLoss style_only = style_diversity_loss(theta, iota_indices(3), no_reference, enc, false);
    CHECK(together.value == style_only.value);
    CHECK(content_part == 0.0);

    CHECK_THROWS_AS(
        baseline_prompt_loss(theta, iota_indices(3), no_reference, cats, 1.5, enc, cache),
        Error);
}

TEST_CASE("analytic gradients match finite differences", "[losses]") {
    // K <= 4, D <= 16, P <= 32 instances; the 20-seed sweeps run in the
    // acceptance suite.
    const EncoderSpec spec = tiny_spec(21);
    MockEncoder enc(spec);
    EtfTemplate etf = build_etf(4, 32, 3);
    std::vector<std::string> css = {"family0", "kind2 family1"};
    std::vector<std::string> cats = {"kind0 family0", "kind1 family0", "kind2 family1"};

    auto flatten_loss = [](const std::function<double(const Matrix&)>& f, std::size_t k,
                           std::size_t d) {
        return [f, k, d](const Vec& flat) {
            Matrix m(k, d);
            m.data = flat;
            return f(m);
        };
    };

    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Matrix theta = random_theta(seed, 4, 16);
        const auto idx = iota_indices(4);

        SECTION("ce gradient, seed " + std::to_string(seed)) {
            ThetaLoss l = etf_ce_loss(theta, idx, etf, 1.0, enc);
            auto value = flatten_loss(
                [&](const Matrix& t) { return etf_ce_loss(t, idx, etf, 1.0, enc, false).value; },
                4, 16);
            Vec fd = oracles::fd_gradient(value, theta.data);
            CHECK(oracles::rel_error(l.dtheta.data, fd) < 1e-4);
        }

        SECTION("consistency gradient, seed " + std::to_string(seed)) {
            ContentFeatureCache cache(enc);
            ThetaLoss l = semantic_consistency_loss(theta, idx, css, enc, cache);
            auto value = flatten_loss(
                [&](const Matrix& t) {
                    ContentFeatureCache c2(enc);
                    return semantic_consistency_loss(t, idx, css, enc, c2, false).value;
                },
                4, 16);
            Vec fd = oracles::fd_gradient(value, theta.data);
            CHECK(oracles::rel_error(l.dtheta.data, fd) < 1e-4);
        }

        SECTION("full pairwise diversity gradient, seed " + std::to_string(seed)) {
            Matrix no_reference(0, 32);
            ThetaLoss l = style_diversity_loss(theta, idx, no_reference, enc);
            auto value = flatten_loss(
                [&](const Matrix& t) {
                    return style_diversity_loss(t, idx, no_reference, enc, false).value;
                },
                4, 16);
            Vec fd = oracles::fd_gradient(value, theta.data);
            CHECK(oracles::rel_error(l.dtheta.data, fd) < 1e-4);
        }

        SECTION("content gradient over the full category list, seed " + std::to_string(seed)) {
            ContentFeatureCache cache(enc);
            ThetaLoss l = semantic_consistency_loss(theta, idx, cats, enc, cache);
            auto value = flatten_loss(
                [&](const Matrix& t) {
                    ContentFeatureCache c2(enc);
                    return semantic_consistency_loss(t, idx, cats, enc, c2, false).value;
                },
                4, 16);
            Vec fd = oracles::fd_gradient(value, theta.data);
            CHECK(oracles::rel_error(l.dtheta.data, fd) < 1e-4);
        }
    }
}

TEST_CASE("detached reference rows receive no gradient but shape the loss", "[losses]") {
    const EncoderSpec spec = tiny_spec(33);
    MockEncoder enc(spec);
    Matrix theta_all = random_theta(5, 4, 16);
    Matrix reference = encode_style_features(theta_all, iota_indices(4), enc);

    // Batch of styles {1, 2} against all four current features.
    Matrix batch(2, 16);
    batch.set_row(0, theta_all.row(1));
    batch.set_row(1, theta_all.row(2));
    const std::vector<int> idx = {1, 2};

    ThetaLoss l = style_diversity_loss(batch, idx, reference, enc);
    // Pairs: (1,2) in-batch + {1,2} x {0,3} cross = 5 terms.
    double expected = std::abs(cosine(reference.row(1), reference.row(2)));
    for (int b : idx)
        for (int j : {0, 3})
            expected += std::abs(cosine(reference.row(static_cast<std::size_t>(b)),
                                        reference.row(static_cast<std::size_t>(j))));
    CHECK(l.value == Catch::Approx(expected).margin(1e-10));

    // FD over the batch rows only, reference held fixed.
    auto value = [&](const Vec& flat) {
        Matrix m(2, 16);
        m.data = flat;
        return style_diversity_loss(m, idx, reference, enc, false).value;
    };
    Vec fd = oracles::fd_gradient(value, batch.data);
    CHECK(oracles::rel_error(l.dtheta.data, fd) < 1e-4);
}

TEST_CASE("cosine schedule and momentum optimizer behave", "[losses]") {
    CHECK(cosine_lr(0.2, 0, 300) == Catch::Approx(0.2));
    CHECK(cosine_lr(0.2, 150, 300) == Catch::Approx(0.1));
    CHECK(cosine_lr(0.2, 300, 300) == Catch::Approx(0.0));
    CHECK(cosine_lr(0.2, 299, 300) < 1e-5);

    Matrix params(2, 2, 1.0);
    Matrix grads(2, 2, 0.5);
    SgdMomentum opt(2, 2, 0.9);
    opt.step(params, grads, 0.0);
    CHECK(params.data == std::vector<double>{1.0, 1.0, 1.0, 1.0}); // zero step

    opt.step(params, grads, 0.1);
    // velocity = 0.9*0.5 + 0.5 = 0.95; param = 1 - 0.1*0.95
    CHECK(params(0, 0) == Catch::Approx(1.0 - 0.095));
}
