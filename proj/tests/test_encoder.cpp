#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "stylegen/encoder.hpp"

using namespace stylegen;

namespace {
EncoderSpec small_spec(std::uint64_t seed = 11, int p = 48, int d = 24) {
    EncoderSpec spec;
    spec.joint_dim = p;
    spec.token_dim = d;
    spec.seed = seed;
    return spec;
}

Vec random_theta(std::uint64_t seed, std::size_t d, double std_dev = 0.3) {
    SeededRng rng(seed);
    Vec theta(d);
    for (double& v : theta) v = std_dev * rng.gaussian();
    return theta;
}
} // namespace

TEST_CASE("prompt assembly produces the three canonical forms", "[encoder]") {
    PromptTemplate style = assemble_prompt(PromptKind::style, 3);
    CHECK(style.text() == "a <S3> style of a");
    REQUIRE(style.pseudo_slot.has_value());
    CHECK(*style.pseudo_slot == 1);
    CHECK_FALSE(style.class_pos.has_value());

    PromptTemplate content = assemble_prompt(PromptKind::content, std::nullopt, "dog");
    CHECK(content.text() == "dog");
    CHECK_FALSE(content.pseudo_slot.has_value());

    PromptTemplate sc = assemble_prompt(PromptKind::style_content, 0, "dog");
    CHECK(sc.text() == "a <S0> style of a dog");
    REQUIRE(sc.pseudo_slot.has_value());
    REQUIRE(sc.class_pos.has_value());
    CHECK(*sc.pseudo_slot < *sc.class_pos);

    PromptTemplate multi = assemble_prompt(PromptKind::content, std::nullopt, "tabby cat");
    CHECK(multi.tokens == std::vector<std::string>{"tabby", "cat"});
}

TEST_CASE("prompt assembly rejects inconsistent arguments", "[encoder]") {
    CHECK_THROWS_AS(assemble_prompt(PromptKind::style), Error);
    CHECK_THROWS_AS(assemble_prompt(PromptKind::style, 1, "dog"), Error);
    CHECK_THROWS_AS(assemble_prompt(PromptKind::content), Error);
    CHECK_THROWS_AS(assemble_prompt(PromptKind::content, 1, "dog"), Error);
    CHECK_THROWS_AS(assemble_prompt(PromptKind::style_content, 1), Error);
    CHECK_THROWS_AS(assemble_prompt(PromptKind::content, std::nullopt, "  "), Error);
}

TEST_CASE("all encoder outputs are unit norm", "[encoder]") {
    MockEncoder enc(small_spec());
    const Vec theta = random_theta(1, 24);
    for (const auto& f :
         {enc.encode_text(assemble_prompt(PromptKind::content, std::nullopt, "cat")),
          enc.encode_text(assemble_prompt(PromptKind::style, 2), theta),
          enc.encode_text(assemble_prompt(PromptKind::style_content, 2, "cat"), theta),
          enc.encode_image({.class_name = "cat", .sigma = 0.4, .seed = 9})}) {
        CHECK(norm(f.v) == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("content encoding matches the pipeline oracle", "[encoder]") {
    const EncoderSpec spec = small_spec(11);
    MockEncoder enc(spec);
    JointFeature f = enc.encode_text(assemble_prompt(PromptKind::content, std::nullopt, "cat"));
    Vec expected = oracles::mock_encode_oracle(spec, {"cat"});
    REQUIRE(f.v.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        REQUIRE(f.v[i] == Catch::Approx(expected[i]).margin(1e-10));

    const Vec theta = random_theta(5, 24);
    PromptTemplate sc = assemble_prompt(PromptKind::style_content, 4, "tabby cat");
    JointFeature g = enc.encode_text(sc, theta);
    Vec expected_sc = oracles::mock_encode_oracle(
        spec, {"a", "<S4>", "style", "of", "a", "tabby", "cat"}, &theta, 1);
    for (std::size_t i = 0; i < expected_sc.size(); ++i)
        REQUIRE(g.v[i] == Catch::Approx(expected_sc[i]).margin(1e-10));
}

TEST_CASE("encoding is a pure function of (seed, tokens, theta)", "[encoder]") {
    MockEncoder a(small_spec(3)), b(small_spec(3)), c(small_spec(4));
    const Vec theta = random_theta(2, 24);
    PromptTemplate prompt = assemble_prompt(PromptKind::style, 0);
    CHECK(a.encode_text(prompt, theta).v == b.encode_text(prompt, theta).v);
    CHECK(a.encode_text(prompt, theta).v != c.encode_text(prompt, theta).v);
    CHECK(a.parameter_checksum() == b.parameter_checksum());
    CHECK(a.parameter_checksum() != c.parameter_checksum());
}

TEST_CASE("traced encoding gradient matches finite differences", "[encoder]") {
    const EncoderSpec spec = small_spec(7, 32, 16);
    MockEncoder enc(spec);
    PromptTemplate prompt = assemble_prompt(PromptKind::style_content, 1, "dog");

    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Vec theta = random_theta(seed, 16);
        Vec u = random_theta(seed + 100, 32, 1.0); // random direction in joint space

        TextEncoding traced = enc.encode_text_traced(prompt, theta);
        Vec analytic = traced.grad_theta(u);

        auto f = [&](const Vec& t) { return dot(enc.encode_text(prompt, t).v, u); };
        Vec fd = oracles::fd_gradient(f, theta, 1e-5);
        REQUIRE(oracles::rel_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("theta and slot must agree", "[encoder]") {
    MockEncoder enc(small_spec());
    const Vec theta = random_theta(1, 24);
    const Vec wrong_dim = random_theta(1, 10);
    CHECK_THROWS_AS(enc.encode_text(assemble_prompt(PromptKind::style, 0)), Error);
    CHECK_THROWS_AS(
        enc.encode_text(assemble_prompt(PromptKind::content, std::nullopt, "cat"), theta),
        Error);
    CHECK_THROWS_AS(enc.encode_text(assemble_prompt(PromptKind::style, 0), wrong_dim), Error);
}

TEST_CASE("mock image features orbit the class content feature", "[encoder]") {
    MockEncoder enc(small_spec());
    JointFeature content =
        enc.encode_text(assemble_prompt(PromptKind::content, std::nullopt, "dog"));

    JointFeature clean = enc.encode_image({.class_name = "dog", .sigma = 0.0, .seed = 42});
    CHECK(clean.v == content.v); // sigma = 0 reproduces the content feature exactly
    CHECK(clean.kind == FeatureKind::image);

    JointFeature shifted1 = enc.encode_image({.class_name = "dog", .sigma = 0.3, .seed = 42});
    JointFeature shifted2 = enc.encode_image({.class_name = "dog", .sigma = 0.3, .seed = 42});
    CHECK(shifted1.v == shifted2.v);
    CHECK(norm(shifted1.v) == Catch::Approx(1.0).margin(1e-9));
    CHECK(cosine(shifted1.v, content.v) < 1.0);

    CHECK_THROWS_AS(enc.encode_image({.class_name = "dog", .sigma = -0.1}), Error);
}

TEST_CASE("a vocabulary restricts image classes", "[encoder]") {
    MockEncoder enc(small_spec(), {"dog", "cat"});
    CHECK_NOTHROW(enc.encode_image({.class_name = "dog"}));
    CHECK_THROWS_AS(enc.encode_image({.class_name = "zebra"}), Error);
}

TEST_CASE("backend registry builds mocks and flags missing plugins", "[encoder]") {
    EncoderSpec spec = small_spec();
    auto backend = make_backend(spec);
    CHECK(backend->spec().joint_dim == 48);

    spec.backend_id = "external-vlm";
    try {
        make_backend(spec);
        FAIL("expected an error for the external backend");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::missing_input);
    }

    spec.backend_id = "no-such-backend";
    try {
        make_backend(spec);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
    }

    // A registered factory takes over.
    register_backend("external-vlm", [](const EncoderSpec& s) {
        EncoderSpec fake = s;
        fake.backend_id = "mock";
        return std::make_unique<MockEncoder>(fake);
    });
    spec.backend_id = "external-vlm";
    CHECK_NOTHROW(make_backend(spec));
    backend_registry().erase("external-vlm");
}
