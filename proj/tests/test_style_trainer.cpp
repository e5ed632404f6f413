#include <catch2/catch_amalgamated.hpp>

#include "stylegen/metrics.hpp"
#include "stylegen/style_trainer.hpp"
#include "stylegen/synthetic.hpp"

using namespace stylegen;

namespace {
EncoderSpec desk_spec(std::uint64_t seed = 17, int p = 64, int d = 32) {
    EncoderSpec spec;
    spec.joint_dim = p;
    spec.token_dim = d;
    spec.seed = seed;
    return spec;
}

StyleTrainConfig desk_config(int k = 8, int epochs = 10) {
    StyleTrainConfig cfg;
    cfg.style_count = k;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.seed = 1;
    return cfg;
}

std::vector<std::string> small_css() { return {"family0", "family1"}; }
std::vector<std::string> small_categories() {
    return synthetic_categories(2, 3); // 6 names in 2 groups
}
} // namespace

TEST_CASE("mode string round-trip and config validation", "[style_trainer]") {
    CHECK(parse_train_mode("batstyler") == TrainMode::batstyler);
    CHECK(parse_train_mode("baseline-parallel") == TrainMode::baseline_parallel);
    CHECK(parse_train_mode("baseline-sequential") == TrainMode::baseline_sequential);
    CHECK_THROWS_AS(parse_train_mode("promptstyler"), Error);

    StyleTrainConfig bad = desk_config();
    bad.batch_size = 3; // 8 % 3 != 0
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = desk_config();
    bad.lambda = 2.0;
    CHECK_THROWS_AS(bad.validate(), Error);

    // Sequential budget: (epochs * K / batch) / K.
    StyleTrainConfig defaults;
    CHECK(defaults.steps_per_style_sequential() == 75); // 300*20/80... (300/4)
}

TEST_CASE("required inputs per mode", "[style_trainer]") {
    MockEncoder enc(desk_spec());
    StyleTrainConfig cfg = desk_config();
    EtfTemplate etf = build_etf(cfg.style_count, 64, 2);
    auto css = small_css();
    auto cats = small_categories();

    CHECK_THROWS_AS(train_styles(TrainMode::batstyler, cfg, enc, nullptr, &css, nullptr),
                    Error);
    CHECK_THROWS_AS(train_styles(TrainMode::batstyler, cfg, enc, &etf, nullptr, nullptr),
                    Error);
    CHECK_THROWS_AS(
        train_styles(TrainMode::baseline_parallel, cfg, enc, nullptr, nullptr, nullptr),
        Error);

    EtfTemplate wrong_k = build_etf(4, 64, 2);
    CHECK_THROWS_AS(train_styles(TrainMode::batstyler, cfg, enc, &wrong_k, &css, nullptr),
                    Error);
}

TEST_CASE("zero learning rate returns the initialization bitwise", "[style_trainer]") {
    MockEncoder enc(desk_spec());
    StyleTrainConfig cfg = desk_config(8, 1);
    cfg.lr = 0.0;
    EtfTemplate etf = build_etf(8, 64, 2);
    auto css = small_css();

    StyleTrainResult res =
        train_styles(TrainMode::batstyler, cfg, enc, &etf, &css, nullptr);
    Matrix init = detail::init_theta(cfg, enc.spec().token_dim);
    CHECK(res.theta.data == init.data);
}

TEST_CASE("same seed gives bitwise-identical runs", "[style_trainer]") {
    MockEncoder enc(desk_spec());
    StyleTrainConfig cfg = desk_config(8, 5);
    EtfTemplate etf = build_etf(8, 64, 2);
    auto css = small_css();
    auto cats = small_categories();

    for (TrainMode mode :
         {TrainMode::batstyler, TrainMode::baseline_parallel, TrainMode::baseline_sequential}) {
        StyleTrainResult a = train_styles(mode, cfg, enc, &etf, &css, &cats);
        StyleTrainResult b = train_styles(mode, cfg, enc, &etf, &css, &cats);
        REQUIRE(a.theta.data == b.theta.data);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i)
            REQUIRE(a.history[i].total == b.history[i].total);

        StyleTrainConfig other = cfg;
        other.seed = cfg.seed + 1;
        StyleTrainResult c = train_styles(mode, cfg, enc, &etf, &css, &cats);
        StyleTrainResult d = train_styles(mode, other, enc, &etf, &css, &cats);
        REQUIRE(c.theta.data != d.theta.data);
    }
}

TEST_CASE("batstyler training reaches full template accuracy on a small instance",
          "[style_trainer]") {
    MockEncoder enc(desk_spec(23));
    StyleTrainConfig cfg = desk_config(16, 150);
    EtfTemplate etf = build_etf(16, 64, 3);
    auto css = small_css();

    StyleTrainResult res = train_styles(TrainMode::batstyler, cfg, enc, &etf, &css, nullptr);

    REQUIRE(res.history.size() == 150);
    CHECK(res.history.back().total < res.history.front().total);

    // Every style's feature lands on its own template (the CE training
    // accuracy of the sequential label assignment).
    std::vector<int> indices(16);
    for (int i = 0; i < 16; ++i) indices[static_cast<std::size_t>(i)] = i;
    Matrix features = encode_style_features(res.theta, indices, enc);
    int hits = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        int best = 0;
        double best_score = -1e300;
        for (std::size_t j = 0; j < 16; ++j) {
            const double score = dot(etf.vectors.row(j), features.row(i));
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(j);
            }
        }
        hits += best == static_cast<int>(i);
    }
    CHECK(hits == 16);

    // Diversity improves over the (nearly collapsed) initialization.
    Matrix init_features =
        encode_style_features(detail::init_theta(cfg, 32), indices, enc);
    CHECK(metric_sd(features) < metric_sd(init_features));
}

TEST_CASE("sequential schedule trains styles one at a time", "[style_trainer]") {
    MockEncoder enc(desk_spec(31));
    StyleTrainConfig cfg = desk_config(4, 8); // 8 epochs, batch 4 -> 2 steps per style
    cfg.batch_size = 4;
    auto cats = small_categories();

    StyleTrainResult res =
        train_styles(TrainMode::baseline_sequential, cfg, enc, nullptr, nullptr, &cats);
    REQUIRE(res.history.size() == 4); // one record per style
    for (std::size_t i = 0; i < res.history.size(); ++i)
        CHECK(res.history[i].epoch == static_cast<int>(i));
    // Style 0 has no frozen predecessors, so its diversity term is zero.
    CHECK(res.history[0].loss_style == 0.0);
    CHECK(res.history[3].loss_style > 0.0);
}

TEST_CASE("baseline-parallel improves diversity from the collapsed init", "[style_trainer]") {
    MockEncoder enc(desk_spec(37));
    StyleTrainConfig cfg = desk_config(8, 30);
    cfg.lambda = 1.0;
    auto cats = small_categories();

    StyleTrainResult res =
        train_styles(TrainMode::baseline_parallel, cfg, enc, nullptr, nullptr, &cats);

    std::vector<int> indices(8);
    for (int i = 0; i < 8; ++i) indices[static_cast<std::size_t>(i)] = i;
    Matrix features = encode_style_features(res.theta, indices, enc);
    Matrix init_features = encode_style_features(detail::init_theta(cfg, 32), indices, enc);
    CHECK(metric_sd(features) < metric_sd(init_features));
    CHECK(res.history.back().loss_content != 0.0);
}

TEST_CASE("history CSV carries the loss columns", "[style_trainer]") {
    MockEncoder enc(desk_spec());
    StyleTrainConfig cfg = desk_config(4, 2);
    EtfTemplate etf = build_etf(4, 64, 2);
    auto css = small_css();
    StyleTrainResult res = train_styles(TrainMode::batstyler, cfg, enc, &etf, &css, nullptr);

    const auto path = std::filesystem::temp_directory_path() / "stylegen_history_test.csv";
    write_style_history_csv(path.string(), res);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,l_ce,l_sc,l_style,l_content,total,lr,wall_s");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 2);
}
