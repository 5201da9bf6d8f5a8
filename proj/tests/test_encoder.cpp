#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "kbdr/encoder.hpp"
#include "kbdr/error.hpp"
#include "kbdr/random.hpp"

using namespace kbdr;

namespace {

// Classic two-margin contrastive loss: l * d^2 + (1 - l) * max(0, m - d)^2.
double hadsell(double d, int l, double m) {
    const double hinge = std::max(0.0, m - d);
    return l * d * d + (1 - l) * hinge * hinge;
}

// Forward pass written from the definitions, used as the finite-difference oracle.
double oracle_loss(const std::vector<double>& w, std::size_t dim, const std::vector<SparseFeatures>& qs,
                   const std::vector<SparseFeatures>& ds, const std::vector<int>& labels,
                   const std::vector<double>& mus, DistanceSpace space) {
    const auto embed = [&](const SparseFeatures& x) {
        std::vector<double> v(dim, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t c = 0; c < dim; ++c) v[c] += x.value[i] * w[x.index[i] * dim + c];
        }
        double n = 0.0;
        for (double e : v) n += e * e;
        n = std::sqrt(n);
        for (double& e : v) e /= n;
        return v;
    };
    double total = 0.0;
    for (std::size_t e = 0; e < qs.size(); ++e) {
        const auto a = embed(qs[e]);
        const auto b = embed(ds[e]);
        double c = 0.0;
        for (std::size_t i = 0; i < dim; ++i) c += a[i] * b[i];
        const double dist = space == DistanceSpace::cosine ? 1.0 - c : std::acos(c);
        const double theta = std::acos(1.0 - mus[e]);
        const double gap = labels[e] == 1 ? std::max(0.0, dist - theta) : std::max(0.0, theta - dist);
        total += gap * gap;
    }
    return total / static_cast<double>(qs.size());
}

SparseFeatures random_features(Rng& rng, std::size_t dim) {
    std::map<std::uint32_t, double> m;
    const std::size_t n = 1 + rng.uniform_index(5);
    for (std::size_t i = 0; i < n; ++i) {
        m[static_cast<std::uint32_t>(rng.uniform_index(dim))] = rng.uniform() * 2.0 - 1.0;
    }
    SparseFeatures f;
    for (const auto& [k, v] : m) {
        f.index.push_back(k);
        f.value.push_back(v);
    }
    return f;
}

}  // namespace

TEST(Loss, DocumentedPoints) {
    EXPECT_NEAR(multimargin_loss(0.0, 1, 0.0), 0.0, 1e-12);
    EXPECT_NEAR(multimargin_loss(std::numbers::pi / 2.0, 0, 1.0), 0.0, 1e-12);
    // Thresholds from the series acos(x) = pi/2 - asin(x), asin via atan.
    const double theta02 = std::atan2(std::sqrt(1.0 - 0.8 * 0.8), 0.8);
    const double theta08 = std::atan2(std::sqrt(1.0 - 0.2 * 0.2), 0.2);
    EXPECT_NEAR(theta02, 0.6435011087932844, 1e-15);
    EXPECT_NEAR(multimargin_loss(1.0, 1, 0.2), (1.0 - theta02) * (1.0 - theta02), 1e-12);
    EXPECT_NEAR(multimargin_loss(1.0, 1, 0.2), 0.1271, 1e-4);
    EXPECT_NEAR(multimargin_loss(0.5, 0, 0.8), (theta08 - 0.5) * (theta08 - 0.5), 1e-12);
    EXPECT_NEAR(multimargin_loss(0.5, 0, 0.8), 0.7559, 1e-4);
}

TEST(Loss, InsideMarginIsZero) {
    EXPECT_EQ(multimargin_loss(0.3, 1, 0.2), 0.0);
    EXPECT_EQ(multimargin_loss(1.9, 0, 0.8), 0.0);
}

TEST(Loss, ReducesToClassicContrastive) {
    const double mu_neg = 0.8;
    const double m = std::acos(1.0 - mu_neg);
    for (int i = 0; i <= 200; ++i) {
        const double d = 2.0 * i / 200.0;
        EXPECT_DOUBLE_EQ(multimargin_loss(d, 1, 0.0), hadsell(d, 1, m));
        EXPECT_DOUBLE_EQ(multimargin_loss(d, 0, mu_neg), hadsell(d, 0, m));
    }
}

TEST(Loss, NonNegativeAndMonotone) {
    for (double mu : {0.0, 0.2, 0.6, 1.0, 1.2, 2.0}) {
        double prev_pos = -1.0, prev_neg = 1e9;
        for (int i = 0; i <= 100; ++i) {
            const double d = 2.0 * i / 100.0;
            const double p = multimargin_loss(d, 1, mu);
            const double n = multimargin_loss(d, 0, mu);
            EXPECT_GE(p, 0.0);
            EXPECT_GE(n, 0.0);
            EXPECT_GE(p, prev_pos);
            EXPECT_LE(n, prev_neg);
            prev_pos = p;
            prev_neg = n;
        }
    }
}

TEST(Loss, ThresholdShape) {
    EXPECT_DOUBLE_EQ(margin_threshold(0.0), 0.0);
    EXPECT_DOUBLE_EQ(margin_threshold(1.0), std::numbers::pi / 2.0);
    EXPECT_DOUBLE_EQ(margin_threshold(2.0), std::numbers::pi);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
        const double t = margin_threshold(2.0 * i / 100.0);
        EXPECT_GT(t, prev);
        prev = t;
    }
    EXPECT_THROW(margin_threshold(-0.1), NumericError);
    EXPECT_THROW(margin_threshold(2.1), NumericError);
}

TEST(CosineDistance, Basics) {
    const std::vector<double> v = {0.3, -0.4, 0.5};
    EXPECT_NEAR(cosine_distance(v, v), 0.0, 1e-12);
    EXPECT_NEAR(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0, 1e-12);
    EXPECT_NEAR(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{-1, 0}), 2.0, 1e-12);
    EXPECT_THROW(cosine_distance(std::vector<double>{0, 0}, std::vector<double>{1, 0}), NumericError);
}

TEST(Encode, DeterministicAndUnitNorm) {
    const auto m = EncoderModel::initialize({4096, 32, 3}, 5);
    const auto a = m.encode("Treatment for gene SMO and variant L412F?");
    const auto b = m.encode("Treatment for gene SMO and variant L412F?");
    EXPECT_EQ(a, b);
    EXPECT_NEAR(l2_norm(a), 1.0, 1e-6);
    EXPECT_NEAR(l2_norm(m.encode("x")), 1.0, 1e-6);
}

TEST(Encode, EmptyTextUsesFallback) {
    const auto m = EncoderModel::initialize({4096, 16, 3}, 5);
    const auto v = m.encode("");
    EXPECT_EQ(v, fallback_vector(16));
    EXPECT_EQ(v[0], 1.0);
    EXPECT_EQ(m.encode(" .;- "), v);
}

TEST(Hasher, UnigramsAndBigramsWithSigns) {
    const FeatureHasher h(1u << 20, 1);
    const auto f = h.features("alpha beta");
    EXPECT_EQ(f.size(), 3u);
    for (double v : f.value) EXPECT_EQ(std::abs(v), 1.0);
    EXPECT_TRUE(std::is_sorted(f.index.begin(), f.index.end()));
    EXPECT_EQ(h.features("alpha alpha").size(), 2u);
    EXPECT_TRUE(h.features("").empty());
}

TEST(Gradient, MatchesFiniteDifferences) {
    constexpr std::size_t kF = 32, kD = 8;
    Rng rng(2024);
    std::size_t points = 0, attempts = 0;
    double worst = 0.0;
    while (points < 100 && attempts < 1000) {
        ++attempts;
        auto model = EncoderModel::initialize({kF, kD, 1}, rng.next());
        const auto space = points % 2 == 0 ? DistanceSpace::angular : DistanceSpace::cosine;
        const std::size_t n = 1 + rng.uniform_index(4);
        std::vector<SparseFeatures> qs, ds;
        std::vector<int> labels;
        std::vector<double> mus;
        for (std::size_t i = 0; i < n; ++i) {
            qs.push_back(random_features(rng, kF));
            ds.push_back(random_features(rng, kF));
            labels.push_back(static_cast<int>(rng.uniform_index(2)));
            mus.push_back(rng.uniform() * 2.0);
        }
        std::vector<LossExample> batch;
        bool near_kink = false;
        for (std::size_t i = 0; i < n; ++i) {
            batch.push_back({&qs[i], &ds[i], labels[i], mus[i]});
            const double dist = pair_distance(model, qs[i], ds[i], space);
            const double c = space == DistanceSpace::cosine ? 1.0 - dist : std::cos(dist);
            near_kink = near_kink || std::abs(dist - margin_threshold(mus[i])) < 1e-3 || std::abs(c) > 0.999;
        }
        if (near_kink) continue;
        const auto grad = loss_gradient(model, batch, space);
        std::vector<double> w(model.weights().begin(), model.weights().end());
        EXPECT_NEAR(grad.loss, oracle_loss(w, kD, qs, ds, labels, mus, space), 1e-12);
        const double h = 1e-6;
        for (std::size_t r = 0; r < kF; ++r) {
            for (std::size_t c = 0; c < kD; ++c) {
                const std::size_t idx = r * kD + c;
                auto plus = w, minus = w;
                plus[idx] += h;
                minus[idx] -= h;
                const double numeric = (oracle_loss(plus, kD, qs, ds, labels, mus, space) -
                                        oracle_loss(minus, kD, qs, ds, labels, mus, space)) /
                                       (2.0 * h);
                const double analytic = grad.at(static_cast<std::uint32_t>(r), c);
                const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                worst = std::max(worst, rel);
            }
        }
        ++points;
    }
    EXPECT_EQ(points, 100u);
    EXPECT_LE(worst, 1e-4);
}

TEST(Gradient, ZeroInsideMargins) {
    auto model = EncoderModel::initialize({64, 8, 1}, 3);
    const auto q = model.features("alpha beta");
    const auto d = model.features("alpha beta");
    const std::vector<LossExample> batch = {{&q, &d, 1, 0.5}, {&q, &d, 1, 2.0}};
    const auto g = loss_gradient(model, batch, DistanceSpace::angular);
    EXPECT_EQ(g.loss, 0.0);
    for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, DuplicatedExampleKeepsMean) {
    auto model = EncoderModel::initialize({64, 8, 1}, 3);
    const auto q = model.features("alpha beta");
    const auto d = model.features("gamma delta");
    const std::vector<LossExample> one = {{&q, &d, 1, 0.0}};
    const std::vector<LossExample> two = {{&q, &d, 1, 0.0}, {&q, &d, 1, 0.0}};
    const auto a = loss_gradient(model, one, DistanceSpace::angular);
    const auto b = loss_gradient(model, two, DistanceSpace::angular);
    EXPECT_DOUBLE_EQ(a.loss, b.loss);
    ASSERT_EQ(a.values.size(), b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-15);
}

namespace {

struct ToyData {
    std::vector<TrainingExample> examples;
    TextLookup texts;
};

// Positives share a planted token with their query; negatives do not.
ToyData separable_set() {
    ToyData t;
    for (int q = 0; q < 12; ++q) {
        const std::string qid = "q" + std::to_string(q);
        const std::string token = "marker" + std::to_string(q);
        t.texts.query_text[qid] = "find " + token;
        const std::string pos = "p" + std::to_string(q);
        t.texts.doc_text[pos] = "report on " + token + " findings";
        t.examples.push_back({qid, pos, pos, 1, 0.0, 1, SampleSource::kb});
        for (int n = 0; n < 3; ++n) {
            const std::string neg = "n" + std::to_string(q) + "_" + std::to_string(n);
            t.texts.doc_text[neg] = "report on filler" + std::to_string(q * 3 + n) + " findings";
            t.examples.push_back({qid, neg, pos, 0, 0.8, 4, SampleSource::kb});
        }
    }
    return t;
}

}  // namespace

TEST(Train, LossDecreasesOnSeparableSet) {
    const auto data = separable_set();
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 8;
    const auto r = train(EncoderModel::initialize({1u << 12, 16, 1}, 1), data.examples, data.texts, cfg);
    ASSERT_EQ(r.epoch_loss.size(), 6u);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
    EXPECT_FALSE(r.trace.empty());
}

TEST(Train, SgdLossDecreasesToo) {
    const auto data = separable_set();
    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.learning_rate = 5.0;
    cfg.weight_decay = 0.0;
    cfg.epochs = 6;
    cfg.batch_size = 8;
    const auto r = train(EncoderModel::initialize({1u << 12, 16, 1}, 1), data.examples, data.texts, cfg);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Train, ZeroLearningRateOrZeroEpochsKeepsWeights) {
    const auto data = separable_set();
    const auto init = EncoderModel::initialize({1u << 12, 16, 1}, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 2;
    EXPECT_TRUE(train(init, data.examples, data.texts, cfg).model == init);
    cfg.learning_rate = 0.01;
    cfg.epochs = 0;
    EXPECT_TRUE(train(init, data.examples, data.texts, cfg).model == init);
}

TEST(Train, DeterministicUnderSeed) {
    const auto data = separable_set();
    TrainConfig cfg;
    cfg.epochs = 2;
    const auto init = EncoderModel::initialize({1u << 12, 16, 1}, 1);
    const auto a = train(init, data.examples, data.texts, cfg);
    const auto b = train(init, data.examples, data.texts, cfg);
    EXPECT_TRUE(a.model == b.model);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Train, MissingTextIsDataError) {
    auto data = separable_set();
    data.texts.doc_text.erase("p0");
    EXPECT_THROW(train(EncoderModel::initialize({256, 8, 1}, 1), data.examples, data.texts, TrainConfig{}), DataError);
}

TEST(Train, ScheduleWarmsUpThenDecays) {
    TrainConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.warmup_fraction = 0.1;
    EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 0, 100), 0.1);
    EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 9, 100), 1.0);
    EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 10, 100), 1.0);
    EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 99, 100), 1.0 / 90.0);
    for (std::size_t s = 10; s + 1 < 100; ++s) {
        EXPECT_GE(learning_rate_at(cfg, s, 100), learning_rate_at(cfg, s + 1, 100));
    }
}

TEST(Train, ConfigValidation) {
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.warmup_fraction = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.beta2 = 1.0;
    cfg = {};
    cfg.learning_rate = 0.2;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(parse_optimizer("adam"), ConfigError);
    EXPECT_THROW(parse_distance_space("euclid"), ConfigError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
    const auto m = EncoderModel::initialize({512, 8, 9}, 4);
    std::stringstream buf;
    m.save(buf);
    const auto back = EncoderModel::load(buf);
    EXPECT_TRUE(back == m);
    EXPECT_EQ(back.hash_seed(), 9u);
    EXPECT_EQ(back.encode("abc def"), m.encode("abc def"));
    std::istringstream bad("garbage");
    EXPECT_THROW(EncoderModel::load(bad), DataError);
}

TEST(LossTrace, CsvColumns) {
    std::ostringstream out;
    write_loss_trace(out, {{0, 0, 0.5, 0.01}});
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "epoch,step,loss,lr");
}
