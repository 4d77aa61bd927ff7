#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "support.hpp"

using namespace htapx;
using testsupport::error_code_of;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, out x in

Mat weights(std::size_t out, std::size_t in, double phase) {
    Mat m(out, Vec(in));
    for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) m[i][j] = 0.3 * std::sin(phase + 1.7 * i + 0.37 * j);
    return m;
}

Vec bias(std::size_t out, double phase) {
    Vec b(out);
    for (std::size_t i = 0; i < out; ++i) b[i] = 0.05 * std::cos(phase + i);
    return b;
}

void load(Eigen::MatrixXd& target, const Mat& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m[i].size(); ++j) target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
}

void load(Eigen::VectorXd& target, const Vec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) target(static_cast<Eigen::Index>(i)) = v[i];
}

Vec matvec(const Mat& m, const Vec& x) {
    Vec y(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i][j] * x[j];
    return y;
}

Vec add(Vec a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

Vec relu(Vec a) {
    for (auto& v : a) v = std::max(0.0, v);
    return a;
}

struct HandNet {
    Mat c1s, c1l, c1r, c2s, c2l, c2r, hw, ow;
    Vec c1b, c2b, hb, ob;
};

HandNet hand_net(std::size_t d) {
    return {weights(16, d, 0.1), weights(16, d, 0.2), weights(16, d, 0.3),
            weights(8, 16, 0.4), weights(8, 16, 0.5), weights(8, 16, 0.6),
            weights(8, 16, 0.7), weights(2, 8, 0.8),
            bias(16, 1.0), bias(8, 2.0), bias(8, 3.0), bias(2, 4.0)};
}

RouterNetwork to_network(const HandNet& h, std::size_t d) {
    RouterNetwork n = RouterNetwork::zeros(d);
    load(n.conv1.self, h.c1s);
    load(n.conv1.left, h.c1l);
    load(n.conv1.right, h.c1r);
    load(n.conv1.bias, h.c1b);
    load(n.conv2.self, h.c2s);
    load(n.conv2.left, h.c2l);
    load(n.conv2.right, h.c2r);
    load(n.conv2.bias, h.c2b);
    load(n.hidden.weight, h.hw);
    load(n.hidden.bias, h.hb);
    load(n.output.weight, h.ow);
    load(n.output.bias, h.ob);
    return n;
}

// Straight-line forward pass for a root with a single left child.
Vec hand_encode(const HandNet& h, const Vec& root, const Vec& child) {
    const Vec zero_in(root.size(), 0.0), zero_hidden(16, 0.0);
    Vec h_root = relu(add(add(add(matvec(h.c1s, root), matvec(h.c1l, child)), matvec(h.c1r, zero_in)), h.c1b));
    Vec h_child = relu(add(add(add(matvec(h.c1s, child), matvec(h.c1l, zero_in)), matvec(h.c1r, zero_in)), h.c1b));
    Vec z_root = add(add(add(matvec(h.c2s, h_root), matvec(h.c2l, h_child)), matvec(h.c2r, zero_hidden)), h.c2b);
    Vec z_child = add(add(add(matvec(h.c2s, h_child), matvec(h.c2l, zero_hidden)), matvec(h.c2r, zero_hidden)), h.c2b);
    Vec out(8);
    for (std::size_t i = 0; i < 8; ++i) out[i] = std::max(z_root[i], z_child[i]);
    return out;
}

Vec hand_features(const Featurizer& f, const std::string& type, const std::string& table, double cost, double rows) {
    Vec x(f.dim(), 0.0);
    for (std::size_t i = 0; i < f.node_types.size(); ++i)
        if (f.node_types[i] == type) x[i] = 1.0;
    for (std::size_t i = 0; i < f.tables.size(); ++i)
        if (f.tables[i] == table) x[f.node_types.size() + i] = 1.0;
    x[f.dim() - 2] = (std::log(1.0 + cost) - f.cost_mean) / f.cost_std;
    x[f.dim() - 1] = (std::log(1.0 + rows) - f.rows_mean) / f.rows_std;
    return x;
}

PlanTree two_node(Engine engine) {
    PlanNode root = PlanNode::make(NodeType::Filter, 10.0, 5,
                                   {PlanNode::scan(NodeType::TableScan, "nation", 2.75, 25)});
    return {root, engine};
}

Featurizer fitted_featurizer() {
    Featurizer f = Featurizer::standard(SchemaCatalog::tpch());
    f.cost_mean = 1.5;
    f.cost_std = 2.0;
    f.rows_mean = 0.5;
    f.rows_std = 3.0;
    return f;
}

FeaturizedTree tiny_tree(Rng& rng, std::size_t d) {
    FeaturizedTree t;
    t.features = Eigen::MatrixXd(3, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = rng.normal();
    t.left = {1, -1, -1};
    t.right = {2, -1, -1};
    return t;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Featurize, MatchesHandBuiltRows) {
    Featurizer f = fitted_featurizer();
    EXPECT_EQ(f.dim(), 11u + 8u + 2u);
    FeaturizedTree t = featurize(f, two_node(Engine::TP));
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t.left, (std::vector<int>{1, -1}));
    EXPECT_EQ(t.right, (std::vector<int>{-1, -1}));
    Vec root = hand_features(f, "Filter", "", 10.0, 5.0);
    Vec child = hand_features(f, "Table Scan", "nation", 2.75, 25.0);
    for (std::size_t j = 0; j < f.dim(); ++j) {
        EXPECT_NEAR(t.features(0, static_cast<Eigen::Index>(j)), root[j], 1e-12);
        EXPECT_NEAR(t.features(1, static_cast<Eigen::Index>(j)), child[j], 1e-12);
    }
}

TEST(Featurize, UnknownLabelUsesLastSlot) {
    Featurizer f = Featurizer::standard(SchemaCatalog::tpch());
    PlanNode odd = PlanNode::make(NodeType::Unknown, 1.0, 1);
    odd.label = "Bitmap Heap Scan";
    FeaturizedTree t = featurize(f, {odd, Engine::TP});
    EXPECT_EQ(t.features(0, static_cast<Eigen::Index>(f.node_types.size() - 1)), 1.0);
}

TEST(Encode, MatchesStraightLineForwardPass) {
    Featurizer f = fitted_featurizer();
    HandNet h = hand_net(f.dim());
    RouterModel model{f, to_network(h, f.dim())};
    auto got = encode_plan(model, two_node(Engine::TP));
    Vec want = hand_encode(h, hand_features(f, "Filter", "", 10.0, 5.0),
                           hand_features(f, "Table Scan", "nation", 2.75, 25.0));
    for (std::size_t i = 0; i < kPlanDim; ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
}

TEST(Predict, MatchesStraightLineHead) {
    Featurizer f = fitted_featurizer();
    HandNet h = hand_net(f.dim());
    RouterModel model{f, to_network(h, f.dim())};
    PlanPair pair{two_node(Engine::AP), two_node(Engine::TP), std::nullopt};
    pair.ap_plan.root.total_cost = 400.0;
    Vec ap = hand_encode(h, hand_features(f, "Filter", "", 400.0, 5.0),
                         hand_features(f, "Table Scan", "nation", 2.75, 25.0));
    Vec tp = hand_encode(h, hand_features(f, "Filter", "", 10.0, 5.0),
                         hand_features(f, "Table Scan", "nation", 2.75, 25.0));
    Vec e = ap;
    e.insert(e.end(), tp.begin(), tp.end());
    Vec logits = add(matvec(h.ow, relu(add(matvec(h.hw, e), h.hb))), h.ob);
    double m = std::max(logits[0], logits[1]);
    double p_tp = std::exp(logits[0] - m) / (std::exp(logits[0] - m) + std::exp(logits[1] - m));

    auto emb = embed_pair(model, pair);
    for (std::size_t i = 0; i < kPairDim; ++i) EXPECT_NEAR(emb[i], e[i], 1e-9);
    auto p = predict(model, pair);
    EXPECT_NEAR(p.probabilities[0], p_tp, 1e-9);
    EXPECT_EQ(p.winner, logits[1] > logits[0] ? Engine::AP : Engine::TP);
}

TEST(Encode, ZeroWeightsGiveZeroVector) {
    Featurizer f = Featurizer::standard(SchemaCatalog::tpch());
    RouterModel model{f, RouterNetwork::zeros(f.dim())};
    for (double v : encode_plan(model, testsupport::example1_fixture_pair().tp_plan)) EXPECT_EQ(v, 0.0);
}

TEST(Encode, DeterministicBitwise) {
    RouterModel model = testsupport::reference_model();
    PlanPair pair = testsupport::example1_fixture_pair();
    EXPECT_TRUE(bitwise_equal(embed_pair(model, pair), embed_pair(model, pair)));
}

TEST(Encode, FeatureWidthMismatchIsVocabError) {
    RouterNetwork net = RouterNetwork::random(5, 1, 1.0);
    FeaturizedTree t = featurize(Featurizer::standard(SchemaCatalog::tpch()), two_node(Engine::TP));
    EXPECT_EQ(error_code_of([&] { encode_tree(net, t); }), "E_VOCAB");
}

TEST(EmbedPair, LengthAndSymmetry) {
    RouterModel model = testsupport::reference_model();
    for (const auto& e : testsupport::default_dataset().test) EXPECT_EQ(embed_pair(model, e.pair).size(), 16u);
    PlanTree t = two_node(Engine::TP);
    PlanTree a = t;
    a.engine = Engine::AP;
    auto emb = embed_pair(model, {a, t, std::nullopt});
    for (std::size_t i = 0; i < kPlanDim; ++i) EXPECT_EQ(emb[i], emb[i + kPlanDim]);
}

TEST(EmbedPair, GoldenVector) {
    auto golden = nlohmann::json::parse(read_file(testsupport::source_path("tests/data/example1_embedding.json")));
    RouterModel model = testsupport::reference_model();
    EXPECT_EQ(model.fingerprint(), golden.at("model_version").get<std::string>());
    auto emb = embed_pair(model, testsupport::example1_fixture_pair());
    auto want = golden.at("embedding").get<std::vector<double>>();
    EXPECT_TRUE(bitwise_equal(emb, want));
}

TEST(Predict, ZeroHeadIsTieResolvedToTp) {
    RouterModel model = testsupport::reference_model();
    model.network.hidden.weight.setZero();
    model.network.hidden.bias.setZero();
    model.network.output.weight.setZero();
    model.network.output.bias.setZero();
    auto p = predict(model, testsupport::example1_fixture_pair());
    EXPECT_EQ(p.probabilities[0], 0.5);
    EXPECT_EQ(p.probabilities[1], 0.5);
    EXPECT_EQ(p.winner, Engine::TP);
}

TEST(Predict, ReferenceModelPicksApOnPublishedExample) {
    RouterModel model = testsupport::reference_model();
    EXPECT_EQ(predict(model, testsupport::example1_fixture_pair()).winner, Engine::AP);
    auto generated = label_query(example1_query(), SchemaCatalog::tpch());
    EXPECT_EQ(predict(model, generated.pair).winner, Engine::AP);
}

TEST(Predict, ProbabilitiesSumToOne) {
    const auto catalog = SchemaCatalog::tpch();
    std::size_t n = 0;
    for (std::uint64_t seed = 1; n < 1000; ++seed) {
        RouterNetwork net = RouterNetwork::random(21, seed, 1.0);
        RouterModel model{Featurizer::standard(catalog), net};
        const auto& d = testsupport::default_dataset();
        const auto& e = d.train[seed % d.train.size()];
        auto p = predict(model, e.pair);
        EXPECT_NEAR(p.probabilities[0] + p.probabilities[1], 1.0, 1e-9);
        EXPECT_GE(p.probabilities[0], 0.0);
        EXPECT_GE(p.probabilities[1], 0.0);
        ++n;
    }
}

TEST(Gradient, AnalyticMatchesCentralDifferences) {
    const std::size_t d = 6;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(100 + s);
        RouterNetwork net = RouterNetwork::random(d, s + 1, 1.0);
        PairSample sample{tiny_tree(rng, d), tiny_tree(rng, d), static_cast<int>(s % 2)};
        RouterNetwork grad = RouterNetwork::zeros(d);
        loss_and_gradient(net, sample, &grad);
        RouterNetwork probe = net;
        auto params = probe.tensors();
        auto analytic = grad.tensors();
        double worst = 0.0;
        for (std::size_t t = 0; t < params.size(); ++t) {
            for (std::size_t i = 0; i < params[t].values.size(); ++i) {
                const double saved = params[t].values[i];
                const double h = 1e-5;
                params[t].values[i] = saved + h;
                double up = loss_and_gradient(probe, sample, nullptr);
                params[t].values[i] = saved - h;
                double down = loss_and_gradient(probe, sample, nullptr);
                params[t].values[i] = saved;
                double numeric = (up - down) / (2 * h);
                double scale = std::max(std::abs(numeric), std::abs(analytic[t].values[i]));
                if (scale < 1e-8) continue;
                worst = std::max(worst, std::abs(numeric - analytic[t].values[i]) / scale);
            }
        }
        EXPECT_LT(worst, 1e-4) << "seed " << s;
        EXPECT_LT(gradient_check(net, sample).max_relative_error, 1e-4) << "seed " << s;
    }
}

TEST(Train, LossDecreasesAndDeterministic) {
    const auto& d = testsupport::default_dataset();
    Hyperparams hp;
    hp.epochs = 20;
    auto a = train_router(d.train, {}, hp, SchemaCatalog::tpch());
    auto b = train_router(d.train, {}, hp, SchemaCatalog::tpch());
    EXPECT_LT(a.report.final_loss, a.report.initial_loss);
    EXPECT_EQ(a.report.epoch_loss.size(), 20u);
    EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
}

TEST(Train, DegenerateAndBadHyperparams) {
    const auto& d = testsupport::default_dataset();
    std::vector<LabeledExample> one_class;
    for (const auto& e : d.train)
        if (e.result.winner == Engine::AP) one_class.push_back(e);
    EXPECT_EQ(error_code_of([&] { train_router(one_class, {}, {}, SchemaCatalog::tpch()); }), "E_DEGENERATE");
    Hyperparams bad;
    bad.learning_rate = 0.0;
    EXPECT_EQ(error_code_of([&] { train_router(d.train, {}, bad, SchemaCatalog::tpch()); }), "E_PARAM");
    Hyperparams huge;
    huge.learning_rate = 1e6;
    huge.epochs = 3;
    EXPECT_EQ(error_code_of([&] { train_router(d.train, {}, huge, SchemaCatalog::tpch()); }), "E_DIVERGE");
}

TEST(ModelFile, RoundTripAndSize) {
    testsupport::TempDir dir;
    RouterModel model = testsupport::reference_model();
    save_model(model, dir.file("m.bin"));
    RouterModel back = load_model(dir.file("m.bin"));
    EXPECT_EQ(serialize_model(back), serialize_model(model));
    EXPECT_EQ(back.fingerprint(), model.fingerprint());
    EXPECT_LT(std::filesystem::file_size(dir.file("m.bin")), 1048576u);
}

TEST(ModelFile, VersionAndVocabularyErrors) {
    std::string text = serialize_model(testsupport::reference_model());
    std::string wrong_version = text;
    wrong_version.replace(wrong_version.find("htapx-router 1"), 14, "htapx-router 9");
    EXPECT_EQ(error_code_of([&] { deserialize_model(wrong_version); }), "E_VERSION");
    EXPECT_EQ(error_code_of([&] { deserialize_model(text.substr(0, text.size() / 2)); }), "E_VERSION");
    EXPECT_EQ(error_code_of([] { load_model("/nonexistent/router.bin"); }), "E_IO");
}
