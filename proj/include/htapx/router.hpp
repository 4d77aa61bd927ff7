#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htapx/plan.hpp"
#include "htapx/workload.hpp"

namespace htapx {

inline constexpr std::size_t kPlanDim = 8;
inline constexpr std::size_t kPairDim = 2 * kPlanDim;
inline constexpr std::size_t kConvHidden = 16;
inline constexpr std::size_t kHeadHidden = 8;
inline constexpr int kRouterFormatVersion = 1;

/// AP half first, then TP.
using PairEmbedding = std::vector<double>;

/// Per-node features: one-hot operator, one-hot relation, then z-scored
/// log1p(cost) and log1p(rows).
struct Featurizer {
    std::vector<std::string> node_types;  // vocabulary; last entry is UNKNOWN
    std::vector<std::string> tables;
    double cost_mean = 0.0;
    double cost_std = 1.0;
    double rows_mean = 0.0;
    double rows_std = 1.0;

    static Featurizer standard(const SchemaCatalog& catalog);

    std::size_t dim() const { return node_types.size() + tables.size() + 2; }

    /// Freezes normalization statistics from every node of the given plans.
    void fit(const std::vector<const PlanTree*>& plans);

    friend bool operator==(const Featurizer&, const Featurizer&) = default;
};

/// A plan as a node-feature matrix plus binary child links (-1 = missing).
struct FeaturizedTree {
    Eigen::MatrixXd features;  // one row per node, pre-order
    std::vector<int> left;
    std::vector<int> right;

    std::size_t size() const { return left.size(); }
};

FeaturizedTree featurize(const Featurizer& featurizer, const PlanTree& tree);

struct TreeConvLayer {
    Eigen::MatrixXd self;   // out x in
    Eigen::MatrixXd left;
    Eigen::MatrixXd right;
    Eigen::VectorXd bias;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

/// Two tree-convolution layers, max pooling, and a 16 -> 8 -> 2 head.
/// The same conv stack encodes both plans of a pair.
struct RouterNetwork {
    TreeConvLayer conv1;  // D -> 16
    TreeConvLayer conv2;  // 16 -> 8
    DenseLayer hidden;    // 16 -> 8
    DenseLayer output;    // 8 -> 2

    static RouterNetwork zeros(std::size_t input_dim);
    static RouterNetwork random(std::size_t input_dim, std::uint64_t seed, double scale);

    std::size_t input_dim() const { return static_cast<std::size_t>(conv1.self.cols()); }

    struct Tensor {
        std::string name;
        std::span<double> values;
    };
    /// Every parameter tensor, in a fixed order.
    std::vector<Tensor> tensors();
    std::size_t parameter_count() const;
};

struct RouterModel {
    Featurizer featurizer;
    RouterNetwork network;

    /// Content hash of the serialized model.
    std::string fingerprint() const;
};

/// Class index 0 is TP, 1 is AP.
struct Prediction {
    Engine winner = Engine::TP;
    std::array<double, 2> probabilities{};  // (TP, AP)
};

std::array<double, kPlanDim> encode_tree(const RouterNetwork& network, const FeaturizedTree& tree);
std::array<double, kPlanDim> encode_plan(const RouterModel& model, const PlanTree& tree);
PairEmbedding embed_pair(const RouterModel& model, const PlanPair& pair);
Prediction predict_embedding(const RouterNetwork& network, const PairEmbedding& embedding);
Prediction predict(const RouterModel& model, const PlanPair& pair);

/// A featurized training example.
struct PairSample {
    FeaturizedTree ap;
    FeaturizedTree tp;
    int label = 0;  // 0 = TP faster, 1 = AP faster
};

PairSample make_sample(const Featurizer& featurizer, const PlanPair& pair, Engine winner);

/// Cross-entropy loss and, when `gradient` is non-null, its analytic gradient
/// (accumulated into `gradient`, which must have the network's shapes).
double loss_and_gradient(const RouterNetwork& network, const PairSample& sample,
                         RouterNetwork* gradient);

struct Hyperparams {
    double learning_rate = 0.01;
    int epochs = 200;
    int batch_size = 16;
    double init_scale = 1.0;  // multiplier on He initialization
    std::uint64_t seed = 1;
    /// Extra copies of each example whose TP estimates are shrunk by up to
    /// 10^estimate_decades, so the router does not lean on raw TP magnitudes.
    int estimate_copies = 1;
    double estimate_decades = 3.0;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    std::vector<double> heldout_accuracy;  // empty without a held-out set
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double train_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    RouterModel model;
    TrainReport report;
};

/// Mini-batch SGD on cross-entropy. Deterministic for a fixed seed.
TrainResult train_router(const std::vector<LabeledExample>& train,
                         const std::vector<LabeledExample>& heldout,
                         const Hyperparams& hyperparams, const SchemaCatalog& catalog);

double accuracy(const RouterModel& model, const std::vector<LabeledExample>& examples);

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // both gradients below the flat threshold
    std::string worst_tensor;
};

/// Central finite differences (step 1e-5) for every parameter.
GradientCheckReport gradient_check(const RouterNetwork& network, const PairSample& sample,
                                   double step = 1e-5, double flat_threshold = 1e-8);

std::string serialize_model(const RouterModel& model);
RouterModel deserialize_model(const std::string& text);
void save_model(const RouterModel& model, const std::string& path);
RouterModel load_model(const std::string& path);

}  // namespace htapx
