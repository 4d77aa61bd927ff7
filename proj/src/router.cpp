#include "htapx/router.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Featurization

Featurizer Featurizer::standard(const SchemaCatalog& catalog) {
    Featurizer f;
    for (NodeType type : all_node_types()) {
        f.node_types.emplace_back(node_type_label(type));
    }
    f.tables = catalog.table_names();
    return f;
}

void Featurizer::fit(const std::vector<const PlanTree*>& plans) {
    double cost_sum = 0, cost_sq = 0, rows_sum = 0, rows_sq = 0;
    std::size_t n = 0;
    std::function<void(const PlanNode&)> visit = [&](const PlanNode& node) {
        double c = std::log1p(node.total_cost);
        double r = std::log1p(static_cast<double>(node.plan_rows));
        cost_sum += c;
        cost_sq += c * c;
        rows_sum += r;
        rows_sq += r * r;
        ++n;
        for (const auto& child : node.children) visit(child);
    };
    for (const PlanTree* plan : plans) visit(plan->root);
    if (n == 0) return;
    const double dn = static_cast<double>(n);
    cost_mean = cost_sum / dn;
    rows_mean = rows_sum / dn;
    double cost_var = std::max(0.0, cost_sq / dn - cost_mean * cost_mean);
    double rows_var = std::max(0.0, rows_sq / dn - rows_mean * rows_mean);
    cost_std = cost_var > 1e-12 ? std::sqrt(cost_var) : 1.0;
    rows_std = rows_var > 1e-12 ? std::sqrt(rows_var) : 1.0;
}

FeaturizedTree featurize(const Featurizer& featurizer, const PlanTree& tree) {
    std::vector<const PlanNode*> nodes;
    FeaturizedTree out;
    std::function<int(const PlanNode&)> visit = [&](const PlanNode& node) -> int {
        int index = static_cast<int>(nodes.size());
        nodes.push_back(&node);
        out.left.push_back(-1);
        out.right.push_back(-1);
        if (!node.children.empty()) out.left[index] = visit(node.children[0]);
        if (node.children.size() > 1) out.right[index] = visit(node.children[1]);
        return index;
    };
    visit(tree.root);

    const std::size_t types = featurizer.node_types.size();
    const std::size_t tables = featurizer.tables.size();
    out.features = MatrixXd::Zero(static_cast<Eigen::Index>(nodes.size()),
                                  static_cast<Eigen::Index>(featurizer.dim()));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const PlanNode& node = *nodes[i];
        const auto row = static_cast<Eigen::Index>(i);
        auto type_it = std::find(featurizer.node_types.begin(), featurizer.node_types.end(),
                                 node.label);
        std::size_t type_index = type_it == featurizer.node_types.end()
                                     ? types - 1
                                     : static_cast<std::size_t>(type_it - featurizer.node_types.begin());
        out.features(row, static_cast<Eigen::Index>(type_index)) = 1.0;
        if (node.relation_name) {
            auto t = std::find(featurizer.tables.begin(), featurizer.tables.end(),
                               *node.relation_name);
            if (t != featurizer.tables.end()) {
                out.features(row, static_cast<Eigen::Index>(
                                      types + static_cast<std::size_t>(t - featurizer.tables.begin()))) = 1.0;
            }
        }
        out.features(row, static_cast<Eigen::Index>(types + tables)) =
            (std::log1p(node.total_cost) - featurizer.cost_mean) / featurizer.cost_std;
        out.features(row, static_cast<Eigen::Index>(types + tables + 1)) =
            (std::log1p(static_cast<double>(node.plan_rows)) - featurizer.rows_mean) /
            featurizer.rows_std;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network

namespace {

TreeConvLayer conv_zeros(std::size_t in, std::size_t out) {
    auto r = static_cast<Eigen::Index>(out);
    auto c = static_cast<Eigen::Index>(in);
    return {MatrixXd::Zero(r, c), MatrixXd::Zero(r, c), MatrixXd::Zero(r, c), VectorXd::Zero(r)};
}

DenseLayer dense_zeros(std::size_t in, std::size_t out) {
    return {MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
            VectorXd::Zero(static_cast<Eigen::Index>(out))};
}

std::span<double> span_of(MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

MatrixXd gather(const MatrixXd& rows, const std::vector<int>& index) {
    MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(index.size()), rows.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= 0) out.row(static_cast<Eigen::Index>(i)) = rows.row(index[i]);
    }
    return out;
}

void scatter_add(MatrixXd& target, const MatrixXd& rows, const std::vector<int>& index) {
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= 0) target.row(index[i]) += rows.row(static_cast<Eigen::Index>(i));
    }
}

MatrixXd conv_forward(const TreeConvLayer& layer, const MatrixXd& x, const MatrixXd& xl,
                      const MatrixXd& xr) {
    MatrixXd z = x * layer.self.transpose() + xl * layer.left.transpose() +
                 xr * layer.right.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

struct PlanCache {
    MatrixXd xl, xr;
    MatrixXd z1, h1, h1l, h1r;
    MatrixXd z2;
    std::array<Eigen::Index, kPlanDim> argmax{};
    VectorXd pooled;
};

PlanCache forward_plan(const RouterNetwork& net, const FeaturizedTree& tree) {
    if (static_cast<std::size_t>(tree.features.cols()) != net.input_dim()) {
        throw Error(ErrorCode::Vocab, "feature dimension " + std::to_string(tree.features.cols()) +
                                          " does not match model input " +
                                          std::to_string(net.input_dim()));
    }
    PlanCache c;
    c.xl = gather(tree.features, tree.left);
    c.xr = gather(tree.features, tree.right);
    c.z1 = conv_forward(net.conv1, tree.features, c.xl, c.xr);
    c.h1 = c.z1.cwiseMax(0.0);
    c.h1l = gather(c.h1, tree.left);
    c.h1r = gather(c.h1, tree.right);
    c.z2 = conv_forward(net.conv2, c.h1, c.h1l, c.h1r);
    c.pooled = VectorXd(static_cast<Eigen::Index>(kPlanDim));
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(kPlanDim); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < c.z2.rows(); ++i) {
            if (c.z2(i, j) > c.z2(best, j)) best = i;
        }
        c.argmax[static_cast<std::size_t>(j)] = best;
        c.pooled(j) = c.z2(best, j);
    }
    return c;
}

void backward_plan(const RouterNetwork& net, const FeaturizedTree& tree, const PlanCache& c,
                   const VectorXd& d_pooled, RouterNetwork& grad) {
    MatrixXd dz2 = MatrixXd::Zero(c.z2.rows(), c.z2.cols());
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(kPlanDim); ++j) {
        dz2(c.argmax[static_cast<std::size_t>(j)], j) += d_pooled(j);
    }
    grad.conv2.self += dz2.transpose() * c.h1;
    grad.conv2.left += dz2.transpose() * c.h1l;
    grad.conv2.right += dz2.transpose() * c.h1r;
    grad.conv2.bias += dz2.colwise().sum().transpose();

    MatrixXd dh1 = dz2 * net.conv2.self;
    scatter_add(dh1, dz2 * net.conv2.left, tree.left);
    scatter_add(dh1, dz2 * net.conv2.right, tree.right);
    MatrixXd dz1 = dh1.cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());

    grad.conv1.self += dz1.transpose() * tree.features;
    grad.conv1.left += dz1.transpose() * c.xl;
    grad.conv1.right += dz1.transpose() * c.xr;
    grad.conv1.bias += dz1.colwise().sum().transpose();
}

struct HeadCache {
    VectorXd embedding, u, h, logits, probs;
};

HeadCache forward_head(const RouterNetwork& net, const VectorXd& embedding) {
    HeadCache c;
    c.embedding = embedding;
    c.u = net.hidden.weight * embedding + net.hidden.bias;
    c.h = c.u.cwiseMax(0.0);
    c.logits = net.output.weight * c.h + net.output.bias;
    double m = c.logits.maxCoeff();
    VectorXd e = (c.logits.array() - m).exp().matrix();
    c.probs = e / e.sum();
    return c;
}

VectorXd concat(const VectorXd& a, const VectorXd& b) {
    VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
}

}  // namespace

RouterNetwork RouterNetwork::zeros(std::size_t input_dim) {
    return {conv_zeros(input_dim, kConvHidden), conv_zeros(kConvHidden, kPlanDim),
            dense_zeros(kPairDim, kHeadHidden), dense_zeros(kHeadHidden, 2)};
}

RouterNetwork RouterNetwork::random(std::size_t input_dim, std::uint64_t seed, double scale) {
    RouterNetwork net = zeros(input_dim);
    Rng rng(seed);
    // He initialization, multiplied by `scale`.
    auto fill = [&](Eigen::MatrixXd& m, double fan_in) {
        const double sd = scale * std::sqrt(2.0 / fan_in);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
    };
    const double conv1_fan = 3.0 * static_cast<double>(input_dim);
    fill(net.conv1.self, conv1_fan);
    fill(net.conv1.left, conv1_fan);
    fill(net.conv1.right, conv1_fan);
    fill(net.conv2.self, 3.0 * kConvHidden);
    fill(net.conv2.left, 3.0 * kConvHidden);
    fill(net.conv2.right, 3.0 * kConvHidden);
    fill(net.hidden.weight, static_cast<double>(kPairDim));
    fill(net.output.weight, static_cast<double>(kHeadHidden));
    return net;
}

std::vector<RouterNetwork::Tensor> RouterNetwork::tensors() {
    return {{"conv1.self", span_of(conv1.self)},   {"conv1.left", span_of(conv1.left)},
            {"conv1.right", span_of(conv1.right)}, {"conv1.bias", span_of(conv1.bias)},
            {"conv2.self", span_of(conv2.self)},   {"conv2.left", span_of(conv2.left)},
            {"conv2.right", span_of(conv2.right)}, {"conv2.bias", span_of(conv2.bias)},
            {"hidden.weight", span_of(hidden.weight)}, {"hidden.bias", span_of(hidden.bias)},
            {"output.weight", span_of(output.weight)}, {"output.bias", span_of(output.bias)}};
}

std::size_t RouterNetwork::parameter_count() const {
    auto copy = *this;
    std::size_t n = 0;
    for (const auto& t : copy.tensors()) n += t.values.size();
    return n;
}

std::string RouterModel::fingerprint() const {
    return hex64(fnv1a64(serialize_model(*this)));
}

std::array<double, kPlanDim> encode_tree(const RouterNetwork& network, const FeaturizedTree& tree) {
    PlanCache c = forward_plan(network, tree);
    std::array<double, kPlanDim> out{};
    for (std::size_t j = 0; j < kPlanDim; ++j) out[j] = c.pooled(static_cast<Eigen::Index>(j));
    return out;
}

std::array<double, kPlanDim> encode_plan(const RouterModel& model, const PlanTree& tree) {
    if (model.featurizer.dim() != model.network.input_dim()) {
        throw Error(ErrorCode::Vocab, "featurizer and network disagree on input dimension");
    }
    return encode_tree(model.network, featurize(model.featurizer, tree));
}

PairEmbedding embed_pair(const RouterModel& model, const PlanPair& pair) {
    auto ap = encode_plan(model, pair.ap_plan);
    auto tp = encode_plan(model, pair.tp_plan);
    PairEmbedding out(ap.begin(), ap.end());
    out.insert(out.end(), tp.begin(), tp.end());
    return out;
}

Prediction predict_embedding(const RouterNetwork& network, const PairEmbedding& embedding) {
    if (embedding.size() != kPairDim) {
        throw Error(ErrorCode::Dim, "pair embedding must have 16 entries");
    }
    VectorXd e = Eigen::Map<const VectorXd>(embedding.data(), static_cast<Eigen::Index>(kPairDim));
    HeadCache c = forward_head(network, e);
    Prediction p;
    p.probabilities = {c.probs(0), c.probs(1)};
    p.winner = p.probabilities[1] > p.probabilities[0] ? Engine::AP : Engine::TP;
    return p;
}

Prediction predict(const RouterModel& model, const PlanPair& pair) {
    return predict_embedding(model.network, embed_pair(model, pair));
}

PairSample make_sample(const Featurizer& featurizer, const PlanPair& pair, Engine winner) {
    return {featurize(featurizer, pair.ap_plan), featurize(featurizer, pair.tp_plan),
            winner == Engine::AP ? 1 : 0};
}

double loss_and_gradient(const RouterNetwork& network, const PairSample& sample,
                         RouterNetwork* gradient) {
    PlanCache ap = forward_plan(network, sample.ap);
    PlanCache tp = forward_plan(network, sample.tp);
    HeadCache head = forward_head(network, concat(ap.pooled, tp.pooled));
    const double p = std::max(head.probs(sample.label), 1e-300);
    const double loss = -std::log(p);
    if (!gradient) return loss;

    RouterNetwork& g = *gradient;
    VectorXd d_logits = head.probs;
    d_logits(sample.label) -= 1.0;
    g.output.weight += d_logits * head.h.transpose();
    g.output.bias += d_logits;
    VectorXd dh = network.output.weight.transpose() * d_logits;
    VectorXd du = dh.cwiseProduct((head.u.array() > 0.0).cast<double>().matrix());
    g.hidden.weight += du * head.embedding.transpose();
    g.hidden.bias += du;
    VectorXd de = network.hidden.weight.transpose() * du;

    const auto half = static_cast<Eigen::Index>(kPlanDim);
    backward_plan(network, sample.ap, ap, de.head(half), g);
    backward_plan(network, sample.tp, tp, de.tail(half), g);
    return loss;
}

// ---------------------------------------------------------------------------
// Training

void Hyperparams::validate() const {
    if (!(learning_rate > 0.0) || epochs <= 0 || batch_size <= 0 || !(init_scale > 0.0)) {
        throw Error(ErrorCode::Param, "hyperparameters must be positive");
    }
    if (estimate_copies < 0 || !(estimate_decades >= 0.0)) {
        throw Error(ErrorCode::Param, "estimate augmentation must be non-negative");
    }
}

double accuracy(const RouterModel& model, const std::vector<LabeledExample>& examples) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& e : examples) {
        if (predict(model, e.pair).winner == e.result.winner) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

namespace {

void shrink_estimates(PlanNode& node, double factor) {
    node.total_cost *= factor;
    node.plan_rows = std::max<std::int64_t>(1, std::llround(static_cast<double>(node.plan_rows) * factor));
    for (auto& child : node.children) shrink_estimates(child, factor);
}

}  // namespace

TrainResult train_router(const std::vector<LabeledExample>& train,
                         const std::vector<LabeledExample>& heldout,
                         const Hyperparams& hp, const SchemaCatalog& catalog) {
    hp.validate();
    if (train.empty()) {
        throw Error(ErrorCode::Degenerate, "empty training set");
    }
    auto ap_count = std::count_if(train.begin(), train.end(), [](const LabeledExample& e) {
        return e.result.winner == Engine::AP;
    });
    if (ap_count == 0 || ap_count == static_cast<std::ptrdiff_t>(train.size())) {
        throw Error(ErrorCode::Degenerate, "training set holds a single class");
    }

    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    RouterModel& model = result.model;
    model.featurizer = Featurizer::standard(catalog);
    std::vector<const PlanTree*> plans;
    for (const auto& e : train) {
        plans.push_back(&e.pair.ap_plan);
        plans.push_back(&e.pair.tp_plan);
    }
    model.featurizer.fit(plans);
    model.network = RouterNetwork::random(model.featurizer.dim(), hp.seed, hp.init_scale);

    std::vector<PairSample> samples;
    samples.reserve(train.size() * static_cast<std::size_t>(1 + hp.estimate_copies));
    for (const auto& e : train) {
        samples.push_back(make_sample(model.featurizer, e.pair, e.result.winner));
    }
    Rng jitter(splitmix64(hp.seed ^ 0xE571ULL));
    for (int c = 0; c < hp.estimate_copies; ++c) {
        for (const auto& e : train) {
            PlanPair shrunk = e.pair;
            shrink_estimates(shrunk.tp_plan.root, std::pow(10.0, -jitter.uniform(0.0, hp.estimate_decades)));
            samples.push_back(make_sample(model.featurizer, shrunk, e.result.winner));
        }
    }

    auto mean_loss = [&] {
        double total = 0.0;
        for (const auto& s : samples) total += loss_and_gradient(model.network, s, nullptr);
        return total / static_cast<double>(samples.size());
    };
    result.report.initial_loss = mean_loss();

    Rng rng(splitmix64(hp.seed ^ 0x5EEDULL));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = static_cast<std::size_t>(hp.batch_size);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_total = 0.0;
        for (std::size_t b = 0; b < order.size(); b += batch) {
            const std::size_t end = std::min(order.size(), b + batch);
            RouterNetwork grad = RouterNetwork::zeros(model.network.input_dim());
            for (std::size_t k = b; k < end; ++k) {
                epoch_total += loss_and_gradient(model.network, samples[order[k]], &grad);
            }
            const double step = hp.learning_rate / static_cast<double>(end - b);
            auto params = model.network.tensors();
            auto grads = grad.tensors();
            for (std::size_t t = 0; t < params.size(); ++t) {
                for (std::size_t i = 0; i < params[t].values.size(); ++i) {
                    params[t].values[i] -= step * grads[t].values[i];
                }
            }
        }
        double epoch_loss = epoch_total / static_cast<double>(samples.size());
        if (!std::isfinite(epoch_loss)) {
            throw Error(ErrorCode::Diverge, "non-finite loss at epoch " + std::to_string(epoch));
        }
        result.report.epoch_loss.push_back(epoch_loss);
        if (!heldout.empty()) {
            result.report.heldout_accuracy.push_back(accuracy(model, heldout));
        }
    }
    result.report.final_loss = mean_loss();
    if (!std::isfinite(result.report.final_loss)) {
        throw Error(ErrorCode::Diverge, "non-finite final loss");
    }
    result.report.train_accuracy = accuracy(model, train);
    result.report.seconds = elapsed_ms(start, std::chrono::steady_clock::now()) / 1000.0;
    return result;
}

// ---------------------------------------------------------------------------
// Gradient check

GradientCheckReport gradient_check(const RouterNetwork& network, const PairSample& sample,
                                   double step, double flat_threshold) {
    RouterNetwork analytic = RouterNetwork::zeros(network.input_dim());
    loss_and_gradient(network, sample, &analytic);

    RouterNetwork probe = network;
    auto params = probe.tensors();
    auto grads = analytic.tensors();
    GradientCheckReport report;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].values.size(); ++i) {
            double& w = params[t].values[i];
            const double saved = w;
            w = saved + step;
            double plus = loss_and_gradient(probe, sample, nullptr);
            w = saved - step;
            double minus = loss_and_gradient(probe, sample, nullptr);
            w = saved;
            const double numeric = (plus - minus) / (2.0 * step);
            const double exact = grads[t].values[i];
            const double scale = std::max(std::abs(numeric), std::abs(exact));
            if (scale < flat_threshold) {
                ++report.skipped;
                continue;
            }
            ++report.checked;
            double rel = std::abs(numeric - exact) / scale;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_tensor = params[t].name;
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kMagic = "htapx-router";

void write_tensor(std::ostringstream& out, const std::string& name, const double* data,
                  Eigen::Index rows, Eigen::Index cols) {
    out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
        out << format_double(data[i]) << ((i + 1) % cols == 0 ? '\n' : ' ');
    }
}

class Reader {
public:
    explicit Reader(const std::string& text) : in_(text) {}

    std::string line() {
        std::string l;
        if (!std::getline(in_, l)) {
            throw Error(ErrorCode::Version, "model file ends early");
        }
        return l;
    }

    std::string expect(const std::string& prefix) {
        std::string l = line();
        if (l.rfind(prefix + " ", 0) != 0) {
            throw Error(ErrorCode::Version, "expected '" + prefix + "' in model file");
        }
        return l.substr(prefix.size() + 1);
    }

    void tensor(const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
        std::istringstream header(expect("tensor"));
        std::string got;
        Eigen::Index r = -1, c = -1;
        header >> got >> r >> c;
        if (got != name || r != rows || c != cols) {
            throw Error(ErrorCode::Version, "tensor " + name + " has unexpected shape");
        }
        for (Eigen::Index i = 0; i < rows; ++i) {
            std::istringstream values(line());
            for (Eigen::Index j = 0; j < cols; ++j) {
                std::string token;
                if (!(values >> token)) {
                    throw Error(ErrorCode::Version, "tensor " + name + " is truncated");
                }
                char* end = nullptr;
                double v = std::strtod(token.c_str(), &end);
                if (end == token.c_str() || *end != '\0' || !std::isfinite(v)) {
                    throw Error(ErrorCode::Version, "tensor " + name + " holds a bad value");
                }
                data[i * cols + j] = v;
            }
        }
    }

private:
    std::istringstream in_;
};

}  // namespace

std::string serialize_model(const RouterModel& model) {
    std::ostringstream out;
    out << kMagic << ' ' << kRouterFormatVersion << '\n';
    out << "input_dim " << model.network.input_dim() << '\n';
    out << "node_types " << model.featurizer.node_types.size() << '\n';
    for (const auto& t : model.featurizer.node_types) out << "node_type " << t << '\n';
    out << "tables " << model.featurizer.tables.size() << '\n';
    for (const auto& t : model.featurizer.tables) out << "table " << t << '\n';
    out << "norm " << format_double(model.featurizer.cost_mean) << ' '
        << format_double(model.featurizer.cost_std) << ' '
        << format_double(model.featurizer.rows_mean) << ' '
        << format_double(model.featurizer.rows_std) << '\n';
    // Row-major dump regardless of Eigen's storage order.
    RouterNetwork copy = model.network;
    for (auto& tensor : copy.tensors()) {
        (void)tensor;
    }
    auto dump = [&](const std::string& name, const MatrixXd& m) {
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
        write_tensor(out, name, rm.data(), rm.rows(), rm.cols());
    };
    const auto& n = model.network;
    dump("conv1.self", n.conv1.self);
    dump("conv1.left", n.conv1.left);
    dump("conv1.right", n.conv1.right);
    dump("conv1.bias", n.conv1.bias);
    dump("conv2.self", n.conv2.self);
    dump("conv2.left", n.conv2.left);
    dump("conv2.right", n.conv2.right);
    dump("conv2.bias", n.conv2.bias);
    dump("hidden.weight", n.hidden.weight);
    dump("hidden.bias", n.hidden.bias);
    dump("output.weight", n.output.weight);
    dump("output.bias", n.output.bias);
    out << "end\n";
    return out.str();
}

RouterModel deserialize_model(const std::string& text) {
    Reader in(text);
    std::string header = in.line();
    if (header != std::string(kMagic) + " " + std::to_string(kRouterFormatVersion)) {
        throw Error(ErrorCode::Version, "unsupported model header '" + header.substr(0, 40) + "'");
    }
    RouterModel model;
    std::size_t input_dim = 0;
    try {
        input_dim = std::stoul(in.expect("input_dim"));
        std::size_t types = std::stoul(in.expect("node_types"));
        for (std::size_t i = 0; i < types; ++i) {
            model.featurizer.node_types.push_back(in.expect("node_type"));
        }
        std::size_t tables = std::stoul(in.expect("tables"));
        for (std::size_t i = 0; i < tables; ++i) {
            model.featurizer.tables.push_back(in.expect("table"));
        }
        std::istringstream norm(in.expect("norm"));
        norm >> model.featurizer.cost_mean >> model.featurizer.cost_std >>
            model.featurizer.rows_mean >> model.featurizer.rows_std;
        if (!norm) throw Error(ErrorCode::Version, "bad normalization line");
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::Version, "malformed model header");
    }
    if (model.featurizer.node_types.empty() || model.featurizer.dim() != input_dim) {
        throw Error(ErrorCode::Vocab, "vocabulary does not match input dimension");
    }
    model.network = RouterNetwork::zeros(input_dim);
    auto load = [&](const std::string& name, auto& m) {
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.rows(), m.cols());
        in.tensor(name, rm.data(), rm.rows(), rm.cols());
        m = rm;
    };
    auto& n = model.network;
    load("conv1.self", n.conv1.self);
    load("conv1.left", n.conv1.left);
    load("conv1.right", n.conv1.right);
    load("conv1.bias", n.conv1.bias);
    load("conv2.self", n.conv2.self);
    load("conv2.left", n.conv2.left);
    load("conv2.right", n.conv2.right);
    load("conv2.bias", n.conv2.bias);
    load("hidden.weight", n.hidden.weight);
    load("hidden.bias", n.hidden.bias);
    load("output.weight", n.output.weight);
    load("output.bias", n.output.bias);
    if (in.line() != "end") {
        throw Error(ErrorCode::Version, "missing end marker");
    }
    return model;
}

void save_model(const RouterModel& model, const std::string& path) {
    write_file_atomic(path, serialize_model(model));
}

RouterModel load_model(const std::string& path) {
    return deserialize_model(read_file(path));
}

}  // namespace htapx
