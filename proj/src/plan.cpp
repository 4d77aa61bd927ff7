#include "htapx/plan.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "htapx/error.hpp"

namespace htapx {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNodeTypeCount> kLabels = {
    "Table Scan",
    "Index Scan",
    "Filter",
    "Nested loop inner join",
    "Inner hash join",
    "Hash",
    "Group aggregate",
    "Aggregate",
    "Sort",
    "TopN",
    "UNKNOWN",
};

constexpr const char* kNodeTypeKey = "Node Type";
constexpr const char* kRelationKey = "Relation Name";
constexpr const char* kCostKey = "Total Cost";
constexpr const char* kRowsKey = "Plan Rows";
constexpr const char* kPlansKey = "Plans";

PlanNode node_from_json(const json& object, const std::string& path,
                        std::vector<std::string>& warnings) {
    if (!object.is_object()) {
        throw Error(ErrorCode::Schema, path + " is not an object");
    }
    auto type_it = object.find(kNodeTypeKey);
    if (type_it == object.end()) {
        throw Error(ErrorCode::Schema, path + " lacks \"Node Type\"");
    }
    if (!type_it->is_string()) {
        throw Error(ErrorCode::Schema, path + " has a non-string \"Node Type\"");
    }

    PlanNode node;
    node.label = type_it->get<std::string>();
    node.node_type = node_type_from_label(node.label);
    if (node.node_type == NodeType::Unknown) {
        warnings.push_back(path + ": unknown node type '" + node.label + "'");
    }

    if (auto it = object.find(kRelationKey); it != object.end()) {
        if (!it->is_string()) {
            throw Error(ErrorCode::Schema, path + " has a non-string \"Relation Name\"");
        }
        if (is_scan(node.node_type) || node.node_type == NodeType::Unknown) {
            node.relation_name = it->get<std::string>();
        } else {
            warnings.push_back(path + ": dropped \"Relation Name\" on non-scan node");
        }
    } else if (is_scan(node.node_type)) {
        throw Error(ErrorCode::Schema, path + " is a scan without \"Relation Name\"");
    }

    if (auto it = object.find(kCostKey); it != object.end()) {
        if (!it->is_number()) {
            throw Error(ErrorCode::Schema, path + " has a non-numeric \"Total Cost\"");
        }
        node.total_cost = it->get<double>();
        if (!(node.total_cost >= 0.0) || !std::isfinite(node.total_cost)) {
            throw Error(ErrorCode::Schema, path + " has a negative or non-finite cost");
        }
    }
    if (auto it = object.find(kRowsKey); it != object.end()) {
        if (!it->is_number()) {
            throw Error(ErrorCode::Schema, path + " has a non-numeric \"Plan Rows\"");
        }
        if (it->is_number_integer()) {
            node.plan_rows = it->get<std::int64_t>();
        } else {
            double rows = it->get<double>();
            if (!std::isfinite(rows)) {
                throw Error(ErrorCode::Schema, path + " has non-finite \"Plan Rows\"");
            }
            node.plan_rows = static_cast<std::int64_t>(std::llround(rows));
        }
        if (node.plan_rows < 0) {
            throw Error(ErrorCode::Schema, path + " has negative \"Plan Rows\"");
        }
    }
    if (auto it = object.find(kPlansKey); it != object.end()) {
        if (!it->is_array()) {
            throw Error(ErrorCode::Schema, path + " has a non-array \"Plans\"");
        }
        if (it->size() > 2) {
            throw Error(ErrorCode::Arity,
                        path + " has " + std::to_string(it->size()) + " children");
        }
        for (std::size_t i = 0; i < it->size(); ++i) {
            node.children.push_back(
                node_from_json((*it)[i], path + ".Plans[" + std::to_string(i) + "]", warnings));
        }
    }
    return node;
}

void collect_stats(const PlanNode& node, std::size_t depth, PlanStats& stats) {
    ++stats.node_count;
    stats.max_depth = std::max(stats.max_depth, depth);
    ++stats.node_type_counts[node.label];
    if (node.relation_name) {
        stats.scanned_relations.push_back(*node.relation_name);
    }
    for (const auto& child : node.children) {
        collect_stats(child, depth + 1, stats);
    }
}

}  // namespace

std::string_view engine_name(Engine engine) {
    return engine == Engine::AP ? "AP" : "TP";
}

Engine parse_engine(std::string_view name) {
    if (name == "AP" || name == "ap") return Engine::AP;
    if (name == "TP" || name == "tp") return Engine::TP;
    throw Error(ErrorCode::Param, "unknown engine '" + std::string(name) + "'");
}

std::string_view node_type_label(NodeType type) {
    return kLabels[static_cast<std::size_t>(type)];
}

NodeType node_type_from_label(std::string_view label) {
    for (std::size_t i = 0; i + 1 < kLabels.size(); ++i) {
        if (kLabels[i] == label) {
            return static_cast<NodeType>(i);
        }
    }
    return NodeType::Unknown;
}

const std::array<NodeType, kNodeTypeCount>& all_node_types() {
    static const std::array<NodeType, kNodeTypeCount> types = [] {
        std::array<NodeType, kNodeTypeCount> out{};
        for (std::size_t i = 0; i < kNodeTypeCount; ++i) {
            out[i] = static_cast<NodeType>(i);
        }
        return out;
    }();
    return types;
}

PlanNode PlanNode::make(NodeType type, double cost, std::int64_t rows,
                        std::vector<PlanNode> children) {
    PlanNode node;
    node.node_type = type;
    node.label = std::string(node_type_label(type));
    node.total_cost = cost;
    node.plan_rows = rows;
    node.children = std::move(children);
    return node;
}

PlanNode PlanNode::scan(NodeType type, std::string relation, double cost, std::int64_t rows) {
    PlanNode node = make(type, cost, rows);
    node.relation_name = std::move(relation);
    return node;
}

void PlanPair::validate() const {
    if (ap_plan.engine != Engine::AP || tp_plan.engine != Engine::TP) {
        throw Error(ErrorCode::Mismatch, "plan pair must hold (AP, TP) plans in that order");
    }
}

ExecutionResult ExecutionResult::from_latencies(double tp_latency_ms, double ap_latency_ms) {
    ExecutionResult result;
    result.tp_latency_ms = tp_latency_ms;
    result.ap_latency_ms = ap_latency_ms;
    result.winner = ap_latency_ms < tp_latency_ms ? Engine::AP : Engine::TP;
    return result;
}

PlanTree plan_from_json(const json& object, Engine engine, std::vector<std::string>* warnings) {
    std::vector<std::string> local;
    PlanTree tree;
    tree.engine = engine;
    tree.root = node_from_json(object, "$", warnings ? *warnings : local);
    return tree;
}

ParseResult parse_plan_with_warnings(std::string_view text, Engine engine) {
    json object;
    try {
        object = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Syntax, e.what());
    }
    ParseResult result;
    result.tree = plan_from_json(object, engine, &result.warnings);
    return result;
}

PlanTree parse_plan(std::string_view text, Engine engine) {
    return parse_plan_with_warnings(text, engine).tree;
}

json plan_to_json(const PlanNode& node) {
    json object = json::object();
    object[kNodeTypeKey] = node.label.empty() ? std::string(node_type_label(node.node_type))
                                              : node.label;
    if (node.relation_name) {
        object[kRelationKey] = *node.relation_name;
    }
    object[kCostKey] = node.total_cost;
    object[kRowsKey] = node.plan_rows;
    if (!node.children.empty()) {
        json plans = json::array();
        for (const auto& child : node.children) {
            plans.push_back(plan_to_json(child));
        }
        object[kPlansKey] = std::move(plans);
    }
    return object;
}

std::string serialize_plan(const PlanTree& tree) {
    return plan_to_json(tree.root).dump(2);
}

std::size_t PlanStats::count(NodeType type) const {
    auto it = node_type_counts.find(std::string(node_type_label(type)));
    return it == node_type_counts.end() ? 0 : it->second;
}

PlanStats plan_stats(const PlanTree& tree) {
    PlanStats stats;
    collect_stats(tree.root, 1, stats);
    return stats;
}

json pair_to_json(const PlanPair& pair) {
    json object = json::object();
    if (pair.query_text) {
        object["query_text"] = *pair.query_text;
    }
    object["ap_plan"] = plan_to_json(pair.ap_plan.root);
    object["tp_plan"] = plan_to_json(pair.tp_plan.root);
    return object;
}

PlanPair pair_from_json(const json& object) {
    if (!object.is_object() || !object.contains("ap_plan") || !object.contains("tp_plan")) {
        throw Error(ErrorCode::Schema, "plan pair needs \"ap_plan\" and \"tp_plan\"");
    }
    PlanPair pair;
    pair.ap_plan = plan_from_json(object.at("ap_plan"), Engine::AP);
    pair.tp_plan = plan_from_json(object.at("tp_plan"), Engine::TP);
    if (auto it = object.find("query_text"); it != object.end() && it->is_string()) {
        pair.query_text = it->get<std::string>();
    }
    return pair;
}

json result_to_json(const ExecutionResult& result) {
    return json{{"winner", engine_name(result.winner)},
                {"tp_latency_ms", result.tp_latency_ms},
                {"ap_latency_ms", result.ap_latency_ms}};
}

ExecutionResult result_from_json(const json& object) {
    if (!object.is_object() || !object.contains("tp_latency_ms") ||
        !object.contains("ap_latency_ms")) {
        throw Error(ErrorCode::Schema, "execution result needs tp_latency_ms and ap_latency_ms");
    }
    double tp = object.at("tp_latency_ms").get<double>();
    double ap = object.at("ap_latency_ms").get<double>();
    if (!(tp > 0.0) || !(ap > 0.0)) {
        throw Error(ErrorCode::Schema, "latencies must be positive");
    }
    ExecutionResult result = ExecutionResult::from_latencies(tp, ap);
    if (auto it = object.find("winner"); it != object.end()) {
        if (parse_engine(it->get<std::string>()) != result.winner) {
            throw Error(ErrorCode::Schema, "winner disagrees with latencies");
        }
    }
    return result;
}

}  // namespace htapx
