#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace htapx {

enum class Engine { TP, AP };

std::string_view engine_name(Engine engine);
Engine parse_engine(std::string_view name);

/// Closed operator vocabulary. Anything outside it parses as Unknown.
enum class NodeType : std::uint8_t {
    TableScan,
    IndexScan,
    Filter,
    NestedLoopInnerJoin,
    InnerHashJoin,
    Hash,
    GroupAggregate,
    Aggregate,
    Sort,
    TopN,
    Unknown,
};

inline constexpr std::size_t kNodeTypeCount = 11;

/// Display labels, spelled as the engines print them.
std::string_view node_type_label(NodeType type);
/// Unrecognized labels map to NodeType::Unknown.
NodeType node_type_from_label(std::string_view label);
const std::array<NodeType, kNodeTypeCount>& all_node_types();

constexpr bool is_scan(NodeType type) {
    return type == NodeType::TableScan || type == NodeType::IndexScan;
}

struct PlanNode {
    NodeType node_type = NodeType::Unknown;
    /// Raw label as read; equals node_type_label() unless node_type is Unknown.
    std::string label;
    std::optional<std::string> relation_name;
    double total_cost = 0.0;
    std::int64_t plan_rows = 0;
    std::vector<PlanNode> children;

    static PlanNode make(NodeType type, double cost, std::int64_t rows,
                         std::vector<PlanNode> children = {});
    static PlanNode scan(NodeType type, std::string relation, double cost, std::int64_t rows);

    friend bool operator==(const PlanNode&, const PlanNode&) = default;
};

struct PlanTree {
    PlanNode root;
    Engine engine = Engine::TP;

    friend bool operator==(const PlanTree&, const PlanTree&) = default;
};

struct PlanPair {
    PlanTree ap_plan;
    PlanTree tp_plan;
    std::optional<std::string> query_text;

    /// Throws E_MISMATCH when the engine tags are swapped.
    void validate() const;

    friend bool operator==(const PlanPair&, const PlanPair&) = default;
};

struct ExecutionResult {
    Engine winner = Engine::TP;
    double tp_latency_ms = 0.0;
    double ap_latency_ms = 0.0;

    /// Winner is AP iff it was strictly faster; ties go to TP.
    static ExecutionResult from_latencies(double tp_latency_ms, double ap_latency_ms);

    friend bool operator==(const ExecutionResult&, const ExecutionResult&) = default;
};

struct ParseResult {
    PlanTree tree;
    std::vector<std::string> warnings;
};

/// Parses the JSON plan format ("Node Type", "Relation Name", "Total Cost",
/// "Plan Rows", "Plans"). Other keys are dropped.
ParseResult parse_plan_with_warnings(std::string_view text, Engine engine);
PlanTree parse_plan(std::string_view text, Engine engine);
PlanTree plan_from_json(const nlohmann::json& object, Engine engine,
                        std::vector<std::string>* warnings = nullptr);

nlohmann::json plan_to_json(const PlanNode& node);
/// Canonical serialization: two-space indented JSON.
std::string serialize_plan(const PlanTree& tree);

struct PlanStats {
    std::size_t node_count = 0;
    std::size_t max_depth = 0;
    std::map<std::string, std::size_t> node_type_counts;
    std::vector<std::string> scanned_relations;  // in pre-order, duplicates kept

    std::size_t count(NodeType type) const;
};

PlanStats plan_stats(const PlanTree& tree);

/// Wire forms shared by dataset files, the KB and the HTTP API.
nlohmann::json pair_to_json(const PlanPair& pair);
PlanPair pair_from_json(const nlohmann::json& object);
nlohmann::json result_to_json(const ExecutionResult& result);
ExecutionResult result_from_json(const nlohmann::json& object);

}  // namespace htapx
