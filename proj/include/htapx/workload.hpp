#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "htapx/plan.hpp"
#include "json.hpp"

namespace htapx {

enum class ColumnKind { Key, Integer, Decimal, Text, Date };

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Integer;
    /// Distinct values, used to pick equality selectivities.
    std::int64_t distinct = 0;
};

struct TableInfo {
    std::string name;
    std::int64_t row_count = 0;
    int column_count = 0;
    std::vector<Column> columns;  // the subset the generator references
    std::set<std::string> indexed_columns;
    /// Leading primary-key column; the TP engine probes it in index nested loops.
    std::string primary_key;

    const Column* find_column(const std::string& name) const;
    bool indexed(const std::string& column) const { return indexed_columns.count(column) > 0; }
};

/// A foreign-key edge: fk_table.fk_column references pk_table.pk_column.
struct JoinEdge {
    std::string fk_table;
    std::string fk_column;
    std::string pk_table;
    std::string pk_column;
};

class SchemaCatalog {
public:
    /// TPC-H at 100 GB scale, plus the extra c_phone index.
    static SchemaCatalog tpch();

    const std::vector<TableInfo>& tables() const { return tables_; }
    const std::vector<JoinEdge>& edges() const { return edges_; }
    const TableInfo& table(const std::string& name) const;
    bool has_table(const std::string& name) const;
    std::vector<std::string> table_names() const;
    /// Table owning a column, by TPC-H column prefix.
    const TableInfo& table_of_column(const std::string& column) const;
    std::optional<JoinEdge> edge_between(const std::string& a, const std::string& b) const;

    void add_index(const std::string& table, const std::string& column);

private:
    std::vector<TableInfo> tables_;
    std::vector<JoinEdge> edges_;
};

enum class QueryPattern { Join, TopN };

std::string_view pattern_name(QueryPattern pattern);
QueryPattern parse_pattern(std::string_view name);

struct Predicate {
    std::string column;
    double selectivity = 1.0;
    bool sargable = true;
    /// Rendered SQL condition.
    std::string text;

    friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct JoinKey {
    std::string left_column;
    std::string right_column;

    friend bool operator==(const JoinKey&, const JoinKey&) = default;
};

struct TopNClause {
    std::string order_by;
    std::int64_t limit = 1;
    std::int64_t offset = 0;

    friend bool operator==(const TopNClause&, const TopNClause&) = default;
};

struct QuerySpec {
    QueryPattern pattern = QueryPattern::Join;
    std::vector<std::string> tables;
    std::vector<JoinKey> join_keys;
    std::vector<Predicate> predicates;
    std::optional<TopNClause> topn;
    std::uint64_t seed = 0;

    /// Throws E_PARAM on a pattern/shape violation.
    void validate() const;

    friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

/// Knobs for generate_query. Empty fields are drawn from the seed.
struct QueryParams {
    std::optional<int> n_tables;
    std::vector<std::string> tables;
    std::optional<std::vector<Predicate>> predicates;
    std::optional<TopNClause> topn;
};

QuerySpec generate_query(QueryPattern pattern, const SchemaCatalog& catalog,
                         const QueryParams& params, std::uint64_t seed);

std::string render_sql(const QuerySpec& spec);
/// Content hash that ignores the seed.
std::uint64_t spec_hash(const QuerySpec& spec);

/// The three-table COUNT(*) join from the demonstrative case.
QuerySpec example1_query();

nlohmann::json spec_to_json(const QuerySpec& spec);
QuerySpec spec_from_json(const nlohmann::json& object);

/// Per-engine mini-optimizers. Each emits only its own operator repertoire.
PlanTree plan_for_engine(const QuerySpec& spec, Engine engine, const SchemaCatalog& catalog);
PlanPair plan_pair(const QuerySpec& spec, const SchemaCatalog& catalog);

/// Operator repertoire of each engine's optimizer.
const std::set<NodeType>& engine_operators(Engine engine);

/// Latency-oracle constants (milliseconds per unit of work).
struct Calibration {
    int version = 1;
    double tp_startup_ms = 1.0;
    double tp_scan_row_ms = 2.0e-5;
    double tp_index_level_ms = 2.0e-4;
    double tp_fetch_row_ms = 1.0e-3;
    double tp_compare_ms = 2.6e-8;
    double tp_agg_row_ms = 5.0e-5;
    double tp_topn_row_ms = 5.0e-5;
    double tp_sort_row_ms = 5.0e-5;
    double ap_startup_ms = 1.5;
    double ap_scan_value_ms = 7.0e-6;
    double ap_hash_row_ms = 1.2e-5;
    double ap_agg_row_ms = 1.0e-5;
    double ap_topn_row_ms = 1.0e-5;
    double ap_sort_row_ms = 2.0e-5;

    Calibration scaled(double factor) const;

    nlohmann::json to_json() const;
    static Calibration from_json(const nlohmann::json& object);
    static Calibration load(const std::string& path);
    void save(const std::string& path) const;
};

/// Deterministic stand-in for execution. Throws E_MISMATCH when the plan
/// uses operators outside the engine's repertoire.
double oracle_latency(const QuerySpec& spec, const PlanTree& plan, Engine engine,
                      const SchemaCatalog& catalog, const Calibration& calibration = {});

struct LabeledExample {
    QuerySpec spec;
    PlanPair pair;
    ExecutionResult result;
};

LabeledExample label_query(const QuerySpec& spec, const SchemaCatalog& catalog,
                           const Calibration& calibration = {});

struct Dataset {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> kb;
    std::vector<LabeledExample> test;
};

Dataset build_dataset(const SchemaCatalog& catalog, std::size_t n_train, std::size_t n_kb,
                      std::size_t n_test, std::uint64_t seed,
                      const Calibration& calibration = {});

double ap_win_fraction(const std::vector<LabeledExample>& examples);

/// Rule-based stand-in for the expert annotation of a seed query.
std::string expert_explanation(const LabeledExample& example, const SchemaCatalog& catalog);

/// Dataset file: one JSON record per line.
nlohmann::json example_to_json(const LabeledExample& example);
LabeledExample example_from_json(const nlohmann::json& object);
void write_dataset_file(const std::string& path, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_dataset_file(const std::string& path);

}  // namespace htapx
