#include "htapx/workload.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Catalog

const Column* TableInfo::find_column(const std::string& name) const {
    for (const auto& column : columns) {
        if (column.name == name) return &column;
    }
    return nullptr;
}

SchemaCatalog SchemaCatalog::tpch() {
    // Row counts follow the scan estimates of the demonstrative plans
    // (orders 135 M, customer 13.6 M, nation 25); the rest keep TPC-H ratios.
    constexpr std::int64_t kOrders = 135'000'000;
    constexpr std::int64_t kScale = kOrders / 1'500'000;  // 90

    SchemaCatalog catalog;
    auto add = [&catalog](std::string name, std::int64_t rows, int column_count,
                          std::string primary_key, std::vector<Column> columns) {
        TableInfo table;
        table.name = std::move(name);
        table.row_count = rows;
        table.column_count = column_count;
        table.primary_key = std::move(primary_key);
        table.columns = std::move(columns);
        table.indexed_columns.insert(table.primary_key);
        catalog.tables_.push_back(std::move(table));
    };
    using K = ColumnKind;
    add("region", 5, 3, "r_regionkey",
        {{"r_regionkey", K::Key, 5}, {"r_name", K::Text, 5}});
    add("nation", 25, 4, "n_nationkey",
        {{"n_nationkey", K::Key, 25}, {"n_regionkey", K::Key, 5}, {"n_name", K::Text, 25}});
    add("supplier", 10'000 * kScale, 7, "s_suppkey",
        {{"s_suppkey", K::Key, 10'000 * kScale},
         {"s_nationkey", K::Key, 25},
         {"s_acctbal", K::Decimal, 1'100'000},
         {"s_name", K::Text, 10'000 * kScale}});
    add("customer", 13'600'000, 8, "c_custkey",
        {{"c_custkey", K::Key, 13'600'000},
         {"c_nationkey", K::Key, 25},
         {"c_mktsegment", K::Text, 5},
         {"c_phone", K::Text, 13'600'000},
         {"c_acctbal", K::Decimal, 1'100'000}});
    add("part", 200'000 * kScale, 9, "p_partkey",
        {{"p_partkey", K::Key, 200'000 * kScale},
         {"p_brand", K::Text, 25},
         {"p_size", K::Integer, 50},
         {"p_retailprice", K::Decimal, 120'000},
         {"p_type", K::Text, 150}});
    add("partsupp", 800'000 * kScale, 5, "ps_partkey",
        {{"ps_partkey", K::Key, 200'000 * kScale},
         {"ps_suppkey", K::Key, 10'000 * kScale},
         {"ps_availqty", K::Integer, 9'999},
         {"ps_supplycost", K::Decimal, 100'000}});
    add("orders", kOrders, 9, "o_orderkey",
        {{"o_orderkey", K::Key, kOrders},
         {"o_custkey", K::Key, 13'600'000},
         {"o_orderstatus", K::Text, 3},
         {"o_orderdate", K::Date, 2'406},
         {"o_totalprice", K::Decimal, 30'000'000},
         {"o_orderpriority", K::Text, 5}});
    add("lineitem", 6'000'000 * kScale, 16, "l_orderkey",
        {{"l_orderkey", K::Key, kOrders},
         {"l_partkey", K::Key, 200'000 * kScale},
         {"l_suppkey", K::Key, 10'000 * kScale},
         {"l_shipdate", K::Date, 2'526},
         {"l_quantity", K::Integer, 50},
         {"l_discount", K::Decimal, 11},
         {"l_returnflag", K::Text, 3}});

    catalog.edges_ = {
        {"nation", "n_regionkey", "region", "r_regionkey"},
        {"customer", "c_nationkey", "nation", "n_nationkey"},
        {"supplier", "s_nationkey", "nation", "n_nationkey"},
        {"orders", "o_custkey", "customer", "c_custkey"},
        {"lineitem", "l_orderkey", "orders", "o_orderkey"},
        {"lineitem", "l_partkey", "part", "p_partkey"},
        {"lineitem", "l_suppkey", "supplier", "s_suppkey"},
        {"partsupp", "ps_partkey", "part", "p_partkey"},
        {"partsupp", "ps_suppkey", "supplier", "s_suppkey"},
    };
    for (const auto& edge : catalog.edges_) {
        catalog.add_index(edge.fk_table, edge.fk_column);
    }
    catalog.add_index("customer", "c_phone");
    return catalog;
}

const TableInfo& SchemaCatalog::table(const std::string& name) const {
    for (const auto& table : tables_) {
        if (table.name == name) return table;
    }
    throw Error(ErrorCode::Param, "unknown table '" + name + "'");
}

bool SchemaCatalog::has_table(const std::string& name) const {
    return std::any_of(tables_.begin(), tables_.end(),
                       [&](const TableInfo& t) { return t.name == name; });
}

std::vector<std::string> SchemaCatalog::table_names() const {
    std::vector<std::string> names;
    for (const auto& table : tables_) names.push_back(table.name);
    return names;
}

const TableInfo& SchemaCatalog::table_of_column(const std::string& column) const {
    for (const auto& table : tables_) {
        if (table.find_column(column)) return table;
    }
    throw Error(ErrorCode::Param, "unknown column '" + column + "'");
}

std::optional<JoinEdge> SchemaCatalog::edge_between(const std::string& a,
                                                    const std::string& b) const {
    for (const auto& edge : edges_) {
        if ((edge.fk_table == a && edge.pk_table == b) ||
            (edge.fk_table == b && edge.pk_table == a)) {
            return edge;
        }
    }
    return std::nullopt;
}

void SchemaCatalog::add_index(const std::string& table_name, const std::string& column) {
    for (auto& table : tables_) {
        if (table.name == table_name) {
            table.indexed_columns.insert(column);
            return;
        }
    }
    throw Error(ErrorCode::Param, "unknown table '" + table_name + "'");
}

// ---------------------------------------------------------------------------
// Query specs

std::string_view pattern_name(QueryPattern pattern) {
    return pattern == QueryPattern::Join ? "JOIN" : "TOPN";
}

QueryPattern parse_pattern(std::string_view name) {
    if (name == "JOIN" || name == "join") return QueryPattern::Join;
    if (name == "TOPN" || name == "topn") return QueryPattern::TopN;
    throw Error(ErrorCode::Param, "unknown pattern '" + std::string(name) + "'");
}

void QuerySpec::validate() const {
    if (pattern == QueryPattern::Join) {
        if (tables.size() < 2 || tables.size() > 4) {
            throw Error(ErrorCode::Param, "JOIN needs 2-4 tables, got " +
                                              std::to_string(tables.size()));
        }
        if (join_keys.size() + 1 != tables.size()) {
            throw Error(ErrorCode::Param, "JOIN needs one join key per added table");
        }
    } else {
        if (tables.size() != 1) {
            throw Error(ErrorCode::Param, "TOPN reads exactly one table");
        }
        if (!topn || topn->order_by.empty() || topn->limit < 1 || topn->offset < 0) {
            throw Error(ErrorCode::Param, "TOPN needs ORDER BY and LIMIT >= 1");
        }
    }
    for (const auto& p : predicates) {
        if (!(p.selectivity > 0.0 && p.selectivity <= 1.0)) {
            throw Error(ErrorCode::Param, "selectivity of " + p.column + " outside (0,1]");
        }
    }
}

namespace {

constexpr std::array<const char*, 25> kNationNames = {
    "algeria", "argentina", "brazil", "canada", "egypt", "ethiopia", "france",
    "germany", "india", "indonesia", "iran", "iraq", "japan", "jordan", "kenya",
    "morocco", "mozambique", "peru", "china", "romania", "saudi arabia", "vietnam",
    "russia", "united kingdom", "united states"};
constexpr std::array<const char*, 5> kRegionNames = {"africa", "america", "asia", "europe",
                                                     "middle east"};
constexpr std::array<const char*, 5> kSegments = {"automobile", "building", "furniture",
                                                  "machinery", "household"};
constexpr std::array<const char*, 5> kPriorities = {"1-urgent", "2-high", "3-medium",
                                                    "4-not specified", "5-low"};

std::string quoted(const std::string& s) { return "'" + s + "'"; }

std::string to_upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string date_at(double fraction) {
    // 1992-01-01 .. 1998-08-02, month granularity is enough here.
    int months = static_cast<int>(std::floor(fraction * 79.0));
    months = std::clamp(months, 0, 78);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-01", 1992 + months / 12, months % 12 + 1);
    return buf;
}

std::string text_value(const std::string& column, std::int64_t index) {
    if (column == "n_name") return kNationNames[static_cast<std::size_t>(index % 25)];
    if (column == "r_name") return kRegionNames[static_cast<std::size_t>(index % 5)];
    if (column == "c_mktsegment") return kSegments[static_cast<std::size_t>(index % 5)];
    if (column == "o_orderpriority") return kPriorities[static_cast<std::size_t>(index % 5)];
    if (column == "o_orderstatus") return std::string(1, "fop"[index % 3]);
    if (column == "l_returnflag") return std::string(1, "anr"[index % 3]);
    if (column == "p_brand") {
        return "brand#" + std::to_string(1 + index % 5) + std::to_string(1 + (index / 5) % 5);
    }
    return column.substr(column.find('_') + 1) + "#" + std::to_string(index);
}

double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

Predicate make_predicate(const TableInfo& table, Rng& rng) {
    // Key columns are drawn twice as often: they decide index usage.
    std::vector<const Column*> weighted;
    for (const auto& c : table.columns) {
        weighted.push_back(&c);
        if (c.kind == ColumnKind::Key) weighted.push_back(&c);
    }
    const Column& column = *rng.pick(weighted);
    Predicate p;
    p.column = column.name;
    p.sargable = !rng.bernoulli(0.25);
    const double floor_sel = 1.0 / static_cast<double>(table.row_count);

    switch (column.kind) {
        case ColumnKind::Text: {
            if (p.sargable) {
                if (column.distinct <= 150) {
                    std::int64_t k = column.distinct <= 5 ? 1 : rng.uniform_int(1, 3);
                    std::int64_t first = rng.uniform_int(0, column.distinct - 1);
                    p.selectivity = static_cast<double>(k) / static_cast<double>(column.distinct);
                    if (column.name == "o_orderstatus") {
                        static constexpr double kStatus[] = {0.487, 0.487, 0.026};
                        p.selectivity = kStatus[first % 3];
                        k = 1;
                    }
                    if (k == 1) {
                        p.text = column.name + " = " + quoted(text_value(column.name, first));
                    } else {
                        std::string list;
                        for (std::int64_t i = 0; i < k; ++i) {
                            if (i) list += ", ";
                            list += quoted(text_value(column.name, first + i));
                        }
                        p.text = column.name + " IN (" + list + ")";
                    }
                } else {
                    p.selectivity = std::max(floor_sel, 1.0 / static_cast<double>(column.distinct));
                    p.text = column.name + " = " +
                             quoted(text_value(column.name, rng.uniform_int(1, column.distinct)));
                }
            } else if (column.name != "c_phone") {
                std::int64_t first = rng.uniform_int(0, std::max<std::int64_t>(column.distinct, 1) - 1);
                p.selectivity = 1.0 / static_cast<double>(std::max<std::int64_t>(column.distinct, 1));
                p.text = "UPPER(" + column.name + ") = " +
                         quoted(to_upper(text_value(column.name, first)));
            } else {
                std::int64_t k = rng.uniform_int(1, 9);
                std::string list;
                for (std::int64_t i = 0; i < k; ++i) {
                    if (i) list += ", ";
                    list += quoted(std::to_string(10 + (rng.uniform_int(0, 24))));
                }
                p.selectivity = static_cast<double>(k) / 25.0;
                p.text = "SUBSTRING(" + column.name + ", 1, 2) IN (" + list + ")";
            }
            break;
        }
        case ColumnKind::Date: {
            if (p.sargable) {
                p.selectivity = rng.uniform(0.02, 0.6);
                p.text = column.name + " < DATE " + quoted(date_at(p.selectivity));
            } else {
                std::int64_t year = rng.uniform_int(1992, 1998);
                p.selectivity = 1.0 / 7.0;
                p.text = "YEAR(" + column.name + ") = " + std::to_string(year);
            }
            break;
        }
        case ColumnKind::Key:
        case ColumnKind::Integer:
        case ColumnKind::Decimal: {
            if (p.sargable) {
                p.selectivity = std::max(floor_sel, log_uniform(rng, 1e-7, 0.5));
                double domain = static_cast<double>(std::max<std::int64_t>(column.distinct, 1));
                if (column.kind == ColumnKind::Decimal) {
                    p.text = column.name + " < " + fixed2(p.selectivity * domain);
                } else {
                    auto bound = std::max<std::int64_t>(
                        1, static_cast<std::int64_t>(std::llround(p.selectivity * domain)));
                    p.text = column.name + " < " + std::to_string(bound);
                }
            } else {
                std::int64_t k = rng.uniform_int(1, 50);
                p.selectivity = static_cast<double>(k) / 100.0;
                p.text = "MOD(" + column.name + ", 100) < " + std::to_string(k);
            }
            break;
        }
    }
    p.selectivity = std::clamp(p.selectivity, floor_sel, 1.0);
    return p;
}

/// Random connected subset of the join graph, in insertion order.
std::vector<std::string> random_join_tables(const SchemaCatalog& catalog, int n, Rng& rng) {
    auto names = catalog.table_names();
    std::vector<std::string> chosen{rng.pick(names)};
    while (static_cast<int>(chosen.size()) < n) {
        std::vector<std::string> frontier;
        for (const auto& edge : catalog.edges()) {
            bool fk_in = std::find(chosen.begin(), chosen.end(), edge.fk_table) != chosen.end();
            bool pk_in = std::find(chosen.begin(), chosen.end(), edge.pk_table) != chosen.end();
            if (fk_in && !pk_in) frontier.push_back(edge.pk_table);
            if (pk_in && !fk_in) frontier.push_back(edge.fk_table);
        }
        std::sort(frontier.begin(), frontier.end());
        frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
        chosen.push_back(rng.pick(frontier));
    }
    return chosen;
}

std::vector<JoinKey> connect_tables(const SchemaCatalog& catalog,
                                    const std::vector<std::string>& tables) {
    std::vector<JoinKey> keys;
    std::vector<std::string> joined{tables.front()};
    std::vector<std::string> pending(tables.begin() + 1, tables.end());
    while (!pending.empty()) {
        bool progressed = false;
        for (auto it = pending.begin(); it != pending.end(); ++it) {
            for (const auto& done : joined) {
                if (auto edge = catalog.edge_between(*it, done)) {
                    keys.push_back({edge->fk_column, edge->pk_column});
                    joined.push_back(*it);
                    pending.erase(it);
                    progressed = true;
                    break;
                }
            }
            if (progressed) break;
        }
        if (!progressed) {
            throw Error(ErrorCode::Param, "tables do not form a connected join graph");
        }
    }
    return keys;
}

const std::vector<std::string>& topn_tables() {
    static const std::vector<std::string> tables = {"orders", "customer", "lineitem",
                                                    "part", "supplier", "partsupp"};
    return tables;
}

}  // namespace

QuerySpec generate_query(QueryPattern pattern, const SchemaCatalog& catalog,
                         const QueryParams& params, std::uint64_t seed) {
    Rng rng(splitmix64(seed));
    QuerySpec spec;
    spec.pattern = pattern;
    spec.seed = seed;

    if (pattern == QueryPattern::Join) {
        if (!params.tables.empty()) {
            spec.tables = params.tables;
        } else {
            int n = params.n_tables ? *params.n_tables : static_cast<int>(rng.uniform_int(2, 4));
            if (n < 2 || n > 4) {
                throw Error(ErrorCode::Param, "JOIN needs 2-4 tables, got " + std::to_string(n));
            }
            spec.tables = random_join_tables(catalog, n, rng);
        }
        if (spec.tables.size() < 2) {
            throw Error(ErrorCode::Param, "JOIN over fewer than 2 tables");
        }
        for (const auto& t : spec.tables) catalog.table(t);
        spec.join_keys = connect_tables(catalog, spec.tables);
        if (params.predicates) {
            spec.predicates = *params.predicates;
        } else {
            for (const auto& t : spec.tables) {
                const auto& table = catalog.table(t);
                if (rng.bernoulli(0.75)) spec.predicates.push_back(make_predicate(table, rng));
                if (rng.bernoulli(0.2)) spec.predicates.push_back(make_predicate(table, rng));
            }
        }
    } else {
        std::string table_name = !params.tables.empty() ? params.tables.front()
                                                        : rng.pick(topn_tables());
        if (params.tables.size() > 1) {
            throw Error(ErrorCode::Param, "TOPN reads exactly one table");
        }
        const auto& table = catalog.table(table_name);
        spec.tables = {table_name};
        if (params.topn) {
            spec.topn = *params.topn;
        } else {
            std::vector<std::string> orderable;
            for (const auto& c : table.columns) {
                if (c.kind == ColumnKind::Text) continue;
                orderable.push_back(c.name);
                if (table.indexed(c.name)) orderable.push_back(c.name);
            }
            // Log-uniform LIMIT in [1, 10^4] and OFFSET in [10, 10^7].
            TopNClause clause;
            clause.order_by = rng.pick(orderable);
            clause.limit = std::llround(std::pow(10.0, rng.uniform(0.0, 4.0)));
            clause.offset = rng.bernoulli(0.5) ? 0 : std::llround(std::pow(10.0, rng.uniform(1.0, 7.0)));
            spec.topn = clause;
        }
        if (params.predicates) {
            spec.predicates = *params.predicates;
        } else if (rng.bernoulli(0.5)) {
            spec.predicates.push_back(make_predicate(table, rng));
        }
    }

    for (const auto& p : spec.predicates) {
        const auto& owner = catalog.table_of_column(p.column);
        if (std::find(spec.tables.begin(), spec.tables.end(), owner.name) == spec.tables.end()) {
            throw Error(ErrorCode::Param, "predicate on " + p.column + " outside FROM list");
        }
    }
    spec.validate();
    return spec;
}

std::string render_sql(const QuerySpec& spec) {
    std::ostringstream sql;
    std::vector<std::string> conditions;
    for (const auto& p : spec.predicates) conditions.push_back(p.text);
    if (spec.pattern == QueryPattern::Join) {
        for (const auto& k : spec.join_keys) {
            conditions.push_back(k.left_column + " = " + k.right_column);
        }
        sql << "SELECT COUNT(*) FROM ";
    } else {
        sql << "SELECT * FROM ";
    }
    for (std::size_t i = 0; i < spec.tables.size(); ++i) {
        if (i) sql << ", ";
        sql << spec.tables[i];
    }
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        sql << (i == 0 ? " WHERE " : " AND ") << conditions[i];
    }
    if (spec.topn) {
        sql << " ORDER BY " << spec.topn->order_by << " LIMIT " << spec.topn->limit;
        if (spec.topn->offset > 0) sql << " OFFSET " << spec.topn->offset;
    }
    sql << ";";
    return sql.str();
}

json spec_to_json(const QuerySpec& spec) {
    json object;
    object["pattern"] = pattern_name(spec.pattern);
    object["tables"] = spec.tables;
    json keys = json::array();
    for (const auto& k : spec.join_keys) keys.push_back({k.left_column, k.right_column});
    object["join_keys"] = std::move(keys);
    json preds = json::array();
    for (const auto& p : spec.predicates) {
        preds.push_back({{"column", p.column},
                         {"selectivity", p.selectivity},
                         {"sargable", p.sargable},
                         {"text", p.text}});
    }
    object["predicates"] = std::move(preds);
    if (spec.topn) {
        object["topn"] = {{"order_by", spec.topn->order_by},
                          {"limit", spec.topn->limit},
                          {"offset", spec.topn->offset}};
    }
    object["seed"] = spec.seed;
    return object;
}

QuerySpec spec_from_json(const json& object) {
    QuerySpec spec;
    spec.pattern = parse_pattern(object.at("pattern").get<std::string>());
    spec.tables = object.at("tables").get<std::vector<std::string>>();
    for (const auto& k : object.at("join_keys")) {
        spec.join_keys.push_back({k.at(0).get<std::string>(), k.at(1).get<std::string>()});
    }
    for (const auto& p : object.at("predicates")) {
        spec.predicates.push_back({p.at("column").get<std::string>(),
                                   p.at("selectivity").get<double>(),
                                   p.at("sargable").get<bool>(),
                                   p.at("text").get<std::string>()});
    }
    if (auto it = object.find("topn"); it != object.end() && !it->is_null()) {
        spec.topn = TopNClause{it->at("order_by").get<std::string>(),
                               it->at("limit").get<std::int64_t>(),
                               it->at("offset").get<std::int64_t>()};
    }
    spec.seed = object.value("seed", std::uint64_t{0});
    return spec;
}

std::uint64_t spec_hash(const QuerySpec& spec) {
    json object = spec_to_json(spec);
    object.erase("seed");
    return fnv1a64(object.dump());
}

QuerySpec example1_query() {
    QuerySpec spec;
    spec.pattern = QueryPattern::Join;
    spec.tables = {"customer", "nation", "orders"};
    spec.predicates = {
        {"c_phone", 7.0 / 25.0, false,
         "SUBSTRING(c_phone, 1, 2) IN ('20', '40', '22', '30', '39', '42', '21')"},
        {"c_mktsegment", 0.2, true, "c_mktsegment = 'machinery'"},
        {"n_name", 1.0 / 25.0, true, "n_name = 'egypt'"},
        {"o_orderstatus", 0.026, true, "o_orderstatus = 'p'"},
    };
    spec.join_keys = {{"o_custkey", "c_custkey"}, {"n_nationkey", "c_nationkey"}};
    return spec;
}

// ---------------------------------------------------------------------------
// Mini-optimizers

const std::set<NodeType>& engine_operators(Engine engine) {
    static const std::set<NodeType> tp = {NodeType::TableScan,      NodeType::IndexScan,
                                          NodeType::Filter,         NodeType::NestedLoopInnerJoin,
                                          NodeType::GroupAggregate, NodeType::Sort,
                                          NodeType::TopN};
    static const std::set<NodeType> ap = {NodeType::TableScan, NodeType::Filter,
                                          NodeType::InnerHashJoin, NodeType::Hash,
                                          NodeType::Aggregate, NodeType::Sort, NodeType::TopN};
    return engine == Engine::TP ? tp : ap;
}

namespace {

constexpr std::int64_t kSortThreshold = 100'000;

std::int64_t as_rows(double rows) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(rows)));
}

double log2p(double x) { return std::log2(x + 1.0); }

struct TableFilter {
    double selectivity = 1.0;       // all predicates
    double filtered_rows = 0.0;
    const Predicate* index_predicate = nullptr;  // most selective sargable indexed one
    bool has_predicates = false;
};

TableFilter table_filter(const QuerySpec& spec, const TableInfo& table) {
    TableFilter f;
    for (const auto& p : spec.predicates) {
        if (!table.find_column(p.column)) continue;
        f.has_predicates = true;
        f.selectivity *= p.selectivity;
        if (p.sargable && table.indexed(p.column) &&
            (!f.index_predicate || p.selectivity < f.index_predicate->selectivity)) {
            f.index_predicate = &p;
        }
    }
    f.filtered_rows = std::max(1.0, static_cast<double>(table.row_count) * f.selectivity);
    return f;
}

/// Rows of the key domain an edge joins over (the referenced table).
double edge_domain(const SchemaCatalog& catalog, const JoinEdge& edge) {
    return static_cast<double>(catalog.table(edge.pk_table).row_count);
}

struct JoinStep {
    std::string table;
    std::optional<JoinEdge> edge;  // empty for the driving table
};

/// Ascending filtered cardinality, always extending the connected set.
std::vector<JoinStep> join_order(const QuerySpec& spec, const SchemaCatalog& catalog) {
    std::vector<std::string> pending = spec.tables;
    auto card = [&](const std::string& t) {
        return table_filter(spec, catalog.table(t)).filtered_rows;
    };
    auto less = [&](const std::string& a, const std::string& b) {
        double ca = card(a), cb = card(b);
        return ca != cb ? ca < cb : a < b;
    };
    std::sort(pending.begin(), pending.end(), less);
    std::vector<JoinStep> order{{pending.front(), std::nullopt}};
    pending.erase(pending.begin());
    while (!pending.empty()) {
        bool placed = false;
        for (auto it = pending.begin(); it != pending.end() && !placed; ++it) {
            for (const auto& step : order) {
                if (auto edge = catalog.edge_between(*it, step.table)) {
                    order.push_back({*it, edge});
                    pending.erase(it);
                    placed = true;
                    break;
                }
            }
        }
        if (!placed) {
            throw Error(ErrorCode::Unsupported, "join graph is not connected");
        }
    }
    return order;
}

// TP cost units.
double tp_scan_cost(double rows) { return 1.0 + rows * 0.01; }
double tp_index_cost(double table_rows, double rows) {
    return 4.0 + log2p(table_rows) * 0.5 + rows * 0.1;
}

PlanNode with_filter_tp(PlanNode child, const TableFilter& f, double out_rows) {
    double cost = child.total_cost + static_cast<double>(child.plan_rows) * 0.001;
    (void)f;
    return PlanNode::make(NodeType::Filter, cost, as_rows(out_rows), {std::move(child)});
}

/// Driving-table access: index on the most selective sargable predicate, or a scan.
PlanNode tp_access(const QuerySpec& spec, const TableInfo& table) {
    TableFilter f = table_filter(spec, table);
    double rows = static_cast<double>(table.row_count);
    if (f.index_predicate && f.index_predicate->selectivity <= 0.05) {
        double matched = std::max(1.0, rows * f.index_predicate->selectivity);
        PlanNode scan = PlanNode::scan(NodeType::IndexScan, table.name,
                                       tp_index_cost(rows, matched), as_rows(matched));
        if (f.selectivity < f.index_predicate->selectivity) {
            return with_filter_tp(std::move(scan), f, f.filtered_rows);
        }
        return scan;
    }
    PlanNode scan = PlanNode::scan(NodeType::TableScan, table.name, tp_scan_cost(rows),
                                   table.row_count);
    return f.has_predicates ? with_filter_tp(std::move(scan), f, f.filtered_rows) : scan;
}

/// Materialized NLJ inner: always a full scan.
PlanNode tp_scan_inner(const QuerySpec& spec, const TableInfo& table) {
    TableFilter f = table_filter(spec, table);
    double rows = static_cast<double>(table.row_count);
    PlanNode scan = PlanNode::scan(NodeType::TableScan, table.name, tp_scan_cost(rows),
                                   table.row_count);
    return f.has_predicates ? with_filter_tp(std::move(scan), f, f.filtered_rows) : scan;
}

PlanTree tp_join_plan(const QuerySpec& spec, const SchemaCatalog& catalog) {
    auto order = join_order(spec, catalog);
    const auto& first = catalog.table(order.front().table);
    PlanNode current = tp_access(spec, first);
    double current_rows = table_filter(spec, first).filtered_rows;

    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& table = catalog.table(order[i].table);
        const JoinEdge& edge = *order[i].edge;
        const std::string& inner_column =
            edge.fk_table == table.name ? edge.fk_column : edge.pk_column;
        TableFilter f = table_filter(spec, table);
        double domain = edge_domain(catalog, edge);
        double out_rows = std::max(1.0, current_rows * f.filtered_rows / domain);

        PlanNode inner;
        double cost;
        if (inner_column == table.primary_key && table.indexed(inner_column)) {
            double per_probe = std::max(1.0, static_cast<double>(table.row_count) / domain);
            inner = PlanNode::scan(NodeType::IndexScan, table.name,
                                   tp_index_cost(static_cast<double>(table.row_count), per_probe),
                                   as_rows(per_probe));
            if (f.has_predicates) {
                inner = with_filter_tp(std::move(inner), f, per_probe * f.selectivity);
            }
            cost = current.total_cost + current_rows * inner.total_cost;
        } else {
            inner = tp_scan_inner(spec, table);
            cost = current.total_cost + inner.total_cost +
                   current_rows * f.filtered_rows * 1e-4;
        }
        current = PlanNode::make(NodeType::NestedLoopInnerJoin, cost, as_rows(out_rows),
                                 {std::move(current), std::move(inner)});
        current_rows = out_rows;
    }
    double cost = current.total_cost + current_rows * 0.002;
    PlanTree tree;
    tree.engine = Engine::TP;
    tree.root = PlanNode::make(NodeType::GroupAggregate, cost, 1, {std::move(current)});
    return tree;
}

PlanNode wrap_topn(PlanNode input, const TopNClause& clause, double input_rows,
                   bool engine_tp, bool needs_sort) {
    double n = static_cast<double>(clause.limit + clause.offset);
    double out = std::min(static_cast<double>(clause.limit),
                          std::max(0.0, input_rows - static_cast<double>(clause.offset)));
    if (needs_sort && n > static_cast<double>(kSortThreshold)) {
        double sort_cost = input.total_cost + input_rows * log2p(input_rows) *
                                                  (engine_tp ? 0.002 : 0.02);
        input = PlanNode::make(NodeType::Sort, sort_cost, as_rows(input_rows), {std::move(input)});
    }
    double cost = input.total_cost + input_rows * (engine_tp ? 0.01 : 0.05);
    return PlanNode::make(NodeType::TopN, cost, as_rows(out), {std::move(input)});
}

PlanTree tp_topn_plan(const QuerySpec& spec, const SchemaCatalog& catalog) {
    const auto& table = catalog.table(spec.tables.front());
    const TopNClause& clause = *spec.topn;
    TableFilter f = table_filter(spec, table);
    double rows = static_cast<double>(table.row_count);
    double wanted = static_cast<double>(clause.limit + clause.offset);

    // Ordered index walk reads rows until enough of them pass the filter.
    double ordered_rows = table.indexed(clause.order_by)
                              ? std::min(rows, std::ceil(wanted / f.selectivity))
                              : std::numeric_limits<double>::infinity();
    double predicate_rows = f.index_predicate && f.index_predicate->selectivity <= 0.05
                                ? std::max(1.0, rows * f.index_predicate->selectivity)
                                : std::numeric_limits<double>::infinity();

    PlanTree tree;
    tree.engine = Engine::TP;
    if (std::isfinite(ordered_rows) && ordered_rows <= predicate_rows) {
        PlanNode scan = PlanNode::scan(NodeType::IndexScan, table.name,
                                       tp_index_cost(rows, ordered_rows), as_rows(ordered_rows));
        double passed = std::min(f.filtered_rows, ordered_rows * f.selectivity);
        if (f.has_predicates) scan = with_filter_tp(std::move(scan), f, passed);
        tree.root = wrap_topn(std::move(scan), clause, passed, true, false);
        return tree;
    }
    PlanNode input = tp_access(spec, table);
    tree.root = wrap_topn(std::move(input), clause, f.filtered_rows, true, true);
    return tree;
}

// AP cost units.
PlanNode ap_leaf(const QuerySpec& spec, const TableInfo& table) {
    TableFilter f = table_filter(spec, table);
    PlanNode scan = PlanNode::scan(NodeType::TableScan, table.name, 0.5, table.row_count);
    if (!f.has_predicates) return scan;
    double cost = static_cast<double>(table.row_count) * 0.1;
    return PlanNode::make(NodeType::Filter, cost, as_rows(f.filtered_rows), {std::move(scan)});
}

PlanTree ap_join_plan(const QuerySpec& spec, const SchemaCatalog& catalog) {
    auto order = join_order(spec, catalog);
    const auto& first = catalog.table(order.front().table);
    PlanNode current = ap_leaf(spec, first);
    double current_rows = table_filter(spec, first).filtered_rows;

    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& table = catalog.table(order[i].table);
        TableFilter f = table_filter(spec, table);
        double out_rows =
            std::max(1.0, current_rows * f.filtered_rows / edge_domain(catalog, *order[i].edge));
        PlanNode probe = ap_leaf(spec, table);
        double cost = probe.total_cost + current.total_cost +
                      (current_rows + f.filtered_rows) * 0.1;
        // Hash nodes carry no estimates of their own.
        PlanNode build = PlanNode::make(NodeType::Hash, 0.0, 0, {std::move(current)});
        current = PlanNode::make(NodeType::InnerHashJoin, cost, as_rows(out_rows),
                                 {std::move(probe), std::move(build)});
        current_rows = out_rows;
    }
    PlanTree tree;
    tree.engine = Engine::AP;
    double cost = current.total_cost;
    tree.root = PlanNode::make(NodeType::Aggregate, cost, 1, {std::move(current)});
    return tree;
}

PlanTree ap_topn_plan(const QuerySpec& spec, const SchemaCatalog& catalog) {
    const auto& table = catalog.table(spec.tables.front());
    TableFilter f = table_filter(spec, table);
    PlanTree tree;
    tree.engine = Engine::AP;
    tree.root = wrap_topn(ap_leaf(spec, table), *spec.topn, f.filtered_rows, false, true);
    return tree;
}

}  // namespace

PlanTree plan_for_engine(const QuerySpec& spec, Engine engine, const SchemaCatalog& catalog) {
    spec.validate();
    if (spec.pattern == QueryPattern::Join) {
        return engine == Engine::TP ? tp_join_plan(spec, catalog) : ap_join_plan(spec, catalog);
    }
    if (!catalog.table(spec.tables.front()).find_column(spec.topn->order_by)) {
        throw Error(ErrorCode::Unsupported,
                    "ORDER BY column " + spec.topn->order_by + " is not in " + spec.tables.front());
    }
    return engine == Engine::TP ? tp_topn_plan(spec, catalog) : ap_topn_plan(spec, catalog);
}

PlanPair plan_pair(const QuerySpec& spec, const SchemaCatalog& catalog) {
    PlanPair pair;
    pair.ap_plan = plan_for_engine(spec, Engine::AP, catalog);
    pair.tp_plan = plan_for_engine(spec, Engine::TP, catalog);
    pair.query_text = render_sql(spec);
    return pair;
}

// ---------------------------------------------------------------------------
// Latency oracle

Calibration Calibration::scaled(double factor) const {
    Calibration c = *this;
    for (double* v : {&c.tp_startup_ms, &c.tp_scan_row_ms, &c.tp_index_level_ms,
                      &c.tp_fetch_row_ms, &c.tp_compare_ms, &c.tp_agg_row_ms, &c.tp_topn_row_ms,
                      &c.tp_sort_row_ms, &c.ap_startup_ms, &c.ap_scan_value_ms,
                      &c.ap_hash_row_ms, &c.ap_agg_row_ms, &c.ap_topn_row_ms,
                      &c.ap_sort_row_ms}) {
        *v *= factor;
    }
    return c;
}

json Calibration::to_json() const {
    return json{{"calibration_version", version},
                {"tp_startup_ms", tp_startup_ms},
                {"tp_scan_row_ms", tp_scan_row_ms},
                {"tp_index_level_ms", tp_index_level_ms},
                {"tp_fetch_row_ms", tp_fetch_row_ms},
                {"tp_compare_ms", tp_compare_ms},
                {"tp_agg_row_ms", tp_agg_row_ms},
                {"tp_topn_row_ms", tp_topn_row_ms},
                {"tp_sort_row_ms", tp_sort_row_ms},
                {"ap_startup_ms", ap_startup_ms},
                {"ap_scan_value_ms", ap_scan_value_ms},
                {"ap_hash_row_ms", ap_hash_row_ms},
                {"ap_agg_row_ms", ap_agg_row_ms},
                {"ap_topn_row_ms", ap_topn_row_ms},
                {"ap_sort_row_ms", ap_sort_row_ms}};
}

Calibration Calibration::from_json(const json& object) {
    Calibration c;
    if (!object.is_object()) {
        throw Error(ErrorCode::Schema, "calibration must be a flat key/number object");
    }
    int version = object.value("calibration_version", 0);
    if (version != c.version) {
        throw Error(ErrorCode::Version,
                    "calibration version " + std::to_string(version) + " is not supported");
    }
    auto read = [&](const char* key, double& field) {
        if (auto it = object.find(key); it != object.end()) {
            if (!it->is_number() || !(it->get<double>() > 0.0)) {
                throw Error(ErrorCode::Schema, std::string("calibration key ") + key +
                                                   " must be a positive number");
            }
            field = it->get<double>();
        }
    };
    read("tp_startup_ms", c.tp_startup_ms);
    read("tp_scan_row_ms", c.tp_scan_row_ms);
    read("tp_index_level_ms", c.tp_index_level_ms);
    read("tp_fetch_row_ms", c.tp_fetch_row_ms);
    read("tp_compare_ms", c.tp_compare_ms);
    read("tp_agg_row_ms", c.tp_agg_row_ms);
    read("tp_topn_row_ms", c.tp_topn_row_ms);
    read("tp_sort_row_ms", c.tp_sort_row_ms);
    read("ap_startup_ms", c.ap_startup_ms);
    read("ap_scan_value_ms", c.ap_scan_value_ms);
    read("ap_hash_row_ms", c.ap_hash_row_ms);
    read("ap_agg_row_ms", c.ap_agg_row_ms);
    read("ap_topn_row_ms", c.ap_topn_row_ms);
    read("ap_sort_row_ms", c.ap_sort_row_ms);
    return c;
}

Calibration Calibration::load(const std::string& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Syntax, path + ": " + e.what());
    }
}

void Calibration::save(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

namespace {

struct Cost {
    double ms = 0.0;
    double rows = 0.0;
};

class Oracle {
public:
    Oracle(const QuerySpec& spec, Engine engine, const SchemaCatalog& catalog,
           const Calibration& c)
        : spec_(spec), engine_(engine), catalog_(catalog), c_(c) {}

    double run(const PlanTree& plan) {
        double startup = engine_ == Engine::TP ? c_.tp_startup_ms : c_.ap_startup_ms;
        return startup + eval(plan.root).ms;
    }

private:
    const TableInfo& relation(const PlanNode& node) const {
        if (!node.relation_name || !catalog_.has_table(*node.relation_name)) {
            throw Error(ErrorCode::Mismatch, "scan over an unknown relation");
        }
        return catalog_.table(*node.relation_name);
    }

    const PlanNode& child(const PlanNode& node, std::size_t i) const {
        if (node.children.size() <= i) {
            throw Error(ErrorCode::Mismatch,
                        std::string(node_type_label(node.node_type)) + " is missing a child");
        }
        return node.children[i];
    }

    double topn_width() const {
        return spec_.topn ? static_cast<double>(spec_.topn->limit + spec_.topn->offset) : 1.0;
    }

    double columns_fraction(const TableInfo& table) const {
        std::set<std::string> used;
        for (const auto& p : spec_.predicates) {
            if (table.find_column(p.column)) used.insert(p.column);
        }
        for (const auto& k : spec_.join_keys) {
            if (table.find_column(k.left_column)) used.insert(k.left_column);
            if (table.find_column(k.right_column)) used.insert(k.right_column);
        }
        if (spec_.topn && table.find_column(spec_.topn->order_by)) used.insert(spec_.topn->order_by);
        double n = std::max<double>(1.0, static_cast<double>(used.size()));
        return std::min(1.0, n / static_cast<double>(table.column_count));
    }

    /// NLJ inner that is probed through an index once per outer row.
    const PlanNode* probe_index(const PlanNode& inner) const {
        if (inner.node_type == NodeType::IndexScan) return &inner;
        if (inner.node_type == NodeType::Filter && inner.children.size() == 1 &&
            inner.children[0].node_type == NodeType::IndexScan) {
            return &inner.children[0];
        }
        return nullptr;
    }

    double index_access_ms(const PlanNode& scan) const {
        const auto& table = relation(scan);
        return log2p(static_cast<double>(table.row_count)) * c_.tp_index_level_ms +
               static_cast<double>(scan.plan_rows) * c_.tp_fetch_row_ms;
    }

    Cost eval(const PlanNode& node) {
        if (!engine_operators(engine_).count(node.node_type)) {
            throw Error(ErrorCode::Mismatch, std::string(node_type_label(node.node_type)) +
                                                 " is not a " +
                                                 std::string(engine_name(engine_)) + " operator");
        }
        const double rows = static_cast<double>(node.plan_rows);
        switch (node.node_type) {
            case NodeType::TableScan: {
                const auto& table = relation(node);
                double n = static_cast<double>(table.row_count);
                if (engine_ == Engine::TP) return {n * c_.tp_scan_row_ms, rows};
                return {n * columns_fraction(table) * c_.ap_scan_value_ms, rows};
            }
            case NodeType::IndexScan:
                return {index_access_ms(node), rows};
            case NodeType::Filter: {
                Cost in = eval(child(node, 0));
                return {in.ms, rows};
            }
            case NodeType::NestedLoopInnerJoin: {
                Cost outer = eval(child(node, 0));
                const PlanNode& inner_node = child(node, 1);
                if (const PlanNode* index = probe_index(inner_node)) {
                    return {outer.ms + outer.rows * index_access_ms(*index), rows};
                }
                Cost inner = eval(inner_node);
                return {outer.ms + inner.ms + outer.rows * inner.rows * c_.tp_compare_ms, rows};
            }
            case NodeType::InnerHashJoin: {
                Cost probe = eval(child(node, 0));
                Cost build = eval(child(node, 1));
                return {probe.ms + build.ms + (probe.rows + build.rows) * c_.ap_hash_row_ms,
                        rows};
            }
            case NodeType::Hash: {
                Cost in = eval(child(node, 0));
                return {in.ms, in.rows};
            }
            case NodeType::GroupAggregate:
            case NodeType::Aggregate: {
                Cost in = eval(child(node, 0));
                double per_row = engine_ == Engine::TP ? c_.tp_agg_row_ms : c_.ap_agg_row_ms;
                return {in.ms + in.rows * per_row, rows};
            }
            case NodeType::TopN: {
                Cost in = eval(child(node, 0));
                double per_row = engine_ == Engine::TP ? c_.tp_topn_row_ms : c_.ap_topn_row_ms;
                return {in.ms + in.rows * log2p(topn_width()) * per_row, rows};
            }
            case NodeType::Sort: {
                Cost in = eval(child(node, 0));
                double per_row = engine_ == Engine::TP ? c_.tp_sort_row_ms : c_.ap_sort_row_ms;
                return {in.ms + in.rows * log2p(in.rows) * per_row, rows};
            }
            case NodeType::Unknown:
                break;
        }
        throw Error(ErrorCode::Mismatch, "unknown operator in plan");
    }

    const QuerySpec& spec_;
    Engine engine_;
    const SchemaCatalog& catalog_;
    const Calibration& c_;
};

}  // namespace

double oracle_latency(const QuerySpec& spec, const PlanTree& plan, Engine engine,
                      const SchemaCatalog& catalog, const Calibration& calibration) {
    if (plan.engine != engine) {
        throw Error(ErrorCode::Mismatch, "plan was produced for the other engine");
    }
    return Oracle(spec, engine, catalog, calibration).run(plan);
}

LabeledExample label_query(const QuerySpec& spec, const SchemaCatalog& catalog,
                           const Calibration& calibration) {
    LabeledExample example;
    example.spec = spec;
    example.pair = plan_pair(spec, catalog);
    double tp = oracle_latency(spec, example.pair.tp_plan, Engine::TP, catalog, calibration);
    double ap = oracle_latency(spec, example.pair.ap_plan, Engine::AP, catalog, calibration);
    example.result = ExecutionResult::from_latencies(tp, ap);
    return example;
}

// ---------------------------------------------------------------------------
// Datasets

double ap_win_fraction(const std::vector<LabeledExample>& examples) {
    if (examples.empty()) return 0.0;
    auto ap = std::count_if(examples.begin(), examples.end(), [](const LabeledExample& e) {
        return e.result.winner == Engine::AP;
    });
    return static_cast<double>(ap) / static_cast<double>(examples.size());
}

namespace {

constexpr double kJoinShare = 0.5;
constexpr int kBalanceAttempts = 8;

bool balanced(const std::vector<LabeledExample>& examples) {
    if (examples.empty()) return true;
    double f = ap_win_fraction(examples);
    return f >= 0.3 && f <= 0.7;
}

bool both_patterns(const std::vector<LabeledExample>& examples) {
    bool join = false, topn = false;
    for (const auto& e : examples) {
        (e.spec.pattern == QueryPattern::Join ? join : topn) = true;
    }
    return examples.size() < 2 || (join && topn);
}

/// Round-robin over (pattern, winner) strata so the seeds cover every distinction.
std::vector<LabeledExample> pick_representatives(const std::vector<LabeledExample>& train,
                                                 std::size_t n) {
    std::vector<std::vector<const LabeledExample*>> strata(4);
    for (const auto& e : train) {
        std::size_t s = (e.spec.pattern == QueryPattern::Join ? 0 : 2) +
                        (e.result.winner == Engine::AP ? 1 : 0);
        strata[s].push_back(&e);
    }
    std::vector<LabeledExample> picked;
    std::vector<std::size_t> cursor(strata.size(), 0);
    while (picked.size() < n) {
        bool any = false;
        for (std::size_t s = 0; s < strata.size() && picked.size() < n; ++s) {
            if (cursor[s] < strata[s].size()) {
                picked.push_back(*strata[s][cursor[s]++]);
                any = true;
            }
        }
        if (!any) break;
    }
    return picked;
}

}  // namespace

Dataset build_dataset(const SchemaCatalog& catalog, std::size_t n_train, std::size_t n_kb,
                      std::size_t n_test, std::uint64_t seed, const Calibration& calibration) {
    if (n_kb > n_train) {
        throw Error(ErrorCode::Param, "knowledge-base seeds must come from the training set");
    }
    for (int attempt = 0; attempt < kBalanceAttempts; ++attempt) {
        std::uint64_t base = splitmix64(seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B9ULL);
        Rng rng(base);
        std::unordered_set<std::uint64_t> seen;
        std::vector<LabeledExample> all;
        std::uint64_t counter = 0;
        const std::size_t total = n_train + n_test;
        while (all.size() < total) {
            if (counter > total * 50 + 1000) {
                throw Error(ErrorCode::Balance, "cannot produce enough distinct queries");
            }
            std::uint64_t query_seed = splitmix64(base ^ (++counter * 0xD1B54A32D192ED03ULL));
            QueryPattern pattern = rng.bernoulli(kJoinShare) ? QueryPattern::Join
                                                             : QueryPattern::TopN;
            QuerySpec spec = generate_query(pattern, catalog, {}, query_seed);
            if (!seen.insert(spec_hash(spec)).second) continue;
            all.push_back(label_query(spec, catalog, calibration));
        }
        Dataset data;
        data.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
        data.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
        if (!balanced(data.train) || !balanced(data.test) || !both_patterns(data.train) ||
            !both_patterns(data.test)) {
            continue;
        }
        data.kb = pick_representatives(data.train, n_kb);
        return data;
    }
    throw Error(ErrorCode::Balance, "class balance outside [0.3, 0.7] after " +
                                        std::to_string(kBalanceAttempts) + " attempts");
}

std::string expert_explanation(const LabeledExample& example, const SchemaCatalog& catalog) {
    const QuerySpec& spec = example.spec;
    const bool ap_wins = example.result.winner == Engine::AP;
    PlanStats tp = plan_stats(example.pair.tp_plan);
    std::ostringstream out;

    std::vector<std::string> unusable;
    for (const auto& p : spec.predicates) {
        const auto& owner = catalog.table_of_column(p.column);
        if (!p.sargable && owner.indexed(p.column)) unusable.push_back(p.column);
    }
    auto mention_unusable = [&] {
        for (const auto& column : unusable) {
            out << " The predicate applies a function to " << column
                << ", so the index on that column cannot be used.";
        }
    };

    if (spec.pattern == QueryPattern::Join) {
        std::size_t probes = tp.count(NodeType::IndexScan);
        std::size_t loops = tp.count(NodeType::NestedLoopInnerJoin);
        if (ap_wins) {
            if (probes == 0) {
                out << "AP is faster than TP because TP has to use nested loop join with no "
                       "index available. AP uses hash join, which is more efficient.";
            } else {
                out << "AP is faster than TP because TP's nested loop join still drives "
                    << loops << " join(s) from a large outer input, so its index lookups add "
                       "up to millions of random accesses. AP scans only the needed columns "
                       "and joins with hash joins.";
            }
            mention_unusable();
        } else {
            if (probes > 0) {
                out << "TP is faster than AP because the selective predicates leave few outer "
                       "rows and TP probes the joined tables through their indexes in a nested "
                       "loop join. AP has to scan the tables and build hash tables regardless "
                       "of how few rows qualify.";
            } else {
                out << "TP is faster than AP because every joined input is small, so TP's nested "
                       "loop join finishes quickly while AP pays the fixed overhead of columnar "
                       "scans and hash table builds.";
            }
        }
    } else {
        const auto& clause = *spec.topn;
        const auto& table = catalog.table(spec.tables.front());
        bool ordered_index = tp.count(NodeType::IndexScan) > 0 && table.indexed(clause.order_by);
        if (!ap_wins) {
            if (ordered_index) {
                out << "TP is faster than AP because TP reads " << clause.order_by
                    << " in order through its index and stops after LIMIT " << clause.limit;
                if (clause.offset) out << " plus OFFSET " << clause.offset;
                out << " rows, while AP must scan the whole column of " << table.name
                    << " to find the top rows.";
            } else {
                out << "TP is faster than AP because an index on the filter column leaves only a "
                       "few rows to sort, while AP scans the full "
                    << table.name << " table.";
            }
        } else if (ordered_index) {
            out << "AP is faster than TP because ";
            if (clause.offset >= 100000) {
                out << "the large OFFSET " << clause.offset << " ";
            } else {
                out << "the selective filter ";
            }
            out << "forces TP to fetch many rows one by one through the index on "
                << clause.order_by
                << ". AP scans only the referenced columns and keeps a top-N heap.";
        } else {
            out << "AP is faster than TP because no index on " << clause.order_by
                << " is available, so TP performs a full row-oriented scan of " << table.name
                << " and sorts it, while AP scans only the referenced columns.";
            mention_unusable();
        }
    }
    return out.str();
}

json example_to_json(const LabeledExample& example) {
    json record;
    record["query_sql"] = render_sql(example.spec);
    record["ap_plan"] = plan_to_json(example.pair.ap_plan.root);
    record["tp_plan"] = plan_to_json(example.pair.tp_plan.root);
    record["tp_latency_ms"] = example.result.tp_latency_ms;
    record["ap_latency_ms"] = example.result.ap_latency_ms;
    record["winner"] = engine_name(example.result.winner);
    record["spec"] = spec_to_json(example.spec);
    return record;
}

LabeledExample example_from_json(const json& object) {
    LabeledExample example;
    if (auto it = object.find("spec"); it != object.end()) {
        example.spec = spec_from_json(*it);
    }
    example.pair.ap_plan = plan_from_json(object.at("ap_plan"), Engine::AP);
    example.pair.tp_plan = plan_from_json(object.at("tp_plan"), Engine::TP);
    example.pair.query_text = object.at("query_sql").get<std::string>();
    example.result = result_from_json(object);
    return example;
}

void write_dataset_file(const std::string& path, const std::vector<LabeledExample>& examples) {
    std::string out;
    for (const auto& e : examples) {
        out += example_to_json(e).dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<LabeledExample> read_dataset_file(const std::string& path) {
    std::vector<LabeledExample> examples;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        try {
            examples.push_back(example_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Syntax, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return examples;
}

}  // namespace htapx
