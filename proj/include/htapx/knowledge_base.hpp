#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "htapx/plan.hpp"
#include "htapx/router.hpp"

namespace htapx {

inline constexpr int kKbFormatVersion = 1;

enum class Provenance { ExpertSeed, ExpertCorrection, ApprovedGeneration };

std::string_view provenance_name(Provenance provenance);
Provenance parse_provenance(std::string_view name);

struct KnowledgeEntry {
    std::int64_t id = 0;
    PairEmbedding key;
    std::string query_text;
    PlanPair plan_details;
    ExecutionResult execution_result;
    std::string explanation;
    Provenance provenance = Provenance::ExpertSeed;

    /// E_DIM for a key that is not 16 wide, E_SCHEMA for an empty explanation.
    void validate() const;

    friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

nlohmann::json entry_to_json(const KnowledgeEntry& entry);
KnowledgeEntry entry_from_json(const nlohmann::json& object);

struct SimilarityHit {
    std::shared_ptr<const KnowledgeEntry> entry;
    double similarity = 0.0;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine(const std::vector<double>& v, const std::vector<double>& w);

/// Exact top-k store. Any number of concurrent readers, one writer at a time.
/// Entries are immutable once published, so hits stay valid after later writes.
class KnowledgeBase {
public:
    KnowledgeBase() = default;
    KnowledgeBase(const KnowledgeBase& other);
    KnowledgeBase& operator=(const KnowledgeBase& other);

    /// Assigns and returns a fresh id; the id field of `entry` is ignored.
    std::int64_t insert(KnowledgeEntry entry);

    /// Sorted by similarity descending, then id ascending.
    std::vector<SimilarityHit> top_k(const PairEmbedding& query, int k) const;

    KnowledgeEntry replace(std::int64_t id, const std::string& explanation, Provenance provenance);
    KnowledgeEntry remove(std::int64_t id);

    std::optional<KnowledgeEntry> get(std::int64_t id) const;
    std::vector<KnowledgeEntry> list(std::size_t offset, std::size_t limit) const;
    std::size_t size() const;
    std::int64_t next_id() const;

    std::string serialize() const;
    static KnowledgeBase deserialize(const std::string& text);
    void persist(const std::string& path) const;
    static KnowledgeBase load(const std::string& path);

private:
    struct Slot {
        std::shared_ptr<const KnowledgeEntry> entry;
        double norm = 0.0;
    };

    std::size_t index_of(std::int64_t id) const;  // caller holds a lock

    mutable std::shared_mutex mutex_;
    std::vector<Slot> slots_;  // ascending id
    std::int64_t next_id_ = 1;
};

/// Expert-seed entry for a labeled query, without a key.
KnowledgeEntry seed_entry(const LabeledExample& example, const SchemaCatalog& catalog);

/// Store holding one seed entry per example, keyed by the model.
KnowledgeBase build_seed_kb(const std::vector<LabeledExample>& examples, const RouterModel& model,
                            const SchemaCatalog& catalog);

/// One entry record per line.
void write_entries_file(const std::string& path, const std::vector<KnowledgeEntry>& entries);
std::vector<KnowledgeEntry> read_entries_file(const std::string& path);

}  // namespace htapx
