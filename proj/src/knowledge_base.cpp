#include "htapx/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using nlohmann::json;

std::string_view provenance_name(Provenance provenance) {
    switch (provenance) {
        case Provenance::ExpertSeed: return "EXPERT_SEED";
        case Provenance::ExpertCorrection: return "EXPERT_CORRECTION";
        case Provenance::ApprovedGeneration: return "APPROVED_GENERATION";
    }
    return "EXPERT_SEED";
}

Provenance parse_provenance(std::string_view name) {
    if (name == "EXPERT_SEED") return Provenance::ExpertSeed;
    if (name == "EXPERT_CORRECTION") return Provenance::ExpertCorrection;
    if (name == "APPROVED_GENERATION") return Provenance::ApprovedGeneration;
    throw Error(ErrorCode::Schema, "unknown provenance '" + std::string(name) + "'");
}

void KnowledgeEntry::validate() const {
    if (key.size() != kPairDim) {
        throw Error(ErrorCode::Dim, "key has " + std::to_string(key.size()) + " entries, expected 16");
    }
    if (trim(explanation).empty()) {
        throw Error(ErrorCode::Schema, "explanation is empty");
    }
}

json entry_to_json(const KnowledgeEntry& entry) {
    return json{{"id", entry.id},
                {"key", entry.key},
                {"query_text", entry.query_text},
                {"plan_details", pair_to_json(entry.plan_details)},
                {"execution_result", result_to_json(entry.execution_result)},
                {"explanation", entry.explanation},
                {"provenance", provenance_name(entry.provenance)}};
}

KnowledgeEntry entry_from_json(const json& object) {
    if (!object.is_object()) throw Error(ErrorCode::Schema, "entry must be an object");
    KnowledgeEntry e;
    try {
        if (object.contains("id")) e.id = object.at("id").get<std::int64_t>();
        if (object.contains("key")) e.key = object.at("key").get<std::vector<double>>();
        e.plan_details = pair_from_json(object.at("plan_details"));
        if (object.contains("query_text")) {
            e.query_text = object.at("query_text").get<std::string>();
        } else if (e.plan_details.query_text) {
            e.query_text = *e.plan_details.query_text;
        }
        e.execution_result = result_from_json(object.at("execution_result"));
        e.explanation = object.at("explanation").get<std::string>();
        if (object.contains("provenance")) {
            e.provenance = parse_provenance(object.at("provenance").get<std::string>());
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::Schema, std::string("bad knowledge entry: ") + ex.what());
    }
    return e;
}

double cosine(const std::vector<double>& v, const std::vector<double>& w) {
    if (v.size() != w.size()) {
        throw Error(ErrorCode::Dim, "cosine of vectors with different lengths");
    }
    double dot = 0.0, vv = 0.0, ww = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        dot += v[i] * w[i];
        vv += v[i] * v[i];
        ww += w[i] * w[i];
    }
    if (vv == 0.0 || ww == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(vv) * std::sqrt(ww)), -1.0, 1.0);
}

namespace {

double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

KnowledgeBase::KnowledgeBase(const KnowledgeBase& other) {
    std::shared_lock lock(other.mutex_);
    slots_ = other.slots_;
    next_id_ = other.next_id_;
}

KnowledgeBase& KnowledgeBase::operator=(const KnowledgeBase& other) {
    if (this == &other) return *this;
    std::vector<Slot> slots;
    std::int64_t next = 0;
    {
        std::shared_lock lock(other.mutex_);
        slots = other.slots_;
        next = other.next_id_;
    }
    std::unique_lock lock(mutex_);
    slots_ = std::move(slots);
    next_id_ = next;
    return *this;
}

std::int64_t KnowledgeBase::insert(KnowledgeEntry entry) {
    entry.validate();
    std::unique_lock lock(mutex_);
    entry.id = next_id_++;
    double n = norm_of(entry.key);
    slots_.push_back({std::make_shared<const KnowledgeEntry>(std::move(entry)), n});
    return slots_.back().entry->id;
}

std::vector<SimilarityHit> KnowledgeBase::top_k(const PairEmbedding& query, int k) const {
    if (k < 1) throw Error(ErrorCode::Param, "k must be at least 1");
    if (query.size() != kPairDim) {
        throw Error(ErrorCode::Dim, "query key must have 16 entries");
    }
    const double qn = norm_of(query);
    std::shared_lock lock(mutex_);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& key = slots_[i].entry->key;
        double sim = 0.0;
        if (qn > 0.0 && slots_[i].norm > 0.0) {
            double dot = 0.0;
            for (std::size_t j = 0; j < kPairDim; ++j) dot += query[j] * key[j];
            sim = std::clamp(dot / (qn * slots_[i].norm), -1.0, 1.0);
        }
        scored.emplace_back(sim, i);
    }
    const std::size_t take = std::min(scored.size(), static_cast<std::size_t>(k));
    // Slots are in ascending id order, so the index breaks ties by id.
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    std::vector<SimilarityHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        hits.push_back({slots_[scored[i].second].entry, scored[i].first});
    }
    return hits;
}

std::size_t KnowledgeBase::index_of(std::int64_t id) const {
    auto it = std::lower_bound(slots_.begin(), slots_.end(), id,
                               [](const Slot& s, std::int64_t v) { return s.entry->id < v; });
    if (it == slots_.end() || it->entry->id != id) {
        throw Error(ErrorCode::NotFound, "no knowledge entry with id " + std::to_string(id));
    }
    return static_cast<std::size_t>(it - slots_.begin());
}

KnowledgeEntry KnowledgeBase::replace(std::int64_t id, const std::string& explanation,
                                      Provenance provenance) {
    std::unique_lock lock(mutex_);
    std::size_t i = index_of(id);
    KnowledgeEntry updated = *slots_[i].entry;
    updated.explanation = explanation;
    updated.provenance = provenance;
    updated.validate();
    slots_[i].entry = std::make_shared<const KnowledgeEntry>(updated);
    return updated;
}

KnowledgeEntry KnowledgeBase::remove(std::int64_t id) {
    std::unique_lock lock(mutex_);
    std::size_t i = index_of(id);
    KnowledgeEntry removed = *slots_[i].entry;
    slots_.erase(slots_.begin() + static_cast<std::ptrdiff_t>(i));
    return removed;
}

std::optional<KnowledgeEntry> KnowledgeBase::get(std::int64_t id) const {
    std::shared_lock lock(mutex_);
    try {
        return *slots_[index_of(id)].entry;
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::vector<KnowledgeEntry> KnowledgeBase::list(std::size_t offset, std::size_t limit) const {
    std::shared_lock lock(mutex_);
    std::vector<KnowledgeEntry> out;
    for (std::size_t i = offset; i < slots_.size() && out.size() < limit; ++i) {
        out.push_back(*slots_[i].entry);
    }
    return out;
}

std::size_t KnowledgeBase::size() const {
    std::shared_lock lock(mutex_);
    return slots_.size();
}

std::int64_t KnowledgeBase::next_id() const {
    std::shared_lock lock(mutex_);
    return next_id_;
}

// File layout: one JSON header line, then one JSON record per line. Keys are
// written with 17 significant digits so a reload is bit-identical.
std::string KnowledgeBase::serialize() const {
    std::shared_lock lock(mutex_);
    std::ostringstream out;
    out << json{{"format", "htapx-kb"},
                {"version", kKbFormatVersion},
                {"dimension", kPairDim},
                {"count", slots_.size()},
                {"next_id", next_id_}}
               .dump()
        << '\n';
    for (const auto& slot : slots_) {
        json record = entry_to_json(*slot.entry);
        record.erase("key");
        record.erase("id");
        std::string rest = record.dump();
        out << "{\"id\":" << slot.entry->id << ",\"key\":[";
        for (std::size_t i = 0; i < slot.entry->key.size(); ++i) {
            if (i) out << ',';
            out << format_double(slot.entry->key[i]);
        }
        out << "]," << rest.substr(1) << '\n';
    }
    return out.str();
}

KnowledgeBase KnowledgeBase::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::Version, "knowledge base file is empty");
    }
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception&) {
        throw Error(ErrorCode::Version, "unreadable knowledge base header");
    }
    if (!header.is_object() || header.value("format", "") != "htapx-kb" ||
        header.value("version", -1) != kKbFormatVersion ||
        header.value("dimension", 0) != static_cast<int>(kPairDim) || !header.contains("count")) {
        throw Error(ErrorCode::Version, "unsupported knowledge base header");
    }
    const auto count = header.at("count").get<std::size_t>();
    KnowledgeBase kb;
    std::int64_t max_id = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        KnowledgeEntry e;
        try {
            e = entry_from_json(json::parse(line));
            e.validate();
        } catch (const json::exception&) {
            throw Error(ErrorCode::Version, "corrupt knowledge base record " +
                                                std::to_string(kb.slots_.size() + 1));
        } catch (const Error& err) {
            throw Error(ErrorCode::Version, "corrupt knowledge base record " +
                                                std::to_string(kb.slots_.size() + 1) + ": " + err.what());
        }
        if (e.id <= max_id) {
            throw Error(ErrorCode::Version, "knowledge base ids are not ascending");
        }
        max_id = e.id;
        double n = norm_of(e.key);
        kb.slots_.push_back({std::make_shared<const KnowledgeEntry>(std::move(e)), n});
    }
    if (kb.slots_.size() != count) {
        throw Error(ErrorCode::Version, "knowledge base holds " + std::to_string(kb.slots_.size()) +
                                            " records, header says " + std::to_string(count));
    }
    kb.next_id_ = std::max(header.value("next_id", std::int64_t{1}), max_id + 1);
    return kb;
}

void KnowledgeBase::persist(const std::string& path) const {
    write_file_atomic(path, serialize());
}

KnowledgeBase KnowledgeBase::load(const std::string& path) {
    return deserialize(read_file(path));
}

KnowledgeEntry seed_entry(const LabeledExample& example, const SchemaCatalog& catalog) {
    KnowledgeEntry e;
    e.query_text = render_sql(example.spec);
    e.plan_details = example.pair;
    e.plan_details.query_text = e.query_text;
    e.execution_result = example.result;
    e.explanation = expert_explanation(example, catalog);
    e.provenance = Provenance::ExpertSeed;
    return e;
}

KnowledgeBase build_seed_kb(const std::vector<LabeledExample>& examples, const RouterModel& model,
                            const SchemaCatalog& catalog) {
    KnowledgeBase kb;
    for (const auto& ex : examples) {
        KnowledgeEntry e = seed_entry(ex, catalog);
        e.key = embed_pair(model, e.plan_details);
        kb.insert(std::move(e));
    }
    return kb;
}

void write_entries_file(const std::string& path, const std::vector<KnowledgeEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        json j = entry_to_json(e);
        j.erase("id");
        if (e.key.empty()) j.erase("key");
        out += j.dump() + "\n";
    }
    write_file_atomic(path, out);
}

std::vector<KnowledgeEntry> read_entries_file(const std::string& path) {
    std::vector<KnowledgeEntry> out;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        try {
            out.push_back(entry_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Syntax, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace htapx
