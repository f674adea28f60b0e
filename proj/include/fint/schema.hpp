// Field declarations and the schema JSON file format.
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fint/common.hpp"

namespace fint {

enum class FieldKind { categorical, numeric, multivalent };

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::categorical: return "categorical";
        case FieldKind::numeric: return "numeric";
        case FieldKind::multivalent: return "multivalent";
    }
    return "?";
}

inline FieldKind field_kind_from_string(const std::string& s) {
    if (s == "categorical") return FieldKind::categorical;
    if (s == "numeric") return FieldKind::numeric;
    if (s == "multivalent") return FieldKind::multivalent;
    throw Error("unknown field kind: " + s);
}

// Vocab index 0 is reserved for "unknown" (rare values folded at prepare
// time), index 1 for "missing" (empty token). Real values start at 2.
constexpr uint32_t kUnknownIndex = 0;
constexpr uint32_t kMissingIndex = 1;
constexpr uint32_t kReservedIndices = 2;

struct FieldSchema {
    std::string name;
    FieldKind kind = FieldKind::categorical;
    uint32_t vocab_size = 0;  // categorical/multivalent only; includes reserved ids
    uint32_t max_values = 10; // multivalent cap, keep-first truncation
};

// Maps schema position -> kind-local column, so batches can store each kind
// in its own dense array.
struct SchemaIndex {
    std::vector<FieldKind> kinds;
    std::vector<uint32_t> within;
    uint32_t n_cat = 0, n_num = 0, n_mv = 0;

    SchemaIndex() = default;
    explicit SchemaIndex(const std::vector<FieldSchema>& schema) {
        kinds.reserve(schema.size());
        within.reserve(schema.size());
        for (const auto& f : schema) {
            kinds.push_back(f.kind);
            switch (f.kind) {
                case FieldKind::categorical: within.push_back(n_cat++); break;
                case FieldKind::numeric: within.push_back(n_num++); break;
                case FieldKind::multivalent: within.push_back(n_mv++); break;
            }
        }
    }
};

inline std::vector<FieldSchema> schema_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw Error("schema: expected a non-empty JSON list");
    std::vector<FieldSchema> out;
    for (const auto& e : j) {
        FieldSchema f;
        f.name = e.at("name").get<std::string>();
        f.kind = field_kind_from_string(e.at("kind").get<std::string>());
        if (e.contains("max_values")) f.max_values = e.at("max_values").get<uint32_t>();
        if (f.max_values < 1) throw Error("schema: max_values must be >= 1 for field " + f.name);
        out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<FieldSchema> load_schema_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open schema file: " + path);
    nlohmann::json j;
    in >> j;
    return schema_from_json(j);
}

inline nlohmann::json schema_to_json(const std::vector<FieldSchema>& schema) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& f : schema) {
        nlohmann::json e{{"name", f.name}, {"kind", to_string(f.kind)}};
        if (f.kind == FieldKind::multivalent) e["max_values"] = f.max_values;
        j.push_back(std::move(e));
    }
    return j;
}

} // namespace fint
