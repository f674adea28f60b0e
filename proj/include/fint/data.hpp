// Data preparation: TSV parsing, vocabulary building with rare-value folding,
// numeric normalization, deterministic splits, mini-batching, the FINTDATA
// binary format, and the planted-parity synthetic generator.
#pragma once

#include <array>
#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fint/common.hpp"
#include "fint/schema.hpp"

namespace fint {

static_assert(std::endian::native == std::endian::little,
              "FINTDATA/FINTCKPT are little-endian formats");

// ---------------------------------------------------------------------------
// In-memory dataset
// ---------------------------------------------------------------------------

struct Example {
    uint8_t label = 0;
    std::vector<uint32_t> cat;              // one index per categorical field
    std::vector<real> num;                  // one normalized value per numeric field
    std::vector<std::vector<uint32_t>> mv;  // member indices per multivalent field
};

struct Dataset {
    std::vector<FieldSchema> schema;
    std::vector<Example> rows;

    size_t size() const { return rows.size(); }
};

// Densified batch: per-kind columnar arrays sharing leading dimension B.
struct MiniBatch {
    size_t size = 0;
    std::vector<uint8_t> labels;
    std::vector<std::vector<uint32_t>> cat; // [n_cat][B]
    std::vector<std::vector<real>> num;     // [n_num][B]
    struct MvColumn {
        std::vector<uint32_t> offsets;      // B+1 prefix offsets into values
        std::vector<uint32_t> values;
    };
    std::vector<MvColumn> mv;               // [n_mv]
};

inline MiniBatch densify(const Dataset& ds, std::span<const uint32_t> indices) {
    SchemaIndex si(ds.schema);
    MiniBatch b;
    b.size = indices.size();
    b.labels.reserve(indices.size());
    b.cat.assign(si.n_cat, {});
    b.num.assign(si.n_num, {});
    b.mv.assign(si.n_mv, {});
    for (auto& c : b.cat) c.reserve(indices.size());
    for (auto& c : b.num) c.reserve(indices.size());
    for (auto& c : b.mv) c.offsets.push_back(0);
    for (uint32_t idx : indices) {
        const Example& ex = ds.rows[idx];
        b.labels.push_back(ex.label);
        for (uint32_t f = 0; f < si.n_cat; ++f) b.cat[f].push_back(ex.cat[f]);
        for (uint32_t f = 0; f < si.n_num; ++f) b.num[f].push_back(ex.num[f]);
        for (uint32_t f = 0; f < si.n_mv; ++f) {
            auto& col = b.mv[f];
            col.values.insert(col.values.end(), ex.mv[f].begin(), ex.mv[f].end());
            col.offsets.push_back(static_cast<uint32_t>(col.values.size()));
        }
    }
    return b;
}

// One epoch of mini-batches. The final partial batch is emitted. Without a
// shuffle seed the source order is preserved.
class BatchStream {
public:
    BatchStream(const Dataset& ds, size_t batch_size, std::optional<uint64_t> shuffle_seed)
        : ds_(&ds), batch_size_(batch_size) {
        if (batch_size < 1) throw Error("batch_size must be >= 1");
        order_.resize(ds.size());
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<uint32_t>(i);
        if (shuffle_seed) {
            Rng rng(*shuffle_seed);
            rng.shuffle(order_);
        }
    }

    std::optional<MiniBatch> next() {
        if (pos_ >= order_.size()) return std::nullopt;
        size_t take = std::min(batch_size_, order_.size() - pos_);
        MiniBatch b = densify(*ds_, std::span<const uint32_t>(order_.data() + pos_, take));
        pos_ += take;
        return b;
    }

    size_t num_batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

private:
    const Dataset* ds_;
    std::vector<uint32_t> order_;
    size_t batch_size_;
    size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// z* = ln(z+1) + 1, with z clamped to >= 0 first. Missing values are encoded
// as 0.0 by the caller, which keeps them distinguishable from a raw 0 (-> 1.0).
inline real normalize_numeric(real z) {
    if (z < 0) z = 0;
    return std::log1p(z) + real(1);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct FieldVocabInfo {
    std::map<std::string, uint32_t> vocab;  // retained raw value -> index >= 2
    uint64_t retained = 0;
    uint64_t folded_distinct = 0;     // distinct raw values folded to "unknown"
    uint64_t folded_occurrences = 0;  // their total occurrence count (training split)
};

struct NumericStats {
    uint64_t clamped = 0;     // negative raw values clamped to 0
    uint64_t missing = 0;     // empty tokens
    uint64_t unparsable = 0;  // non-numeric tokens treated as missing
};

struct DatasetManifest {
    std::vector<FieldSchema> schema;        // vocab_size filled for cat/mv fields
    std::vector<FieldVocabInfo> vocabs;     // parallel to schema (empty for numeric)
    uint32_t min_count = 10;
    uint64_t seed = 0;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
    std::array<uint64_t, 3> split_rows{0, 0, 0};
    NumericStats numeric_stats;
    uint64_t source_checksum = 0;
    std::vector<std::string> warnings;
    nlohmann::json extra;  // generator metadata (planted structure) when present

    std::string checksum_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(source_checksum));
        return buf;
    }

    // Hash over field names, kinds, vocab sizes and the full vocabulary
    // tables. Checkpoints store it; evaluate/predict refuse on mismatch.
    std::string schema_hash() const {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (size_t f = 0; f < schema.size(); ++f) {
            h = fnv1a64(schema[f].name, h);
            h = fnv1a64(to_string(schema[f].kind), h);
            uint32_t meta[2] = {schema[f].vocab_size, schema[f].max_values};
            h = fnv1a64(meta, sizeof meta, h);
            if (f < vocabs.size()) {
                for (const auto& [raw, idx] : vocabs[f].vocab) {
                    h = fnv1a64(raw, h);
                    h = fnv1a64(&idx, sizeof idx, h);
                }
            }
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    nlohmann::json to_json() const {
        nlohmann::json fields = nlohmann::json::array();
        for (size_t f = 0; f < schema.size(); ++f) {
            nlohmann::json e{{"name", schema[f].name}, {"kind", to_string(schema[f].kind)}};
            if (schema[f].kind != FieldKind::numeric) {
                e["vocab_size"] = schema[f].vocab_size;
                e["retained"] = vocabs[f].retained;
                e["folded_distinct"] = vocabs[f].folded_distinct;
                e["folded_occurrences"] = vocabs[f].folded_occurrences;
                e["vocab"] = vocabs[f].vocab;
            }
            if (schema[f].kind == FieldKind::multivalent) e["max_values"] = schema[f].max_values;
            fields.push_back(std::move(e));
        }
        nlohmann::json j{
            {"format", "fint-manifest"},
            {"version", 1},
            {"min_count", min_count},
            {"seed", seed},
            {"split_ratios", split_ratios},
            {"rows", {{"train", split_rows[0]}, {"val", split_rows[1]}, {"test", split_rows[2]}}},
            {"normalization", "z* = ln(z+1) + 1; z clamped to >= 0; missing -> 0"},
            {"numeric_stats",
             {{"clamped", numeric_stats.clamped},
              {"missing", numeric_stats.missing},
              {"unparsable", numeric_stats.unparsable}}},
            {"source_checksum", checksum_hex()},
            {"schema_hash", schema_hash()},
            {"fields", std::move(fields)},
            {"warnings", warnings},
        };
        if (!extra.is_null()) j["generator"] = extra;
        return j;
    }

    static DatasetManifest from_json(const nlohmann::json& j) {
        if (j.value("format", "") != std::string("fint-manifest"))
            throw Error("not a fint manifest");
        DatasetManifest m;
        m.min_count = j.at("min_count").get<uint32_t>();
        m.seed = j.at("seed").get<uint64_t>();
        m.split_ratios = j.at("split_ratios").get<std::array<double, 3>>();
        m.split_rows = {j.at("rows").at("train").get<uint64_t>(),
                        j.at("rows").at("val").get<uint64_t>(),
                        j.at("rows").at("test").get<uint64_t>()};
        m.numeric_stats.clamped = j.at("numeric_stats").at("clamped").get<uint64_t>();
        m.numeric_stats.missing = j.at("numeric_stats").at("missing").get<uint64_t>();
        m.numeric_stats.unparsable = j.at("numeric_stats").at("unparsable").get<uint64_t>();
        m.source_checksum = std::stoull(j.at("source_checksum").get<std::string>(), nullptr, 16);
        if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
        if (j.contains("generator")) m.extra = j.at("generator");
        for (const auto& e : j.at("fields")) {
            FieldSchema f;
            f.name = e.at("name").get<std::string>();
            f.kind = field_kind_from_string(e.at("kind").get<std::string>());
            FieldVocabInfo vi;
            if (f.kind != FieldKind::numeric) {
                f.vocab_size = e.at("vocab_size").get<uint32_t>();
                vi.vocab = e.at("vocab").get<std::map<std::string, uint32_t>>();
                vi.retained = e.at("retained").get<uint64_t>();
                vi.folded_distinct = e.at("folded_distinct").get<uint64_t>();
                vi.folded_occurrences = e.at("folded_occurrences").get<uint64_t>();
            }
            if (e.contains("max_values")) f.max_values = e.at("max_values").get<uint32_t>();
            m.schema.push_back(std::move(f));
            m.vocabs.push_back(std::move(vi));
        }
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write manifest: " + path);
        out << to_json().dump(2) << "\n";
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open manifest: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

// ---------------------------------------------------------------------------
// Raw TSV parsing
// ---------------------------------------------------------------------------

struct RawRow {
    uint8_t label = 0;
    std::vector<std::string> fields; // raw tokens, one per schema field
};

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t p = s.find(sep, start);
        if (p == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
    return out;
}

// Label first, then one token per field in schema order, TAB-separated.
inline RawRow parse_raw_row(const std::string& line, size_t n_fields) {
    auto tokens = split_on(line, '\t');
    if (tokens.size() != n_fields + 1) {
        std::ostringstream os;
        os << "expected " << (n_fields + 1) << " tab-separated tokens, got " << tokens.size();
        throw Error(os.str());
    }
    RawRow row;
    if (tokens[0] == "0") row.label = 0;
    else if (tokens[0] == "1") row.label = 1;
    else throw Error("label must be 0 or 1, got '" + tokens[0] + "'");
    row.fields.assign(tokens.begin() + 1, tokens.end());
    return row;
}

// ---------------------------------------------------------------------------
// Vocabulary building and encoding
// ---------------------------------------------------------------------------

// Counts raw categorical/multivalent values over `rows` and retains every
// value with frequency >= min_count, assigning indices 2.. in lexicographic
// order. Everything else folds to "unknown" (0); empty maps to "missing" (1).
inline void build_vocab(DatasetManifest& manifest, const std::vector<RawRow>& rows) {
    const auto& schema = manifest.schema;
    manifest.vocabs.assign(schema.size(), {});
    std::vector<std::unordered_map<std::string, uint64_t>> counts(schema.size());
    for (const auto& row : rows) {
        for (size_t f = 0; f < schema.size(); ++f) {
            if (schema[f].kind == FieldKind::numeric) continue;
            const std::string& tok = row.fields[f];
            if (tok.empty()) continue;
            if (schema[f].kind == FieldKind::categorical) {
                ++counts[f][tok];
            } else {
                for (auto& member : split_on(tok, ','))
                    if (!member.empty()) ++counts[f][member];
            }
        }
    }
    for (size_t f = 0; f < schema.size(); ++f) {
        if (schema[f].kind == FieldKind::numeric) continue;
        auto& vi = manifest.vocabs[f];
        std::vector<const std::string*> retained;
        for (const auto& [raw, n] : counts[f]) {
            if (n >= manifest.min_count) {
                retained.push_back(&raw);
            } else {
                ++vi.folded_distinct;
                vi.folded_occurrences += n;
            }
        }
        std::sort(retained.begin(), retained.end(),
                  [](const std::string* a, const std::string* b) { return *a < *b; });
        uint32_t next = kReservedIndices;
        for (const auto* raw : retained) vi.vocab.emplace(*raw, next++);
        vi.retained = retained.size();
        manifest.schema[f].vocab_size = kReservedIndices + static_cast<uint32_t>(retained.size());
        if (retained.empty()) {
            manifest.warnings.push_back("field '" + schema[f].name +
                                        "' retained no values; it is constant");
        }
    }
}

// Encodes one raw row against a finished manifest.
inline Example encode_row(const RawRow& row, const DatasetManifest& manifest,
                          NumericStats* stats = nullptr) {
    Example ex;
    ex.label = row.label;
    for (size_t f = 0; f < manifest.schema.size(); ++f) {
        const FieldSchema& fs = manifest.schema[f];
        const std::string& tok = row.fields[f];
        switch (fs.kind) {
            case FieldKind::categorical: {
                uint32_t idx = kMissingIndex;
                if (!tok.empty()) {
                    auto it = manifest.vocabs[f].vocab.find(tok);
                    idx = it == manifest.vocabs[f].vocab.end() ? kUnknownIndex : it->second;
                }
                ex.cat.push_back(idx);
                break;
            }
            case FieldKind::numeric: {
                real v = 0;
                if (tok.empty()) {
                    if (stats) ++stats->missing;
                } else {
                    char* end = nullptr;
                    double z = std::strtod(tok.c_str(), &end);
                    if (end != tok.c_str() + tok.size() || !std::isfinite(z)) {
                        if (stats) ++stats->unparsable;
                    } else {
                        if (z < 0 && stats) ++stats->clamped;
                        v = normalize_numeric(static_cast<real>(z));
                    }
                }
                ex.num.push_back(v);
                break;
            }
            case FieldKind::multivalent: {
                std::vector<uint32_t> members;
                if (!tok.empty()) {
                    for (auto& member : split_on(tok, ',')) {
                        if (member.empty()) continue;
                        if (members.size() >= fs.max_values) break; // keep-first cap
                        auto it = manifest.vocabs[f].vocab.find(member);
                        members.push_back(it == manifest.vocabs[f].vocab.end() ? kUnknownIndex
                                                                               : it->second);
                    }
                }
                ex.mv.push_back(std::move(members));
                break;
            }
        }
    }
    return ex;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

// Deterministic pseudo-random partition into train/val/test index sets.
inline std::array<std::vector<uint32_t>, 3> split_indices(size_t n,
                                                          std::array<double, 3> ratios,
                                                          uint64_t seed) {
    if (n == 0) throw Error("split: empty input");
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw Error("split: ratios must sum to 1");
    std::vector<uint32_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<uint32_t>(i);
    Rng rng(seed);
    rng.shuffle(order);
    size_t b1 = static_cast<size_t>(n * ratios[0] + 1e-9);
    size_t b2 = static_cast<size_t>(n * (ratios[0] + ratios[1]) + 1e-9);
    return {std::vector<uint32_t>(order.begin(), order.begin() + b1),
            std::vector<uint32_t>(order.begin() + b1, order.begin() + b2),
            std::vector<uint32_t>(order.begin() + b2, order.end())};
}

inline std::array<Dataset, 3> split(const Dataset& ds, std::array<double, 3> ratios,
                                    uint64_t seed) {
    auto parts = split_indices(ds.size(), ratios, seed);
    std::array<Dataset, 3> out;
    for (int s = 0; s < 3; ++s) {
        out[s].schema = ds.schema;
        out[s].rows.reserve(parts[s].size());
        for (uint32_t i : parts[s]) out[s].rows.push_back(ds.rows[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// FINTDATA binary format
// ---------------------------------------------------------------------------
//
//   magic   "FINTDATA" (8 bytes)
//   u32     format version (1)
//   u64     row count
//   u32     field count
//   per row, fields in schema order:
//     u8    label
//     categorical  -> u32 index
//     numeric      -> f64 value
//     multivalent  -> u8 count, then count * u32 indices

constexpr uint32_t kDataFormatVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw Error(std::string("truncated file while reading ") + what);
    return v;
}

} // namespace detail

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset: " + path);
    out.write("FINTDATA", 8);
    detail::write_pod(out, kDataFormatVersion);
    detail::write_pod(out, static_cast<uint64_t>(ds.rows.size()));
    detail::write_pod(out, static_cast<uint32_t>(ds.schema.size()));
    SchemaIndex si(ds.schema);
    for (const auto& ex : ds.rows) {
        detail::write_pod(out, ex.label);
        for (size_t f = 0; f < ds.schema.size(); ++f) {
            switch (ds.schema[f].kind) {
                case FieldKind::categorical:
                    detail::write_pod(out, ex.cat[si.within[f]]);
                    break;
                case FieldKind::numeric: {
                    double v = static_cast<double>(ex.num[si.within[f]]);
                    detail::write_pod(out, v);
                    break;
                }
                case FieldKind::multivalent: {
                    const auto& members = ex.mv[si.within[f]];
                    detail::write_pod(out, static_cast<uint8_t>(members.size()));
                    for (uint32_t m : members) detail::write_pod(out, m);
                    break;
                }
            }
        }
    }
    if (!out) throw Error("I/O error while writing dataset: " + path);
}

inline Dataset read_dataset(const std::string& path, const std::vector<FieldSchema>& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "FINTDATA", 8) != 0)
        throw Error("not a FINTDATA file: " + path);
    uint32_t version = detail::read_pod<uint32_t>(in, "version");
    if (version != kDataFormatVersion)
        throw Error("unsupported FINTDATA version " + std::to_string(version));
    uint64_t n_rows = detail::read_pod<uint64_t>(in, "row count");
    uint32_t n_fields = detail::read_pod<uint32_t>(in, "field count");
    if (n_fields != schema.size())
        throw Error("field count mismatch: file has " + std::to_string(n_fields) +
                    ", schema has " + std::to_string(schema.size()));

    Dataset ds;
    ds.schema = schema;
    ds.rows.reserve(n_rows);
    SchemaIndex si(schema);
    for (uint64_t r = 0; r < n_rows; ++r) {
        Example ex;
        ex.label = detail::read_pod<uint8_t>(in, "label");
        if (ex.label > 1) throw Error("label outside {0,1} at row " + std::to_string(r));
        for (size_t f = 0; f < schema.size(); ++f) {
            switch (schema[f].kind) {
                case FieldKind::categorical: {
                    uint32_t idx = detail::read_pod<uint32_t>(in, "index");
                    if (idx >= schema[f].vocab_size)
                        throw Error("index " + std::to_string(idx) + " out of range for field '" +
                                    schema[f].name + "' at row " + std::to_string(r));
                    ex.cat.push_back(idx);
                    break;
                }
                case FieldKind::numeric:
                    ex.num.push_back(static_cast<real>(detail::read_pod<double>(in, "value")));
                    break;
                case FieldKind::multivalent: {
                    uint8_t count = detail::read_pod<uint8_t>(in, "member count");
                    if (count > schema[f].max_values)
                        throw Error("multivalent count exceeds max_values at row " +
                                    std::to_string(r));
                    std::vector<uint32_t> members(count);
                    for (auto& m : members) {
                        m = detail::read_pod<uint32_t>(in, "member index");
                        if (m >= schema[f].vocab_size)
                            throw Error("member index out of range for field '" + schema[f].name +
                                        "' at row " + std::to_string(r));
                    }
                    ex.mv.push_back(std::move(members));
                    break;
                }
            }
        }
        ds.rows.push_back(std::move(ex));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// End-to-end preparation
// ---------------------------------------------------------------------------

struct PrepareResult {
    DatasetManifest manifest;
    std::array<Dataset, 3> splits; // train, val, test
    uint64_t rows_read = 0;
    uint64_t malformed = 0;
    std::vector<std::string> row_errors;            // "line N: why" (first 20 kept)
    std::array<uint64_t, 3> unknown_occurrences{};  // encoded index-0 count per split
};

// Reads raw TSV, splits rows, builds the vocabulary on the training split
// only, then encodes all three splits against the shared manifest.
inline PrepareResult prepare(std::istream& input, const std::vector<FieldSchema>& schema,
                             uint32_t min_count, uint64_t seed,
                             std::array<double, 3> ratios = {0.8, 0.1, 0.1}) {
    if (min_count < 1) throw Error("min_count must be >= 1");
    PrepareResult res;
    res.manifest.schema = schema;
    res.manifest.min_count = min_count;
    res.manifest.seed = seed;
    res.manifest.split_ratios = ratios;

    std::vector<RawRow> rows;
    std::string line;
    uint64_t line_no = 0;
    uint64_t checksum = 0xcbf29ce484222325ULL;
    while (std::getline(input, line)) {
        ++line_no;
        checksum = fnv1a64(line, checksum);
        if (line.empty()) continue;
        ++res.rows_read;
        try {
            rows.push_back(parse_raw_row(line, schema.size()));
        } catch (const Error& e) {
            ++res.malformed;
            if (res.row_errors.size() < 20)
                res.row_errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    res.manifest.source_checksum = checksum;
    if (rows.empty()) throw Error("no valid rows in input");

    auto parts = split_indices(rows.size(), ratios, seed);
    std::vector<RawRow> train_rows;
    train_rows.reserve(parts[0].size());
    for (uint32_t i : parts[0]) train_rows.push_back(rows[i]);
    build_vocab(res.manifest, train_rows);

    for (int s = 0; s < 3; ++s) {
        res.splits[s].schema = res.manifest.schema;
        res.splits[s].rows.reserve(parts[s].size());
        for (uint32_t i : parts[s]) {
            Example ex = encode_row(rows[i], res.manifest, &res.manifest.numeric_stats);
            for (uint32_t idx : ex.cat)
                if (idx == kUnknownIndex) ++res.unknown_occurrences[s];
            for (const auto& members : ex.mv)
                for (uint32_t idx : members)
                    if (idx == kUnknownIndex) ++res.unknown_occurrences[s];
            res.splits[s].rows.push_back(std::move(ex));
        }
        res.manifest.split_rows[s] = res.splits[s].rows.size();
    }
    return res;
}

// ---------------------------------------------------------------------------
// Synthetic planted-parity data
// ---------------------------------------------------------------------------

struct SynthSpec {
    uint64_t rows = 10000;
    uint32_t fields = 6;       // M
    uint32_t cardinality = 16; // C
    uint32_t order = 2;        // r: label = parity of the low bit of fields 0..r-1
    double noise = 0.0;        // label flip probability
    uint64_t seed = 1;
};

inline std::vector<FieldSchema> synth_schema(uint32_t fields) {
    std::vector<FieldSchema> schema;
    for (uint32_t f = 0; f < fields; ++f)
        schema.push_back({"f" + std::to_string(f), FieldKind::categorical, 0, 10});
    return schema;
}

// Writes raw TSV rows whose label is the XOR of the low bit of the first
// `order` fields, flipped with probability `noise`. Returns metadata
// describing the planted structure.
inline nlohmann::json synth_parity(const SynthSpec& spec, std::ostream& out) {
    if (spec.order > spec.fields) throw Error("synth: order must be <= fields");
    if (spec.cardinality < 2) throw Error("synth: cardinality must be >= 2");
    if (spec.rows == 0) throw Error("synth: rows must be >= 1");
    Rng rng(spec.seed);
    std::string line;
    for (uint64_t r = 0; r < spec.rows; ++r) {
        unsigned parity = 0;
        line.clear();
        std::array<char, 24> buf;
        for (uint32_t f = 0; f < spec.fields; ++f) {
            uint64_t v = rng.below(spec.cardinality);
            if (f < spec.order) parity ^= static_cast<unsigned>(v & 1);
            int len = std::snprintf(buf.data(), buf.size(), "\t%llu",
                                    static_cast<unsigned long long>(v));
            line.append(buf.data(), len);
        }
        unsigned label = parity;
        if (spec.noise > 0 && rng.bernoulli(spec.noise)) label ^= 1;
        out << label << line << "\n";
    }
    return nlohmann::json{{"kind", "parity"},
                          {"rows", spec.rows},
                          {"fields", spec.fields},
                          {"cardinality", spec.cardinality},
                          {"order", spec.order},
                          {"planted_fields", [&] {
                               std::vector<uint32_t> pf(spec.order);
                               for (uint32_t i = 0; i < spec.order; ++i) pf[i] = i;
                               return pf;
                           }()},
                          {"noise", spec.noise},
                          {"seed", spec.seed}};
}

} // namespace fint
