// FINTCKPT container: magic, version, JSON header describing the model and a
// named tensor manifest with byte offsets, then raw 64-bit float blobs.
// Deterministic byte-for-byte given identical inputs.
#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fint/common.hpp"
#include "fint/data.hpp"
#include "fint/optim.hpp"

namespace fint {

constexpr uint32_t kCkptFormatVersion = 1;

struct Checkpoint {
    std::string model_kind; // "fint" | "lr" | "fm"
    nlohmann::json config;
    std::string schema_hash;
    std::vector<std::string> tensor_order;
    std::map<std::string, std::vector<real>> tensors;

    bool has_adam = false;
    AdamConfig adam_cfg;
    int64_t adam_t = 0;
    std::map<std::string, AdamState::Slot> adam_slots;

    AdamState adam_state() const {
        if (!has_adam) throw Error("checkpoint carries no optimizer state");
        AdamState st;
        st.cfg = adam_cfg;
        st.t = adam_t;
        st.slots = adam_slots;
        return st;
    }
};

namespace detail {

inline void write_blob(std::ostream& out, const real* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(data[i]);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

inline std::vector<real> read_blob(std::istream& in, size_t n, const std::string& what) {
    std::vector<real> out(n);
    for (size_t i = 0; i < n; ++i) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw Error("truncated checkpoint while reading " + what);
        out[i] = static_cast<real>(v);
    }
    return out;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const std::string& model_kind,
                            const nlohmann::json& config, const std::string& schema_hash,
                            std::span<TensorView> tensors, const AdamState* adam = nullptr) {
    nlohmann::json manifest = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& t : tensors) {
        manifest.push_back({{"name", t.name}, {"size", t.size}, {"offset", offset}});
        offset += t.size * sizeof(double);
    }
    nlohmann::json header{
        {"format", "fint-checkpoint"},
        {"version", kCkptFormatVersion},
        {"model", model_kind},
        {"config", config},
        {"schema_hash", schema_hash},
        {"tensors", std::move(manifest)},
    };
    if (adam) {
        nlohmann::json slots = nlohmann::json::array();
        for (const auto& [name, slot] : adam->slots) {
            slots.push_back({{"name", name}, {"size", slot.m.size()}, {"offset", offset}});
            offset += 2 * slot.m.size() * sizeof(double); // m then v
        }
        header["adam"] = {{"t", adam->t},
                          {"lr", adam->cfg.lr},
                          {"beta1", adam->cfg.beta1},
                          {"beta2", adam->cfg.beta2},
                          {"eps", adam->cfg.eps},
                          {"slots", std::move(slots)}};
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out.write("FINTCKPT", 8);
    detail::write_pod(out, kCkptFormatVersion);
    const std::string head = header.dump();
    detail::write_pod(out, static_cast<uint64_t>(head.size()));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& t : tensors) detail::write_blob(out, t.data, t.size);
    if (adam) {
        for (const auto& [name, slot] : adam->slots) {
            detail::write_blob(out, slot.m.data(), slot.m.size());
            detail::write_blob(out, slot.v.data(), slot.v.size());
        }
    }
    if (!out) throw Error("I/O error while writing checkpoint: " + path);
}

// expected_schema_hash, when given, must match the stored hash; the error
// message carries both so a mismatch is diagnosable from logs alone.
inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::string& expected_schema_hash = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "FINTCKPT", 8) != 0)
        throw Error("not a FINTCKPT file: " + path);
    const auto version = detail::read_pod<uint32_t>(in, "version");
    if (version != kCkptFormatVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));
    const auto head_len = detail::read_pod<uint64_t>(in, "header length");
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw Error("truncated checkpoint header");
    nlohmann::json header = nlohmann::json::parse(head);
    if (header.value("format", "") != std::string("fint-checkpoint"))
        throw Error("not a fint checkpoint header");

    Checkpoint ck;
    ck.model_kind = header.at("model").get<std::string>();
    ck.config = header.at("config");
    ck.schema_hash = header.at("schema_hash").get<std::string>();
    if (!expected_schema_hash.empty() && expected_schema_hash != ck.schema_hash)
        throw Error("schema hash mismatch: checkpoint " + ck.schema_hash + ", dataset " +
                    expected_schema_hash);
    for (const auto& e : header.at("tensors")) {
        const auto name = e.at("name").get<std::string>();
        const auto size = e.at("size").get<uint64_t>();
        ck.tensor_order.push_back(name);
        ck.tensors.emplace(name, detail::read_blob(in, size, "tensor " + name));
    }
    if (header.contains("adam")) {
        const auto& a = header.at("adam");
        ck.has_adam = true;
        ck.adam_t = a.at("t").get<int64_t>();
        ck.adam_cfg.lr = static_cast<real>(a.at("lr").get<double>());
        ck.adam_cfg.beta1 = static_cast<real>(a.at("beta1").get<double>());
        ck.adam_cfg.beta2 = static_cast<real>(a.at("beta2").get<double>());
        ck.adam_cfg.eps = static_cast<real>(a.at("eps").get<double>());
        for (const auto& e : a.at("slots")) {
            const auto name = e.at("name").get<std::string>();
            const auto size = e.at("size").get<uint64_t>();
            AdamState::Slot slot;
            slot.m = detail::read_blob(in, size, "adam m " + name);
            slot.v = detail::read_blob(in, size, "adam v " + name);
            ck.adam_slots.emplace(name, std::move(slot));
        }
    }
    return ck;
}

// Copies stored tensors into live parameter views. Names and sizes must agree
// exactly in both directions.
inline void apply_checkpoint(const Checkpoint& ck, std::span<TensorView> views) {
    if (views.size() != ck.tensors.size())
        throw Error("checkpoint tensor count " + std::to_string(ck.tensors.size()) +
                    " does not match the model's " + std::to_string(views.size()));
    for (auto& v : views) {
        auto it = ck.tensors.find(v.name);
        if (it == ck.tensors.end())
            throw Error("checkpoint is missing tensor " + v.name);
        if (it->second.size() != v.size)
            throw Error("checkpoint tensor " + v.name + " has size " +
                        std::to_string(it->second.size()) + ", expected " +
                        std::to_string(v.size));
        std::copy(it->second.begin(), it->second.end(), v.data);
    }
}

} // namespace fint
