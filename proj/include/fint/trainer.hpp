// Training orchestration: a uniform handle over the three model kinds, the
// epoch loop with validation-AUC early stopping, and full-pass evaluation.
#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fint/baselines.hpp"
#include "fint/checkpoint.hpp"
#include "fint/data.hpp"
#include "fint/metrics.hpp"
#include "fint/model.hpp"
#include "fint/optim.hpp"

namespace fint {

enum class ModelKind { fint, lr, fm };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::fint: return "fint";
        case ModelKind::lr: return "lr";
        case ModelKind::fm: return "fm";
    }
    throw Error("unreachable model kind");
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "fint") return ModelKind::fint;
    if (s == "lr") return ModelKind::lr;
    if (s == "fm") return ModelKind::fm;
    throw Error("unknown model kind: " + s + " (expected fint, lr or fm)");
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct TrainConfig {
    ModelKind model = ModelKind::fint;
    FintConfig fint;             // embed_dim 16, layers 3, hidden [300,300,300]
    uint32_t fm_factor_dim = 16;
    AdamConfig adam;             // lr 1e-3
    uint32_t batch_size = 1024;
    uint32_t max_epochs = 20;
    uint32_t patience = 3;
    uint64_t init_seed = 1;
    uint64_t shuffle_seed = 7;
    bool deterministic = true;  // keeps batch production strictly sequential
    bool restore_best = true;   // put the best-epoch weights back after the loop
    bool save_optimizer = false;

    std::string data;  // dataset directory (manifest + split files)
    std::string out;   // checkpoint path
    std::string log;   // epoch log path, JSON lines

    void validate() const {
        fint.validate();
        if (batch_size < 1) throw Error("train: batch_size must be >= 1");
        if (fm_factor_dim < 1) throw Error("train: fm_factor_dim must be >= 1");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"model", to_string(model)},
                              {"embed_dim", fint.embed_dim},
                              {"layers", fint.layers},
                              {"ffn_hidden", fint.ffn_hidden},
                              {"fm_factor_dim", fm_factor_dim},
                              {"lr", adam.lr},
                              {"batch_size", batch_size},
                              {"max_epochs", max_epochs},
                              {"patience", patience},
                              {"init_seed", init_seed},
                              {"shuffle_seed", shuffle_seed},
                              {"deterministic", deterministic},
                              {"restore_best", restore_best},
                              {"save_optimizer", save_optimizer},
                              {"data", data},
                              {"out", out},
                              {"log", log}};
    }

    // Strict parse: a misspelled key is an error, not a silently ignored one.
    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        for (const auto& [key, val] : j.items()) {
            if (key == "model") c.model = model_kind_from_string(val.get<std::string>());
            else if (key == "embed_dim") c.fint.embed_dim = val.get<uint32_t>();
            else if (key == "layers") c.fint.layers = val.get<uint32_t>();
            else if (key == "ffn_hidden") c.fint.ffn_hidden = val.get<std::vector<uint32_t>>();
            else if (key == "fm_factor_dim") c.fm_factor_dim = val.get<uint32_t>();
            else if (key == "lr") c.adam.lr = val.get<real>();
            else if (key == "batch_size") c.batch_size = val.get<uint32_t>();
            else if (key == "max_epochs") c.max_epochs = val.get<uint32_t>();
            else if (key == "patience") c.patience = val.get<uint32_t>();
            else if (key == "init_seed") c.init_seed = val.get<uint64_t>();
            else if (key == "shuffle_seed") c.shuffle_seed = val.get<uint64_t>();
            else if (key == "deterministic") c.deterministic = val.get<bool>();
            else if (key == "restore_best") c.restore_best = val.get<bool>();
            else if (key == "save_optimizer") c.save_optimizer = val.get<bool>();
            else if (key == "data") c.data = val.get<std::string>();
            else if (key == "out") c.out = val.get<std::string>();
            else if (key == "log") c.log = val.get<std::string>();
            else throw Error("unknown config key: " + key);
        }
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Model handle
// ---------------------------------------------------------------------------

// One struct holds whichever parameter set is active plus its tape, so the
// epoch loop, the checkpoint code and the harnesses see a single interface.
struct Model {
    ModelKind kind = ModelKind::fint;
    FintParams fint;
    LrParams lr;
    FmParams fm;
    FintTape fint_tape;
    LrTape lr_tape;
    FmTape fm_tape;

    const std::vector<FieldSchema>& schema() const {
        switch (kind) {
            case ModelKind::fint: return fint.schema;
            case ModelKind::lr: return lr.layout.schema;
            case ModelKind::fm: return fm.layout.schema;
        }
        throw Error("unreachable model kind");
    }

    std::vector<TensorView> tensor_views() {
        switch (kind) {
            case ModelKind::fint: return fint.tensor_views();
            case ModelKind::lr: return lr.tensor_views();
            case ModelKind::fm: return fm.tensor_views();
        }
        throw Error("unreachable model kind");
    }

    nlohmann::json config_json() const {
        switch (kind) {
            case ModelKind::fint:
                return nlohmann::json{{"embed_dim", fint.cfg.embed_dim},
                                      {"layers", fint.cfg.layers},
                                      {"ffn_hidden", fint.cfg.ffn_hidden}};
            case ModelKind::lr: return nlohmann::json::object();
            case ModelKind::fm: return nlohmann::json{{"factor_dim", fm.factor_dim}};
        }
        throw Error("unreachable model kind");
    }

    const std::vector<real>& forward(const MiniBatch& mb, StageTimes* times = nullptr) {
        switch (kind) {
            case ModelKind::fint:
                fint_forward(fint, mb, fint_tape, times);
                return fint_tape.yhat;
            case ModelKind::lr:
                lr_forward(lr, mb, lr_tape);
                return lr_tape.yhat;
            case ModelKind::fm:
                fm_forward(fm, mb, fm_tape);
                return fm_tape.yhat;
        }
        throw Error("unreachable model kind");
    }

    // Uses the tape from the most recent forward.
    void backward(std::span<const real> dyhat, GradBuffer& grads, StageTimes* times = nullptr) {
        switch (kind) {
            case ModelKind::fint: fint_backward(fint, fint_tape, dyhat, grads, times); return;
            case ModelKind::lr: lr_backward(lr, lr_tape, dyhat, grads); return;
            case ModelKind::fm: fm_backward(fm, fm_tape, dyhat, grads); return;
        }
        throw Error("unreachable model kind");
    }

    size_t param_count() {
        size_t n = 0;
        for (const auto& v : tensor_views()) n += v.size;
        return n;
    }
};

inline Model make_model(const TrainConfig& cfg, const std::vector<FieldSchema>& schema) {
    cfg.validate();
    Model m;
    m.kind = cfg.model;
    switch (cfg.model) {
        case ModelKind::fint: m.fint = fint_init(schema, cfg.fint, cfg.init_seed); break;
        case ModelKind::lr: m.lr = lr_init(schema); break;
        case ModelKind::fm: m.fm = fm_init(schema, cfg.fm_factor_dim, cfg.init_seed); break;
    }
    return m;
}

inline void save_model(const std::string& path, Model& m, const std::string& schema_hash,
                       const AdamState* adam = nullptr) {
    auto views = m.tensor_views();
    save_checkpoint(path, to_string(m.kind), m.config_json(), schema_hash,
                    std::span<TensorView>(views), adam);
}

// Rebuilds the parameter structure from the stored kind and config, then
// overwrites every tensor with the checkpoint blobs. The schema must be the
// one the checkpoint was trained against (callers verify the hash first).
inline Model load_model(const Checkpoint& ck, const std::vector<FieldSchema>& schema) {
    Model m;
    m.kind = model_kind_from_string(ck.model_kind);
    switch (m.kind) {
        case ModelKind::fint: {
            FintConfig fc;
            fc.embed_dim = ck.config.at("embed_dim").get<uint32_t>();
            fc.layers = ck.config.at("layers").get<uint32_t>();
            fc.ffn_hidden = ck.config.at("ffn_hidden").get<std::vector<uint32_t>>();
            m.fint = fint_init(schema, fc, 0);
            break;
        }
        case ModelKind::lr:
            m.lr = lr_init(schema);
            break;
        case ModelKind::fm:
            m.fm = fm_init(schema, ck.config.at("factor_dim").get<uint32_t>(), 0);
            break;
    }
    auto views = m.tensor_views();
    apply_checkpoint(ck, std::span<TensorView>(views));
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Full pass in source order; scores accumulate across batches, metrics once.
inline MetricsReport evaluate_model(Model& m, const Dataset& ds, size_t batch_size = 1024) {
    if (ds.size() == 0) throw Error("evaluate: empty dataset");
    std::vector<real> scores;
    std::vector<uint8_t> labels;
    scores.reserve(ds.size());
    labels.reserve(ds.size());
    BatchStream stream(ds, batch_size, std::nullopt);
    while (auto mb = stream.next()) {
        const auto& yhat = m.forward(*mb);
        scores.insert(scores.end(), yhat.begin(), yhat.end());
        labels.insert(labels.end(), mb->labels.begin(), mb->labels.end());
    }
    return compute_metrics(scores, labels);
}

inline std::vector<real> predict_model(Model& m, const Dataset& ds, size_t batch_size = 1024) {
    std::vector<real> scores;
    scores.reserve(ds.size());
    BatchStream stream(ds, batch_size, std::nullopt);
    while (auto mb = stream.next()) {
        const auto& yhat = m.forward(*mb);
        scores.insert(scores.end(), yhat.begin(), yhat.end());
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
    uint32_t epoch = 0;  // 1-based
    double train_loss = 0;
    MetricsReport val;
    double seconds = 0;
    uint64_t steps = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"epoch", epoch},
                              {"train_loss", train_loss},
                              {"val", val.to_json()},
                              {"seconds", seconds},
                              {"steps", steps}};
    }
};

struct TrainResult {
    std::vector<EpochLog> log;
    uint32_t best_epoch = 0;  // 0 when no epoch ran
    double best_val_auc = std::numeric_limits<double>::quiet_NaN();
    uint64_t total_steps = 0;
    std::vector<double> step_losses;  // one mean-BCE value per Adam step
};

namespace detail {

inline bool schemas_equal(const std::vector<FieldSchema>& a, const std::vector<FieldSchema>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].kind != b[i].kind ||
            a[i].vocab_size != b[i].vocab_size || a[i].max_values != b[i].max_values)
            return false;
    return true;
}

struct ParamSnapshot {
    std::vector<std::vector<real>> tensors;

    void capture(std::span<TensorView> views) {
        tensors.resize(views.size());
        for (size_t i = 0; i < views.size(); ++i)
            tensors[i].assign(views[i].data, views[i].data + views[i].size);
    }

    void restore(std::span<TensorView> views) const {
        if (tensors.size() != views.size()) throw Error("snapshot/view count mismatch");
        for (size_t i = 0; i < views.size(); ++i)
            std::copy(tensors[i].begin(), tensors[i].end(), views[i].data);
    }
};

} // namespace detail

// Epoch loop with per-epoch validation. Keeps the weights of the best
// validation-AUC epoch (earliest on ties) and stops once `patience` epochs
// pass without improvement. An external AdamState allows warm resumption;
// it always reflects the last step taken, not the restored best epoch.
inline TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& train_ds,
                         const Dataset& val_ds, AdamState* adam = nullptr,
                         std::ostream* log_out = nullptr) {
    cfg.validate();
    if (!detail::schemas_equal(train_ds.schema, val_ds.schema))
        throw Error("train: train and validation datasets disagree on the schema");
    if (!detail::schemas_equal(train_ds.schema, model.schema()))
        throw Error("train: model schema does not match the dataset");
    if (cfg.max_epochs > 0 && train_ds.size() == 0) throw Error("train: empty training set");

    TrainResult res;
    if (cfg.max_epochs == 0) return res;

    AdamState local_state;
    AdamState& state = adam ? *adam : local_state;
    state.cfg = cfg.adam;

    auto views = model.tensor_views();
    GradBuffer grads;
    detail::ParamSnapshot best;
    double best_auc = -std::numeric_limits<double>::infinity();

    for (uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        BatchStream stream(train_ds, cfg.batch_size, cfg.shuffle_seed + epoch);
        double loss_sum = 0;
        uint64_t steps = 0;
        while (auto mb = stream.next()) {
            const auto& yhat = model.forward(*mb);
            const BceResult bce = bce_loss(yhat, mb->labels);
            grads.clear();
            model.backward(bce.grad, grads);
            adam_step(views, grads, state);
            loss_sum += bce.loss * static_cast<double>(mb->size);
            res.step_losses.push_back(bce.loss);
            ++steps;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.steps = steps;
        entry.train_loss = loss_sum / static_cast<double>(train_ds.size());
        entry.val = evaluate_model(model, val_ds, cfg.batch_size);
        entry.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.total_steps += steps;

        if (entry.val.auc > best_auc) {
            best_auc = entry.val.auc;
            res.best_epoch = epoch;
            res.best_val_auc = entry.val.auc;
            best.capture(views);
        }
        res.log.push_back(entry);
        if (log_out) *log_out << entry.to_json().dump() << "\n";

        if (epoch - res.best_epoch >= cfg.patience) break;
    }

    if (cfg.restore_best && res.best_epoch > 0) best.restore(views);
    return res;
}

} // namespace fint
