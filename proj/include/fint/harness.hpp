// Verification harnesses: the finite-difference gradient check and the
// scaling benchmark for the interaction stage.
#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fint/data.hpp"
#include "fint/trainer.hpp"

namespace fint {

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradCheckConfig {
    ModelKind model = ModelKind::fint;
    uint64_t seed = 1;
    double step = 1e-5;
    double tolerance = 1e-6;
    // Test hook: flips the sign of this tensor's analytic gradient so the
    // harness can prove it catches a broken backward pass.
    std::string tamper_tensor;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0;
    std::string worst_tensor;
    size_t worst_index = 0;
    double tolerance = 0;
    double step = 0;
    std::string model;
    uint64_t seed = 0;
    std::map<std::string, double> per_tensor;
    std::string error;  // non-finite gradient diagnostics

    nlohmann::json to_json() const {
        nlohmann::json j{{"pass", pass},
                         {"max_rel_err", max_rel_err},
                         {"worst_tensor", worst_tensor},
                         {"worst_index", worst_index},
                         {"tolerance", tolerance},
                         {"step", step},
                         {"model", model},
                         {"seed", seed},
                         {"per_tensor", per_tensor}};
        if (!error.empty()) j["error"] = error;
        return j;
    }
};

namespace detail {

// Four fields, one of each flavor plus a second categorical. Small enough
// that perturbing every parameter stays cheap.
inline std::vector<FieldSchema> gradcheck_schema() {
    return {{"c1", FieldKind::categorical, 5, 10},
            {"z", FieldKind::numeric, 0, 10},
            {"tags", FieldKind::multivalent, 6, 4},
            {"c2", FieldKind::categorical, 4, 10}};
}

// Hand-built batch covering the awkward cases: an empty value set, a missing
// numeric (0.0) and a repeated multivalent member.
inline MiniBatch gradcheck_batch() {
    MiniBatch mb;
    mb.size = 3;
    mb.labels = {1, 0, 1};
    mb.cat = {{2, 0, 4}, {1, 3, 3}};
    mb.num = {{real(1.5), real(0.0), real(2.25)}};
    mb.mv.resize(1);
    mb.mv[0].offsets = {0, 2, 2, 5};
    mb.mv[0].values = {2, 3, 1, 1, 4};
    return mb;
}

// Central differences sit on a smooth patch only if no relu input is near
// its kink; a pre-activation within the margin forces a re-draw.
inline bool relu_margin_ok(const FintTape& tape, double margin) {
    for (const auto& z : tape.ffn_z)
        for (real v : z.data)
            if (std::abs(static_cast<double>(v)) < margin) return false;
    return true;
}

} // namespace detail

inline GradCheckReport gradcheck(const GradCheckConfig& cfg) {
    const auto schema = detail::gradcheck_schema();
    const MiniBatch mb = detail::gradcheck_batch();

    TrainConfig tc;
    tc.model = cfg.model;
    tc.fint.embed_dim = 3;
    tc.fint.layers = 2;
    tc.fint.ffn_hidden = {5};
    tc.fm_factor_dim = 3;
    tc.init_seed = cfg.seed;

    Model model = make_model(tc, schema);
    if (cfg.model == ModelKind::fint) {
        uint64_t seed = cfg.seed;
        for (int attempt = 0; attempt < 32; ++attempt) {
            model.forward(mb);
            if (detail::relu_margin_ok(model.fint_tape, 1e-2)) break;
            tc.init_seed = ++seed;
            model = make_model(tc, schema);
            if (attempt == 31) throw Error("gradcheck: no draw clears the relu margin");
        }
    }

    GradCheckReport rep;
    rep.tolerance = cfg.tolerance;
    rep.step = cfg.step;
    rep.model = to_string(cfg.model);
    rep.seed = tc.init_seed;

    const auto& yhat = model.forward(mb);
    const BceResult bce = bce_loss(yhat, mb.labels);
    GradBuffer grads;
    model.backward(bce.grad, grads);

    auto views = model.tensor_views();
    std::map<std::string, std::vector<real>> analytic;
    for (const auto& v : views) analytic[v.name] = grads.densified(v.name, v.size);

    for (const auto& [name, g] : analytic)
        for (size_t i = 0; i < g.size(); ++i)
            if (!std::isfinite(static_cast<double>(g[i]))) {
                rep.error = "non-finite gradient in " + name + "[" + std::to_string(i) + "]";
                return rep;
            }

    if (!cfg.tamper_tensor.empty()) {
        auto it = analytic.find(cfg.tamper_tensor);
        if (it == analytic.end()) throw Error("gradcheck: unknown tensor " + cfg.tamper_tensor);
        for (real& g : it->second) g = -g;
    }

    const double h = cfg.step;
    for (auto& view : views) {
        const auto& g = analytic[view.name];
        double tensor_worst = 0;
        for (size_t i = 0; i < view.size; ++i) {
            const real saved = view.data[i];
            view.data[i] = saved + static_cast<real>(h);
            const double lp = bce_loss(model.forward(mb), mb.labels).loss;
            view.data[i] = saved - static_cast<real>(h);
            const double lm = bce_loss(model.forward(mb), mb.labels).loss;
            view.data[i] = saved;
            const double fd = (lp - lm) / (2 * h);
            const double a = static_cast<double>(g[i]);
            const double rel =
                std::abs(fd - a) / std::max({1.0, std::abs(fd), std::abs(a)});
            tensor_worst = std::max(tensor_worst, rel);
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_tensor = view.name;
                rep.worst_index = i;
            }
        }
        rep.per_tensor[view.name] = tensor_worst;
    }

    rep.pass = rep.max_rel_err <= cfg.tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

struct BenchConfig {
    uint64_t rows = 2048;
    uint32_t batch = 256;
    uint32_t cardinality = 16;
    uint32_t warmup_epochs = 1;
    uint32_t timed_epochs = 5;
    uint32_t ffn_width = 64;  // D_F
    uint64_t seed = 1;

    std::vector<uint32_t> m_sweep = {8, 16, 32, 64};  // at D = m_sweep_d, K = base_k
    uint32_t m_sweep_d = 16;
    std::vector<uint32_t> k_sweep = {1, 2, 4};        // at M = base_m, D = m_sweep_d
    std::vector<uint32_t> d_sweep = {16, 32};         // at M = base_m, K = base_k
    uint32_t base_m = 16;
    uint32_t base_k = 2;

    void validate() const {
        if (rows < 1 || batch < 1) throw Error("bench: rows and batch must be >= 1");
        if (timed_epochs < 1) throw Error("bench: timed_epochs must be >= 1");
        if (m_sweep.size() < 2 || k_sweep.size() < 2)
            throw Error("bench: sweeps need at least two points to fit an exponent");
    }
};

struct BenchCell {
    std::string sweep;  // "M", "K" or "D"
    uint32_t fields = 0;
    uint32_t embed_dim = 0;
    uint32_t layers = 0;
    uint32_t ffn_width = 0;
    uint64_t rows = 0;
    uint32_t batch = 0;
    double epoch_seconds = 0;     // mean wall clock per epoch, full step loop
    double embed_seconds = 0;     // stage means per epoch
    double interact_seconds = 0;
    double head_seconds = 0;
};

struct BenchReport {
    std::vector<BenchCell> cells;
    uint32_t timed_epochs = 0;
    double m_exponent = 0;
    double k_exponent = 0;
    std::vector<double> k_doubling_ratios;
    double m_ratio_32_to_64 = 0;
    double d_ratio = 0;

    nlohmann::json summary_json() const {
        return nlohmann::json{{"m_exponent", m_exponent},
                              {"k_exponent", k_exponent},
                              {"k_doubling_ratios", k_doubling_ratios},
                              {"m_ratio_32_to_64", m_ratio_32_to_64},
                              {"d_ratio", d_ratio},
                              {"timed_epochs", timed_epochs}};
    }

    void write_csv(std::ostream& out) const {
        out << "sweep,fields,embed_dim,layers,ffn_width,rows,batch,"
               "epoch_seconds,embed_seconds,interact_seconds,head_seconds\n";
        for (const auto& c : cells) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s,%u,%u,%u,%u,%llu,%u,%.6f,%.6f,%.6f,%.6f\n",
                          c.sweep.c_str(), c.fields, c.embed_dim, c.layers, c.ffn_width,
                          static_cast<unsigned long long>(c.rows), c.batch, c.epoch_seconds,
                          c.embed_seconds, c.interact_seconds, c.head_seconds);
            out << buf;
        }
    }
};

namespace detail {

// Labels and features are uniform noise: the benchmark measures arithmetic,
// not learning.
inline Dataset bench_dataset(uint32_t fields, uint32_t cardinality, uint64_t rows,
                             uint64_t seed) {
    Dataset ds;
    for (uint32_t f = 0; f < fields; ++f)
        ds.schema.push_back({"f" + std::to_string(f), FieldKind::categorical, cardinality, 10});
    Rng rng(seed);
    ds.rows.resize(rows);
    for (auto& ex : ds.rows) {
        ex.label = rng.bernoulli(0.5) ? 1 : 0;
        ex.cat.resize(fields);
        for (auto& c : ex.cat) c = static_cast<uint32_t>(rng.below(cardinality));
    }
    return ds;
}

inline BenchCell bench_cell(const std::string& sweep, uint32_t M, uint32_t D, uint32_t K,
                            const BenchConfig& bc) {
    Dataset ds = bench_dataset(M, bc.cardinality, bc.rows, bc.seed);
    FintConfig fc;
    fc.embed_dim = D;
    fc.layers = K;
    fc.ffn_hidden = {bc.ffn_width};
    FintParams params = fint_init(ds.schema, fc, bc.seed);
    auto views = params.tensor_views();
    FintTape tape;
    GradBuffer grads;
    AdamState state;
    StageTimes times;

    double timed_seconds = 0;
    const uint32_t total = bc.warmup_epochs + bc.timed_epochs;
    for (uint32_t epoch = 0; epoch < total; ++epoch) {
        const bool timed = epoch >= bc.warmup_epochs;
        if (epoch == bc.warmup_epochs) times.reset();
        const auto t0 = std::chrono::steady_clock::now();
        BatchStream stream(ds, bc.batch, std::nullopt);
        while (auto mb = stream.next()) {
            fint_forward(params, *mb, tape, timed ? &times : nullptr);
            const BceResult bce = bce_loss(tape.yhat, mb->labels);
            grads.clear();
            fint_backward(params, tape, bce.grad, grads, timed ? &times : nullptr);
            adam_step(std::span<TensorView>(views), grads, state);
        }
        if (timed)
            timed_seconds +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    BenchCell cell;
    cell.sweep = sweep;
    cell.fields = M;
    cell.embed_dim = D;
    cell.layers = K;
    cell.ffn_width = bc.ffn_width;
    cell.rows = bc.rows;
    cell.batch = bc.batch;
    cell.epoch_seconds = timed_seconds / bc.timed_epochs;
    cell.embed_seconds = times.embed / bc.timed_epochs;
    cell.interact_seconds = times.interact / bc.timed_epochs;
    cell.head_seconds = times.head / bc.timed_epochs;
    return cell;
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace detail

// Runs the three sweeps and fits the interaction-stage scaling exponents.
// Cells report stage means per epoch so the fit ignores embedding and head
// costs entirely.
inline BenchReport bench(const BenchConfig& bc = {}, std::ostream* progress = nullptr) {
    bc.validate();
    BenchReport rep;
    rep.timed_epochs = bc.timed_epochs;

    std::vector<double> m_xs, m_ts;
    for (uint32_t M : bc.m_sweep) {
        auto cell = detail::bench_cell("M", M, bc.m_sweep_d, bc.base_k, bc);
        if (progress)
            *progress << "bench M=" << M << " interact=" << cell.interact_seconds << "s\n";
        m_xs.push_back(M);
        m_ts.push_back(cell.interact_seconds);
        rep.cells.push_back(std::move(cell));
    }

    std::vector<double> k_xs, k_ts;
    for (uint32_t K : bc.k_sweep) {
        auto cell = detail::bench_cell("K", bc.base_m, bc.m_sweep_d, K, bc);
        if (progress)
            *progress << "bench K=" << K << " interact=" << cell.interact_seconds << "s\n";
        k_xs.push_back(K);
        k_ts.push_back(cell.interact_seconds);
        rep.cells.push_back(std::move(cell));
    }

    std::vector<double> d_ts;
    for (uint32_t D : bc.d_sweep) {
        auto cell = detail::bench_cell("D", bc.base_m, D, bc.base_k, bc);
        if (progress)
            *progress << "bench D=" << D << " interact=" << cell.interact_seconds << "s\n";
        d_ts.push_back(cell.interact_seconds);
        rep.cells.push_back(std::move(cell));
    }

    rep.m_exponent = detail::loglog_slope(m_xs, m_ts);
    rep.k_exponent = detail::loglog_slope(k_xs, k_ts);
    for (size_t i = 0; i + 1 < k_ts.size(); ++i)
        rep.k_doubling_ratios.push_back(k_ts[i + 1] / k_ts[i]);
    for (size_t i = 0; i + 1 < m_xs.size(); ++i)
        if (m_xs[i] == 32 && m_xs[i + 1] == 64) rep.m_ratio_32_to_64 = m_ts[i + 1] / m_ts[i];
    if (d_ts.size() >= 2) rep.d_ratio = d_ts[1] / d_ts[0];
    return rep;
}

} // namespace fint
