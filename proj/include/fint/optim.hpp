// Binary cross-entropy loss and Adam with lazy sparse updates for
// embedding-style row tables.
#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fint/common.hpp"
#include "fint/metrics.hpp"

namespace fint {

// ---------------------------------------------------------------------------
// Parameter/gradient plumbing shared by all model kinds
// ---------------------------------------------------------------------------

// Non-owning view of one named parameter tensor, flattened.
struct TensorView {
    std::string name;
    real* data = nullptr;
    size_t size = 0;
};

// Gradients keyed by tensor name. Large row tables (embeddings, per-feature
// weights) accumulate sparsely: only touched rows are stored, in row order.
struct GradBuffer {
    struct RowGrads {
        size_t cols = 0;
        std::map<uint32_t, std::vector<real>> rows;

        real* row(uint32_t r) {
            auto [it, inserted] = rows.try_emplace(r);
            if (inserted) it->second.assign(cols, real(0));
            return it->second.data();
        }
    };

    std::map<std::string, std::vector<real>> dense;
    std::map<std::string, RowGrads> sparse;

    std::vector<real>& dense_slot(const std::string& name, size_t size) {
        auto [it, inserted] = dense.try_emplace(name);
        if (inserted) it->second.assign(size, real(0));
        return it->second;
    }

    RowGrads& sparse_slot(const std::string& name, size_t cols) {
        auto [it, inserted] = sparse.try_emplace(name);
        if (inserted) it->second.cols = cols;
        return it->second;
    }

    void clear() {
        for (auto& [name, g] : dense) std::fill(g.begin(), g.end(), real(0));
        for (auto& [name, g] : sparse) g.rows.clear();
    }

    // Full dense gradient for one tensor (sparse tables are expanded).
    // Used by the finite-difference harness, not the update path.
    std::vector<real> densified(const std::string& name, size_t size) const {
        if (auto it = dense.find(name); it != dense.end()) return it->second;
        std::vector<real> out(size, real(0));
        if (auto it = sparse.find(name); it != sparse.end()) {
            for (const auto& [r, vals] : it->second.rows)
                std::copy(vals.begin(), vals.end(), out.begin() + r * it->second.cols);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct BceResult {
    real loss = 0;              // mean over items
    std::vector<real> grad;     // per-item dL/dyhat (mean folded in)
};

inline BceResult bce_loss(std::span<const real> yhat, std::span<const uint8_t> labels) {
    if (yhat.size() != labels.size()) throw Error("bce_loss: length mismatch");
    if (yhat.empty()) throw Error("bce_loss: empty batch");
    detail::check_labels(labels);
    BceResult res;
    res.loss = static_cast<real>(detail::bce_sum(yhat, labels) /
                                 static_cast<double>(yhat.size()));
    res.grad.resize(yhat.size());
    const real inv_n = real(1) / static_cast<real>(yhat.size());
    for (size_t i = 0; i < yhat.size(); ++i) {
        real p = std::clamp(yhat[i], static_cast<real>(kProbEps),
                            real(1) - static_cast<real>(kProbEps));
        res.grad[i] = (p - static_cast<real>(labels[i])) / (p * (real(1) - p)) * inv_n;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    real lr = real(1e-3);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
};

struct AdamState {
    AdamConfig cfg;
    int64_t t = 0;

    struct Slot {
        std::vector<real> m, v;
    };
    std::map<std::string, Slot> slots;

    Slot& slot(const std::string& name, size_t size) {
        auto [it, inserted] = slots.try_emplace(name);
        if (inserted) {
            it->second.m.assign(size, real(0));
            it->second.v.assign(size, real(0));
        } else if (it->second.m.size() != size) {
            throw Error("adam: state size mismatch for tensor " + name);
        }
        return it->second;
    }
};

namespace detail {

inline void adam_update_span(real* theta, const real* g, real* m, real* v, size_t n,
                             const AdamConfig& c, real bc1, real bc2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = c.beta1 * m[i] + (real(1) - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (real(1) - c.beta2) * g[i] * g[i];
        const real mhat = m[i] / bc1;
        const real vhat = v[i] / bc2;
        theta[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
}

} // namespace detail

// One Adam step over every tensor that has a gradient entry. Dense tensors
// update in full. Sparse row tables update only the touched rows; untouched
// rows keep their moments as-is (lazy variant, no decay).
inline void adam_step(std::span<TensorView> params, const GradBuffer& grads, AdamState& state) {
    state.t += 1;
    const real bc1 = real(1) - std::pow(state.cfg.beta1, static_cast<real>(state.t));
    const real bc2 = real(1) - std::pow(state.cfg.beta2, static_cast<real>(state.t));
    for (auto& p : params) {
        if (auto it = grads.dense.find(p.name); it != grads.dense.end()) {
            if (it->second.size() != p.size)
                throw Error("adam: gradient shape mismatch for tensor " + p.name);
            auto& s = state.slot(p.name, p.size);
            detail::adam_update_span(p.data, it->second.data(), s.m.data(), s.v.data(), p.size,
                                     state.cfg, bc1, bc2);
        } else if (auto st = grads.sparse.find(p.name); st != grads.sparse.end()) {
            const size_t cols = st->second.cols;
            if (cols == 0 || p.size % cols != 0)
                throw Error("adam: sparse gradient shape mismatch for tensor " + p.name);
            auto& s = state.slot(p.name, p.size);
            for (const auto& [r, g] : st->second.rows) {
                const size_t off = static_cast<size_t>(r) * cols;
                if (off + cols > p.size)
                    throw Error("adam: sparse row out of range for tensor " + p.name);
                detail::adam_update_span(p.data + off, g.data(), s.m.data() + off,
                                         s.v.data() + off, cols, state.cfg, bc1, bc2);
            }
        }
    }
}

} // namespace fint
