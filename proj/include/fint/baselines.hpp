// LR and FM baselines sharing the datapipe, optimizer and metrics, so model
// comparisons isolate the architecture rather than the plumbing.
#pragma once

#include <string>
#include <vector>

#include "fint/common.hpp"
#include "fint/data.hpp"
#include "fint/matrix.hpp"
#include "fint/optim.hpp"
#include "fint/schema.hpp"

namespace fint {

namespace detail {

// Shared feature-table layout: one row per (field, vocab index) for
// categorical and multivalent fields, in schema order.
struct FeatureLayout {
    std::vector<FieldSchema> schema;
    SchemaIndex si;
    std::vector<uint32_t> row_offset; // per schema field
    uint64_t total_rows = 0;

    void build(const std::vector<FieldSchema>& s) {
        schema = s;
        si = SchemaIndex(s);
        row_offset.assign(s.size(), 0);
        total_rows = 0;
        for (size_t f = 0; f < s.size(); ++f) {
            if (s[f].kind == FieldKind::numeric) continue;
            if (s[f].vocab_size < kReservedIndices)
                throw Error("baseline: field '" + s[f].name + "' has vocab_size < 2");
            row_offset[f] = static_cast<uint32_t>(total_rows);
            total_rows += s[f].vocab_size;
        }
    }

    uint32_t checked_row(size_t f, uint32_t idx) const {
        if (idx >= schema[f].vocab_size)
            throw Error("baseline: index " + std::to_string(idx) +
                        " out of range for field '" + schema[f].name + "'");
        return row_offset[f] + idx;
    }
};

inline void check_batch_shape(const FeatureLayout& lay, const MiniBatch& mb) {
    if (mb.size == 0) throw Error("baseline: empty batch");
    if (mb.cat.size() != lay.si.n_cat || mb.num.size() != lay.si.n_num ||
        mb.mv.size() != lay.si.n_mv)
        throw Error("baseline: batch field layout does not match the model schema");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

struct LrParams {
    detail::FeatureLayout layout;
    Matrix weights;          // total feature rows x 1
    std::vector<real> num_w; // one weight per numeric field
    std::vector<real> bias;  // single scalar

    std::vector<TensorView> tensor_views() {
        return {{"lr_w", weights.data.data(), weights.data.size()},
                {"lr_num_w", num_w.data(), num_w.size()},
                {"lr_bias", bias.data(), bias.size()}};
    }

    size_t param_count() {
        size_t n = 0;
        for (const auto& v : tensor_views()) n += v.size;
        return n;
    }
};

struct LrTape {
    MiniBatch mb;
    std::vector<real> yhat;
};

// Linear models start at zero: the loss is convex and symmetric draws add
// nothing.
inline LrParams lr_init(const std::vector<FieldSchema>& schema) {
    LrParams p;
    p.layout.build(schema);
    p.weights = Matrix(p.layout.total_rows, 1);
    p.num_w.assign(p.layout.si.n_num, real(0));
    p.bias.assign(1, real(0));
    return p;
}

inline void lr_forward(const LrParams& p, const MiniBatch& mb, LrTape& tape) {
    detail::check_batch_shape(p.layout, mb);
    tape.mb = mb;
    tape.yhat.resize(mb.size);
    const auto& lay = p.layout;
    for (size_t b = 0; b < mb.size; ++b) {
        real s = p.bias[0];
        for (size_t f = 0; f < lay.schema.size(); ++f) {
            const uint32_t within = lay.si.within[f];
            switch (lay.schema[f].kind) {
                case FieldKind::categorical:
                    s += p.weights.data[lay.checked_row(f, mb.cat[within][b])];
                    break;
                case FieldKind::numeric:
                    s += p.num_w[within] * mb.num[within][b];
                    break;
                case FieldKind::multivalent: {
                    const auto& col = mb.mv[within];
                    for (uint32_t k = col.offsets[b]; k < col.offsets[b + 1]; ++k)
                        s += p.weights.data[lay.checked_row(f, col.values[k])];
                    break;
                }
            }
        }
        tape.yhat[b] = sigmoid(s);
    }
}

inline void lr_backward(const LrParams& p, const LrTape& tape, std::span<const real> dyhat,
                        GradBuffer& grads) {
    const size_t B = tape.mb.size;
    if (dyhat.size() != B) throw Error("lr: upstream gradient length != batch size");
    if (tape.yhat.size() != B) throw Error("lr: tape does not match the batch");
    auto& dw = grads.sparse_slot("lr_w", 1);
    auto& dnum = grads.dense_slot("lr_num_w", p.num_w.size());
    auto& dbias = grads.dense_slot("lr_bias", 1);
    const auto& lay = p.layout;
    const MiniBatch& mb = tape.mb;
    for (size_t b = 0; b < B; ++b) {
        const real y = tape.yhat[b];
        const real g = dyhat[b] * y * (real(1) - y);
        dbias[0] += g;
        for (size_t f = 0; f < lay.schema.size(); ++f) {
            const uint32_t within = lay.si.within[f];
            switch (lay.schema[f].kind) {
                case FieldKind::categorical:
                    dw.row(lay.checked_row(f, mb.cat[within][b]))[0] += g;
                    break;
                case FieldKind::numeric:
                    dnum[within] += g * mb.num[within][b];
                    break;
                case FieldKind::multivalent: {
                    const auto& col = mb.mv[within];
                    for (uint32_t k = col.offsets[b]; k < col.offsets[b + 1]; ++k)
                        dw.row(lay.checked_row(f, col.values[k]))[0] += g;
                    break;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Factorization machine
// ---------------------------------------------------------------------------

struct FmParams {
    detail::FeatureLayout layout;
    uint32_t factor_dim = 16;
    Matrix weights;             // linear part, as in LR
    std::vector<real> num_w;
    std::vector<real> bias;
    Matrix factors;             // total feature rows x factor_dim
    Matrix num_factors;         // n_num x factor_dim

    std::vector<TensorView> tensor_views() {
        return {{"lr_w", weights.data.data(), weights.data.size()},
                {"lr_num_w", num_w.data(), num_w.size()},
                {"lr_bias", bias.data(), bias.size()},
                {"fm_v", factors.data.data(), factors.data.size()},
                {"fm_num_v", num_factors.data.data(), num_factors.data.size()}};
    }

    size_t param_count() {
        size_t n = 0;
        for (const auto& v : tensor_views()) n += v.size;
        return n;
    }
};

struct FmTape {
    MiniBatch mb;
    Matrix s; // per example: sum over active features of x_a * v_a
    std::vector<real> yhat;
};

// Linear part starts at zero like LR; factors draw the same fan-based uniform
// scheme as the FINT embeddings so the pairwise term can break symmetry.
inline FmParams fm_init(const std::vector<FieldSchema>& schema, uint32_t factor_dim,
                        uint64_t seed) {
    if (factor_dim < 1) throw Error("fm: factor_dim must be >= 1");
    FmParams p;
    p.layout.build(schema);
    p.factor_dim = factor_dim;
    p.weights = Matrix(p.layout.total_rows, 1);
    p.num_w.assign(p.layout.si.n_num, real(0));
    p.bias.assign(1, real(0));
    p.factors = Matrix(p.layout.total_rows, factor_dim);
    p.num_factors = Matrix(p.layout.si.n_num, factor_dim);
    Rng rng(seed);
    for (size_t f = 0; f < schema.size(); ++f) {
        if (schema[f].kind == FieldKind::numeric) continue;
        const real lim = std::sqrt(real(6) / (schema[f].vocab_size + factor_dim));
        real* block = p.factors.row(p.layout.row_offset[f]);
        for (size_t i = 0; i < static_cast<size_t>(schema[f].vocab_size) * factor_dim; ++i)
            block[i] = rng.uniform(-lim, lim);
    }
    const real nlim = std::sqrt(real(6) / (1 + factor_dim));
    for (auto& v : p.num_factors.data) v = rng.uniform(-nlim, nlim);
    return p;
}

// Pairwise term via the sum-of-squares identity:
//   sum_{a<b} x_a x_b <v_a, v_b> = 1/2 sum_d [ (sum_a x_a v_a[d])^2
//                                              - sum_a x_a^2 v_a[d]^2 ]
inline void fm_forward(const FmParams& p, const MiniBatch& mb, FmTape& tape) {
    detail::check_batch_shape(p.layout, mb);
    tape.mb = mb;
    tape.yhat.resize(mb.size);
    const size_t D = p.factor_dim;
    tape.s = Matrix(mb.size, D);
    const auto& lay = p.layout;
    std::vector<real> sq(D);
    for (size_t b = 0; b < mb.size; ++b) {
        real linear = p.bias[0];
        real* s = tape.s.row(b);
        std::fill(sq.begin(), sq.end(), real(0));
        auto add_feature = [&](const real* v, real x) {
            for (size_t d = 0; d < D; ++d) {
                s[d] += x * v[d];
                sq[d] += x * x * v[d] * v[d];
            }
        };
        for (size_t f = 0; f < lay.schema.size(); ++f) {
            const uint32_t within = lay.si.within[f];
            switch (lay.schema[f].kind) {
                case FieldKind::categorical: {
                    const uint32_t row = lay.checked_row(f, mb.cat[within][b]);
                    linear += p.weights.data[row];
                    add_feature(p.factors.row(row), real(1));
                    break;
                }
                case FieldKind::numeric: {
                    const real z = mb.num[within][b];
                    linear += p.num_w[within] * z;
                    add_feature(p.num_factors.row(within), z);
                    break;
                }
                case FieldKind::multivalent: {
                    const auto& col = mb.mv[within];
                    for (uint32_t k = col.offsets[b]; k < col.offsets[b + 1]; ++k) {
                        const uint32_t row = lay.checked_row(f, col.values[k]);
                        linear += p.weights.data[row];
                        add_feature(p.factors.row(row), real(1));
                    }
                    break;
                }
            }
        }
        real inter = 0;
        for (size_t d = 0; d < D; ++d) inter += s[d] * s[d] - sq[d];
        tape.yhat[b] = sigmoid(linear + real(0.5) * inter);
    }
}

// d(interaction)/d(v_a[d]) = x_a s[d] - x_a^2 v_a[d]; the linear part matches
// LR. Repeated multivalent members accumulate once per occurrence, which sums
// to the exact derivative.
inline void fm_backward(const FmParams& p, const FmTape& tape, std::span<const real> dyhat,
                        GradBuffer& grads) {
    const size_t B = tape.mb.size;
    if (dyhat.size() != B) throw Error("fm: upstream gradient length != batch size");
    if (tape.yhat.size() != B || tape.s.rows != B || tape.s.cols != p.factor_dim)
        throw Error("fm: tape does not match the batch");
    const size_t D = p.factor_dim;
    auto& dw = grads.sparse_slot("lr_w", 1);
    auto& dnum = grads.dense_slot("lr_num_w", p.num_w.size());
    auto& dbias = grads.dense_slot("lr_bias", 1);
    auto& dv = grads.sparse_slot("fm_v", D);
    auto& dnv = grads.dense_slot("fm_num_v", p.num_factors.data.size());
    const auto& lay = p.layout;
    const MiniBatch& mb = tape.mb;
    for (size_t b = 0; b < B; ++b) {
        const real y = tape.yhat[b];
        const real g = dyhat[b] * y * (real(1) - y);
        const real* s = tape.s.row(b);
        dbias[0] += g;
        for (size_t f = 0; f < lay.schema.size(); ++f) {
            const uint32_t within = lay.si.within[f];
            switch (lay.schema[f].kind) {
                case FieldKind::categorical: {
                    const uint32_t row = lay.checked_row(f, mb.cat[within][b]);
                    dw.row(row)[0] += g;
                    const real* v = p.factors.row(row);
                    real* dst = dv.row(row);
                    for (size_t d = 0; d < D; ++d) dst[d] += g * (s[d] - v[d]);
                    break;
                }
                case FieldKind::numeric: {
                    const real z = mb.num[within][b];
                    dnum[within] += g * z;
                    const real* v = p.num_factors.row(within);
                    real* dst = dnv.data() + static_cast<size_t>(within) * D;
                    for (size_t d = 0; d < D; ++d) dst[d] += g * (z * s[d] - z * z * v[d]);
                    break;
                }
                case FieldKind::multivalent: {
                    const auto& col = mb.mv[within];
                    for (uint32_t k = col.offsets[b]; k < col.offsets[b + 1]; ++k) {
                        const uint32_t row = lay.checked_row(f, col.values[k]);
                        dw.row(row)[0] += g;
                        const real* v = p.factors.row(row);
                        real* dst = dv.row(row);
                        for (size_t d = 0; d < D; ++d) dst[d] += g * (s[d] - v[d]);
                    }
                    break;
                }
            }
        }
    }
}

} // namespace fint
