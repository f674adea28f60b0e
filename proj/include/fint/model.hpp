// The FINT network: embedding lookup, K field-aware interaction layers with
// residual gates, and a feed-forward head ending in a sigmoid.
#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "fint/common.hpp"
#include "fint/data.hpp"
#include "fint/matrix.hpp"
#include "fint/optim.hpp"
#include "fint/schema.hpp"

namespace fint {

struct FintConfig {
    uint32_t embed_dim = 16;                     // D
    uint32_t layers = 3;                         // K
    std::vector<uint32_t> ffn_hidden = {300, 300, 300};

    void validate() const {
        if (embed_dim < 1) throw Error("fint: embed_dim must be >= 1");
        for (uint32_t w : ffn_hidden)
            if (w < 1) throw Error("fint: ffn widths must be >= 1");
    }
};

// Wall-clock seconds per pipeline stage, accumulated across forward and
// backward. The benchmark scales these independently.
struct StageTimes {
    double embed = 0;
    double interact = 0;
    double head = 0;

    void reset() { embed = interact = head = 0; }
};

namespace detail {

class StageTimer {
public:
    explicit StageTimer(double* acc) : acc_(acc) {
        if (acc_) start_ = std::chrono::steady_clock::now();
    }
    ~StageTimer() {
        if (acc_) {
            auto end = std::chrono::steady_clock::now();
            *acc_ += std::chrono::duration<double>(end - start_).count();
        }
    }

private:
    double* acc_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Interaction layer, single example
// ---------------------------------------------------------------------------

// v_i^l = sum_j w_{i,j} (v_i^{l-1} . v_j^0) + u_i v_i^{l-1}, written as the
// literal double loop over fields.
inline Matrix interact_loop(const Matrix& v0, const Matrix& prev, const Matrix& w,
                            std::span<const real> u) {
    const size_t M = v0.rows, D = v0.cols;
    if (!prev.same_shape(v0)) throw ShapeError("interact: V^{l-1} shape differs from V^0");
    if (w.rows != M || w.cols != M) throw ShapeError("interact: W must be fields x fields");
    if (u.size() != M) throw ShapeError("interact: U length must equal field count");
    Matrix out(M, D);
    for (size_t i = 0; i < M; ++i) {
        for (size_t j = 0; j < M; ++j) {
            const real wij = w(i, j);
            for (size_t d = 0; d < D; ++d) out(i, d) += wij * (prev(i, d) * v0(j, d));
        }
        for (size_t d = 0; d < D; ++d) out(i, d) += u[i] * prev(i, d);
    }
    return out;
}

namespace detail {

// Matrix form: out = prev . (w x v0) + u o prev, with the product w x v0
// written to p_out (the tape keeps it for backward).
inline void interact_matrix_into(real* out, real* p_out, const real* v0, const real* prev,
                                 const real* w, const real* u, size_t M, size_t D) {
    matmul_raw(p_out, w, v0, M, M, D);
    for (size_t i = 0; i < M; ++i) {
        const real ui = u[i];
        const real* pr = prev + i * D;
        const real* pp = p_out + i * D;
        real* po = out + i * D;
        for (size_t d = 0; d < D; ++d) po[d] = pr[d] * pp[d] + ui * pr[d];
    }
}

} // namespace detail

inline Matrix interact_matrix(const Matrix& v0, const Matrix& prev, const Matrix& w,
                              std::span<const real> u) {
    const size_t M = v0.rows, D = v0.cols;
    if (!prev.same_shape(v0)) throw ShapeError("interact: V^{l-1} shape differs from V^0");
    if (w.rows != M || w.cols != M) throw ShapeError("interact: W must be fields x fields");
    if (u.size() != M) throw ShapeError("interact: U length must equal field count");
    Matrix out(M, D), p(M, D);
    detail::interact_matrix_into(out.data.data(), p.data.data(), v0.data.data(),
                                 prev.data.data(), w.data.data(), u.data(), M, D);
    return out;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct FintParams {
    std::vector<FieldSchema> schema;
    SchemaIndex si;
    FintConfig cfg;
    uint32_t fields = 0; // M

    std::vector<uint32_t> embed_offset; // per schema field: first row in `embed`
    Matrix embed;                       // (total cat+mv vocab) x D, row per feature
    Matrix num_embed;                   // n_num x D, one vector per numeric field
    std::vector<Matrix> W;              // K of M x M
    std::vector<std::vector<real>> U;   // K of length M
    std::vector<Matrix> ffn_w;          // per hidden layer: width x prev_width
    std::vector<std::vector<real>> ffn_b;
    std::vector<real> out_w;            // last hidden width (or M*D when no hidden)
    std::vector<real> out_b;            // single scalar, kept as a tensor

    size_t flat_dim() const { return static_cast<size_t>(fields) * cfg.embed_dim; }

    // Fixed tensor order; the optimizer and the checkpoint manifest both
    // follow it.
    std::vector<TensorView> tensor_views() {
        std::vector<TensorView> v;
        v.push_back({"embed", embed.data.data(), embed.data.size()});
        v.push_back({"num_embed", num_embed.data.data(), num_embed.data.size()});
        for (size_t l = 0; l < W.size(); ++l) {
            v.push_back({"W" + std::to_string(l + 1), W[l].data.data(), W[l].data.size()});
            v.push_back({"U" + std::to_string(l + 1), U[l].data(), U[l].size()});
        }
        for (size_t i = 0; i < ffn_w.size(); ++i) {
            v.push_back({"ffn_w" + std::to_string(i + 1), ffn_w[i].data.data(),
                         ffn_w[i].data.size()});
            v.push_back({"ffn_b" + std::to_string(i + 1), ffn_b[i].data(), ffn_b[i].size()});
        }
        v.push_back({"out_w", out_w.data(), out_w.size()});
        v.push_back({"out_b", out_b.data(), out_b.size()});
        return v;
    }

    size_t param_count() {
        size_t n = 0;
        for (const auto& v : tensor_views()) n += v.size;
        return n;
    }
};

// Xavier-style uniform draws in a fixed order: embedding table field by field,
// numeric vectors, then W^1..W^K (U^l starts at all-ones), then the head.
// Same seed, same schema, same config -> bit-identical parameters.
inline FintParams fint_init(const std::vector<FieldSchema>& schema, const FintConfig& cfg,
                            uint64_t seed) {
    cfg.validate();
    if (schema.empty()) throw Error("fint: schema has no fields");
    FintParams p;
    p.schema = schema;
    p.si = SchemaIndex(schema);
    p.cfg = cfg;
    p.fields = static_cast<uint32_t>(schema.size());
    const size_t M = p.fields, D = cfg.embed_dim;

    uint64_t total_rows = 0;
    p.embed_offset.assign(schema.size(), 0);
    for (size_t f = 0; f < schema.size(); ++f) {
        if (schema[f].kind == FieldKind::numeric) continue;
        if (schema[f].vocab_size < kReservedIndices)
            throw Error("fint: field '" + schema[f].name + "' has vocab_size < 2");
        p.embed_offset[f] = static_cast<uint32_t>(total_rows);
        total_rows += schema[f].vocab_size;
    }

    Rng rng(seed);
    auto fill_uniform = [&](real* data, size_t n, real limit) {
        for (size_t i = 0; i < n; ++i) data[i] = rng.uniform(-limit, limit);
    };

    p.embed = Matrix(total_rows, D);
    for (size_t f = 0; f < schema.size(); ++f) {
        if (schema[f].kind == FieldKind::numeric) continue;
        const real lim = std::sqrt(real(6) / (schema[f].vocab_size + D));
        fill_uniform(p.embed.row(p.embed_offset[f]),
                     static_cast<size_t>(schema[f].vocab_size) * D, lim);
    }
    p.num_embed = Matrix(p.si.n_num, D);
    fill_uniform(p.num_embed.data.data(), p.num_embed.data.size(),
                 std::sqrt(real(6) / (1 + D)));

    for (uint32_t l = 0; l < cfg.layers; ++l) {
        Matrix w(M, M);
        fill_uniform(w.data.data(), w.data.size(), std::sqrt(real(6) / (M + M)));
        p.W.push_back(std::move(w));
        p.U.emplace_back(M, real(1));
    }

    size_t prev = M * D;
    for (uint32_t width : cfg.ffn_hidden) {
        Matrix a(width, prev);
        fill_uniform(a.data.data(), a.data.size(), std::sqrt(real(6) / (prev + width)));
        p.ffn_w.push_back(std::move(a));
        p.ffn_b.emplace_back(width, real(0));
        prev = width;
    }
    p.out_w.resize(prev);
    fill_uniform(p.out_w.data(), p.out_w.size(), std::sqrt(real(6) / (prev + 1)));
    p.out_b.assign(1, real(0));
    return p;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct FintTape {
    MiniBatch mb;               // kept for the embedding scatter in backward
    BatchTensor V0;             // [B, M, D]
    std::vector<BatchTensor> P; // per layer: W^l x V^0
    std::vector<BatchTensor> V; // per layer: V^l
    std::vector<Matrix> ffn_z;  // per hidden layer: [B, width] pre-activation
    std::vector<Matrix> ffn_h;  // per hidden layer: [B, width] after relu
    std::vector<real> logit;    // [B]
    std::vector<real> yhat;     // [B]

    size_t batch() const { return mb.size; }
    const real* head_input(size_t b) const {
        return V.empty() ? V0.item(b) : V.back().item(b);
    }
};

namespace detail {

inline void check_batch_shape(const FintParams& p, const MiniBatch& mb) {
    if (mb.size == 0) throw Error("fint: empty batch");
    if (mb.cat.size() != p.si.n_cat || mb.num.size() != p.si.n_num ||
        mb.mv.size() != p.si.n_mv)
        throw Error("fint: batch field layout does not match the model schema");
}

} // namespace detail

inline void fint_embed(const FintParams& p, const MiniBatch& mb, BatchTensor& v0) {
    const size_t M = p.fields, D = p.cfg.embed_dim;
    v0.resize(mb.size, M, D);
    for (size_t f = 0; f < p.schema.size(); ++f) {
        const FieldSchema& fs = p.schema[f];
        const uint32_t within = p.si.within[f];
        switch (fs.kind) {
            case FieldKind::categorical:
                for (size_t b = 0; b < mb.size; ++b) {
                    const uint32_t idx = mb.cat[within][b];
                    if (idx >= fs.vocab_size)
                        throw Error("fint: index " + std::to_string(idx) +
                                    " out of range for field '" + fs.name + "'");
                    const real* src = p.embed.row(p.embed_offset[f] + idx);
                    std::copy(src, src + D, v0.item(b) + f * D);
                }
                break;
            case FieldKind::numeric:
                for (size_t b = 0; b < mb.size; ++b) {
                    const real z = mb.num[within][b];
                    const real* src = p.num_embed.row(within);
                    real* dst = v0.item(b) + f * D;
                    for (size_t d = 0; d < D; ++d) dst[d] = z * src[d];
                }
                break;
            case FieldKind::multivalent:
                for (size_t b = 0; b < mb.size; ++b) {
                    const auto& col = mb.mv[within];
                    real* dst = v0.item(b) + f * D; // stays zero for an empty set
                    for (uint32_t k = col.offsets[b]; k < col.offsets[b + 1]; ++k) {
                        const uint32_t idx = col.values[k];
                        if (idx >= fs.vocab_size)
                            throw Error("fint: index " + std::to_string(idx) +
                                        " out of range for field '" + fs.name + "'");
                        const real* src = p.embed.row(p.embed_offset[f] + idx);
                        for (size_t d = 0; d < D; ++d) dst[d] += src[d];
                    }
                }
                break;
        }
    }
}

inline void fint_forward(const FintParams& p, const MiniBatch& mb, FintTape& tape,
                         StageTimes* times = nullptr) {
    detail::check_batch_shape(p, mb);
    const size_t B = mb.size, M = p.fields, D = p.cfg.embed_dim;
    const size_t K = p.W.size();
    tape.mb = mb;

    {
        detail::StageTimer t(times ? &times->embed : nullptr);
        fint_embed(p, mb, tape.V0);
    }

    {
        detail::StageTimer t(times ? &times->interact : nullptr);
        tape.P.resize(K);
        tape.V.resize(K);
        for (size_t l = 0; l < K; ++l) {
            tape.P[l].resize(B, M, D);
            tape.V[l].resize(B, M, D);
            const BatchTensor& prev = l == 0 ? tape.V0 : tape.V[l - 1];
            for (size_t b = 0; b < B; ++b)
                detail::interact_matrix_into(tape.V[l].item(b), tape.P[l].item(b),
                                             tape.V0.item(b), prev.item(b),
                                             p.W[l].data.data(), p.U[l].data(), M, D);
            if (!all_finite(tape.V[l].data))
                throw Error("fint: non-finite value in interaction layer " +
                            std::to_string(l + 1));
        }
    }

    {
        detail::StageTimer t(times ? &times->head : nullptr);
        const size_t H = p.ffn_w.size();
        tape.ffn_z.resize(H);
        tape.ffn_h.resize(H);
        const real* h_prev = tape.V.empty() ? tape.V0.data.data() : tape.V.back().data.data();
        size_t prev_w = M * D;
        for (size_t i = 0; i < H; ++i) {
            const size_t width = p.ffn_w[i].rows;
            Matrix& z = tape.ffn_z[i];
            z = Matrix(B, width);
            for (size_t b = 0; b < B; ++b)
                std::copy(p.ffn_b[i].begin(), p.ffn_b[i].end(), z.row(b));
            detail::gemm_nt_acc(z.data.data(), h_prev, p.ffn_w[i].data.data(), B, prev_w,
                                width);
            if (!all_finite(z.data))
                throw Error("fint: non-finite value in ffn layer " + std::to_string(i + 1));
            tape.ffn_h[i] = Matrix(B, width);
            relu_into(tape.ffn_h[i].data, z.data);
            h_prev = tape.ffn_h[i].data.data();
            prev_w = width;
        }

        tape.logit.assign(B, p.out_b[0]);
        tape.yhat.resize(B);
        for (size_t b = 0; b < B; ++b) {
            const real* h = h_prev + b * prev_w;
            real s = tape.logit[b];
            for (size_t j = 0; j < prev_w; ++j) s += p.out_w[j] * h[j];
            if (!std::isfinite(s)) throw Error("fint: non-finite value in output layer");
            tape.logit[b] = s;
            tape.yhat[b] = sigmoid(s);
        }
    }
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Exact gradients for every tensor given dL/dyhat. V^0 feeds every interaction
// layer, so its gradient collects the direct chain through V^1..V^K plus one
// W^l-transposed term per layer before scattering into the embedding tables.
inline void fint_backward(const FintParams& p, const FintTape& tape,
                          std::span<const real> dyhat, GradBuffer& grads,
                          StageTimes* times = nullptr) {
    const size_t B = tape.batch(), M = p.fields, D = p.cfg.embed_dim;
    const size_t K = p.W.size();
    if (dyhat.size() != B) throw Error("fint: upstream gradient length != batch size");
    if (tape.V0.rows != M || tape.V0.cols != D || tape.V.size() != K ||
        tape.ffn_z.size() != p.ffn_w.size())
        throw Error("fint: tape does not match the parameters");

    const size_t H = p.ffn_w.size();
    const size_t flat = M * D;
    Matrix dh; // gradient wrt the current layer's input activations

    {
        detail::StageTimer t(times ? &times->head : nullptr);
        std::vector<real> dlogit(B);
        for (size_t b = 0; b < B; ++b) {
            const real y = tape.yhat[b];
            dlogit[b] = dyhat[b] * y * (real(1) - y);
        }

        auto& d_out_w = grads.dense_slot("out_w", p.out_w.size());
        auto& d_out_b = grads.dense_slot("out_b", 1);
        const size_t last_w = H == 0 ? flat : p.ffn_w.back().rows;
        const real* h_last = H == 0
                                 ? (tape.V.empty() ? tape.V0.data.data()
                                                   : tape.V.back().data.data())
                                 : tape.ffn_h.back().data.data();
        dh = Matrix(B, last_w);
        for (size_t b = 0; b < B; ++b) {
            const real g = dlogit[b];
            d_out_b[0] += g;
            const real* h = h_last + b * last_w;
            real* dro = dh.row(b);
            for (size_t j = 0; j < last_w; ++j) {
                d_out_w[j] += g * h[j];
                dro[j] = g * p.out_w[j];
            }
        }

        for (size_t i = H; i-- > 0;) {
            const size_t width = p.ffn_w[i].rows;
            const size_t prev_w = p.ffn_w[i].cols;
            Matrix& dz = dh; // relu mask applied in place
            for (size_t b = 0; b < B; ++b) {
                const real* z = tape.ffn_z[i].row(b);
                real* g = dz.row(b);
                for (size_t j = 0; j < width; ++j)
                    if (z[j] <= 0) g[j] = 0;
            }
            auto& dw = grads.dense_slot("ffn_w" + std::to_string(i + 1),
                                        p.ffn_w[i].data.size());
            auto& db = grads.dense_slot("ffn_b" + std::to_string(i + 1), width);
            const real* h_prev = i == 0 ? (tape.V.empty() ? tape.V0.data.data()
                                                          : tape.V.back().data.data())
                                        : tape.ffn_h[i - 1].data.data();
            detail::gemm_tn_acc(dw.data(), dz.data.data(), h_prev, B, width, prev_w);
            for (size_t b = 0; b < B; ++b)
                for (size_t j = 0; j < width; ++j) db[j] += dz(b, j);
            Matrix dprev(B, prev_w);
            detail::matmul_raw(dprev.data.data(), dz.data.data(),
                               p.ffn_w[i].data.data(), B, width, prev_w);
            dh = std::move(dprev);
        }
    }

    // dh is now [B, M*D] = gradient wrt V^K, item-contiguous like BatchTensor.
    BatchTensor dv0_extra(B, M, D); // cross-layer terms flowing into V^0

    {
        detail::StageTimer t(times ? &times->interact : nullptr);
        Matrix dp(M, D);
        for (size_t l = K; l-- > 0;) {
            auto& dW = grads.dense_slot("W" + std::to_string(l + 1), M * M);
            auto& dU = grads.dense_slot("U" + std::to_string(l + 1), M);
            const real* u = p.U[l].data();
            for (size_t b = 0; b < B; ++b) {
                const real* prev =
                    l == 0 ? tape.V0.item(b) : tape.V[l - 1].item(b);
                const real* pl = tape.P[l].item(b);
                real* g = dh.row(b); // dV^l, rewritten in place to dV^{l-1}
                for (size_t i = 0; i < M; ++i) {
                    real du = 0;
                    const real* gi = g + i * D;
                    const real* pi = prev + i * D;
                    real* dpi = dp.row(i);
                    for (size_t d = 0; d < D; ++d) {
                        dpi[d] = gi[d] * pi[d];
                        du += dpi[d];
                    }
                    dU[i] += du;
                }
                detail::gemm_nt_acc(dW.data(), dp.data.data(), tape.V0.item(b), M, D, M);
                detail::gemm_tn_acc(dv0_extra.item(b), p.W[l].data.data(), dp.data.data(),
                                    M, M, D);
                for (size_t i = 0; i < M; ++i) {
                    const real ui = u[i];
                    real* gi = g + i * D;
                    const real* pli = pl + i * D;
                    for (size_t d = 0; d < D; ++d) gi[d] = gi[d] * pli[d] + ui * gi[d];
                }
            }
        }
    }

    {
        detail::StageTimer t(times ? &times->embed : nullptr);
        // dh now holds dV^0 through the layer chain; add the per-layer V^0 terms.
        for (size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dv0_extra.data[i];

        auto& d_embed = grads.sparse_slot("embed", D);
        auto& d_num = grads.dense_slot("num_embed", p.num_embed.data.size());
        const MiniBatch& mb = tape.mb;
        for (size_t f = 0; f < p.schema.size(); ++f) {
            const uint32_t within = p.si.within[f];
            switch (p.schema[f].kind) {
                case FieldKind::categorical:
                    for (size_t b = 0; b < B; ++b) {
                        const real* g = dh.row(b) + f * D;
                        real* dst = d_embed.row(p.embed_offset[f] + mb.cat[within][b]);
                        for (size_t d = 0; d < D; ++d) dst[d] += g[d];
                    }
                    break;
                case FieldKind::numeric:
                    for (size_t b = 0; b < B; ++b) {
                        const real z = mb.num[within][b];
                        const real* g = dh.row(b) + f * D;
                        real* dst = d_num.data() + static_cast<size_t>(within) * D;
                        for (size_t d = 0; d < D; ++d) dst[d] += z * g[d];
                    }
                    break;
                case FieldKind::multivalent:
                    for (size_t b = 0; b < B; ++b) {
                        const auto& col = mb.mv[within];
                        const real* g = dh.row(b) + f * D;
                        for (uint32_t k = col.offsets[b]; k < col.offsets[b + 1]; ++k) {
                            real* dst = d_embed.row(p.embed_offset[f] + col.values[k]);
                            for (size_t d = 0; d < D; ++d) dst[d] += g[d];
                        }
                    }
                    break;
            }
        }
    }
}

} // namespace fint
