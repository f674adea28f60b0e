#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "fint/harness.hpp"
#include "fint/trainer.hpp"

using fint::AdamState;
using fint::Checkpoint;
using fint::Dataset;
using fint::Error;
using fint::FieldKind;
using fint::FieldSchema;
using fint::Model;
using fint::ModelKind;
using fint::real;
using fint::Rng;
using fint::TrainConfig;

namespace {

std::string tmp_path(const std::string& stem) {
    return "/tmp/fint_trainer_" + std::to_string(getpid()) + "_" + stem;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Three categorical fields; the label follows the low bit of the first one,
// optionally flipped. Every model kind can learn this.
Dataset linear_ds(size_t rows, uint64_t seed, double noise = 0.0) {
    Dataset ds;
    ds.schema = {{"a", FieldKind::categorical, 8, 10},
                 {"b", FieldKind::categorical, 8, 10},
                 {"c", FieldKind::categorical, 8, 10}};
    Rng rng(seed);
    ds.rows.resize(rows);
    for (auto& ex : ds.rows) {
        ex.cat = {static_cast<uint32_t>(rng.below(8)), static_cast<uint32_t>(rng.below(8)),
                  static_cast<uint32_t>(rng.below(8))};
        bool y = (ex.cat[0] & 1) != 0;
        if (noise > 0 && rng.bernoulli(noise)) y = !y;
        ex.label = y ? 1 : 0;
    }
    return ds;
}

// 256 distinct rows with coin-flip labels: pure memorization material.
Dataset memorize_ds(uint64_t seed) {
    Dataset ds;
    ds.schema = {{"a", FieldKind::categorical, 8, 10},
                 {"b", FieldKind::categorical, 8, 10},
                 {"c", FieldKind::categorical, 8, 10}};
    Rng rng(seed);
    ds.rows.resize(256);
    for (uint32_t i = 0; i < 256; ++i) {
        auto& ex = ds.rows[i];
        ex.cat = {(i >> 6) & 7, (i >> 3) & 7, i & 7};
        ex.label = rng.bernoulli(0.5) ? 1 : 0;
    }
    return ds;
}

TrainConfig micro_fint_cfg() {
    TrainConfig cfg;
    cfg.model = ModelKind::fint;
    cfg.fint.embed_dim = 4;
    cfg.fint.layers = 2;
    cfg.fint.ffn_hidden = {8};
    cfg.batch_size = 64;
    return cfg;
}

std::vector<std::vector<real>> snapshot(Model& m) {
    std::vector<std::vector<real>> out;
    for (const auto& v : m.tensor_views()) out.emplace_back(v.data, v.data + v.size);
    return out;
}

} // namespace

TEST_CASE("train config round trips through json and rejects unknown keys") {
    TrainConfig cfg;
    CHECK(cfg.adam.lr == real(1e-3));
    CHECK(cfg.batch_size == 1024);
    CHECK(cfg.fint.embed_dim == 16);
    CHECK(cfg.fint.layers == 3);
    CHECK(cfg.fint.ffn_hidden == std::vector<uint32_t>{300, 300, 300});
    CHECK(cfg.patience == 3);

    cfg.model = ModelKind::fm;
    cfg.fint.ffn_hidden = {64, 32};
    cfg.adam.lr = real(0.01);
    cfg.data = "somewhere";
    const auto j = cfg.to_json();
    const TrainConfig back = TrainConfig::from_json(j);
    CHECK(back.to_json().dump() == j.dump());

    CHECK_THROWS_AS(TrainConfig::from_json({{"batchsize", 32}}), Error);
    CHECK_THROWS_AS(fint::model_kind_from_string("deepfm"), Error);
}

TEST_CASE("checkpoint round trips tensors and optimizer state") {
    const Dataset ds = linear_ds(192, 11);
    TrainConfig cfg = micro_fint_cfg();
    cfg.max_epochs = 2;
    cfg.patience = 99;
    Model m = make_model(cfg, ds.schema);
    AdamState state;
    fint::train(m, cfg, ds, ds, &state);
    REQUIRE(state.t > 0);

    const std::string path = tmp_path("roundtrip.ckpt");
    fint::save_model(path, m, "hash123", &state);

    const Checkpoint ck = fint::load_checkpoint(path);
    CHECK(ck.model_kind == "fint");
    CHECK(ck.schema_hash == "hash123");
    CHECK(ck.config.at("embed_dim").get<uint32_t>() == 4);
    CHECK(ck.config.at("layers").get<uint32_t>() == 2);

    auto views = m.tensor_views();
    REQUIRE(ck.tensor_order.size() == views.size());
    for (size_t i = 0; i < views.size(); ++i) {
        CHECK(ck.tensor_order[i] == views[i].name);
        const auto& stored = ck.tensors.at(views[i].name);
        REQUIRE(stored.size() == views[i].size);
        for (size_t k = 0; k < stored.size(); ++k) REQUIRE(stored[k] == views[i].data[k]);
    }

    REQUIRE(ck.has_adam);
    const AdamState restored = ck.adam_state();
    CHECK(restored.t == state.t);
    CHECK(restored.cfg.lr == state.cfg.lr);
    REQUIRE(restored.slots.size() == state.slots.size());
    for (const auto& [name, slot] : state.slots) {
        const auto& rs = restored.slots.at(name);
        REQUIRE(rs.m == slot.m);
        REQUIRE(rs.v == slot.v);
    }

    Model fresh = fint::load_model(ck, ds.schema);
    auto fresh_views = fresh.tensor_views();
    for (size_t i = 0; i < views.size(); ++i)
        for (size_t k = 0; k < views[i].size; ++k)
            REQUIRE(fresh_views[i].data[k] == views[i].data[k]);

    // Writing the same state twice gives the same bytes.
    const std::string path2 = tmp_path("roundtrip2.ckpt");
    fint::save_model(path2, m, "hash123", &state);
    CHECK(slurp(path) == slurp(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint refuses mismatched hashes, shapes and garbage") {
    const Dataset ds = linear_ds(64, 3);
    TrainConfig cfg = micro_fint_cfg();
    Model m = make_model(cfg, ds.schema);
    const std::string path = tmp_path("refuse.ckpt");
    fint::save_model(path, m, "aaaa1111");

    CHECK_THROWS_WITH(fint::load_checkpoint(path, "bbbb2222"),
                      Catch::Matchers::ContainsSubstring("aaaa1111") &&
                          Catch::Matchers::ContainsSubstring("bbbb2222"));

    // Same kind, different embedding width: the size check names the tensor.
    const Checkpoint ck = fint::load_checkpoint(path);
    TrainConfig wide = cfg;
    wide.fint.embed_dim = 6;
    Model other = make_model(wide, ds.schema);
    auto other_views = other.tensor_views();
    CHECK_THROWS_WITH(fint::apply_checkpoint(ck, std::span<fint::TensorView>(other_views)),
                      Catch::Matchers::ContainsSubstring("embed"));

    // A different model kind does not even have the same tensor list.
    TrainConfig lr_cfg;
    lr_cfg.model = ModelKind::lr;
    Model lr_model = make_model(lr_cfg, ds.schema);
    auto lr_views = lr_model.tensor_views();
    CHECK_THROWS_AS(fint::apply_checkpoint(ck, std::span<fint::TensorView>(lr_views)), Error);

    std::string bytes = slurp(path);
    bytes[0] = 'X';
    const std::string bad = tmp_path("bad.ckpt");
    { std::ofstream out(bad, std::ios::binary); out << bytes; }
    CHECK_THROWS_WITH(fint::load_checkpoint(bad), Catch::Matchers::ContainsSubstring("FINTCKPT"));

    { std::ofstream out(bad, std::ios::binary); out << slurp(path).substr(0, 40); }
    CHECK_THROWS_AS(fint::load_checkpoint(bad), Error);

    CHECK_THROWS_AS(fint::load_checkpoint("/nonexistent/nowhere.ckpt"), Error);
    std::remove(path.c_str());
    std::remove(bad.c_str());
}

TEST_CASE("train logs epochs, selects the best one and early-stops") {
    const Dataset train_ds = linear_ds(2000, 5, 0.35);
    const Dataset val_ds = linear_ds(500, 6, 0.35);
    TrainConfig cfg;
    cfg.model = ModelKind::lr;
    cfg.batch_size = 128;
    cfg.max_epochs = 40;
    cfg.patience = 2;

    Model m = make_model(cfg, train_ds.schema);
    std::ostringstream log_stream;
    const auto res = fint::train(m, cfg, train_ds, val_ds, nullptr, &log_stream);

    REQUIRE(!res.log.empty());
    for (size_t i = 0; i < res.log.size(); ++i) {
        const auto& e = res.log[i];
        CHECK(e.epoch == i + 1);
        CHECK(e.steps == (2000 + 127) / 128);
        CHECK(e.seconds > 0);
        CHECK(e.val.rows == 500);
        CHECK(e.val.auc <= res.best_val_auc);
    }
    // Earliest epoch wins ties.
    for (const auto& e : res.log) {
        if (e.val.auc == res.best_val_auc) {
            CHECK(e.epoch == res.best_epoch);
            break;
        }
    }
    // The run must actually hit the patience rule, not the epoch cap.
    REQUIRE(res.log.size() < cfg.max_epochs);
    CHECK(res.log.back().epoch == res.best_epoch + cfg.patience);

    // restore_best leaves the model at the best epoch's weights.
    const auto after = fint::evaluate_model(m, val_ds, cfg.batch_size);
    CHECK(after.auc == res.best_val_auc);
    CHECK(after.to_json().dump() ==
          res.log[res.best_epoch - 1].val.to_json().dump());

    // One JSON object per epoch on the stream.
    size_t lines = 0;
    std::string line;
    std::istringstream in(log_stream.str());
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        ++lines;
        CHECK(j.at("epoch").get<size_t>() == lines);
    }
    CHECK(lines == res.log.size());
}

TEST_CASE("training is deterministic and checkpoints byte-identically") {
    const Dataset train_ds = linear_ds(600, 9, 0.1);
    const Dataset val_ds = linear_ds(200, 10, 0.1);
    TrainConfig cfg = micro_fint_cfg();
    cfg.max_epochs = 3;
    cfg.patience = 99;

    std::array<std::string, 2> paths = {tmp_path("det_a.ckpt"), tmp_path("det_b.ckpt")};
    std::array<std::vector<double>, 2> losses;
    for (int run = 0; run < 2; ++run) {
        Model m = make_model(cfg, train_ds.schema);
        const auto res = fint::train(m, cfg, train_ds, val_ds);
        losses[run] = res.step_losses;
        fint::save_model(paths[run], m, "det");
    }
    CHECK(losses[0] == losses[1]);
    CHECK(slurp(paths[0]) == slurp(paths[1]));
    for (const auto& p : paths) std::remove(p.c_str());
}

TEST_CASE("max_epochs zero returns initialized params and an empty log") {
    const Dataset ds = linear_ds(100, 2);
    TrainConfig cfg = micro_fint_cfg();
    cfg.max_epochs = 0;
    Model m = make_model(cfg, ds.schema);
    const auto before = snapshot(m);
    const auto res = fint::train(m, cfg, ds, ds);
    CHECK(res.log.empty());
    CHECK(res.best_epoch == 0);
    CHECK(res.total_steps == 0);
    CHECK(snapshot(m) == before);
}

TEST_CASE("a checkpointed optimizer resumes training exactly") {
    const Dataset train_ds = linear_ds(512, 14, 0.2);
    const Dataset val_ds = linear_ds(128, 15, 0.2);
    TrainConfig cfg = micro_fint_cfg();
    cfg.max_epochs = 2;
    cfg.patience = 99;
    cfg.restore_best = false;

    // Uninterrupted: four epochs in two legs on one model and state.
    Model a = make_model(cfg, train_ds.schema);
    AdamState state_a;
    fint::train(a, cfg, train_ds, val_ds, &state_a);
    fint::train(a, cfg, train_ds, val_ds, &state_a);

    // Interrupted: identical first leg, then a save/load boundary.
    Model b = make_model(cfg, train_ds.schema);
    AdamState state_b;
    fint::train(b, cfg, train_ds, val_ds, &state_b);
    const std::string path = tmp_path("resume.ckpt");
    fint::save_model(path, b, "resume", &state_b);

    const Checkpoint ck = fint::load_checkpoint(path, "resume");
    Model c = fint::load_model(ck, train_ds.schema);
    AdamState state_c = ck.adam_state();
    const auto res_c = fint::train(c, cfg, train_ds, val_ds, &state_c);

    REQUIRE(res_c.total_steps > 0);
    CHECK(state_c.t == state_a.t);
    auto va = a.tensor_views();
    auto vc = c.tensor_views();
    REQUIRE(va.size() == vc.size());
    for (size_t i = 0; i < va.size(); ++i)
        for (size_t k = 0; k < va[i].size; ++k) REQUIRE(va[i].data[k] == vc[i].data[k]);
    std::remove(path.c_str());
}

TEST_CASE("evaluation is bit-identical before and after a save/load cycle") {
    const Dataset train_ds = linear_ds(400, 21, 0.1);
    const Dataset test_ds = linear_ds(150, 22, 0.1);
    TrainConfig cfg = micro_fint_cfg();
    cfg.max_epochs = 2;
    cfg.patience = 99;
    Model m = make_model(cfg, train_ds.schema);
    fint::train(m, cfg, train_ds, test_ds);

    const auto r1 = fint::evaluate_model(m, test_ds);
    const auto r1_again = fint::evaluate_model(m, test_ds);
    CHECK(r1.to_json().dump() == r1_again.to_json().dump());

    const std::string path = tmp_path("eval.ckpt");
    fint::save_model(path, m, "eval");
    Model loaded = fint::load_model(fint::load_checkpoint(path, "eval"), train_ds.schema);
    const auto r2 = fint::evaluate_model(loaded, test_ds);
    CHECK(r1.auc == r2.auc);
    CHECK(r1.logloss == r2.logloss);
    CHECK(r1.to_json().dump() == r2.to_json().dump());

    const auto scores = fint::predict_model(loaded, test_ds);
    REQUIRE(scores.size() == test_ds.size());
    for (real s : scores) {
        CHECK(s > 0);
        CHECK(s < 1);
    }
    std::remove(path.c_str());
}

TEST_CASE("train validates schema agreement up front") {
    const Dataset ds = linear_ds(64, 2);
    Dataset other = ds;
    other.schema[1].vocab_size = 9;
    TrainConfig cfg = micro_fint_cfg();
    cfg.max_epochs = 1;
    Model m = make_model(cfg, ds.schema);
    CHECK_THROWS_AS(fint::train(m, cfg, ds, other), Error);

    Model wrong = make_model(cfg, other.schema);
    CHECK_THROWS_AS(fint::train(wrong, cfg, ds, ds), Error);

    Dataset empty;
    empty.schema = ds.schema;
    CHECK_THROWS_AS(fint::train(m, cfg, empty, ds), Error);
}

TEST_CASE("gradcheck passes for every model kind") {
    for (ModelKind kind : {ModelKind::fint, ModelKind::lr, ModelKind::fm}) {
        fint::GradCheckConfig gc;
        gc.model = kind;
        const auto rep = fint::gradcheck(gc);
        INFO("kind " << fint::to_string(kind) << " worst " << rep.worst_tensor << " err "
                     << rep.max_rel_err);
        CHECK(rep.pass);
        CHECK(rep.max_rel_err <= 1e-6);
        CHECK(rep.error.empty());
    }

    fint::GradCheckConfig gc;
    const auto rep = fint::gradcheck(gc);
    for (const char* name : {"embed", "num_embed", "W1", "U1", "W2", "U2", "ffn_w1", "ffn_b1",
                             "out_w", "out_b"})
        CHECK(rep.per_tensor.count(name) == 1);
    const auto j = rep.to_json();
    CHECK(j.at("pass").get<bool>());
    CHECK(j.at("model").get<std::string>() == "fint");
}

TEST_CASE("gradcheck pinpoints an injected backward fault") {
    for (const char* tensor : {"W1", "embed", "ffn_b1"}) {
        fint::GradCheckConfig gc;
        gc.tamper_tensor = tensor;
        const auto rep = fint::gradcheck(gc);
        CHECK_FALSE(rep.pass);
        CHECK(rep.worst_tensor == tensor);
    }

    fint::GradCheckConfig lr_gc;
    lr_gc.model = ModelKind::lr;
    lr_gc.tamper_tensor = "lr_w";
    const auto rep = fint::gradcheck(lr_gc);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_tensor == "lr_w");

    fint::GradCheckConfig unknown;
    unknown.tamper_tensor = "W9";
    CHECK_THROWS_AS(fint::gradcheck(unknown), Error);
}

TEST_CASE("fint memorizes 256 rows within 500 steps") {
    const Dataset ds = memorize_ds(77);
    TrainConfig cfg;
    cfg.model = ModelKind::fint;
    cfg.fint.embed_dim = 8;
    cfg.fint.layers = 2;
    cfg.fint.ffn_hidden = {32, 32};
    cfg.batch_size = 256;
    cfg.max_epochs = 500;
    cfg.patience = 100000;
    cfg.restore_best = false;

    Model m = make_model(cfg, ds.schema);
    const auto res = fint::train(m, cfg, ds, ds);
    REQUIRE(res.total_steps <= 500);

    const auto report = fint::evaluate_model(m, ds);
    INFO("final train logloss " << report.logloss);
    CHECK(report.logloss < 0.05);

    // Median loss over successive 50-step windows never increases after the
    // first hundred steps.
    const auto& sl = res.step_losses;
    REQUIRE(sl.size() >= 200);
    auto window_median = [&](size_t start) {
        std::vector<double> w(sl.begin() + start, sl.begin() + start + 50);
        std::nth_element(w.begin(), w.begin() + 25, w.end());
        return w[25];
    };
    for (size_t s = 100; s + 100 <= sl.size(); s += 50)
        CHECK(window_median(s + 50) <= window_median(s) + 1e-9);
}

TEST_CASE("bench produces cells and finite fits on a toy grid") {
    fint::BenchConfig bc;
    bc.rows = 96;
    bc.batch = 32;
    bc.warmup_epochs = 1;
    bc.timed_epochs = 2;
    bc.ffn_width = 8;
    bc.m_sweep = {4, 8};
    bc.m_sweep_d = 4;
    bc.k_sweep = {1, 2};
    bc.d_sweep = {4, 8};
    bc.base_m = 8;
    bc.base_k = 1;

    const auto rep = fint::bench(bc);
    REQUIRE(rep.cells.size() == 6);
    for (const auto& c : rep.cells) {
        CHECK(c.epoch_seconds > 0);
        CHECK(c.interact_seconds > 0);
        CHECK(c.epoch_seconds >= c.interact_seconds);
    }
    CHECK(rep.cells[0].sweep == "M");
    CHECK(rep.cells[0].fields == 4);
    CHECK(rep.cells[2].sweep == "K");
    CHECK(rep.cells[2].layers == 1);
    CHECK(std::isfinite(rep.m_exponent));
    CHECK(std::isfinite(rep.k_exponent));
    REQUIRE(rep.k_doubling_ratios.size() == 1);
    CHECK(rep.k_doubling_ratios[0] > 0);
    CHECK(rep.d_ratio > 0);

    std::ostringstream csv;
    rep.write_csv(csv);
    size_t lines = 0;
    std::string line;
    std::istringstream in(csv.str());
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 7);
    CHECK(rep.summary_json().contains("m_exponent"));

    fint::BenchConfig bad;
    bad.m_sweep = {8};
    CHECK_THROWS_AS(fint::bench(bad), Error);
}
