// Command-line front end over the whole pipeline: prepare, synth, train,
// evaluate, predict, gradcheck, bench. Machine-readable JSON goes to stdout,
// diagnostics to stderr. Exit codes: 0 success, 1 data/validation errors,
// 2 usage errors.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fint/data.hpp"
#include "fint/harness.hpp"
#include "fint/trainer.hpp"

namespace {

using nlohmann::json;

// Mirrors every epoch line into two sinks (log file and stderr).
class TeeBuf : public std::streambuf {
public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

private:
    int overflow(int c) override {
        if (c != EOF) {
            if (a_) a_->sputc(static_cast<char>(c));
            if (b_) b_->sputc(static_cast<char>(c));
        }
        return c;
    }
    int sync() override {
        if (a_) a_->pubsync();
        if (b_) b_->pubsync();
        return 0;
    }

    std::streambuf* a_;
    std::streambuf* b_;
};

bool file_readable(const std::string& path) {
    std::ifstream in(path);
    return in.good();
}

int usage_error(const std::string& message) {
    std::cerr << "error: " << message << "\nrun with --help for usage\n";
    return 2;
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareFlags {
    std::string input, schema, out;
    uint32_t min_count = 10;
    uint64_t seed = 1;
};

int run_prepare(const PrepareFlags& f) {
    if (!file_readable(f.input)) return usage_error("cannot open input file: " + f.input);
    if (!file_readable(f.schema)) return usage_error("cannot open schema file: " + f.schema);

    const auto schema = fint::load_schema_file(f.schema);
    std::ifstream in(f.input);
    fint::PrepareResult res = fint::prepare(in, schema, f.min_count, f.seed);

    for (const auto& err : res.row_errors) std::cerr << f.input << ": " << err << "\n";
    if (res.malformed > res.row_errors.size())
        std::cerr << "(" << res.malformed - res.row_errors.size()
                  << " further malformed rows not shown)\n";
    for (const auto& w : res.manifest.warnings) std::cerr << "warning: " << w << "\n";

    if (res.rows_read == 0) {
        std::cerr << "error: input contains no rows\n";
        return 1;
    }
    if (res.malformed * 100 > res.rows_read) {
        std::cerr << "error: " << res.malformed << " of " << res.rows_read
                  << " rows are malformed (over the 1% limit)\n";
        return 1;
    }

    std::filesystem::create_directories(f.out);
    res.manifest.save(f.out + "/manifest.json");
    const char* split_names[3] = {"train", "val", "test"};
    for (int s = 0; s < 3; ++s)
        fint::write_dataset(f.out + "/" + split_names[s] + ".fintdata", res.splits[s]);

    json vocab_sizes = json::object();
    json folded = json::object();
    for (size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].kind == fint::FieldKind::numeric) continue;
        vocab_sizes[schema[i].name] = res.manifest.schema[i].vocab_size;
        folded[schema[i].name] = {{"distinct", res.manifest.vocabs[i].folded_distinct},
                                  {"occurrences", res.manifest.vocabs[i].folded_occurrences}};
    }
    json summary{{"rows_read", res.rows_read},
                 {"malformed", res.malformed},
                 {"rows", {{"train", res.manifest.split_rows[0]},
                           {"val", res.manifest.split_rows[1]},
                           {"test", res.manifest.split_rows[2]}}},
                 {"unknown_occurrences", {{"train", res.unknown_occurrences[0]},
                                          {"val", res.unknown_occurrences[1]},
                                          {"test", res.unknown_occurrences[2]}}},
                 {"vocab_sizes", vocab_sizes},
                 {"folded", folded},
                 {"numeric", {{"clamped", res.manifest.numeric_stats.clamped},
                              {"missing", res.manifest.numeric_stats.missing},
                              {"unparsable", res.manifest.numeric_stats.unparsable}}},
                 {"min_count", f.min_count},
                 {"seed", f.seed},
                 {"schema_hash", res.manifest.schema_hash()},
                 {"out", f.out}};
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthFlags {
    std::string out, schema_out;
    uint64_t rows = 10000;
    uint32_t fields = 6;
    uint32_t cardinality = 16;
    uint32_t order = 2;
    double noise = 0.0;
    uint64_t seed = 1;
};

int run_synth(const SynthFlags& f) {
    fint::SynthSpec spec;
    spec.rows = f.rows;
    spec.fields = f.fields;
    spec.cardinality = f.cardinality;
    spec.order = f.order;
    spec.noise = f.noise;
    spec.seed = f.seed;

    std::ofstream out(f.out);
    if (!out) return usage_error("cannot write output file: " + f.out);
    json meta = fint::synth_parity(spec, out);
    out.close();
    if (!out) {
        std::cerr << "error: I/O failure while writing " << f.out << "\n";
        return 1;
    }

    std::ofstream schema_out(f.schema_out);
    if (!schema_out) return usage_error("cannot write schema file: " + f.schema_out);
    schema_out << fint::schema_to_json(fint::synth_schema(f.fields)).dump(2) << "\n";
    schema_out.close();

    meta["out"] = f.out;
    meta["schema_out"] = f.schema_out;
    std::cout << meta.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string config_path, model, data, out, log;
    uint32_t embed_dim = 16, layers = 3, batch = 1024, epochs = 20, patience = 3;
    std::vector<uint32_t> hidden = {300, 300, 300};
    uint32_t fm_dim = 16;
    double lr = 1e-3;
    uint64_t init_seed = 1, shuffle_seed = 7;
    bool save_optimizer = false;
    bool no_restore_best = false;
};

int run_train(const CLI::App& sub, const TrainFlags& f) {
    fint::TrainConfig cfg;
    if (!f.config_path.empty()) {
        if (!file_readable(f.config_path))
            return usage_error("cannot open config file: " + f.config_path);
        std::ifstream in(f.config_path);
        json j;
        in >> j;
        cfg = fint::TrainConfig::from_json(j);
    }
    if (sub.count("--model")) cfg.model = fint::model_kind_from_string(f.model);
    if (sub.count("--embed-dim")) cfg.fint.embed_dim = f.embed_dim;
    if (sub.count("--layers")) cfg.fint.layers = f.layers;
    if (sub.count("--hidden")) cfg.fint.ffn_hidden = f.hidden;
    if (sub.count("--fm-dim")) cfg.fm_factor_dim = f.fm_dim;
    if (sub.count("--lr")) cfg.adam.lr = static_cast<fint::real>(f.lr);
    if (sub.count("--batch")) cfg.batch_size = f.batch;
    if (sub.count("--epochs")) cfg.max_epochs = f.epochs;
    if (sub.count("--patience")) cfg.patience = f.patience;
    if (sub.count("--init-seed")) cfg.init_seed = f.init_seed;
    if (sub.count("--shuffle-seed")) cfg.shuffle_seed = f.shuffle_seed;
    if (sub.count("--data")) cfg.data = f.data;
    if (sub.count("--out")) cfg.out = f.out;
    if (sub.count("--log")) cfg.log = f.log;
    if (sub.count("--save-optimizer")) cfg.save_optimizer = true;
    if (sub.count("--no-restore-best")) cfg.restore_best = false;
    cfg.validate();

    if (cfg.data.empty()) return usage_error("no dataset directory (--data or config)");
    if (cfg.out.empty()) cfg.out = "model.ckpt";
    if (!file_readable(cfg.data + "/manifest.json"))
        return usage_error("no manifest.json under: " + cfg.data);

    const auto manifest = fint::DatasetManifest::load(cfg.data + "/manifest.json");
    const auto train_ds = fint::read_dataset(cfg.data + "/train.fintdata", manifest.schema);
    const auto val_ds = fint::read_dataset(cfg.data + "/val.fintdata", manifest.schema);

    fint::Model model = fint::make_model(cfg, manifest.schema);
    fint::AdamState state;

    std::ofstream log_file;
    if (!cfg.log.empty()) {
        log_file.open(cfg.log);
        if (!log_file) return usage_error("cannot write log file: " + cfg.log);
    }
    TeeBuf tee(cfg.log.empty() ? nullptr : log_file.rdbuf(), std::cerr.rdbuf());
    std::ostream log_stream(&tee);

    const auto res = fint::train(model, cfg, train_ds, val_ds, &state, &log_stream);
    fint::save_model(cfg.out, model, manifest.schema_hash(),
                     cfg.save_optimizer ? &state : nullptr);

    json summary{{"model", fint::to_string(cfg.model)},
                 {"epochs_run", res.log.size()},
                 {"best_epoch", res.best_epoch},
                 {"best_val_auc", res.best_val_auc},
                 {"total_steps", res.total_steps},
                 {"param_count", model.param_count()},
                 {"schema_hash", manifest.schema_hash()},
                 {"init_seed", cfg.init_seed},
                 {"shuffle_seed", cfg.shuffle_seed},
                 {"checkpoint", cfg.out}};
    if (!cfg.log.empty()) summary["log"] = cfg.log;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate / predict
// ---------------------------------------------------------------------------

struct EvalFlags {
    std::string data, checkpoint, split = "test", out;
    uint32_t batch = 1024;
};

int run_evaluate(const EvalFlags& f, bool predict) {
    if (!file_readable(f.data + "/manifest.json"))
        return usage_error("no manifest.json under: " + f.data);
    if (!file_readable(f.checkpoint)) return usage_error("cannot open checkpoint: " + f.checkpoint);

    const auto manifest = fint::DatasetManifest::load(f.data + "/manifest.json");
    const auto ck = fint::load_checkpoint(f.checkpoint, manifest.schema_hash());
    fint::Model model = fint::load_model(ck, manifest.schema);
    const auto ds = fint::read_dataset(f.data + "/" + f.split + ".fintdata", manifest.schema);

    if (!predict) {
        const auto report = fint::evaluate_model(model, ds, f.batch);
        std::cout << report.to_json().dump() << "\n";
        return 0;
    }

    const auto scores = fint::predict_model(model, ds, f.batch);
    std::ostream* sink = &std::cout;
    std::ofstream out_file;
    if (!f.out.empty()) {
        out_file.open(f.out);
        if (!out_file) return usage_error("cannot write output file: " + f.out);
        sink = &out_file;
    }
    char buf[64];
    for (fint::real s : scores) {
        std::snprintf(buf, sizeof buf, "%.9g\n", static_cast<double>(s));
        *sink << buf;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck / bench
// ---------------------------------------------------------------------------

struct GradcheckFlags {
    std::string model = "fint";
    uint64_t seed = 1;
    double step = 1e-5;
    double tolerance = 1e-6;
};

int run_gradcheck(const GradcheckFlags& f) {
    fint::GradCheckConfig gc;
    gc.model = fint::model_kind_from_string(f.model);
    gc.seed = f.seed;
    gc.step = f.step;
    gc.tolerance = f.tolerance;
    const auto rep = fint::gradcheck(gc);
    std::cout << rep.to_json().dump() << "\n";
    if (!rep.error.empty()) std::cerr << "error: " << rep.error << "\n";
    return rep.pass ? 0 : 1;
}

struct BenchFlags {
    uint64_t rows = 2048;
    uint32_t batch = 256;
    uint32_t epochs = 5;
    uint32_t warmup = 1;
    uint32_t ffn_width = 64;
    uint32_t cardinality = 16;
    uint64_t seed = 1;
    std::vector<uint32_t> m_sweep = {8, 16, 32, 64};
    std::vector<uint32_t> k_sweep = {1, 2, 4};
    std::vector<uint32_t> d_sweep = {16, 32};
};

int run_bench(const BenchFlags& f) {
    fint::BenchConfig bc;
    bc.rows = f.rows;
    bc.batch = f.batch;
    bc.timed_epochs = f.epochs;
    bc.warmup_epochs = f.warmup;
    bc.ffn_width = f.ffn_width;
    bc.cardinality = f.cardinality;
    bc.seed = f.seed;
    bc.m_sweep = f.m_sweep;
    bc.k_sweep = f.k_sweep;
    bc.d_sweep = f.d_sweep;
    const auto rep = fint::bench(bc, &std::cerr);
    rep.write_csv(std::cout);
    std::cout << rep.summary_json().dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fint: field-aware interaction network for CTR prediction"};
    app.require_subcommand(1);

    PrepareFlags pf;
    auto* prepare = app.add_subcommand("prepare", "Encode a raw TSV dataset against a schema");
    prepare->add_option("--input", pf.input, "Raw TSV input (label first)")->required();
    prepare->add_option("--schema", pf.schema, "Schema JSON file")->required();
    prepare->add_option("--out", pf.out, "Output directory")->required();
    prepare->add_option("--min-count", pf.min_count, "Fold rarer feature values into 'unknown'")
        ->capture_default_str();
    prepare->add_option("--seed", pf.seed, "Split shuffle seed")->capture_default_str();

    SynthFlags sf;
    auto* synth = app.add_subcommand("synth", "Generate a planted-parity synthetic dataset");
    synth->add_option("--out", sf.out, "Raw TSV output path")->required();
    synth->add_option("--schema-out", sf.schema_out, "Schema JSON output path")->required();
    synth->add_option("--rows", sf.rows, "Row count")->capture_default_str();
    synth->add_option("--fields", sf.fields, "Categorical field count")->capture_default_str();
    synth->add_option("--cardinality", sf.cardinality, "Values per field")->capture_default_str();
    synth->add_option("--order", sf.order, "Parity order r")->capture_default_str();
    synth->add_option("--noise", sf.noise, "Label flip probability")->capture_default_str();
    synth->add_option("--seed", sf.seed, "Generator seed")->capture_default_str();

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train a model on a prepared dataset");
    train->add_option("--config", tf.config_path, "JSON config file (flags override it)");
    train->add_option("--data", tf.data, "Prepared dataset directory");
    train->add_option("--model", tf.model, "Model kind: fint, lr or fm")
        ->check(CLI::IsMember({"fint", "lr", "fm"}))
        ->default_str("fint");
    train->add_option("--embed-dim", tf.embed_dim, "Embedding width D")->capture_default_str();
    train->add_option("--layers", tf.layers, "Interaction layer count K")->capture_default_str();
    train->add_option("--hidden", tf.hidden, "FFN hidden widths")
        ->delimiter(',')
        ->default_str("300,300,300");
    train->add_option("--fm-dim", tf.fm_dim, "FM factor width")->capture_default_str();
    train->add_option("--lr", tf.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--batch", tf.batch, "Mini-batch size")->capture_default_str();
    train->add_option("--epochs", tf.epochs, "Epoch cap")->capture_default_str();
    train->add_option("--patience", tf.patience, "Early-stop patience (validation AUC)")
        ->capture_default_str();
    train->add_option("--init-seed", tf.init_seed, "Parameter init seed")->capture_default_str();
    train->add_option("--shuffle-seed", tf.shuffle_seed, "Epoch shuffle seed")
        ->capture_default_str();
    train->add_option("--out", tf.out, "Checkpoint output path")->default_str("model.ckpt");
    train->add_option("--log", tf.log, "Epoch log path (JSON lines)");
    train->add_flag("--save-optimizer", tf.save_optimizer,
                    "Store Adam state in the checkpoint for exact resumption");
    train->add_flag("--no-restore-best", tf.no_restore_best,
                    "Keep the final weights instead of the best validation epoch");

    EvalFlags ef;
    auto* evaluate = app.add_subcommand("evaluate", "Compute AUC and logloss for a checkpoint");
    evaluate->add_option("--data", ef.data, "Prepared dataset directory")->required();
    evaluate->add_option("--checkpoint", ef.checkpoint, "Checkpoint path")->required();
    evaluate->add_option("--split", ef.split, "Dataset split")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    evaluate->add_option("--batch", ef.batch, "Evaluation batch size")->capture_default_str();

    EvalFlags prf;
    auto* predict = app.add_subcommand("predict", "Write one prediction per input row");
    predict->add_option("--data", prf.data, "Prepared dataset directory")->required();
    predict->add_option("--checkpoint", prf.checkpoint, "Checkpoint path")->required();
    predict->add_option("--split", prf.split, "Dataset split")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    predict->add_option("--batch", prf.batch, "Prediction batch size")->capture_default_str();
    predict->add_option("--out", prf.out, "Output file (default stdout)");

    GradcheckFlags gf;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gradcheck->add_option("--model", gf.model, "Model kind: fint, lr or fm")
        ->check(CLI::IsMember({"fint", "lr", "fm"}))
        ->capture_default_str();
    gradcheck->add_option("--seed", gf.seed, "Micro-model init seed")->capture_default_str();
    gradcheck->add_option("--step", gf.step, "Central difference step")->capture_default_str();
    gradcheck->add_option("--tolerance", gf.tolerance, "Max relative error allowed")
        ->capture_default_str();

    BenchFlags bf;
    auto* bench = app.add_subcommand("bench", "Interaction-stage scaling benchmark");
    bench->add_option("--rows", bf.rows, "Synthetic rows per cell")->capture_default_str();
    bench->add_option("--batch", bf.batch, "Mini-batch size")->capture_default_str();
    bench->add_option("--epochs", bf.epochs, "Timed epochs per cell")->capture_default_str();
    bench->add_option("--warmup", bf.warmup, "Warmup epochs per cell")->capture_default_str();
    bench->add_option("--ffn-width", bf.ffn_width, "FFN hidden width D_F")->capture_default_str();
    bench->add_option("--cardinality", bf.cardinality, "Values per field")->capture_default_str();
    bench->add_option("--seed", bf.seed, "Data and init seed")->capture_default_str();
    bench->add_option("--m-sweep", bf.m_sweep, "Field counts to sweep")
        ->delimiter(',')
        ->default_str("8,16,32,64");
    bench->add_option("--k-sweep", bf.k_sweep, "Layer counts to sweep")
        ->delimiter(',')
        ->default_str("1,2,4");
    bench->add_option("--d-sweep", bf.d_sweep, "Embedding widths to sweep")
        ->delimiter(',')
        ->default_str("16,32");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (prepare->parsed()) return run_prepare(pf);
        if (synth->parsed()) return run_synth(sf);
        if (train->parsed()) return run_train(*train, tf);
        if (evaluate->parsed()) return run_evaluate(ef, false);
        if (predict->parsed()) return run_evaluate(prf, true);
        if (gradcheck->parsed()) return run_gradcheck(gf);
        if (bench->parsed()) return run_bench(bf);
    } catch (const fint::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
