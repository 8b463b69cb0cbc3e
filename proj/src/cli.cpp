#include "biqc/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "biqc/data.hpp"
#include "biqc/model.hpp"
#include "biqc/spectral.hpp"
#include "biqc/train.hpp"

namespace biqc::cli {

namespace fs = std::filesystem;

namespace {

struct DataOptions {
    std::string dataset = "synthetic";
    std::string images;
    std::string labels;
    std::string digits = "3,5";
    std::string dir;
    std::string class0_prefix = "disc";
    std::string class1_prefix = "square";
    std::size_t resolution = 224;
    std::size_t n_per_class = 50;
    std::size_t resize = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
};

struct Options {
    DataOptions data;
    model::BiqcConfig model;
    std::string ablation = "none";
    train::TrainConfig train;
    std::string checkpoint;
    std::string out_dir = ".";
    std::string features_csv;
    std::string spectrum_csv;
    std::string image;
    bool quiet = false;
};

void add_data_flags(CLI::App* app, DataOptions& d) {
    app->add_option("--dataset", d.dataset, "Data source")->check(CLI::IsMember({"idx", "pgm", "synthetic"}));
    app->add_option("--images", d.images, "IDX image file (idx)");
    app->add_option("--labels", d.labels, "IDX label file (idx)");
    app->add_option("--digits", d.digits, "Two IDX classes mapped to labels 0,1");
    app->add_option("--dir", d.dir, "Directory of P5 PGM files (pgm)");
    app->add_option("--class0-prefix", d.class0_prefix, "Filename prefix of class 0 (pgm)");
    app->add_option("--class1-prefix", d.class1_prefix, "Filename prefix of class 1 (pgm)");
    app->add_option("--resolution", d.resolution, "Image side of generated textures (synthetic)");
    app->add_option("--n-per-class", d.n_per_class, "Generated images per class (synthetic)");
    app->add_option("--resize", d.resize, "Area-resample images to this square side, 0 keeps native size");
    app->add_option("--train-count", d.train_count, "Training samples, 0 takes 80% of the data");
    app->add_option("--test-count", d.test_count, "Test samples, 0 takes the remainder");
}

void add_model_flags(CLI::App* app, Options& o) {
    auto& m = o.model;
    app->add_option("--qubits", m.ansatz.num_qubits, "Qubits d");
    app->add_option("--blocks", m.ansatz.num_blocks, "Stacked quantum blocks");
    app->add_option("--layers", m.ansatz.layers_per_block, "Re-uploading layers per block");
    app->add_option("--patch", m.patch_size, "Patch side h, 0 selects 4 (<=32 px images) or 32");
    app->add_option("--cutoff", m.spectral.cutoff, "Spectral cutoff f_c");
    app->add_flag("--folded-frequencies", m.spectral.folded_frequencies, "Use |u|,|v| folded to h/2");
    app->add_option("--noise", m.ansatz.noise_level, "RX noise amplitude per qubit");
    app->add_option("--ablation", o.ablation, "none or '+'-joined Ab-EVC, Ab-OFC, Ab-HSF, Ab-Quantum");
}

void add_train_flags(CLI::App* app, train::TrainConfig& t) {
    app->add_option("--lr", t.learning_rate, "AdamW learning rate");
    app->add_option("--weight-decay", t.weight_decay, "Decoupled weight decay");
    app->add_option("--batch", t.batch_size, "Mini-batch size");
    app->add_option("--max-epochs", t.max_epochs, "Epoch limit");
    app->add_option("--patience", t.patience, "Epochs without improvement before stopping");
    app->add_option("--min-delta", t.min_delta, "Smallest loss decrease counted as improvement");
    app->add_flag("--train-with-noise", t.train_with_noise, "Keep circuit noise on during training");
    app->add_flag("--monitor-validation", t.monitor_validation, "Early-stop on test loss instead of train loss");
    app->add_option("--threads", t.threads, "Worker threads, 0 uses all cores (capped by BIQC_THREADS)");
}

std::pair<int, int> parse_digits(const std::string& s) {
    int a = 0, b = 0;
    char comma = 0;
    std::istringstream in(s);
    if (!(in >> a >> comma >> b) || comma != ',' || !in.eof() || a == b) {
        throw std::invalid_argument("--digits expects two distinct classes like 3,5, got '" + s + "'");
    }
    return {a, b};
}

data::Dataset load_dataset(const DataOptions& d, std::uint64_t seed) {
    data::Dataset ds;
    if (d.dataset == "idx") {
        if (d.images.empty() || d.labels.empty()) throw std::invalid_argument("--dataset idx needs --images and --labels");
        ds = data::load_idx(d.images, d.labels, parse_digits(d.digits));
    } else if (d.dataset == "pgm") {
        if (d.dir.empty()) throw std::invalid_argument("--dataset pgm needs --dir");
        ds = data::load_pgm_dir(d.dir, d.class0_prefix, d.class1_prefix);
    } else {
        ds = data::gen_texture(d.n_per_class, d.resolution, seed);
    }
    if (d.resize) ds = data::resize_all(ds, d.resize, d.resize);
    data::normalize_all(ds);
    data::check_dataset(ds);
    return ds;
}

std::pair<data::Dataset, data::Dataset> load_split(const DataOptions& d, std::uint64_t seed) {
    const data::Dataset ds = load_dataset(d, seed);
    std::size_t train_n = d.train_count, test_n = d.test_count;
    if (train_n == 0) train_n = ds.size() - ds.size() / 5;
    if (test_n == 0) test_n = ds.size() > train_n ? ds.size() - train_n : 0;
    if (test_n == 0) throw std::invalid_argument("no samples left for the test split");
    return data::split(ds, train_n, test_n, seed);
}

model::BiqcConfig model_config(const Options& o, const data::Dataset& ds) {
    model::BiqcConfig c = o.model;
    c.image_h = ds.height;
    c.image_w = ds.width;
    c.ablation = model::AblationSet::parse(o.ablation);
    return model::resolve(c);
}

void echo_config(std::ostream& out, const Options& o, const model::BiqcConfig& c, const train::TrainConfig& t) {
    const DataOptions& d = o.data;
    out << "# resolved configuration\n";
    out << "data.dataset=" << d.dataset << "\n";
    if (d.dataset == "idx") out << "data.images=" << d.images << "\ndata.labels=" << d.labels << "\ndata.digits=" << d.digits << "\n";
    if (d.dataset == "pgm") {
        out << "data.dir=" << d.dir << "\ndata.class0_prefix=" << d.class0_prefix << "\ndata.class1_prefix="
            << d.class1_prefix << "\n";
    }
    if (d.dataset == "synthetic") out << "data.resolution=" << d.resolution << "\ndata.n_per_class=" << d.n_per_class << "\n";
    out << "data.resize=" << d.resize << "\n";
    for (const auto& [k, v] : model::to_key_values(c)) out << k << "=" << v << "\n";
    for (const auto& [k, v] : train::to_key_values(t)) out << k << "=" << v << "\n";
    out << "train.resolved_threads=" << train::resolve_threads(t.threads) << "\n";
}

std::string fmt(double v, int precision = 4) {
    if (std::isnan(v)) return "nan";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

void print_epoch(std::ostream& out, const train::EpochMetrics& e) {
    out << "epoch " << e.epoch << " loss " << fmt(e.loss, 6) << " train_acc " << fmt(e.train_acc) << " test_acc "
        << fmt(e.test_acc) << " test_auc " << fmt(e.test_auc) << "\n";
}

fs::path out_path(const Options& o, const std::string& name) {
    fs::create_directories(o.out_dir);
    return fs::path(o.out_dir) / name;
}

int cmd_train(const Options& o, std::ostream& out) {
    const auto [train_set, test_set] = load_split(o.data, o.train.seed);
    const model::BiqcConfig config = model_config(o, train_set);
    train::validate(o.train);
    echo_config(out, o, config, o.train);
    out << "# " << train_set.size() << " train / " << test_set.size() << " test samples, " << config.image_h << "x"
        << config.image_w << "\n";

    auto params = model::init_params(config, o.train.seed);
    const auto result = train::train_loop(config, std::move(params), train_set, test_set, o.train,
                                          [&](const train::EpochMetrics& e) {
                                              if (!o.quiet) print_epoch(out, e);
                                          });
    const fs::path ck = o.checkpoint.empty() ? out_path(o, "model.biqc") : fs::path(o.checkpoint);
    if (ck.has_parent_path()) fs::create_directories(ck.parent_path());
    data::save_checkpoint(ck, train::make_checkpoint({config, o.train, result.params}));
    const fs::path metrics = out_path(o, "metrics.csv");
    train::write_metrics_csv(metrics, result.log);
    const auto& last = result.log.back();
    out << "finished after " << last.epoch << " epochs" << (result.stopped_early ? " (early stop)" : "")
        << ": test_acc " << fmt(last.test_acc) << " test_auc " << fmt(last.test_auc) << "\n";
    out << "checkpoint " << ck.string() << "\nmetrics " << metrics.string() << "\n";
    return 0;
}

train::Snapshot load_snapshot(const Options& o, const CLI::App* sub) {
    if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
    train::Snapshot s = train::restore_checkpoint(data::load_checkpoint(o.checkpoint));
    if (sub->count("--noise")) s.config.ansatz.noise_level = o.model.ansatz.noise_level;
    model::validate(s.config);
    return s;
}

int cmd_eval(const Options& o, const CLI::App* sub, std::ostream& out) {
    const train::Snapshot s = load_snapshot(o, sub);
    const auto [train_set, test_set] = load_split(o.data, o.train.seed);
    echo_config(out, o, s.config, s.train);
    const auto patches = train::metric_patches(s.config, test_set);
    const auto r = train::evaluate(s.config, s.params, test_set, o.train.seed, patches,
                                   train::resolve_threads(o.train.threads));
    out << "samples " << test_set.size() << "\naccuracy " << fmt(r.accuracy) << "\nauc " << fmt(r.auc) << "\nloss "
        << fmt(r.loss, 6) << "\ncircuit_evaluations " << r.circuit_evaluations << "\n";
    if (!o.features_csv.empty()) {
        train::write_features_csv(o.features_csv, test_set.labels, r.features);
        out << "features " << o.features_csv << "\n";
    }
    if (!o.spectrum_csv.empty()) {
        std::vector<double> coeffs;
        for (const auto& f : r.features) coeffs.push_back(train::nyquist_coefficient(f));
        train::write_spectrum_csv(o.spectrum_csv, test_set.labels, coeffs);
        out << "spectrum " << o.spectrum_csv << "\n";
    }
    return 0;
}

int cmd_spectrum(const Options& o, const CLI::App* sub, std::ostream& out) {
    const train::Snapshot s = load_snapshot(o, sub);
    const auto [train_set, test_set] = load_split(o.data, o.train.seed);
    echo_config(out, o, s.config, s.train);
    const auto r = train::evaluate(s.config, s.params, test_set, o.train.seed, train::metric_patches(s.config, test_set),
                                   train::resolve_threads(o.train.threads));
    std::vector<double> coeffs;
    double sum[2] = {0, 0};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t i = 0; i < r.features.size(); ++i) {
        coeffs.push_back(train::nyquist_coefficient(r.features[i]));
        sum[test_set.labels[i]] += coeffs.back();
        ++cnt[test_set.labels[i]];
    }
    const fs::path path = o.spectrum_csv.empty() ? out_path(o, "spectrum.csv") : fs::path(o.spectrum_csv);
    train::write_spectrum_csv(path, test_set.labels, coeffs);
    for (int c = 0; c < 2; ++c) {
        out << "class " << c << " mean_nyquist " << fmt(cnt[c] ? sum[c] / cnt[c] : NAN, 6) << " (n=" << cnt[c] << ")\n";
    }
    out << "spectrum " << path.string() << "\n";
    return 0;
}

int cmd_select_patch(const Options& o, const CLI::App* sub, std::ostream& out) {
    if (o.image.empty()) throw std::invalid_argument("--image is required");
    TensorF raw = data::read_pgm(o.image);
    if (o.data.resize) raw = data::resize_area(raw, o.data.resize, o.data.resize);
    const TensorF image = data::normalize_minmax(raw);

    model::BiqcConfig config = o.model;
    std::optional<train::Snapshot> snap;
    if (!o.checkpoint.empty()) {
        snap = load_snapshot(o, sub);
        config = snap->config;
    } else {
        config.image_h = image.dim(0);
        config.image_w = image.dim(1);
        config.ablation = model::AblationSet::parse(o.ablation);
        config = model::resolve(config);
    }
    if (image.dim(0) != config.image_h || image.dim(1) != config.image_w) {
        throw std::invalid_argument("image is " + std::to_string(image.dim(0)) + "x" + std::to_string(image.dim(1)) +
                                    " but the checkpoint expects " + std::to_string(config.image_h) + "x" +
                                    std::to_string(config.image_w));
    }
    out << "image " << o.image << " " << image.dim(0) << "x" << image.dim(1) << " patch " << config.patch_size
        << " cutoff " << config.spectral.cutoff << "\n";
    const auto sel = spectral::select_hsf_patch(image, config.spectral);
    out << "r-map " << sel.map.rows << "x" << sel.map.cols << "\n";
    for (std::size_t i = 0; i < sel.map.rows; ++i) {
        for (std::size_t j = 0; j < sel.map.cols; ++j) out << (j ? " " : "") << fmt(sel.map.at(i, j));
        out << "\n";
    }
    out << "metric patch (row, col) = (" << sel.region.row << ", " << sel.region.col << ")\n";
    if (snap && model::topology(config).attention) {
        std::mt19937_64 rng(o.train.seed);
        const auto tr = model::biqc_forward(config, snap->params, image, rng, sel.region);
        out << "attention patch (row, col) = (" << tr.attention_branch->region.row << ", "
            << tr.attention_branch->region.col << ") gate " << fmt(tr.gate) << "\n";
        out << "probability " << fmt(tr.probability) << "\n";
    } else {
        out << "attention patch: needs --checkpoint with an attention branch\n";
    }
    return 0;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
    const auto ds = data::gen_texture(o.data.n_per_class, o.data.resolution, o.train.seed);
    fs::create_directories(o.out_dir);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char name[64];
        const std::string& prefix = ds.labels[i] == 0 ? o.data.class0_prefix : o.data.class1_prefix;
        std::snprintf(name, sizeof name, "_%05zu.pgm", i);
        data::write_pgm(fs::path(o.out_dir) / (prefix + name), ds.images[i]);
    }
    out << "wrote " << ds.size() << " images (" << o.data.resolution << "x" << o.data.resolution << ") to "
        << o.out_dir << "\n";
    return 0;
}

int cmd_ablate(const Options& o, std::ostream& out) {
    const auto [train_set, test_set] = load_split(o.data, o.train.seed);
    const model::BiqcConfig base = model_config(o, train_set);
    train::validate(o.train);
    echo_config(out, o, base, o.train);

    struct Row {
        std::string name;
        std::size_t dim;
        train::EpochMetrics last;
    };
    std::vector<Row> rows;
    const std::vector<std::optional<model::Ablation>> variants = {
        std::nullopt, model::Ablation::EVC, model::Ablation::OFC, model::Ablation::HSF, model::Ablation::Quantum};
    for (const auto& v : variants) {
        const model::BiqcConfig c = v ? model::apply_ablation(base, *v) : base;
        const std::string name = v ? model::ablation_name(*v) : "none";
        out << "# variant " << name << "\n";
        auto result = train::train_loop(c, model::init_params(c, o.train.seed), train_set, test_set, o.train,
                                        [&](const train::EpochMetrics& e) {
                                            if (!o.quiet) print_epoch(out, e);
                                        });
        rows.push_back({name, model::fusion_dim(c), result.log.back()});
    }
    const fs::path csv = out_path(o, "ablation.csv");
    std::ofstream f(csv);
    if (!f) throw std::runtime_error("cannot write " + csv.string());
    f << "variant,fusion_dim,epochs,loss,test_acc,test_auc\n";
    out << std::left << std::setw(12) << "variant" << std::setw(11) << "fusion_dim" << std::setw(8) << "epochs"
        << std::setw(10) << "loss" << std::setw(10) << "test_acc" << "test_auc\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(12) << r.name << std::setw(11) << r.dim << std::setw(8) << r.last.epoch
            << std::setw(10) << fmt(r.last.loss) << std::setw(10) << fmt(r.last.test_acc) << fmt(r.last.test_auc)
            << "\n";
        f << r.name << ',' << r.dim << ',' << r.last.epoch << ',' << r.last.loss << ',' << r.last.test_acc << ','
          << r.last.test_auc << '\n';
    }
    out << "table " << csv.string() << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hybrid quantum-classical image classifier"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--seed", o.train.seed, "Seed for initialization, splits, shuffling and noise");
        sub->add_option("--out-dir", o.out_dir, "Directory for produced files");
        sub->add_flag("--quiet", o.quiet, "Suppress per-epoch lines");
    };

    auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint and metrics CSV");
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    auto* select_cmd = app.add_subcommand("select-patch", "Print the r-map and selected regions for one image");
    auto* spectrum_cmd = app.add_subcommand("spectrum", "Dump the Nyquist coefficient per test sample");
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic PGM texture corpus");
    auto* ablate_cmd = app.add_subcommand("ablate", "Train every ablation variant and print a comparison table");

    for (auto* sub : {train_cmd, ablate_cmd}) {
        common(sub);
        add_data_flags(sub, o.data);
        add_model_flags(sub, o);
        add_train_flags(sub, o.train);
    }
    train_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint path, default <out-dir>/model.biqc");

    for (auto* sub : {eval_cmd, spectrum_cmd}) {
        common(sub);
        add_data_flags(sub, o.data);
        sub->add_option("--checkpoint", o.checkpoint, "Checkpoint to load")->required();
        sub->add_option("--noise", o.model.ansatz.noise_level, "Override the checkpoint's noise amplitude");
        sub->add_option("--threads", o.train.threads, "Worker threads, 0 uses all cores (capped by BIQC_THREADS)");
        sub->add_option("--spectrum-csv", o.spectrum_csv, "Write sample_id,label,coefficient here");
    }
    eval_cmd->add_option("--features-csv", o.features_csv, "Write fused feature vectors here");

    select_cmd->add_option("--image", o.image, "P5 PGM image")->required();
    select_cmd->add_option("--resize", o.data.resize, "Area-resample to this square side first, 0 keeps native");
    select_cmd->add_option("--patch", o.model.patch_size, "Patch side h, 0 selects the default rule");
    select_cmd->add_option("--cutoff", o.model.spectral.cutoff, "Spectral cutoff f_c");
    select_cmd->add_flag("--folded-frequencies", o.model.spectral.folded_frequencies, "Use folded frequencies");
    select_cmd->add_option("--checkpoint", o.checkpoint, "Optional checkpoint for the attention region");
    select_cmd->add_option("--seed", o.train.seed, "Seed for circuit noise");

    gen_cmd->add_option("--out-dir", o.out_dir, "Output directory");
    gen_cmd->add_option("--resolution", o.data.resolution, "Image side");
    gen_cmd->add_option("--n-per-class", o.data.n_per_class, "Images per class");
    gen_cmd->add_option("--seed", o.train.seed, "Generator seed");
    gen_cmd->add_option("--class0-prefix", o.data.class0_prefix, "Filename prefix of class 0");
    gen_cmd->add_option("--class1-prefix", o.data.class1_prefix, "Filename prefix of class 1");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return e.get_exit_code() ? e.get_exit_code() : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(o, out);
        if (eval_cmd->parsed()) return cmd_eval(o, eval_cmd, out);
        if (spectrum_cmd->parsed()) return cmd_spectrum(o, spectrum_cmd, out);
        if (select_cmd->parsed()) return cmd_select_patch(o, select_cmd, out);
        if (gen_cmd->parsed()) return cmd_gen_data(o, out);
        if (ablate_cmd->parsed()) return cmd_ablate(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace biqc::cli
