// wvae: train/evaluate Wasserstein-objective VAEs, generate samples, compute
// Frechet image-quality scores, and run the data-augmentation experiment.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "wvae/wvae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace wvae;

namespace {

// exit codes per error family
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitInternal = 5;

struct DataOptions {
    std::string data_dir;
    std::string images, labels;
    std::string test_images, test_labels;
    long take = 0;  // 0 = all
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool with_test = false) {
    cmd->add_option("--data-dir", d.data_dir,
                    "Dataset root holding MNIST-style IDX files (env WVAE_DATA_DIR overrides "
                    "the default 'data')");
    cmd->add_option("--images", d.images, "Training images IDX file (overrides --data-dir)");
    cmd->add_option("--labels", d.labels, "Training labels IDX file");
    cmd->add_option("--take", d.take, "Use only the first N training examples")
        ->check(CLI::NonNegativeNumber);
    if (with_test) {
        cmd->add_option("--test-images", d.test_images, "Test images IDX file");
        cmd->add_option("--test-labels", d.test_labels, "Test labels IDX file");
    }
}

std::string data_root(const DataOptions& d) {
    if (!d.data_dir.empty()) return d.data_dir;
    if (const char* env = std::getenv("WVAE_DATA_DIR")) return env;
    return "data";
}

std::string find_idx(const std::string& dir, const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"}) {
        const fs::path p = fs::path(dir) / name;
        if (fs::exists(p)) return p.string();
    }
    throw IoError("dataset file not found: " + (fs::path(dir) / stem).string() + "[.gz]");
}

ImageSet load_train_set(const DataOptions& d) {
    std::string images = d.images, labels = d.labels;
    if (images.empty()) {
        const std::string root = data_root(d);
        images = find_idx(root, "train-images-idx3-ubyte");
        labels = find_idx(root, "train-labels-idx1-ubyte");
    }
    ImageSet set = labels.empty() ? load_idx_unlabeled(images) : load_idx(images, labels);
    if (d.take > 0) set = take(set, std::min<Eigen::Index>(d.take, set.size()));
    return set;
}

ImageSet load_test_set(const DataOptions& d, long n = 0) {
    std::string images = d.test_images, labels = d.test_labels;
    if (images.empty()) {
        const std::string root = data_root(d);
        images = find_idx(root, "t10k-images-idx3-ubyte");
        labels = find_idx(root, "t10k-labels-idx1-ubyte");
    }
    ImageSet set = load_idx(images, labels);
    if (n > 0) set = take(set, std::min<Eigen::Index>(n, set.size()));
    return set;
}

std::map<std::string, std::string> echo_config(
    std::initializer_list<std::pair<std::string, std::string>> kv) {
    return {kv.begin(), kv.end()};
}

// Flat "key = value" config file. Keys mirror the long option names of the
// subcommand; values set only options not already given on the command line,
// so flags always win. Unknown keys are rejected.
void apply_config_file(CLI::App* cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config")
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
        if (opt->count() > 0) continue;  // command line takes precedence
        try {
            opt->add_result(value);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad value for '" + key +
                              "': " + e.what());
        }
    }
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << j.dump(2) << "\n";
}

json config_json(const std::map<std::string, std::string>& resolved) {
    json j = json::object();
    for (const auto& [k, v] : resolved) j[k] = v;
    return j;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    DataOptions data;
    std::string variant = "ELBO_W";
    TrainConfig cfg;
    std::string out_dir = "out/train";
};

int run_train(const TrainArgs& a) {
    const ImageSet data = load_train_set(a.data);
    const LossVariant variant = variant_from_string(a.variant);
    fs::create_directories(a.out_dir);

    const auto resolved = echo_config({{"command", "train"},
                                       {"variant", to_string(variant)},
                                       {"epochs", std::to_string(a.cfg.epochs)},
                                       {"batch", std::to_string(a.cfg.batch)},
                                       {"lr", format_double(a.cfg.lr)},
                                       {"seed", std::to_string(a.cfg.seed)},
                                       {"h1", std::to_string(a.cfg.h1)},
                                       {"h2", std::to_string(a.cfg.h2)},
                                       {"latent", std::to_string(a.cfg.m)},
                                       {"lambda0", format_double(a.cfg.lambda0)},
                                       {"c", format_double(a.cfg.c)},
                                       {"rho", format_double(a.cfg.rho)},
                                       {"scheduler", a.cfg.scheduler_on ? "on" : "off"},
                                       {"take", std::to_string(a.data.take)},
                                       {"dataset_n", std::to_string(data.size())}});

    RunLog log;
    for (const auto& [k, v] : resolved) log.meta["config_" + k] = v;
    log.meta["config_hash"] = std::to_string(config_hash(resolved));

    const std::string runlog_path = (fs::path(a.out_dir) / "runlog.csv").string();
    VaeParams params;
    try {
        params = train(variant, data, a.cfg, log);
    } catch (const DivergenceError&) {
        write_runlog_csv(log, runlog_path);  // partial log preserved
        throw;
    }
    write_runlog_csv(log, runlog_path);
    save_vae_params(params, (fs::path(a.out_dir) / "params.wvae").string());

    json summary;
    summary["schema"] = "wvae-summary v1";
    summary["config"] = config_json(resolved);
    summary["config_hash"] = std::to_string(config_hash(resolved));
    summary["dataset_hash"] = std::to_string(data.content_hash());
    summary["iterations"] = log.last_iteration();
    summary["overfit_flag"] = log.meta.at("overfit_flag");
    if (!log.rows.empty()) {
        summary["final"] = {{"recon", log.rows.back().recon},
                            {"kl", log.rows.back().kl},
                            {"w2sq", log.rows.back().w2sq},
                            {"t", log.rows.back().t},
                            {"lambda", log.rows.back().lambda},
                            {"total", log.rows.back().total}};
    }
    summary["artifacts"] = {{"params", "params.wvae"}, {"runlog", "runlog.csv"}};
    write_json(summary, (fs::path(a.out_dir) / "summary.json").string());
    std::cout << "trained " << to_string(variant) << " for " << log.last_iteration()
              << " iterations; artifacts in " << a.out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------- generate ----

int run_generate(const std::string& params_path, int n, uint64_t seed,
                 const std::string& out_dir) {
    const VaeParams params = load_vae_params(params_path);
    fs::create_directories(out_dir);
    const Matrix images = generate(params, n, seed);

    ImageSet set;
    set.images = images;
    set.tags.assign(n, SourceTag::original);
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.pgm", i);
        write_pgm(images.row(i).transpose(), (fs::path(out_dir) / name).string());
    }
    write_idx_images(set, (fs::path(out_dir) / "images-idx3-ubyte").string());

    const auto resolved = echo_config({{"command", "generate"},
                                       {"params", params_path},
                                       {"n", std::to_string(n)},
                                       {"seed", std::to_string(seed)}});
    json manifest;
    manifest["schema"] = "wvae-manifest v1";
    manifest["config"] = config_json(resolved);
    manifest["config_hash"] = std::to_string(config_hash(resolved));
    manifest["count"] = n;
    manifest["idx_bundle"] = "images-idx3-ubyte";
    manifest["images_hash"] = std::to_string(set.content_hash());
    write_json(manifest, (fs::path(out_dir) / "manifest.json").string());
    std::cout << "wrote " << n << " PGM images + IDX bundle to " << out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------------ fid ----

int run_fid(const std::string& real_path, const std::string& gen_path,
            const std::string& features_path, long take_n, const std::string& out_path) {
    ImageSet real = load_idx_unlabeled(real_path);
    ImageSet gen = load_idx_unlabeled(gen_path);
    if (take_n > 0) {
        real = take(real, std::min<Eigen::Index>(take_n, real.size()));
        gen = take(gen, std::min<Eigen::Index>(take_n, gen.size()));
    }
    FeatureExtractor fx = features_path.empty()
                              ? raw_pixel_extractor()
                              : classifier_feature_extractor(load_classifier_params(features_path));
    const double score = fid_surrogate(real, gen, fx);

    json record;
    record["metric"] = "fid-surrogate";
    record["value"] = score;
    record["real-set"] = real_path;
    record["gen-set"] = gen_path;
    record["extractor-id"] = fx.id;
    record["real-n"] = real.size();
    record["gen-n"] = gen.size();
    std::cout << record.dump(2) << "\n";
    if (!out_path.empty()) write_json(record, out_path);
    return 0;
}

// ---------------------------------------------------------------- sweep ----

struct SweepArgs {
    DataOptions data;
    TrainConfig cfg;
    int runs = 30;
    int jobs = 1;
    int fid_n = 2000;
    int clf_epochs = 3;
    std::string out_dir = "out/sweep";
};

int run_sweep(const SweepArgs& a) {
    if (a.runs < 1) throw ConfigError("sweep: runs must be >= 1");
    const ImageSet data = load_train_set(a.data);
    fs::create_directories(a.out_dir);

    // one shared feature extractor, trained on the originals
    ClassifierConfig ccfg;
    ccfg.epochs = a.clf_epochs;
    ccfg.seed = derive_seed(a.cfg.seed, "sweep-clf");
    const ClassifierParams clf = train_classifier(data, ccfg);
    const FeatureExtractor fx = classifier_feature_extractor(clf);

    struct RunOutcome {
        int index = 0;
        double lambda = 0.0;
        double fid = 0.0;
        double final_total = 0.0;
        bool failed = false;
        std::string error;
    };
    std::vector<RunOutcome> outcomes(a.runs);

    // lambda draws are fixed up front so the sweep is reproducible under any --jobs
    Rng lambda_rng(derive_seed(a.cfg.seed, "sweep-lambda"));
    std::vector<double> lambdas(a.runs);
    for (auto& l : lambdas) l = lambda_rng.uniform(0.0, kLambdaMax);

    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= a.runs) return;
            RunOutcome& res = outcomes[i];
            res.index = i;
            res.lambda = lambdas[i];
            try {
                TrainConfig cfg = a.cfg;
                cfg.seed = derive_seed(a.cfg.seed, static_cast<uint64_t>(i));
                cfg.lambda0 = lambdas[i];
                cfg.scheduler_on = false;
                const fs::path run_dir = fs::path(a.out_dir) / ("run_" + std::to_string(i));
                fs::create_directories(run_dir);
                RunLog log;
                const VaeParams params = train(LossVariant::elbo_w_lambda, data, cfg, log);
                write_runlog_csv(log, (run_dir / "runlog.csv").string());
                save_vae_params(params, (run_dir / "params.wvae").string());

                ImageSet gen;
                gen.images = generate(params, a.fid_n, cfg.seed);
                gen.tags.assign(a.fid_n, SourceTag::generated_w);
                const ImageSet real_sub =
                    take(data, std::min<Eigen::Index>(a.fid_n, data.size()));
                res.fid = fid_surrogate(real_sub, gen, fx);
                res.final_total = log.rows.back().total;
            } catch (const std::exception& e) {
                res.failed = true;
                res.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    const int jobs = std::max(1, a.jobs);
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    double mean = 0.0, m2 = 0.0;
    int ok = 0;
    const RunOutcome* best = nullptr;
    for (const auto& r : outcomes) {
        if (r.failed) continue;
        ++ok;
        const double d = r.fid - mean;
        mean += d / ok;
        m2 += d * (r.fid - mean);
        if (!best || r.fid < best->fid) best = &r;
    }
    const double stddev = ok > 1 ? std::sqrt(m2 / (ok - 1)) : 0.0;

    const auto resolved = echo_config({{"command", "sweep"},
                                       {"runs", std::to_string(a.runs)},
                                       {"epochs", std::to_string(a.cfg.epochs)},
                                       {"batch", std::to_string(a.cfg.batch)},
                                       {"seed", std::to_string(a.cfg.seed)},
                                       {"fid_n", std::to_string(a.fid_n)},
                                       {"dataset_n", std::to_string(data.size())}});

    std::ofstream csv(fs::path(a.out_dir) / "sweep.csv", std::ios::binary);
    csv << "# wvae-sweep v1\n";
    csv << "# config_hash = " << config_hash(resolved) << "\n";
    csv << "# dataset_hash = " << data.content_hash() << "\n";
    csv << "run,lambda,fid,final_total,status\n";
    for (const auto& r : outcomes)
        csv << r.index << ',' << format_double(r.lambda) << ','
            << (r.failed ? "nan" : format_double(r.fid)) << ','
            << (r.failed ? "nan" : format_double(r.final_total)) << ','
            << (r.failed ? "failed" : "ok") << "\n";

    json summary;
    summary["schema"] = "wvae-sweep v1";
    summary["config"] = config_json(resolved);
    summary["config_hash"] = std::to_string(config_hash(resolved));
    summary["dataset_hash"] = std::to_string(data.content_hash());
    summary["extractor-id"] = fx.id;
    summary["completed_runs"] = ok;
    summary["failed_runs"] = a.runs - ok;
    summary["fid_mean"] = mean;
    summary["fid_stddev"] = stddev;
    if (best) {
        summary["best_lambda"] = best->lambda;
        summary["best_fid"] = best->fid;
        summary["best_run"] = best->index;
    }
    write_json(summary, (fs::path(a.out_dir) / "sweep.json").string());
    std::cout << "sweep complete: " << ok << "/" << a.runs << " runs, FID mean "
              << mean << " (stddev " << stddev << ")";
    if (best) std::cout << ", best lambda " << best->lambda;
    std::cout << "\n";
    return 0;
}

// ------------------------------------------------------------- tsurface ----

int run_tsurface(double smin, double smax, int steps, const std::string& out_path) {
    if (!(smin > 0.0) || smax > 2.0 || smin >= smax)
        throw ConfigError("tsurface: bounds must satisfy 0 < min < max <= 2");
    if (steps < 2) throw ConfigError("tsurface: need at least 2 grid steps");
    const auto resolved = echo_config({{"command", "tsurface"},
                                       {"sigma_min", format_double(smin)},
                                       {"sigma_max", format_double(smax)},
                                       {"steps", std::to_string(steps)}});
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + out_path);
    out << "# wvae-tsurface v1\n";
    out << "# config_hash = " << config_hash(resolved) << "\n";
    out << "sigma1,sigma2,t\n";
    for (int i = 0; i < steps; ++i)
        for (int j = 0; j < steps; ++j) {
            const double s1 = smin + (smax - smin) * i / (steps - 1);
            const double s2 = smin + (smax - smin) * j / (steps - 1);
            DiagGaussian q;
            q.mu = Eigen::VectorXd::Zero(2);
            q.sigma = Eigen::Vector2d(s1, s2);
            out << format_double(s1) << ',' << format_double(s2) << ','
                << format_double(t_gap(q)) << "\n";
        }
    std::cout << "wrote " << steps * steps << " grid rows to " << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------- augment-eval ----

struct AugmentArgs {
    DataOptions data;
    std::vector<long> sizes = {10000, 20000, 60000};
    int gen_n = 10000;
    int test_n = 3000;
    TrainConfig vae_cfg;
    int clf_epochs = 3;
    int clf_batch = 100;
    double clf_lr = 1e-3;
    std::string out_dir = "out/augment";
};

// Per-class VAEs give generated images their class label: one VAE per digit,
// trained on that digit's originals, sampled gen_n/10 times each.
std::pair<ImageSet, std::vector<int>> generate_labeled(const ImageSet& originals,
                                                       LossVariant variant,
                                                       const TrainConfig& base_cfg, int total_n,
                                                       SourceTag tag) {
    ImageSet out;
    out.images.resize(total_n, kImageDim);
    std::vector<int> labels(total_n);
    out.tags.assign(total_n, tag);
    Eigen::Index row = 0;
    for (int digit = 0; digit < 10; ++digit) {
        const ImageSet subset = filter_by_label(originals, digit);
        if (subset.size() < 1)
            throw DomainError("augment-eval: no examples of digit " + std::to_string(digit));
        TrainConfig cfg = base_cfg;
        cfg.seed = derive_seed(base_cfg.seed, "class-" + std::to_string(digit));
        RunLog log;
        const VaeParams params = train(variant, subset, cfg, log);
        const int n_this = total_n / 10 + (digit < total_n % 10 ? 1 : 0);
        const Matrix samples = generate(params, n_this, cfg.seed);
        for (int i = 0; i < n_this; ++i, ++row) {
            out.images.row(row) = samples.row(i);
            labels[row] = digit;
        }
    }
    out.labels = labels;
    return {out, labels};
}

int run_augment_eval(const AugmentArgs& a) {
    const ImageSet originals = load_train_set(a.data);
    const ImageSet test = load_test_set(a.data, a.test_n);
    fs::create_directories(a.out_dir);

    for (long size : a.sizes)
        if (size > originals.size())
            throw ConfigError("augment-eval: size " + std::to_string(size) +
                              " exceeds dataset (" + std::to_string(originals.size()) + ")");

    auto [gen_w, gen_w_labels] = generate_labeled(originals, LossVariant::elbo_w, a.vae_cfg,
                                                  a.gen_n, SourceTag::generated_w);
    auto [gen_kl, gen_kl_labels] = generate_labeled(originals, LossVariant::elbo_kl, a.vae_cfg,
                                                    a.gen_n, SourceTag::generated_kl);

    ClassifierConfig ccfg;
    ccfg.epochs = a.clf_epochs;
    ccfg.batch = a.clf_batch;
    ccfg.lr = a.clf_lr;
    ccfg.seed = derive_seed(a.vae_cfg.seed, "augment-clf");

    std::vector<Eigen::Index> sizes(a.sizes.begin(), a.sizes.end());
    const AugmentationResult result = augmentation_experiment(
        sizes, originals, gen_w, gen_w_labels, gen_kl, gen_kl_labels, test, ccfg);

    const auto resolved = echo_config(
        {{"command", "augment-eval"},
         {"gen_n", std::to_string(a.gen_n)},
         {"test_n", std::to_string(a.test_n)},
         {"vae_epochs", std::to_string(a.vae_cfg.epochs)},
         {"vae_seed", std::to_string(a.vae_cfg.seed)},
         {"clf_epochs", std::to_string(a.clf_epochs)},
         {"clf_seed", std::to_string(ccfg.seed)},
         {"dataset_n", std::to_string(originals.size())}});

    std::ofstream csv(fs::path(a.out_dir) / "augment.csv", std::ios::binary);
    csv << "# wvae-augment v1\n";
    csv << "# config_hash = " << config_hash(resolved) << "\n";
    csv << "# dataset_hash = " << originals.content_hash() << "\n";
    csv << "original_size,baseline,kl_augmented,w_augmented\n";
    json table = json::array();
    for (const auto size : sizes) {
        const double base = result.cell(size, "baseline");
        const double kl = result.cell(size, "+KL");
        const double w = result.cell(size, "+W");
        csv << size << ',' << format_double(base) << ',' << format_double(kl) << ','
            << format_double(w) << "\n";
        table.push_back({{"original_size", size},
                         {"baseline", base},
                         {"kl_augmented", kl},
                         {"w_augmented", w}});
        std::cout << "size " << size << ": baseline " << base << ", +KL " << kl << ", +W " << w
                  << "\n";
    }
    json summary;
    summary["schema"] = "wvae-augment v1";
    summary["config"] = config_json(resolved);
    summary["config_hash"] = std::to_string(config_hash(resolved));
    summary["dataset_hash"] = std::to_string(originals.content_hash());
    summary["table"] = table;
    write_json(summary, (fs::path(a.out_dir) / "augment.json").string());
    return 0;
}

// ---------------------------------------------------------------- trace ----

int run_trace(const std::string& runlog_path, const std::string& out_path) {
    const RunLog log = read_runlog_csv(runlog_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + out_path);
    out << "# wvae-trace v1\n";
    out << "iteration,t,t_hat,beta,lambda\n";
    for (const auto& r : log.rows)
        out << r.iteration << ',' << format_double(r.t) << ',' << format_double(r.t_hat) << ','
            << format_double(r.beta) << ',' << format_double(r.lambda) << "\n";
    std::cout << "wrote " << log.rows.size() << " schedule rows to " << out_path << "\n";
    return 0;
}

// ------------------------------------------------------------- make-data ----

int run_make_data(const std::string& out_dir, long train_n, long test_n, uint64_t seed) {
    fs::create_directories(out_dir);
    const ImageSet train_set = synth::make_set(train_n, derive_seed(seed, "train"));
    const ImageSet test_set = synth::make_set(test_n, derive_seed(seed, "test"));
    write_idx_images(train_set, (fs::path(out_dir) / "train-images-idx3-ubyte").string());
    write_idx_labels(train_set.labels, (fs::path(out_dir) / "train-labels-idx1-ubyte").string());
    write_idx_images(test_set, (fs::path(out_dir) / "t10k-images-idx3-ubyte").string());
    write_idx_labels(test_set.labels, (fs::path(out_dir) / "t10k-labels-idx1-ubyte").string());
    std::cout << "wrote " << train_n << " train + " << test_n << " test images to " << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein-objective VAE toolkit"};
    app.require_subcommand(1);

    // train
    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a VAE and write params/runlog/summary");
    add_data_options(train_cmd, ta.data);
    train_cmd->add_option("--variant", ta.variant,
                          "Loss variant: ELBO_KL | ELBO_W | ELBO_W_LAMBDA | ELBO_W_REG")
        ->capture_default_str();
    train_cmd->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
    train_cmd->add_option("--batch", ta.cfg.batch)->capture_default_str();
    train_cmd->add_option("--lr", ta.cfg.lr)->capture_default_str();
    train_cmd->add_option("--seed", ta.cfg.seed)->capture_default_str();
    train_cmd->add_option("--h1", ta.cfg.h1)->capture_default_str();
    train_cmd->add_option("--h2", ta.cfg.h2)->capture_default_str();
    train_cmd->add_option("--latent", ta.cfg.m, "Latent dimension m")->capture_default_str();
    train_cmd->add_option("--lambda0", ta.cfg.lambda0, "Initial/fixed lambda")
        ->capture_default_str();
    train_cmd->add_option("--c", ta.cfg.c, "Scheduler step constant")->capture_default_str();
    train_cmd->add_option("--rho", ta.cfg.rho, "T^2 regularization weight")
        ->capture_default_str();
    train_cmd->add_flag("--scheduler", ta.cfg.scheduler_on,
                        "Enable the dynamic lambda schedule (ELBO_W_LAMBDA only)");
    train_cmd->add_option("--out", ta.out_dir, "Output directory")->capture_default_str();
    std::string train_config_file;
    train_cmd->add_option("--config", train_config_file,
                          "Flat key = value config file; flags override");

    // generate
    std::string gen_params, gen_out = "out/generate";
    int gen_n = 10000;
    uint64_t gen_seed = 1;
    auto* gen_cmd = app.add_subcommand("generate", "Sample images from trained params");
    gen_cmd->add_option("--params", gen_params, "Trained VAE params file")->required();
    gen_cmd->add_option("--n", gen_n)->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed)->capture_default_str();
    gen_cmd->add_option("--out", gen_out)->capture_default_str();

    // fid
    std::string fid_real, fid_gen, fid_features, fid_out;
    long fid_take = 0;
    auto* fid_cmd = app.add_subcommand("fid", "Frechet distance between two image sets");
    fid_cmd->add_option("--real", fid_real, "Real images IDX file")->required();
    fid_cmd->add_option("--gen", fid_gen, "Generated images IDX file")->required();
    fid_cmd->add_option("--features", fid_features,
                        "Classifier params for the feature extractor (default: raw pixels)");
    fid_cmd->add_option("--take", fid_take, "Limit both sets to the first N images");
    fid_cmd->add_option("--out", fid_out, "Also write the JSON record here");

    // sweep
    SweepArgs sa;
    auto* sweep_cmd = app.add_subcommand("sweep", "Random-search lambda in [0,20] over n runs");
    add_data_options(sweep_cmd, sa.data);
    sweep_cmd->add_option("--runs", sa.runs)->capture_default_str();
    sweep_cmd->add_option("--jobs", sa.jobs, "Parallel training runs")->capture_default_str();
    sweep_cmd->add_option("--epochs", sa.cfg.epochs)->capture_default_str();
    sweep_cmd->add_option("--batch", sa.cfg.batch)->capture_default_str();
    sweep_cmd->add_option("--lr", sa.cfg.lr)->capture_default_str();
    sweep_cmd->add_option("--seed", sa.cfg.seed)->capture_default_str();
    sweep_cmd->add_option("--h1", sa.cfg.h1)->capture_default_str();
    sweep_cmd->add_option("--h2", sa.cfg.h2)->capture_default_str();
    sweep_cmd->add_option("--latent", sa.cfg.m)->capture_default_str();
    sweep_cmd->add_option("--fid-n", sa.fid_n, "Samples per side for the per-run FID")
        ->capture_default_str();
    sweep_cmd->add_option("--clf-epochs", sa.clf_epochs)->capture_default_str();
    sweep_cmd->add_option("--out", sa.out_dir)->capture_default_str();
    std::string sweep_config_file;
    sweep_cmd->add_option("--config", sweep_config_file,
                          "Flat key = value config file; flags override");

    // tsurface
    double ts_min = 0.05, ts_max = 2.0;
    int ts_steps = 40;
    std::string ts_out = "tsurface.csv";
    auto* ts_cmd = app.add_subcommand("tsurface", "Export the 2-D T(sigma1, sigma2) grid");
    ts_cmd->add_option("--min", ts_min)->capture_default_str();
    ts_cmd->add_option("--max", ts_max)->capture_default_str();
    ts_cmd->add_option("--steps", ts_steps, "Grid steps per axis")->capture_default_str();
    ts_cmd->add_option("--out", ts_out)->capture_default_str();

    // augment-eval
    AugmentArgs aa;
    auto* aug_cmd = app.add_subcommand(
        "augment-eval", "Per-class VAEs -> generate -> merge -> classifier accuracy table");
    add_data_options(aug_cmd, aa.data, true);
    aug_cmd->add_option("--sizes", aa.sizes, "Original-data sizes (baseline rows)")
        ->delimiter(',')
        ->capture_default_str();
    aug_cmd->add_option("--gen-n", aa.gen_n, "Generated images per condition")
        ->capture_default_str();
    aug_cmd->add_option("--test-n", aa.test_n)->capture_default_str();
    aug_cmd->add_option("--vae-epochs", aa.vae_cfg.epochs)->capture_default_str();
    aug_cmd->add_option("--vae-h1", aa.vae_cfg.h1)->capture_default_str();
    aug_cmd->add_option("--vae-h2", aa.vae_cfg.h2)->capture_default_str();
    aug_cmd->add_option("--vae-latent", aa.vae_cfg.m)->capture_default_str();
    aug_cmd->add_option("--seed", aa.vae_cfg.seed)->capture_default_str();
    aug_cmd->add_option("--clf-epochs", aa.clf_epochs)->capture_default_str();
    aug_cmd->add_option("--clf-batch", aa.clf_batch)->capture_default_str();
    aug_cmd->add_option("--clf-lr", aa.clf_lr)->capture_default_str();
    aug_cmd->add_option("--out", aa.out_dir)->capture_default_str();
    std::string aug_config_file;
    aug_cmd->add_option("--config", aug_config_file,
                        "Flat key = value config file; flags override");

    // trace
    std::string trace_in, trace_out = "trace.csv";
    auto* trace_cmd = app.add_subcommand("trace", "Extract the schedule columns from a run log");
    trace_cmd->add_option("--runlog", trace_in, "runlog.csv from a training run")->required();
    trace_cmd->add_option("--out", trace_out)->capture_default_str();

    // make-data
    std::string md_out = "data";
    long md_train = 60000, md_test = 10000;
    uint64_t md_seed = 20260809;
    auto* md_cmd = app.add_subcommand(
        "make-data", "Write a seeded synthetic digit corpus in MNIST IDX layout");
    md_cmd->add_option("--out", md_out)->capture_default_str();
    md_cmd->add_option("--train", md_train)->capture_default_str();
    md_cmd->add_option("--test", md_test)->capture_default_str();
    md_cmd->add_option("--seed", md_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) {
            if (!train_config_file.empty()) apply_config_file(train_cmd, train_config_file);
            return run_train(ta);
        }
        if (gen_cmd->parsed()) return run_generate(gen_params, gen_n, gen_seed, gen_out);
        if (fid_cmd->parsed()) return run_fid(fid_real, fid_gen, fid_features, fid_take, fid_out);
        if (sweep_cmd->parsed()) {
            if (!sweep_config_file.empty()) apply_config_file(sweep_cmd, sweep_config_file);
            return run_sweep(sa);
        }
        if (ts_cmd->parsed()) return run_tsurface(ts_min, ts_max, ts_steps, ts_out);
        if (aug_cmd->parsed()) {
            if (!aug_config_file.empty()) apply_config_file(aug_cmd, aug_config_file);
            return run_augment_eval(aa);
        }
        if (trace_cmd->parsed()) return run_trace(trace_in, trace_out);
        if (md_cmd->parsed()) return run_make_data(md_out, md_train, md_test, md_seed);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const DomainError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
