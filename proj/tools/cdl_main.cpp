// Command-line front end: train, denoise, eval, estimate, dump-filters, plus
// a synthetic-corpus generator. All sigma values on the command line and in
// config files use the 8-bit scale (25 means 25/255).

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "cdl/checkpoint.hpp"
#include "cdl/image_io.hpp"
#include "cdl/pipeline.hpp"
#include "cdl/synthetic.hpp"
#include "cdl/train.hpp"

namespace fs = std::filesystem;
using Scalar = double;

namespace {

std::vector<std::pair<std::string, cdl::Image<Scalar>>> load_dataset(const std::string& dir) {
    std::vector<std::string> paths;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            paths.push_back(entry.path().string());
    if (ec) throw cdl::data_error(dir + ": " + ec.message());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw cdl::data_error(dir + ": no .pgm images found");
    std::vector<std::pair<std::string, cdl::Image<Scalar>>> out;
    for (const auto& p : paths)
        out.emplace_back(fs::path(p).filename().string(), cdl::load_image<Scalar>(p));
    return out;
}

// Flat `key = value` text, '#' comments. Keys mirror the config struct fields.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cdl::data_error(path + ": cannot open config");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw cdl::data_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = strip(line.substr(0, eq)), val = strip(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw cdl::data_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        if (!kv.emplace(key, val).second)
            throw cdl::data_error(path + ":" + std::to_string(lineno) + ": duplicate key " + key);
    }
    return kv;
}

struct TrainSetup {
    cdl::ModelConfig model;
    cdl::TrainConfig<Scalar> train;
    std::string data_dir;
    int val_count = 0;  // 0: one tenth, at least one image
};

TrainSetup apply_config(const std::map<std::string, std::string>& kv, const std::string& path) {
    TrainSetup s;
    for (const auto& [key, val] : kv) {
        const auto bad = [&](const char* why) {
            return cdl::data_error(path + ": key " + key + ": " + why);
        };
        const auto as_int = [&] {
            try {
                size_t pos = 0;
                const int v = std::stoi(val, &pos);
                if (pos != val.size()) throw std::invalid_argument("");
                return v;
            } catch (...) {
                throw bad("expected an integer");
            }
        };
        const auto as_real = [&] {
            try {
                size_t pos = 0;
                const double v = std::stod(val, &pos);
                if (pos != val.size()) throw std::invalid_argument("");
                return v;
            } catch (...) {
                throw bad("expected a number");
            }
        };
        const auto as_bool = [&] {
            if (val == "true" || val == "1") return true;
            if (val == "false" || val == "0") return false;
            throw bad("expected true or false");
        };
        if (key == "num_filters") s.model.num_filters = as_int();
        else if (key == "filter_size") s.model.filter_size = as_int();
        else if (key == "stride") s.model.stride = as_int();
        else if (key == "num_layers") s.model.num_layers = as_int();
        else if (key == "adaptive") s.model.adaptive = as_bool();
        else if (key == "batch_size") s.train.batch_size = as_int();
        else if (key == "crop_size") s.train.crop_size = as_int();
        else if (key == "lr") s.train.lr = Scalar(as_real());
        else if (key == "lr_decay") s.train.lr_decay = Scalar(as_real());
        else if (key == "lr_decay_every") s.train.lr_decay_every = as_int();
        else if (key == "max_epochs") s.train.max_epochs = as_int();
        else if (key == "sigma_lo") s.train.sigma_lo = Scalar(as_real() / 255.0);
        else if (key == "sigma_hi") s.train.sigma_hi = Scalar(as_real() / 255.0);
        else if (key == "backtrack_factor") s.train.backtrack_factor = Scalar(as_real());
        else if (key == "max_backtracks") s.train.max_backtracks = as_int();
        else if (key == "checkpoint_every") s.train.checkpoint_every = as_int();
        else if (key == "checkpoint_dir") s.train.checkpoint_dir = val;
        else if (key == "seed") s.train.seed = uint64_t(std::stoull(val));
        else if (key == "convergence_tol") s.train.convergence_tol = Scalar(as_real());
        else if (key == "convergence_window") s.train.convergence_window = as_int();
        else if (key == "divergence_factor") s.train.divergence_factor = Scalar(as_real());
        else if (key == "divergence_history") s.train.divergence_history = as_int();
        else if (key == "data_dir") s.data_dir = val;
        else if (key == "val_count") s.val_count = as_int();
        else throw bad("unknown key");
    }
    return s;
}

int cmd_train(const std::string& config_path, const std::string& resume_path,
              const std::string& data_override, const std::string& out_override,
              int epochs_override, int64_t seed_override) {
    TrainSetup s = apply_config(parse_config_file(config_path), config_path);
    if (!data_override.empty()) s.data_dir = data_override;
    if (!out_override.empty()) s.train.checkpoint_dir = out_override;
    if (epochs_override > 0) s.train.max_epochs = epochs_override;
    if (seed_override >= 0) s.train.seed = uint64_t(seed_override);
    if (s.data_dir.empty()) throw cdl::contract_error("train: no data_dir (config or --data)");
    if (s.train.checkpoint_dir.empty())
        throw cdl::contract_error("train: no checkpoint_dir (config or --out)");
    fs::create_directories(s.train.checkpoint_dir);

    auto named = load_dataset(s.data_dir);
    std::vector<cdl::Image<Scalar>> images;
    for (auto& [name, img] : named) images.push_back(std::move(img));
    int val_n = s.val_count > 0 ? s.val_count : std::max<int>(1, int(images.size()) / 10);
    if (val_n >= int(images.size()))
        throw cdl::contract_error("train: val_count leaves no training images");
    std::vector<cdl::Image<Scalar>> val_set(images.end() - val_n, images.end());
    images.resize(images.size() - size_t(val_n));

    cdl::TrainingSnapshot<Scalar> snap;
    const bool resuming = !resume_path.empty();
    if (resuming) snap = cdl::load_checkpoint<Scalar>(resume_path);

    std::cout << "training " << (s.model.adaptive ? "adaptive" : "fixed-threshold") << " model: "
              << s.model.num_filters << " filters, " << s.model.num_layers << " layers, stride "
              << s.model.stride << "; " << images.size() << " train / " << val_set.size()
              << " val images\n";
    cdl::TrainHooks<Scalar> hooks;
    hooks.on_epoch_end = [](int epoch, Scalar tl, Scalar vl, Scalar lr) {
        std::cout << "epoch " << std::setw(4) << epoch << "  train " << std::scientific
                  << std::setprecision(4) << tl << "  val " << vl << "  lr " << lr
                  << std::defaultfloat << '\n';
    };

    const auto res = cdl::train(s.model, s.train, images, val_set, hooks,
                                resuming ? &snap : nullptr);
    std::cout << "done: " << res.epochs << " epochs, best val loss " << res.best_val_loss
              << (res.converged_early ? " (converged)" : "") << ", checkpoints in "
              << s.train.checkpoint_dir << '\n';
    return 0;
}

cdl::SigmaMode parse_sigma_flag(const std::string& flag, Scalar& numeric) {
    if (flag.empty()) return cdl::SigmaMode::none;
    if (flag == "auto-pca") return cdl::SigmaMode::auto_pca;
    if (flag == "auto-mad") return cdl::SigmaMode::auto_mad;
    try {
        size_t pos = 0;
        const double v = std::stod(flag, &pos);
        if (pos != flag.size() || v < 0) throw std::invalid_argument("");
        numeric = Scalar(v / 255.0);
        return cdl::SigmaMode::numeric;
    } catch (...) {
        throw cdl::contract_error("--sigma must be auto-pca, auto-mad, or a nonnegative number");
    }
}

int cmd_denoise(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
                const std::string& sigma_flag) {
    const auto [cfg, params] = cdl::load_model<Scalar>(ckpt);
    const auto y = cdl::load_image<Scalar>(in_path);
    Scalar numeric = 0;
    const cdl::SigmaMode mode = parse_sigma_flag(sigma_flag, numeric);

    const auto t0 = std::chrono::steady_clock::now();
    const auto res = cdl::denoise_image(params, cfg, y, mode, numeric);
    const auto t1 = std::chrono::steady_clock::now();
    cdl::save_image(out_path, res.out);

    std::cout << std::fixed << std::setprecision(2);
    if (mode == cdl::SigmaMode::none)
        std::cout << "sigma: none (fixed thresholds)";
    else
        std::cout << "sigma used: " << res.sigma_used * 255.0
                  << (res.pca_fallback ? " (pca fell back to mad)" : "");
    std::cout << "  |  " << std::chrono::duration<double, std::milli>(t1 - t0).count() << " ms  |  "
              << out_path << '\n';
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, std::vector<double> sigmas,
             uint64_t seed, const std::string& report_path, const std::string& estimator) {
    const auto [cfg, params] = cdl::load_model<Scalar>(ckpt);
    const auto dataset = load_dataset(data_dir);
    cdl::EvalEstimator est;
    if (estimator == "gt") est = cdl::EvalEstimator::ground_truth;
    else if (estimator == "mad") est = cdl::EvalEstimator::mad;
    else if (estimator == "pca") est = cdl::EvalEstimator::pca;
    else throw cdl::contract_error("--estimator must be gt, mad, or pca");

    const auto records = cdl::run_eval(params, cfg, dataset, sigmas, est, seed);
    const std::string model_id = fs::path(ckpt).stem().string();
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        if (!out) throw cdl::data_error(report_path + ": cannot open for writing");
        out << cdl::format_report(records, model_id, est);
    }

    std::cout << "model " << model_id << ", estimator " << estimator << ", " << dataset.size()
              << " images, seed " << seed << "\n";
    std::cout << "sigma   noisy-psnr   denoised-psnr   ms/image\n" << std::fixed;
    for (const double s8 : sigmas) {
        double noisy = 0, ms = 0;
        int n = 0;
        for (const auto& r : records)
            if (r.sigma == s8) {
                noisy += r.psnr_noisy;
                ms += r.elapsed_ms;
                ++n;
            }
        std::cout << std::setprecision(1) << std::setw(5) << s8 << std::setprecision(2)
                  << std::setw(13) << noisy / n << std::setw(16) << cdl::mean_psnr(records, s8)
                  << std::setprecision(1) << std::setw(11) << ms / n << '\n';
    }
    if (!report_path.empty()) std::cout << "report written to " << report_path << '\n';
    return 0;
}

int cmd_estimate(const std::string& in_path, const std::string& method) {
    const auto img = cdl::load_image<Scalar>(in_path);
    double sigma = 0;
    bool fallback = false;
    if (method == "mad") sigma = cdl::estimate_mad(img);
    else if (method == "pca") sigma = cdl::estimate_pca(img, &fallback);
    else throw cdl::contract_error("--method must be mad or pca");
    std::cout << std::fixed << std::setprecision(3) << "sigma (8-bit scale): " << sigma * 255.0
              << (fallback ? " (pca fell back to mad)" : "") << '\n';
    return 0;
}

int cmd_dump_filters(const std::string& ckpt, const std::string& out_path) {
    const auto [cfg, params] = cdl::load_model<Scalar>(ckpt);
    cdl::save_image(out_path, cdl::render_filter_grid(params.D));
    std::cout << "wrote dictionary grid (" << cfg.num_filters << " filters) to " << out_path
              << '\n';
    return 0;
}

int cmd_datagen(const std::string& out_dir, int count, int size, uint64_t seed,
                const std::string& kind) {
    if (count < 1 || size < 16) throw cdl::contract_error("datagen: need count >= 1, size >= 16");
    fs::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
        cdl::Image<Scalar> img;
        const uint64_t s = cdl::mix_seed(seed, 0x646174ull, uint64_t(i));
        if (kind == "scenes") img = cdl::synth_scene<Scalar>(size, size, s);
        else if (kind == "smooth") img = cdl::synth_smooth_scene<Scalar>(size, size, s);
        else if (kind == "textured") img = cdl::synth_textured_scene<Scalar>(size, size, s);
        else throw cdl::contract_error("datagen: --kind must be scenes, smooth, or textured");
        std::ostringstream name;
        name << "img_" << std::setw(3) << std::setfill('0') << i << ".pgm";
        cdl::save_image((fs::path(out_dir) / name.str()).string(), img);
    }
    std::cout << "wrote " << count << " " << size << "x" << size << " images to " << out_dir
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"convolutional dictionary learning denoiser"};
    app.require_subcommand(1);

    auto* tr = app.add_subcommand("train", "train a model from a config file");
    std::string tr_config, tr_resume, tr_data, tr_out;
    int tr_epochs = 0;
    int64_t tr_seed = -1;
    tr->add_option("--config", tr_config, "key = value config file")->required();
    tr->add_option("--resume", tr_resume, "checkpoint to continue from");
    tr->add_option("--data", tr_data, "override data_dir");
    tr->add_option("--out", tr_out, "override checkpoint_dir");
    tr->add_option("--epochs", tr_epochs, "override max_epochs");
    tr->add_option("--seed", tr_seed, "override seed");

    auto* dn = app.add_subcommand("denoise", "denoise one image");
    std::string dn_ckpt, dn_in, dn_out, dn_sigma;
    dn->add_option("--ckpt", dn_ckpt)->required();
    dn->add_option("--in", dn_in)->required();
    dn->add_option("--out", dn_out)->required();
    dn->add_option("--sigma", dn_sigma, "auto-pca | auto-mad | number (8-bit scale)");

    auto* ev = app.add_subcommand("eval", "benchmark a checkpoint on a directory");
    std::string ev_ckpt, ev_data, ev_report, ev_est = "gt";
    std::vector<double> ev_sigmas;
    uint64_t ev_seed = 0;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--sigmas", ev_sigmas, "test noise levels, 8-bit scale")
        ->required()
        ->delimiter(',');
    ev->add_option("--seed", ev_seed, "noise seed");
    ev->add_option("--report", ev_report, "write the per-image csv here");
    ev->add_option("--estimator", ev_est, "gt | mad | pca")
        ->check(CLI::IsMember({"gt", "mad", "pca"}));

    auto* es = app.add_subcommand("estimate", "blind noise-level estimate");
    std::string es_in, es_method = "pca";
    es->add_option("--in", es_in)->required();
    es->add_option("--method", es_method, "mad | pca")->check(CLI::IsMember({"mad", "pca"}));

    auto* df = app.add_subcommand("dump-filters", "render the dictionary as an image grid");
    std::string df_ckpt, df_out;
    df->add_option("--ckpt", df_ckpt)->required();
    df->add_option("--out", df_out)->required();

    auto* dg = app.add_subcommand("datagen", "generate a synthetic grayscale corpus");
    std::string dg_out, dg_kind = "scenes";
    int dg_count = 40, dg_size = 128;
    uint64_t dg_seed = 0;
    dg->add_option("--out", dg_out)->required();
    dg->add_option("--count", dg_count);
    dg->add_option("--size", dg_size);
    dg->add_option("--seed", dg_seed);
    dg->add_option("--kind", dg_kind, "scenes | smooth | textured")
        ->check(CLI::IsMember({"scenes", "smooth", "textured"}));

    if (argc == 1) {
        std::cout << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (tr->parsed()) return cmd_train(tr_config, tr_resume, tr_data, tr_out, tr_epochs, tr_seed);
        if (dn->parsed()) return cmd_denoise(dn_ckpt, dn_in, dn_out, dn_sigma);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_sigmas, ev_seed, ev_report, ev_est);
        if (es->parsed()) return cmd_estimate(es_in, es_method);
        if (df->parsed()) return cmd_dump_filters(df_ckpt, df_out);
        if (dg->parsed()) return cmd_datagen(dg_out, dg_count, dg_size, dg_seed, dg_kind);
    } catch (const cdl::contract_error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const cdl::numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const cdl::data_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
