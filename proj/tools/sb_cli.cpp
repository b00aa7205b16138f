// Command-line front end for the two-stage bridge sampler: training,
// sampling (with stage ablations), evaluation, velocity fields, KDE
// heatmaps, inpainting and interpolation.

#include "sb/schrodinger_bridge.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

constexpr int kDatasetSize = 50000;
constexpr uint64_t kDataTag = 0xda7a;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

sb::ExperimentConfig load_experiment(const GlobalOpts& g) {
    sb::ExperimentConfig cfg;
    if (!g.config_path.empty()) cfg = sb::load_config_file(g.config_path);
    if (g.seed_set) {
        cfg.seed = g.seed;
        cfg.score.train.seed = g.seed;
        cfg.ratio.train.seed = g.seed;
        cfg.bridge.seed = g.seed;
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    cfg.bridge.sigma = cfg.sigma;
    cfg.bridge.tau = cfg.tau;
    fs::create_directories(cfg.out_dir);
    return cfg;
}

/// Training data shared by both estimators: a fixed draw from the target,
/// centered on its estimated mean.
sb::CenteredData training_data(const sb::ExperimentConfig& cfg) {
    sb::Rng rng = sb::Rng(cfg.seed).stream(kDataTag);
    sb::GaussianMixture target = cfg.target();
    return sb::center_data(sb::gmm_sample(target, kDatasetSize, rng));
}

void save_mean(const std::string& path, const std::vector<double>& mean) {
    std::ofstream os(path);
    os.precision(17);
    for (double v : mean) os << v << "\n";
}

std::vector<double> load_mean(const std::string& path) {
    std::ifstream is(path);
    std::vector<double> mean;
    double v;
    while (is >> v) mean.push_back(v);
    return mean;
}

void save_loss_trace(const std::string& path, const sb::LossTrace& trace) {
    std::ofstream os(path);
    os << "iteration,loss\n";
    os.precision(17);
    for (std::size_t i = 0; i < trace.loss.size(); ++i) os << i << "," << trace.loss[i] << "\n";
}

std::vector<double> parse_vector(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

sb::Matrix load_samples_any(const std::string& path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".sbpt")
        return sb::load_samples_binary_file(path);
    return sb::load_samples_csv_file(path);
}

int cmd_train_score(const GlobalOpts& g) {
    auto cfg = load_experiment(g);
    auto data = training_data(cfg);
    auto [model, trace] =
        sb::train_score(data.data, cfg.sigma, cfg.score.train, cfg.score.hidden, cfg.score.embed_dim);
    save_loss_trace(cfg.out_dir + "/score_loss.csv", trace);
    sb::save_score_model(cfg.out_dir + "/score.sbnn", model);
    save_mean(cfg.out_dir + "/mean.txt", data.mean);
    std::cout << "score checkpoint: " << cfg.out_dir << "/score.sbnn (final loss "
              << (trace.loss.empty() ? 0.0 : trace.loss.back()) << ")\n";
    return 0;
}

int cmd_train_ratio(const GlobalOpts& g) {
    auto cfg = load_experiment(g);
    auto data = training_data(cfg);
    auto [model, trace] =
        sb::train_ratio(data.data, cfg.sigma, cfg.tau, cfg.ratio.train, cfg.ratio.hidden);
    save_loss_trace(cfg.out_dir + "/ratio_loss.csv", trace);
    sb::save_ratio_model(cfg.out_dir + "/ratio.sbnn", model);
    save_mean(cfg.out_dir + "/mean.txt", data.mean);
    std::cout << "ratio checkpoint: " << cfg.out_dir << "/ratio.sbnn (final loss "
              << (trace.loss.empty() ? 0.0 : trace.loss.back()) << ")\n";
    return 0;
}

struct SampleOpts {
    int n = 5000;
    bool stage1_only = false;
    bool skip_stage1 = false;
    bool exact_drifts = false;
    int dump_trajectory = 0;  // every k-th step when > 0
};

int cmd_sample(const GlobalOpts& g, const SampleOpts& opt) {
    auto cfg = load_experiment(g);
    sb::GaussianMixture target = cfg.target();
    const int dim = target.d;

    sb::ScoreModel score;
    sb::RatioModel ratio;
    sb::DriftSource drifts;
    if (opt.exact_drifts) {
        drifts = sb::DriftSource::exact(target);
    } else {
        score = sb::load_score_model(cfg.out_dir + "/score.sbnn");
        if (std::abs(score.sigma_max - cfg.sigma) > 1e-9)
            throw std::runtime_error("sample: score checkpoint sigma does not match config");
        if (!opt.skip_stage1 || opt.stage1_only) {
            ratio = sb::load_ratio_model(cfg.out_dir + "/ratio.sbnn");
            if (std::abs(ratio.sigma - cfg.sigma) > 1e-9 || std::abs(ratio.tau - cfg.tau) > 1e-9)
                throw std::runtime_error("sample: ratio checkpoint sigma/tau does not match config");
            drifts = sb::DriftSource::learned(score, ratio);
        } else {
            drifts = sb::DriftSource::learned_stage2_only(score);
        }
    }

    std::ofstream traj;
    sb::StepObserver observer;
    if (opt.dump_trajectory > 0) {
        traj.open(cfg.out_dir + "/trajectory.csv");
        traj << "stage,step,particle";
        for (int j = 0; j < dim; ++j) traj << ",x" << j;
        traj << "\n";
        traj.precision(10);
        int every = opt.dump_trajectory;
        observer = [&traj, every](sb::Stage stage, int step, const sb::Matrix& x) {
            if (step % every != 0) return;
            for (int p = 0; p < x.rows; ++p) {
                traj << (stage == sb::Stage::one ? 1 : 2) << "," << step << "," << p;
                for (int j = 0; j < x.cols; ++j) traj << "," << x.at(p, j);
                traj << "\n";
            }
        };
    }

    sb::Rng base(cfg.bridge.seed);
    sb::Matrix out;
    if (opt.stage1_only) {
        out = sb::run_stage1(drifts, opt.n, dim, cfg.bridge, base, observer).positions;
    } else if (opt.skip_stage1) {
        auto start = sb::gaussian_start(opt.n, dim, cfg.bridge, base);
        out = sb::run_stage2(drifts, std::move(start), cfg.bridge, base, observer).positions;
    } else {
        out = sb::sample(drifts, opt.n, dim, cfg.bridge, base, observer);
    }

    if (!opt.exact_drifts) {
        auto mean = load_mean(cfg.out_dir + "/mean.txt");
        if (static_cast<int>(mean.size()) == dim) sb::uncenter_inplace(out, mean);
    }

    sb::save_samples_csv_file(cfg.out_dir + "/samples.csv", out);
    sb::save_samples_binary_file(cfg.out_dir + "/samples.sbpt", out);
    std::cout << "wrote " << out.rows << " samples to " << cfg.out_dir << "/samples.{csv,sbpt}\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& samples_path, double radius) {
    auto cfg = load_experiment(g);
    sb::GaussianMixture target = cfg.target();
    sb::Matrix samples = load_samples_any(samples_path);

    sb::Rng rng = sb::Rng(cfg.seed).stream(0xe7a1);
    sb::Matrix ref = sb::gmm_sample(target, samples.rows, rng);
    sb::Matrix ref2 = sb::gmm_sample(target, samples.rows, rng);

    auto w2 = sb::wasserstein2_full(samples, ref);
    auto base = sb::wasserstein2_full(ref, ref2);
    double ed = sb::energy_distance(samples, ref);

    std::ostringstream report;
    report.precision(10);
    report << "n = " << samples.rows << "\n";
    report << "w2 = " << w2.value << "\n";
    report << "w2_mode = " << (w2.exact ? "exact" : "sliced") << "\n";
    report << "w2_self_baseline = " << base.value << "\n";
    report << "energy_distance = " << ed << "\n";
    if (target.num_components() > 1) {
        auto mc = sb::mode_coverage(samples, target, radius);
        report << "mode_radius = " << mc.radius << "\n";
        for (int c = 0; c < target.num_components(); ++c)
            report << "mode_fraction_" << c << " = " << mc.fractions[c] << "\n";
        report << "missed_modes = " << mc.missed.size() << "\n";
    }
    std::cout << report.str();
    std::ofstream os(cfg.out_dir + "/eval.txt");
    os << report.str();
    return 0;
}

int cmd_field(const GlobalOpts& g, int stage, double t, bool learned) {
    auto cfg = load_experiment(g);
    sb::GaussianMixture target = cfg.target();
    sb::GridSpec spec;
    std::function<std::vector<double>(double, const std::vector<double>&)> drift;
    if (!learned) {
        if (stage == 1) {
            drift = [&](double tt, const std::vector<double>& x) {
                return sb::drift_stage1_exact(target, cfg.sigma, cfg.tau, tt, x);
            };
        } else {
            drift = [&](double tt, const std::vector<double>& x) {
                return sb::drift_stage2_exact(target, cfg.sigma, tt, x);
            };
        }
    } else {
        auto score = std::make_shared<sb::ScoreModel>(sb::load_score_model(cfg.out_dir + "/score.sbnn"));
        if (stage == 1) {
            auto ratio = std::make_shared<sb::RatioModel>(sb::load_ratio_model(cfg.out_dir + "/ratio.sbnn"));
            auto cfg_b = cfg.bridge;
            cfg_b.n3 = 1000;  // large draw count for a smooth plotted field
            drift = [score, ratio, cfg_b, seed = cfg.seed](double tt, const std::vector<double>& x) {
                sb::DriftSource s = sb::DriftSource::learned(*score, *ratio);
                sb::Rng rng = sb::Rng(seed).stream(0xf1e1d);
                return sb::stage1_drift(s, x, tt, cfg_b, rng);
            };
        } else {
            drift = [score](double tt, const std::vector<double>& x) {
                double level = std::max(std::sqrt(1.0 - tt) * score->sigma_max, score->sigma_floor);
                return sb::score_estimate(*score, x, level);
            };
        }
    }
    auto grid = sb::drift_field(drift, t, spec);
    std::string name = cfg.out_dir + "/field_stage" + std::to_string(stage) +
                       (learned ? "_learned" : "_exact") + ".csv";
    std::ofstream os(name);
    sb::save_field_csv(os, grid);
    std::cout << "wrote " << name << "\n";
    return 0;
}

int cmd_kde(const GlobalOpts& g, const std::string& samples_path, int res, double bandwidth,
            double extent) {
    auto cfg = load_experiment(g);
    sb::Matrix samples = load_samples_any(samples_path);
    sb::GridSpec spec{-extent, extent, -extent, extent, res, res};
    auto grid = sb::kde2d(samples, spec, bandwidth);
    {
        std::ofstream os(cfg.out_dir + "/kde.csv");
        sb::save_kde_csv(os, grid);
    }
    {
        std::ofstream os(cfg.out_dir + "/kde.ppm", std::ios::binary);
        sb::save_kde_ppm(os, grid);
    }
    std::cout << "wrote " << cfg.out_dir << "/kde.csv and kde.ppm (bandwidth " << grid.bandwidth_x
              << ", " << grid.bandwidth_y << ")\n";
    return 0;
}

int cmd_inpaint(const GlobalOpts& g, const std::string& y_str, const std::string& mask_str) {
    auto cfg = load_experiment(g);
    auto score = sb::load_score_model(cfg.out_dir + "/score.sbnn");
    sb::InpaintTask task(parse_vector(y_str), parse_vector(mask_str), cfg.bridge);
    auto out = sb::inpaint(task, score, sb::Rng(cfg.bridge.seed).stream(0x17a1));
    std::cout.precision(10);
    for (std::size_t j = 0; j < out.size(); ++j) std::cout << (j ? "," : "") << out[j];
    std::cout << "\n";
    return 0;
}

int cmd_interpolate(const GlobalOpts& g, const std::string& a_str, const std::string& b_str,
                    double lambda, double sigma_interp) {
    auto cfg = load_experiment(g);
    auto score = sb::load_score_model(cfg.out_dir + "/score.sbnn");
    auto out = sb::interpolate(parse_vector(a_str), parse_vector(b_str), lambda, sigma_interp,
                               score, cfg.bridge, sb::Rng(cfg.bridge.seed).stream(0x1e89));
    std::cout.precision(10);
    for (std::size_t j = 0; j < out.size(); ++j) std::cout << (j ? "," : "") << out[j];
    std::cout << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage Schrodinger Bridge sampler"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config file");
    app.add_option("--out", g.out_dir, "output directory (overrides config)");
    auto* seed_opt = app.add_option("--seed", g.seed, "seed override");
    app.add_option("--threads", g.threads, "worker threads (env SB_THREADS)");

    auto* sc_train_score = app.add_subcommand("train-score", "train the score estimator");
    auto* sc_train_ratio = app.add_subcommand("train-ratio", "train the density-ratio estimator");

    SampleOpts sopt;
    auto* sc_sample = app.add_subcommand("sample", "run the two-stage sampler");
    sc_sample->add_option("-n,--n", sopt.n, "number of particles");
    sc_sample->add_flag("--stage1-only", sopt.stage1_only, "stop after stage 1");
    sc_sample->add_flag("--skip-stage1", sopt.skip_stage1, "start stage 2 from N(0, tau I)");
    sc_sample->add_flag("--exact-drifts", sopt.exact_drifts, "use the target's closed-form drifts");
    sc_sample->add_option("--dump-trajectory", sopt.dump_trajectory, "dump every k-th step");

    std::string samples_path;
    double radius = 1.0;
    auto* sc_eval = app.add_subcommand("eval", "evaluate samples against the target");
    sc_eval->add_option("--samples", samples_path, "samples file (.csv or .sbpt)")->required();
    sc_eval->add_option("--radius", radius, "mode-coverage radius");

    int field_stage = 2;
    double field_t = 1.0;
    bool field_learned = false;
    auto* sc_field = app.add_subcommand("field", "export a velocity field grid");
    sc_field->add_option("--stage", field_stage, "1 or 2")->check(CLI::IsMember({1, 2}));
    sc_field->add_option("--t", field_t, "time in [0,1]");
    sc_field->add_flag("--learned", field_learned, "use trained estimators");

    std::string kde_samples;
    int kde_res = 200;
    double kde_bw = 0.0, kde_extent = 8.0;
    auto* sc_kde = app.add_subcommand("kde", "kernel density heatmap from samples");
    sc_kde->add_option("--samples", kde_samples, "samples file")->required();
    sc_kde->add_option("--resolution", kde_res, "grid resolution per axis");
    sc_kde->add_option("--bandwidth", kde_bw, "kernel bandwidth (0 = Scott's rule)");
    sc_kde->add_option("--extent", kde_extent, "half-width of the square grid");

    std::string y_str, mask_str;
    auto* sc_inpaint = app.add_subcommand("inpaint", "complete masked coordinates with stage 2");
    sc_inpaint->add_option("--y", y_str, "observed vector, comma separated")->required();
    sc_inpaint->add_option("--mask", mask_str, "0/1 mask, comma separated")->required();

    std::string a_str, b_str;
    double lambda = 0.5, sigma_interp = std::sqrt(0.4);
    auto* sc_interp = app.add_subcommand("interpolate", "noise-and-denoise interpolation");
    sc_interp->add_option("--a", a_str, "first endpoint")->required();
    sc_interp->add_option("--b", b_str, "second endpoint")->required();
    sc_interp->add_option("--lambda", lambda, "interpolation weight in [0,1]");
    sc_interp->add_option("--sigma-interp", sigma_interp, "perturbation noise std");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    if (g.threads <= 0) {
        if (const char* env = std::getenv("SB_THREADS")) g.threads = std::atoi(env);
    }
    if (g.threads > 0) sb::set_num_threads(g.threads);

    try {
        if (sc_train_score->parsed()) return cmd_train_score(g);
        if (sc_train_ratio->parsed()) return cmd_train_ratio(g);
        if (sc_sample->parsed()) return cmd_sample(g, sopt);
        if (sc_eval->parsed()) return cmd_eval(g, samples_path, radius);
        if (sc_field->parsed()) return cmd_field(g, field_stage, field_t, field_learned);
        if (sc_kde->parsed()) return cmd_kde(g, kde_samples, kde_res, kde_bw, kde_extent);
        if (sc_inpaint->parsed()) return cmd_inpaint(g, y_str, mask_str);
        if (sc_interp->parsed()) return cmd_interpolate(g, a_str, b_str, lambda, sigma_interp);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
