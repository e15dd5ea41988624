#include "resset/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "resset/config.hpp"
#include "resset/errors.hpp"
#include "resset/format.hpp"
#include "resset/gradcheck.hpp"
#include "resset/rank_analysis.hpp"
#include "resset/train.hpp"

namespace resset::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& items, const char* sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
    return out;
}

std::vector<std::string> scheme_names(const std::vector<KernelScheme>& s) {
    std::vector<std::string> out;
    for (const auto& k : s) out.push_back(k.name());
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

int int_key(const Config& c, const std::string& key, long long lo) {
    const long long v = c.get_int(key);
    if (v < lo || v > 1'000'000'000)
        throw ConfigError("key '" + key + "' must be >= " + std::to_string(lo));
    return static_cast<int>(v);
}

std::vector<KernelScheme> scheme_list(const Config& c, const std::string& key, int k) {
    std::vector<KernelScheme> out;
    for (const auto& name : c.get_list(key)) out.push_back(parse_scheme(name, k));
    if (out.empty()) throw ConfigError("key '" + key + "' lists no schemes");
    return out;
}

// ---- shared key groups -------------------------------------------------------

void declare_data_keys(Config& c) {
    c.declare("bands", "31");
    c.declare("height", "32");
    c.declare("width", "32");
    c.declare("endmembers", "4");
    c.declare("train_pairs", "2");
    c.declare("data_seed", "0");
    c.declare("noise", "gaussian");
    c.declare("sigma", "50");
    c.declare("sigma_min", "10");
    c.declare("sigma_max", "70");
    c.declare("blind_min", "30");
    c.declare("blind_max", "70");
    c.declare("noise_fraction", "0.1");
    c.declare("stripe_magnitude", "0.25");
    c.declare("noise_band_fraction", format_real(1.0 / 3.0));
}

DenoiseTask data_task(const Config& c, std::uint64_t seed_offset) {
    DenoiseTask t;
    t.bands = int_key(c, "bands", 1);
    t.height = int_key(c, "height", 1);
    t.width = int_key(c, "width", 1);
    t.endmembers = int_key(c, "endmembers", 1);
    t.train_pairs = int_key(c, "train_pairs", 1);
    t.seed = c.get_uint("data_seed") + seed_offset;
    t.noise.kind = parse_noise_kind(c.get_string("noise"));
    t.noise.sigma = c.get_real("sigma");
    t.noise.sigma_min = c.get_real("sigma_min");
    t.noise.sigma_max = c.get_real("sigma_max");
    t.noise.blind_min = c.get_real("blind_min");
    t.noise.blind_max = c.get_real("blind_max");
    t.noise.fraction = c.get_real("noise_fraction");
    t.noise.magnitude = c.get_real("stripe_magnitude");
    t.noise.band_fraction = c.get_real("noise_band_fraction");
    return t;
}

void declare_model_keys(Config& c) {
    c.declare("k", "3");
    c.declare("M", "8");
    c.declare("blocks", "2");
}

void declare_optim_keys(Config& c) {
    c.declare("lambda", format_real(kDefaultLambda));
    c.declare("learning_rate", "0.0005");
    c.declare("beta1", "0.9");
    c.declare("beta2", "0.999");
    c.declare("epsilon", "1e-08");
    c.declare("epochs", "25");
    c.declare("batch_size", "4");
}

TrainConfig train_config(const Config& c, const KernelScheme& scheme, std::uint64_t seed) {
    TrainConfig t;
    t.scheme = scheme;
    t.M = int_key(c, "M", 1);
    t.num_blocks = int_key(c, "blocks", 0);
    t.lambda = c.get_real("lambda");
    t.learning_rate = c.get_real("learning_rate");
    t.beta1 = c.get_real("beta1");
    t.beta2 = c.get_real("beta2");
    t.epsilon = c.get_real("epsilon");
    t.epochs = int_key(c, "epochs", 0);
    t.batch_size = int_key(c, "batch_size", 1);
    t.seed = seed;
    t.validate();
    return t;
}

std::string spectrum_csv_rows(const std::string& prefix, const Spectrum& s) {
    std::string out;
    for (std::size_t i = 0; i < s.values.size(); ++i)
        out += prefix + std::to_string(i) + "," + format_real(s.values[i]) + "\n";
    return out;
}

std::string losses_csv(const TrainReport& r) {
    std::string out = "epoch,data_loss,reg_loss\n";
    for (const auto& e : r.epochs)
        out += std::to_string(e.epoch) + "," + format_real(e.data) + "," + format_real(e.reg) + "\n";
    return out;
}

void print_metrics(std::ostream& out, const std::string& label, const MetricsReport& m) {
    out << label << ": MPSNR " << format_real(m.mpsnr) << " dB, MSSIM " << format_real(m.mssim)
        << ", SAM " << format_real(m.sam) << " rad\n";
}

// ---- commands ------------------------------------------------------------------

struct Context {
    const Config& cfg;
    fs::path run_dir;
    std::ostream& out;
    std::ostream& err;
};

struct Command {
    std::string name;
    std::string summary;
    std::function<void(Config&)> declare;
    std::function<int(Context&)> run;
};

int cmd_rank_audit(Context& ctx) {
    const Config& c = ctx.cfg;
    const int k = int_key(c, "k", 1);
    const auto schemes = scheme_list(c, "schemes", k);
    AuditOptions opts;
    opts.seeds = int_key(c, "seeds", 1);
    opts.base_seed = c.get_uint("seed");
    opts.zero_weights = c.get_bool("zero_weights");
    opts.rel_tol = c.get_real("rank_tol");
    const int M = int_key(c, "M", 1), C = int_key(c, "C", 1);
    for (const auto& s : schemes)
        if (s.is_sequential())
            throw ConfigError(s.name() + " has no joint kernel matrix; drop it from 'schemes'");

    std::string csv = "scheme,M,C,k,seed,predicted_bound,valid_columns,measured_rank,achieved\n";
    bool exceeded = false;
    for (const auto& s : schemes) {
        const RankAudit a = audit_kernel_rank(s, M, C, opts);
        const int target = std::min(a.predicted_bound, a.valid_columns);
        for (std::size_t i = 0; i < a.ranks_per_seed.size(); ++i) {
            const int r = a.ranks_per_seed[i];
            exceeded = exceeded || r > a.predicted_bound;
            csv += s.name() + "," + std::to_string(M) + "," + std::to_string(C) + "," +
                   std::to_string(k) + "," + std::to_string(i) + "," +
                   std::to_string(a.predicted_bound) + "," + std::to_string(a.valid_columns) +
                   "," + std::to_string(r) + "," + (r == target ? "true" : "false") + "\n";
        }
    }
    write_file(ctx.run_dir / "rank_audit.csv", csv);
    ctx.out << csv;
    if (exceeded) {
        ctx.err << "rank-audit: a measured rank exceeds its predicted bound\n";
        return kCheckFailed;
    }
    return kSuccess;
}

int cmd_grad_check(Context& ctx) {
    const Config& c = ctx.cfg;
    GradCheckOptions o;
    o.seed = c.get_uint("seed");
    o.reg_trials = int_key(c, "reg_trials", 0);
    o.reg_max_rows = int_key(c, "reg_max_rows", 2);
    o.reg_max_cols = int_key(c, "reg_max_cols", 2);
    o.reg_step = c.get_real("reg_step");
    o.scheme = parse_scheme(c.get_string("scheme"), int_key(c, "k", 1));
    o.M = int_key(c, "M", 1);
    o.blocks = int_key(c, "blocks", 1);
    o.bands = int_key(c, "bands", 1);
    o.height = int_key(c, "height", 1);
    o.width = int_key(c, "width", 1);
    o.lambda = c.get_real("lambda");
    o.net_samples = int_key(c, "net_samples", 0);
    o.net_step = c.get_real("net_step");
    o.wrong_sign = c.get_bool("inject_wrong_sign");
    const double threshold = c.get_real("threshold");

    const GradCheckReport r = run_grad_check(o);
    const bool pass = r.reg_max_error <= threshold && r.net_max_error <= threshold;
    ordered_json j;
    j["reg_max_rel_error"] = r.reg_max_error;
    j["reg_entries"] = r.reg_entries;
    j["net_max_rel_error"] = r.net_max_error;
    j["net_samples"] = r.net_samples;
    j["net_skipped"] = r.net_skipped;
    j["net_parameters"] = r.net_parameters;
    j["threshold"] = threshold;
    j["pass"] = pass;
    write_file(ctx.run_dir / "grad_check.json", j.dump(2) + "\n");
    ctx.out << "DA-Reg max relative error " << format_real(r.reg_max_error) << " over "
            << r.reg_entries << " entries\n"
            << "network max relative error " << format_real(r.net_max_error) << " over "
            << r.net_samples << " of " << r.net_parameters << " parameters\n"
            << (pass ? "PASS" : "FAIL") << " (threshold " << format_real(threshold) << ")\n";
    return pass ? kSuccess : kCheckFailed;
}

int cmd_bench(Context& ctx) {
    const Config& c = ctx.cfg;
    const int k = int_key(c, "k", 1);
    const auto schemes = scheme_list(c, "schemes", k);
    const int M = int_key(c, "M", 1), C = int_key(c, "C", 1);
    const int B = int_key(c, "bands", 1), H = int_key(c, "height", 1), W = int_key(c, "width", 1);
    const auto conv3d = KernelScheme::make(Variant::Conv3D, 1, k);
    const double base = static_cast<double>(param_count(conv3d, M, C));

    std::string csv =
        "scheme,rank_bound,valid_columns,set_params,compression_params,params_vs_conv3d,macs\n";
    for (const auto& s : schemes) {
        const std::size_t p = param_count(s, M, C);
        const std::string cols = s.is_sequential() ? "" : std::to_string(valid_columns(s, C));
        csv += s.name() + "," + std::to_string(rank_upper_bound(s, M)) + "," + cols + "," +
               std::to_string(p) + "," + std::to_string(compression_param_count(s, M)) + "," +
               format_real(static_cast<double>(p) / base) + "," +
               std::to_string(mac_count(s, M, C, B, H, W)) + "\n";
    }
    write_file(ctx.run_dir / "bench.csv", csv);
    ctx.out << csv;
    return kSuccess;
}

int cmd_train(Context& ctx) {
    const Config& c = ctx.cfg;
    const auto scheme = parse_scheme(c.get_string("scheme"), int_key(c, "k", 1));
    const TrainConfig tc = train_config(c, scheme, c.get_uint("seed"));
    const DenoiseData data = make_denoise_data(data_task(c, 0));
    Network net = make_network(tc);
    TrainReport r;
    try {
        r = train_denoiser(tc, data, net);
    } catch (const NonFiniteLoss& e) {
        ordered_json j;
        j["error"] = "non-finite loss";
        j["epoch"] = e.epoch;
        write_file(ctx.run_dir / "error.json", j.dump(2) + "\n");
        throw;
    }
    write_file(ctx.run_dir / "report.json", report_json(r));
    write_file(ctx.run_dir / "losses.csv", losses_csv(r));
    write_file(ctx.run_dir / "spectrum.csv",
               "index,value\n" + spectrum_csv_rows("", r.final_spectrum));
    // Kept apart from the reproducible outputs.
    write_file(ctx.run_dir / "timing.txt",
               "wall_clock_seconds = " + format_real(r.wall_clock_seconds) + "\n");
    save_checkpoint((ctx.run_dir / "checkpoint").string(), net);

    ctx.out << scheme.name() << ", " << r.parameter_count << " parameters, " << tc.epochs
            << " epochs\n";
    print_metrics(ctx.out, "noisy", r.noisy_metrics);
    print_metrics(ctx.out, "initial", r.init_metrics);
    print_metrics(ctx.out, "final", r.final_metrics);
    ctx.out << "tail mass (head " << tc.M << ") " << format_real(r.final_tail_mass) << "\n";
    return kSuccess;
}

struct CompareCell {
    KernelScheme scheme;
    std::uint64_t seed = 0;
    std::optional<TrainReport> report;
    std::string error;
};

int worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RESSET_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError("RESSET_THREADS must be a positive integer");
        n = std::min<unsigned>(n, static_cast<unsigned>(v));
    }
    return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

int cmd_compare(Context& ctx) {
    const Config& c = ctx.cfg;
    auto schemes = scheme_list(c, "schemes", int_key(c, "k", 1));
    if (schemes.size() < 2) throw ConfigError("compare needs at least two schemes");
    const int seeds = int_key(c, "seeds", 1);
    const std::uint64_t base_seed = c.get_uint("seed");
    const int M = int_key(c, "M", 1);
    // Stable order by rank bound; ties keep the configured order.
    std::stable_sort(schemes.begin(), schemes.end(), [&](const auto& a, const auto& b) {
        return rank_upper_bound(a, M) < rank_upper_bound(b, M);
    });

    std::vector<CompareCell> cells;
    for (const auto& s : schemes)
        for (int i = 0; i < seeds; ++i) cells.push_back({s, base_seed + static_cast<std::uint64_t>(i), {}, {}});
    for (const auto& cell : cells) train_config(c, cell.scheme, cell.seed);  // validate up front

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            CompareCell& cell = cells[i];
            try {
                const TrainConfig tc = train_config(c, cell.scheme, cell.seed);
                const DenoiseData data = make_denoise_data(data_task(c, cell.seed - base_seed));
                cell.report = train_denoiser(tc, data);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    };
    const int threads = worker_count(cells.size());
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    // Single writer, fixed row order.
    std::string csv =
        "kind,scheme,seed,rank_bound,block_params,total_params,epochs,runs,mpsnr,mpsnr_std,mssim,"
        "sam,tail_mass,res3_best_mpsnr,status\n";
    std::string spectra = "scheme,seed,index,value\n";
    struct Aggregate {
        int runs = 0;
        std::size_t total_params = 0;
        double mpsnr = 0, mpsnr_sq = 0, mssim = 0, sam = 0, tail = 0;
    };
    std::map<std::string, Aggregate> agg;
    const int epochs = int_key(c, "epochs", 0);
    int failures = 0;
    bool numeric_failure = false;
    for (const auto& cell : cells) {
        const std::string name = cell.scheme.name();
        const std::string head = "seed," + name + "," + std::to_string(cell.seed) + "," +
                                 std::to_string(rank_upper_bound(cell.scheme, M)) + "," +
                                 std::to_string(param_count(cell.scheme, M, M)) + ",";
        if (!cell.report) {
            ++failures;
            numeric_failure = numeric_failure || cell.error.find("non-finite") != std::string::npos;
            std::string msg = cell.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            csv += head + "," + std::to_string(epochs) + ",1,,,,,,,error: " + msg + "\n";
            continue;
        }
        const TrainReport& r = *cell.report;
        csv += head + std::to_string(r.parameter_count) + "," + std::to_string(epochs) + ",1," +
               format_real(r.final_metrics.mpsnr) + ",," + format_real(r.final_metrics.mssim) + "," +
               format_real(r.final_metrics.sam) + "," + format_real(r.final_tail_mass) + ",,ok\n";
        spectra += spectrum_csv_rows(name + "," + std::to_string(cell.seed) + ",", r.final_spectrum);
        Aggregate& a = agg[name];
        ++a.runs;
        a.total_params = r.parameter_count;
        a.mpsnr += r.final_metrics.mpsnr;
        a.mpsnr_sq += r.final_metrics.mpsnr * r.final_metrics.mpsnr;
        a.mssim += r.final_metrics.mssim;
        a.sam += r.final_metrics.sam;
        a.tail += r.final_tail_mass;
    }

    double best = -INFINITY;
    bool res3_best = false;
    for (const auto& s : schemes) {
        auto it = agg.find(s.name());
        if (it == agg.end()) continue;
        const double mean = it->second.mpsnr / it->second.runs;
        if (mean > best) {
            best = mean;
            res3_best = s.is_res3();
        } else if (mean == best) {
            res3_best = res3_best || s.is_res3();
        }
    }
    for (const auto& s : schemes) {
        const std::string name = s.name();
        const std::string head = "aggregate," + name + ",," + std::to_string(rank_upper_bound(s, M)) +
                                 "," + std::to_string(param_count(s, M, M)) + ",";
        auto it = agg.find(name);
        if (it == agg.end()) {
            csv += head + "," + std::to_string(epochs) + ",0,,,,,," +
                   (res3_best ? "true" : "false") + ",error\n";
            continue;
        }
        const Aggregate& a = it->second;
        const double n = a.runs;
        const double mean = a.mpsnr / n;
        const double var = std::max(0.0, a.mpsnr_sq / n - mean * mean);
        csv += head + std::to_string(a.total_params) + "," +
               std::to_string(epochs) + "," + std::to_string(a.runs) + "," + format_real(mean) +
               "," + format_real(std::sqrt(var)) + "," + format_real(a.mssim / n) + "," +
               format_real(a.sam / n) + "," + format_real(a.tail / n) + "," +
               (res3_best ? "true" : "false") + ",ok\n";
    }
    write_file(ctx.run_dir / "compare.csv", csv);
    write_file(ctx.run_dir / "spectra.csv", spectra);
    ctx.out << csv;
    if (failures > 0) {
        ctx.err << "compare: " << failures << " of " << cells.size() << " runs failed\n";
        return numeric_failure ? kNumericFailure : kCheckFailed;
    }
    return kSuccess;
}

int cmd_spectrum(Context& ctx) {
    const Config& c = ctx.cfg;
    const DenoiseData data = make_denoise_data(data_task(c, 0));
    const FeatureMap input = data.heldout.noisy.to_feature_map();
    std::string csv = "source,index,value\n";
    auto emit = [&](const std::string& source, Network& net) {
        net.forward(input);
        const Spectrum s = feature_spectrum(net.last_feature(), source);
        csv += spectrum_csv_rows(source + ",", s);
        ctx.out << source << ": " << s.values.size() << " singular values, tail mass (head "
                << net.config().width << ") " << format_real(tail_mass(s, net.config().width))
                << "\n";
    };
    const std::string checkpoint = c.get_string("checkpoint");
    if (!checkpoint.empty()) {
        Network net = load_checkpoint(checkpoint);
        if (net.config().blocks < 1) throw ConfigError("checkpoint network has no block");
        emit("checkpoint:" + net.config().scheme.name(), net);
    } else {
        const int k = int_key(c, "k", 1);
        for (const auto& s : scheme_list(c, "schemes", k)) {
            TrainConfig tc;
            tc.scheme = s;
            tc.M = int_key(c, "M", 1);
            tc.num_blocks = int_key(c, "blocks", 1);
            tc.seed = c.get_uint("seed");
            Network net = make_network(tc);
            emit(s.name(), net);
        }
    }
    write_file(ctx.run_dir / "spectrum.csv", csv);
    return kSuccess;
}

std::vector<Command> commands() {
    const std::string comparison = join(scheme_names(comparison_schemes()));
    return {
        {"rank-audit", "Kernel-matrix rank of each scheme against its predicted bound",
         [](Config& c) {
             c.declare("schemes", "Conv3D,Par1D2D,ReS3_1D,ReS3_1D_L2,ReS3_2D,ReS3_1Dx3");
             c.declare("M", "4");
             c.declare("C", "4");
             c.declare("k", "3");
             c.declare("seeds", "10");
             c.declare("seed", "0");
             c.declare("zero_weights", "false");
             c.declare("rank_tol", format_real(kAuditRankTolerance));
         },
         cmd_rank_audit},
        {"grad-check", "Finite-difference checks of the DA-Reg and network gradients",
         [](Config& c) {
             GradCheckOptions d;
             c.declare("seed", "0");
             c.declare("reg_trials", std::to_string(d.reg_trials));
             c.declare("reg_max_rows", std::to_string(d.reg_max_rows));
             c.declare("reg_max_cols", std::to_string(d.reg_max_cols));
             c.declare("reg_step", format_real(d.reg_step));
             c.declare("scheme", d.scheme.name());
             c.declare("k", "3");
             c.declare("M", std::to_string(d.M));
             c.declare("blocks", std::to_string(d.blocks));
             c.declare("bands", std::to_string(d.bands));
             c.declare("height", std::to_string(d.height));
             c.declare("width", std::to_string(d.width));
             c.declare("lambda", format_real(d.lambda));
             c.declare("net_samples", std::to_string(d.net_samples));
             c.declare("net_step", format_real(d.net_step));
             c.declare("threshold", "0.0001");
             c.declare("inject_wrong_sign", "false");
         },
         cmd_grad_check},
        {"bench", "Parameter and multiply-accumulate counts per scheme",
         [comparison](Config& c) {
             c.declare("schemes", comparison + ",ReS3_1D_L2,ReS3_2D,ReS3_1Dx3");
             c.declare("M", "8");
             c.declare("C", "8");
             c.declare("k", "3");
             c.declare("bands", "31");
             c.declare("height", "64");
             c.declare("width", "64");
         },
         cmd_bench},
        {"train", "Train one denoiser on synthetic cubes",
         [](Config& c) {
             c.declare("scheme", "ReS3_1D");
             c.declare("seed", "0");
             declare_model_keys(c);
             declare_optim_keys(c);
             declare_data_keys(c);
         },
         cmd_train},
        {"compare", "Train every scheme over matched seeds and tabulate the results",
         [comparison](Config& c) {
             c.declare("schemes", comparison);
             c.declare("seeds", "3");
             c.declare("seed", "0");
             declare_model_keys(c);
             declare_optim_keys(c);
             declare_data_keys(c);
         },
         cmd_compare},
        {"spectrum", "Normalised singular spectrum of the last-block feature matrix",
         [comparison](Config& c) {
             c.declare("checkpoint", "");
             c.declare("schemes", comparison);
             c.declare("seed", "0");
             declare_model_keys(c);
             declare_data_keys(c);
         },
         cmd_spectrum},
    };
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const std::vector<Command> cmds = commands();
    CLI::App app{"Rank-enhanced convolution sets and diversity regularisation on synthetic "
                 "hyperspectral cubes"};
    app.name("resset");
    app.require_subcommand(1);
    struct Parsed {
        std::string config_path;
        std::vector<std::string> overrides;
        std::string out_dir = "runs";
        bool print_config = false;
    };
    std::vector<Parsed> parsed(cmds.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        CLI::App* sub = app.add_subcommand(cmds[i].name, cmds[i].summary);
        sub->add_option("-c,--config", parsed[i].config_path, "key = value configuration file");
        sub->add_option("-o,--out", parsed[i].out_dir, "root of the per-run output directories")
            ->capture_default_str();
        sub->add_flag("--print-config", parsed[i].print_config,
                      "print the resolved configuration and exit");
        sub->add_option("overrides", parsed[i].overrides, "key=value overrides");
        subs.push_back(sub);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "resset: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) ++which;
    const Command& cmd = cmds.at(which);
    const Parsed& p = parsed[which];

    Config cfg;
    try {
        cmd.declare(cfg);
        if (!p.config_path.empty()) cfg.merge_file(p.config_path);
        cfg.merge_overrides(p.overrides);
    } catch (const ConfigError& e) {
        err << "resset " << cmd.name << ": " << e.what() << "\n" << subs[which]->help();
        return kUsage;
    }
    if (p.print_config) {
        out << cfg.canonical_text();
        return kSuccess;
    }

    try {
        const fs::path run_dir = fs::path(p.out_dir) / (cmd.name + "-" + cfg.hash());
        fs::create_directories(run_dir);
        write_file(run_dir / "config.txt", "# resset " + cmd.name + "\n" + cfg.canonical_text());
        Context ctx{cfg, run_dir, out, err};
        const int code = cmd.run(ctx);
        err << "resset " << cmd.name << ": outputs in " << run_dir.string() << "\n";
        return code;
    } catch (const ConfigError& e) {
        err << "resset " << cmd.name << ": " << e.what() << "\n";
        return kUsage;
    } catch (const NonFiniteLoss& e) {
        err << "resset " << cmd.name << ": " << e.what() << "\n";
        return kNumericFailure;
    } catch (const NumericError& e) {
        err << "resset " << cmd.name << ": " << e.what() << "\n";
        return kNumericFailure;
    } catch (const std::exception& e) {
        err << "resset " << cmd.name << ": " << e.what() << "\n";
        return kCheckFailed;
    }
}

}  // namespace resset::cli
