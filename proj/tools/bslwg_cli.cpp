// Command-line front end: WG training, single VB/MCMC runs, raw simulation,
// full experiments and report aggregation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "bslwg/harness.hpp"
#include "bslwg/parallel.hpp"
#include "bslwg/stats.hpp"

namespace fs = std::filesystem;
using namespace bslwg;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("-c,--config", opts.config_path, "experiment config file");
    if (config_required) c->required();
    cmd->add_option("-o,--out", opts.out_dir, "output directory");
    cmd->add_option("-s,--seed", opts.seed, "master seed override")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg = parse_config_file(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    return cfg;
}

int cmd_wg_train(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts);
    fs::create_directories(opts.out_dir);
    SummaryVector s_obs = observed_summary(cfg);
    Vector theta0 = cfg.wg.theta0 ? *cfg.wg.theta0 : pilot_theta0(cfg, s_obs, cfg.seed);
    WGCorpus corpus = generate_wg_corpus(cfg, theta0, cfg.seed);
    WGTransform wg = train_wg(corpus.train, corpus.validation, cfg.wg.flow,
                              derive_seed(cfg.seed, {0x176u, 0x3u}));
    std::string path = (fs::path(opts.out_dir) / "wg.txt").string();
    save_wg(wg, path);
    ParticleCloud transformed = apply(wg, corpus.test);
    MardiaStats before = mardia(corpus.test.points);
    MardiaStats after = mardia(transformed.points);
    std::cout << "trained " << wg.steps.size() << " flow steps in "
              << wg.iterations << " iterations; final lower bound "
              << wg.final_lb << "\n"
              << "test-cloud Mardia skewness " << before.skewness << " -> "
              << after.skewness << "\n"
              << "artifact: " << path << "\n";
    return 0;
}

int cmd_single(const CommonOpts& opts, const std::string& method) {
    ExperimentConfig cfg = load_config(opts);
    cfg.methods = {method};
    cfg.replicates = 1;
    bool ok = replicate_and_report(cfg, opts.out_dir);
    std::cout << (ok ? "ok" : "failed") << "; report in " << opts.out_dir << "\n";
    return ok ? 0 : 1;
}

int cmd_simulate(const std::string& name, const std::vector<double>& theta,
                 int n, int count, std::uint64_t seed, const std::string& out) {
    auto sim = make_simulator(name);
    Vector th(static_cast<Eigen::Index>(theta.size()));
    for (std::size_t i = 0; i < theta.size(); ++i) th[static_cast<Eigen::Index>(i)] = theta[i];
    std::ostringstream os;
    for (int j = 0; j < sim->summary_dim(); ++j) os << (j ? "," : "") << 's' << j;
    os << '\n';
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, {0x51u, static_cast<std::uint64_t>(i)}));
        SummaryVector s = sim->summarize(sim->simulate(th, n, rng));
        for (Eigen::Index j = 0; j < s.size(); ++j)
            os << (j ? "," : "") << format_double(s[j]);
        os << '\n';
    }
    if (out.empty()) {
        std::cout << os.str();
    } else {
        std::ofstream f(out, std::ios::binary);
        f << os.str();
        std::cout << "wrote " << count << " summary rows to " << out << "\n";
    }
    return 0;
}

int cmd_experiment(const CommonOpts& opts, const std::vector<std::string>& methods) {
    ExperimentConfig cfg = load_config(opts);
    if (!methods.empty()) cfg.methods = methods;
    bool ok = replicate_and_report(cfg, opts.out_dir);
    std::cout << (ok ? "all replicates succeeded" : "some replicates failed")
              << "; report in " << opts.out_dir << "\n";
    return ok ? 0 : 1;
}

int cmd_report(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "aggregate.csv");
    if (!is.good()) {
        std::cerr << "no aggregate.csv in " << dir << "\n";
        return 1;
    }
    std::string line;
    while (std::getline(is, line)) {
        for (auto& c : line)
            if (c == ',') c = '\t';
        std::cout << line << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-likelihood inference toolkit"};
    app.require_subcommand(0, 1);

    bool print_schema = false;
    app.add_flag("--print-schema", print_schema, "print the config file schema and exit");

    CommonOpts wg_opts, vb_opts, mcmc_opts, exp_opts;
    std::string vb_method = "vb-bsl", mcmc_method = "mcmc-bsl";
    std::vector<std::string> exp_methods;

    auto* wg_cmd = app.add_subcommand("wg-train", "train a Gaussianization transform");
    add_common(wg_cmd, wg_opts);

    auto* vb_cmd = app.add_subcommand("vb-run", "single variational-Bayes run");
    add_common(vb_cmd, vb_opts);
    vb_cmd->add_option("-m,--method", vb_method,
                       "vb-bsl | vb-rbsl | vb-bsl-wg | vb-rbsl-wg");

    auto* mcmc_cmd = app.add_subcommand("mcmc-run", "single MCMC run");
    add_common(mcmc_cmd, mcmc_opts);
    mcmc_cmd->add_option("-m,--method", mcmc_method,
                         "mcmc-bsl | mcmc-rbsl | mcmc-rbsl-v | mcmc-bsl-wg | mcmc-rbsl-wg");

    std::string sim_name = "toy", sim_out;
    std::vector<double> sim_theta;
    int sim_n = 30, sim_count = 1;
    std::uint64_t sim_seed = 1;
    auto* sim_cmd = app.add_subcommand("simulate", "write simulated summary statistics");
    sim_cmd->add_option("--simulator", sim_name, "simulator name")->required();
    sim_cmd->add_option("--theta", sim_theta, "natural-space parameters")->required();
    sim_cmd->add_option("-n", sim_n, "dataset size");
    sim_cmd->add_option("--count", sim_count, "number of datasets");
    sim_cmd->add_option("-s,--seed", sim_seed, "seed");
    sim_cmd->add_option("-o,--out", sim_out, "output CSV (default: stdout)");

    auto* exp_cmd = app.add_subcommand("experiment", "run all configured replicates");
    add_common(exp_cmd, exp_opts);
    exp_cmd->add_option("-m,--methods", exp_methods, "method filter (overrides config)");

    std::string report_dir = "out";
    auto* report_cmd = app.add_subcommand("report", "print the aggregate table of a run");
    report_cmd->add_option("-o,--out", report_dir, "experiment output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (print_schema) {
            std::cout << config_schema();
            return 0;
        }
        if (wg_cmd->parsed()) return cmd_wg_train(wg_opts);
        if (vb_cmd->parsed()) return cmd_single(vb_opts, vb_method);
        if (mcmc_cmd->parsed()) return cmd_single(mcmc_opts, mcmc_method);
        if (sim_cmd->parsed())
            return cmd_simulate(sim_name, sim_theta, sim_n, sim_count, sim_seed, sim_out);
        if (exp_cmd->parsed()) return cmd_experiment(exp_opts, exp_methods);
        if (report_cmd->parsed()) return cmd_report(report_dir);
        std::cout << app.help();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
