#include "bslwg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bslwg/parallel.hpp"
#include "bslwg/stats.hpp"

namespace bslwg {

namespace {

namespace fs = std::filesystem;

// Seed-derivation stream tags.
constexpr std::uint64_t kObsTag = 0x0b5u;
constexpr std::uint64_t kWgTag = 0x176u;
constexpr std::uint64_t kPilotTag = 0x91au;
constexpr std::uint64_t kMethodTag = 0x3e7u;
constexpr std::uint64_t kSummaryTag = 0x5a1u;

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

Vector parse_vector(const std::string& s) {
    auto toks = split_ws(s);
    Vector v(static_cast<Eigen::Index>(toks.size()));
    for (std::size_t i = 0; i < toks.size(); ++i) v[static_cast<Eigen::Index>(i)] = std::stod(toks[i]);
    return v;
}

GammaPriorKind parse_gamma_prior_kind(const std::string& s) {
    if (s == "gaussian") return GammaPriorKind::Gaussian;
    if (s == "laplace") return GammaPriorKind::Laplace;
    if (s == "exponential") return GammaPriorKind::Exponential;
    throw std::runtime_error("unknown gamma prior kind: " + s);
}

struct MethodSpec {
    bool vb = true;       // false: mcmc
    bool robust = false;
    bool variance_adjusted = false;
    bool wg = false;
};

MethodSpec parse_method(const std::string& label) {
    MethodSpec spec;
    std::string rest = label;
    if (rest.rfind("vb-", 0) == 0) {
        spec.vb = true;
        rest = rest.substr(3);
    } else if (rest.rfind("mcmc-", 0) == 0) {
        spec.vb = false;
        rest = rest.substr(5);
    } else {
        throw std::runtime_error("unknown method label: " + label);
    }
    if (rest.size() >= 3 && rest.substr(rest.size() - 3) == "-wg") {
        spec.wg = true;
        rest = rest.substr(0, rest.size() - 3);
    }
    if (rest == "bsl") {
    } else if (rest == "rbsl") {
        spec.robust = true;
    } else if (rest == "rbsl-v") {
        spec.robust = true;
        spec.variance_adjusted = true;
    } else {
        throw std::runtime_error("unknown method label: " + label);
    }
    require(!(spec.vb && spec.variance_adjusted),
            "rBSL-V is only available with MCMC");
    return spec;
}

SummaryBatchFn make_batch_fn(const Simulator& sim, int n, int workers) {
    return [&sim, n, workers](const Vector& theta_w, int N, Rng& rng) {
        std::uint64_t base = rng.next_u64();
        Vector natural = sim.constrain(theta_w);
        std::vector<SummaryVector> out(static_cast<std::size_t>(N));
        parallel_for(static_cast<std::size_t>(N), workers, [&](std::size_t j) {
            Rng r(derive_seed(base, {kSummaryTag, j}));
            out[j] = sim.summarize(sim.simulate(natural, n, r));
        });
        return out;
    };
}

GaussianPrior make_prior(const ExperimentConfig& cfg, int p) {
    GaussianPrior prior;
    prior.mean = Vector::Constant(p, cfg.prior_mean);
    prior.var = Vector::Constant(p, cfg.prior_var);
    return prior;
}

// Posterior mean/covariance in natural space from working-space samples.
void natural_moments(const Simulator& sim, const std::vector<Vector>& working,
                     Vector& mean, Matrix& cov) {
    const auto n = static_cast<double>(working.size());
    const auto p = sim.param_dim();
    Matrix pts(working.size(), p);
    for (std::size_t i = 0; i < working.size(); ++i)
        pts.row(static_cast<Eigen::Index>(i)) = sim.constrain(working[i]).transpose();
    mean = pts.colwise().mean();
    Matrix cen = pts.rowwise() - mean.transpose();
    cov = (cen.transpose() * cen) / n;
}

constexpr int kPosteriorSamples = 4000;

void vb_posterior_moments(const Simulator& sim, const VariationalParams& params,
                          std::uint64_t seed, Vector& mean, Matrix& cov) {
    Rng rng(derive_seed(seed, {0x905u}));
    std::vector<Vector> samples;
    samples.reserve(kPosteriorSamples);
    for (int i = 0; i < kPosteriorSamples; ++i) samples.push_back(params.sample(rng));
    natural_moments(sim, samples, mean, cov);
}

void chain_posterior_moments(const Simulator& sim, const Chain& chain,
                             double burnin_frac, Vector& mean, Matrix& cov) {
    auto total = chain.states.rows();
    auto burn = static_cast<Eigen::Index>(burnin_frac * static_cast<double>(total));
    std::vector<Vector> samples;
    samples.reserve(static_cast<std::size_t>(total - burn));
    for (Eigen::Index t = burn; t < total; ++t)
        samples.push_back(chain.states.row(t).head(chain.p).transpose());
    natural_moments(sim, samples, mean, cov);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open " + path);
    os << text;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t file_fnv1a(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    std::string data = ss.str();
    return fnv1a_hash(data.data(), data.size());
}

double mahalanobis_distance(const Vector& a, const Vector& b, const Matrix& cov) {
    Vector d = a - b;
    Eigen::LDLT<Matrix> ldlt(cov);
    double q = d.dot(ldlt.solve(d));
    return std::sqrt(std::max(q, 0.0));
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        require(eq != std::string::npos, "bad config line: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto has = [&](const std::string& k) { return kv.count(k) > 0; };
    auto get = [&](const std::string& k) { return kv.at(k); };
    auto get_int = [&](const std::string& k, int def) {
        return has(k) ? std::stoi(get(k)) : def;
    };
    auto get_dbl = [&](const std::string& k, double def) {
        return has(k) ? std::stod(get(k)) : def;
    };
    auto get_u64 = [&](const std::string& k, std::uint64_t def) {
        return has(k) ? static_cast<std::uint64_t>(std::stoull(get(k))) : def;
    };

    if (has("simulator")) cfg.simulator = get("simulator");
    require(std::find(simulator_names().begin(), simulator_names().end(),
                      cfg.simulator) != simulator_names().end(),
            "unknown simulator: " + cfg.simulator);
    if (has("theta_true")) cfg.theta_true = parse_vector(get("theta_true"));
    cfg.obs_n = get_int("obs_n", cfg.obs_n);
    cfg.obs_seed = get_u64("obs_seed", cfg.obs_seed);
    cfg.prior_mean = get_dbl("prior_mean", cfg.prior_mean);
    cfg.prior_var = get_dbl("prior_var", cfg.prior_var);
    if (has("methods")) cfg.methods = split_ws(get("methods"));
    for (const auto& m : cfg.methods) (void)parse_method(m);
    cfg.replicates = get_int("replicates", cfg.replicates);
    require(cfg.replicates >= 1, "replicates must be >= 1");
    cfg.seed = get_u64("seed", cfg.seed);
    cfg.workers = get_int("workers", cfg.workers);

    cfg.wg.M = get_int("wg.m", cfg.wg.M);
    cfg.wg.dataset_size = get_int("wg.dataset_size", cfg.wg.dataset_size);
    cfg.wg.split_train = get_dbl("wg.split_train", cfg.wg.split_train);
    cfg.wg.split_val = get_dbl("wg.split_val", cfg.wg.split_val);
    cfg.wg.flow.epsilon = get_dbl("wg.epsilon", cfg.wg.flow.epsilon);
    cfg.wg.flow.max_iters = get_int("wg.max_iters", cfg.wg.flow.max_iters);
    cfg.wg.flow.lb_window = get_int("wg.window", cfg.wg.flow.lb_window);
    cfg.wg.flow.patience = get_int("wg.patience", cfg.wg.flow.patience);
    cfg.wg.flow.k_refresh = get_int("wg.k_refresh", cfg.wg.flow.k_refresh);
    if (has("wg.theta0")) cfg.wg.theta0 = parse_vector(get("wg.theta0"));

    cfg.pilot.max_iters = get_int("pilot.max_iters", cfg.pilot.max_iters);
    cfg.pilot.S = get_int("pilot.s", cfg.pilot.S);
    cfg.pilot.N = get_int("pilot.n", cfg.pilot.N);

    cfg.vb.S = get_int("vb.s", cfg.vb.S);
    cfg.vb.N = get_int("vb.n", cfg.vb.N);
    cfg.vb.beta1 = get_dbl("vb.beta1", cfg.vb.beta1);
    cfg.vb.beta2 = get_dbl("vb.beta2", cfg.vb.beta2);
    cfg.vb.eps0 = get_dbl("vb.eps0", cfg.vb.eps0);
    cfg.vb.tau = get_dbl("vb.tau", cfg.vb.tau);
    cfg.vb.t_window = get_int("vb.window", cfg.vb.t_window);
    cfg.vb.patience = get_int("vb.patience", cfg.vb.patience);
    cfg.vb.max_iters = get_int("vb.max_iters", cfg.vb.max_iters);
    cfg.vb.sigma0 = get_dbl("vb.sigma0", cfg.vb.sigma0);

    cfg.mcmc.iterations = get_int("mcmc.iterations", cfg.mcmc.iterations);
    cfg.mcmc.N = get_int("mcmc.n", cfg.mcmc.N);
    cfg.mcmc.scale = get_dbl("mcmc.scale", cfg.mcmc.scale);
    cfg.mcmc.adapt_iterations = get_int("mcmc.adapt", cfg.mcmc.adapt_iterations);
    if (has("mcmc.gamma_prior"))
        cfg.mcmc.gamma_prior.kind = parse_gamma_prior_kind(get("mcmc.gamma_prior"));
    cfg.mcmc.gamma_prior.param =
        get_dbl("mcmc.gamma_prior_param", cfg.mcmc.gamma_prior.param);
    cfg.mcmc.burnin_frac = get_dbl("mcmc.burnin_frac", cfg.mcmc.burnin_frac);

    auto sim = make_simulator(cfg.simulator);
    if (cfg.theta_true.size() == 0)
        throw std::runtime_error("theta_true is required");
    require(cfg.theta_true.size() == sim->param_dim(),
            "theta_true length does not match the simulator");
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open config " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string config_schema() {
    return
        "# bslwg experiment configuration (key = value; '#' starts a comment)\n"
        "simulator          = toy | alpha-stable | gnk | toads\n"
        "theta_true         = <natural-space values, space separated>  (required)\n"
        "obs_n              = observed dataset size (toads: number of toads)\n"
        "obs_seed           = seed for the observed dataset (fixed across replicates)\n"
        "prior_mean         = isotropic working-space prior mean     [0]\n"
        "prior_var          = isotropic working-space prior variance [100]\n"
        "methods            = labels among vb-bsl vb-rbsl vb-bsl-wg vb-rbsl-wg\n"
        "                     mcmc-bsl mcmc-rbsl mcmc-rbsl-v mcmc-bsl-wg mcmc-rbsl-wg\n"
        "replicates         = number of replicates R                 [10]\n"
        "seed               = master seed\n"
        "workers            = worker threads for simulation fan-out  [1]\n"
        "wg.m               = WG corpus size M                       [5000]\n"
        "wg.dataset_size    = dataset size for WG corpus (0: obs_n)  [0]\n"
        "wg.split_train     = training fraction                      [1/3]\n"
        "wg.split_val       = validation fraction                    [1/3]\n"
        "wg.epsilon         = flow step size                         [0.05]\n"
        "wg.max_iters       = flow iteration cap                     [500]\n"
        "wg.window          = lower-bound smoothing window           [10]\n"
        "wg.patience        = flow stopping patience                 [20]\n"
        "wg.k_refresh       = mixture-order reselection cadence      [25]\n"
        "wg.theta0          = fixed WG center (natural space); omit for a pilot run\n"
        "pilot.max_iters    = pilot VB-BSL iteration cap             [200]\n"
        "pilot.s            = pilot theta samples per iteration      [100]\n"
        "pilot.n            = pilot simulations per theta            [100]\n"
        "vb.s               = theta samples per iteration            [400]\n"
        "vb.n               = simulations per theta                  [200]\n"
        "vb.beta1, vb.beta2 = adaptive weights                       [0.9]\n"
        "vb.eps0            = base learning rate                     [0.01]\n"
        "vb.tau             = learning-rate decay threshold          [1000]\n"
        "vb.window          = lower-bound rolling window             [50]\n"
        "vb.patience        = maximum patience                       [50]\n"
        "vb.max_iters       = optimizer iteration cap                [2000]\n"
        "vb.sigma0          = Gamma prior scale (rBSL-M)             [0.5]\n"
        "mcmc.iterations    = chain length                           [20000]\n"
        "mcmc.n             = simulations per proposal               [200]\n"
        "mcmc.scale         = base random-walk scale                 [0.1]\n"
        "mcmc.adapt         = adaptive tuning prefix length          [2000]\n"
        "mcmc.gamma_prior   = gaussian | laplace | exponential       [laplace]\n"
        "mcmc.gamma_prior_param = prior scale/rate                   [0.5]\n"
        "mcmc.burnin_frac   = burn-in fraction discarded             [0.25]\n";
}

SummaryVector observed_summary(const ExperimentConfig& config) {
    auto sim = make_simulator(config.simulator);
    Rng rng(derive_seed(config.obs_seed, {kObsTag}));
    return sim->summarize(sim->simulate(config.theta_true, config.obs_n, rng));
}

WGCorpus generate_wg_corpus(const ExperimentConfig& config, const Vector& theta0_natural,
                            std::uint64_t seed) {
    auto sim = make_simulator(config.simulator);
    const int M = config.wg.M;
    const int n = config.wg.dataset_size > 0 ? config.wg.dataset_size : config.obs_n;
    const auto d = sim->summary_dim();

    Matrix all(M, d);
    parallel_for(static_cast<std::size_t>(M), config.workers, [&](std::size_t i) {
        Rng r(derive_seed(seed, {kWgTag, 0x1u, i}));
        all.row(static_cast<Eigen::Index>(i)) =
            sim->summarize(sim->simulate(theta0_natural, n, r)).transpose();
    });

    std::vector<int> order(M);
    for (int i = 0; i < M; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(derive_seed(seed, {kWgTag, 0x2u}));
    for (int i = M - 1; i > 0; --i) {
        auto j = static_cast<int>(shuffle_rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    int n_train = static_cast<int>(std::floor(config.wg.split_train * M));
    int n_val = static_cast<int>(std::floor(config.wg.split_val * M));
    int n_test = M - n_train - n_val;
    require(n_train >= 2 && n_val >= 1 && n_test >= 1, "WG split too small");

    WGCorpus corpus;
    corpus.train.points = Matrix(n_train, d);
    corpus.validation.points = Matrix(n_val, d);
    corpus.test.points = Matrix(n_test, d);
    for (int i = 0; i < n_train; ++i)
        corpus.train.points.row(i) = all.row(order[static_cast<std::size_t>(i)]);
    for (int i = 0; i < n_val; ++i)
        corpus.validation.points.row(i) = all.row(order[static_cast<std::size_t>(n_train + i)]);
    for (int i = 0; i < n_test; ++i)
        corpus.test.points.row(i) = all.row(order[static_cast<std::size_t>(n_train + n_val + i)]);
    return corpus;
}

Vector pilot_theta0(const ExperimentConfig& config, const SummaryVector& s_obs,
                    std::uint64_t seed) {
    auto sim = make_simulator(config.simulator);
    VbConfig vb = config.vb;
    vb.method = VbMethod::Bsl;
    vb.S = config.pilot.S;
    vb.N = config.pilot.N;
    vb.max_iters = config.pilot.max_iters;
    vb.workers = config.workers;
    auto batch = make_batch_fn(*sim, config.obs_n, 1);
    GaussianPrior prior = make_prior(config, sim->param_dim());
    VbResult res = optimize(vb, batch, prior, s_obs, nullptr,
                            derive_seed(seed, {kPilotTag}));
    return sim->constrain(res.state.lambda.mu);
}

namespace {

// Ensure the WG transform (and its corpus/theta0) exists for the replicate.
void ensure_wg(const ExperimentConfig& config, ReplicateArtifacts& art,
               std::uint64_t rep_seed) {
    if (art.wg) return;
    if (!art.theta0) {
        art.theta0 = config.wg.theta0 ? *config.wg.theta0
                                      : pilot_theta0(config, art.s_obs, rep_seed);
    }
    art.corpus = generate_wg_corpus(config, *art.theta0, rep_seed);
    art.wg = train_wg(art.corpus->train, art.corpus->validation, config.wg.flow,
                      derive_seed(rep_seed, {kWgTag, 0x3u}));
}

}  // namespace

RunResult run_method(const std::string& method, const ExperimentConfig& config,
                     ReplicateArtifacts& artifacts, int replicate) {
    RunResult result;
    result.method = method;
    result.replicate = replicate;
    MethodSpec spec = parse_method(method);
    std::uint64_t rep_seed =
        derive_seed(config.seed, {static_cast<std::uint64_t>(replicate)});
    result.seed = derive_seed(rep_seed, {kMethodTag, fnv1a_hash(method.data(), method.size())});

    auto start = std::chrono::steady_clock::now();
    try {
        auto sim = make_simulator(config.simulator);
        GaussianPrior prior = make_prior(config, sim->param_dim());
        if (spec.wg) ensure_wg(config, artifacts, rep_seed);
        const WGTransform* wg = spec.wg ? &*artifacts.wg : nullptr;

        if (spec.vb) {
            VbConfig vb = config.vb;
            vb.method = spec.robust ? VbMethod::RbslMean : VbMethod::Bsl;
            vb.workers = config.workers;
            auto batch = make_batch_fn(*sim, config.obs_n, 1);
            VbResult res =
                optimize(vb, batch, prior, artifacts.s_obs, wg, result.seed);
            artifacts.last_vb_trace = res.trace;
            vb_posterior_moments(*sim, res.state.lambda, result.seed,
                                 result.posterior_mean, result.posterior_cov);
        } else {
            McmcConfig mc;
            mc.iterations = config.mcmc.iterations;
            mc.N = config.mcmc.N;
            mc.method = spec.variance_adjusted ? SlMethod::RbslVariance
                        : spec.robust          ? SlMethod::RbslMean
                                               : SlMethod::Bsl;
            mc.gamma_prior = config.mcmc.gamma_prior;
            mc.adapt_iterations = config.mcmc.adapt_iterations;
            const auto width =
                sim->param_dim() + (spec.robust ? sim->summary_dim() : 0);
            mc.proposal_scale = Vector::Constant(width, config.mcmc.scale);
            auto batch = make_batch_fn(*sim, config.obs_n, config.workers);
            Vector init = sim->unconstrain(config.theta_true.size() > 0 &&
                                                   artifacts.theta0
                                               ? *artifacts.theta0
                                               : config.theta_true);
            Chain chain = run_mcmc(mc, batch, prior, artifacts.s_obs, wg, init,
                                   result.seed);
            chain_posterior_moments(*sim, chain, config.mcmc.burnin_frac,
                                    result.posterior_mean, result.posterior_cov);
            artifacts.last_chain = std::move(chain);
        }

        result.mse = (config.theta_true - result.posterior_mean).norm();
        result.mahalanobis = mahalanobis_distance(config.theta_true,
                                                  result.posterior_mean,
                                                  result.posterior_cov);
        require(std::isfinite(result.mse) && std::isfinite(result.mahalanobis),
                "non-finite metrics");
    } catch (const std::exception& e) {
        result.failed = true;
        result.error = e.what();
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

namespace {

std::string csv_vector(const Vector& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out += ',';
        out += format_double(v[i]);
    }
    return out;
}

void write_vb_trace(const std::string& path, const std::vector<VbTraceRow>& trace) {
    std::ostringstream os;
    os << "iteration,lb,smoothed_lb,alpha_t,patience,cv_norm,lambda_hash\n";
    for (const auto& row : trace)
        os << row.iteration << ',' << format_double(row.lb) << ','
           << format_double(row.smoothed_lb) << ',' << format_double(row.alpha)
           << ',' << row.patience << ',' << format_double(row.cv_norm) << ','
           << row.lambda_hash << '\n';
    write_text_file(path, os.str());
}

void write_chain(const std::string& path, const Chain& chain) {
    std::ostringstream os;
    os << "iteration";
    for (Eigen::Index i = 0; i < chain.p; ++i) os << ",theta" << i;
    for (Eigen::Index i = chain.p; i < chain.states.cols(); ++i)
        os << ",gamma" << (i - chain.p);
    os << ",loglik,accepted\n";
    for (Eigen::Index t = 0; t < chain.states.rows(); ++t) {
        os << t;
        for (Eigen::Index c = 0; c < chain.states.cols(); ++c)
            os << ',' << format_double(chain.states(t, c));
        os << ',' << format_double(chain.loglik[static_cast<std::size_t>(t)]) << ','
           << static_cast<int>(chain.accepted[static_cast<std::size_t>(t)]) << '\n';
    }
    write_text_file(path, os.str());
}

void write_cloud(const std::string& path, const ParticleCloud& cloud) {
    std::ostringstream os;
    for (Eigen::Index j = 0; j < cloud.dim(); ++j) os << (j ? "," : "") << 's' << j;
    os << '\n';
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        for (Eigen::Index j = 0; j < cloud.dim(); ++j)
            os << (j ? "," : "") << format_double(cloud.points(i, j));
        os << '\n';
    }
    write_text_file(path, os.str());
}

// Marginal posterior density grids from the natural-space Gaussian summary.
void write_posterior_grid(const std::string& path, const Vector& mean,
                          const Matrix& cov) {
    std::ostringstream os;
    os << "param,value,density\n";
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
        double sd = std::sqrt(std::max(cov(j, j), 1e-300));
        for (int g = 0; g <= 100; ++g) {
            double x = mean[j] + (g / 50.0 - 1.0) * 4.0 * sd;
            double z = (x - mean[j]) / sd;
            double dens = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * 3.14159265358979323846));
            os << j << ',' << format_double(x) << ',' << format_double(dens) << '\n';
        }
    }
    write_text_file(path, os.str());
}

}  // namespace

bool replicate_and_report(const ExperimentConfig& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    SummaryVector s_obs = observed_summary(config);

    std::ostringstream results;
    results << "method,replicate,seed,status,mse,mahalanobis";
    {
        auto sim = make_simulator(config.simulator);
        for (int j = 0; j < sim->param_dim(); ++j) results << ",theta_hat" << j;
    }
    results << '\n';

    std::ostringstream timings;
    timings << "method,replicate,seconds\n";

    std::map<std::string, std::vector<RunResult>> by_method;
    bool all_ok = true;

    for (int rep = 0; rep < config.replicates; ++rep) {
        ReplicateArtifacts art;
        art.s_obs = s_obs;
        for (const auto& method : config.methods) {
            RunResult res = run_method(method, config, art, rep);
            all_ok = all_ok && !res.failed;
            by_method[method].push_back(res);

            results << method << ',' << rep << ',' << res.seed << ','
                    << (res.failed ? "failed" : "ok") << ','
                    << (res.failed ? "" : format_double(res.mse)) << ','
                    << (res.failed ? "" : format_double(res.mahalanobis));
            if (res.failed) {
                auto sim = make_simulator(config.simulator);
                for (int j = 0; j < sim->param_dim(); ++j) results << ',';
            } else {
                results << csv_vector(res.posterior_mean);
            }
            results << '\n';
            timings << method << ',' << rep << ',' << format_double(res.seconds) << '\n';

            std::string stem = method + "_r" + std::to_string(rep);
            if (!res.failed) {
                MethodSpec spec = parse_method(method);
                if (spec.vb)
                    write_vb_trace(path("vb_trace_" + stem + ".csv"), art.last_vb_trace);
                else if (art.last_chain)
                    write_chain(path("chain_" + stem + ".csv"), *art.last_chain);
                write_posterior_grid(path("posterior_" + stem + ".csv"),
                                     res.posterior_mean, res.posterior_cov);
            } else {
                write_text_file(path("error_" + stem + ".txt"), res.error + "\n");
            }
        }
        if (art.wg) {
            std::string rep_tag = "r" + std::to_string(rep);
            save_wg(*art.wg, path("wg_" + rep_tag + ".txt"));
            write_cloud(path("wg_cloud_raw_" + rep_tag + ".csv"), art.corpus->test);
            ParticleCloud transformed = apply(*art.wg, art.corpus->test);
            write_cloud(path("wg_cloud_transformed_" + rep_tag + ".csv"), transformed);
            MardiaStats before = mardia(art.corpus->test.points);
            MardiaStats after = mardia(transformed.points);
            std::ostringstream os;
            os << "cloud,mardia_skewness,mardia_kurtosis_excess\n"
               << "raw," << format_double(before.skewness) << ','
               << format_double(before.kurtosis_excess) << '\n'
               << "transformed," << format_double(after.skewness) << ','
               << format_double(after.kurtosis_excess) << '\n';
            write_text_file(path("wg_mardia_" + rep_tag + ".csv"), os.str());
        }
    }

    write_text_file(path("results.csv"), results.str());
    write_text_file(path("timings.txt"), timings.str());

    // aggregate over successful replicates, count disclosed
    std::ostringstream agg;
    agg << "method,n_success,mean_mse,sd_mse,mean_md,sd_md,single_replicate\n";
    for (const auto& method : config.methods) {
        const auto& runs = by_method[method];
        std::vector<double> mses, mds;
        for (const auto& r : runs)
            if (!r.failed) {
                mses.push_back(r.mse);
                mds.push_back(r.mahalanobis);
            }
        auto mean_sd = [](const std::vector<double>& xs) {
            if (xs.empty()) return std::pair<double, double>{0.0, 0.0};
            double m = 0.0;
            for (double x : xs) m += x;
            m /= static_cast<double>(xs.size());
            double s = 0.0;
            for (double x : xs) s += (x - m) * (x - m);
            s = xs.size() > 1 ? std::sqrt(s / (static_cast<double>(xs.size()) - 1.0)) : 0.0;
            return std::pair<double, double>{m, s};
        };
        auto [mm, sm] = mean_sd(mses);
        auto [md, sd] = mean_sd(mds);
        agg << method << ',' << mses.size() << ',' << format_double(mm) << ','
            << format_double(sm) << ',' << format_double(md) << ','
            << format_double(sd) << ',' << (mses.size() == 1 ? 1 : 0) << '\n';
    }
    write_text_file(path("aggregate.csv"), agg.str());

    {
        std::ostringstream echo;
        echo << "simulator = " << config.simulator << '\n'
             << "theta_true =" << [&] {
                    std::string s;
                    for (Eigen::Index i = 0; i < config.theta_true.size(); ++i)
                        s += " " + format_double(config.theta_true[i]);
                    return s;
                }() << '\n'
             << "seed = " << config.seed << '\n'
             << "obs_seed = " << config.obs_seed << '\n'
             << "replicates = " << config.replicates << '\n';
        write_text_file(path("config_echo.txt"), echo.str());
    }

    // manifest with content hashes, written last
    std::ostringstream manifest;
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (entry.path().filename() == "manifest.txt") continue;
        names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names)
        manifest << name << ' ' << fs::file_size(fs::path(out_dir) / name) << ' '
                 << file_fnv1a((fs::path(out_dir) / name).string()) << '\n';
    write_text_file(path("manifest.txt"), manifest.str());

    return all_ok;
}

}  // namespace bslwg
