#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bslwg/common.hpp"
#include "bslwg/mcmc.hpp"
#include "bslwg/simulators.hpp"
#include "bslwg/vb.hpp"
#include "bslwg/wg_flow.hpp"

namespace bslwg {

struct WgSettings {
    int M = 5000;              // summary corpus size
    int dataset_size = 0;      // 0: use the observed dataset size
    double split_train = 1.0 / 3.0;
    double split_val = 1.0 / 3.0;
    WGConfig flow;
    std::optional<Vector> theta0;  // natural space; empty -> pilot VB-BSL run
};

struct PilotSettings {
    int max_iters = 200;
    int S = 100;
    int N = 100;
};

struct McmcSettings {
    int iterations = 20000;
    int N = 200;
    double scale = 0.1;
    int adapt_iterations = 2000;
    GammaPrior gamma_prior{GammaPriorKind::Laplace, 0.5};
    double burnin_frac = 0.25;
};

struct ExperimentConfig {
    std::string simulator = "toy";
    Vector theta_true;         // natural space
    int obs_n = 30;            // observed dataset size (number of toads for toads)
    std::uint64_t obs_seed = 1;
    double prior_mean = 0.0;   // isotropic working-space prior
    double prior_var = 100.0;
    std::vector<std::string> methods = {"vb-bsl", "vb-rbsl-wg"};
    int replicates = 10;
    std::uint64_t seed = 1;
    int workers = 1;
    WgSettings wg;
    PilotSettings pilot;
    VbConfig vb;
    McmcSettings mcmc;
};

/// Parse the documented key=value config format ('#' comments allowed).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string config_schema();

struct RunResult {
    std::string method;
    int replicate = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    Vector posterior_mean;     // natural space
    Matrix posterior_cov;
    double mse = 0.0;          // ||theta_true - theta_hat||_2
    double mahalanobis = 0.0;
    double seconds = 0.0;
};

struct WGCorpus {
    ParticleCloud train;
    ParticleCloud validation;
    ParticleCloud test;
};

/// Simulate M summaries at theta0 and split with a seeded shuffle. Sizes are
/// floor(M*f_train), floor(M*f_val) and the remainder.
WGCorpus generate_wg_corpus(const ExperimentConfig& config, const Vector& theta0_natural,
                            std::uint64_t seed);

/// Shared per-replicate artifacts (the WG transform is trained once per
/// replicate and reused by every -wg method).
struct ReplicateArtifacts {
    SummaryVector s_obs;
    std::optional<WGTransform> wg;
    std::optional<WGCorpus> corpus;
    std::optional<Vector> theta0;  // natural space
    std::vector<VbTraceRow> last_vb_trace;
    std::optional<Chain> last_chain;
};

/// Execute one method pipeline end to end for one replicate.
RunResult run_method(const std::string& method, const ExperimentConfig& config,
                     ReplicateArtifacts& artifacts, int replicate);

/// Short VB-BSL run used to locate the WG training center theta0.
Vector pilot_theta0(const ExperimentConfig& config, const SummaryVector& s_obs,
                    std::uint64_t seed);

/// Run all replicates of all configured methods and write the report files
/// (per-replicate CSV, aggregate table, traces, clouds, manifest) into
/// out_dir. Returns false if any replicate failed.
bool replicate_and_report(const ExperimentConfig& config, const std::string& out_dir);

/// Observed summary statistics for the configured experiment.
SummaryVector observed_summary(const ExperimentConfig& config);

/// sqrt((a-b)^T Cov^{-1} (a-b)).
double mahalanobis_distance(const Vector& a, const Vector& b, const Matrix& cov);

std::string format_double(double v);  // "%.17g", frozen for all CSV output
std::uint64_t file_fnv1a(const std::string& path);

}  // namespace bslwg
