// randscat: sample | forward | invert | stats | verify | pipeline
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
// 3 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "randscat/experiment.hpp"
#include "randscat/io.hpp"

namespace fs = std::filesystem;
using namespace randscat;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitVerification = 3;

struct Options {
  std::string config_path;
  std::string preset;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool repair = false;
  bool check_reciprocity = false;
  bool oracle = false;
  std::vector<std::string> only;
};

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    json j = io::read_json(o.config_path);
    if (!o.preset.empty()) j["preset"] = o.preset;
    c = config_from_json(j);
  } else if (!o.preset.empty()) {
    c = preset(o.preset);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.repair) c.repair = true;
  c.validate();
  return c;
}

void log(const std::string& msg) { std::fprintf(stderr, "[randscat] %s\n", msg.c_str()); }

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& c,
                    const std::vector<std::uint64_t>& sample_seeds) {
  io::write_json(dir / ("manifest_" + command + ".json"),
                 json{{"version", kToolkitVersion},
                      {"command", command},
                      {"config", to_json(c)},
                      {"seeds", {{"base", c.seed}, {"noise", noise_seed(c)}, {"samples", sample_seeds}}}});
}

std::vector<std::uint64_t> seeds_of(const std::vector<BoundarySample>& samples) {
  std::vector<std::uint64_t> out;
  for (const auto& s : samples) out.push_back(s.seed);
  return out;
}

// ---- stages writing to disk

std::vector<BoundarySample> stage_sample(const ExperimentConfig& c, const fs::path& out) {
  const auto model = covariance_model(c);
  const auto basis = kl_basis(c);
  io::write_json(out / "covariance.json", io::to_json(model));
  io::write_spectrum_csv(out / "spectrum.csv", model);
  io::write_boundary_csv(out / "baseline_boundary.csv", discretize(c.baseline, Eigen::Vector2d::Zero(), c.n_theta));
  const auto samples = draw_samples(c, basis);
  for (const auto& s : samples) io::write_sample(out / "samples", s, basis);
  write_manifest(out, "sample", c, seeds_of(samples));
  log("wrote " + std::to_string(samples.size()) + " samples (N_KL = " + std::to_string(basis.n_modes) + ")");
  return samples;
}

std::vector<BoundarySample> load_samples(const ExperimentConfig& c, const fs::path& out) {
  if (!fs::exists(out / "samples")) return stage_sample(c, out);
  std::vector<BoundarySample> samples;
  for (int id = 1; id <= c.n_samples; ++id) samples.push_back(io::read_sample(out / "samples", id));
  return samples;
}

/// Max reciprocity residual over the wavenumbers for the first sample.
double reciprocity_spot_check(const ExperimentConfig& c, const BoundarySample& s) {
  const auto bd = discretize(s.params, s.center, c.data_nodes);
  const auto obs = observation_angles(std::min(c.n_obs, 16));
  double worst = 0.0;
  for (double k : c.wavenumbers)
    worst = std::max(worst, reciprocity_residual(bd, k, c.inversion.forward.coupling_ratio * k, c.incident_dir, obs));
  return worst;
}

FarFieldDataset stage_forward(const ExperimentConfig& c, const fs::path& out, int workers, bool check_reciprocity,
                              bool* reciprocity_failed) {
  const auto samples = load_samples(c, out);
  if (check_reciprocity && !samples.empty()) {
    const double r = reciprocity_spot_check(c, samples.front());
    log("reciprocity residual (sample " + std::to_string(samples.front().realization_id) + "): " + io::fmt(r));
    if (r > 1e-6) *reciprocity_failed = true;
  }
  const auto ds = simulate(c, samples, workers);
  io::write_dataset(out / "dataset", ds);
  write_manifest(out, "forward", c, seeds_of(samples));
  log("wrote far fields for " + std::to_string(ds.n_samples()) + " samples x " +
      std::to_string(ds.wavenumbers.size()) + " wavenumbers");
  return ds;
}

FarFieldDataset load_dataset(const ExperimentConfig& c, const fs::path& out, int workers) {
  if (!fs::exists(out / "dataset" / "manifest.json")) {
    bool unused = false;
    return stage_forward(c, out, workers, false, &unused);
  }
  return io::read_dataset(out / "dataset");
}

StageOneResult stage_invert(const ExperimentConfig& c, const fs::path& out, int workers) {
  const auto ds = load_dataset(c, out, workers);
  const auto r = run_stage_one(c, ds, workers);
  for (const auto& rec : r.records) {
    io::write_json(out / "records" / ("record_" + std::to_string(rec.realization_id) + ".json"), io::to_json(rec));
    if (!rec.ok) log("realization " + std::to_string(rec.realization_id) + " failed: " + rec.failure);
  }
  std::vector<int> accepted;
  for (auto s : r.accepted) accepted.push_back(r.records[s].realization_id);
  std::vector<int> repaired;
  for (auto s : r.repaired)
    if (r.records[s].repaired) repaired.push_back(r.records[s].realization_id);
  io::write_json(out / "qc.json", json{{"q_eta", c.q_eta}, {"q_g", c.q_g}, {"accepted", accepted}, {"repaired", repaired}});
  io::write_mean_shape_csv(out / "mean_shape.csv", r.mean);
  io::write_json(out / "mean_shape.json", io::to_json(r.mean.params));
  write_manifest(out, "invert", c, ds.sample_seeds);
  log("QC accepted " + std::to_string(r.accepted.size()) + " of " + std::to_string(r.records.size()) +
      "; mean a0 = " + io::fmt(r.mean.params.coefficients[0]));
  return r;
}

std::vector<int> dataset_ids(const fs::path& out) {
  return io::read_json(out / "dataset" / "manifest.json").at("realization_ids").get<std::vector<int>>();
}

/// Grouped eigenvalues for plotting, as many as the spectrum allows (<= 15).
std::vector<double> grouped_for_plot(const StatsEstimate& e) {
  const int n = std::min<int>(15, static_cast<int>((e.lambda_rec.size() + 1) / 2));
  return group_pairs(e.lambda_rec, n);
}

StatsEstimate stage_stats(const ExperimentConfig& c, const fs::path& out, int workers, bool oracle) {
  if (!fs::exists(out / "records")) stage_invert(c, out, workers);
  std::vector<InversionRecord> records;
  for (int id : dataset_ids(out))
    records.push_back(io::record_from_json(io::read_json(out / "records" / ("record_" + std::to_string(id) + ".json"))));
  const auto accepted = screen(c, records);
  std::vector<std::vector<double>> rec;
  std::vector<std::vector<double>> truth;
  for (auto s : accepted) {
    rec.push_back(radius_on_grid(records[s].p_final, c.n_theta));
    truth.push_back(io::read_sample(out / "samples", records[s].realization_id).radius);
  }
  const auto est_rec = run_stage_two(c, rec);
  const auto est_true = run_stage_two(c, truth);
  const auto& est = oracle ? est_true : est_rec;
  const auto model = covariance_model(c);
  io::write_json(out / (oracle ? "stats_oracle.json" : "stats.json"), io::to_json(est, model_spectrum(c, c.n_kl_fit)));
  io::write_comparison_csv(out / "comparison.csv", model.lambda, grouped_for_plot(est_true), grouped_for_plot(est_rec));
  write_manifest(out, "stats", c, {});
  log(std::string(oracle ? "oracle " : "") + "estimate from " + std::to_string(est.n_samples_used) +
      " samples: sigma = " + io::fmt(est.sigma_est) + ", ell = " + io::fmt(est.ell_est));
  return est;
}

// ---- verify

std::vector<CheckReport> run_checks(const std::vector<std::string>& only) {
  auto wanted = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  std::vector<CheckReport> reports;
  if (wanted("psd")) reports.push_back(check_psd_equivalence(1.0, 0.5));
  if (wanted("asymptotic"))
    for (double s : {0.05, 0.08})
      for (double l : {0.5, 0.7, 1.0}) reports.push_back(check_asymptotic_relation(s, l));
  if (wanted("weyl")) reports.push_back(check_weyl(50, 100, 1));
  if (wanted("perturbation")) {
    // true KL fluctuations against a noisy copy of themselves
    const auto basis = build_basis(CovarianceModel::build(0.05, 1.0));
    const auto grid = uniform_grid(200);
    Eigen::MatrixXd x(200, 40), e(200, 40);
    for (int s = 0; s < 40; ++s) {
      const auto v = sample_fluctuation(basis, grid, derive_seed(1, static_cast<std::uint64_t>(s) + 1));
      const auto w = sample_fluctuation(basis, grid, derive_seed(2, static_cast<std::uint64_t>(s) + 1));
      for (int i = 0; i < 200; ++i) {
        x(i, s) = v[static_cast<std::size_t>(i)];
        e(i, s) = 0.2 * w[static_cast<std::size_t>(i)];
      }
    }
    reports.push_back(check_covariance_perturbation(x, x + e));
  }
  if (wanted("fit")) reports.push_back(check_fit_stability(4, {0.0, 1e-7, 1e-6, 1e-5, 4e-5, 1e-4}));
  return reports;
}

int print_reports(const std::vector<CheckReport>& reports, const fs::path& jsonl) {
  bool failed = false;
  std::printf("%-24s %-5s %14s %14s %14s\n", "check", "state", "measured", "bound", "margin");
  for (const auto& r : reports) {
    std::printf("%-24s %-5s %14.6e %14.6e %14.6e  %s\n", r.name.c_str(), to_string(r.status), r.measured, r.bound,
                r.margin, r.note.c_str());
    failed = failed || r.status == CheckStatus::Fail;
  }
  auto out = io::open_out(jsonl);
  for (const auto& r : reports) out << io::to_json(r).dump() << '\n';
  return failed ? kExitVerification : 0;
}

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::Io ? kExitUsage : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random star-shaped scatterers: synthetic data, two-stage inversion and checks"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "experiment preset");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* sample = app.add_subcommand("sample", "draw random boundaries");
  auto* forward = app.add_subcommand("forward", "synthesize far-field data");
  auto* invert = app.add_subcommand("invert", "first stage: per-sample shape reconstruction");
  auto* stats = app.add_subcommand("stats", "second stage: covariance hyperparameters");
  auto* verify = app.add_subcommand("verify", "numerical checks of the theory");
  auto* pipeline = app.add_subcommand("pipeline", "all stages");
  for (auto* sub : {sample, forward, invert, stats, pipeline}) common(sub);
  forward->add_flag("--check-reciprocity", o.check_reciprocity, "spot-check reciprocity, fail above 1e-6");
  pipeline->add_flag("--check-reciprocity", o.check_reciprocity, "spot-check reciprocity, fail above 1e-6");
  invert->add_flag("--repair", o.repair, "re-run QC outliers with alpha_repair");
  pipeline->add_flag("--repair", o.repair, "re-run QC outliers with alpha_repair");
  stats->add_flag("--oracle-fluctuations", o.oracle, "estimate from the true fluctuations");
  verify->add_option("--only", o.only, "checks to run: psd, asymptotic, weyl, perturbation, fit")
      ->check(CLI::IsMember({"psd", "asymptotic", "weyl", "perturbation", "fit"}));
  verify->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const fs::path out = o.out;
    if (*verify) return print_reports(run_checks(o.only), out / "verify.jsonl");
    const auto cfg = load_config(o);
    if (*sample) stage_sample(cfg, out);
    if (*forward) {
      bool bad = false;
      stage_forward(cfg, out, o.workers, o.check_reciprocity, &bad);
      if (bad) return kExitVerification;
    }
    if (*invert) stage_invert(cfg, out, o.workers);
    if (*stats) stage_stats(cfg, out, o.workers, o.oracle);
    if (*pipeline) {
      bool bad = false;
      const auto samples = stage_sample(cfg, out);
      stage_forward(cfg, out, o.workers, o.check_reciprocity, &bad);
      stage_invert(cfg, out, o.workers);
      stage_stats(cfg, out, o.workers, false);
      write_manifest(out, "pipeline", cfg, seeds_of(samples));
      if (bad) return kExitVerification;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return 0;
}
