#pragma once

// End-to-end experiment: presets for the circle, pear and flower studies,
// JSON configuration, and the staged pipeline (sample -> forward -> invert ->
// stats) that the CLI exposes one stage at a time.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "randscat/covariance.hpp"
#include "randscat/diagnostics.hpp"
#include "randscat/forward.hpp"
#include "randscat/gp_model.hpp"
#include "randscat/stage1.hpp"
#include "randscat/stage2.hpp"

namespace randscat {

inline constexpr const char* kToolkitVersion = "1.0.0";

struct ExperimentConfig {
  std::string preset = "circle-case1";
  RadiusParams baseline = RadiusParams::circle(1.0);
  double sigma = 0.05;
  double ell = 1.0;
  int n_samples = 20;
  int n_theta = 400;
  int n_obs = 200;
  std::vector<double> wavenumbers{1, 2, 3, 4, 5, 6, 7, 8};
  double delta = 0.05;
  Eigen::Vector2d incident_dir{-1.0, 0.0};
  int data_nodes = 128;  // forward grid for synthetic data
  InversionConfig inversion;
  int n_kl_fit = 4;
  bool grouped_fit = true;
  double q_eta = 0.85;
  double q_g = 0.90;
  bool repair = false;
  double kl_threshold = 1e-6;
  int n_coeff = 50;
  int n_quad = 400;
  std::uint64_t seed = 1;

  /// Inversion settings with the shared angular grid filled in.
  InversionConfig stage_one() const {
    InversionConfig c = inversion;
    c.n_theta = n_theta;
    return c;
  }

  void validate() const {
    if (!(sigma >= 0.0) || !(ell > 0.0)) fail(ErrorKind::InvalidArgument, "need sigma >= 0 and ell > 0");
    if (n_samples < 1 || n_obs < 1) fail(ErrorKind::InvalidArgument, "n_samples and n_obs must be positive");
    if (n_theta < 16 || n_theta % 2 != 0) fail(ErrorKind::InvalidArgument, "n_theta must be even and >= 16");
    if (data_nodes < 16 || data_nodes % 2 != 0) fail(ErrorKind::InvalidArgument, "data_nodes must be even and >= 16");
    if (!(delta >= 0.0)) fail(ErrorKind::InvalidArgument, "delta must be nonnegative");
    if (!(q_eta > 0.0 && q_eta <= 1.0 && q_g > 0.0 && q_g <= 1.0))
      fail(ErrorKind::InvalidArgument, "QC quantiles must lie in (0, 1]");
    if (n_kl_fit < 1) fail(ErrorKind::InvalidArgument, "n_kl_fit must be positive");
    validate_dataset_axes(wavenumbers, {0.0}, incident_dir);
    require_positive(baseline, std::max(n_theta, 400));
    stage_one().validate();
  }
};

inline std::vector<std::string> preset_names() {
  return {"circle-case1", "circle-case2", "circle-reduced", "pear-case1", "pear-case2", "flower", "flower-refined"};
}

inline RadiusParams pear_radius() { return RadiusParams({1.5, 0, 0, 0, 0, 0, 0.3}); }

/// 2 (1 + 0.2 cos 9 theta).
inline RadiusParams flower_radius() {
  RadiusParams p = RadiusParams::circle(2.0, 9);
  p.a(9) = 0.4;
  return p;
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "circle-case1") return c;
  if (name == "circle-case2") {
    c.sigma = 0.08;
    c.ell = 0.7;
    return c;
  }
  if (name == "circle-reduced") {
    c.n_obs = 100;
    c.n_theta = 200;
    return c;
  }
  if (name == "pear-case1" || name == "pear-case2") {
    c.baseline = pear_radius();
    if (name == "pear-case2") {
      c.sigma = 0.08;
      c.ell = 0.8;
    }
    return c;
  }
  if (name == "flower" || name == "flower-refined") {
    c.baseline = flower_radius();
    c.data_nodes = 256;
    c.inversion.forward.n_nodes = 128;
    c.inversion.order = 10;
    c.inversion.alpha = 0.5;
    c.inversion.initial_radius = 2.0;
    if (name == "flower-refined") {
      c.n_samples = 60;
      c.wavenumbers.clear();
      for (int k = 1; k <= 20; ++k) c.wavenumbers.push_back(k);
      c.data_nodes = 512;
      c.inversion.forward.n_nodes = 256;
      c.inversion.order = 14;
      c.inversion.alpha = 0.8;
    }
    return c;
  }
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  fail(ErrorKind::InvalidArgument, "unknown preset '" + name + "' (known: " + known + ")");
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& i = c.inversion;
  return {{"preset", c.preset},
          {"baseline", c.baseline.coefficients},
          {"sigma", c.sigma},
          {"ell", c.ell},
          {"n_samples", c.n_samples},
          {"n_theta", c.n_theta},
          {"n_obs", c.n_obs},
          {"wavenumbers", c.wavenumbers},
          {"delta", c.delta},
          {"incident_dir", {c.incident_dir.x(), c.incident_dir.y()}},
          {"data_nodes", c.data_nodes},
          {"inversion",
           {{"gamma", i.gamma},
            {"alpha", i.alpha},
            {"alpha_repair", i.alpha_repair},
            {"eps_fd", i.eps_fd},
            {"tol", i.tol},
            {"max_iter_low", i.max_iter_low},
            {"max_iter_per_freq", i.max_iter_per_freq},
            {"order", i.order},
            {"initial_radius", i.initial_radius},
            {"m_last", i.m_last},
            {"ill_conditioned", i.ill_conditioned},
            {"forward_nodes", i.forward.n_nodes},
            {"coupling_ratio", i.forward.coupling_ratio}}},
          {"n_kl_fit", c.n_kl_fit},
          {"grouped_fit", c.grouped_fit},
          {"q_eta", c.q_eta},
          {"q_g", c.q_g},
          {"repair", c.repair},
          {"kl_threshold", c.kl_threshold},
          {"n_coeff", c.n_coeff},
          {"n_quad", c.n_quad},
          {"seed", c.seed}};
}

/// Starts from j["preset"] (or circle-case1) and overrides every key present.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c = preset(j.value("preset", std::string("circle-case1")));
    if (j.contains("baseline")) c.baseline = RadiusParams(j.at("baseline").get<std::vector<double>>());
    c.sigma = j.value("sigma", c.sigma);
    c.ell = j.value("ell", c.ell);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.n_theta = j.value("n_theta", c.n_theta);
    c.n_obs = j.value("n_obs", c.n_obs);
    c.wavenumbers = j.value("wavenumbers", c.wavenumbers);
    c.delta = j.value("delta", c.delta);
    if (j.contains("incident_dir")) {
      const auto d = j.at("incident_dir").get<std::vector<double>>();
      if (d.size() != 2) fail(ErrorKind::InvalidArgument, "incident_dir needs two entries");
      c.incident_dir = {d[0], d[1]};
    }
    c.data_nodes = j.value("data_nodes", c.data_nodes);
    if (j.contains("inversion")) {
      const auto& v = j.at("inversion");
      auto& i = c.inversion;
      i.gamma = v.value("gamma", i.gamma);
      i.alpha = v.value("alpha", i.alpha);
      i.alpha_repair = v.value("alpha_repair", i.alpha_repair);
      i.eps_fd = v.value("eps_fd", i.eps_fd);
      i.tol = v.value("tol", i.tol);
      i.max_iter_low = v.value("max_iter_low", i.max_iter_low);
      i.max_iter_per_freq = v.value("max_iter_per_freq", i.max_iter_per_freq);
      i.order = v.value("order", i.order);
      i.initial_radius = v.value("initial_radius", i.initial_radius);
      i.m_last = v.value("m_last", i.m_last);
      i.ill_conditioned = v.value("ill_conditioned", i.ill_conditioned);
      i.forward.n_nodes = v.value("forward_nodes", i.forward.n_nodes);
      i.forward.coupling_ratio = v.value("coupling_ratio", i.forward.coupling_ratio);
    }
    c.n_kl_fit = j.value("n_kl_fit", c.n_kl_fit);
    c.grouped_fit = j.value("grouped_fit", c.grouped_fit);
    c.q_eta = j.value("q_eta", c.q_eta);
    c.q_g = j.value("q_g", c.q_g);
    c.repair = j.value("repair", c.repair);
    c.kl_threshold = j.value("kl_threshold", c.kl_threshold);
    c.n_coeff = j.value("n_coeff", c.n_coeff);
    c.n_quad = j.value("n_quad", c.n_quad);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
}

// ---- stages

inline CovarianceModel covariance_model(const ExperimentConfig& c) {
  return CovarianceModel::build(c.sigma, c.ell, c.n_coeff, c.n_quad);
}

/// sigma = 0 gives the zero-variance basis (one constant mode with lambda 0),
/// so every sample equals the baseline.
inline KLBasis kl_basis(const ExperimentConfig& c) {
  if (c.sigma == 0.0) {
    KLBasis b;
    b.lambda = {0.0};
    b.truncation_threshold = c.kl_threshold;
    return b;
  }
  return build_basis(covariance_model(c), c.kl_threshold);
}

/// Realization ids run 1..N_s; sample s uses stream s of the base seed, the
/// noise uses stream 0.
inline std::uint64_t sample_seed(const ExperimentConfig& c, int realization_id) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(realization_id));
}

inline std::uint64_t noise_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 0); }

/// All samples; NonPositiveRadius lists every offending seed.
inline std::vector<BoundarySample> draw_samples(const ExperimentConfig& c, const KLBasis& basis) {
  std::vector<BoundarySample> out;
  std::string rejected;
  for (int id = 1; id <= c.n_samples; ++id) {
    const auto seed = sample_seed(c, id);
    try {
      out.push_back(sample_boundary(c.baseline, basis, Eigen::Vector2d::Zero(), c.n_theta, seed, id));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonPositiveRadius) throw;
      rejected += (rejected.empty() ? "" : ", ") + std::to_string(id) + " (seed " + std::to_string(seed) + ")";
    }
  }
  if (!rejected.empty()) fail(ErrorKind::NonPositiveRadius, "nonpositive radius in realizations " + rejected);
  return out;
}

inline FarFieldDataset simulate(const ExperimentConfig& c, const std::vector<BoundarySample>& samples,
                                int workers = 1) {
  return generate_dataset(samples, c.wavenumbers, observation_angles(c.n_obs), c.incident_dir, c.delta,
                          noise_seed(c), ForwardConfig{c.data_nodes, c.inversion.forward.coupling_ratio}, workers);
}

struct StageOneResult {
  std::vector<InversionRecord> records;
  std::vector<std::size_t> accepted;  // indices into records
  std::vector<std::size_t> repaired;  // indices re-run at alpha_repair
  MeanShape mean;
};

/// QC screen, or every successful record when there are too few to screen.
inline std::vector<std::size_t> screen(const ExperimentConfig& c, const std::vector<InversionRecord>& records) {
  if (records.size() >= 3) return qc_screen(records, c.q_eta, c.q_g);
  std::vector<std::size_t> ok;
  for (std::size_t s = 0; s < records.size(); ++s)
    if (records[s].ok) ok.push_back(s);
  if (ok.empty()) fail(ErrorKind::AllRejected, "every inversion failed");
  return ok;
}

/// Inversion of every realization, optional repair of QC outliers, QC screen
/// and mean shape over the accepted set.
inline StageOneResult run_stage_one(const ExperimentConfig& c, const FarFieldDataset& ds, int workers = 1) {
  const auto inv = c.stage_one();
  StageOneResult out;
  out.records = invert_all(ds, inv, workers);
  if (c.repair && out.records.size() >= 3) {
    out.repaired = qc_outliers(out.records, c.q_eta, c.q_g);
    out.records = repair_outliers(ds, std::move(out.records), out.repaired, inv, workers);
  }
  out.accepted = screen(c, out.records);
  out.mean = mean_shape(out.records, out.accepted, c.n_theta);
  return out;
}

inline std::vector<std::vector<double>> reconstructed_radii(const StageOneResult& r, int n_theta) {
  std::vector<std::vector<double>> out;
  for (auto s : r.accepted) out.push_back(radius_on_grid(r.records[s].p_final, n_theta));
  return out;
}

inline StatsEstimate run_stage_two(const ExperimentConfig& c, const std::vector<std::vector<double>>& radii) {
  return estimate_statistics(radii, c.n_kl_fit, c.grouped_fit);
}

/// Model eigenvalues lambda^mod_j for j = 0..n.
inline std::vector<double> model_spectrum(const ExperimentConfig& c, int n) {
  std::vector<double> out;
  for (int j = 0; j <= n; ++j) out.push_back(model_eigenvalue(c.sigma, c.ell, j));
  return out;
}

struct PipelineResult {
  std::vector<BoundarySample> samples;
  FarFieldDataset dataset;
  StageOneResult stage_one;
  StatsEstimate stats;
  StatsEstimate oracle;  // same estimator on the true fluctuations of the accepted samples
  CheckReport perturbation;
  CheckReport log_perturbation;
};

inline PipelineResult run_pipeline(const ExperimentConfig& c, int workers = 1) {
  c.validate();
  PipelineResult r;
  r.samples = draw_samples(c, kl_basis(c));
  r.dataset = simulate(c, r.samples, workers);
  r.stage_one = run_stage_one(c, r.dataset, workers);
  const auto rec = reconstructed_radii(r.stage_one, c.n_theta);
  std::vector<std::vector<double>> truth;
  for (auto s : r.stage_one.accepted) truth.push_back(r.samples[s].radius);
  r.stats = run_stage_two(c, rec);
  r.oracle = run_stage_two(c, truth);
  if (rec.size() >= 2) r.perturbation = check_covariance_perturbation(fluctuation_matrix(truth), fluctuation_matrix(rec));
  r.log_perturbation = check_log_perturbation(r.stats.grouped, model_spectrum(c, c.n_kl_fit));
  return r;
}

}  // namespace randscat
