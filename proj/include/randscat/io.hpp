#pragma once

// On-disk formats. CSV files carry a header row and full round-trip precision;
// JSON goes through nlohmann::json.

#include <json.hpp>

#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "randscat/covariance.hpp"
#include "randscat/diagnostics.hpp"
#include "randscat/forward.hpp"
#include "randscat/geometry.hpp"
#include "randscat/gp_model.hpp"
#include "randscat/stage1.hpp"
#include "randscat/stage2.hpp"

namespace randscat::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

inline void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

/// Rows of a CSV file with a header, as doubles.
inline std::vector<std::vector<double>> read_csv(const fs::path& path, std::vector<std::string>* header = nullptr) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::string line;
  std::vector<std::vector<double>> rows;
  if (!std::getline(in, line)) fail(ErrorKind::Io, path.string() + " is empty");
  if (header) {
    header->clear();
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header->push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorKind::Io, path.string() + ": bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- geometry

inline json to_json(const RadiusParams& p) { return json{{"p", p.coefficients}}; }

inline RadiusParams radius_params_from_json(const json& j) {
  if (!j.contains("p")) fail(ErrorKind::Io, "radius parameters need key \"p\"");
  return RadiusParams(j.at("p").get<std::vector<double>>());
}

inline void write_boundary_csv(const fs::path& path, const BoundaryDiscretization& bd) {
  auto out = open_out(path);
  out << "theta,x,y,nx,ny,jac\n";
  for (int i = 0; i < bd.n_nodes; ++i)
    out << fmt(bd.theta[static_cast<std::size_t>(i)]) << ',' << fmt(bd.points(0, i)) << ',' << fmt(bd.points(1, i))
        << ',' << fmt(bd.normals(0, i)) << ',' << fmt(bd.normals(1, i)) << ','
        << fmt(bd.jacobian[static_cast<std::size_t>(i)]) << '\n';
}

// ---- covariance

inline json to_json(const CovarianceModel& m) {
  return json{{"sigma", m.sigma},     {"ell", m.ell},       {"n_coeff", m.n_coeff}, {"n_quad", m.n_quad},
              {"a_raw", m.a_raw},     {"a_corr", m.a_corr}, {"lambda", m.lambda}};
}

inline void write_spectrum_csv(const fs::path& path, const CovarianceModel& m) {
  auto out = open_out(path);
  out << "j,a_raw,a_corr,lambda,lambda_mod\n";
  for (std::size_t j = 0; j < m.lambda.size(); ++j)
    out << j << ',' << fmt(m.a_raw[j]) << ',' << fmt(m.a_corr[j]) << ',' << fmt(m.lambda[j]) << ','
        << fmt(model_eigenvalue(m.sigma, m.ell, static_cast<double>(j))) << '\n';
}

// ---- samples

inline void write_sample(const fs::path& dir, const BoundarySample& s, const KLBasis& basis) {
  const std::string stem = "sample_" + std::to_string(s.realization_id);
  {
    auto out = open_out(dir / (stem + ".csv"));
    out << "theta,delta_r,radius\n";
    for (std::size_t i = 0; i < s.theta.size(); ++i)
      out << fmt(s.theta[i]) << ',' << fmt(s.delta_r[i]) << ',' << fmt(s.radius[i]) << '\n';
  }
  write_json(dir / (stem + ".json"), json{{"realization_id", s.realization_id},
                                          {"seed", s.seed},
                                          {"xi", s.xi},
                                          {"basis_hash", basis.hash()},
                                          {"center", {s.center.x(), s.center.y()}},
                                          {"p", s.params.coefficients}});
}

/// Reads a sample back from its CSV and sidecar.
inline BoundarySample read_sample(const fs::path& dir, int realization_id) {
  const std::string stem = "sample_" + std::to_string(realization_id);
  const auto side = read_json(dir / (stem + ".json"));
  BoundarySample s;
  s.realization_id = side.at("realization_id").get<int>();
  s.seed = side.at("seed").get<std::uint64_t>();
  s.xi = side.at("xi").get<std::vector<double>>();
  const auto c = side.at("center").get<std::vector<double>>();
  if (c.size() != 2) fail(ErrorKind::Io, "center must have two entries");
  s.center = Eigen::Vector2d(c[0], c[1]);
  s.params = radius_params_from_json(side);
  for (const auto& row : read_csv(dir / (stem + ".csv"))) {
    if (row.size() != 3) fail(ErrorKind::Io, stem + ".csv: expected 3 columns");
    s.theta.push_back(row[0]);
    s.delta_r.push_back(row[1]);
    s.radius.push_back(row[2]);
  }
  return s;
}

// ---- far-field dataset

inline void write_dataset(const fs::path& dir, const FarFieldDataset& ds) {
  for (std::size_t s = 0; s < ds.n_samples(); ++s) {
    auto out = open_out(dir / ("farfield_" + std::to_string(ds.realization_ids[s]) + ".csv"));
    out << "m,k,re_clean,im_clean,re_noisy,im_noisy\n";
    for (std::size_t j = 0; j < ds.wavenumbers.size(); ++j)
      for (Eigen::Index m = 0; m < ds.clean[s][j].size(); ++m)
        out << m << ',' << fmt(ds.wavenumbers[j]) << ',' << fmt(ds.clean[s][j](m).real()) << ','
            << fmt(ds.clean[s][j](m).imag()) << ',' << fmt(ds.noisy[s][j](m).real()) << ','
            << fmt(ds.noisy[s][j](m).imag()) << '\n';
  }
  write_json(dir / "manifest.json", json{{"M", ds.obs_angles.size()},
                                         {"wavenumbers", ds.wavenumbers},
                                         {"d", {ds.incident_dir.x(), ds.incident_dir.y()}},
                                         {"delta", ds.noise_level},
                                         {"seeds", {{"noise", ds.noise_seed}, {"samples", ds.sample_seeds}}},
                                         {"realization_ids", ds.realization_ids}});
}

inline FarFieldDataset read_dataset(const fs::path& dir) {
  const auto man = read_json(dir / "manifest.json");
  FarFieldDataset ds;
  const int m_obs = man.at("M").get<int>();
  ds.obs_angles = observation_angles(m_obs);
  ds.wavenumbers = man.at("wavenumbers").get<std::vector<double>>();
  const auto d = man.at("d").get<std::vector<double>>();
  if (d.size() != 2) fail(ErrorKind::Io, "incident direction must have two entries");
  ds.incident_dir = Eigen::Vector2d(d[0], d[1]);
  ds.noise_level = man.at("delta").get<double>();
  ds.noise_seed = man.at("seeds").at("noise").get<std::uint64_t>();
  ds.sample_seeds = man.at("seeds").at("samples").get<std::vector<std::uint64_t>>();
  ds.realization_ids = man.at("realization_ids").get<std::vector<int>>();
  const std::size_t nk = ds.wavenumbers.size();
  for (int id : ds.realization_ids) {
    const auto rows = read_csv(dir / ("farfield_" + std::to_string(id) + ".csv"));
    if (rows.size() != nk * static_cast<std::size_t>(m_obs))
      fail(ErrorKind::Io, "far field of realization " + std::to_string(id) + " has " + std::to_string(rows.size()) +
                              " rows, expected " + std::to_string(nk * static_cast<std::size_t>(m_obs)));
    std::vector<Eigen::VectorXcd> clean(nk, Eigen::VectorXcd(m_obs));
    std::vector<Eigen::VectorXcd> noisy(nk, Eigen::VectorXcd(m_obs));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() != 6) fail(ErrorKind::Io, "far-field rows need 6 columns");
      const std::size_t j = r / static_cast<std::size_t>(m_obs);
      const auto m = static_cast<Eigen::Index>(row[0]);
      clean[j](m) = {row[2], row[3]};
      noisy[j](m) = {row[4], row[5]};
    }
    ds.clean.push_back(std::move(clean));
    ds.noisy.push_back(std::move(noisy));
  }
  validate_dataset_axes(ds.wavenumbers, ds.obs_angles, ds.incident_dir);
  return ds;
}

// ---- stage 1

inline json to_json(const InversionRecord& r) {
  json traj = json::array();
  for (const auto& p : r.trajectory) traj.push_back(p.coefficients);
  return json{{"realization_id", r.realization_id},
              {"p_per_freq", traj},
              {"G", r.objective},
              {"p_final", r.p_final.coefficients},
              {"qc", {{"eta_max", r.qc.eta_max}, {"G_final", r.qc.g_final}}},
              {"flags",
               {{"ok", r.ok},
                {"failure", r.failure},
                {"repaired", r.repaired},
                {"alpha_used", r.alpha_used},
                {"low_freq_iterations", r.low_freq_iterations},
                {"max_condition", r.max_condition}}}};
}

inline InversionRecord record_from_json(const json& j) {
  InversionRecord r;
  r.realization_id = j.at("realization_id").get<int>();
  for (const auto& p : j.at("p_per_freq")) r.trajectory.emplace_back(p.get<std::vector<double>>());
  r.objective = j.at("G").get<std::vector<double>>();
  r.p_final = RadiusParams(j.at("p_final").get<std::vector<double>>());
  r.qc.eta_max = j.at("qc").at("eta_max").get<double>();
  r.qc.g_final = j.at("qc").at("G_final").get<double>();
  const auto& f = j.at("flags");
  r.ok = f.at("ok").get<bool>();
  r.failure = f.at("failure").get<std::string>();
  r.repaired = f.at("repaired").get<bool>();
  r.alpha_used = f.at("alpha_used").get<double>();
  r.low_freq_iterations = f.value("low_freq_iterations", 0);
  r.max_condition = f.value("max_condition", 0.0);
  return r;
}

inline void write_mean_shape_csv(const fs::path& path, const MeanShape& ms) {
  auto out = open_out(path);
  out << "theta,r_mean\n";
  for (std::size_t i = 0; i < ms.theta.size(); ++i) out << fmt(ms.theta[i]) << ',' << fmt(ms.radius[i]) << '\n';
}

// ---- stage 2

inline json to_json(const StatsEstimate& e, const std::vector<double>& lambda_model) {
  return json{{"lambda_rec", e.lambda_rec}, {"mu_rec", e.mu_rec},         {"grouped", e.grouped},
              {"lambda_model", lambda_model}, {"weight", e.weight},       {"A_fit", e.a_fit},
              {"B_fit", e.b_fit},           {"sigma_est", e.sigma_est},   {"ell_est", e.ell_est},
              {"n_kl_fit", e.n_kl_fit},     {"grouped_fit", e.grouped_fit}, {"n_samples_used", e.n_samples_used}};
}

/// j, lambda_theory, lambda_true_fluct, lambda_rec; missing entries are left empty.
inline void write_comparison_csv(const fs::path& path, const std::vector<double>& theory,
                                 const std::vector<double>& true_fluct, const std::vector<double>& rec) {
  auto out = open_out(path);
  out << "j,lambda_theory,lambda_true_fluct,lambda_rec\n";
  const std::size_t n = std::max({theory.size(), true_fluct.size(), rec.size()});
  auto cell = [](const std::vector<double>& v, std::size_t j) { return j < v.size() ? fmt(v[j]) : std::string(); };
  for (std::size_t j = 0; j < n; ++j)
    out << j << ',' << cell(theory, j) << ',' << cell(true_fluct, j) << ',' << cell(rec, j) << '\n';
}

// ---- diagnostics

inline json to_json(const CheckReport& r) {
  json params = json::object();
  for (const auto& [k, v] : r.params) params[k] = v;
  return json{{"name", r.name},   {"status", to_string(r.status)}, {"measured", r.measured},
              {"bound", r.bound}, {"margin", r.margin},            {"params", params},
              {"note", r.note}};
}

}  // namespace randscat::io
