#pragma once

// Dataset and artifact I/O.
//
// CSV schemas (UTF-8, '.' decimal, exact headers):
//   patients.csv: id, <covariate columns declared in config>
//   visits.csv:   id, t_days, y_log_lab, d_log_dose
//   outcomes.csv: id, t_tilde_days, delta
//
// JSON artifacts (posterior, policy, config, truths) are schema-versioned;
// loading a file with a different version fails loudly. Floating-point
// values in CSV are written with 17 significant digits; the JSON writer
// emits shortest round-trip representations. Either way doubles survive a
// write/read cycle bit-exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctdtr/common.hpp"
#include "ctdtr/draws.hpp"
#include "ctdtr/inference.hpp"
#include "ctdtr/patient.hpp"
#include "ctdtr/policy_opt.hpp"
#include "ctdtr/simulate.hpp"

namespace ctdtr {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io_detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite value");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": bad numeric value '" + s + "'");
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;
  std::string path;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  CsvTable t;
  t.path = path;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size())
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected " + std::to_string(t.header.size()) +
                         " fields, got " + std::to_string(fields.size()));
      t.rows.push_back(std::move(fields));
      t.line_numbers.push_back(line_no);
    }
  }
  if (t.header.empty()) throw ParseError(path + ": missing header row");
  return t;
}

inline void expect_header(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    std::string got;
    for (const auto& h : t.header) got += (got.empty() ? "" : ",") + h;
    throw ParseError(t.path + ":1: header mismatch (want '" + want + "', got '" +
                     got + "')");
  }
}

}  // namespace io_detail

struct CovariateColumn {
  std::string name;
  bool standardize = false;
};

struct Dataset {
  std::vector<PatientRecord> records;
  std::vector<std::string> covariate_names;
  std::vector<bool> covariate_standardized;
  Vec standardize_mean;  // identity transform for non-standardized columns
  Vec standardize_sd;
};

// Loads and validates the three-file dataset, standardizing the declared
// continuous covariate columns by their sample statistics.
inline Dataset load_dataset(const std::string& dir,
                            const std::vector<CovariateColumn>& columns) {
  namespace fs = std::filesystem;
  using namespace io_detail;
  require(!columns.empty(), "load_dataset: no covariate columns declared");
  const std::string ppath = (fs::path(dir) / "patients.csv").string();
  const std::string vpath = (fs::path(dir) / "visits.csv").string();
  const std::string opath = (fs::path(dir) / "outcomes.csv").string();

  CsvTable pt = read_csv(ppath);
  std::vector<std::string> pheader = {"id"};
  for (const auto& c : columns) pheader.push_back(c.name);
  expect_header(pt, pheader);

  const Eigen::Index P = static_cast<Eigen::Index>(columns.size());
  std::map<std::string, std::size_t> index_of;
  std::vector<PatientRecord> records;
  Mat raw(static_cast<Eigen::Index>(pt.rows.size()), P);
  for (std::size_t r = 0; r < pt.rows.size(); ++r) {
    const auto& row = pt.rows[r];
    const std::string where = ppath + ":" + std::to_string(pt.line_numbers[r]);
    if (row[0].empty()) throw ParseError(where + ": empty patient id");
    if (index_of.count(row[0])) throw ParseError(where + ": duplicate id " + row[0]);
    index_of[row[0]] = records.size();
    PatientRecord rec;
    rec.id = row[0];
    records.push_back(std::move(rec));
    for (Eigen::Index c = 0; c < P; ++c)
      raw(static_cast<Eigen::Index>(r), c) = parse_double(row[1 + c], where);
  }

  CsvTable vt = read_csv(vpath);
  expect_header(vt, {"id", "t_days", "y_log_lab", "d_log_dose"});
  for (std::size_t r = 0; r < vt.rows.size(); ++r) {
    const auto& row = vt.rows[r];
    const std::string where = vpath + ":" + std::to_string(vt.line_numbers[r]);
    auto it = index_of.find(row[0]);
    if (it == index_of.end()) throw ParseError(where + ": unknown patient id " + row[0]);
    auto& rec = records[it->second];
    const double t = parse_double(row[1], where);
    if (!rec.events.empty() && t <= rec.events.back().t)
      throw ParseError(where + ": visit times must be strictly increasing per patient");
    if (rec.events.empty() && t != 0.0)
      throw ParseError(where + ": first visit for " + row[0] + " must be at t_days = 0");
    rec.labs.push_back(parse_double(row[2], where));
    rec.events.push_back({t, parse_double(row[3], where)});
  }

  CsvTable ot = read_csv(opath);
  expect_header(ot, {"id", "t_tilde_days", "delta"});
  std::map<std::string, bool> has_outcome;
  for (std::size_t r = 0; r < ot.rows.size(); ++r) {
    const auto& row = ot.rows[r];
    const std::string where = opath + ":" + std::to_string(ot.line_numbers[r]);
    auto it = index_of.find(row[0]);
    if (it == index_of.end()) throw ParseError(where + ": unknown patient id " + row[0]);
    if (has_outcome[row[0]]) throw ParseError(where + ": duplicate outcome for " + row[0]);
    has_outcome[row[0]] = true;
    auto& rec = records[it->second];
    rec.t_tilde = parse_double(row[1], where);
    const double d = parse_double(row[2], where);
    if (d != 0.0 && d != 1.0) throw ParseError(where + ": delta must be 0 or 1");
    rec.delta = static_cast<int>(d);
  }

  Dataset ds;
  ds.covariate_names.reserve(columns.size());
  ds.covariate_standardized.reserve(columns.size());
  for (const auto& c : columns) {
    ds.covariate_names.push_back(c.name);
    ds.covariate_standardized.push_back(c.standardize);
  }
  ds.standardize_mean = Vec::Zero(P);
  ds.standardize_sd = Vec::Ones(P);
  const Eigen::Index I = raw.rows();
  for (Eigen::Index c = 0; c < P; ++c) {
    if (!columns[c].standardize) continue;
    const double m = raw.col(c).mean();
    double var = 0.0;
    for (Eigen::Index i = 0; i < I; ++i) var += (raw(i, c) - m) * (raw(i, c) - m);
    const double sd = (I > 1) ? std::sqrt(var / static_cast<double>(I - 1)) : 1.0;
    ds.standardize_mean[c] = m;
    ds.standardize_sd[c] = (sd > 0.0) ? sd : 1.0;
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& rec = records[i];
    rec.x = Vec(P);
    for (Eigen::Index c = 0; c < P; ++c)
      rec.x[c] = (raw(static_cast<Eigen::Index>(i), c) - ds.standardize_mean[c]) /
                 ds.standardize_sd[c];
    if (rec.events.empty())
      throw ParseError(vpath + ": patient " + rec.id + " has no visits (t=0 row required)");
    if (!has_outcome.count(rec.id))
      throw ParseError(opath + ": patient " + rec.id + " has no outcome row");
    try {
      rec.validate();
    } catch (const std::exception& e) {
      throw ParseError(std::string("dataset validation: ") + e.what());
    }
  }
  ds.records = std::move(records);
  return ds;
}

// Writes a simulated cohort as the three-file dataset (raw covariates) plus
// a standardization sidecar.
inline void write_dataset(const std::string& dir, const Cohort& cohort) {
  namespace fs = std::filesystem;
  using io_detail::fmt17;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "patients.csv");
    out << "id";
    for (const auto& n : cohort.covariate_names) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
      out << cohort.records[i].id;
      for (Eigen::Index c = 0; c < cohort.raw_covariates.cols(); ++c)
        out << "," << fmt17(cohort.raw_covariates(static_cast<Eigen::Index>(i), c));
      out << "\n";
    }
  }
  {
    std::ofstream out(fs::path(dir) / "visits.csv");
    out << "id,t_days,y_log_lab,d_log_dose\n";
    for (const auto& rec : cohort.records)
      for (std::size_t j = 0; j < rec.events.size(); ++j)
        out << rec.id << "," << fmt17(rec.events[j].t) << "," << fmt17(rec.labs[j])
            << "," << fmt17(rec.events[j].d) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "outcomes.csv");
    out << "id,t_tilde_days,delta\n";
    for (const auto& rec : cohort.records)
      out << rec.id << "," << fmt17(rec.t_tilde) << "," << rec.delta << "\n";
  }
  {
    json side;
    side["schema_version"] = kSchemaVersion;
    side["kind"] = "standardization";
    for (std::size_t c = 0; c < cohort.covariate_names.size(); ++c) {
      side["columns"][cohort.covariate_names[c]] = {
          {"standardize", static_cast<bool>(cohort.covariate_standardized[c])},
          {"mean", cohort.standardize_mean[static_cast<Eigen::Index>(c)]},
          {"sd", cohort.standardize_sd[static_cast<Eigen::Index>(c)]}};
    }
    std::ofstream out(fs::path(dir) / "standardization.json");
    out << side.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// JSON <-> parameter structs
// ---------------------------------------------------------------------------

namespace io_detail {

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const json& a) {
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline json mat3_to_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Mat3 mat3_from_json(const json& a) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = a.at(r).at(c).get<double>();
  return m;
}

inline void check_schema(const json& j, const std::string& kind) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion)
    throw ParseError("artifact '" + kind + "': schema_version mismatch (expected " +
                     std::to_string(kSchemaVersion) + ")");
  if (!j.contains("kind") || j["kind"].get<std::string>() != kind)
    throw ParseError("artifact: expected kind '" + kind + "'");
}

}  // namespace io_detail

inline json theta_to_json(const PolicyParams& p) {
  return json{{"nu1", p.nu1},
              {"nu2", p.nu2},
              {"mu", p.mu},
              {"beta_d", io_detail::vec_to_json(p.beta_d)},
              {"sigma_d2", p.sigma_d2}};
}

inline PolicyParams theta_from_json(const json& j) {
  PolicyParams p;
  p.nu1 = j.at("nu1").get<double>();
  p.nu2 = j.at("nu2").get<double>();
  p.mu = j.at("mu").get<double>();
  p.beta_d = io_detail::vec_from_json(j.at("beta_d"));
  p.sigma_d2 = j.at("sigma_d2").get<double>();
  p.validate();
  return p;
}

inline json phi_to_json(const ObservationParams& o) {
  return json{{"beta_l", io_detail::vec_to_json(o.longitudinal.beta_l)},
              {"sigma_l2", o.longitudinal.sigma_l2},
              {"Sigma_b", io_detail::mat3_to_json(o.longitudinal.Sigma_b)},
              {"omega", o.survival.omega},
              {"beta_s1", o.survival.beta_s1},
              {"beta_s2", o.survival.beta_s2},
              {"beta_s3", o.survival.beta_s3},
              {"beta_s4", o.survival.beta_s4},
              {"h0", o.survival.h0},
              {"eta_tox", o.survival.eta_tox},
              {"xi", o.visit.xi},
              {"beta_alpha", json::array({o.visit.beta_alpha[0], o.visit.beta_alpha[1]})}};
}

inline ObservationParams phi_from_json(const json& j) {
  ObservationParams o;
  o.longitudinal.beta_l = io_detail::vec_from_json(j.at("beta_l"));
  o.longitudinal.sigma_l2 = j.at("sigma_l2").get<double>();
  o.longitudinal.Sigma_b = io_detail::mat3_from_json(j.at("Sigma_b"));
  o.survival.omega = j.at("omega").get<double>();
  o.survival.beta_s1 = j.at("beta_s1").get<double>();
  o.survival.beta_s2 = j.at("beta_s2").get<double>();
  o.survival.beta_s3 = j.at("beta_s3").get<double>();
  o.survival.beta_s4 = j.at("beta_s4").get<double>();
  o.survival.h0 = j.at("h0").get<double>();
  o.survival.eta_tox = j.at("eta_tox").get<double>();
  o.visit.xi = j.at("xi").get<double>();
  o.visit.beta_alpha[0] = j.at("beta_alpha").at(0).get<double>();
  o.visit.beta_alpha[1] = j.at("beta_alpha").at(1).get<double>();
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// Posterior artifact
// ---------------------------------------------------------------------------

struct PosteriorArtifact {
  PosteriorDraws draws;
  std::vector<std::string> patient_ids;
  std::vector<std::string> covariate_names;
  std::vector<bool> covariate_standardized;
  Vec standardize_mean;
  Vec standardize_sd;
};

inline void save_posterior(const std::string& path, const PosteriorArtifact& art) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "posterior";
  j["variant"] = (art.draws.variant == ModelVariant::kJoint) ? "joint" : "sls";
  j["seed"] = art.draws.seed;
  j["iters"] = art.draws.iters;
  j["burnin"] = art.draws.burnin;
  j["thin"] = art.draws.thin;
  j["patient_ids"] = art.patient_ids;
  j["covariates"] = {{"names", art.covariate_names},
                     {"standardized", art.covariate_standardized},
                     {"mean", io_detail::vec_to_json(art.standardize_mean)},
                     {"sd", io_detail::vec_to_json(art.standardize_sd)}};
  json draws = json::array();
  for (const auto& d : art.draws.draws)
    draws.push_back(json{{"theta", theta_to_json(d.theta)}, {"phi", phi_to_json(d.obs)}});
  j["draws"] = std::move(draws);
  json pw = json::array();
  for (Eigen::Index k = 0; k < art.draws.pointwise_loglik.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index n = 0; n < art.draws.pointwise_loglik.cols(); ++n)
      row.push_back(art.draws.pointwise_loglik(k, n));
    pw.push_back(std::move(row));
  }
  j["pointwise_loglik"] = std::move(pw);
  json acc;
  for (const auto& [name, st] : art.draws.acceptance)
    acc[name] = {{"proposed", st.proposed}, {"accepted", st.accepted}, {"scale", st.scale}};
  j["acceptance"] = std::move(acc);
  std::ofstream out(path);
  require(static_cast<bool>(out), "save_posterior: cannot open " + path);
  out << j.dump() << "\n";
}

inline PosteriorArtifact load_posterior(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  in >> j;
  io_detail::check_schema(j, "posterior");
  PosteriorArtifact art;
  art.draws.variant =
      (j.at("variant").get<std::string>() == "joint") ? ModelVariant::kJoint
                                                      : ModelVariant::kSls;
  art.draws.seed = j.at("seed").get<std::uint64_t>();
  art.draws.iters = j.at("iters").get<int>();
  art.draws.burnin = j.at("burnin").get<int>();
  art.draws.thin = j.at("thin").get<int>();
  art.patient_ids = j.at("patient_ids").get<std::vector<std::string>>();
  art.covariate_names = j.at("covariates").at("names").get<std::vector<std::string>>();
  art.covariate_standardized =
      j.at("covariates").at("standardized").get<std::vector<bool>>();
  art.standardize_mean = io_detail::vec_from_json(j.at("covariates").at("mean"));
  art.standardize_sd = io_detail::vec_from_json(j.at("covariates").at("sd"));
  for (const auto& d : j.at("draws"))
    art.draws.draws.push_back(
        {theta_from_json(d.at("theta")), phi_from_json(d.at("phi"))});
  const auto& pw = j.at("pointwise_loglik");
  const Eigen::Index K = static_cast<Eigen::Index>(pw.size());
  const Eigen::Index N = K ? static_cast<Eigen::Index>(pw.at(0).size()) : 0;
  art.draws.pointwise_loglik.resize(K, N);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index n = 0; n < N; ++n)
      art.draws.pointwise_loglik(k, n) = pw.at(k).at(n).get<double>();
  if (j.contains("acceptance"))
    for (const auto& [name, st] : j.at("acceptance").items())
      art.draws.acceptance[name] = {st.at("proposed").get<long>(),
                                    st.at("accepted").get<long>(),
                                    st.at("scale").get<double>()};
  return art;
}

// ---------------------------------------------------------------------------
// Policy artifact
// ---------------------------------------------------------------------------

inline void save_policy(const std::string& path, const OptResult& res,
                        const SgdConfig& cfg) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "policy";
  j["mask"] = (cfg.mask == MaskKind::kBoth)
                  ? "both"
                  : (cfg.mask == MaskKind::kVisitsOnly ? "visits" : "dosage");
  j["steps"] = cfg.steps;
  j["rollouts"] = cfg.rollouts;
  j["seed"] = cfg.master_seed;
  j["step_scale"] = cfg.step_scale;
  j["window"] = cfg.window;
  j["scalar_step"] = cfg.scalar_step;
  j["param_layout"] = "nu1,nu2,mu,beta_d...,log_sigma_d2";
  j["theta0"] = io_detail::vec_to_json(res.theta0);
  j["best_theta"] = io_detail::vec_to_json(res.best_theta);
  j["best_policy"] = theta_to_json(res.best_policy());
  j["best_iter"] = res.best_index + 1;
  j["best_reward"] = res.best_reward;
  j["total_capped"] = res.total_capped;
  json iters = json::array();
  for (std::size_t m = 0; m < res.iterations.size(); ++m) {
    const auto& it = res.iterations[m];
    iters.push_back(json{{"iter", m + 1},
                         {"mean_reward", it.mean_reward},
                         {"grad_norm", it.grad_norm},
                         {"capped", it.capped},
                         {"theta", io_detail::vec_to_json(it.theta)}});
  }
  j["iterations"] = std::move(iters);
  std::ofstream out(path);
  require(static_cast<bool>(out), "save_policy: cannot open " + path);
  out << j.dump() << "\n";
}

struct PolicyArtifact {
  PolicyParams best_policy;
  Vec theta0;
  Vec best_theta;
  double best_reward = 0.0;
};

inline PolicyArtifact load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  in >> j;
  io_detail::check_schema(j, "policy");
  PolicyArtifact art;
  art.best_policy = theta_from_json(j.at("best_policy"));
  art.theta0 = io_detail::vec_from_json(j.at("theta0"));
  art.best_theta = io_detail::vec_from_json(j.at("best_theta"));
  art.best_reward = j.at("best_reward").get<double>();
  return art;
}

inline void write_reward_curve_csv(const std::string& path, const OptResult& res) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_reward_curve_csv: cannot open " + path);
  out << "iteration,mean_reward\n";
  for (std::size_t m = 0; m < res.iterations.size(); ++m)
    out << (m + 1) << "," << io_detail::fmt17(res.iterations[m].mean_reward) << "\n";
}

// ---------------------------------------------------------------------------
// Run configuration and truths
// ---------------------------------------------------------------------------

struct RunConfig {
  std::vector<CovariateColumn> covariates;
  Hyperparameters hyper;
  McmcSettings mcmc;
  SgdConfig sgd;
  RewardSpec reward;
};

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  in >> j;
  io_detail::check_schema(j, "config");
  RunConfig cfg;
  for (const auto& c : j.at("covariates"))
    cfg.covariates.push_back(
        {c.at("name").get<std::string>(), c.value("standardize", false)});
  require(!cfg.covariates.empty(), "config: at least one covariate column required");
  if (j.contains("hyperparameters")) {
    const auto& h = j["hyperparameters"];
    auto& hy = cfg.hyper;
    hy.sigma_beta_d2 = h.value("sigma_beta_d2", hy.sigma_beta_d2);
    hy.pi_d1 = h.value("pi_d1", hy.pi_d1);
    hy.pi_d2 = h.value("pi_d2", hy.pi_d2);
    hy.sigma_beta_l2 = h.value("sigma_beta_l2", hy.sigma_beta_l2);
    hy.pi_l1 = h.value("pi_l1", hy.pi_l1);
    hy.pi_l2 = h.value("pi_l2", hy.pi_l2);
    hy.beta_s0 = h.value("beta_s0", hy.beta_s0);
    hy.sigma_s02 = h.value("sigma_s02", hy.sigma_s02);
    hy.pi_s1 = h.value("pi_s1", hy.pi_s1);
    hy.pi_s2 = h.value("pi_s2", hy.pi_s2);
    hy.pi_s3 = h.value("pi_s3", hy.pi_s3);
    hy.pi_s4 = h.value("pi_s4", hy.pi_s4);
    hy.beta_v0 = h.value("beta_v0", hy.beta_v0);
    hy.sigma_v02 = h.value("sigma_v02", hy.sigma_v02);
    hy.sigma_beta_alpha2 = h.value("sigma_beta_alpha2", hy.sigma_beta_alpha2);
    hy.pi_v1 = h.value("pi_v1", hy.pi_v1);
    hy.pi_v2 = h.value("pi_v2", hy.pi_v2);
  }
  if (j.contains("mcmc")) {
    const auto& m = j["mcmc"];
    cfg.mcmc.iters = m.value("iters", cfg.mcmc.iters);
    cfg.mcmc.burnin = m.value("burnin", cfg.mcmc.burnin);
    cfg.mcmc.thin = m.value("thin", cfg.mcmc.thin);
    cfg.mcmc.seed = m.value("seed", cfg.mcmc.seed);
  }
  if (j.contains("sgd")) {
    const auto& s = j["sgd"];
    cfg.sgd.steps = s.value("steps", cfg.sgd.steps);
    cfg.sgd.rollouts = s.value("rollouts", cfg.sgd.rollouts);
    cfg.sgd.step_scale = s.value("step_scale", cfg.sgd.step_scale);
    cfg.sgd.window = s.value("window", cfg.sgd.window);
    cfg.sgd.scalar_step = s.value("scalar_step", cfg.sgd.scalar_step);
  }
  if (j.contains("reward")) {
    const auto& r = j["reward"];
    const std::string kind = r.value("kind", std::string("log_median_survival"));
    if (kind == "log_median_survival")
      cfg.reward.kind = RewardKind::kLogMedianSurvival;
    else if (kind == "penalized_visits")
      cfg.reward.kind = RewardKind::kPenalizedVisits;
    else
      throw ParseError("config: unknown reward kind '" + kind + "'");
    cfg.reward.eta0 = r.value("eta0", 0.0);
  }
  cfg.mcmc.validate();
  cfg.hyper.validate();
  return cfg;
}

inline void write_default_run_config(const std::string& path) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "config";
  j["covariates"] = json::array({json{{"name", "age_donor"}, {"standardize", true}},
                                 json{{"name", "dgf"}, {"standardize", false}},
                                 json{{"name", "bmi"}, {"standardize", true}}});
  j["hyperparameters"] = json::object();
  j["mcmc"] = {{"iters", 20000}, {"burnin", 5000}, {"thin", 50}, {"seed", 1}};
  j["sgd"] = {{"steps", 1000}, {"rollouts", 0}, {"step_scale", 0.01},
              {"window", 50}, {"scalar_step", false}};
  j["reward"] = {{"kind", "log_median_survival"}, {"eta0", 0.0}};
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_default_run_config: cannot open " + path);
  out << j.dump(2) << "\n";
}

struct Truths {
  PolicyParams theta;
  ObservationParams phi;
  CohortSpec cohort;
};

inline Truths load_truths(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  in >> j;
  io_detail::check_schema(j, "truths");
  Truths t;
  t.theta = theta_from_json(j.at("theta"));
  t.phi = phi_from_json(j.at("phi"));
  if (j.contains("cohort")) {
    const auto& c = j["cohort"];
    t.cohort.covariates.clear();
    for (const auto& cv : c.at("covariates")) {
      CovariateSpec cs;
      cs.name = cv.at("name").get<std::string>();
      const std::string kind = cv.at("kind").get<std::string>();
      if (kind == "normal") {
        cs.kind = CovariateSpec::Kind::kNormal;
        cs.mean = cv.at("mean").get<double>();
        cs.sd = cv.at("sd").get<double>();
      } else if (kind == "bernoulli") {
        cs.kind = CovariateSpec::Kind::kBernoulli;
        cs.p = cv.at("p").get<double>();
      } else {
        throw ParseError("truths: unknown covariate kind '" + kind + "'");
      }
      cs.standardize = cv.value("standardize", cs.kind == CovariateSpec::Kind::kNormal);
      t.cohort.covariates.push_back(cs);
    }
    t.cohort.y0_mean = c.value("y0_mean", t.cohort.y0_mean);
    t.cohort.y0_sd = c.value("y0_sd", t.cohort.y0_sd);
    t.cohort.censor_shape = c.value("censor_shape", t.cohort.censor_shape);
    t.cohort.censor_scale = c.value("censor_scale", t.cohort.censor_scale);
  } else {
    t.cohort = default_cohort_spec();
  }
  require(!t.cohort.covariates.empty(), "truths: no covariates declared");
  require(static_cast<Eigen::Index>(t.cohort.covariates.size()) + 2 ==
              t.theta.beta_d.size(),
          "truths: beta_d length must equal 2 + #covariates");
  return t;
}

inline void write_default_truths(const std::string& path) {
  const PolicyParams theta = default_policy_truths();
  const ObservationParams phi = default_observation_truths();
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "truths";
  j["theta"] = theta_to_json(theta);
  j["phi"] = phi_to_json(phi);
  j["cohort"] = {
      {"covariates",
       json::array(
           {json{{"name", "age_donor"}, {"kind", "normal"}, {"mean", 52.5}, {"sd", 15.8}, {"standardize", true}},
            json{{"name", "dgf"}, {"kind", "bernoulli"}, {"p", 0.4}, {"standardize", false}},
            json{{"name", "bmi"}, {"kind", "normal"}, {"mean", 24.3}, {"sd", 4.5}, {"standardize", true}}})},
      {"y0_mean", 5.0},
      {"y0_sd", 0.1},
      {"censor_shape", 3.0},
      {"censor_scale", 8000.0}};
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_default_truths: cannot open " + path);
  out << j.dump(2) << "\n";
}

// Patient descriptor for optimization/evaluation: either model-scale
// covariates ("x") or raw named columns ("raw") standardized with the
// statistics recorded in the posterior artifact.
struct PatientInput {
  Vec x;
  double y0 = 5.0;
  std::string id = "patient";
};

inline PatientInput load_patient_input(const std::string& path,
                                       const PosteriorArtifact& posterior) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  in >> j;
  PatientInput p;
  p.id = j.value("id", std::string("patient"));
  p.y0 = j.at("y0").get<double>();
  if (j.contains("x")) {
    p.x = io_detail::vec_from_json(j.at("x"));
  } else if (j.contains("raw")) {
    const auto& names = posterior.covariate_names;
    p.x = Vec(static_cast<Eigen::Index>(names.size()));
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (!j["raw"].contains(names[c]))
        throw ParseError(path + ": missing raw covariate '" + names[c] + "'");
      const double raw = j["raw"][names[c]].get<double>();
      p.x[static_cast<Eigen::Index>(c)] =
          (raw - posterior.standardize_mean[static_cast<Eigen::Index>(c)]) /
          posterior.standardize_sd[static_cast<Eigen::Index>(c)];
    }
  } else {
    throw ParseError(path + ": patient input needs 'x' or 'raw'");
  }
  require(p.x.size() == static_cast<Eigen::Index>(posterior.covariate_names.size()),
          "patient input: covariate dimension mismatch with posterior");
  return p;
}

inline void write_rewards_csv(const std::string& path,
                              const std::vector<EvalRollout>& rollouts) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_rewards_csv: cannot open " + path);
  out << "rep,reward,median_survival_days,survival_days,visits,capped\n";
  for (std::size_t r = 0; r < rollouts.size(); ++r)
    out << (r + 1) << "," << io_detail::fmt17(rollouts[r].reward) << ","
        << io_detail::fmt17(rollouts[r].median_survival) << ","
        << io_detail::fmt17(rollouts[r].survival) << "," << rollouts[r].visits << ","
        << (rollouts[r].capped ? 1 : 0) << "\n";
}

// Thinned parameter traces for external diagnostics.
inline void write_trace_csv(const std::string& path, const PosteriorDraws& draws) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_trace_csv: cannot open " + path);
  using io_detail::fmt17;
  out << "draw,nu1,nu2,mu";
  const Eigen::Index nb = draws.draws.empty() ? 0 : draws.draws[0].theta.beta_d.size();
  for (Eigen::Index i = 0; i < nb; ++i) out << ",beta_d" << i;
  out << ",sigma_d2";
  const Eigen::Index nl =
      draws.draws.empty() ? 0 : draws.draws[0].obs.longitudinal.beta_l.size();
  for (Eigen::Index i = 0; i < nl; ++i) out << ",beta_l" << i;
  out << ",sigma_l2,Sigma_b00,Sigma_b11,Sigma_b22,Sigma_b01,Sigma_b02,Sigma_b12";
  out << ",omega,beta_s1,beta_s2,beta_s3,beta_s4,h0,eta_tox,xi,beta_alpha0,beta_alpha1\n";
  for (std::size_t k = 0; k < draws.draws.size(); ++k) {
    const auto& d = draws.draws[k];
    out << (k + 1) << "," << fmt17(d.theta.nu1) << "," << fmt17(d.theta.nu2) << ","
        << fmt17(d.theta.mu);
    for (Eigen::Index i = 0; i < nb; ++i) out << "," << fmt17(d.theta.beta_d[i]);
    out << "," << fmt17(d.theta.sigma_d2);
    for (Eigen::Index i = 0; i < nl; ++i)
      out << "," << fmt17(d.obs.longitudinal.beta_l[i]);
    const auto& S = d.obs.longitudinal.Sigma_b;
    out << "," << fmt17(d.obs.longitudinal.sigma_l2) << "," << fmt17(S(0, 0)) << ","
        << fmt17(S(1, 1)) << "," << fmt17(S(2, 2)) << "," << fmt17(S(0, 1)) << ","
        << fmt17(S(0, 2)) << "," << fmt17(S(1, 2));
    const auto& sp = d.obs.survival;
    out << "," << fmt17(sp.omega) << "," << fmt17(sp.beta_s1) << ","
        << fmt17(sp.beta_s2) << "," << fmt17(sp.beta_s3) << "," << fmt17(sp.beta_s4)
        << "," << fmt17(sp.h0) << "," << fmt17(sp.eta_tox) << ","
        << fmt17(d.obs.visit.xi) << "," << fmt17(d.obs.visit.beta_alpha[0]) << ","
        << fmt17(d.obs.visit.beta_alpha[1]) << "\n";
  }
}

}  // namespace ctdtr
