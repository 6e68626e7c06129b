#include "fif/experiments.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <numbers>
#include <sstream>

#include "fif/errors.hpp"
#include "fif/jacobian.hpp"
#include "fif/linear_oracle.hpp"
#include "fif/metrics.hpp"

namespace fif {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kArtifacts = {
    "config.ini",  "dataset.json",  "metrics.csv",       "checkpoint.bin",    "summary.json",
    "variance.csv", "gradient_distance.csv", "phase.csv", "phase_summary.csv", "oracle.json"};

void write_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string metrics_csv(const MetricsLog& log) {
  std::ostringstream os;
  log.write_csv(os);
  return os.str();
}

std::string run_id_for(const std::string& hash) { return "run-" + hash.substr(0, 8); }

/// Re-reads rows written before a checkpoint so a resumed log is complete.
MetricsLog read_metrics(const fs::path& path, const std::string& run_id) {
  MetricsLog log(run_id);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, step, metric, value;
    std::getline(ss, id, ',');
    std::getline(ss, step, ',');
    std::getline(ss, metric, ',');
    std::getline(ss, value, ',');
    log.add(std::stoll(step), metric, std::stod(value));
  }
  return log;
}

Matrix sample_model(const NetworkPair& np, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed, {0x736d706c});
  return np.decode(rng.normal_matrix(n, np.spec.d));
}

nlohmann::json summarize_run(const RunConfig& cfg, const Dataset& ds, const Trainer& tr,
                             const std::string& hash) {
  const NetworkPair& np = tr.pair();
  nlohmann::json s;
  s["run_id"] = run_id_for(hash);
  s["config_hash"] = hash;
  s["steps"] = tr.steps_done();
  s["objective"] = to_string(cfg.objective);
  s["variant"] = to_string(cfg.loss.variant);
  const MetricsLog& log = tr.log();
  s["final"] = {{"loss", log.last("loss")},
                {"nll_prior", log.last("nll_prior")},
                {"surrogate", log.last("surrogate")},
                {"recon", log.last("recon")}};
  const Matrix test = ds.test.size() > 0 ? ds.test_x() : ds.train_x();
  const Matrix z = np.encode(test);
  s["test"] = {{"rows", test.rows()},
               {"recon", (np.decode(z) - test).rowwise().squaredNorm().mean()},
               {"nll_prior", neg_log_prior(z).mean()}};
  if (test.rows() >= test.cols() + 1) {
    // CSV data is already standardized by train statistics; generated data is
    // mapped with the test split's own column statistics so the score is
    // always reported in standardized units.
    Matrix model = sample_model(np, test.rows(), cfg.seed);
    Matrix ref = test;
    if (ds.mean.size() == 0) {
      const Eigen::RowVectorXd mu = test.colwise().mean();
      const Eigen::RowVectorXd sd =
          ((test.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(test.rows() - 1))
              .sqrt()
              .max(1e-12);
      model = (model.rowwise() - mu).array().rowwise() / sd.array();
      ref = (ref.rowwise() - mu).array().rowwise() / sd.array();
    }
    s["test"]["fid_like"] = fid_like(model, ref);
  } else {
    s["test"]["fid_like"] = nullptr;
  }
  s["fid_space"] = "standardized";
  if (cfg.loss.beta > 0.0) s["sigma2_equivalent"] = 1.0 / (2.0 * cfg.loss.beta);
  if (cfg.data.kind == "sinusoid" && np.spec.D == 2 && np.spec.d == 1) {
    const Alignment al = manifold_alignment(test, z.col(0));
    s["alignment"] = {{"corr_curve", al.corr_curve}, {"corr_noise", al.corr_noise}};
  }
  return s;
}

nlohmann::json train_loop(const RunConfig& cfg, const Dataset& ds, Trainer& tr,
                          const fs::path& dir, const std::string& hash) {
  auto save = [&] {
    save_checkpoint((dir / "checkpoint.bin").string(), tr.checkpoint(hash));
    write_file(dir / "metrics.csv", metrics_csv(tr.log()));
  };
  try {
    while (tr.step()) {
      if (cfg.checkpoint_every > 0 && tr.steps_done() % cfg.checkpoint_every == 0) save();
    }
  } catch (const NumericalError&) {
    // The last periodic checkpoint stays as it was; flush the log for diagnosis.
    write_file(dir / "metrics.csv", metrics_csv(tr.log()));
    throw;
  }
  save();
  nlohmann::json summary = summarize_run(cfg, ds, tr, hash);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace

int effective_jobs(int requested) {
  int jobs = std::max(1, requested);
  if (const char* env = std::getenv("FIF_NUM_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) jobs = std::min(jobs, cap);
    } catch (const std::exception&) {
      throw ConfigError(std::string("FIF_NUM_THREADS is not an integer: '") + env + "'");
    }
  }
  return jobs;
}

void prepare_output_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  const fs::path p(dir);
  if (fs::exists(p)) {
    for (const auto& name : kArtifacts) {
      if (!fs::exists(p / name)) continue;
      if (!force) {
        throw ConfigError("output directory '" + dir +
                          "' already contains run artifacts; pass --force to overwrite");
      }
      fs::remove(p / name);
    }
  }
  fs::create_directories(p);
}

nlohmann::json run_train(const RunConfig& cfg, const std::string& out_dir) {
  const fs::path dir(out_dir);
  const std::string ini = to_ini(cfg);
  const std::string hash = fnv1a_hex(ini);
  write_file(dir / "config.ini", ini);
  const Dataset ds = make_dataset(cfg.data, cfg.seed);
  if (ds.dim() != cfg.arch.D) {
    throw ConfigError("config key 'model.D': data has dimension " + std::to_string(ds.dim()));
  }
  write_file(dir / "dataset.json", dataset_sidecar(ds).dump(2) + "\n");
  Trainer tr(build(cfg.arch), ds, make_train_config(cfg), run_id_for(hash));
  return train_loop(cfg, ds, tr, dir, hash);
}

nlohmann::json resume_train(const std::string& out_dir) {
  const fs::path dir(out_dir);
  const RunConfig cfg = load_config((dir / "config.ini").string());
  const std::string hash = fnv1a_hex(to_ini(cfg));
  const Checkpoint ck = load_checkpoint((dir / "checkpoint.bin").string());
  if (ck.config_hash != hash) {
    throw CheckpointError("checkpoint was written for a different config (hash " +
                          ck.config_hash + ", config " + hash + ")");
  }
  const Dataset ds = make_dataset(cfg.data, cfg.seed);
  Trainer tr(build(cfg.arch), ds, make_train_config(cfg), run_id_for(hash));
  MetricsLog prior = read_metrics(dir / "metrics.csv", run_id_for(hash));
  for (const MetricRow& r : prior.rows()) tr.log().add(r.step, r.metric, r.value);
  tr.restore(ck);
  return train_loop(cfg, ds, tr, dir, hash);
}

int cmd_train(const std::string& config_path, const CliOptions& opts) {
  if (opts.resume) {
    const nlohmann::json s = resume_train(opts.out);
    std::cout << s.dump(2) << "\n";
    return 0;
  }
  RunConfig cfg = load_config(config_path);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.finalize();
  }
  prepare_output_dir(opts.out, opts.force);
  const nlohmann::json s = run_train(cfg, opts.out);
  std::cout << s.dump(2) << "\n";
  return 0;
}

Matrix random_symmetric(int d, Rng& rng) {
  const Matrix g = rng.normal_matrix(d, d);
  Matrix a = g.triangularView<Eigen::Upper>();
  a.triangularView<Eigen::StrictlyLower>() = a.transpose().triangularView<Eigen::StrictlyLower>();
  return a;
}

double empirical_variance(ProbeKind kind, int k, const Matrix& a, long samples, Rng& rng) {
  const int d = static_cast<int>(a.rows());
  double mean = 0.0, m2 = 0.0;
  for (long i = 0; i < samples; ++i) {
    const double est = trace_estimate(a, sample(kind, d, k, rng));
    const double delta = est - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (est - mean);
  }
  return samples > 1 ? m2 / static_cast<double>(samples - 1) : 0.0;
}

std::vector<VarianceRow> variance_study(const VarianceStudyOptions& o) {
  Rng mat_rng(o.seed, {0x766d6174});
  const Matrix a = random_symmetric(o.d, mat_rng);
  std::vector<VarianceRow> rows;
  for (ProbeKind kind : o.kinds) {
    for (int k : o.ks) {
      if (kind == ProbeKind::Orthogonalized && k > o.d) {
        throw ConfigError("variance study: K=" + std::to_string(k) + " exceeds d=" +
                          std::to_string(o.d) + " for orthogonalized probes");
      }
      Rng rng(o.seed, {0x76617273, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(k)});
      rows.push_back({kind, o.d, k, analytic_variance(kind, k, a),
                      empirical_variance(kind, k, a, o.samples, rng), o.samples});
    }
  }
  return rows;
}

std::vector<DistanceRow> gradient_distance_study(const VarianceStudyOptions& o) {
  ArchSpec spec;
  spec.D = o.D;
  spec.d = o.d;
  spec.hidden = o.hidden;
  spec.activation = ad::Activation::Tanh;
  spec.seed = o.seed;
  const NetworkPair np = build(spec);
  Rng xr(o.seed, {0x78646174});
  const Matrix x = xr.normal_matrix(o.batch, o.D);
  std::vector<DistanceRow> out;
  for (TraceSpace space : {TraceSpace::Latent, TraceSpace::Data}) {
    const EstimatorVariant v{GradTarget::Encoder, space, JacobianSite::OffManifold};
    const int dim = v.probe_dim(o.D, o.d);
    std::vector<int> ks;
    for (int k : o.ks) {
      if (k <= dim) ks.push_back(k);
    }
    if (space == TraceSpace::Latent && (ks.empty() || ks.back() != dim)) ks.push_back(dim);
    std::vector<double> acc(ks.size(), 0.0);
    for (int s = 0; s < o.grad_seeds; ++s) {
      const auto curve = rel_grad_distance(np, x, v, ks, mix64(o.seed + static_cast<std::uint64_t>(s)));
      for (std::size_t i = 0; i < curve.size(); ++i) acc[i] += curve[i].second;
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      out.push_back({space, ks[i], acc[i] / o.grad_seeds, o.grad_seeds});
    }
  }
  return out;
}

int cmd_variance_study(const VarianceStudyOptions& o, const CliOptions& cli) {
  prepare_output_dir(cli.out, cli.force);
  const fs::path dir(cli.out);
  std::ostringstream v;
  v << "kind,d,K,analytic_var,empirical_var,n_samples\n";
  for (const VarianceRow& r : variance_study(o)) {
    v << to_string(r.kind) << ',' << r.d << ',' << r.k << ',' << r.analytic << ','
      << r.empirical << ',' << r.samples << '\n';
  }
  write_file(dir / "variance.csv", v.str());
  std::ostringstream g;
  g << "space,K,rel_grad_distance,seeds\n";
  for (const DistanceRow& r : gradient_distance_study(o)) {
    g << (r.space == TraceSpace::Latent ? "latent" : "data") << ',' << r.k << ','
      << r.mean_distance << ',' << r.seeds << '\n';
  }
  write_file(dir / "gradient_distance.csv", g.str());
  std::cout << v.str() << g.str();
  return 0;
}

PhaseRow phase_run(const RunConfig& base, double beta, int run) {
  RunConfig cfg = base;
  cfg.seed = mix64(base.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(run + 1));
  cfg.finalize();
  cfg.loss.beta = beta;
  PhaseRow row{beta, run, cfg.seed, 0.0, 0.0};
  if (base.phase.dataset == "sinusoid") {
    cfg.data.kind = "sinusoid";
    cfg.arch.D = 2;
    cfg.arch.d = 1;
  } else {
    cfg.data.kind = "gaussian";
    cfg.arch.D = static_cast<int>(cfg.data.sigma_diag.size());
  }
  const Dataset ds = make_dataset(cfg.data, cfg.seed);
  Trainer tr(build(cfg.arch), ds, make_train_config(cfg), "phase");
  tr.run();
  const NetworkPair& np = tr.pair();
  const Matrix test = ds.test.size() > 1 ? ds.test_x() : ds.train_x();
  const Matrix z = np.encode(test);
  row.recon = (np.decode(z) - test).rowwise().squaredNorm().mean();
  row.nll_prior = neg_log_prior(z).mean();
  if (base.phase.dataset == "sinusoid") {
    const Alignment al = manifold_alignment(test, z.col(0));
    row.corr_curve = al.corr_curve;
    row.corr_noise = al.corr_noise;
  } else {
    row.sigma2 = 1.0 / (2.0 * beta);
    const Vector diag = Eigen::Map<const Vector>(
        cfg.data.sigma_diag.data(), static_cast<Eigen::Index>(cfg.data.sigma_diag.size()));
    const LinearOracleSolution sol = optimal_selection(diag.asDiagonal(), row.sigma2, cfg.arch.d);
    for (Eigen::Index i = 0; i < sol.alpha.size(); ++i) {
      if (sol.alpha(i) != 0) {
        row.oracle_lambda = sol.lambda(i);
        break;
      }
    }
    const Matrix w = full_jacobian(np, Side::Decoder, Vector::Zero(cfg.arch.d));
    row.angle_deg = principal_angles(w, sol.subspace).maxCoeff() * 180.0 / std::numbers::pi;
  }
  return row;
}

int cmd_phase_transition(const std::string& config_path, const CliOptions& cli) {
  RunConfig cfg = load_config(config_path);
  if (cli.seed) {
    cfg.seed = *cli.seed;
    cfg.finalize();
  }
  if (cfg.phase.betas.empty()) throw ConfigError("config key 'phase.betas': required");
  if (cfg.phase.dataset == "linear_gaussian" && cfg.data.sigma_diag.empty()) {
    throw ConfigError("config key 'data.sigma_diag': required for linear_gaussian");
  }
  prepare_output_dir(cli.out, cli.force);
  const fs::path dir(cli.out);
  write_file(dir / "config.ini", to_ini(cfg));

  std::vector<std::pair<double, int>> tasks;
  for (double b : cfg.phase.betas) {
    for (int r = 0; r < cfg.phase.runs; ++r) tasks.emplace_back(b, r);
  }
  std::vector<PhaseRow> rows(tasks.size());
  const auto jobs = static_cast<std::size_t>(effective_jobs(cli.jobs));
  for (std::size_t start = 0; start < tasks.size(); start += jobs) {
    std::vector<std::future<PhaseRow>> wave;
    for (std::size_t i = start; i < std::min(tasks.size(), start + jobs); ++i) {
      wave.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                [&, i] { return phase_run(cfg, tasks[i].first, tasks[i].second); }));
    }
    for (std::size_t i = 0; i < wave.size(); ++i) rows[start + i] = wave[i].get();
  }

  const bool sinus = cfg.phase.dataset == "sinusoid";
  std::ostringstream os;
  os << "beta,run,seed,recon,nll_prior,"
     << (sinus ? "corr_curve,corr_noise" : "sigma2,oracle_lambda,angle_deg") << "\n";
  for (const PhaseRow& r : rows) {
    os << r.beta << ',' << r.run << ',' << r.seed << ',' << r.recon << ',' << r.nll_prior << ',';
    if (sinus) {
      os << r.corr_curve << ',' << r.corr_noise << '\n';
    } else {
      os << r.sigma2 << ',' << r.oracle_lambda << ',' << r.angle_deg << '\n';
    }
  }
  write_file(dir / "phase.csv", os.str());

  // Per-beta means; spread columns only when there is more than one run.
  const bool spread = cfg.phase.runs > 1;
  std::ostringstream ss;
  ss << "beta,runs,recon_mean," << (spread ? "recon_std," : "")
     << (sinus ? "corr_curve_mean,corr_noise_mean" : "angle_deg_mean") << "\n";
  for (double b : cfg.phase.betas) {
    std::vector<const PhaseRow*> sel;
    for (const PhaseRow& r : rows) {
      if (r.beta == b) sel.push_back(&r);
    }
    auto mean = [&](auto f) {
      double a = 0.0;
      for (const PhaseRow* r : sel) a += f(*r);
      return a / static_cast<double>(sel.size());
    };
    const double rm = mean([](const PhaseRow& r) { return r.recon; });
    ss << b << ',' << sel.size() << ',' << rm << ',';
    if (spread) {
      const double var = mean([&](const PhaseRow& r) { return (r.recon - rm) * (r.recon - rm); });
      ss << std::sqrt(var) << ',';
    }
    if (sinus) {
      ss << mean([](const PhaseRow& r) { return r.corr_curve; }) << ','
         << mean([](const PhaseRow& r) { return r.corr_noise; }) << '\n';
    } else {
      ss << mean([](const PhaseRow& r) { return r.angle_deg; }) << '\n';
    }
  }
  write_file(dir / "phase_summary.csv", ss.str());

  if (!sinus) {
    const Vector diag = Eigen::Map<const Vector>(
        cfg.data.sigma_diag.data(), static_cast<Eigen::Index>(cfg.data.sigma_diag.size()));
    nlohmann::json oracle = nlohmann::json::array();
    for (double b : cfg.phase.betas) {
      const double s2 = 1.0 / (2.0 * b);
      const LinearOracleSolution sol = optimal_selection(diag.asDiagonal(), s2, cfg.arch.d);
      std::vector<int> alpha(sol.alpha.data(), sol.alpha.data() + sol.alpha.size());
      std::vector<double> lam(sol.lambda.data(), sol.lambda.data() + sol.lambda.size());
      oracle.push_back({{"beta", b},
                        {"sigma2", s2},
                        {"lambda", lam},
                        {"alpha", alpha},
                        {"loss_alpha", sol.loss_alpha}});
    }
    write_file(dir / "oracle.json", oracle.dump(2) + "\n");
  }
  std::cout << ss.str();
  return 0;
}

}  // namespace fif
