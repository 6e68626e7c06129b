#include "fif/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fif/errors.hpp"

namespace fif {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, sep);) out.push_back(trim(p));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
  throw ConfigError("invalid value '" + value + "' for config key '" + key + "': " + why);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "expected a number");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "expected an integer");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    bad_value(key, v, "expected a nonnegative integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "expected true or false");
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& p : split(v, ',')) out.push_back(static_cast<int>(to_int(key, p)));
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split(v, ',')) out.push_back(to_double(key, p));
  return out;
}

template <class F>
auto guarded(const std::string& key, const std::string& v, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    bad_value(key, v, e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& v, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& v)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment.kind",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "train" && v != "phase_transition") bad_value(k, v, "train | phase_transition");
         c.kind = v;
       }},
      {"experiment.seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_uint(k, v); }},

      {"data.kind",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "sinusoid" && v != "gaussian" && v != "gaussian_mixture" && v != "csv") {
           bad_value(k, v, "sinusoid | gaussian | gaussian_mixture | csv");
         }
         c.data.kind = v;
       }},
      {"data.n", [](RunConfig& c, auto& k, auto& v) { c.data.n = to_int(k, v); }},
      {"data.noise_std", [](RunConfig& c, auto& k, auto& v) { c.data.noise_std = to_double(k, v); }},
      {"data.sigma_diag",
       [](RunConfig& c, auto& k, auto& v) { c.data.sigma_diag = to_doubles(k, v); }},
      {"data.means",
       [](RunConfig& c, auto& k, auto& v) {
         c.data.means.clear();
         for (const auto& row : split(v, ';')) c.data.means.push_back(to_doubles(k, row));
       }},
      {"data.component_std",
       [](RunConfig& c, auto& k, auto& v) { c.data.component_std = to_double(k, v); }},
      {"data.path", [](RunConfig& c, auto&, auto& v) { c.data.path = v; }},
      {"data.header", [](RunConfig& c, auto& k, auto& v) { c.data.header = to_bool(k, v); }},
      {"data.standardize",
       [](RunConfig& c, auto& k, auto& v) { c.data.standardize = to_bool(k, v); }},
      {"data.train_frac",
       [](RunConfig& c, auto& k, auto& v) { c.data.split.train = to_double(k, v); }},
      {"data.val_frac", [](RunConfig& c, auto& k, auto& v) { c.data.split.val = to_double(k, v); }},
      {"data.seed", [](RunConfig& c, auto& k, auto& v) { c.data.seed = to_uint(k, v); }},

      {"model.D", [](RunConfig& c, auto& k, auto& v) { c.arch.D = static_cast<int>(to_int(k, v)); }},
      {"model.d", [](RunConfig& c, auto& k, auto& v) { c.arch.d = static_cast<int>(to_int(k, v)); }},
      {"model.hidden", [](RunConfig& c, auto& k, auto& v) { c.arch.hidden = to_ints(k, v); }},
      {"model.block",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "mlp") c.arch.block = BlockType::Mlp;
         else if (v == "residual") c.arch.block = BlockType::Residual;
         else bad_value(k, v, "mlp | residual");
       }},
      {"model.res_blocks",
       [](RunConfig& c, auto& k, auto& v) { c.arch.res_blocks = static_cast<int>(to_int(k, v)); }},
      {"model.block_hidden",
       [](RunConfig& c, auto& k, auto& v) { c.arch.block_hidden = to_ints(k, v); }},
      {"model.block_space",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "latent") c.arch.block_space = BlockSpace::Latent;
         else if (v == "data") c.arch.block_space = BlockSpace::Data;
         else bad_value(k, v, "latent | data");
       }},
      {"model.tied", [](RunConfig& c, auto& k, auto& v) { c.arch.tied = to_bool(k, v); }},
      {"model.activation",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.arch.activation = guarded(k, v, [&] { return ad::activation_from_string(v); });
       }},

      {"loss.objective",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.objective = guarded(k, v, [&] { return objective_from_string(v); });
       }},
      {"loss.beta", [](RunConfig& c, auto& k, auto& v) { c.loss.beta = to_double(k, v); }},
      {"loss.k", [](RunConfig& c, auto& k, auto& v) { c.loss.k = static_cast<int>(to_int(k, v)); }},
      {"loss.variant",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.loss.variant = guarded(k, v, [&] { return variant_from_string(v); });
       }},
      {"loss.probe",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "default") {
           c.loss.probe_kind.reset();
         } else {
           c.loss.probe_kind = guarded(k, v, [&] { return probe_kind_from_string(v); });
         }
       }},
      {"loss.noise_std", [](RunConfig& c, auto& k, auto& v) { c.loss.noise_std = to_double(k, v); }},
      {"loss.cg_tol", [](RunConfig& c, auto& k, auto& v) { c.loss.cg_tol = to_double(k, v); }},
      {"loss.cg_max_iter",
       [](RunConfig& c, auto& k, auto& v) { c.loss.cg_max_iter = static_cast<int>(to_int(k, v)); }},

      {"optim.lr", [](RunConfig& c, auto& k, auto& v) { c.opt.lr = to_double(k, v); }},
      {"optim.beta1", [](RunConfig& c, auto& k, auto& v) { c.opt.beta1 = to_double(k, v); }},
      {"optim.beta2", [](RunConfig& c, auto& k, auto& v) { c.opt.beta2 = to_double(k, v); }},
      {"optim.eps", [](RunConfig& c, auto& k, auto& v) { c.opt.eps = to_double(k, v); }},
      {"optim.weight_decay",
       [](RunConfig& c, auto& k, auto& v) { c.opt.weight_decay = to_double(k, v); }},
      {"optim.schedule",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.opt.schedule = guarded(k, v, [&] { return schedule_from_string(v); });
       }},
      {"optim.warmup_frac",
       [](RunConfig& c, auto& k, auto& v) { c.opt.warmup_frac = to_double(k, v); }},
      {"optim.div_factor", [](RunConfig& c, auto& k, auto& v) { c.opt.div_factor = to_double(k, v); }},
      {"optim.final_div_factor",
       [](RunConfig& c, auto& k, auto& v) { c.opt.final_div_factor = to_double(k, v); }},
      {"optim.clip_norm", [](RunConfig& c, auto& k, auto& v) { c.opt.clip_norm = to_double(k, v); }},

      {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.epochs = static_cast<int>(to_int(k, v)); }},
      {"train.batch_size",
       [](RunConfig& c, auto& k, auto& v) { c.batch_size = static_cast<int>(to_int(k, v)); }},
      {"train.max_steps", [](RunConfig& c, auto& k, auto& v) { c.max_steps = to_int(k, v); }},
      {"train.log_every",
       [](RunConfig& c, auto& k, auto& v) { c.log_every = static_cast<int>(to_int(k, v)); }},
      {"train.checkpoint_every",
       [](RunConfig& c, auto& k, auto& v) { c.checkpoint_every = to_int(k, v); }},

      {"phase.dataset",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const std::string name = v == "linear-gaussian" ? "linear_gaussian" : v;
         if (name != "sinusoid" && name != "linear_gaussian") {
           bad_value(k, v, "sinusoid | linear_gaussian");
         }
         c.phase.dataset = name;
       }},
      {"phase.betas", [](RunConfig& c, auto& k, auto& v) { c.phase.betas = to_doubles(k, v); }},
      {"phase.runs", [](RunConfig& c, auto& k, auto& v) { c.phase.runs = static_cast<int>(to_int(k, v)); }},
  };
  return table;
}

void check(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw ConfigError("config key '" + key + "': " + why);
}

void validate(const RunConfig& c) {
  check(c.data.n >= 1, "data.n", "must be >= 1");
  check(c.data.noise_std >= 0.0, "data.noise_std", "must be >= 0");
  if (c.data.kind == "gaussian") {
    check(!c.data.sigma_diag.empty(), "data.sigma_diag", "required for gaussian data");
  }
  if (c.data.kind == "gaussian_mixture") {
    check(!c.data.means.empty(), "data.means", "required for gaussian_mixture data");
  }
  if (c.data.kind == "csv") check(!c.data.path.empty(), "data.path", "required for csv data");
  check(c.batch_size >= 1, "train.batch_size", "must be >= 1");
  check(c.epochs >= 0, "train.epochs", "must be >= 0");
  check(c.loss.k >= 1, "loss.k", "must be >= 1");
  check(c.loss.beta >= 0.0, "loss.beta", "must be >= 0");
  check(c.loss.noise_std >= 0.0, "loss.noise_std", "must be >= 0");
  check(c.phase.runs >= 1, "phase.runs", "must be >= 1");
  if (c.kind == "phase_transition") check(!c.phase.betas.empty(), "phase.betas", "required");
  try {
    c.arch.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config section [model]: ") + e.what());
  }
}

}  // namespace

void RunConfig::finalize() { arch.seed = seed; }

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config is not valid INI: ") + e.what());
  }
  RunConfig c;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must be inside a [section]");
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw ConfigError("unknown config key '" + full + "'");
      it->second(c, full, trim(node.data()));
    }
  }
  c.finalize();
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  os << "[experiment]\n"
     << "kind = " << c.kind << "\n"
     << "seed = " << c.seed << "\n\n";
  os << "[data]\n"
     << "kind = " << c.data.kind << "\n"
     << "n = " << c.data.n << "\n"
     << "noise_std = " << fmt(c.data.noise_std) << "\n";
  if (!c.data.sigma_diag.empty()) os << "sigma_diag = " << join(c.data.sigma_diag) << "\n";
  if (!c.data.means.empty()) {
    std::vector<std::string> rows;
    for (const auto& r : c.data.means) rows.push_back(join(r));
    os << "means = ";
    for (std::size_t i = 0; i < rows.size(); ++i) os << (i ? ";" : "") << rows[i];
    os << "\n";
  }
  os << "component_std = " << fmt(c.data.component_std) << "\n";
  if (!c.data.path.empty()) os << "path = " << c.data.path << "\n";
  os << "header = " << (c.data.header ? "true" : "false") << "\n"
     << "standardize = " << (c.data.standardize ? "true" : "false") << "\n"
     << "train_frac = " << fmt(c.data.split.train) << "\n"
     << "val_frac = " << fmt(c.data.split.val) << "\n";
  if (c.data.seed) os << "seed = " << *c.data.seed << "\n";
  os << "\n[model]\n"
     << "D = " << c.arch.D << "\n"
     << "d = " << c.arch.d << "\n"
     << "hidden = " << join(c.arch.hidden) << "\n"
     << "block = " << to_string(c.arch.block) << "\n"
     << "res_blocks = " << c.arch.res_blocks << "\n"
     << "block_hidden = " << join(c.arch.block_hidden) << "\n"
     << "block_space = " << to_string(c.arch.block_space) << "\n"
     << "activation = " << ad::to_string(c.arch.activation) << "\n"
     << "tied = " << (c.arch.tied ? "true" : "false") << "\n\n";
  os << "[loss]\n"
     << "objective = " << to_string(c.objective) << "\n"
     << "beta = " << fmt(c.loss.beta) << "\n"
     << "k = " << c.loss.k << "\n"
     << "variant = " << to_string(c.loss.variant) << "\n"
     << "probe = " << (c.loss.probe_kind ? to_string(*c.loss.probe_kind) : "default") << "\n"
     << "noise_std = " << fmt(c.loss.noise_std) << "\n"
     << "cg_tol = " << fmt(c.loss.cg_tol) << "\n"
     << "cg_max_iter = " << c.loss.cg_max_iter << "\n\n";
  os << "[optim]\n"
     << "lr = " << fmt(c.opt.lr) << "\n"
     << "beta1 = " << fmt(c.opt.beta1) << "\n"
     << "beta2 = " << fmt(c.opt.beta2) << "\n"
     << "eps = " << fmt(c.opt.eps) << "\n"
     << "weight_decay = " << fmt(c.opt.weight_decay) << "\n"
     << "schedule = " << to_string(c.opt.schedule) << "\n"
     << "warmup_frac = " << fmt(c.opt.warmup_frac) << "\n"
     << "div_factor = " << fmt(c.opt.div_factor) << "\n"
     << "final_div_factor = " << fmt(c.opt.final_div_factor) << "\n"
     << "clip_norm = " << fmt(c.opt.clip_norm) << "\n\n";
  os << "[train]\n"
     << "epochs = " << c.epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "max_steps = " << c.max_steps << "\n"
     << "log_every = " << c.log_every << "\n"
     << "checkpoint_every = " << c.checkpoint_every << "\n\n";
  os << "[phase]\n"
     << "dataset = " << c.phase.dataset << "\n"
     << "betas = " << join(c.phase.betas) << "\n"
     << "runs = " << c.phase.runs << "\n";
  return os.str();
}

Dataset make_dataset(const DataSpec& spec, std::uint64_t experiment_seed) {
  const std::uint64_t seed = spec.seed.value_or(experiment_seed);
  if (spec.kind == "sinusoid") return gen_sinusoid(spec.n, spec.noise_std, seed, spec.split);
  if (spec.kind == "gaussian") {
    const Vector diag = Eigen::Map<const Vector>(spec.sigma_diag.data(),
                                                 static_cast<Eigen::Index>(spec.sigma_diag.size()));
    return gen_gaussian(spec.n, diag.asDiagonal(), seed, spec.split);
  }
  if (spec.kind == "gaussian_mixture") {
    const auto rows = static_cast<Eigen::Index>(spec.means.size());
    const auto cols = static_cast<Eigen::Index>(spec.means.front().size());
    Matrix means(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (static_cast<Eigen::Index>(spec.means[i].size()) != cols) {
        throw ConfigError("config key 'data.means': rows have different lengths");
      }
      for (Eigen::Index j = 0; j < cols; ++j) means(i, j) = spec.means[i][j];
    }
    return gen_gaussian_mixture(spec.n, means, spec.component_std, seed, spec.split);
  }
  SplitSpec s;
  s.fractions = spec.split;
  CsvOptions o;
  o.header = spec.header;
  o.standardize = spec.standardize;
  o.seed = seed;
  return load_csv(spec.path, s, o);
}

TrainConfig make_train_config(const RunConfig& c) {
  TrainConfig t;
  t.objective = c.objective;
  t.loss = c.loss;
  t.opt = c.opt;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.max_steps = c.max_steps;
  t.seed = c.seed;
  t.log_every = c.log_every;
  return t;
}

}  // namespace fif
