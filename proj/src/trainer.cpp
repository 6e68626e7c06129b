#include "fif/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fif/errors.hpp"
#include "fif/rng.hpp"

namespace fif {

namespace {

constexpr char kMagic[8] = {'F', 'I', 'F', 'C', 'K', 'P', 'T', '\0'};

enum class SectionType : std::uint8_t { F64 = 0, Str = 1, I64 = 2 };

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  std::uint64_t u64() { return read(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read(4)); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(read(1)); }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) throw CheckpointError("checkpoint: truncated data");
  }
  std::uint64_t read(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

struct Section {
  SectionType type;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  std::string str;
};

class SectionWriter {
 public:
  void f64(const std::string& name, const Vector& v) {
    head(name, SectionType::F64, static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) put_u64(body_, std::bit_cast<std::uint64_t>(v(i)));
  }
  void i64(const std::string& name, const std::vector<std::int64_t>& v) {
    head(name, SectionType::I64, v.size());
    for (std::int64_t x : v) put_u64(body_, static_cast<std::uint64_t>(x));
  }
  void str(const std::string& name, const std::string& s) {
    head(name, SectionType::Str, s.size());
    body_ += s;
  }
  std::string finish() const {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kCheckpointVersion);
    put_u32(out, count_);
    return out + body_;
  }

 private:
  void head(const std::string& name, SectionType t, std::uint64_t n) {
    put_u32(body_, static_cast<std::uint32_t>(name.size()));
    body_ += name;
    body_.push_back(static_cast<char>(t));
    put_u64(body_, n);
    ++count_;
  }
  std::string body_;
  std::uint32_t count_ = 0;
};

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

}  // namespace

std::string to_string(Schedule s) { return s == Schedule::Constant ? "constant" : "onecycle"; }

Schedule schedule_from_string(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "onecycle") return Schedule::OneCycle;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

double lr_at(const OptimHyper& h, std::int64_t step, std::int64_t total) {
  if (h.schedule == Schedule::Constant || total <= 1) return h.lr;
  const double initial = h.lr / h.div_factor;
  const double final_lr = initial / h.final_div_factor;
  const double warm = std::max(1.0, h.warmup_frac * static_cast<double>(total) - 1.0);
  const auto s = static_cast<double>(std::clamp<std::int64_t>(step, 0, total - 1));
  auto anneal = [](double from, double to, double pct) {
    return to + 0.5 * (from - to) * (1.0 + std::cos(std::numbers::pi * pct));
  };
  if (s <= warm) return anneal(initial, h.lr, s / warm);
  const double rest = std::max(1.0, static_cast<double>(total - 1) - warm);
  return anneal(h.lr, final_lr, (s - warm) / rest);
}

void adam_step(Vector& params, const Vector& grad, AdamMoments& mom, std::int64_t t, double lr,
               const OptimHyper& h) {
  if (grad.size() != params.size()) throw DimensionError("adam_step: gradient length mismatch");
  if (mom.m.size() != params.size()) {
    mom.m = Vector::Zero(params.size());
    mom.v = Vector::Zero(params.size());
  }
  if (t < 1) throw std::invalid_argument("adam_step: step count must be >= 1");
  mom.m = h.beta1 * mom.m + (1.0 - h.beta1) * grad;
  mom.v = h.beta2 * mom.v + (1.0 - h.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  if (h.weight_decay != 0.0) params *= 1.0 - lr * h.weight_decay;
  params.array() -= lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + h.eps);
}

void MetricsLog::add(std::int64_t step, const std::string& metric, double value) {
  rows_.push_back({step, metric, value});
}

double MetricsLog::last(const std::string& metric) const {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it) {
    if (it->metric == metric) return it->value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> MetricsLog::series(const std::string& metric) const {
  std::vector<double> out;
  for (const MetricRow& r : rows_) {
    if (r.metric == metric) out.push_back(r.value);
  }
  return out;
}

std::string MetricsLog::csv_header() { return "run_id,step,metric,value"; }

std::string MetricsLog::csv_row(const MetricRow& r) const {
  return run_id_ + "," + std::to_string(r.step) + "," + r.metric + "," + format_double(r.value);
}

void MetricsLog::write_csv(std::ostream& os) const {
  os << csv_header() << '\n';
  for (const MetricRow& r : rows_) os << csv_row(r) << '\n';
}

void MetricsLog::truncate(std::size_t rows) {
  if (rows < rows_.size()) rows_.resize(rows);
}

nlohmann::json arch_to_json(const ArchSpec& a) {
  return {{"D", a.D},
          {"d", a.d},
          {"hidden", a.hidden},
          {"block", to_string(a.block)},
          {"res_blocks", a.res_blocks},
          {"block_hidden", a.block_hidden},
          {"block_space", to_string(a.block_space)},
          {"activation", ad::to_string(a.activation)},
          {"tied", a.tied},
          {"seed", a.seed}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec a;
  a.D = j.at("D").get<int>();
  a.d = j.at("d").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.block = j.at("block").get<std::string>() == "mlp" ? BlockType::Mlp : BlockType::Residual;
  a.res_blocks = j.at("res_blocks").get<int>();
  a.block_hidden = j.at("block_hidden").get<std::vector<int>>();
  a.block_space =
      j.at("block_space").get<std::string>() == "latent" ? BlockSpace::Latent : BlockSpace::Data;
  a.activation = ad::activation_from_string(j.at("activation").get<std::string>());
  a.tied = j.value("tied", false);
  a.seed = j.at("seed").get<std::uint64_t>();
  return a;
}

std::string arch_diff(const ArchSpec& e, const ArchSpec& f) {
  std::ostringstream os;
  auto field = [&](const char* name, const std::string& a, const std::string& b) {
    if (a != b) os << "  " << name << ": expected " << a << ", found " << b << '\n';
  };
  field("D", std::to_string(e.D), std::to_string(f.D));
  field("d", std::to_string(e.d), std::to_string(f.d));
  field("hidden", join(e.hidden), join(f.hidden));
  field("block", to_string(e.block), to_string(f.block));
  field("res_blocks", std::to_string(e.res_blocks), std::to_string(f.res_blocks));
  field("block_hidden", join(e.block_hidden), join(f.block_hidden));
  field("block_space", to_string(e.block_space), to_string(f.block_space));
  field("activation", ad::to_string(e.activation), ad::to_string(f.activation));
  field("tied", e.tied ? "true" : "false", f.tied ? "true" : "false");
  field("seed", std::to_string(e.seed), std::to_string(f.seed));
  return os.str();
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  SectionWriter w;
  w.str("arch", arch_to_json(c.arch).dump());
  w.f64("phi", c.phi);
  w.f64("theta", c.theta);
  w.f64("adam.m.phi", c.opt.phi.m);
  w.f64("adam.v.phi", c.opt.phi.v);
  w.f64("adam.m.theta", c.opt.theta.m);
  w.f64("adam.v.theta", c.opt.theta.v);
  w.i64("state", {c.opt.step, c.epoch, c.batch, c.metrics_cursor,
                  static_cast<std::int64_t>(c.seed)});
  w.str("config_hash", c.config_hash);
  return w.finish();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || bytes.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: bad magic header");
  }
  Reader r(bytes);
  r.bytes(sizeof(kMagic));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Section>> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    Section s;
    s.type = static_cast<SectionType>(r.u8());
    const std::uint64_t n = r.u64();
    switch (s.type) {
      case SectionType::F64:
        for (std::uint64_t k = 0; k < n; ++k) s.f64.push_back(std::bit_cast<double>(r.u64()));
        break;
      case SectionType::I64:
        for (std::uint64_t k = 0; k < n; ++k) s.i64.push_back(static_cast<std::int64_t>(r.u64()));
        break;
      case SectionType::Str:
        s.str = r.bytes(n);
        break;
      default:
        throw CheckpointError("checkpoint: unknown section type in '" + name + "'");
    }
    sections.emplace_back(name, std::move(s));
  }
  if (!r.at_end()) throw CheckpointError("checkpoint: trailing bytes");
  auto get = [&](const std::string& name, SectionType t) -> const Section& {
    for (const auto& [n, s] : sections) {
      if (n == name) {
        if (s.type != t) throw CheckpointError("checkpoint: section '" + name + "' has wrong type");
        return s;
      }
    }
    throw CheckpointError("checkpoint: missing section '" + name + "'");
  };
  Checkpoint c;
  try {
    c.arch = arch_from_json(nlohmann::json::parse(get("arch", SectionType::Str).str));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad arch section: ") + e.what());
  }
  c.phi = to_vector(get("phi", SectionType::F64).f64);
  c.theta = to_vector(get("theta", SectionType::F64).f64);
  c.opt.phi.m = to_vector(get("adam.m.phi", SectionType::F64).f64);
  c.opt.phi.v = to_vector(get("adam.v.phi", SectionType::F64).f64);
  c.opt.theta.m = to_vector(get("adam.m.theta", SectionType::F64).f64);
  c.opt.theta.v = to_vector(get("adam.v.theta", SectionType::F64).f64);
  const auto& st = get("state", SectionType::I64).i64;
  if (st.size() != 5) throw CheckpointError("checkpoint: bad state section");
  c.opt.step = st[0];
  c.epoch = st[1];
  c.batch = st[2];
  c.metrics_cursor = st[3];
  c.seed = static_cast<std::uint64_t>(st[4]);
  c.config_hash = get("config_hash", SectionType::Str).str;
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string bytes = serialize_checkpoint(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

Trainer::Trainer(NetworkPair np, const Dataset& ds, TrainConfig cfg, std::string run_id)
    : np_(std::move(np)), ds_(&ds), cfg_(std::move(cfg)), log_(std::move(run_id)) {
  cfg_.loss.validate();
  if (ds.dim() != np_.spec.D) {
    throw DimensionError("Trainer: dataset dimension " + std::to_string(ds.dim()) +
                         " does not match D=" + std::to_string(np_.spec.D));
  }
  if (cfg_.batch_size < 1 || cfg_.epochs < 0) {
    throw std::invalid_argument("Trainer: batch_size must be >= 1, epochs >= 0");
  }
  const Eigen::Index n = ds.train.size();
  if (n < 1) throw std::invalid_argument("Trainer: empty train split");
  batches_per_epoch_ = (n + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = cfg_.max_steps > 0 ? cfg_.max_steps : batches_per_epoch_ * cfg_.epochs;
}

std::vector<Eigen::Index> Trainer::permutation(std::int64_t epoch) const {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(ds_->train.size()));
  std::iota(idx.begin(), idx.end(), ds_->train.begin);
  if (cfg_.shuffle) {
    Rng rng(cfg_.seed, {0x73687566, static_cast<std::uint64_t>(epoch)});
    // Fisher-Yates with our own index draws; std::shuffle's algorithm is
    // implementation-defined and would break cross-platform replay.
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(idx[i - 1], idx[j]);
    }
  }
  return idx;
}

bool Trainer::step() {
  if (done()) return false;
  if (perm_epoch_ != epoch_) {
    perm_ = permutation(epoch_);
    perm_epoch_ = epoch_;
  }
  const std::vector<Eigen::Index>& perm = perm_;
  const auto begin = static_cast<std::size_t>(batch_ * cfg_.batch_size);
  const std::size_t end = std::min(perm.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
  Matrix xb(static_cast<Eigen::Index>(end - begin), ds_->dim());
  for (std::size_t i = begin; i < end; ++i) {
    xb.row(static_cast<Eigen::Index>(i - begin)) = ds_->x.row(perm[i]);
  }

  const Rng rng(cfg_.seed, {0x6c6f7373, static_cast<std::uint64_t>(epoch_),
                            static_cast<std::uint64_t>(batch_)});
  LossGraph lg = build_loss(cfg_.objective, np_, xb, cfg_.loss, rng);
  auto [g_phi, g_theta] = lg.gradients();
  if (!g_phi.allFinite() || !g_theta.allFinite()) {
    throw NumericalError("training: non-finite gradient at step " + std::to_string(opt_.step));
  }
  if (np_.spec.tied) {
    g_phi = tied_gradient(np_, g_phi, g_theta);
    g_theta.setZero();
  }
  if (cfg_.opt.clip_norm > 0.0) {
    const double norm = std::sqrt(g_phi.squaredNorm() + g_theta.squaredNorm());
    if (norm > cfg_.opt.clip_norm) {
      g_phi *= cfg_.opt.clip_norm / norm;
      g_theta *= cfg_.opt.clip_norm / norm;
    }
  }
  const double lr = lr_at(cfg_.opt, opt_.step, total_steps_);
  ++opt_.step;
  adam_step(np_.phi, g_phi, opt_.phi, opt_.step, lr, cfg_.opt);
  if (np_.spec.tied) {
    retie(np_);
  } else {
    adam_step(np_.theta, g_theta, opt_.theta, opt_.step, lr, cfg_.opt);
  }

  if (cfg_.log_every > 0 && opt_.step % cfg_.log_every == 0) {
    log_.add(opt_.step, "loss", lg.breakdown.total);
    log_.add(opt_.step, "nll_prior", lg.breakdown.nll_prior);
    log_.add(opt_.step, "surrogate", lg.breakdown.surrogate);
    log_.add(opt_.step, "recon", lg.breakdown.recon);
    log_.add(opt_.step, "lr", lr);
  }
  if (on_step) on_step({opt_.step, epoch_, lg.breakdown, lr});

  if (++batch_ == batches_per_epoch_) {
    validate_epoch(epoch_);
    if (on_epoch_end) on_epoch_end(epoch_);
    ++epoch_;
    batch_ = 0;
  }
  return true;
}

void Trainer::run() {
  while (step()) {
  }
}

void Trainer::validate_epoch(std::int64_t epoch) {
  if (ds_->val.size() < 1) return;
  const Matrix xv = ds_->val_x();
  const Matrix z = np_.encode(xv);
  const Matrix xh = np_.decode(z);
  const double recon = (xh - xv).rowwise().squaredNorm().mean();
  const double nll = neg_log_prior(z).mean();
  if (!std::isfinite(recon) || !std::isfinite(nll)) {
    throw NumericalError("training: non-finite validation metrics after epoch " +
                         std::to_string(epoch));
  }
  log_.add(opt_.step, "val_recon", recon);
  log_.add(opt_.step, "val_nll_prior", nll);
}

Checkpoint Trainer::checkpoint(const std::string& config_hash) const {
  Checkpoint c;
  c.arch = np_.spec;
  c.phi = np_.phi;
  c.theta = np_.theta;
  c.opt = opt_;
  c.epoch = epoch_;
  c.batch = batch_;
  c.seed = cfg_.seed;
  c.config_hash = config_hash;
  c.metrics_cursor = static_cast<std::int64_t>(log_.rows().size());
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  const std::string diff = arch_diff(np_.spec, c.arch);
  if (!diff.empty()) {
    throw CheckpointError("checkpoint architecture does not match the configured one:\n" + diff);
  }
  if (c.phi.size() != np_.phi.size() || c.theta.size() != np_.theta.size()) {
    throw CheckpointError("checkpoint parameter lengths do not match the architecture");
  }
  np_.phi = c.phi;
  np_.theta = c.theta;
  opt_ = c.opt;
  epoch_ = c.epoch;
  batch_ = c.batch;
  log_.truncate(static_cast<std::size_t>(c.metrics_cursor));
}

}  // namespace fif
