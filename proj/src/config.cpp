#include "ddtcdr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>

#include "ddtcdr/error.hpp"

namespace ddtcdr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + want);
}

void parse(const std::string& key, const std::string& v, double& out) {
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) bad_value(key, v, "a finite number");
}

void parse(const std::string& key, const std::string& v, std::size_t& out) {
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "a non-negative integer");
}

void parse(const std::string&, const std::string& v, std::string& out) { out = v; }
void parse(const std::string&, const std::string& v, std::filesystem::path& out) { out = v; }

void parse(const std::string& key, const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
  } else if (v == "false" || v == "0") {
    out = false;
  } else {
    bad_value(key, v, "true or false");
  }
}

template <typename T>
void parse(const std::string& key, const std::string& v, std::vector<T>& out) {
  out.clear();
  if (v.empty()) return;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = v.find(',', start);
    T item{};
    parse(key, trim(std::string_view(v).substr(start, comma - start)), item);
    out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
}

std::string format(double v) { return format_double(v); }
std::string format(std::size_t v) { return std::to_string(v); }
std::string format(const std::string& v) { return v; }
std::string format(const std::filesystem::path& v) { return v.generic_string(); }
std::string format(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string format(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format(v[i]);
  return out;
}

struct Field {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field field(std::string name, T ExperimentConfig::*member) {
  return {name,
          [name, member](ExperimentConfig& c, const std::string& v) { parse(name, v, c.*member); },
          [member](const ExperimentConfig& c) { return format(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("mode", &ExperimentConfig::mode),
      field("data_dir", &ExperimentConfig::data_dir),
      field("out_dir", &ExperimentConfig::out_dir),
      field("model", &ExperimentConfig::model),
      field("domain_a", &ExperimentConfig::domain_a),
      field("domain_b", &ExperimentConfig::domain_b),
      field("alpha", &ExperimentConfig::alpha),
      field("embed_dim", &ExperimentConfig::embed_dim),
      field("hidden", &ExperimentConfig::hidden),
      field("epochs", &ExperimentConfig::epochs),
      field("tol", &ExperimentConfig::tol),
      field("lr_a", &ExperimentConfig::lr_a),
      field("lr_b", &ExperimentConfig::lr_b),
      field("lr_map", &ExperimentConfig::lr_map),
      field("batch_size", &ExperimentConfig::batch_size),
      field("penalty_weight", &ExperimentConfig::penalty_weight),
      field("ae_lr", &ExperimentConfig::ae_lr),
      field("ae_epochs", &ExperimentConfig::ae_epochs),
      field("ae_batch_size", &ExperimentConfig::ae_batch_size),
      field("folds", &ExperimentConfig::folds),
      field("top_k", &ExperimentConfig::top_k),
      field("tau", &ExperimentConfig::tau),
      field("threads", &ExperimentConfig::threads),
      field("seed", &ExperimentConfig::seed),
      field("seeds", &ExperimentConfig::seeds),
      field("alphas", &ExperimentConfig::alphas),
      field("n_users", &ExperimentConfig::n_users),
      field("n_items", &ExperimentConfig::n_items),
      field("latent_dim", &ExperimentConfig::latent_dim),
      field("rho", &ExperimentConfig::rho),
      field("noise", &ExperimentConfig::noise),
      field("density", &ExperimentConfig::density),
      field("nmf_rows", &ExperimentConfig::nmf_rows),
      field("nmf_cols", &ExperimentConfig::nmf_cols),
      field("nmf_rank", &ExperimentConfig::nmf_rank),
      field("nmf_max_iters", &ExperimentConfig::nmf_max_iters),
      field("nmf_tol", &ExperimentConfig::nmf_tol),
      field("nmf_scale", &ExperimentConfig::nmf_scale),
      field("nmf_perturb", &ExperimentConfig::nmf_perturb),
  };
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (f.name == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> modes = {"", "synth", "train", "eval", "alpha-sweep",
                                              "nmf-lab"};
  require(modes.count(mode) > 0, "mode '" + mode +
                                     "' must be one of synth, train, eval, alpha-sweep, nmf-lab");
  require(!domain_a.empty() && !domain_b.empty() && domain_a != domain_b,
          "domain_a and domain_b must be distinct non-empty names");
  auto alpha_ok = [](double a) { return a >= 0.0 && a < 0.5; };
  require(alpha_ok(alpha), "alpha " + format_double(alpha) + " outside [0, 0.5)");
  for (double a : alphas) {
    require(alpha_ok(a), "alphas entry " + format_double(a) + " outside [0, 0.5)");
  }
  require(!alphas.empty(), "alphas must list at least one value");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(!hidden.empty(), "hidden must list at least one layer width");
  for (std::size_t h : hidden) require(h >= 1, "hidden layer widths must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(tol >= 0.0, "tol must be >= 0");
  require(lr_a > 0.0, "lr_a must be > 0");
  require(lr_b > 0.0, "lr_b must be > 0");
  require(lr_map >= 0.0, "lr_map must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(penalty_weight >= 0.0, "penalty_weight must be >= 0");
  require(ae_lr > 0.0, "ae_lr must be > 0");
  require(ae_epochs >= 1, "ae_epochs must be >= 1");
  require(ae_batch_size >= 1, "ae_batch_size must be >= 1");
  require(folds >= 2, "folds must be >= 2");
  require(top_k >= 1, "top_k must be >= 1");
  require(tau > 0.0 && tau < 1.0, "tau " + format_double(tau) + " outside (0, 1)");
  require(threads >= 1, "threads must be >= 1");
  require(n_users >= 1, "n_users must be >= 1");
  require(n_items >= 1, "n_items must be >= 1");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(rho >= 0.0 && rho <= 1.0, "rho " + format_double(rho) + " outside [0, 1]");
  require(noise >= 0.0, "noise must be >= 0");
  require(density > 0.0 && density <= 1.0, "density " + format_double(density) +
                                                " outside (0, 1]");
  require(nmf_rows >= 1 && nmf_cols >= 1, "nmf_rows and nmf_cols must be >= 1");
  require(nmf_rank >= 1, "nmf_rank must be >= 1");
  require(nmf_max_iters >= 1, "nmf_max_iters must be >= 1");
  require(nmf_tol >= 0.0, "nmf_tol must be >= 0");
  require(nmf_scale > 0.0, "nmf_scale must be > 0");
}

void ExperimentConfig::write(std::ostream& os) const {
  for (const Field& f : fields()) os << f.name << " = " << f.get(*this) << '\n';
}

void ExperimentConfig::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  write(os);
}

std::vector<std::uint64_t> ExperimentConfig::cv_seeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

eval::ExperimentSettings ExperimentConfig::settings() const {
  eval::ExperimentSettings s;
  s.model.alpha = alpha;
  s.model.hidden = hidden;
  s.autoencoder.embed_dim = embed_dim;
  s.autoencoder.lr = ae_lr;
  s.autoencoder.epochs = ae_epochs;
  s.autoencoder.batch_size = ae_batch_size;
  s.fit.epochs = epochs;
  s.fit.tol = tol;
  s.fit.train.lr_a = lr_a;
  s.fit.train.lr_b = lr_b;
  s.fit.train.lr_map = lr_map;
  s.fit.train.batch_size = batch_size;
  s.fit.train.penalty_weight = penalty_weight;
  s.fit.seed = seed;
  s.folds = folds;
  s.top_k = top_k;
  s.tau = tau;
  s.threads = threads;
  return s;
}

SynthConfig ExperimentConfig::synth() const {
  SynthConfig s;
  s.n_users = n_users;
  s.n_items_per_domain = n_items;
  s.latent_dim = latent_dim;
  s.rho = rho;
  s.noise = noise;
  s.density = density;
  s.seed = seed;
  return s;
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config " + path.string());
  ExperimentConfig cfg = parse_config(is, path.string());
  cfg.validate();
  return cfg;
}

}  // namespace ddtcdr
