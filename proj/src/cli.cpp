#include "ddtcdr/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddtcdr/config.hpp"
#include "ddtcdr/dual_model.hpp"
#include "ddtcdr/error.hpp"
#include "ddtcdr/eval.hpp"
#include "ddtcdr/log.hpp"
#include "ddtcdr/nmf_lab.hpp"
#include "ddtcdr/synth.hpp"

namespace fs = std::filesystem;

namespace ddtcdr {

namespace {

constexpr const char* kEffectiveConfig = "effective_config.txt";

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

void prepare_out(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + cfg.out_dir.string());
  cfg.write(cfg.out_dir / kEffectiveConfig);
}

std::pair<DomainDataset, DomainDataset> load_pair(const ExperimentConfig& cfg) {
  DomainDataset a = load_domain_dir(cfg.data_dir, cfg.domain_a);
  DomainDataset b = load_domain_dir(cfg.data_dir, cfg.domain_b);
  check_disjoint_items(a, b);
  return {std::move(a), std::move(b)};
}

void cmd_synth(const ExperimentConfig& cfg, std::ostream& out) {
  SynthPair pair = synth_pair(cfg.synth());
  pair.a.name = cfg.domain_a;
  pair.b.name = cfg.domain_b;
  prepare_out(cfg);
  save_domain(cfg.out_dir, pair.a);
  save_domain(cfg.out_dir, pair.b);
  write_ground_truth(cfg.out_dir / "ground_truth.csv", pair.truth);
  out << "wrote " << pair.a.interactions.size() << " + " << pair.b.interactions.size()
      << " interactions to " << cfg.out_dir.string() << '\n';
}

fs::path model_path(const ExperimentConfig& cfg) {
  return cfg.model.empty() ? cfg.out_dir / "model.ddtc" : cfg.model;
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  const auto [a, b] = load_pair(cfg);
  const eval::ExperimentSettings s = cfg.settings();
  s.validate();
  auto enc = eval::train_encoders(a, b, s.autoencoder, cfg.seed);
  DualModel dm = make_dual_model(s.model, std::move(enc[0]), std::move(enc[1]), cfg.seed);
  const auto shared = shared_users(a, b);
  const EmbeddedDomain ea = embed_domain(dm, Domain::A, a, shared);
  const EmbeddedDomain eb = embed_domain(dm, Domain::B, b, shared);
  const FitTrace trace = fit(dm, ea, eb, s.fit);
  prepare_out(cfg);
  const fs::path path = model_path(cfg);
  dm.save(path);
  eval::write_trace_csv(cfg.out_dir / "trace.csv", trace);
  out << "trained " << trace.epochs_run() << " epochs (" << (trace.converged ? "" : "not ")
      << "converged); model written to " << path.string() << '\n';
}

void cmd_eval(const ExperimentConfig& cfg, std::ostream& out) {
  const auto [a, b] = load_pair(cfg);
  eval::CvReport report;
  if (!cfg.model.empty()) {
    const DualModel dm = DualModel::load(cfg.model);
    report.settings = cfg.settings();
    report.settings.model.alpha = dm.alpha;
    report.seeds = {cfg.seed};
    const auto shared = shared_users(a, b);
    const DomainDataset* sets[2] = {&a, &b};
    for (std::size_t d = 0; d < 2; ++d) {
      const Domain dom = d == 0 ? Domain::A : Domain::B;
      const EmbeddedDomain test = embed_domain(dm, dom, *sets[d], shared);
      std::vector<std::size_t> all(sets[d]->interactions.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto users = eval::group_by_user(*sets[d], all);
      eval::MetricsReport& m = report.domains[d];
      m.domain = sets[d]->name;
      m.k = cfg.top_k;
      m.folds.push_back(eval::score_domain(dm, dom, test, users, cfg.top_k, cfg.tau));
      const eval::FoldMetrics& f = m.folds.back();
      m.rmse = f.rmse;
      m.mae = f.mae;
      m.precision_at_k = f.precision;
      m.recall_at_k = f.recall;
      m.recall_defined = f.recall_defined;
      m.seed_rmse = {f.rmse};
    }
  } else {
    report = eval::run_cv(a, b, cfg.settings(), cfg.cv_seeds());
  }
  prepare_out(cfg);
  eval::write_report_csv(cfg.out_dir / "report.csv", report);
  eval::write_report_json(cfg.out_dir / "report.json", report);
  for (const eval::MetricsReport& m : report.domains) {
    out << m.domain << ": rmse " << format_double(m.rmse) << ", mae " << format_double(m.mae)
        << '\n';
  }
}

void cmd_sweep(const ExperimentConfig& cfg, std::ostream& out) {
  const auto [a, b] = load_pair(cfg);
  const auto rows = eval::alpha_sweep(a, b, cfg.alphas, cfg.settings(), cfg.cv_seeds());
  prepare_out(cfg);
  eval::write_sweep_csv(cfg.out_dir / "sweep.csv", rows);
  out << "swept " << rows.size() << " alpha values\n";
}

void cmd_nmf(const ExperimentConfig& cfg, std::ostream& out) {
  nmf::DualNmfProblem p =
      nmf::random_problem(cfg.nmf_rows, cfg.nmf_cols, cfg.nmf_rank, cfg.alpha, cfg.seed);
  const std::size_t m = nmf::matrix_rank(p.x);
  if (cfg.nmf_perturb) p = nmf::perturb_problem(p, cfg.nmf_scale);
  const nmf::Conditions cond = nmf::check_conditions(p);
  prepare_out(cfg);
  nmf::RunOptions opt;
  opt.max_iters = cfg.nmf_max_iters;
  opt.tol = cfg.nmf_tol;
  opt.seed = cfg.seed;
  const nmf::DualNmfState s = nmf::run_nmf(p, opt);

  std::ofstream trace(cfg.out_dir / "nmf_trace.csv", std::ios::binary);
  if (!trace) throw DataError("cannot write " + (cfg.out_dir / "nmf_trace.csv").string());
  trace << "iter,loss\n";
  double max_increase = 0.0;
  for (std::size_t i = 0; i < s.loss_trace.size(); ++i) {
    trace << i << ',' << format_double(s.loss_trace[i]) << '\n';
    if (i > 0) max_increase = std::max(max_increase, s.loss_trace[i] - s.loss_trace[i - 1]);
  }
  const double last_change = s.loss_trace.size() > 1
                                 ? std::abs(s.loss_trace.back() - s.loss_trace[s.loss_trace.size() - 2])
                                 : 0.0;
  nlohmann::ordered_json j;
  j["alpha"] = cfg.alpha;
  j["rows"] = cfg.nmf_rows;
  j["cols"] = cfg.nmf_cols;
  j["rank"] = cfg.nmf_rank;
  j["perturbation"] = cfg.nmf_perturb ? static_cast<double>(m) * cfg.nmf_scale : 0.0;
  j["conditions"] = {{"a", cond.a}, {"b", cond.b}, {"c", cond.c}};
  j["iterations"] = s.iterations();
  j["initial_loss"] = s.loss_trace.front();
  j["final_loss"] = s.loss_trace.back();
  j["final_reduced_loss"] = nmf::reduced_loss(nmf::reduce(p), s);
  j["last_change"] = last_change;
  j["converged"] = last_change < cfg.nmf_tol;
  j["max_increase"] = max_increase;
  std::ofstream summary(cfg.out_dir / "nmf_summary.json", std::ios::binary);
  summary << j.dump(2) << '\n';
  out << "dual NMF: " << s.iterations() << " iterations, final loss "
      << format_double(s.loss_trace.back()) << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-transfer cross-domain recommender: experiments and convergence lab", "ddtcdr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const ExperimentConfig&, std::ostream&);
  };
  const Sub subs[] = {
      {"synth", "Generate a synthetic domain pair", cmd_synth},
      {"train", "Train a dual model on a domain pair", cmd_train},
      {"eval", "Evaluate a saved model, or cross-validate when no model is given", cmd_eval},
      {"alpha-sweep", "Cross-validate over a grid of transfer rates", cmd_sweep},
      {"nmf-lab", "Run the dual matrix-factorization convergence experiment", cmd_nmf},
  };

  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::pair<CLI::App*, const Sub*>> apps;
  for (const Sub& sub : subs) {
    CLI::App* sc = app.add_subcommand(sub.name, sub.help);
    sc->add_option("--config,-c", config_path, "Flat key = value config file");
    for (const std::string& key : ExperimentConfig::keys()) {
      std::string names = flag_name(key);
      if (key == "out_dir") names += ",--out,-o";
      if (key == "data_dir") names += ",--data,-d";
      options[std::string(sub.name) + "/" + key] = sc->add_option(names, values[key]);
    }
    apps.emplace_back(sc, &sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    for (const auto& [sc, sub] : apps) {
      if (!sc->parsed()) continue;
      ExperimentConfig cfg;
      if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw DataError("cannot open config " + config_path);
        cfg = parse_config(is, config_path);
      }
      for (const std::string& key : ExperimentConfig::keys()) {
        if (options[std::string(sub->name) + "/" + key]->count() > 0) cfg.set(key, values[key]);
      }
      if (!cfg.mode.empty() && cfg.mode != sub->name) {
        throw ConfigError("config mode '" + cfg.mode + "' does not match subcommand '" +
                          sub->name + "'");
      }
      cfg.mode = sub->name;
      cfg.validate();
      sub->run(cfg, out);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace ddtcdr
