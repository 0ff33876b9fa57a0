#include "ddtcdr/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "json.hpp"

#include "ddtcdr/error.hpp"
#include "ddtcdr/log.hpp"
#include "ddtcdr/rng.hpp"

namespace ddtcdr::eval {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth, const char* what) {
  if (pred.empty() || truth.empty()) throw DataError(std::string(what) + ": empty input");
  if (pred.size() != truth.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " ratings");
  }
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

RankingMetrics precision_recall_at_k(std::span<const std::vector<ScoredItem>> users, std::size_t k,
                                     double tau) {
  if (k < 1) throw ConfigError("precision_recall_at_k: k must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("precision_recall_at_k: tau must be in (0, 1)");
  RankingMetrics out;
  double precision_sum = 0.0, recall_sum = 0.0;
  std::vector<std::size_t> order;
  for (const std::vector<ScoredItem>& items : users) {
    if (items.empty()) continue;
    order.resize(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return items[x].score > items[y].score; });
    const std::size_t shown = std::min(k, items.size());
    std::size_t hits = 0, relevant = 0;
    for (std::size_t r = 0; r < items.size(); ++r) {
      const bool rel = items[order[r]].truth >= tau;
      relevant += rel;
      if (r < shown) hits += rel;
    }
    ++out.users;
    precision_sum += static_cast<double>(hits) / static_cast<double>(shown);
    if (relevant > 0) {
      ++out.users_with_relevant;
      recall_sum += static_cast<double>(hits) / static_cast<double>(relevant);
    }
  }
  if (out.users == 0) throw DataError("precision_recall_at_k: empty test set");
  out.precision = precision_sum / static_cast<double>(out.users);
  out.recall_defined = out.users_with_relevant > 0;
  out.recall = out.recall_defined ? recall_sum / static_cast<double>(out.users_with_relevant)
                                  : std::nan("");
  return out;
}

// ---------------------------------------------------------------------------

void ExperimentSettings::validate() const {
  if (!(model.alpha >= 0.0 && model.alpha < 0.5)) {
    throw ConfigError("alpha " + std::to_string(model.alpha) + " outside [0, 0.5)");
  }
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must be in (0, 1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (autoencoder.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (fit.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (fit.train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double MetricsReport::rmse_std() const {
  const std::size_t n = seed_rmse.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(seed_rmse.begin(), seed_rmse.end(), 0.0) / n;
  double s = 0.0;
  for (double v : seed_rmse) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(n - 1));
}

std::array<DomainEncoders, 2> train_encoders(const DomainDataset& a, const DomainDataset& b,
                                             const AutoencoderConfig& config, std::uint64_t seed) {
  std::array<DomainEncoders, 2> out;
  const DomainDataset* sets[2] = {&a, &b};
  for (std::size_t d = 0; d < 2; ++d) {
    const DomainDataset& ds = *sets[d];
    auto train = [&](const std::unordered_map<std::string, RawFeatures>& table,
                     const std::vector<std::string>& ids, const FeatureSchema& schema,
                     Entity entity) {
      std::vector<Vector> vectors;
      vectors.reserve(ids.size());
      for (const std::string& id : ids) vectors.push_back(encode(schema, table.at(id)));
      AutoencoderConfig cfg = config;
      cfg.seed = derive_seed(seed, 20 + 2 * d + static_cast<std::size_t>(entity));
      TrainedAutoencoder t = train_autoencoder(vectors, cfg, ds.name, entity);
      log::debug("autoencoder " + ds.name + "/" + to_string(entity) + ": final loss " +
                 std::to_string(t.loss_trace.back()));
      return std::move(t.model);
    };
    out[d].user_schema = ds.user_schema;
    out[d].item_schema = ds.item_schema;
    out[d].user = train(ds.user_features, ds.user_ids(), ds.user_schema, Entity::user);
    out[d].item = train(ds.item_features, ds.item_ids(), ds.item_schema, Entity::item);
  }
  return out;
}

FitTrace fit_independent(DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b,
                         const FitConfig& config) {
  if (config.epochs < 1) throw ConfigError("fit: epochs must be >= 1");
  FitTrace trace;
  const EpochLosses initial = evaluate_loss(dm, a, b);
  trace.initial_a = initial.loss_a;
  trace.initial_b = initial.loss_b;
  double previous = initial.loss_a + initial.loss_b;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t seed = derive_seed(config.seed, epoch);
    trace.running_a.push_back(train_single_epoch(dm.rs_a, Domain::A, a, config.train.lr_a,
                                                 config.train.batch_size, seed));
    trace.running_b.push_back(train_single_epoch(dm.rs_b, Domain::B, b, config.train.lr_b,
                                                 config.train.batch_size, seed));
    const EpochLosses now = evaluate_loss(dm, a, b);
    trace.loss_a.push_back(now.loss_a);
    trace.loss_b.push_back(now.loss_b);
    const double combined = now.loss_a + now.loss_b;
    if (std::abs(combined - previous) < config.tol) {
      trace.converged = true;
      break;
    }
    previous = combined;
  }
  return trace;
}

std::vector<std::vector<std::size_t>> group_by_user(const DomainDataset& ds,
                                                    std::span<const std::size_t> records) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[ds.interactions[records[i]].user_id].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  out.reserve(groups.size());
  for (auto& [id, idx] : groups) out.push_back(std::move(idx));
  return out;
}

FoldMetrics score_domain(const DualModel& dm, Domain domain, const EmbeddedDomain& test,
                         std::span<const std::vector<std::size_t>> users, std::size_t k,
                         double tau) {
  std::vector<double> pred, truth;
  pred.reserve(test.size());
  truth.reserve(test.size());
  for (const EmbeddedSample& s : test) {
    pred.push_back(predict_embedded(dm, domain, s.user, s.item, s.user_in_both));
    truth.push_back(s.rating);
  }
  std::vector<std::vector<ScoredItem>> ranked;
  ranked.reserve(users.size());
  for (const std::vector<std::size_t>& group : users) {
    std::vector<ScoredItem> items;
    for (std::size_t i : group) items.push_back({pred.at(i), truth.at(i)});
    ranked.push_back(std::move(items));
  }
  const RankingMetrics rank = precision_recall_at_k(ranked, k, tau);
  FoldMetrics m;
  m.rmse = rmse(pred, truth);
  m.mae = mae(pred, truth);
  m.precision = rank.precision;
  m.recall = rank.recall;
  m.recall_defined = rank.recall_defined;
  return m;
}

namespace {

struct FoldTask {
  std::size_t seed_index;
  std::size_t fold;
};

struct FoldResult {
  std::array<FoldMetrics, 2> metrics;
};

void finalize(MetricsReport& r, std::size_t seeds, std::size_t folds) {
  const double n = static_cast<double>(r.folds.size());
  r.rmse = r.mae = r.precision_at_k = r.recall_at_k = 0.0;
  std::size_t recall_n = 0;
  for (const FoldMetrics& f : r.folds) {
    r.rmse += f.rmse;
    r.mae += f.mae;
    r.precision_at_k += f.precision;
    if (f.recall_defined) {
      r.recall_at_k += f.recall;
      ++recall_n;
    }
  }
  r.rmse /= n;
  r.mae /= n;
  r.precision_at_k /= n;
  r.recall_defined = recall_n > 0;
  r.recall_at_k = r.recall_defined ? r.recall_at_k / static_cast<double>(recall_n) : std::nan("");
  r.seed_rmse.assign(seeds, 0.0);
  for (const FoldMetrics& f : r.folds) r.seed_rmse[f.fold / folds] += f.rmse;
  for (double& v : r.seed_rmse) v /= static_cast<double>(folds);
}

}  // namespace

CvReport run_cv(const DomainDataset& a, const DomainDataset& b, const ExperimentSettings& settings,
                std::span<const std::uint64_t> seeds) {
  settings.validate();
  if (seeds.empty()) throw ConfigError("run_cv: at least one seed is required");
  a.validate();
  b.validate();
  check_disjoint_items(a, b);

  const std::size_t k = settings.folds;
  const std::unordered_set<std::string> shared = shared_users(a, b);
  std::vector<std::array<DomainEncoders, 2>> encoders;
  std::vector<std::array<FoldSplit, 2>> splits;
  for (std::uint64_t seed : seeds) {
    encoders.push_back(train_encoders(a, b, settings.autoencoder, seed));
    splits.push_back({kfold(a, k, derive_seed(seed, 30)), kfold(b, k, derive_seed(seed, 31))});
  }

  std::vector<FoldTask> tasks;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (std::size_t f = 0; f < k; ++f) tasks.push_back({s, f});
  }
  std::vector<FoldResult> results(tasks.size());

  auto run_task = [&](std::size_t t) {
    const FoldTask& task = tasks[t];
    const std::uint64_t seed = seeds[task.seed_index];
    const auto& enc = encoders[task.seed_index];
    const auto& split = splits[task.seed_index];
    DualModel dm = make_dual_model(settings.model, enc[0], enc[1], derive_seed(seed, 100 + task.fold));
    const std::vector<std::size_t> train_a = split[0].train_indices(task.fold);
    const std::vector<std::size_t> train_b = split[1].train_indices(task.fold);
    const std::vector<std::size_t> test_a = split[0].test_indices(task.fold);
    const std::vector<std::size_t> test_b = split[1].test_indices(task.fold);
    const EmbeddedDomain tr_a = embed_domain(dm, Domain::A, a, shared, train_a);
    const EmbeddedDomain tr_b = embed_domain(dm, Domain::B, b, shared, train_b);
    FitConfig fit_cfg = settings.fit;
    fit_cfg.seed = derive_seed(seed, 200 + task.fold);
    const FitTrace trace = settings.kind == ModelKind::dual
                               ? fit(dm, tr_a, tr_b, fit_cfg)
                               : fit_independent(dm, tr_a, tr_b, fit_cfg);
    FoldResult& out = results[t];
    const DomainDataset* sets[2] = {&a, &b};
    const std::vector<std::size_t>* tests[2] = {&test_a, &test_b};
    for (std::size_t d = 0; d < 2; ++d) {
      const Domain dom = d == 0 ? Domain::A : Domain::B;
      const EmbeddedDomain te = embed_domain(dm, dom, *sets[d], shared, *tests[d]);
      const auto users = group_by_user(*sets[d], *tests[d]);
      out.metrics[d] = score_domain(dm, dom, te, users, settings.top_k, settings.tau);
      out.metrics[d].fold = task.seed_index * k + task.fold;
      out.metrics[d].epochs = trace.epochs_run();
    }
    log::info("seed " + std::to_string(seed) + " fold " + std::to_string(task.fold) + ": rmse A " +
              format_double(out.metrics[0].rmse) + ", B " + format_double(out.metrics[1].rmse) +
              " after " + std::to_string(trace.epochs_run()) + " epochs");
  };

  const std::size_t workers = std::min(settings.threads, tasks.size());
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
          try {
            run_task(t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (std::thread& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  CvReport report;
  report.settings = settings;
  report.seeds.assign(seeds.begin(), seeds.end());
  report.domains[0].domain = a.name;
  report.domains[1].domain = b.name;
  for (std::size_t d = 0; d < 2; ++d) {
    report.domains[d].k = settings.top_k;
    for (const FoldResult& r : results) report.domains[d].folds.push_back(r.metrics[d]);
    finalize(report.domains[d], seeds.size(), k);
  }
  return report;
}

std::vector<SweepRow> alpha_sweep(const DomainDataset& a, const DomainDataset& b,
                                  std::span<const double> alphas,
                                  const ExperimentSettings& settings,
                                  std::span<const std::uint64_t> seeds) {
  if (alphas.empty()) throw ConfigError("alpha_sweep: no alpha values");
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha < 0.5)) {
      throw ConfigError("alpha_sweep: alpha " + std::to_string(alpha) + " outside [0, 0.5)");
    }
  }
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    ExperimentSettings s = settings;
    s.model.alpha = alpha;
    log::info("alpha sweep: alpha = " + format_double(alpha));
    rows.push_back({alpha, run_cv(a, b, s, seeds)});
  }
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::string metric(double v, bool defined = true) { return defined ? format_double(v) : "nan"; }

template <typename F>
void to_file(const std::filesystem::path& path, F&& write) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  write(os);
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace

void write_report_csv(std::ostream& os, const CvReport& report) {
  const std::string k = std::to_string(report.settings.top_k);
  os << "domain,fold,rmse,mae,precision_at_" << k << ",recall_at_" << k << '\n';
  for (const MetricsReport& d : report.domains) {
    for (const FoldMetrics& f : d.folds) {
      os << csv_escape(d.domain) << ',' << f.fold << ',' << metric(f.rmse) << ','
         << metric(f.mae) << ',' << metric(f.precision) << ',' << metric(f.recall, f.recall_defined)
         << '\n';
    }
  }
  for (const MetricsReport& d : report.domains) {
    os << csv_escape(d.domain) << ",mean," << metric(d.rmse) << ',' << metric(d.mae) << ','
       << metric(d.precision_at_k) << ',' << metric(d.recall_at_k, d.recall_defined) << '\n';
  }
}

void write_report_csv(const std::filesystem::path& path, const CvReport& report) {
  to_file(path, [&](std::ostream& os) { write_report_csv(os, report); });
}

std::string report_json(const CvReport& report) {
  using nlohmann::ordered_json;
  const ExperimentSettings& s = report.settings;
  ordered_json j;
  j["model"] = s.kind == ModelKind::dual ? "dual" : "independent";
  j["config"] = {{"alpha", s.model.alpha},
                 {"embed_dim", s.autoencoder.embed_dim},
                 {"hidden", s.model.hidden},
                 {"ae_epochs", s.autoencoder.epochs},
                 {"ae_lr", s.autoencoder.lr},
                 {"epochs", s.fit.epochs},
                 {"tol", s.fit.tol},
                 {"lr_a", s.fit.train.lr_a},
                 {"lr_b", s.fit.train.lr_b},
                 {"lr_map", s.fit.train.lr_map},
                 {"batch_size", s.fit.train.batch_size},
                 {"penalty_weight", s.fit.train.penalty_weight},
                 {"folds", s.folds},
                 {"top_k", s.top_k},
                 {"tau", s.tau}};
  j["seeds"] = report.seeds;
  ordered_json domains = ordered_json::array();
  for (const MetricsReport& d : report.domains) {
    ordered_json folds = ordered_json::array();
    for (const FoldMetrics& f : d.folds) {
      folds.push_back({{"fold", f.fold},
                       {"rmse", f.rmse},
                       {"mae", f.mae},
                       {"precision", f.precision},
                       {"recall", f.recall_defined ? ordered_json(f.recall) : ordered_json(nullptr)},
                       {"epochs", f.epochs}});
    }
    domains.push_back({{"domain", d.domain},
                       {"k", d.k},
                       {"rmse", d.rmse},
                       {"rmse_std", d.rmse_std()},
                       {"mae", d.mae},
                       {"precision_at_k", d.precision_at_k},
                       {"recall_at_k",
                        d.recall_defined ? ordered_json(d.recall_at_k) : ordered_json(nullptr)},
                       {"recall_defined", d.recall_defined},
                       {"seed_rmse", d.seed_rmse},
                       {"folds", folds}});
  }
  j["domains"] = domains;
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const CvReport& report) {
  to_file(path, [&](std::ostream& os) { os << report_json(report); });
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  const std::string k = rows.empty() ? "5" : std::to_string(rows.front().report.settings.top_k);
  os << "alpha,domain,rmse,rmse_std,mae,precision_at_" << k << ",recall_at_" << k << '\n';
  for (const SweepRow& row : rows) {
    for (const MetricsReport& d : row.report.domains) {
      os << format_double(row.alpha) << ',' << csv_escape(d.domain) << ',' << metric(d.rmse) << ','
         << metric(d.rmse_std()) << ',' << metric(d.mae) << ',' << metric(d.precision_at_k) << ','
         << metric(d.recall_at_k, d.recall_defined) << '\n';
    }
  }
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  to_file(path, [&](std::ostream& os) { write_sweep_csv(os, rows); });
}

void write_trace_csv(std::ostream& os, const FitTrace& trace) {
  os << "epoch,loss_a,loss_b\n";
  os << "0," << format_double(trace.initial_a) << ',' << format_double(trace.initial_b) << '\n';
  for (std::size_t e = 0; e < trace.loss_a.size(); ++e) {
    os << e + 1 << ',' << format_double(trace.loss_a[e]) << ',' << format_double(trace.loss_b[e])
       << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, const FitTrace& trace) {
  to_file(path, [&](std::ostream& os) { write_trace_csv(os, trace); });
}

}  // namespace ddtcdr::eval
