#include "btn/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "btn/checkpoint.hpp"

namespace btn {

namespace fs = std::filesystem;

namespace {

void require_seed(const RunConfig& cfg, const char* what) {
  if (!cfg.seed) throw std::invalid_argument(std::string(what) + ": a seed is required (--seed or [run] seed)");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<JetEvent> read_split(const fs::path& path, const char* name) {
  if (!fs::exists(path)) throw std::runtime_error(std::string(name) + " set not found: " + path.string());
  return read_dataset(path);
}

std::string format_epoch(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%llu %.10g %.10g %.10g", static_cast<unsigned long long>(r.epoch), r.train_loss,
                r.val_loss, r.val_auc);
  return buf;
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.model_class == b.model_class && a.bilinear == b.bilinear && a.so2 == b.so2 &&
         a.scalar_activation == b.scalar_activation &&
         a.latent_dim == b.latent_dim && a.hidden_width == b.hidden_width && a.rep_width == b.rep_width;
}

}  // namespace

GenSummary cmd_gen(RunConfig cfg, std::ostream& log) {
  require_seed(cfg, "gen");
  cfg.resolve();
  cfg.gen.validate();
  for (const auto& p : {cfg.train_path, cfg.val_path, cfg.test_path})
    if (p.has_parent_path()) ensure_dir(p.parent_path());
  ensure_dir(cfg.data_dir);
  const std::array<std::pair<fs::path, std::size_t>, 3> splits{
      {{cfg.train_path, cfg.n_train}, {cfg.val_path, cfg.n_val}, {cfg.test_path, cfg.n_test}}};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto events = generate_events(cfg.gen, splits[s].second, s);
    write_dataset(splits[s].first, events);
    log << "wrote " << events.size() << " events to " << splits[s].first.string() << "\n";
  }
  write_text(cfg.data_dir / "config.ini", cfg.to_ini());
  return {cfg.n_train, cfg.n_val, cfg.n_test};
}

TrainResult cmd_train(RunConfig cfg, std::ostream& log) {
  require_seed(cfg, "train");
  cfg.resolve();
  const auto train = read_split(cfg.train_path, "training");
  const auto val = read_split(cfg.val_path, "validation");
  ensure_dir(cfg.out_dir);

  std::optional<Checkpoint> resume;
  if (!cfg.resume.empty()) {
    resume = load_checkpoint(cfg.resume);
    if (!same_architecture(resume->config, cfg.model))
      log << "resuming with the architecture recorded in " << cfg.resume.string() << "\n";
    cfg.model = resume->config;
  }
  Model model(cfg.model);
  write_text(cfg.out_dir / "config.ini", cfg.to_ini());

  const fs::path log_path = cfg.out_dir / "metrics.log";
  std::ofstream metrics(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + log_path.string());
  if (!resume) metrics << "# epoch train_loss val_loss val_auc\n";
  log << cfg.model.label() << ": " << model.parameter_count() << " parameters, " << train.size() << " training events\n";

  const TrainResult result = train_model(model, train, val, cfg.train, resume, [&](const EpochRecord& r) {
    metrics << format_epoch(r) << "\n" << std::flush;
    log << "epoch " << format_epoch(r) << "\n";
  });
  save_checkpoint(cfg.out_dir / "model.ckpt", make_checkpoint(model, result.best_epoch));
  save_checkpoint(cfg.out_dir / "last.ckpt", result.last);
  log << "best epoch " << result.best_epoch << " (val_loss " << result.best_val_loss << ")"
      << (result.stopped_early ? ", stopped early" : "") << "\n";
  return result;
}

RocSummary cmd_eval(RunConfig cfg, std::ostream& log, bool check_model) {
  cfg.resolve();
  if (!fs::exists(cfg.checkpoint)) throw std::runtime_error("checkpoint not found: " + cfg.checkpoint.string());
  const Checkpoint ck = load_checkpoint(cfg.checkpoint);
  if (check_model && !same_architecture(ck.config, cfg.model))
    throw std::runtime_error("checkpoint " + cfg.checkpoint.string() + " holds " + ck.config.label() +
                             " but the configuration asks for " + cfg.model.label());
  const auto test = read_split(cfg.test_path, "test");
  Model model = restore_model(ck);
  const auto scores = score_events(model, test);
  const RocSummary summary = summarize_roc(scores);

  ensure_dir(cfg.out_dir);
  std::ostringstream o;
  o << std::setprecision(10);
  o << "model " << ck.config.label() << "\nepoch " << ck.epoch << "\nauc " << summary.auc << "\nr70 "
    << summary.r70 << "\nr85 " << summary.r85 << "\nn_signal " << summary.n_signal << "\nn_background "
    << summary.n_background << "\n";
  write_text(cfg.out_dir / "eval.txt", o.str() + "\n# resolved configuration\n" + cfg.to_ini());
  write_roc_curve(cfg.out_dir / "roc.txt", summary.curve);
  log << o.str();
  return summary;
}

bool cmd_check(const CheckOptions& opt, std::ostream& log) {
  const auto lines = run_checks(opt);
  std::size_t width = 0;
  for (const auto& l : lines) width = std::max(width, l.name.size());
  bool all = true;
  for (const auto& l : lines) {
    all = all && l.pass;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e  (tol %.0e)", l.residual, l.tolerance);
    log << (l.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width)) << l.name << "  "
        << buf << "\n";
  }
  log << (all ? "all checks passed" : "CHECKS FAILED") << "\n";
  return all;
}

std::vector<AblationRow> ablation_ladder(const ModelConfig& base, bool aug_row) {
  std::vector<AblationRow> rows;
  auto add = [&](ModelClass c, bool bil, bool so2, bool aug = false) {
    AblationRow r;
    r.model = base;
    r.model.model_class = c;
    r.model.bilinear = bil;
    r.model.so2 = so2;
    r.augment = aug;
    r.label = r.model.label() + (aug ? "+Aug" : "");
    rows.push_back(std::move(r));
  };
  add(ModelClass::baseline_pfn, false, false);
  if (aug_row) add(ModelClass::baseline_pfn, false, false, true);
  add(ModelClass::vector, false, false);
  add(ModelClass::vector, true, false);
  add(ModelClass::vector, true, true);
  add(ModelClass::tensor, false, false);
  add(ModelClass::tensor, true, false);
  add(ModelClass::tensor, true, true);
  return rows;
}

void summarize_ablation(std::vector<AblationRow>& rows) {
  if (rows.empty()) return;
  for (auto& row : rows) {
    row.auc_stats = median_iqr(row.auc);
    row.r70_stats = median_iqr(row.r70);
    row.r85_stats = median_iqr(row.r85);
  }
  for (auto& row : rows) {
    row.r70_gain = row.r70_stats.median / rows.front().r70_stats.median - 1.0;
    row.r85_gain = row.r85_stats.median / rows.front().r85_stats.median - 1.0;
  }
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  auto cell = [](const MedianIqr& m, int precision) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(precision) << m.median << " +- " << m.iqr;
    return o.str();
  };
  auto gain = [](double g) {
    if (!std::isfinite(g)) return std::string("n/a");
    std::ostringstream o;
    o << std::showpos << std::fixed << std::setprecision(1) << 100.0 * g << "%";
    return o.str();
  };
  std::vector<std::array<std::string, 6>> table{{"model", "AUC", "R70", "R85", "dR70", "dR85"}};
  for (const auto& r : rows)
    table.push_back({r.label, cell(r.auc_stats, 4), cell(r.r70_stats, 1), cell(r.r85_stats, 1), gain(r.r70_gain),
                     gain(r.r85_gain)});
  std::array<std::size_t, 6> w{};
  for (const auto& row : table)
    for (std::size_t c = 0; c < 6; ++c) w[c] = std::max(w[c], row[c].size());
  std::ostringstream o;
  for (const auto& row : table) {
    for (std::size_t c = 0; c < 6; ++c) {
      o << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(w[c])) << row[c];
      o << (c + 1 < 6 ? "   " : "\n");
    }
  }
  o << "(median +- IQR over runs; dR = R / R_baseline - 1)\n";
  return o.str();
}

std::vector<AblationRow> cmd_ablate(RunConfig cfg, std::ostream& log) {
  cfg.resolve();
  if (cfg.n_seeds == 0) throw std::invalid_argument("ablate: n_seeds must be positive");
  const auto train = read_split(cfg.train_path, "training");
  const auto val = read_split(cfg.val_path, "validation");
  const auto test = read_split(cfg.test_path, "test");
  ensure_dir(cfg.out_dir);
  const std::uint64_t base_seed = cfg.seed.value_or(cfg.model.seed);

  auto rows = ablation_ladder(cfg.model, cfg.ablate_aug_row);
  for (auto& row : rows) {
    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      ModelConfig mc = row.model;
      mc.seed = base_seed + k;
      TrainConfig tc = cfg.train;
      tc.seed = base_seed + k;
      tc.augment = row.augment;
      Model model(mc);
      train_model(model, train, val, tc);
      const RocSummary s = summarize_roc(score_events(model, test));
      row.auc.push_back(s.auc);
      row.r70.push_back(s.r70);
      row.r85.push_back(s.r85);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << row.label << " seed " << mc.seed << ": auc " << s.auc << " r70 " << s.r70 << " r85 " << s.r85 << " ("
          << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << "\n"
          << std::flush;
    }
  }
  summarize_ablation(rows);

  const std::string table = format_ablation(rows);
  write_text(cfg.out_dir / "ablation.txt", table + "\n# resolved configuration\n" + cfg.to_ini());
  nlohmann::json j;
  j["config"] = cfg.to_ini();
  j["n_seeds"] = cfg.n_seeds;
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return x > 0 ? "inf" : "nan";
  };
  for (const auto& row : rows) {
    nlohmann::json r;
    r["label"] = row.label;
    for (const auto& [name, values, stats] :
         {std::tuple{"auc", &row.auc, &row.auc_stats}, std::tuple{"r70", &row.r70, &row.r70_stats},
          std::tuple{"r85", &row.r85, &row.r85_stats}}) {
      nlohmann::json runs = nlohmann::json::array();
      for (double v : *values) runs.push_back(num(v));
      r[name] = {{"runs", runs}, {"median", num(stats->median)}, {"iqr", num(stats->iqr)}};
    }
    r["r70_gain"] = num(row.r70_gain);
    r["r85_gain"] = num(row.r85_gain);
    j["rows"].push_back(r);
  }
  write_text(cfg.out_dir / "ablation.json", j.dump(2) + "\n");
  log << table;
  return rows;
}

}  // namespace btn
