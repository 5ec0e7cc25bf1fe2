// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance            all criteria
//   acceptance --only 6   just criterion 6
//   acceptance --skip 6   everything else
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "btn/commands.hpp"
#include "btn/datagen.hpp"
#include "btn/layers.hpp"
#include "btn/metrics.hpp"
#include "btn/models.hpp"
#include "btn/ops.hpp"
#include "btn/training.hpp"
#include "oracles.hpp"

using namespace btn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::mt19937_64 seeded(std::uint64_t s) { return std::mt19937_64(s); }

double gauss(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
Vec3 gvec(std::mt19937_64& rng) { return {gauss(rng), gauss(rng), gauss(rng)}; }
Mat3 gmat(std::mt19937_64& rng) {
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = gauss(rng);
  return m;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// 1 ---------------------------------------------------------------------

Outcome equivariance_suite() {
  const auto t0 = Clock::now();
  auto rng = seeded(101);
  constexpr std::size_t F = 4;  // 2F = 8 per representation
  double so3 = 0, so2 = 0;

  auto vdiff = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
    return m;
  };
  auto tdiff = [](const std::vector<Mat3>& a, const std::vector<Mat3>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
    return m;
  };

  for (int trial = 0; trial < 100; ++trial) {
    const Rotation r = random_rotation(rng);
    const Mat3& R = r.matrix();
    auto p = AffineParams::zeros(2 * F, 2 * F);
    for (double& w : p.weight) w = gauss(rng);
    for (double& b : p.bias) b = gauss(rng);
    for (double& b : p.tensor_bias) b = gauss(rng);

    std::vector<double> s(2 * F);
    std::vector<Vec3> v(2 * F), rv;
    std::vector<Mat3> t(2 * F), rt;
    for (auto& x : s) x = gauss(rng);
    // scale 2 so the norm nonlinearities see both branches
    for (auto& x : v) x = 2.0 * gvec(rng), rv.push_back(R * x);
    for (auto& x : t) x = 2.0 * gmat(rng), rt.push_back(apply_to_tensor(r, x));
    auto rot_v = [&](std::vector<Vec3> x) {
      for (auto& e : x) e = R * e;
      return x;
    };
    auto rot_t = [&](std::vector<Mat3> x) {
      for (auto& e : x) e = apply_to_tensor(r, e);
      return x;
    };

    // scalar_affine acts on invariants only, nothing to rotate
    so3 = std::max(so3, vdiff(vector_linear(p, rv), rot_v(vector_linear(p, v))));
    so3 = std::max(so3, tdiff(tensor_affine(p, rt), rot_t(tensor_affine(p, t))));
    so3 = std::max(so3, vdiff(vrelu(rv), rot_v(vrelu(v))));
    so3 = std::max(so3, tdiff(trelu(rt), rot_t(trelu(t))));
    const auto m0 = bilinear_mix(s, v, t), m1 = bilinear_mix(s, rv, rt);
    for (std::size_t i = 0; i < m0.scalars.size(); ++i) so3 = std::max(so3, std::abs(m1.scalars[i] - m0.scalars[i]));
    so3 = std::max(so3, vdiff(m1.vectors, rot_v(m0.vectors)));
    so3 = std::max(so3, tdiff(m1.tensors, rot_t(m0.tensors)));
    const auto n0 = bilinear_mix_vector(s, v), n1 = bilinear_mix_vector(s, rv);
    for (std::size_t i = 0; i < n0.scalars.size(); ++i) so3 = std::max(so3, std::abs(n1.scalars[i] - n0.scalars[i]));
    so3 = std::max(so3, vdiff(n1.vectors, rot_v(n0.vectors)));

    // SO(2) about a random axis, random angle
    const Vec3 j = gvec(rng).normalized();
    const double alpha = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
    const Rotation ra = Rotation::from_axis_angle(j, alpha);
    auto q = So2Params::uniform(2 * F, 2 * F, {});
    for (auto& c : q.left) c = {gauss(rng), gauss(rng), gauss(rng)};
    for (auto& c : q.right) c = {gauss(rng), gauss(rng), gauss(rng)};
    std::vector<Vec3> av;
    std::vector<Mat3> at;
    for (const auto& x : v) av.push_back(ra.matrix() * x);
    for (const auto& x : t) at.push_back(apply_to_tensor(ra, x));
    auto spun_v = so2_vector_linear(q, j, v);
    for (auto& e : spun_v) e = ra.matrix() * e;
    auto spun_t = so2_tensor_linear(q, j, t);
    for (auto& e : spun_t) e = apply_to_tensor(ra, e);
    so2 = std::max(so2, vdiff(so2_vector_linear(q, j, av), spun_v));
    so2 = std::max(so2, tdiff(so2_tensor_linear(q, j, at), spun_t));
  }
  const double secs = seconds_since(t0);
  return {so3 < 1e-10 && so2 < 1e-10 && secs < 10,
          "SO(3) max residual " + fmt("%.2e", so3) + ", SO(2) max residual " + fmt("%.2e", so2) + ", " +
              fmt("%.2f", secs) + " s"};
}

// 2 ---------------------------------------------------------------------

Outcome end_to_end_invariance() {
  const auto t0 = Clock::now();
  GenConfig g;
  g.seed = 202;
  const auto events = generate_events(g, 20, 0);
  auto rng = seeded(203);
  double global = 0, axial = 0;
  std::string configs;
  for (ModelClass mc : {ModelClass::vector, ModelClass::tensor})
    for (bool so2 : {false, true}) {
      ModelConfig cfg;  // default widths
      cfg.model_class = mc;
      cfg.bilinear = true;
      cfg.so2 = so2;
      cfg.seed = 204;
      Model m(cfg);
      const auto base = m.logits(events);
      std::vector<JetEvent> turned, spun;
      for (int k = 0; k < 50; ++k) {
        const Rotation r = random_rotation(rng);
        for (const auto& e : events) {
          turned.push_back(rotate_event(e, r));
          if (so2) {
            const double a = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
            spun.push_back(rotate_event(e, Rotation::from_axis_angle(e.axis(), a)));
          }
        }
      }
      auto worst = [&](const std::vector<JetEvent>& batch) {
        const auto z = m.logits(batch);
        double d = 0;
        for (std::size_t i = 0; i < z.size(); ++i)
          for (int c = 0; c < 2; ++c) d = std::max(d, std::abs(z[i][c] - base[i % events.size()][c]));
        return d;
      };
      global = std::max(global, worst(turned));
      if (so2) axial = std::max(axial, worst(spun));
      configs += (configs.empty() ? "" : ", ") + cfg.label();
    }
  const double secs = seconds_since(t0);
  return {global < 1e-6 && axial < 1e-6 && secs < 30,
          "20 events x 50 rotations (" + configs + "): global " + fmt("%.2e", global) + ", axial " +
              fmt("%.2e", axial) + ", " + fmt("%.1f", secs) + " s"};
}

// 3 ---------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  ModelConfig cfg;  // full tensor+BiL+SO2 at default widths
  cfg.seed = 301;
  Model m(cfg);
  GenConfig g;
  g.seed = 302;
  const auto events = generate_events(g, 4, 0);
  const EventBatch batch = m.prepare(events);
  const auto loss = [&](ad::Tape& t) { return ops::softmax_cross_entropy(t, m.forward(t, batch), batch.labels); };
  auto rng = seeded(303);
  const auto r = ad::finite_diff_check(m.params(), loss, 64, 1e-5, rng);
  const double secs = seconds_since(t0);
  return {r.checked == 64 && r.max_rel_error < 1e-5 && secs < 60,
          cfg.label() + ", " + std::to_string(r.checked) + " parameters (" + std::to_string(r.skipped) +
              " redrawn at kinks), max rel error " + fmt("%.2e", r.max_rel_error) + ", " + fmt("%.1f", secs) + " s"};
}

// 4 ---------------------------------------------------------------------

Outcome bilinear_structure() {
  bool ok = true;
  auto rng = seeded(401);
  for (std::size_t f : {1u, 2u, 3u, 8u, 64u}) {
    std::vector<double> s(2 * f);
    std::vector<Vec3> v(2 * f);
    std::vector<Mat3> t(2 * f);
    for (auto& x : s) x = gauss(rng);
    for (auto& x : v) x = gvec(rng);
    for (auto& x : t) x = gmat(rng);
    const auto m = bilinear_mix(s, v, t);
    ok = ok && m.scalars.size() == 3 * f && m.vectors.size() == 3 * f && m.tensors.size() == 3 * f;

    // the batched op used in training
    ad::ParamStore store;
    ad::Tape tape(store, false);
    ad::Block bs(5, 1, 2 * f), bv(5, 3, 2 * f), bt(5, 9, 2 * f);
    const auto mixed = ops::bilinear(tape, tape.constant(bs), tape.constant(bv), tape.constant(bt));
    ok = ok && tape.value(mixed.scalars).features == 3 * f && tape.value(mixed.vectors).features == 3 * f &&
         tape.value(*mixed.tensors).features == 3 * f;
  }

  const std::vector<double> s{1, 1};
  const std::vector<Vec3> v{Vec3::UnitX(), Vec3::UnitY()};
  const std::vector<Mat3> t{Mat3::Identity(), Mat3::Identity()};
  const auto m = bilinear_mix(s, v, t);
  const bool example = m.scalars == std::vector<double>{1, 0, 3} && m.vectors[0] == Vec3::UnitY() &&
                       m.vectors[1] == Vec3::UnitZ() && m.vectors[2] == Vec3::UnitY() &&
                       m.tensors[0] == Mat3::Identity() &&
                       m.tensors[1] == Vec3::UnitX() * Vec3::UnitY().transpose() && m.tensors[2] == Mat3::Identity();
  return {ok && example, std::string("2F -> 3F for F in {1,2,3,8,64}: ") + (ok ? "yes" : "no") +
                             ", F=1 hand example exact: " + (example ? "yes" : "no")};
}

// 5 ---------------------------------------------------------------------

Outcome metric_oracles() {
  auto rng = seeded(501);
  std::uniform_int_distribution<int> size(2, 50), bit(0, 1), levels(2, 40);
  std::uniform_real_distribution<double> eff(0.05, 0.95);
  int mismatches = 0, compared = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ScoredSample> s(size(rng));
    // coarse score grids force ties
    std::uniform_int_distribution<int> level(0, levels(rng));
    for (auto& x : s) x = {level(rng) / 7.0, bit(rng)};
    s[0].label = 1;
    s[1].label = 0;
    ++compared;
    if (roc_auc(s) != oracle::auc_pairs(s)) ++mismatches;
    for (double e : {0.7, 0.85, eff(rng)}) {
      ++compared;
      const double a = rejection_at_efficiency(s, e), b = oracle::rejection_scan(s, e);
      if (!(a == b)) ++mismatches;
    }
  }
  return {mismatches == 0, "20 samples, " + std::to_string(compared) + " values compared against exhaustive scans, " +
                               std::to_string(mismatches) + " mismatches"};
}

// 6 ---------------------------------------------------------------------

// Desk-scale budget: reduced widths and a fixed number of epochs so that the
// twenty trainings fit in the time limit on one core.
constexpr std::size_t kResultsWidth = 16;
constexpr std::size_t kResultsEpochs = 5;
constexpr std::size_t kResultsBatch = 32;
constexpr double kResultsLr = 1e-3;
constexpr std::size_t kResultsSeeds = 5;

Outcome toy_results() {
  const auto t0 = Clock::now();
  GenConfig g;  // shipped defaults
  const auto train = generate_events(g, 50000, 0);
  const auto val = generate_events(g, 10000, 1);
  const auto test = generate_events(g, 10000, 2);

  struct Row {
    const char* label;
    ModelClass mc;
    bool bil, so2;
    std::vector<double> auc;
    double median = 0;
  };
  std::vector<Row> rows{{"vector", ModelClass::vector, false, false, {}},
                        {"vector+BiL", ModelClass::vector, true, false, {}},
                        {"vector+BiL+SO2", ModelClass::vector, true, true, {}},
                        {"tensor+BiL+SO2", ModelClass::tensor, true, true, {}}};
  for (auto& row : rows) {
    for (std::uint64_t seed = 1; seed <= kResultsSeeds; ++seed) {
      ModelConfig mc;
      mc.model_class = row.mc;
      mc.bilinear = row.bil;
      mc.so2 = row.so2;
      mc.rep_width = kResultsWidth;
      mc.latent_dim = kResultsWidth;
      mc.hidden_width = 2 * kResultsWidth;
      mc.seed = seed;
      TrainConfig tc;
      tc.epochs = kResultsEpochs;
      tc.batch_size = kResultsBatch;
      tc.lr = kResultsLr;
      tc.patience = kResultsEpochs;
      tc.seed = seed;
      Model m(mc);
      train_model(m, train, val, tc);
      row.auc.push_back(roc_auc(score_events(m, test)));
      std::cout << "    " << row.label << " seed " << seed << ": test AUC " << fmt("%.4f", row.auc.back()) << " ("
                << fmt("%.0f", seconds_since(t0)) << " s elapsed)" << std::endl;
    }
    row.median = median_iqr(row.auc).median;
  }
  constexpr double slack = 0.002;
  const bool ordered = rows[3].median >= rows[2].median - slack && rows[2].median >= rows[1].median - slack &&
                       rows[1].median >= rows[0].median - slack;
  const double margin = rows[3].median - rows[0].median;
  const double secs = seconds_since(t0);
  std::string medians;
  for (const auto& r : rows) medians += std::string(r.label) + " " + fmt("%.4f", r.median) + ", ";
  return {ordered && margin >= 0.01 && secs <= 1800,
          "median test AUC: " + medians + "ordering " + (ordered ? "holds" : "violated") + " (+-0.002), margin " +
              fmt("%+.4f", margin) + " (need >= 0.01), " + fmt("%.0f", secs) + " s"};
}

// 7 ---------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = Clock::now();
  GenConfig g;
  g.seed = 701;
  const auto events = generate_events(g, 32, 0);
  ModelConfig mc;
  mc.rep_width = 16;
  mc.latent_dim = 16;
  mc.hidden_width = 32;
  mc.seed = 702;
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 32;  // full batch
  tc.lr = 5e-3;
  tc.patience = 200;
  tc.seed = 703;
  Model m(mc);
  const auto res = train_model(m, events, events, tc);
  double best = 1e9;
  std::size_t first = 0;
  for (const auto& r : res.log) {
    best = std::min(best, r.train_loss);
    if (first == 0 && r.train_loss < 0.05) first = r.epoch;
  }
  const double final_loss = evaluate_loss(m, events);
  const double secs = seconds_since(t0);
  return {final_loss < 0.05 && res.log.size() <= 200 && secs < 120,
          mc.label() + " on 32 events: cross-entropy " + fmt("%.2e", final_loss) + " (first below 0.05 at epoch " +
              std::to_string(first) + "), " + fmt("%.1f", secs) + " s"};
}

// 8 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "btn_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "run.ini") << "[run]\nseed = 801\n\n[data]\nn_train = 400\nn_val = 100\nn_test = 100\n\n"
                                     "[model]\nrep_width = 8\nlatent_dim = 8\nhidden_width = 16\n\n"
                                     "[train]\nepochs = 3\nbatch_size = 32\naugment = true\n";
  const std::string cli = BTN_CLI;
  const std::string common = " --config " + (root / "run.ini").string() + " --data " + (root / "data").string();
  auto run = [&](const std::string& args) {
    return std::system((cli + args + " > " + (root / "log.txt").string() + " 2>&1").c_str()) == 0;
  };
  const bool ran = run(" gen" + common) && run(" train" + common + " --out " + (root / "a").string()) &&
                   run(" train" + common + " --out " + (root / "b").string());
  const std::string a = slurp(root / "a" / "metrics.log"), b = slurp(root / "b" / "metrics.log");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {ran && !a.empty() && a == b,
          std::string("two processes, ") + std::to_string(lines) + "-line metric logs " +
              (a == b ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, skip;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--only") only.insert(std::atoi(argv[i + 1]));
    else if (flag == "--skip") skip.insert(std::atoi(argv[i + 1]));
    else {
      std::cerr << "usage: acceptance [--only N]... [--skip N]...\n";
      return 2;
    }
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"layer equivariance", equivariance_suite},  {"end-to-end invariance", end_to_end_invariance},
      {"gradient oracle", gradient_oracle},        {"bilinear structure", bilinear_structure},
      {"metric oracles", metric_oracles},          {"toy-dataset results", toy_results},
      {"overfit sanity", overfit},                 {"determinism", determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if ((!only.empty() && !only.count(n)) || skip.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
