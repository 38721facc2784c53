// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//   acceptance [--only 1,5,7] [--workdir DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "mdcsrn/harness/phantom.hpp"
#include "mdcsrn/harness/trainer.hpp"
#include "mdcsrn/metrics/report.hpp"
#include "../support/gradcheck.hpp"
#include "../support/metric_oracle.hpp"

using namespace mdcsrn;
namespace fs = std::filesystem;
using TD = Tensor<double>;
using testing::grad_check;
using testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---- 1: parameter counts ----------------------------------------------------

Outcome parameter_counts() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, double>> table = {
      {"b4u4k8", 0.10}, {"b4u4k12", 0.22}, {"b4u4k16", 0.41}, {"b6u4k12", 0.35}, {"b8u4k12", 0.49},
      {"b8u4k8", 0.22}, {"b1u12-r", 0.25}, {"b1u16-r", 0.35}, {"b4u4-r", 0.26}};
  Outcome o{true, ""};
  for (const auto& [name, reference] : table) {
    const auto cfg = GeneratorConfig::parse(name);
    const std::int64_t n = count_params(cfg);
    const std::int64_t built = describe(cfg).total_params();
    const double m = n / 1e6, rounded = std::round(m * 100) / 100;
    const double rel = std::abs(m - reference) / reference;
    const bool ok = n == built && rel <= 0.05 && std::abs(rounded - reference) <= 0.01 + 1e-12;
    o.pass = o.pass && ok;
    o.detail += fmt("%s=%lld(%.2fM vs %.2fM, %.1f%%)%s ", name.c_str(), static_cast<long long>(n), rounded, reference,
                    100 * rel, ok ? "" : "!");
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < 1.0;
  o.detail += fmt("in %.3fs", secs);
  return o;
}

// ---- 2: gradient integrity --------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, std::function<double()>>> checks;
  using Fn = std::function<TD(const std::vector<TD>&)>;
  // Entries agreeing to 1e-9 absolute pass regardless of scale: a bias feeding
  // train-mode batch norm has an exactly zero gradient and its central
  // difference is pure rounding.
  auto run = [](const Fn& f, std::vector<TD> in) { return grad_check(f, std::move(in)).max_rel_error_above_atol; };
  // every loss is a random projection of the output, which exercises all of it
  auto proj = [](const TD& y, std::uint64_t seed) { return sum_all(mul(y, random_tensor(y.shape(), seed))); };

  checks.push_back({"conv3d 3x3x3", [&] {
                      return run([&](const auto& v) { return proj(conv3d(v[0], v[1], v[2]), 1); },
                                 {random_tensor({2, 2, 4, 5, 3}, 2), random_tensor({3, 2, 3, 3, 3}, 3),
                                  random_tensor({3}, 4)});
                    }});
  checks.push_back({"conv3d stride 2", [&] {
                      Conv3dOptions opt;
                      opt.stride = {2, 2, 2};
                      return run([&](const auto& v) { return proj(conv3d(v[0], v[1], v[2], opt), 5); },
                                 {random_tensor({2, 2, 5, 6, 5}, 6), random_tensor({2, 2, 3, 3, 3}, 7),
                                  random_tensor({2}, 8)});
                    }});
  checks.push_back({"conv3d 1x1x1", [&] {
                      return run([&](const auto& v) { return proj(conv3d(v[0], v[1], v[2]), 9); },
                                 {random_tensor({2, 3, 3, 4, 2}, 10), random_tensor({2, 3, 1, 1, 1}, 11),
                                  random_tensor({2}, 12)});
                    }});
  checks.push_back({"batch_norm train", [&] {
                      BatchNormState<double> st(3);
                      return run(
                          [&](const auto& v) { return proj(batch_norm3d(v[0], v[1], v[2], st, BnMode::kTrain), 13); },
                          {random_tensor({2, 3, 3, 3, 2}, 14), random_tensor({3}, 15, 0.5, 1.5), random_tensor({3}, 16)});
                    }});
  checks.push_back({"batch_norm eval", [&] {
                      BatchNormState<double> st(3);
                      st.running_mean = {0.1, -0.2, 0.3};
                      st.running_var = {0.5, 1.5, 2.0};
                      return run(
                          [&](const auto& v) { return proj(batch_norm3d(v[0], v[1], v[2], st, BnMode::kEval), 17); },
                          {random_tensor({2, 3, 3, 3, 2}, 18), random_tensor({3}, 19), random_tensor({3}, 20)});
                    }});
  checks.push_back({"elu", [&] {
                      return run([&](const auto& v) { return proj(elu(v[0]), 21); }, {random_tensor({2, 3, 4, 3, 2}, 22)});
                    }});
  checks.push_back({"leaky_relu", [&] {
                      return run([&](const auto& v) { return proj(leaky_relu(v[0], 0.2), 23); },
                                 {random_tensor({2, 3, 4, 3, 2}, 24)});
                    }});
  checks.push_back({"layer_norm", [&] {
                      return run([&](const auto& v) { return proj(layer_norm(v[0], v[1], v[2]), 25); },
                                 {random_tensor({2, 3, 3, 2, 3}, 26), random_tensor({3}, 27), random_tensor({3}, 28)});
                    }});
  checks.push_back({"linear", [&] {
                      return run([&](const auto& v) { return proj(linear(v[0], v[1], v[2]), 29); },
                                 {random_tensor({3, 5}, 30), random_tensor({4, 5}, 31), random_tensor({4}, 32)});
                    }});
  checks.push_back({"concat_channels", [&] {
                      return run([&](const auto& v) { return proj(concat_channels(std::vector<TD>{v[0], v[1]}), 33); },
                                 {random_tensor({2, 2, 3, 3, 3}, 34), random_tensor({2, 1, 3, 3, 3}, 35)});
                    }});
  checks.push_back({"l1_loss", [&] {
                      return run([&](const auto& v) { return l1_loss(v[0], v[1]); },
                                 {random_tensor({2, 1, 3, 3, 3}, 36), random_tensor({2, 1, 3, 3, 3}, 37)});
                    }});
  checks.push_back({"mse_loss", [&] {
                      return run([&](const auto& v) { return mse_loss(v[0], v[1]); },
                                 {random_tensor({2, 1, 3, 3, 3}, 38), random_tensor({2, 1, 3, 3, 3}, 39)});
                    }});
  checks.push_back({"safe_sqrt", [&] {
                      return run([&](const auto& v) { return proj(safe_sqrt(v[0]), 40); },
                                 {random_tensor({2, 6}, 41, 0.2, 2.0)});
                    }});
  checks.push_back({"generator b2u2k4", [&] {
                      Generator<double> g(GeneratorConfig::parse("b2u2k4"), 42);
                      std::vector<TD> leaves{random_tensor({2, 1, 5, 4, 5}, 43)};
                      for (auto& p : g.params().items()) leaves.push_back(p.tensor);
                      return run(
                          [&](const auto& v) {
                            // leaves share storage with the parameters, so perturbations land in g
                            auto states = g.bn_states();
                            TD y = g.forward(v[0], BnMode::kTrain);
                            g.bn_states() = states;
                            return proj(y, 44);
                          },
                          leaves);
                    }});
  checks.push_back({"critic", [&] {
                      DiscriminatorConfig c{2, 3, 4, {5, 6, 5}};
                      Discriminator<double> d(c, 45);
                      return run([&](const auto& v) { return proj(d(v[0]), 46); }, {random_tensor({2, 1, 5, 6, 5}, 47)});
                    }});

  Outcome o{true, ""};
  double worst = 0;
  std::string worst_name;
  for (const auto& [name, f] : checks) {
    const double e = f();
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
    if (e > 1e-4) {
      o.pass = false;
      o.detail += name + fmt(" rel %.2e! ", e);
    }
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < 300;
  o.detail += fmt("%zu checks, worst relative error %.2e (%s) among entries off by more than 1e-9, in %.1fs", checks.size(), worst, worst_name.c_str(), secs);
  return o;
}

// ---- 3: degradation ---------------------------------------------------------

Outcome degradation() {
  Outcome o{true, ""};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  Volume<double> v({20, 16, 12});
  for (auto& x : v.data) x = n(rng);

  // (a) round trip
  const Spectrum s = fft3(v);
  const auto back = ifft3<double>(s);
  double err = 0, peak = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    err = std::max(err, std::abs(back.data[i] - v.data[i]));
    peak = std::max(peak, std::abs(v.data[i]));
  }
  const bool a = err / peak <= 1e-9;

  // (b) retained coefficients copied exactly; only the even-length Nyquist
  // bins (averaged from +-M/2) are exempt
  const Index3 f{1, 2, 2};
  const Spectrum t = kspace_truncate(s, f);
  std::int64_t compared = 0, mismatched = 0;
  for (std::int64_t i = 0; i < t.shape[0]; ++i)
    for (std::int64_t j = 0; j < t.shape[1]; ++j)
      for (std::int64_t k = 0; k < t.shape[2]; ++k) {
        const std::array<std::int64_t, 3> idx{i, j, k};
        Index3 src{};
        bool nyquist = false;
        for (int ax = 0; ax < 3; ++ax) {
          const std::int64_t m = t.shape[ax], nn = s.shape[ax];
          const std::int64_t c = idx[ax] <= m / 2 ? idx[ax] : idx[ax] - m;
          if (m < nn && m % 2 == 0 && std::abs(c) == m / 2) nyquist = true;
          src[ax] = (c + nn) % nn;
        }
        if (nyquist) continue;
        ++compared;
        mismatched += !(t.at(i, j, k) == s.at(src[0], src[1], src[2]));
      }
  const bool b = compared > 0 && mismatched == 0;

  // (c) constants
  Volume<double> c5({20, 16, 12}, 5.0);
  double cdev = 0;
  for (double x : degrade(c5).data) cdev = std::max(cdev, std::abs(x - 5.0));
  const bool c = cdev <= 1e-6;

  // (d) a sinusoid above the retained band on H (k=6 of 16) and W (k=4 of 12)
  Volume<double> sine({20, 16, 12});
  for (std::int64_t d = 0; d < 20; ++d)
    for (std::int64_t h = 0; h < 16; ++h)
      for (std::int64_t w = 0; w < 12; ++w)
        sine.at(d, h, w) = std::cos(2 * M_PI * 6 * h / 16.0) + std::sin(2 * M_PI * 4 * w / 12.0);
  double amp = 0;
  for (double x : degrade(sine).data) amp = std::max(amp, std::abs(x));
  const bool dd = amp <= 1e-9;

  o.pass = a && b && c && dd;
  o.detail = fmt("(a) round trip rel %.1e%s (b) %lld/%lld retained bins identical%s (c) constant dev %.1e%s "
                 "(d) out-of-band amplitude %.1e%s",
                 err / peak, a ? "" : "!", static_cast<long long>(compared - mismatched),
                 static_cast<long long>(compared), b ? "" : "!", cdev, c ? "" : "!", amp, dd ? "" : "!");
  return o;
}

// ---- 4: patch pipeline ------------------------------------------------------

Outcome patch_pipeline() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::int64_t> len(40, 160);
  std::normal_distribution<float> n(0, 1);
  int exact = 0, total = 0;
  for (int i = 0; i < 20; ++i) {
    Volume<float> v({len(rng), len(rng), len(rng)});
    for (auto& x : v.data) x = n(rng);
    for (const PatchSpec& spec : {PatchSpec{{70, 70, 70}, 3}, PatchSpec{{40, 40, 40}, 0}}) {
      const auto layout = plan_tiles(v.shape, spec);
      exact += stitch(layout, extract(layout, v)).data == v.data;
      ++total;
    }
  }
  const double secs = seconds_since(t0);
  return {exact == total && secs < 60, fmt("%d/%d shape x layout round trips bit-exact, in %.1fs", exact, total, secs)};
}

// ---- 5: WGAN-GP properties --------------------------------------------------

auto linear_critic(const TD& w) {
  return [w](const TD& x) {
    std::vector<TD> rep(static_cast<std::size_t>(x.dim(0)), w);
    return sum_per_sample(mul(x, reshape(concat_channels(rep), x.shape())));
  };
}

Outcome wgan_properties() {
  std::mt19937_64 rng(5);
  const Shape one{1, 1, 3, 4, 3};
  TD w = random_tensor(one, 50);
  double norm = 0;
  for (double x : w.vec()) norm += x * x;
  w = mul_scalar(w, 1.0 / std::sqrt(norm));
  const TD real = random_tensor({4, 1, 3, 4, 3}, 51), fake = random_tensor({4, 1, 3, 4, 3}, 52);
  const double gp_unit = gradient_penalty(linear_critic(w), real, fake, 10.0, rng).item();
  auto constant = [](const TD& x) { return add_scalar(mul_scalar(sum_per_sample(x), 0.0), 3.0); };
  const double gp_const = gradient_penalty(constant, real, fake, 10.0, rng).item();

  // point masses at a and b: W1 = |a - b|, attained by the unit linear critic along a - b
  const TD a = random_tensor(one, 53), b = random_tensor(one, 54);
  TD diff = sub(a, b);
  double dn = 0;
  for (double x : diff.vec()) dn += x * x;
  dn = std::sqrt(dn);
  const TD dir = mul_scalar(diff, 1.0 / dn);
  std::vector<TD> ra(5, a), rb(5, b);
  const TD pa = reshape(concat_channels(ra), {5, 1, 3, 4, 3}), pb = reshape(concat_channels(rb), {5, 1, 3, 4, 3});
  const double em = em_estimate(linear_critic(dir), pa, pb);

  const bool p1 = std::abs(gp_unit) <= 1e-10, p2 = std::abs(gp_const - 10.0) <= 1e-10, p3 = std::abs(em - dn) <= 1e-9;
  return {p1 && p2 && p3, fmt("unit-norm linear critic penalty %.1e%s, constant critic penalty - lambda %.1e%s, "
                              "point-mass EM error %.1e%s",
                              gp_unit, p1 ? "" : "!", gp_const - 10.0, p2 ? "" : "!", em - dn, p3 ? "" : "!")};
}

// ---- 6: schedule trace ------------------------------------------------------

Volume<float> noise_volume(Index3 shape, std::uint64_t seed) {
  Volume<float> v(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0, 1);
  for (auto& x : v.data) x = n(rng);
  return v;
}

Outcome schedule_trace(const std::string& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string dir = work + "/schedule";
  fs::create_directories(dir);
  Generator<float> g0(GeneratorConfig::parse("b1u1k2"), 6);
  Checkpoint init;
  store_generator(init, g0);
  init.save(dir + "/init.ckpt");

  std::vector<Subject> train, val;
  for (int i = 0; i < 2; ++i) train.push_back(make_subject("t" + std::to_string(i), noise_volume({8, 8, 8}, 60 + i), {}));
  val.push_back(make_subject("v", noise_volume({8, 8, 8}, 70), {}));
  TrainPlan p;
  p.phase = Phase::kGan;
  p.generator = GeneratorConfig::parse("b1u1k2");
  p.discriminator = DiscriminatorConfig{2, 2, 4};
  p.batch = 1;
  p.patch = PatchSpec{{6, 6, 6}, 0, 2};
  // the 500th generator step (and so the first burst) lands at step 13000
  p.steps = 13500;
  p.val_every = p.steps;
  p.val_patches = 1;
  p.infer.tiles = PatchSpec{{8, 8, 8}, 0};
  p.init_generator = dir + "/init.ckpt";
  p.seed = 6;
  Trainer t(p, train, val, dir + "/run");
  const auto r = t.run();
  const auto events = EventLog::read(r.events_path);
  const auto bad = schedule_violations(events, p.schedule);

  std::int64_t first_g = 0, g_count = 0, run = 0, burst_run = 0;
  std::int64_t d_before_first_g = 0, traced = 0;
  for (const auto& e : events) {
    traced += e.kind == "d_step" || e.kind == "g_step";
    if (e.kind == "d_step") ++run;
    if (e.kind == "g_step") {
      ++g_count;
      if (!first_g) {
        first_g = e.step;
        d_before_first_g = run;
      }
      if (g_count == 501) burst_run = run;
      run = 0;
    }
  }
  const bool warm_ok = first_g == 10006 && d_before_first_g == 10005;
  const bool burst_ok = burst_run == 205;
  const double secs = seconds_since(t0);
  std::string detail = fmt("%lld steps traced, %zu violations, first G step at %lld, %lld G steps, run before "
                           "G #501 = %lld critic steps, in %.1fs",
                           static_cast<long long>(traced), bad.size(), static_cast<long long>(first_g),
                           static_cast<long long>(g_count), static_cast<long long>(burst_run), secs);
  if (!bad.empty()) detail += "; first: " + bad.front();
  return {bad.empty() && warm_ok && burst_ok, detail};
}

// ---- 7-9, 11: desk-scale training ------------------------------------------

struct DeskRun {
  TrainResult result;
  double seconds = 0;
  double psnr_gain = 0, ssim_gain = 0, psnr_sr = 0;
};

class Desk {
 public:
  explicit Desk(std::string work) : work_(std::move(work)) {}

  void prepare() {
    if (ready_) return;
    const auto t0 = std::chrono::steady_clock::now();
    PhantomOptions opt;
    opt.shape = {64, 64, 64};
    const auto m = make_phantoms(work_ + "/data", PhantomSet{32, 4, 8, 0}, opt, 2024);
    const auto loaded = DatasetManifest::load(work_ + "/data/manifest.json");
    train_ = load_subjects(loaded, Split::kTrain, {});
    val_ = load_subjects(loaded, Split::kValidation, {});
    eval_ = load_subjects(loaded, Split::kEvaluation, {});
    for (const auto& s : eval_) {
      base_psnr_ += psnr_slicewise(s.lr, s.hr) / double(eval_.size());
      base_ssim_ += ssim_slicewise(s.lr, s.hr) / double(eval_.size());
    }
    std::printf("  desk dataset: %zu train / %zu validation / %zu evaluation phantoms 64^3, baseline PSNR %.3f dB "
                "SSIM %.4f (%.1fs)\n",
                train_.size(), val_.size(), eval_.size(), base_psnr_, base_ssim_, seconds_since(t0));
    std::fflush(stdout);
    ready_ = true;
  }

  static TrainPlan l1_plan(const std::string& generator, std::uint64_t seed) {
    TrainPlan p;
    p.generator = GeneratorConfig::parse(generator);
    p.batch = 4;
    p.patch = PatchSpec{{24, 24, 24}, 0, 18};
    p.steps = 300;
    p.lr = 1e-3;
    p.val_every = 100;
    p.seed = seed;
    return p;
  }

  /// Eval-set mean slice-wise PSNR of a generator's output.
  std::pair<double, double> score(const Generator<float>& g) const {
    double psnr = 0, ssim = 0;
    for (const auto& s : eval_) {
      const auto sr = infer_volume(g, s.lr).sr;
      psnr += psnr_slicewise(sr, s.hr) / double(eval_.size());
      ssim += ssim_slicewise(sr, s.hr) / double(eval_.size());
    }
    return {psnr, ssim};
  }

  const DeskRun& l1(const std::string& generator, std::uint64_t seed, const std::string& tag = "") {
    const std::string key = generator + "/" + std::to_string(seed) + tag;
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    prepare();
    const auto t0 = std::chrono::steady_clock::now();
    Trainer t(l1_plan(generator, seed), train_, val_, dir(key));
    DeskRun r;
    r.result = t.run();
    r.seconds = seconds_since(t0);
    const auto best = restore_generator<float>(Checkpoint::load(r.result.best_path));
    const auto [psnr, ssim] = score(best);
    r.psnr_sr = psnr;
    r.psnr_gain = psnr - base_psnr_;
    r.ssim_gain = ssim - base_ssim_;
    std::printf("  %s seed %llu: %.0fs, best val MSE %.5f at step %lld, PSNR %+.3f dB, SSIM %+.4f\n",
                generator.c_str(), static_cast<unsigned long long>(seed), r.seconds, r.result.best_score,
                static_cast<long long>(r.result.best_step), r.psnr_gain, r.ssim_gain);
    std::fflush(stdout);
    return runs_.emplace(key, r).first->second;
  }

  std::string dir(const std::string& key) const {
    std::string d = key;
    std::replace(d.begin(), d.end(), '/', '_');
    return work_ + "/runs/" + d;
  }

  const std::vector<Subject>& train() const { return train_; }
  const std::vector<Subject>& val() const { return val_; }
  double base_psnr() const { return base_psnr_; }

 private:
  std::string work_;
  bool ready_ = false;
  std::vector<Subject> train_, val_, eval_;
  double base_psnr_ = 0, base_ssim_ = 0;
  std::map<std::string, DeskRun> runs_;
};

Outcome desk_learning(Desk& desk) {
  Outcome o{true, ""};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto& r = desk.l1("b2u2k8", seed);
    const bool ok = r.psnr_gain >= 1.0 && r.ssim_gain >= 0.01 && r.seconds <= 1800;
    o.pass = o.pass && ok;
    o.detail += fmt("seed %llu: PSNR %+.2f dB, SSIM %+.4f, %.0fs%s; ", static_cast<unsigned long long>(seed),
                    r.psnr_gain, r.ssim_gain, r.seconds, ok ? "" : "!");
  }
  o.detail += "thresholds +1.0 dB, +0.01, 1800s";
  return o;
}

Outcome depth_ordering(Desk& desk) {
  const auto& shallow = desk.l1("b2u2k8", 1);
  const auto& deep = desk.l1("b3u2k8", 1);
  const double a = shallow.result.best_score, b = deep.result.best_score;
  return {b <= a * 1.02, fmt("validation MSE b3u2k8 %.5f vs b2u2k8 %.5f (ratio %.4f, allowed <= 1.02)", b, a, b / a)};
}

Outcome gan_liveness(Desk& desk, const std::string& work) {
  const auto& l1 = desk.l1("b2u2k8", 1);
  TrainPlan p;
  p.phase = Phase::kGan;
  p.generator = GeneratorConfig::parse("b2u2k8");
  p.batch = 4;
  p.patch = PatchSpec{{16, 16, 16}, 0, 18};
  p.steps = 2000;
  p.val_every = 250;
  p.val_patches = 8;
  p.schedule = ScheduleConstants{200, 5, 20, 50};
  p.discriminator = DiscriminatorConfig{8, 4, 32};
  p.init_generator = l1.result.best_path;
  p.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<TrainResult> r;
  std::string error;
  std::optional<Trainer> t;
  try {
    t.emplace(p, desk.train(), desk.val(), work + "/runs/gan");
    r = t->run();
  } catch (const std::exception& e) {
    error = e.what();
  }
  if (!r) return {false, "GAN phase aborted: " + error};
  bool finite = true;
  std::int64_t em_points = 0;
  for (const auto& e : EventLog::read(r->events_path)) {
    if (e.kind == "d_step") {
      ++em_points;
      finite = finite && std::isfinite(e.extra.at("em").get<double>()) && std::isfinite(e.value);
    }
    if (e.kind == "val" || e.kind == "g_step") finite = finite && std::isfinite(e.value);
  }
  const auto [psnr, ssim] = desk.score(t->generator());
  const double drop = l1.psnr_sr - psnr;
  return {finite && drop <= 1.0,
          fmt("%lld G / %lld D steps in %.0fs, %lld EM estimates all finite: %s, PSNR %.3f -> %.3f dB (drop %.3f, "
              "allowed 1.0)",
              static_cast<long long>(r->generator_steps), static_cast<long long>(r->critic_steps), seconds_since(t0),
              static_cast<long long>(em_points), finite ? "yes" : "no", l1.psnr_sr, psnr, drop)};
}

Outcome determinism(Desk& desk) {
  const auto& a = desk.l1("b2u2k8", 1);
  const auto& b = desk.l1("b2u2k8", 1, "/repeat");
  const bool events = slurp(a.result.events_path) == slurp(b.result.events_path);
  const bool best = slurp(a.result.best_path) == slurp(b.result.best_path);
  const bool latest = slurp(a.result.latest_path) == slurp(b.result.latest_path);
  return {events && best && latest, fmt("event logs identical: %s, best checkpoints identical: %s, latest "
                                        "checkpoints identical: %s",
                                        events ? "yes" : "no", best ? "yes" : "no", latest ? "yes" : "no")};
}

// ---- 10: metric oracles -----------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1, 2);
  std::normal_distribution<double> n(0, 0.2);
  std::uniform_int_distribution<int> lab(0, 3);
  double worst = 0, worst_identity = 0;
  for (int i = 0; i < 10; ++i) {
    Volume<double> ref({5, 19 + i, 23 - i});
    for (auto& x : ref.data) x = u(rng);
    Volume<double> sr = ref;
    for (auto& x : sr.data) x += n(rng);
    const double r = testing::oracle_range(ref);
    worst = std::max({worst, std::abs(psnr_slicewise(sr, ref) - testing::oracle_psnr(sr, ref, r)),
                      std::abs(ssim_slicewise(sr, ref) - testing::oracle_ssim(sr, ref, r)),
                      std::abs(nrmse(sr, ref) - testing::oracle_nrmse(sr, ref))});
    std::vector<int> a(sr.data.size()), b(sr.data.size());
    for (auto& x : a) x = lab(rng);
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = u(rng) < 0 ? lab(rng) : a[k];
    LabelMap la{ref.shape, {a.begin(), a.end()}, {0, 1, 2, 3, 4}}, lb{ref.shape, {b.begin(), b.end()}, {0, 1, 2, 3, 4}};
    for (int l = 0; l <= 4; ++l) {
      const double d = dice(la, lb, l), j = jaccard(la, lb, l);
      worst = std::max({worst, std::abs(d - testing::oracle_dice(a, b, l)), std::abs(j - testing::oracle_jaccard(a, b, l))});
      worst_identity = std::max(worst_identity, std::abs(d - 2 * j / (1 + j)));
    }
  }
  return {worst <= 1e-9 && worst_identity <= 1e-12,
          fmt("10 volume pairs: max deviation from loop oracles %.1e (<= 1e-9), dice-jaccard identity %.1e (<= 1e-12)",
              worst, worst_identity)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string work = (fs::temp_directory_path() / "mdcsrn_acceptance").string();
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--workdir DIR]\n");
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);

  Desk desk(work);
  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria = {
      {1, {"parameter-count reproduction", parameter_counts}},
      {2, {"gradient integrity", gradient_integrity}},
      {3, {"degradation pipeline", degradation}},
      {4, {"patch pipeline", patch_pipeline}},
      {5, {"WGAN-GP properties", wgan_properties}},
      {6, {"GAN schedule trace", [&] { return schedule_trace(work); }}},
      {10, {"metric oracles", metric_oracles}},
      {7, {"desk-scale learning", [&] { return desk_learning(desk); }}},
      {11, {"determinism", [&] { return determinism(desk); }}},
      {8, {"depth ordering", [&] { return depth_ordering(desk); }}},
      {9, {"GAN fine-tune liveness", [&] { return gan_liveness(desk, work); }}},
  };
  int failed = 0, ran = 0;
  for (const auto& [id, c] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, c.first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
