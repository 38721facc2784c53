#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <json.hpp>

#include "mdcsrn/harness/phantom.hpp"
#include "mdcsrn/harness/trainer.hpp"
#include "mdcsrn/metrics/report.hpp"

using namespace mdcsrn;
using nlohmann::json;

namespace {

// Every subcommand reads an optional flat config file, then `--set key=value`
// overrides, then its own flags.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;

  Config load() const {
    Config c = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return c;
  }
};

void add_common(CLI::App* app, Common& c, bool config_flag = true) {
  if (config_flag) app->add_option("--config", c.config_path, "flat key = value config file");
  app->add_option("--set", c.sets, "override one config key (key=value), repeatable");
}

Index3 parse_triplet(const std::string& s, const std::string& what) {
  Config c;
  c.set(what, s);
  const auto v = c.get_ints(what, {}, 3);
  return {v[0], v[1], v[2]};
}

int cmd_degrade(const std::string& in, const std::string& out, const std::string& factors, const Common& common) {
  const Config cfg = common.load();
  DegradeSpec spec;
  spec.phase_factor = cfg.get_int("degrade.phase_factor", 2);
  spec.readout_factor = cfg.get_int("degrade.readout_factor", 1);
  if (!factors.empty()) spec.axis_factors = parse_triplet(factors, "--factors");
  const auto v = read_volume<double>(in);
  const auto lr = degrade(v, spec);
  write_volume(out, lr.cast<float>());
  const auto f = spec.factors_for(v);
  std::cout << json{{"in", in}, {"out", out}, {"shape", v.shape}, {"factors", f}}.dump() << '\n';
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& out_dir, const std::string& init,
              const Common& common) {
  Config cfg = common.load();
  if (!init.empty()) cfg.set("gan.init_generator", init);
  const TrainPlan plan = TrainPlan::from_config(cfg);
  const auto manifest = DatasetManifest::load(manifest_path);
  auto train = load_subjects(manifest, Split::kTrain, plan.degrade);
  auto val = load_subjects(manifest, Split::kValidation, plan.degrade);
  Trainer trainer(plan, std::move(train), std::move(val), out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = trainer.run();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << json{{"steps", r.steps},
                    {"generator_steps", r.generator_steps},
                    {"critic_steps", r.critic_steps},
                    {"epochs", r.epochs},
                    {"best_score", r.best_score},
                    {"best_step", r.best_step},
                    {"best", r.best_path},
                    {"latest", r.latest_path},
                    {"events", r.events_path},
                    {"seconds", secs}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& in, const std::string& out, std::int64_t patch,
              std::int64_t margin, const std::string& bn_mode, const Common& common) {
  const Config cfg = common.load();
  InferOptions opt;
  const auto p = cfg.get_ints("infer.patch", {patch, patch, patch}, 3);
  opt.tiles.size = {p[0], p[1], p[2]};
  opt.tiles.margin = cfg.get_int("infer.margin", margin);
  const std::string bn = cfg.get("infer.bn_mode", bn_mode);
  if (bn != "eval" && bn != "train") throw ConfigError("--bn-mode must be eval or train");
  opt.bn = bn == "train" ? BnMode::kTrain : BnMode::kEval;
  opt.tiles.validate();
  const auto gen = restore_generator<float>(Checkpoint::load(ckpt_path));
  const auto lr = read_volume<float>(in);
  const auto r = infer_volume(gen, lr, opt);
  write_volume(out, r.sr);
  std::cout << json{{"out", out}, {"tiles", r.tiles}, {"seconds", r.seconds}, {"generator", gen.config().name()}}.dump()
            << '\n';
  return 0;
}

LabelMap read_label_map(const std::string& path) {
  const auto v = read_volume<double>(path);
  LabelMap m{v.shape, {}, {}};
  for (double x : v.data) {
    if (x != std::round(x)) throw IoError(path + ": label maps must hold integer values");
    m.labels.push_back(static_cast<std::int32_t>(x));
  }
  return m;
}

int cmd_eval(const std::string& ref_path, const std::string& test_path, const std::string& plane,
             const std::vector<std::string>& labels, double range, const Common& common) {
  (void)common.load();
  const auto ref = read_volume<double>(ref_path);
  const auto test = read_volume<double>(test_path);
  std::vector<std::string> warnings;
  MetricOptions opt;
  opt.warnings = &warnings;
  if (range > 0) opt.data_range = range;
  if (!plane.empty()) {
    const std::string axes = "DHW";
    if (plane.size() != 2 || axes.find(plane[0]) == std::string::npos || axes.find(plane[1]) == std::string::npos)
      throw ConfigError("--plane expects two of D, H, W (e.g. HW)");
    opt.plane = std::array<int, 2>{static_cast<int>(axes.find(plane[0])), static_cast<int>(axes.find(plane[1]))};
  }
  const auto s = score_subject(test_path, test, ref, opt);
  json out = {{"psnr", s.psnr}, {"ssim", s.ssim}, {"nrmse", s.nrmse}, {"psnr_global", psnr_global(test, ref, opt)}};
  if (!labels.empty()) {
    if (labels.size() != 2) throw ConfigError("--labels takes two label map files");
    LabelMap a = read_label_map(labels[0]), b = read_label_map(labels[1]);
    std::set<std::int32_t> vocab(a.labels.begin(), a.labels.end());
    vocab.insert(b.labels.begin(), b.labels.end());
    a.vocabulary = b.vocabulary = std::vector<std::int32_t>(vocab.begin(), vocab.end());
    json per = json::object();
    for (auto l : vocab) per[std::to_string(l)] = {{"dice", dice(a, b, l)}, {"jaccard", jaccard(a, b, l)}};
    const std::vector<std::int32_t> all(vocab.begin(), vocab.end());
    out["labels"] = {{"per_label", per}, {"dice_macro", macro_average(a, b, all, dice)},
                     {"jaccard_macro", macro_average(a, b, all, jaccard)}};
  }
  out["warnings"] = warnings;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_params(const std::string& name, const std::string& recon) {
  GeneratorConfig c = GeneratorConfig::parse(name);
  if (recon == "r") c.head = ReconHead::kBottleneck;
  else if (recon == "direct") c.head = ReconHead::kDirect;
  else if (!recon.empty()) throw ConfigError("--recon must be direct or r");
  const std::int64_t n = count_params(c);
  std::cout << describe(c).text();
  std::printf("%s: %lld parameters (%.2fM)\n", c.name().c_str(), static_cast<long long>(n), n / 1e6);
  return 0;
}

int cmd_make_phantoms(const std::string& out, std::int64_t count, const std::string& shape, std::uint64_t seed,
                      const std::string& split, const Common& common) {
  const Config cfg = common.load();
  PhantomOptions opt;
  opt.shape = parse_triplet(cfg.get("phantom.shape", shape), "--shape");
  opt.curves = static_cast<int>(cfg.get_int("phantom.curves", opt.curves));
  opt.noise = cfg.get_double("phantom.noise", opt.noise);
  PhantomSet set;
  if (!split.empty()) {
    Config c;
    c.set("--split", split);
    const auto s = c.get_ints("--split", {});
    if (s.size() != 4) throw ConfigError("--split expects train,validation,evaluation,test counts");
    set = {s[0], s[1], s[2], s[3]};
  } else {
    // roughly the 780/111/111/111 proportions
    set.validation = std::max<std::int64_t>(1, count / 10);
    set.evaluation = std::max<std::int64_t>(1, count / 10);
    set.test = std::max<std::int64_t>(0, count / 10);
    set.train = count - set.validation - set.evaluation - set.test;
  }
  if (set.total() != count && count > 0) throw ConfigError("--split counts must add up to --count");
  if (set.train < 1) throw ConfigError("make-phantoms needs at least one training subject");
  const auto m = make_phantoms(out, set, opt, seed);
  std::cout << json{{"manifest", out + "/manifest.json"}, {"subjects", m.subjects.size()}}.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mdcsrn: 3-D MRI super-resolution with densely connected networks"};
  app.require_subcommand(1);

  Common common;

  auto* deg = app.add_subcommand("degrade", "simulate a low-resolution acquisition by k-space truncation");
  std::string deg_in, deg_out, deg_factors;
  deg->add_option("--in", deg_in)->required();
  deg->add_option("--out", deg_out)->required();
  deg->add_option("--factors", deg_factors, "per-axis truncation factors in D,H,W order, e.g. 1,2,2");
  add_common(deg, common);

  auto* tr = app.add_subcommand("train", "run one training phase (l1 or gan)");
  std::string tr_manifest, tr_out, tr_init;
  tr->add_option("--manifest", tr_manifest)->required();
  tr->add_option("--out", tr_out, "checkpoint directory")->required();
  tr->add_option("--init-generator", tr_init, "checkpoint the GAN phase starts from");
  add_common(tr, common);

  auto* inf = app.add_subcommand("infer", "tiled super-resolution of a volume");
  std::string inf_ckpt, inf_in, inf_out, inf_bn = "eval";
  std::int64_t inf_patch = 70, inf_margin = 3;
  inf->add_option("--ckpt", inf_ckpt)->required();
  inf->add_option("--in", inf_in)->required();
  inf->add_option("--out", inf_out)->required();
  inf->add_option("--patch", inf_patch);
  inf->add_option("--margin", inf_margin);
  inf->add_option("--bn-mode", inf_bn, "eval (running statistics) or train (per-tile statistics)");
  add_common(inf, common);

  auto* ev = app.add_subcommand("eval", "slice-wise PSNR, SSIM and NRMSE against a reference");
  std::string ev_ref, ev_test, ev_plane;
  std::vector<std::string> ev_labels;
  double ev_range = 0;
  ev->add_option("--ref", ev_ref)->required();
  ev->add_option("--test", ev_test)->required();
  ev->add_option("--plane", ev_plane, "slice plane, two of D/H/W; default: the phase-encoded axes");
  ev->add_option("--labels", ev_labels, "two label maps for Dice/Jaccard")->expected(2);
  ev->add_option("--range", ev_range, "intensity range R; default: the reference's max - min");
  add_common(ev, common);

  auto* par = app.add_subcommand("params", "parameter count and layer report of a generator");
  std::string par_name, par_recon;
  par->add_option("--config", par_name, "configuration name, e.g. b8u4k12 or b1u16-r")->required();
  par->add_option("--recon", par_recon, "direct or r");

  auto* mk = app.add_subcommand("make-phantoms", "write a synthetic dataset and its manifest");
  std::string mk_out, mk_shape = "64,64,64", mk_split;
  std::int64_t mk_count = 0;
  std::uint64_t mk_seed = 0;
  mk->add_option("--out", mk_out)->required();
  mk->add_option("--count", mk_count, "number of subjects");
  mk->add_option("--shape", mk_shape, "D,H,W (each >= 48)");
  mk->add_option("--seed", mk_seed);
  mk->add_option("--split", mk_split, "train,validation,evaluation,test counts");
  add_common(mk, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (deg->parsed()) return cmd_degrade(deg_in, deg_out, deg_factors, common);
    if (tr->parsed()) return cmd_train(tr_manifest, tr_out, tr_init, common);
    if (inf->parsed()) return cmd_infer(inf_ckpt, inf_in, inf_out, inf_patch, inf_margin, inf_bn, common);
    if (ev->parsed()) return cmd_eval(ev_ref, ev_test, ev_plane, ev_labels, ev_range, common);
    if (par->parsed()) return cmd_params(par_name, par_recon);
    if (mk->parsed()) return cmd_make_phantoms(mk_out, mk_count, mk_shape, mk_seed, mk_split, common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
