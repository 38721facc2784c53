#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "mdcsrn/adversary/wgan.hpp"
#include "mdcsrn/degrade/degrade.hpp"
#include "mdcsrn/harness/checkpoint.hpp"
#include "mdcsrn/harness/config.hpp"
#include "mdcsrn/harness/event_log.hpp"
#include "mdcsrn/harness/infer.hpp"
#include "mdcsrn/harness/manifest.hpp"
#include "mdcsrn/harness/schedule.hpp"
#include "mdcsrn/harness/volume_io.hpp"

namespace mdcsrn {

enum class Phase { kL1, kGan };

struct TrainPlan {
  Phase phase = Phase::kL1;
  GeneratorConfig generator = GeneratorConfig::parse("b4u4k12");
  DiscriminatorConfig discriminator{};
  /// Unset means 1e-4 for the L1 phase and 5e-6 for the GAN phase.
  std::optional<double> lr;
  std::int64_t batch = 6;
  std::int64_t steps = 1000;
  double lambda_adv = 0.1;
  double lambda_gp = 10.0;
  PatchSpec patch{{40, 40, 40}, 0, 18};
  std::uint64_t seed = 0;
  std::int64_t val_every = 500;
  /// Patches drawn from the validation subjects for the EM estimate.
  std::int64_t val_patches = 12;
  ScheduleConstants schedule{};
  DegradeSpec degrade{};
  InferOptions infer{};
  /// Checkpoint the GAN phase starts from.
  std::string init_generator;

  double learning_rate() const { return lr.value_or(phase == Phase::kL1 ? 1e-4 : 5e-6); }

  void validate() const {
    generator.validate();
    patch.validate();
    infer.tiles.validate();
    schedule.validate();
    if (batch < 1 || steps < 1 || val_every < 1 || val_patches < 1)
      throw ConfigError("train plan: batch, steps, val_every and val_patches must be >= 1");
    if (!(learning_rate() > 0)) throw ConfigError("train plan: learning rate must be positive");
    if (phase == Phase::kGan) {
      if (init_generator.empty())
        throw ConfigError("train plan: the GAN phase starts from a trained generator; set gan.init_generator");
      DiscriminatorConfig d = discriminator;
      d.patch = patch.size;
      disc::plan(d);
    }
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{
        "train.phase",   "train.lr",        "train.batch",     "train.steps",       "train.seed",
        "train.val_every", "model.generator", "gan.lambda",    "gan.lambda_gp",     "gan.init_generator",
        "gan.warmup",    "gan.ratio",       "gan.burst",       "gan.burst_every",   "gan.val_patches",
        "disc.base_width", "disc.stages",   "disc.head_width", "disc.allow_truncation", "patch.size",
        "patch.count",   "infer.patch",     "infer.margin",    "infer.bn_mode",     "degrade.phase_factor",
        "degrade.readout_factor"};
    return k;
  }

  static TrainPlan from_config(const Config& c) {
    c.require_known(keys());
    TrainPlan p;
    const std::string phase = c.get("train.phase", "l1");
    if (phase == "l1")
      p.phase = Phase::kL1;
    else if (phase == "gan")
      p.phase = Phase::kGan;
    else
      throw ConfigError("train.phase must be l1 or gan, got '" + phase + "'");
    p.generator = GeneratorConfig::parse(c.get("model.generator", "b4u4k12"));
    if (c.has("train.lr")) p.lr = c.get_double("train.lr", 0);
    p.batch = c.get_int("train.batch", p.batch);
    p.steps = c.get_int("train.steps", p.steps);
    p.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
    p.val_every = c.get_int("train.val_every", p.val_every);
    p.lambda_adv = c.get_double("gan.lambda", p.lambda_adv);
    p.lambda_gp = c.get_double("gan.lambda_gp", p.lambda_gp);
    p.init_generator = c.get("gan.init_generator", "");
    p.schedule.warmup = c.get_int("gan.warmup", p.schedule.warmup);
    p.schedule.ratio = c.get_int("gan.ratio", p.schedule.ratio);
    p.schedule.burst = c.get_int("gan.burst", p.schedule.burst);
    p.schedule.burst_every = c.get_int("gan.burst_every", p.schedule.burst_every);
    p.val_patches = c.get_int("gan.val_patches", p.val_patches);
    p.discriminator.base_width = c.get_int("disc.base_width", p.discriminator.base_width);
    p.discriminator.stages = c.get_int("disc.stages", p.discriminator.stages);
    p.discriminator.head_width = c.get_int("disc.head_width", p.discriminator.head_width);
    p.discriminator.allow_truncation = c.get_bool("disc.allow_truncation", false);
    const auto ps = c.get_ints("patch.size", {40, 40, 40}, 3);
    p.patch.size = {ps[0], ps[1], ps[2]};
    p.patch.count = c.get_int("patch.count", p.patch.count);
    const auto ip = c.get_ints("infer.patch", {70, 70, 70}, 3);
    p.infer.tiles.size = {ip[0], ip[1], ip[2]};
    p.infer.tiles.margin = c.get_int("infer.margin", 3);
    const std::string bn = c.get("infer.bn_mode", "eval");
    if (bn != "eval" && bn != "train") throw ConfigError("infer.bn_mode must be eval or train");
    p.infer.bn = bn == "train" ? BnMode::kTrain : BnMode::kEval;
    p.degrade.phase_factor = c.get_int("degrade.phase_factor", 2);
    p.degrade.readout_factor = c.get_int("degrade.readout_factor", 1);
    p.validate();
    return p;
  }
};

/// An HR volume and its degraded, re-interpolated LR partner.
struct Subject {
  std::string id;
  Volume<float> hr, lr;
};

inline Subject make_subject(std::string id, const Volume<float>& hr, const DegradeSpec& spec) {
  return {std::move(id), hr, degrade(hr.cast<double>(), spec).cast<float>()};
}

inline std::vector<Subject> load_subjects(const DatasetManifest& m, Split split, const DegradeSpec& spec) {
  std::vector<Subject> out;
  for (const auto& s : m.in(split)) out.push_back(make_subject(s.id, read_volume<float>(m.resolve(s)), spec));
  return out;
}

namespace train {

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

template <typename T>
Tensor<T> stack(const std::vector<const Volume<float>*>& vols) {
  const Index3 s = vols.front()->shape;
  std::vector<T> d;
  d.reserve(vols.size() * static_cast<std::size_t>(voxels(s)));
  for (const auto* v : vols) d.insert(d.end(), v->data.begin(), v->data.end());
  return Tensor<T>::from({static_cast<std::int64_t>(vols.size()), 1, s[0], s[1], s[2]}, std::move(d));
}

/// Epoch-wise patch supply: each epoch samples `patch.count` pairs from every
/// training subject, shuffles the pool and hands it out in batches. A tail
/// shorter than one batch is dropped.
class PatchStream {
 public:
  PatchStream(const std::vector<Subject>& subjects, PatchSpec spec, std::uint64_t seed)
      : subjects_(subjects), spec_(spec), seed_(seed) {
    if (subjects_.empty()) throw ConfigError("training needs at least one training subject");
  }

  template <typename T>
  std::pair<Tensor<T>, Tensor<T>> next(std::int64_t batch) {
    if (epoch_ == 0 || cursor_ + batch > static_cast<std::int64_t>(pool_.size())) refill();
    if (static_cast<std::int64_t>(pool_.size()) < batch)
      throw ConfigError("batch size " + std::to_string(batch) + " exceeds the " + std::to_string(pool_.size()) +
                        " patches per epoch");
    std::vector<const Volume<float>*> lr, hr;
    for (std::int64_t i = 0; i < batch; ++i) {
      lr.push_back(&pool_[cursor_ + i].lr);
      hr.push_back(&pool_[cursor_ + i].hr);
    }
    cursor_ += batch;
    return {stack<T>(lr), stack<T>(hr)};
  }

  std::int64_t epoch() const { return epoch_; }

 private:
  void refill() {
    ++epoch_;
    pool_.clear();
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
      auto pairs = sample_training_patches(subjects_[i].lr, subjects_[i].hr, spec_, mix(seed_, epoch_, i));
      for (auto& p : pairs) pool_.push_back(std::move(p));
    }
    std::mt19937_64 rng(mix(seed_, epoch_, 0xfffffffful));
    std::shuffle(pool_.begin(), pool_.end(), rng);
    cursor_ = 0;
  }

  const std::vector<Subject>& subjects_;
  PatchSpec spec_;
  std::uint64_t seed_;
  std::int64_t epoch_ = 0;
  std::int64_t cursor_ = 0;
  std::vector<PatchPair<float>> pool_;
};

}  // namespace train

struct TrainResult {
  std::int64_t steps = 0;
  double best_score = std::numeric_limits<double>::quiet_NaN();
  std::int64_t best_step = 0;
  double last_score = std::numeric_limits<double>::quiet_NaN();
  std::string best_path, latest_path, events_path;
  std::int64_t generator_steps = 0, critic_steps = 0, epochs = 0;
};

/// Runs one training phase. L1 phase: every step is a generator update on
/// the L1 loss; validation is MSE over whole validation volumes via the
/// tiler (lower is better). GAN phase: the schedule picks critic or
/// generator updates; validation is the EM estimate on fixed validation
/// patches (lower is better). Writes events.jsonl, latest.ckpt, best.ckpt.
class Trainer {
 public:
  Trainer(TrainPlan plan, std::vector<Subject> train, std::vector<Subject> val, std::string out_dir,
          const Checkpoint* init = nullptr)
      : plan_(std::move(plan)),
        train_(std::move(train)),
        val_(std::move(val)),
        out_dir_(std::move(out_dir)),
        gen_(plan_.generator, train::mix(plan_.seed, 1, 0)),
        rng_(train::mix(plan_.seed, 2, 0)),
        stream_(train_, plan_.patch, train::mix(plan_.seed, 3, 0)) {
    plan_.validate();
    std::filesystem::create_directories(out_dir_);
    gen_opt_.set_lr(plan_.learning_rate());
    if (plan_.phase == Phase::kGan) {
      Checkpoint c = init ? *init : Checkpoint::load(plan_.init_generator);
      Generator<float> g = restore_generator<float>(c);
      if (g.config().name() != plan_.generator.name())
        throw ConfigError("init generator is " + g.config().name() + ", plan asks for " + plan_.generator.name());
      gen_ = std::move(g);
      DiscriminatorConfig dc = plan_.discriminator;
      dc.patch = plan_.patch.size;
      critic_.emplace(dc, train::mix(plan_.seed, 4, 0));
      critic_opt_.set_lr(plan_.learning_rate());
      build_val_patches();
    }
  }

  Generator<float>& generator() { return gen_; }
  std::optional<Discriminator<float>>& critic() { return critic_; }
  const EventLog& log() const { return *log_; }

  TrainResult run() {
    log_.emplace(out_dir_ + "/events.jsonl");
    TrainResult res;
    res.events_path = log_->path();
    res.latest_path = out_dir_ + "/latest.ckpt";
    res.best_path = out_dir_ + "/best.ckpt";
    GanSchedule schedule(plan_.schedule);
    for (std::int64_t step = 1; step <= plan_.steps; ++step) {
      if (plan_.phase == Phase::kL1) {
        l1_step(step);
      } else if (schedule.next() == StepKind::kCritic) {
        critic_step(step);
      } else {
        generator_step(step);
      }
      if (step % plan_.val_every == 0 || step == plan_.steps) {
        const double score = validate();
        log_->record(step, "val", score, {{"metric", plan_.phase == Phase::kL1 ? "mse" : "em"}, {"epoch", stream_.epoch()}});
        res.last_score = score;
        save(res.latest_path, step, score);
        log_->record(step, "ckpt", score, {{"which", "latest"}});
        if (std::isnan(res.best_score) || score < res.best_score) {
          res.best_score = score;
          res.best_step = step;
          save(res.best_path, step, score);
          log_->record(step, "ckpt", score, {{"which", "best"}});
        }
      }
    }
    res.steps = plan_.steps;
    res.generator_steps = plan_.phase == Phase::kL1 ? plan_.steps : schedule.generator_steps();
    res.critic_steps = schedule.critic_steps();
    res.epochs = stream_.epoch();
    return res;
  }

  /// MSE over whole validation volumes (L1 phase) or the EM estimate (GAN).
  double validate() {
    if (plan_.phase == Phase::kGan) {
      const auto fake = generate(val_lr_);
      return em_estimate(*critic_, val_hr_, fake);
    }
    if (val_.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0;
    for (const auto& s : val_) {
      const auto sr = infer_volume(gen_, s.lr, plan_.infer).sr;
      double se = 0;
      for (std::size_t i = 0; i < sr.data.size(); ++i) {
        const double d = static_cast<double>(sr.data[i]) - static_cast<double>(s.hr.data[i]);
        se += d * d;
      }
      total += se / static_cast<double>(sr.data.size());
    }
    return total / static_cast<double>(val_.size());
  }

  Checkpoint snapshot(std::int64_t step, double score) const {
    Checkpoint c;
    store_generator(c, gen_);
    ckpt::put_adam(c, "optG/", gen_opt_);
    if (critic_) {
      store_discriminator(c, *critic_);
      ckpt::put_adam(c, "optD/", critic_opt_);
    }
    std::ostringstream rng;
    rng << rng_;
    c.meta["step"] = step;
    c.meta["phase"] = plan_.phase == Phase::kL1 ? "l1" : "gan";
    c.meta["score"] = score;
    c.meta["rng"] = rng.str();
    c.meta["seed"] = plan_.seed;
    return c;
  }

 private:
  void fail(std::int64_t step, const std::string& what, nlohmann::json detail) {
    detail["step"] = step;
    detail["reason"] = what;
    io::write_atomically(out_dir_ + "/abort.json", [&](std::ofstream& f) { f << detail.dump(2) << '\n'; });
    log_->record(step, "abort", std::numeric_limits<double>::quiet_NaN(), {{"reason", what}});
    throw TrainingIntegrityError("training aborted at step " + std::to_string(step) + ": " + what +
                                 " (diagnostics in " + out_dir_ + "/abort.json; last good checkpoint kept)");
  }

  Tensor<float> generate(const Tensor<float>& lr) {
    NoGradGuard ng;
    return gen_.forward(lr, BnMode::kTrain);
  }

  void l1_step(std::int64_t step) {
    auto [lr, hr] = stream_.next<float>(plan_.batch);
    Tensor<float> loss = l1_loss(gen_.forward(lr, BnMode::kTrain), hr);
    const double v = loss.item();
    if (!std::isfinite(v)) fail(step, "non-finite L1 loss", {{"loss", std::to_string(v)}});
    gen_.params().clear_grad();
    autograd::backward(loss);
    gen_opt_.step(gen_.params());
    log_->record(step, "g_step", v, {{"loss", "l1"}});
  }

  void critic_step(std::int64_t step) {
    auto [lr, hr] = stream_.next<float>(plan_.batch);
    const Tensor<float> fake = generate(lr);
    GanLossTerms<float> t;
    try {
      t = wgan_gp_terms(*critic_, hr, fake, plan_.lambda_gp, rng_);
    } catch (const TrainingIntegrityError& e) {
      fail(step, e.what(), {});
    }
    critic_->params().clear_grad();
    autograd::backward(t.d_loss);
    critic_opt_.step(critic_->params());
    log_->record(step, "d_step", t.d_loss.item(), {{"em", t.em_estimate}, {"gp", t.gradient_penalty.item()}});
  }

  void generator_step(std::int64_t step) {
    auto [lr, hr] = stream_.next<float>(plan_.batch);
    Tensor<float> sr = gen_.forward(lr, BnMode::kTrain);
    Tensor<float> adv;
    try {
      adv = adversarial_loss(*critic_, sr);
    } catch (const TrainingIntegrityError& e) {
      fail(step, e.what(), {});
    }
    Tensor<float> loss = composite_generator_loss(sr, hr, adv, plan_.lambda_adv);
    const double v = loss.item();
    if (!std::isfinite(v)) fail(step, "non-finite generator loss", {{"loss", std::to_string(v)}});
    gen_.params().clear_grad();
    autograd::backward(loss);
    gen_opt_.step(gen_.params());
    critic_->params().clear_grad();
    log_->record(step, "g_step", v, {{"loss", "l1+adv"}, {"adv", adv.item()}});
  }

  void build_val_patches() {
    const auto& pool = val_.empty() ? train_ : val_;
    std::vector<const Volume<float>*> lr, hr;
    std::vector<Volume<float>> keep;
    keep.reserve(static_cast<std::size_t>(2 * plan_.val_patches));
    for (std::int64_t i = 0; i < plan_.val_patches; ++i) {
      const Subject& s = pool[static_cast<std::size_t>(i) % pool.size()];
      const auto o = sample_offsets(s.hr.shape, plan_.patch.size, 1, train::mix(plan_.seed, 5, i)).front();
      keep.push_back(crop(s.lr, o, plan_.patch.size));
      keep.push_back(crop(s.hr, o, plan_.patch.size));
    }
    for (std::size_t i = 0; i < keep.size(); i += 2) {
      lr.push_back(&keep[i]);
      hr.push_back(&keep[i + 1]);
    }
    val_lr_ = train::stack<float>(lr);
    val_hr_ = train::stack<float>(hr);
  }

  void save(const std::string& path, std::int64_t step, double score) const { snapshot(step, score).save(path); }

  TrainPlan plan_;
  std::vector<Subject> train_, val_;
  std::string out_dir_;
  Generator<float> gen_;
  Adam<float> gen_opt_, critic_opt_;
  std::optional<Discriminator<float>> critic_;
  std::mt19937_64 rng_;
  train::PatchStream stream_;
  std::optional<EventLog> log_;
  Tensor<float> val_lr_, val_hr_;
};

}  // namespace mdcsrn
