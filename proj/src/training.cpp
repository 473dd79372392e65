#include "pairlearn/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <stdexcept>

#include <omp.h>

#include "pairlearn/io.hpp"

namespace pairlearn {

using nlohmann::json;

std::string_view to_string(Batching b) { return b == Batching::per_trial ? "per_trial" : "full_batch"; }

Batching parse_batching(std::string_view s) {
  if (s == "per_trial") return Batching::per_trial;
  if (s == "full_batch") return Batching::full_batch;
  throw std::invalid_argument("unknown batching '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(base_lr > 0) || !std::isfinite(base_lr)) throw std::invalid_argument("base lr must be > 0");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("adam betas must be in [0, 1)");
  if (!(adam_epsilon > 0)) throw std::invalid_argument("adam epsilon must be > 0");
  if (!(margin >= -1.0 && margin < 1.0)) throw std::invalid_argument("margin must be in [-1, 1)");
  weights.validate();
}

double lr_at(long step, long total_steps, double base_lr) {
  if (total_steps <= 0) throw std::out_of_range("total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
  if (step == total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

AdamW::AdamW(std::size_t size, double beta1, double beta2, double epsilon, double weight_decay)
    : m_(size, 0.0), v_(size, 0.0), beta1_(beta1), beta2_(beta2), eps_(epsilon), wd_(weight_decay) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("AdamW: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * params[i]);
  }
}

// --- records ----------------------------------------------------------------

json to_json(const RunRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["feature"] = to_string(r.cell.feature);
  j["alignment"] = to_string(r.cell.alignment);
  j["supervision"] = r.cell.supervision;
  j["seed"] = r.seed;
  j["plan_id"] = r.plan_id;
  j["category"] = r.category;
  j["weights"] = {{"bce", r.weights.bce},
                  {"consistency", r.weights.consistency},
                  {"contrastive", r.weights.contrastive}};
  j["margin"] = r.margin;
  j["epochs"] = r.epochs;
  j["base_lr"] = r.base_lr;
  j["loss_curve"] = r.loss_curve;
  j["correct"] = r.correct;
  j["total"] = r.total;
  j["accuracy"] = r.accuracy;
  j["status"] = r.status;
  j["diagnostic"] = r.diagnostic;
  j["checkpoint_path"] = r.checkpoint_path;
  j["config_hash"] = r.config_hash;
  j["tool_version"] = r.tool_version;
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.cell.feature = parse_feature(j.at("feature").get<std::string>());
  r.cell.alignment = parse_alignment(j.at("alignment").get<std::string>());
  r.cell.supervision = SupervisionLevel(j.at("supervision").get<int>()).labeled_count();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.plan_id = j.at("plan_id").get<std::string>();
  r.category = j.at("category").get<std::string>();
  const json& w = j.at("weights");
  r.weights = {w.at("bce").get<double>(), w.at("consistency").get<double>(),
               w.at("contrastive").get<double>()};
  r.margin = j.at("margin").get<double>();
  r.epochs = j.at("epochs").get<int>();
  r.base_lr = j.at("base_lr").get<double>();
  r.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  r.correct = j.at("correct").get<int>();
  r.total = j.at("total").get<int>();
  r.accuracy = j.at("accuracy").get<double>();
  r.status = j.at("status").get<std::string>();
  r.diagnostic = j.at("diagnostic").get<std::string>();
  r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.tool_version = j.at("tool_version").get<std::string>();
  if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) throw std::invalid_argument("accuracy outside [0,1]");
  return r;
}

// --- training loop ----------------------------------------------------------

namespace {

struct PreparedTrial {
  TrainingTrial view;
  std::vector<double> left, right;
};

PreparedTrial prepare_trial(const TrainingTrial& view, const RenderedPair& rp) {
  return {view, image_to_tensor(rp.left_half), image_to_tensor(rp.right_half)};
}

// Forward both halves, then backprop the loss into `grad` scaled by `scale`.
double trial_step(const SiameseNet& net, const ModelParams& params, const PreparedTrial& t,
                  const TrainConfig& cfg, double scale, std::span<double> grad) {
  const HalfCache l = net.forward(params, t.left);
  const HalfCache r = net.forward(params, t.right);
  PairForward pf;
  pf.logit_left = l.logit;
  pf.logit_right = r.logit;
  pf.prob_left = logistic(l.logit);
  pf.prob_right = logistic(r.logit);
  pf.latent_left = l.latent;
  pf.latent_right = r.latent;
  LossGradient g = total_loss_grad(t.view, pf, cfg.weights, cfg.margin);
  if (!std::isfinite(g.value)) return g.value;
  for (auto& v : g.d_latent_left) v *= scale;
  for (auto& v : g.d_latent_right) v *= scale;
  net.backward(params, l, g.d_logit_left * scale, g.d_latent_left, grad);
  net.backward(params, r, g.d_logit_right * scale, g.d_latent_right, grad);
  return g.value;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

RunOutcome train_category_run(const TrainConfig& cfg, const EncoderConfig& encoder,
                              const RunInputs& in) {
  cfg.validate();
  encoder.validate();
  if (encoder.input_width != in.half_width || encoder.input_height != in.half_height)
    throw ShapeMismatch("encoder input " + std::to_string(encoder.input_width) + "x" +
                        std::to_string(encoder.input_height) + " does not match render size " +
                        std::to_string(in.half_width) + "x" + std::to_string(in.half_height));

  const TrialSchedule& sched = in.schedule;
  RunOutcome out{{}, init_params(encoder)};
  RunRecord& rec = out.record;
  rec.run_id = sched.run_id;
  rec.cell = {sched.category.feature, sched.alignment, sched.level.labeled_count()};
  rec.seed = cfg.seed;
  rec.plan_id = sched.plan_id;
  rec.category = sched.category.name;
  rec.weights = cfg.weights;
  rec.margin = cfg.margin;
  rec.epochs = cfg.epochs;
  rec.base_lr = cfg.base_lr;

  // Only the six learning trials are ever trained on.
  std::vector<TrainingTrial> views;
  {
    const ScheduleViews sv = split_views(sched);
    views.insert(views.end(), sv.supervised.begin(), sv.supervised.end());
    views.insert(views.end(), sv.unsupervised.begin(), sv.unsupervised.end());
    std::sort(views.begin(), views.end(),
              [](const auto& a, const auto& b) { return a.trial_index < b.trial_index; });
  }
  std::vector<PreparedTrial> trials;
  for (const auto& v : views) {
    const auto it = in.rendered.find(v.pair_id);
    if (it == in.rendered.end()) throw std::invalid_argument("no rendered stimulus for " + v.pair_id);
    trials.push_back(prepare_trial(v, it->second));
  }

  const SiameseNet net(encoder);
  ModelParams& params = out.params;
  AdamW opt(params.size(), cfg.beta1, cfg.beta2, cfg.adam_epsilon, cfg.weight_decay);
  Rng order_rng(cfg.seed ^ 0x6f72646572ULL);
  Rng fresh_rng(cfg.seed ^ 0x6672657368ULL);
  const long steps_per_epoch =
      cfg.batching == Batching::per_trial ? static_cast<long>(trials.size()) : 1L;
  const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(trials.size());
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs && rec.ok(); ++epoch) {
    if (cfg.fresh_unsupervised) {
      for (auto& t : trials) {
        if (t.view.supervised) continue;
        const PairSpec p = make_pair(in.space, sched.category, sched.alignment,
                                     t.view.same ? PairKind::compare : PairKind::contrast,
                                     fresh_rng);
        t = prepare_trial(t.view, render_pair(in.space, p, in.half_width, in.half_height));
      }
    }
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), order_rng);

    double epoch_loss = 0.0;
    if (cfg.batching == Batching::full_batch) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t idx : order) {
      if (cfg.batching == Batching::per_trial) std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = cfg.batching == Batching::per_trial ? 1.0 : 1.0 / trials.size();
      const double loss = trial_step(net, params, trials[idx], cfg, scale, grad);
      if (!std::isfinite(loss) || !all_finite(grad)) {
        rec.status = "diverged";
        rec.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + ", trial " +
                         trials[idx].view.pair_id;
        break;
      }
      epoch_loss += loss;
      if (cfg.batching == Batching::per_trial) opt.step(params.values, grad, lr_at(step++, total_steps, cfg.base_lr));
    }
    if (!rec.ok()) break;
    if (cfg.batching == Batching::full_batch) opt.step(params.values, grad, lr_at(step++, total_steps, cfg.base_lr));
    rec.loss_curve.push_back(epoch_loss / trials.size());
  }

  if (rec.ok()) {
    const ConditionResult cr = evaluate_test_set(params, in.test_pairs, in.test_images);
    rec.correct = cr.correct;
    rec.total = cr.total;
    rec.accuracy = cr.accuracy;
  }
  return out;
}

// --- sweep ------------------------------------------------------------------

std::vector<Cell> SweepGrid::cells() const {
  std::vector<Cell> out;
  for (Feature f : features)
    for (Alignment a : alignments)
      for (int lvl : levels) out.push_back({f, a, SupervisionLevel(lvl).labeled_count()});
  return out;
}

std::string make_run_id(const Cell& cell, std::uint64_t seed) {
  return std::string(to_string(cell.feature)) + "-" + std::string(to_string(cell.alignment)) +
         "-s" + std::to_string(cell.supervision) + "-seed" + std::to_string(seed);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const Cell& cell, std::uint64_t stream) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(cell.feature));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(cell.alignment) << 8));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(cell.supervision) << 16));
  return splitmix64(h ^ (stream << 32));
}

namespace stream {
constexpr std::uint64_t schedule = 1, test_set = 2, encoder = 3, training = 4;
}

RunInputs prepare_run(const SweepContext& ctx, const RunSpec& spec) {
  const CategoryBinding& cat = find_category(ctx.categories, spec.cell.feature, spec.cell.alignment);
  const SupervisionLevel level(spec.cell.supervision);
  const auto plans = enumerate_plans(level);
  const CounterbalancePlan& plan = plan_for_seed(plans, spec.seed_index);

  RunInputs in;
  in.space = ctx.space;
  in.half_width = ctx.half_width;
  in.half_height = ctx.half_height;
  Rng sched_rng(derive_seed(spec.seed, spec.cell, stream::schedule));
  in.schedule = build_schedule(ctx.space, cat.rule, cat.alignment, level, plan, sched_rng, spec.run_id);
  for (const auto& t : in.schedule.trials)
    in.rendered.emplace(t.pair_id, render_pair(ctx.space, t.pair, ctx.half_width, ctx.half_height));

  Rng test_rng(derive_seed(spec.seed, spec.cell, stream::test_set));
  const auto items = build_test_set(ctx.space, cat.rule, in.schedule.seen_objects(), test_rng);
  in.test_pairs = pair_test_items(cat.rule, items, test_rng);
  for (const auto& tp : in.test_pairs)
    in.test_images.push_back(render_test_pair(ctx.space, tp, ctx.half_width, ctx.half_height));
  return in;
}

RunOutcome execute_run(const SweepContext& ctx, const RunSpec& spec, const RunInputs& in) {
  TrainConfig cfg = ctx.train;
  cfg.seed = derive_seed(spec.seed, spec.cell, stream::training);
  EncoderConfig enc = ctx.encoder;
  enc.seed = derive_seed(spec.seed, spec.cell, stream::encoder);
  RunOutcome out = train_category_run(cfg, enc, in);
  out.record.seed = spec.seed;
  out.record.config_hash = ctx.config_hash;
  out.record.tool_version = ctx.tool_version;
  return out;
}

std::vector<RunSpec> plan_sweep(const SweepGrid& grid, const std::vector<std::uint64_t>& seeds) {
  std::vector<RunSpec> specs;
  for (const Cell& c : grid.cells())
    for (std::size_t i = 0; i < seeds.size(); ++i) specs.push_back({c, seeds[i], i, make_run_id(c, seeds[i])});
  return specs;
}

namespace {

std::optional<RunRecord> load_existing(const std::filesystem::path& path, const SweepContext& ctx,
                                       const RunSpec& spec) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    RunRecord r = record_from_json(json::parse(io::read_file(path)));
    if (r.run_id != spec.run_id || r.cell != spec.cell || r.seed != spec.seed ||
        r.config_hash != ctx.config_hash || !r.ok() ||
        r.loss_curve.size() != static_cast<std::size_t>(r.epochs))
      return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable or corrupted: run again
  }
}

}  // namespace

SweepResult run_sweep(const SweepContext& ctx, const SweepGrid& grid,
                      const std::vector<std::uint64_t>& seeds, const SweepOptions& opts) {
  if (grid.cells().empty()) throw std::invalid_argument("sweep grid is empty");
  if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  if (opts.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  std::filesystem::create_directories(opts.runs_dir);

  const std::vector<RunSpec> specs = plan_sweep(grid, seeds);
  std::vector<RunRecord> records(specs.size());
  std::vector<char> reused(specs.size(), 0);

  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!opts.resume) continue;
    if (auto r = load_existing(opts.runs_dir / (specs[i].run_id + ".json"), ctx, specs[i])) {
      records[i] = std::move(*r);
      reused[i] = 1;
    }
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (!reused[i]) todo.push_back(i);

  const long n_todo = static_cast<long>(todo.size());
  std::exception_ptr finish_error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(opts.jobs) if (opts.jobs > 1)
  for (long k = 0; k < n_todo; ++k) {
    const std::size_t i = todo[static_cast<std::size_t>(k)];
    const RunSpec& spec = specs[i];
    RunRecord rec;
    try {
      const RunInputs in = prepare_run(ctx, spec);
      if (opts.on_prepared) {
        std::exception_ptr err;
#pragma omp critical(pairlearn_sweep_callback)
        {
          try {
            opts.on_prepared(spec, in);
          } catch (...) {
            err = std::current_exception();
          }
        }
        if (err) std::rethrow_exception(err);
      }
      RunOutcome outcome = execute_run(ctx, spec, in);
      rec = std::move(outcome.record);
      if (opts.save_checkpoints && rec.ok()) {
        const auto ckpt = opts.runs_dir / (spec.run_id + ".ckpt");
        save_checkpoint(outcome.params, {outcome.params.config.seed, static_cast<int>(rec.loss_curve.size())}, ckpt);
        rec.checkpoint_path = ckpt.filename().string();
      }
    } catch (const std::exception& e) {
      rec = RunRecord{};
      rec.run_id = spec.run_id;
      rec.cell = spec.cell;
      rec.seed = spec.seed;
      rec.weights = ctx.train.weights;
      rec.margin = ctx.train.margin;
      rec.epochs = ctx.train.epochs;
      rec.base_lr = ctx.train.base_lr;
      rec.status = "failed";
      rec.diagnostic = e.what();
    }
    rec.config_hash = ctx.config_hash;
    rec.tool_version = ctx.tool_version;
    try {
      io::write_atomic(opts.runs_dir / (spec.run_id + ".json"), to_json(rec).dump(2) + "\n");
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.diagnostic = std::string("could not persist record: ") + e.what();
    }
    if (opts.on_finished) {
#pragma omp critical(pairlearn_sweep_callback)
      {
        try {
          opts.on_finished(rec);
        } catch (...) {
          if (!finish_error) finish_error = std::current_exception();
        }
      }
    }
    records[i] = std::move(rec);
  }
  // The record files are already on disk; a later resume picks them up.
  if (finish_error) std::rethrow_exception(finish_error);

  SweepResult res;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (reused[i]) ++res.reused;
    else ++res.trained;
    if (!records[i].ok()) ++res.failed;
  }
  res.records = std::move(records);
  return res;
}

}  // namespace pairlearn
