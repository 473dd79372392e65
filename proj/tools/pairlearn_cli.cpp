#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "pairlearn/io.hpp"
#include "pairlearn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pairlearn;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string log_level = "info";
};

struct TrainFlags {
  std::string profile;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::string seeds;
  std::string weights;
  std::optional<double> margin;
};

ExperimentConfig resolve_config(const Globals& g, const std::string& profile_flag) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    cfg = load_config(g.config);
    if (!profile_flag.empty() && parse_profile(profile_flag) != cfg.profile)
      throw ConfigError("--profile " + profile_flag + " conflicts with the config file's profile");
  } else {
    cfg = default_config(profile_flag.empty() ? Profile::desk : parse_profile(profile_flag));
  }
  apply_env_overrides(cfg);
  if (!g.out.empty()) cfg.output_root = g.out;
  if (g.jobs) cfg.jobs = *g.jobs;
  return cfg;
}

void apply_train_flags(ExperimentConfig& cfg, const TrainFlags& f) {
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.lr) cfg.train.base_lr = *f.lr;
  if (!f.seeds.empty()) cfg.seeds = parse_seed_list(f.seeds);
  if (!f.weights.empty()) cfg.train.weights = parse_weights(f.weights);
  if (f.margin) cfg.train.margin = *f.margin;
  cfg.validate();
}

void add_train_flags(CLI::App* app, TrainFlags& f, bool with_seeds) {
  app->add_option("--profile", f.profile, "Model/stimulus scale")->check(CLI::IsMember({"full", "desk"}));
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--lr", f.lr, "Base learning rate");
  if (with_seeds) app->add_option("--seeds", f.seeds, "Seeds: N, a-b or a,b,c");
  app->add_option("--weights", f.weights, "Loss weights bce,consistency,contrastive");
  app->add_option("--margin", f.margin, "Contrastive margin for different pairs");
}

const CategoryBinding& pick_category(const ExperimentConfig& cfg, const std::string& name,
                                     const std::string& feature, const std::string& alignment) {
  static std::vector<CategoryBinding> cats;
  cats = cfg.resolved_categories();
  if (!name.empty()) return find_category(cats, name);
  return find_category(cats, parse_feature(feature.empty() ? "size" : feature),
                       parse_alignment(alignment.empty() ? "high" : alignment));
}

ObjectSpec object_from_json(const AttributeSpace& space, const json& j) {
  ObjectSpec o;
  for (Attribute a : kAllAttributes)
    set_attribute(o, a, value_index(space, a, j.at(std::string(to_string(a))).get<std::string>()));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairlearn: category learning from compare/contrast pairs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", tool_version());
  Globals g;
  app.add_option("--config", g.config, "YAML experiment config");
  app.add_option("--out", g.out, "Output root");
  app.add_option("--seed", g.seed, "Seed for single-run commands");
  app.add_option("--jobs", g.jobs, "Parallel runs in a sweep");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // generate
  auto* gen = app.add_subcommand("generate", "Sample and render learning pairs for one category");
  std::string gen_category, gen_alignment, gen_out_dir = "stimuli", gen_kind = "both";
  int gen_width = 0, gen_height = 0, gen_count = 6;
  gen->add_option("--category", gen_category, "Category name (e.g. Modi)")->required();
  gen->add_option("--alignment", gen_alignment, "Override the category's alignment")
      ->check(CLI::IsMember({"high", "low"}));
  gen->add_option("--out-dir", gen_out_dir, "Directory for PNGs and manifest.jsonl");
  gen->add_option("--width", gen_width, "Half width in pixels (paired image is twice as wide)");
  gen->add_option("--height", gen_height, "Half height in pixels");
  gen->add_option("--count", gen_count, "Number of pairs")->check(CLI::PositiveNumber);
  gen->add_option("--kind", gen_kind, "compare, contrast or both (alternating)")
      ->check(CLI::IsMember({"compare", "contrast", "both"}));

  // schedule
  auto* sch = app.add_subcommand("schedule", "Build one counterbalanced six-trial schedule");
  int sch_level = 6;
  std::string sch_plan, sch_category, sch_feature = "size", sch_alignment = "high", sch_out;
  sch->add_option("--level", sch_level, "Supervised trials")->check(CLI::IsMember({1, 3, 6}));
  sch->add_option("--plan", sch_plan, "Plan id (L6-P03) or index; default: round-robin on --seed");
  sch->add_option("--category", sch_category, "Category name");
  sch->add_option("--feature", sch_feature, "Feature when no category is named");
  sch->add_option("--alignment", sch_alignment, "Alignment when no category is named");
  sch->add_option("--out", sch_out, "Schedule JSONL path (default stdout)");

  // train
  auto* trn = app.add_subcommand("train", "Train and test a single run");
  TrainFlags trn_flags;
  add_train_flags(trn, trn_flags, false);
  std::string trn_feature = "size", trn_alignment = "high", trn_out_dir;
  int trn_level = 6;
  bool trn_ckpt = false;
  trn->add_option("--feature", trn_feature)->check(CLI::IsMember({"size", "shape", "pattern"}));
  trn->add_option("--alignment", trn_alignment)->check(CLI::IsMember({"high", "low"}));
  trn->add_option("--level", trn_level)->check(CLI::IsMember({1, 3, 6}));
  trn->add_option("--out-dir", trn_out_dir, "Write the record (and checkpoint) here");
  trn->add_flag("--checkpoint", trn_ckpt, "Save final parameters");

  // sweep
  auto* swp = app.add_subcommand("sweep", "Train every grid cell for every seed");
  TrainFlags swp_flags;
  add_train_flags(swp, swp_flags, true);
  bool swp_resume = true;
  swp->add_flag("--resume,!--no-resume", swp_resume, "Reuse completed run records");

  // analyze
  auto* ana = app.add_subcommand("analyze", "Tables, factorial fit and figures from run records");
  std::string ana_records, ana_human, ana_out_dir, ana_contrasts;
  int ana_bootstrap = -1;
  ana->add_option("--records", ana_records, "Directory of run record JSON files")->required();
  ana->add_option("--human-csv", ana_human, "Human reference table");
  ana->add_option("--out-dir", ana_out_dir, "Analysis output directory")->required();
  ana->add_option("--contrasts", ana_contrasts, "Marginal-mean factor sets, e.g. trait:supervision,alignment");
  ana->add_option("--bootstrap", ana_bootstrap, "Bootstrap resamples for cell CIs (0: model-based)");

  // run-all
  auto* all = app.add_subcommand("run-all", "Stimuli, schedules, sweep and analysis");
  TrainFlags all_flags;
  add_train_flags(all, all_flags, true);

  // validate-stimuli
  auto* val = app.add_subcommand("validate-stimuli", "Check pair invariants");
  std::string val_manifest;
  int val_samples = 10000;
  val->add_option("--manifest", val_manifest, "Validate the pairs listed in a stimulus manifest");
  val->add_option("--samples", val_samples, "Pairs sampled per cell when no manifest is given")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    if (*gen) {
      ExperimentConfig cfg = resolve_config(g, "");
      const int w = gen_width > 0 ? gen_width : cfg.half_width;
      const int h = gen_height > 0 ? gen_height : cfg.half_height;
      const CategoryBinding& cat = pick_category(cfg, gen_category, "", "");
      const Alignment align = gen_alignment.empty() ? cat.alignment : parse_alignment(gen_alignment);
      Rng rng(g.seed.value_or(0));
      fs::create_directories(gen_out_dir);
      std::string manifest;
      for (int i = 0; i < gen_count; ++i) {
        const PairKind kind = gen_kind == "compare"    ? PairKind::compare
                              : gen_kind == "contrast" ? PairKind::contrast
                              : (i % 2 == 0)           ? PairKind::compare
                                                       : PairKind::contrast;
        const PairSpec p = make_pair(cfg.space, cat.rule, align, kind, rng);
        const std::string id = cat.rule.name + "-" + std::to_string(i);
        write_png(render_pair(cfg.space, p, w, h).paired_image, fs::path(gen_out_dir) / (id + ".png"));
        manifest += manifest_entry(cfg.space, id, p, id + ".png").dump() + "\n";
      }
      io::write_atomic(fs::path(gen_out_dir) / "manifest.jsonl", manifest);
      spdlog::info("wrote {} pairs to {}", gen_count, gen_out_dir);
      return 0;
    }

    if (*sch) {
      ExperimentConfig cfg = resolve_config(g, "");
      const CategoryBinding& cat = pick_category(cfg, sch_category, sch_feature, sch_alignment);
      const SupervisionLevel level(sch_level);
      const auto plans = enumerate_plans(level);
      const std::uint64_t seed = g.seed.value_or(0);
      const CounterbalancePlan* plan = &plan_for_seed(plans, seed);
      if (!sch_plan.empty()) {
        plan = nullptr;
        for (const auto& p : plans)
          if (p.plan_id == sch_plan) plan = &p;
        if (!plan) {
          const auto idx = std::stoul(sch_plan);
          if (idx >= plans.size()) throw std::invalid_argument("plan index out of range: " + sch_plan);
          plan = &plans[idx];
        }
      }
      Rng rng(seed);
      const Cell cell{cat.rule.feature, cat.alignment, sch_level};
      const TrialSchedule s =
          build_schedule(cfg.space, cat.rule, cat.alignment, level, *plan, rng, make_run_id(cell, seed));
      const std::string text = schedule_jsonl(s);
      if (sch_out.empty()) std::cout << text;
      else io::write_atomic(sch_out, text);
      return 0;
    }

    if (*trn) {
      ExperimentConfig cfg = resolve_config(g, trn_flags.profile);
      apply_train_flags(cfg, trn_flags);
      const SweepContext ctx = make_sweep_context(cfg);
      const Cell cell{parse_feature(trn_feature), parse_alignment(trn_alignment),
                      SupervisionLevel(trn_level).labeled_count()};
      const std::uint64_t seed = g.seed.value_or(0);
      const RunSpec spec{cell, seed, static_cast<std::size_t>(seed), make_run_id(cell, seed)};
      const RunInputs in = prepare_run(ctx, spec);
      spdlog::info("training {} ({} epochs, {} profile)", spec.run_id, cfg.train.epochs, to_string(cfg.profile));
      RunOutcome out = execute_run(ctx, spec, in);
      if (!trn_out_dir.empty()) {
        fs::create_directories(trn_out_dir);
        if (trn_ckpt) {
          const auto ckpt = fs::path(trn_out_dir) / (spec.run_id + ".ckpt");
          save_checkpoint(out.params, {out.params.config.seed, static_cast<int>(out.record.loss_curve.size())}, ckpt);
          out.record.checkpoint_path = ckpt.filename().string();
        }
        io::write_atomic(fs::path(trn_out_dir) / (spec.run_id + ".json"), to_json(out.record).dump(2) + "\n");
      }
      std::cout << to_json(out.record).dump(2) << "\n";
      return out.record.ok() ? 0 : 1;
    }

    if (*swp) {
      ExperimentConfig cfg = resolve_config(g, swp_flags.profile);
      apply_train_flags(cfg, swp_flags);
      const OutputLayout layout = OutputLayout::for_config(cfg);
      layout.create();
      save_config(cfg, layout.root / "config.yaml");
      SweepOptions so;
      so.runs_dir = layout.runs();
      so.resume = swp_resume;
      so.jobs = cfg.jobs;
      so.save_checkpoints = cfg.save_checkpoints;
      so.on_finished = [](const RunRecord& r) {
        spdlog::info("{} {} accuracy={}", r.run_id, r.status, r.accuracy);
      };
      const SweepResult sr = run_sweep(make_sweep_context(cfg), cfg.grid, cfg.seeds, so);
      RunLedger ledger(layout.ledger());
      for (const auto& r : sr.records)
        if (r.ok()) ledger.append_if_absent({r.cell, r.seed, r.config_hash}, "runs/" + r.run_id + ".json");
      std::cout << json{{"runs_dir", layout.runs().string()}, {"records", sr.records.size()},
                        {"trained", sr.trained}, {"reused", sr.reused}, {"failed", sr.failed}}
                       .dump()
                << "\n";
      return sr.failed == 0 ? 0 : 1;
    }

    if (*ana) {
      ExperimentConfig cfg = resolve_config(g, "");
      const auto records = load_records(ana_records);
      AnalysisOptions ao;
      ao.out_dir = ana_out_dir;
      ao.confidence = cfg.analysis.confidence;
      ao.bootstrap_resamples = ana_bootstrap >= 0 ? ana_bootstrap : cfg.analysis.bootstrap_resamples;
      ao.bootstrap_seed = cfg.analysis.bootstrap_seed;
      if (!ana_human.empty()) ao.human_csv = ana_human;
      else if (!cfg.analysis.human_csv.empty()) ao.human_csv = cfg.analysis.human_csv;
      if (!ana_contrasts.empty()) ao.contrasts = parse_contrast_sets(ana_contrasts);
      std::string hash, version;
      for (const auto& r : records) {
        if (hash.empty()) hash = r.config_hash, version = r.tool_version;
        else if (r.config_hash != hash) spdlog::warn("records come from more than one config");
      }
      ao.provenance = {hash, version};
      const AnalysisResult res = analyze_records(records, ao);
      for (const auto& w : res.warnings) spdlog::warn("{}", w);
      for (const auto& a : res.artifacts) spdlog::info("wrote {}", a.string());
      return 0;
    }

    if (*all) {
      ExperimentConfig cfg = resolve_config(g, all_flags.profile);
      apply_train_flags(cfg, all_flags);
      const RunAllSummary s = command_run_all(cfg);
      const json j = to_json(s);
      std::cout << j.dump(2) << "\n";
      return j["status"] == "ok" ? 0 : 1;
    }

    if (*val) {
      ExperimentConfig cfg = resolve_config(g, "");
      const auto cats = cfg.resolved_categories();
      long checked = 0, bad = 0;
      auto report = [&](const std::string& id, const std::vector<std::string>& errs) {
        ++checked;
        if (errs.empty()) return;
        ++bad;
        for (const auto& e : errs) std::cout << id << ": " << e << "\n";
      };
      if (!val_manifest.empty()) {
        std::istringstream in(io::read_file(val_manifest));
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const json j = json::parse(line);
          if (j.at("pair_kind") == "test") continue;
          PairSpec p;
          p.rule = find_category(cats, j.at("category").get<std::string>()).rule;
          p.alignment = parse_alignment(j.at("alignment").get<std::string>());
          p.pair_kind = parse_pair_kind(j.at("pair_kind").get<std::string>());
          p.left = object_from_json(cfg.space, j.at("left"));
          p.right = object_from_json(cfg.space, j.at("right"));
          p.left_is_member = j.at("left_is_member");
          p.right_is_member = j.at("right_is_member");
          report(j.at("pair_id").get<std::string>(), validate_pair(cfg.space, p));
        }
      } else {
        Rng rng(g.seed.value_or(0));
        for (const auto& cat : cats)
          for (Alignment a : kAllAlignments)
            for (PairKind k : {PairKind::compare, PairKind::contrast})
              for (int i = 0; i < val_samples; ++i)
                report(cat.rule.name + "/" + std::string(to_string(a)) + "/" + std::string(to_string(k)),
                       validate_pair(cfg.space, make_pair(cfg.space, cat.rule, a, k, rng)));
      }
      std::cout << json{{"checked", checked}, {"violations", bad}}.dump() << "\n";
      return bad == 0 ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
