#include "pairlearn/pipeline.hpp"

#include <algorithm>

#include "pairlearn/io.hpp"

namespace pairlearn {

using nlohmann::json;

OutputLayout OutputLayout::for_config(const ExperimentConfig& cfg) {
  return {std::filesystem::path(cfg.output_root) / config_hash(cfg)};
}

void OutputLayout::create() const {
  for (const auto& d : {stimuli(), schedules(), runs(), analysis()}) std::filesystem::create_directories(d);
}

SweepContext make_sweep_context(const ExperimentConfig& cfg) {
  SweepContext ctx;
  ctx.space = cfg.space;
  ctx.categories = cfg.resolved_categories();
  ctx.half_width = cfg.half_width;
  ctx.half_height = cfg.half_height;
  ctx.encoder = cfg.encoder();
  ctx.train = cfg.train;
  ctx.config_hash = config_hash(cfg);
  ctx.tool_version = tool_version();
  return ctx;
}

json object_json(const AttributeSpace& space, const ObjectSpec& o) {
  json j;
  for (Attribute a : kAllAttributes) j[std::string(to_string(a))] = value_name(space, a, attribute_value(o, a));
  return j;
}

json manifest_entry(const AttributeSpace& space, const std::string& pair_id, const PairSpec& p,
                    const std::string& image_path) {
  json j;
  j["pair_id"] = pair_id;
  j["category"] = p.rule.name;
  j["feature"] = to_string(p.rule.feature);
  j["alignment"] = to_string(p.alignment);
  j["pair_kind"] = to_string(p.pair_kind);
  j["left"] = object_json(space, p.left);
  j["right"] = object_json(space, p.right);
  j["left_is_member"] = p.left_is_member;
  j["right_is_member"] = p.right_is_member;
  j["image_path"] = image_path;
  j["render_config_version"] = kRenderConfigVersion;
  return j;
}

json test_manifest_entry(const AttributeSpace& space, const std::string& pair_id, const CategoryRule& rule,
                         Alignment alignment, const TestPair& p, const std::string& image_path) {
  json j;
  j["pair_id"] = pair_id;
  j["category"] = rule.name;
  j["feature"] = to_string(rule.feature);
  j["alignment"] = to_string(alignment);
  j["pair_kind"] = "test";
  j["left"] = object_json(space, p.left);
  j["right"] = object_json(space, p.right);
  j["left_is_member"] = p.left_is_member;
  j["right_is_member"] = p.right_is_member;
  j["image_path"] = image_path;
  j["render_config_version"] = kRenderConfigVersion;
  return j;
}

std::string schedule_jsonl(const TrialSchedule& s) {
  std::string out;
  for (std::size_t i = 0; i < s.trials.size(); ++i) {
    const Trial& t = s.trials[i];
    json j;
    j["run_id"] = s.run_id;
    j["trial_index"] = i;
    j["supervised"] = t.supervised;
    j["pair_kind"] = to_string(t.pair_kind);
    j["pair_id"] = t.pair_id;
    j["plan_id"] = s.plan_id;
    out += j.dump() + "\n";
  }
  return out;
}

void write_run_stimuli(const RunInputs& in, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest;
  for (const auto& t : in.schedule.trials) {
    const std::string file = t.pair_id + ".png";
    write_png(in.rendered.at(t.pair_id).paired_image, dir / file);
    manifest += manifest_entry(in.space, t.pair_id, t.pair, file).dump() + "\n";
  }
  for (std::size_t i = 0; i < in.test_pairs.size(); ++i) {
    const std::string id = in.schedule.run_id + "-test" + std::to_string(i);
    write_png(in.test_images[i].paired_image, dir / (id + ".png"));
    manifest += test_manifest_entry(in.space, id, in.schedule.category, in.schedule.alignment,
                                    in.test_pairs[i], id + ".png")
                    .dump() +
                "\n";
  }
  io::write_atomic(dir / "manifest.jsonl", manifest);
}

std::vector<RunRecord> load_records(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  for (const auto& f : files) {
    try {
      out.push_back(record_from_json(json::parse(io::read_file(f))));
    } catch (const std::exception& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::vector<std::string>> parse_contrast_sets(const std::string& spec) {
  std::vector<std::vector<std::string>> out;
  std::string_view rest(spec);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view group = rest.substr(0, comma);
    std::vector<std::string> names;
    while (!group.empty()) {
      const auto colon = group.find(':');
      names.emplace_back(group.substr(0, colon));
      if (colon == std::string_view::npos) break;
      group.remove_prefix(colon + 1);
    }
    if (!names.empty()) out.push_back(std::move(names));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

AnalysisResult analyze_records(const std::vector<RunRecord>& all, const AnalysisOptions& opts) {
  AnalysisResult res;
  std::filesystem::create_directories(opts.out_dir);
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto p = opts.out_dir / name;
    io::write_atomic(p, text);
    res.artifacts.push_back(p);
  };

  std::vector<RunRecord> records = all;
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.cell, a.seed, a.run_id) < std::tie(b.cell, b.seed, b.run_id);
  });
  emit("results.csv", report::results_csv(records, opts.provenance));

  std::vector<ConditionResult> ok;
  std::vector<Cell> present;
  for (const auto& r : records) {
    if (!r.ok()) {
      res.warnings.push_back("excluded " + r.run_id + " (" + r.status + ")");
      continue;
    }
    ok.push_back({r.cell, r.seed, r.correct, r.total, r.accuracy});
    if (std::find(present.begin(), present.end(), r.cell) == present.end()) present.push_back(r.cell);
  }
  if (ok.empty()) throw std::runtime_error("no successful run records to analyze");
  std::sort(present.begin(), present.end());
  res.table = aggregate_table(ok, present);
  for (const Cell& c : all_cells())
    if (!res.table.contains(c)) res.warnings.push_back("no runs for cell " + cell_label(c));

  std::optional<HumanTable> human;
  if (opts.human_csv) {
    human = ingest_human_table(*opts.human_csv);
    for (const auto& w : human->warnings) res.warnings.push_back(w);
  }
  const HumanTable* hp = human ? &*human : nullptr;

  try {
    res.fit = fit_factorial(accuracy_design(ok));
  } catch (const std::exception& e) {
    res.fit_error = e.what();
    res.warnings.push_back("factorial fit unavailable: " + res.fit_error);
  }

  report::CellIntervals ci;
  std::string ci_kind;
  if (opts.bootstrap_resamples > 0) {
    ci = report::bootstrap_intervals(ok, opts.bootstrap_resamples, opts.bootstrap_seed, opts.confidence);
    ci_kind = "bootstrap";
  } else if (res.fit) {
    ci = report::model_intervals(*res.fit, opts.confidence);
    ci_kind = "model-based";
  } else {
    ci = report::per_cell_intervals(res.table, opts.confidence);
    ci_kind = "per-cell t";
  }

  emit("table1.csv", report::table1_csv(res.table, hp, opts.provenance));
  emit("cell_means.csv", report::cell_means_csv(res.table, ci, hp, opts.provenance));

  if (res.fit) {
    emit("coefficients.csv", report::coefficients_csv(*res.fit, opts.provenance));
    for (const auto& by : opts.contrasts) {
      const MarginalMeans mm = marginal_means(*res.fit, by, opts.confidence);
      std::string tag;
      for (const auto& b : by) tag += (tag.empty() ? "" : "_") + b;
      emit("marginal_means_" + tag + ".csv", report::marginal_means_csv(mm, opts.provenance));
      emit("contrasts_" + tag + ".csv", report::contrasts_csv(mm, opts.provenance));
    }
  }

  const std::string pct = report::fmt(opts.confidence * 100);
  emit("accuracy_by_alignment.svg",
       report::accuracy_figure_svg(res.table, ci, report::Facet::by_alignment,
                                   "Accuracy by supervision (" + pct + "% " + ci_kind + " CI)",
                                   opts.provenance));
  emit("accuracy_by_feature.svg",
       report::accuracy_figure_svg(res.table, ci, report::Facet::by_feature,
                                   "Accuracy by supervision and alignment (" + pct + "% " + ci_kind + " CI)",
                                   opts.provenance));

  json summary;
  summary["config_hash"] = opts.provenance.config_hash;
  summary["tool_version"] = opts.provenance.tool_version;
  summary["records"] = records.size();
  summary["ok_records"] = ok.size();
  summary["interval_method"] = ci_kind;
  summary["warnings"] = res.warnings;
  if (res.fit) {
    summary["fit"] = {{"observations", res.fit->observations},
                      {"df_residual", res.fit->df_residual},
                      {"r_squared", res.fit->r_squared},
                      {"sigma2", res.fit->sigma2},
                      {"reference", res.fit->reference_cell}};
  } else {
    summary["fit_error"] = res.fit_error;
  }
  emit("analysis.json", summary.dump(2) + "\n");
  return res;
}

json to_json(const RunAllSummary& s) {
  json j;
  j["output_root"] = s.layout.root.string();
  j["records"] = s.records;
  j["trained"] = s.trained;
  j["reused"] = s.reused;
  j["failed"] = s.failed;
  j["analysis_ok"] = s.analysis_ok;
  if (!s.analysis_error.empty()) j["analysis_error"] = s.analysis_error;
  j["failures"] = s.failures;
  j["status"] = (s.failed == 0 && s.analysis_ok) ? "ok" : "failed";
  return j;
}

RunAllSummary command_run_all(const ExperimentConfig& cfg) {
  cfg.validate();
  RunAllSummary summary;
  summary.layout = OutputLayout::for_config(cfg);
  const OutputLayout& L = summary.layout;
  L.create();
  save_config(cfg, L.root / "config.yaml");

  const SweepContext ctx = make_sweep_context(cfg);
  RunLedger ledger(L.ledger());

  SweepOptions so;
  so.runs_dir = L.runs();
  so.resume = true;
  so.jobs = cfg.jobs;
  so.save_checkpoints = cfg.save_checkpoints;
  so.on_prepared = [&](const RunSpec& spec, const RunInputs& in) {
    write_run_stimuli(in, L.stimuli() / spec.run_id);
    io::write_atomic(L.schedules() / (spec.run_id + ".jsonl"), schedule_jsonl(in.schedule));
  };
  const SweepResult sr = run_sweep(ctx, cfg.grid, cfg.seeds, so);

  for (const auto& r : sr.records) {
    if (r.ok()) ledger.append_if_absent({r.cell, r.seed, r.config_hash}, "runs/" + r.run_id + ".json");
    else summary.failures.push_back(r.run_id + ": " + r.diagnostic);
  }
  summary.records = static_cast<int>(sr.records.size());
  summary.trained = sr.trained;
  summary.reused = sr.reused;
  summary.failed = sr.failed;

  AnalysisOptions ao;
  ao.out_dir = L.analysis();
  ao.confidence = cfg.analysis.confidence;
  ao.bootstrap_resamples = cfg.analysis.bootstrap_resamples;
  ao.bootstrap_seed = cfg.analysis.bootstrap_seed;
  if (!cfg.analysis.human_csv.empty()) ao.human_csv = cfg.analysis.human_csv;
  ao.provenance = {ctx.config_hash, ctx.tool_version};
  try {
    analyze_records(sr.records, ao);
    summary.analysis_ok = true;
  } catch (const std::exception& e) {
    summary.analysis_error = e.what();
  }
  json sj = to_json(summary);
  sj["config_hash"] = ctx.config_hash;
  sj["tool_version"] = ctx.tool_version;
  io::write_atomic(L.root / "summary.json", sj.dump(2) + "\n");
  return summary;
}

}  // namespace pairlearn
