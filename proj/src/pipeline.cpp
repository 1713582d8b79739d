#include "dfss/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dfss/checkpoint.hpp"
#include "dfss/error.hpp"
#include "dfss/hash.hpp"
#include "dfss/io.hpp"

namespace dfss {
namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw IoError("missing " + path.string() + "; run `dfss " + producer + "` first");
  }
}

// Stages after gen-corpus must see the same config and seed that produced
// the run directory.
void require_run(const RunContext& ctx) {
  require_artifact(ctx.paths.run_json(), "gen-corpus");
  ojson run;
  try {
    run = ojson::parse(read_text_file(ctx.paths.run_json()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(ctx.paths.run_json().string() + ": " + e.what());
  }
  const std::string want = config_hash(ctx.config);
  const std::string have = run.value("config_hash", std::string());
  if (have != want) {
    throw PreconditionError("config hash mismatch: run directory was created with " + have +
                            ", current config is " + want);
  }
  if (run.value("seed", std::uint64_t{0}) != ctx.seed) {
    throw PreconditionError("seed mismatch: run directory was created with seed " +
                            std::to_string(run.value("seed", std::uint64_t{0})) +
                            ", current seed is " + std::to_string(ctx.seed));
  }
}

Network load_teacher(const RunContext& ctx) {
  require_artifact(ctx.paths.teacher_ckpt(), "train-teacher");
  return load_checkpoint(ctx.paths.teacher_ckpt(), ctx.config.teacher_spec());
}

Corpus load_corpus(const fs::path& manifest) {
  require_artifact(manifest, "gen-corpus");
  return read_corpus(manifest);
}

double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("non-finite value in report");
  return v;
}

ojson entropy_json(const EntropyReport& r) {
  ojson j;
  j["count"] = r.entropies.size();
  j["mean"] = r.mean;
  j["median"] = r.median;
  j["variance"] = r.variance;
  return j;
}

EntropyReport entropy_from_json(const ojson& j) {
  EntropyReport r;
  r.mean = j.at("mean").get<double>();
  r.median = j.at("median").get<double>();
  r.variance = j.at("variance").get<double>();
  return r;
}

ojson aggregate_json(const Aggregate& a) {
  ojson j;
  j["median"] = a.median;
  j["min"] = a.min;
  j["max"] = a.max;
  j["count"] = a.count;
  return j;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

fs::path RunPaths::selection(Strategy s) const {
  return dir / ("selection_" + std::string(strategy_name(s)) + ".json");
}
fs::path RunPaths::stats_csv(Strategy s) const {
  return dir / ("stats_" + std::string(strategy_name(s)) + ".csv");
}
fs::path RunPaths::student_ckpt(Strategy s, DistillStrategy m) const {
  return dir / ("student_" + std::string(strategy_name(s)) + "_" + distill_strategy_name(m) +
                ".ckpt");
}
fs::path RunPaths::student_metrics(Strategy s, DistillStrategy m) const {
  return dir / ("metrics_" + std::string(strategy_name(s)) + "_" + distill_strategy_name(m) +
                ".csv");
}

RunSeeds derive_seeds(std::uint64_t s) {
  return RunSeeds{mix_seed(s, 1), mix_seed(s, 2), mix_seed(s, 3), mix_seed(s, 4),
                  mix_seed(s, 5), mix_seed(s, 6), mix_seed(s, 7)};
}

void stage_gen_corpus(const RunContext& ctx) {
  validate_config(ctx.config);
  const RunSeeds seeds = derive_seeds(ctx.seed);
  const ExperimentConfig& c = ctx.config;
  write_corpus(gen_original(c.corpus, seeds.original_train, c.original_train),
               ctx.paths.original_train());
  write_corpus(gen_original(c.corpus, seeds.original_test, c.original_test),
               ctx.paths.original_test());
  write_corpus(gen_openworld(c.corpus, seeds.openworld, c.openworld_size, c.mix),
               ctx.paths.openworld());
  ojson run;
  run["config_hash"] = config_hash(c);
  run["seed"] = ctx.seed;
  run["config"] = ojson::parse(config_to_json(c));
  write_text_file(ctx.paths.run_json(), run.dump(2) + "\n");
}

void stage_train_teacher(const RunContext& ctx) {
  require_run(ctx);
  const Corpus train = load_corpus(ctx.paths.original_train());
  const Corpus test = load_corpus(ctx.paths.original_test());
  TrainConfig tc = ctx.config.teacher;
  tc.seed = derive_seeds(ctx.seed).teacher;
  tc.lambda = 0.0;
  TrainResult result = train_teacher(train, ctx.config.teacher_spec(), tc, &test);
  save_checkpoint(result.net, ctx.paths.teacher_ckpt());
  write_metrics_csv(result.log, ctx.paths.teacher_metrics());
}

SelectionResult stage_sample(const RunContext& ctx, Strategy strategy,
                             std::optional<std::size_t> epsilon) {
  require_run(ctx);
  const Corpus corpus = load_corpus(ctx.paths.openworld());
  const std::size_t eps = epsilon.value_or(ctx.config.epsilon);
  if (eps == 0 || eps > corpus.size()) {
    throw PreconditionError("epsilon " + std::to_string(eps) + " must lie in [1, " +
                            std::to_string(corpus.size()) + "] for this corpus");
  }
  SelectionResult sel;
  std::vector<StatsRow> rows;
  switch (strategy) {
    case Strategy::ads: {
      const Network teacher = load_teacher(ctx);
      const auto distances = score_corpus(corpus, teacher, ctx.config.distance);
      sel = ads_select_from_scores(corpus, distances, eps);
      rows = make_stats_rows(corpus, distances, {}, &sel);
      break;
    }
    case Strategy::confidence: {
      const Network teacher = load_teacher(ctx);
      const auto conf = confidence_scores(corpus, teacher);
      sel = confidence_select_from_scores(corpus, conf, eps);
      rows = make_stats_rows(corpus, {}, conf, &sel);
      break;
    }
    case Strategy::random:
      sel = random_select(corpus, eps, derive_seeds(ctx.seed).random_selection);
      rows = selection_rows(corpus, sel);
      break;
  }
  write_selection(sel, ctx.paths.selection(strategy));
  export_stats_csv(std::move(rows), ctx.paths.stats_csv(strategy));
  return sel;
}

void stage_distill(const RunContext& ctx, Strategy strategy, DistillStrategy mode) {
  require_run(ctx);
  const Network teacher = load_teacher(ctx);
  const Corpus corpus = load_corpus(ctx.paths.openworld());
  const Corpus test = load_corpus(ctx.paths.original_test());
  require_artifact(ctx.paths.selection(strategy),
                   std::string("sample --strategy ") + strategy_name(strategy));
  const SelectionResult sel = read_selection(ctx.paths.selection(strategy));
  TrainConfig sc = ctx.config.student;
  sc.seed = derive_seeds(ctx.seed).student;
  sc.strategy = mode;
  const std::vector<double> weights = sel.weights();
  TrainResult result =
      distill(teacher, ctx.config.student_spec(), corpus, sel, weights, sc, &test);
  save_checkpoint(result.net, ctx.paths.student_ckpt(strategy, mode));
  write_metrics_csv(result.log, ctx.paths.student_metrics(strategy, mode));
}

void stage_kd_reference(const RunContext& ctx) {
  require_run(ctx);
  const Network teacher = load_teacher(ctx);
  const Corpus train = load_corpus(ctx.paths.original_train());
  const Corpus test = load_corpus(ctx.paths.original_test());
  TrainConfig sc = ctx.config.student;
  sc.seed = derive_seeds(ctx.seed).kd_reference;
  TrainResult result =
      kd_with_original_data(teacher, ctx.config.student_spec(), train, sc, &test);
  save_checkpoint(result.net, ctx.paths.kd_reference_ckpt());
  write_metrics_csv(result.log, ctx.paths.kd_reference_metrics());
}

const StudentResult* ExperimentReport::find(const std::string& strategy,
                                            const std::string& distill) const {
  for (const StudentResult& s : students) {
    if (s.strategy == strategy && s.distill == distill) return &s;
  }
  return nullptr;
}

ExperimentReport stage_evaluate(const RunContext& ctx) {
  require_run(ctx);
  const ExperimentConfig& c = ctx.config;
  const Corpus train = load_corpus(ctx.paths.original_train());
  const Corpus test = load_corpus(ctx.paths.original_test());
  const Corpus openworld = load_corpus(ctx.paths.openworld());
  const Network teacher = load_teacher(ctx);

  ExperimentReport r;
  r.seed = ctx.seed;
  r.config_hash = config_hash(c);
  r.run_id = "seed" + std::to_string(ctx.seed) + "-" + r.config_hash.substr(0, 12);
  const MiouReport teacher_report = evaluate_network(teacher, test);
  r.teacher_miou = checked(teacher_report.mean_iou);
  r.teacher_class_iou = teacher_report.iou;

  const NetworkSpec student_spec = c.student_spec();
  auto add_student = [&](const fs::path& ckpt, std::string strategy, std::string distill) {
    if (!fs::exists(ckpt)) return;
    const MiouReport rep = evaluate_network(load_checkpoint(ckpt, student_spec), test);
    r.students.push_back({std::move(strategy), std::move(distill), checked(rep.mean_iou),
                          checked(performance_gap(teacher_report, rep))});
  };
  for (Strategy s : c.strategies) {
    for (DistillStrategy m : c.distill_modes) {
      add_student(ctx.paths.student_ckpt(s, m), strategy_name(s), distill_strategy_name(m));
    }
  }
  add_student(ctx.paths.kd_reference_ckpt(), "kd_reference", "supervised_kd");

  if (fs::exists(ctx.paths.stats_csv(Strategy::ads))) {
    std::array<double, 3> sum{};
    std::array<std::size_t, 3> count{};
    for (const StatsRow& row : read_stats_csv(ctx.paths.stats_csv(Strategy::ads))) {
      if (!row.d) continue;
      const auto k = static_cast<std::size_t>(row.stratum);
      sum[k] += *row.d;
      ++count[k];
    }
    std::array<double, 3> mean{};
    for (std::size_t k = 0; k < 3; ++k) {
      mean[k] = count[k] ? sum[k] / double(count[k]) : std::numeric_limits<double>::quiet_NaN();
    }
    r.mean_d = mean;
  }

  std::map<std::uint32_t, Stratum> stratum_of;
  for (const ImageRecord& rec : openworld.records) stratum_of[rec.id] = rec.stratum;
  for (Strategy s : c.strategies) {
    if (!fs::exists(ctx.paths.selection(s))) continue;
    const SelectionResult sel = read_selection(ctx.paths.selection(s));
    SelectionDiagnostics diag;
    diag.strategy = strategy_name(s);
    diag.epsilon = sel.ids.size();
    for (std::uint32_t id : sel.ids) {
      const auto it = stratum_of.find(id);
      if (it == stratum_of.end()) {
        throw FormatError("selection " + ctx.paths.selection(s).string() +
                          " refers to unknown id " + std::to_string(id));
      }
      ++diag.stratum_counts[static_cast<std::size_t>(it->second)];
    }
    diag.ood_fraction = double(diag.stratum_counts[2]) / double(sel.ids.size());
    r.selections.push_back(diag);
  }

  r.principles = check_selection_principles(train, openworld);
  r.original_richness = corpus_richness(train);
  r.openworld_richness = corpus_richness(openworld);

  write_text_file(ctx.paths.report_json(), report_to_json(r));
  write_text_file(ctx.paths.report_txt(), report_to_text(r));
  return r;
}

ExperimentReport run_all(const RunContext& ctx) {
  using clock = std::chrono::steady_clock;
  ojson timing = ojson::object();
  auto timed = [&](const std::string& name, auto&& fn) {
    const auto start = clock::now();
    fn();
    timing[name] = std::chrono::duration<double>(clock::now() - start).count();
  };
  timed("gen-corpus", [&] { stage_gen_corpus(ctx); });
  timed("train-teacher", [&] { stage_train_teacher(ctx); });
  for (Strategy s : ctx.config.strategies) {
    timed(std::string("sample/") + strategy_name(s), [&] { stage_sample(ctx, s); });
  }
  for (Strategy s : ctx.config.strategies) {
    for (DistillStrategy m : ctx.config.distill_modes) {
      timed(std::string("distill/") + strategy_name(s) + "/" + distill_strategy_name(m),
            [&] { stage_distill(ctx, s, m); });
    }
  }
  if (ctx.config.kd_reference) timed("kd-reference", [&] { stage_kd_reference(ctx); });
  ExperimentReport report;
  timed("evaluate", [&] { report = stage_evaluate(ctx); });
  write_text_file(ctx.paths.timing_json(), timing.dump(2) + "\n");
  return report;
}

std::string report_to_json(const ExperimentReport& r) {
  ojson j;
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  ojson teacher;
  teacher["miou"] = r.teacher_miou;
  teacher["class_iou"] = r.teacher_class_iou;
  j["teacher"] = teacher;
  ojson students = ojson::array();
  for (const StudentResult& s : r.students) {
    ojson e;
    e["strategy"] = s.strategy;
    e["distill"] = s.distill;
    e["miou"] = s.miou;
    e["gap"] = s.gap;
    students.push_back(e);
  }
  j["students"] = students;
  ojson sampling;
  if (r.mean_d) {
    ojson md;
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = (*r.mean_d)[k];
      md[stratum_name(static_cast<Stratum>(k))] = std::isfinite(v) ? ojson(v) : ojson(nullptr);
    }
    sampling["mean_d"] = md;
  } else {
    sampling["mean_d"] = nullptr;
  }
  ojson sels = ojson::array();
  for (const SelectionDiagnostics& d : r.selections) {
    ojson e;
    e["strategy"] = d.strategy;
    e["epsilon"] = d.epsilon;
    ojson counts;
    for (std::size_t k = 0; k < 3; ++k) {
      counts[stratum_name(static_cast<Stratum>(k))] = d.stratum_counts[k];
    }
    e["stratum_counts"] = counts;
    e["ood_fraction"] = d.ood_fraction;
    sels.push_back(e);
  }
  sampling["selections"] = sels;
  j["sampling"] = sampling;
  ojson p;
  p["cardinality_ok"] = r.principles.cardinality_ok;
  p["richness_ok"] = r.principles.richness_ok;
  p["original_count"] = r.principles.original_count;
  p["collected_count"] = r.principles.collected_count;
  p["original_mean_entropy"] = r.principles.original_mean_entropy;
  p["collected_mean_entropy"] = r.principles.collected_mean_entropy;
  p["task_relevance"] = r.principles.task_relevance;
  j["selection_principles"] = p;
  ojson richness;
  richness["original"] = entropy_json(r.original_richness);
  richness["openworld"] = entropy_json(r.openworld_richness);
  j["richness"] = richness;
  return j.dump(2) + "\n";
}

ExperimentReport parse_report(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    ExperimentReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.teacher_miou = j.at("teacher").at("miou").get<double>();
    r.teacher_class_iou = j.at("teacher").at("class_iou").get<std::vector<double>>();
    for (const auto& e : j.at("students")) {
      r.students.push_back({e.at("strategy").get<std::string>(),
                            e.at("distill").get<std::string>(), e.at("miou").get<double>(),
                            e.at("gap").get<double>()});
    }
    const ojson& sampling = j.at("sampling");
    if (!sampling.at("mean_d").is_null()) {
      std::array<double, 3> md{};
      for (std::size_t k = 0; k < 3; ++k) {
        const ojson& v = sampling.at("mean_d").at(stratum_name(static_cast<Stratum>(k)));
        md[k] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
      }
      r.mean_d = md;
    }
    for (const auto& e : sampling.at("selections")) {
      SelectionDiagnostics d;
      d.strategy = e.at("strategy").get<std::string>();
      d.epsilon = e.at("epsilon").get<std::size_t>();
      for (std::size_t k = 0; k < 3; ++k) {
        d.stratum_counts[k] =
            e.at("stratum_counts").at(stratum_name(static_cast<Stratum>(k))).get<std::size_t>();
      }
      d.ood_fraction = e.at("ood_fraction").get<double>();
      r.selections.push_back(d);
    }
    const ojson& p = j.at("selection_principles");
    r.principles.cardinality_ok = p.at("cardinality_ok").get<bool>();
    r.principles.richness_ok = p.at("richness_ok").get<bool>();
    r.principles.original_count = p.at("original_count").get<std::size_t>();
    r.principles.collected_count = p.at("collected_count").get<std::size_t>();
    r.principles.original_mean_entropy = p.at("original_mean_entropy").get<double>();
    r.principles.collected_mean_entropy = p.at("collected_mean_entropy").get<double>();
    r.principles.task_relevance = p.at("task_relevance").get<std::string>();
    r.original_richness = entropy_from_json(j.at("richness").at("original"));
    r.openworld_richness = entropy_from_json(j.at("richness").at("openworld"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

std::string report_to_text(const ExperimentReport& r) {
  std::string out;
  out += "run " + r.run_id + "\n";
  out += "config " + r.config_hash + "\n";
  out += "teacher mIoU " + fixed(r.teacher_miou) + "\n\n";
  out += pad("strategy", 14) + pad("distill", 15) + pad("mIoU", 9) + "gap\n";
  for (const StudentResult& s : r.students) {
    out += pad(s.strategy, 14) + pad(s.distill, 15) + pad(fixed(s.miou), 9) + fixed(s.gap) +
           "\n";
  }
  if (r.mean_d) {
    out += "\nmean d";
    for (std::size_t k = 0; k < 3; ++k) {
      out += std::string(" ") + stratum_name(static_cast<Stratum>(k)) + "=" +
             fixed((*r.mean_d)[k]);
    }
    out += "\n";
  }
  for (const SelectionDiagnostics& d : r.selections) {
    out += pad(d.strategy, 12) + "eps=" + std::to_string(d.epsilon) +
           " in_dist=" + std::to_string(d.stratum_counts[0]) +
           " shifted=" + std::to_string(d.stratum_counts[1]) +
           " ood=" + std::to_string(d.stratum_counts[2]) +
           " ood_fraction=" + fixed(d.ood_fraction) + "\n";
  }
  out += "\nentropy mean original=" + fixed(r.original_richness.mean) +
         " openworld=" + fixed(r.openworld_richness.mean) + "\n";
  out += std::string("cardinality_ok=") + (r.principles.cardinality_ok ? "true" : "false") +
         " richness_ok=" + (r.principles.richness_ok ? "true" : "false") +
         " task_relevance=" + r.principles.task_relevance + "\n";
  return out;
}

Aggregate aggregate(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("aggregate: no values");
  std::sort(values.begin(), values.end());
  return Aggregate{values[(values.size() - 1) / 2], values.front(), values.back(),
                   values.size()};
}

ReportSummary summarize_reports(const std::vector<ExperimentReport>& reports) {
  if (reports.empty()) throw PreconditionError("report: no runs to summarize");
  ReportSummary s;
  std::vector<double> teacher;
  std::map<std::string, std::vector<double>> miou, gap;
  for (const ExperimentReport& r : reports) {
    if (r.config_hash != reports.front().config_hash) {
      throw PreconditionError("report: runs use different configs (" + r.config_hash +
                              " vs " + reports.front().config_hash + ")");
    }
    s.seeds.push_back(r.seed);
    teacher.push_back(r.teacher_miou);
    for (const StudentResult& st : r.students) {
      miou[st.strategy + "/" + st.distill].push_back(st.miou);
      gap[st.strategy + "/" + st.distill].push_back(st.gap);
    }
  }
  s.teacher_miou = aggregate(teacher);
  for (auto& [k, v] : miou) s.student_miou[k] = aggregate(v);
  for (auto& [k, v] : gap) s.gap[k] = aggregate(v);
  return s;
}

std::string summary_to_json(const ReportSummary& s) {
  ojson j;
  j["seeds"] = s.seeds;
  j["teacher_miou"] = aggregate_json(s.teacher_miou);
  ojson students = ojson::object();
  for (const auto& [k, a] : s.student_miou) {
    ojson e;
    e["miou"] = aggregate_json(a);
    e["gap"] = aggregate_json(s.gap.at(k));
    students[k] = e;
  }
  j["students"] = students;
  return j.dump(2) + "\n";
}

std::string summary_to_text(const ReportSummary& s) {
  std::string out = "runs " + std::to_string(s.seeds.size()) + " (seeds";
  for (std::uint64_t seed : s.seeds) out += " " + std::to_string(seed);
  out += ")\n";
  out += "teacher mIoU median " + fixed(s.teacher_miou.median) + " min " +
         fixed(s.teacher_miou.min) + " max " + fixed(s.teacher_miou.max) + "\n\n";
  out += pad("student", 28) + pad("median", 9) + pad("min", 9) + pad("max", 9) + "gap median\n";
  for (const auto& [k, a] : s.student_miou) {
    out += pad(k, 28) + pad(fixed(a.median), 9) + pad(fixed(a.min), 9) + pad(fixed(a.max), 9) +
           fixed(s.gap.at(k).median) + "\n";
  }
  return out;
}

}  // namespace dfss
