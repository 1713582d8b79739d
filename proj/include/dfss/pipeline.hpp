#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfss/config.hpp"
#include "dfss/metrics.hpp"

namespace dfss {

// File layout of one run directory.
struct RunPaths {
  std::filesystem::path dir;

  std::filesystem::path run_json() const { return dir / "run.json"; }
  std::filesystem::path original_train() const { return dir / "corpus" / "original_train.json"; }
  std::filesystem::path original_test() const { return dir / "corpus" / "original_test.json"; }
  std::filesystem::path openworld() const { return dir / "corpus" / "openworld.json"; }
  std::filesystem::path teacher_ckpt() const { return dir / "teacher.ckpt"; }
  std::filesystem::path teacher_metrics() const { return dir / "teacher_metrics.csv"; }
  std::filesystem::path kd_reference_ckpt() const { return dir / "student_kd_reference.ckpt"; }
  std::filesystem::path kd_reference_metrics() const {
    return dir / "metrics_kd_reference.csv";
  }
  std::filesystem::path selection(Strategy s) const;
  std::filesystem::path stats_csv(Strategy s) const;
  std::filesystem::path student_ckpt(Strategy s, DistillStrategy m) const;
  std::filesystem::path student_metrics(Strategy s, DistillStrategy m) const;
  std::filesystem::path report_json() const { return dir / "report.json"; }
  std::filesystem::path report_txt() const { return dir / "report.txt"; }
  std::filesystem::path timing_json() const { return dir / "timing.json"; }
};

// Seeds of every stochastic stage, all derived from the run seed.
struct RunSeeds {
  std::uint64_t original_train, original_test, openworld, teacher, random_selection, student,
      kd_reference;
};
RunSeeds derive_seeds(std::uint64_t run_seed);

struct RunContext {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  RunPaths paths;
};

// Stages. Each reads its inputs from and writes its outputs to ctx.paths.dir;
// every stage after gen-corpus refuses to run when run.json records a
// different config hash or seed.
void stage_gen_corpus(const RunContext& ctx);
void stage_train_teacher(const RunContext& ctx);
SelectionResult stage_sample(const RunContext& ctx, Strategy strategy,
                             std::optional<std::size_t> epsilon = std::nullopt);
void stage_distill(const RunContext& ctx, Strategy strategy, DistillStrategy mode);
void stage_kd_reference(const RunContext& ctx);

struct StudentResult {
  std::string strategy;  // ads | random | confidence | kd_reference
  std::string distill;   // vanilla | wdd | wdpd | supervised_kd
  double miou = 0;
  double gap = 0;
};

struct SelectionDiagnostics {
  std::string strategy;
  std::size_t epsilon = 0;
  std::array<std::size_t, 3> stratum_counts{};
  double ood_fraction = 0;
};

struct ExperimentReport {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  double teacher_miou = 0;
  std::vector<double> teacher_class_iou;
  std::vector<StudentResult> students;
  // Mean distance per stratum over the whole open-world corpus (needs the
  // ads stats export).
  std::optional<std::array<double, 3>> mean_d;
  std::vector<SelectionDiagnostics> selections;
  SelectionPrinciplesReport principles;
  EntropyReport original_richness;   // entropies omitted from the report
  EntropyReport openworld_richness;

  const StudentResult* find(const std::string& strategy, const std::string& distill) const;
};

// Evaluates every checkpoint present in the run directory and writes
// report.json and report.txt.
ExperimentReport stage_evaluate(const RunContext& ctx);

// All stages in order; wall-clock per stage goes to timing.json.
ExperimentReport run_all(const RunContext& ctx);

std::string report_to_json(const ExperimentReport& report);
std::string report_to_text(const ExperimentReport& report);
ExperimentReport parse_report(const std::string& json_text);

// Median (lower middle for even counts), min and max of each numeric entry
// across runs.
struct Aggregate {
  double median = 0, min = 0, max = 0;
  std::size_t count = 0;
};
Aggregate aggregate(std::vector<double> values);

struct ReportSummary {
  std::vector<std::uint64_t> seeds;
  Aggregate teacher_miou;
  // key: "strategy/distill"
  std::map<std::string, Aggregate> student_miou;
  std::map<std::string, Aggregate> gap;
};
ReportSummary summarize_reports(const std::vector<ExperimentReport>& reports);
std::string summary_to_json(const ReportSummary& summary);
std::string summary_to_text(const ReportSummary& summary);

}  // namespace dfss
