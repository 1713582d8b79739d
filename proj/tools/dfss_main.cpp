// dfss: command-line front end for the distillation pipeline.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfss/config.hpp"
#include "dfss/error.hpp"
#include "dfss/io.hpp"
#include "dfss/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kPrecondition = 2, kIo = 3, kNumeric = 4 };

struct CommonOptions {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "dfss_run";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config JSON (defaults if omitted)");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--out", o.out, "run directory");
}

dfss::RunContext make_context(const CommonOptions& o) {
  dfss::RunContext ctx;
  if (!o.config.empty()) ctx.config = dfss::load_config(o.config);
  ctx.seed = o.seed;
  ctx.paths.dir = o.out;
  return ctx;
}

void log(const std::string& line) { std::cerr << "dfss: " << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-free distillation for segmentation on synthetic corpora"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string strategy = "ads";
  std::string mode = "vanilla";
  std::optional<std::size_t> epsilon;
  std::vector<std::string> run_dirs;
  bool dump_config = false;

  auto* gen = app.add_subcommand("gen-corpus", "generate original and open-world corpora");
  add_common(gen, common);
  gen->add_flag("--print-config", dump_config, "print the effective config and exit");

  auto* teacher = app.add_subcommand("train-teacher", "train the teacher on original data");
  add_common(teacher, common);

  auto* sample = app.add_subcommand("sample", "select a subset of the open-world corpus");
  add_common(sample, common);
  sample->add_option("--strategy", strategy, "ads | random | confidence")
      ->check(CLI::IsMember({"ads", "random", "confidence"}));
  sample->add_option("--epsilon", epsilon, "number of samples to select");

  auto* distill = app.add_subcommand("distill", "distill a student from a selection");
  add_common(distill, common);
  distill->add_option("--strategy", strategy, "selection to distill from")
      ->check(CLI::IsMember({"ads", "random", "confidence"}));
  distill->add_option("--distill", mode, "vanilla | wdd | wdpd")
      ->check(CLI::IsMember({"vanilla", "wdd", "wdpd"}));

  auto* kd = app.add_subcommand("kd-reference", "train the data-driven KD reference student");
  add_common(kd, common);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate all checkpoints, write report");
  add_common(evaluate, common);

  auto* report = app.add_subcommand("report", "aggregate run reports (median/min/max)");
  report->add_option("runs", run_dirs, "run directories")->required();
  report->add_option("--out", common.out, "directory for summary.json / summary.txt");

  auto* run_all = app.add_subcommand("run-all", "run every stage end to end");
  add_common(run_all, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kPrecondition;
  }

  try {
    if (*gen) {
      const dfss::RunContext ctx = make_context(common);
      if (dump_config) {
        std::cout << dfss::config_to_json(ctx.config);
        return kOk;
      }
      dfss::stage_gen_corpus(ctx);
      log("corpora written to " + ctx.paths.dir.string());
    } else if (*teacher) {
      const dfss::RunContext ctx = make_context(common);
      dfss::stage_train_teacher(ctx);
      log("teacher written to " + ctx.paths.teacher_ckpt().string());
    } else if (*sample) {
      const dfss::RunContext ctx = make_context(common);
      const auto s = dfss::parse_strategy(strategy);
      const dfss::SelectionResult sel = dfss::stage_sample(ctx, s, epsilon);
      log(std::to_string(sel.ids.size()) + " samples selected, written to " +
          ctx.paths.selection(s).string());
    } else if (*distill) {
      const dfss::RunContext ctx = make_context(common);
      const auto s = dfss::parse_strategy(strategy);
      const auto m = dfss::parse_distill_strategy(mode);
      dfss::stage_distill(ctx, s, m);
      log("student written to " + ctx.paths.student_ckpt(s, m).string());
    } else if (*kd) {
      const dfss::RunContext ctx = make_context(common);
      dfss::stage_kd_reference(ctx);
      log("student written to " + ctx.paths.kd_reference_ckpt().string());
    } else if (*evaluate) {
      const dfss::RunContext ctx = make_context(common);
      std::cout << dfss::report_to_text(dfss::stage_evaluate(ctx));
    } else if (*report) {
      std::vector<dfss::ExperimentReport> reports;
      for (const std::string& dir : run_dirs) {
        const dfss::RunPaths paths{dir};
        if (!std::filesystem::exists(paths.report_json())) {
          throw dfss::IoError("missing " + paths.report_json().string() +
                              "; run `dfss evaluate` or `dfss run-all` first");
        }
        reports.push_back(dfss::parse_report(dfss::read_text_file(paths.report_json())));
      }
      const dfss::ReportSummary summary = dfss::summarize_reports(reports);
      const std::filesystem::path out = common.out;
      dfss::write_text_file(out / "summary.json", dfss::summary_to_json(summary));
      dfss::write_text_file(out / "summary.txt", dfss::summary_to_text(summary));
      std::cout << dfss::summary_to_text(summary);
    } else if (*run_all) {
      const dfss::RunContext ctx = make_context(common);
      std::cout << dfss::report_to_text(dfss::run_all(ctx));
    }
  } catch (const dfss::PreconditionError& e) {
    std::cerr << "dfss: error: " << e.what() << "\n";
    return kPrecondition;
  } catch (const dfss::IoError& e) {
    std::cerr << "dfss: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const dfss::FormatError& e) {
    std::cerr << "dfss: format error: " << e.what() << "\n";
    return kIo;
  } catch (const dfss::NumericError& e) {
    std::cerr << "dfss: numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "dfss: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
