#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "prefpo/app.hpp"
#include "prefpo/error.hpp"

using namespace prefpo;

int main(int argc, char** argv) {
  CLI::App cli{"Preference-based prompt optimizer"};
  cli.require_subcommand(1);
  bool verbose = false;
  cli.add_flag("-v,--verbose", verbose, "Log retries and skipped iterations");

  app::OptimizeOptions opt;
  auto* optimize = cli.add_subcommand("optimize", "Run the optimization loop and select a final prompt");
  optimize->add_option("--config", opt.config, "Run config (JSON)")->required();
  optimize->add_option("--out", opt.out, "Output directory");
  optimize->add_option("--seed", opt.seed, "Override run.seed");
  optimize->add_option("--iterations", opt.iterations, "Override run.iterations");
  optimize->add_option("--k", opt.k, "Override run.runs_per_eval");

  app::EvaluateOptions ev;
  std::string ev_mode;
  auto* evaluate = cli.add_subcommand("evaluate", "Score prompts on a held-out dataset");
  evaluate->add_option("--config", ev.config, "Config with endpoints and models")->required();
  evaluate->add_option("--dataset", ev.dataset, "JSONL dataset")->required();
  evaluate->add_option("--pool", ev.pool, "Pool to evaluate");
  evaluate->add_option("--out", ev.out, "JSONL report (default stdout)");
  evaluate->add_option("--k", ev.k, "Runs per prompt in criteria mode");
  evaluate->add_option("--mode", ev_mode, "labeled_qa or criteria_only")
      ->check(CLI::IsMember({"labeled_qa", "criteria_only"}));
  evaluate->add_option("--seed", ev.seed, "Bootstrap seed");
  evaluate->add_option("--resamples", ev.resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);

  app::HygieneOptions hy;
  auto* hygiene = cli.add_subcommand("hygiene", "Length, repetition and similarity against the seed prompt");
  hygiene->add_option("--pool", hy.pool, "Pool to analyse")->required();
  hygiene->add_option("--seed-prompt", hy.seed_prompt, "Seed prompt text file")->required();
  hygiene->add_flag("--with-judge", hy.with_judge, "Also grade each prompt with the hygiene judge");
  hygiene->add_option("--config", hy.config, "Config with the judge model");
  hygiene->add_option("--criteria", hy.criteria, "Criteria document");
  hygiene->add_option("--out", hy.out, "JSONL report (default stdout)");

  app::HackAuditOptions ha;
  auto* hack = cli.add_subcommand("hack-audit", "Judge prompts for evaluator-targeted instructions");
  hack->add_option("--config", ha.config, "Config with the judge model")->required();
  hack->add_option("--pool", ha.pool, "Pool to audit")->required();
  hack->add_option("--criteria", ha.criteria, "Criteria document, or JSONL dataset paired with the pool")
      ->required();
  hack->add_option("--out", ha.out, "JSONL report (default stdout)");

  app::CurateOptions cu;
  auto* curate = cli.add_subcommand("curate", "Keep records whose own prompt fails at least once in k runs");
  curate->add_option("--config", cu.config, "Config with the task model")->required();
  curate->add_option("--dataset", cu.dataset, "Criteria dataset (JSONL)")->required();
  curate->add_option("--out", cu.out, "Curated dataset (JSONL)")->required();
  curate->add_option("--k", cu.k, "Runs per record");

  app::ConvertOptions co;
  auto* convert = cli.add_subcommand("convert-ifeval", "Convert IFEval records to criteria records");
  convert->add_option("--input", co.input, "IFEval JSONL")->required();
  convert->add_option("--out", co.out, "Criteria dataset (JSONL)")->required();

  CLI11_PARSE(cli, argc, argv);

  auto logger = spdlog::stderr_color_mt("prefpo");
  logger->set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  spdlog::set_default_logger(logger);

  const app::Io io{std::cout, std::cerr};
  if (*optimize) return app::cmd_optimize(opt, io);
  if (*evaluate) {
    if (!ev_mode.empty()) ev.mode = parse_mode(ev_mode);
    return app::cmd_evaluate(ev, io);
  }
  if (*hygiene) return app::cmd_hygiene(hy, io);
  if (*hack) return app::cmd_hack_audit(ha, io);
  if (*curate) return app::cmd_curate(cu, io);
  return app::cmd_convert_ifeval(co, io);
}
