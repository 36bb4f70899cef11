#include "cli.hpp"

#include <CLI11.hpp>

#include <string>
#include <vector>

#include "emf/error.hpp"
#include "emf/experiment.hpp"

namespace emf::cli {

namespace {

struct PathArgs {
  std::string input;
  std::string factors_x;
  std::string factors_y;
  std::string heldout;
  std::string out_dir;
};

// Every option lives on the top-level app so that a single flat config file
// serves all subcommands. Subcommands only pick the mode.
void add_options(CLI::App& app, ExperimentPlan& plan, PathArgs& paths) {
  app.set_config("--config", "", "Read options from a key = value file; flags given on the command line win");

  app.add_option("--omega", plan.omegas, "Asymmetry level in (0,1); repeat for a sweep")->delimiter(',');
  app.add_option("--seed", plan.seeds, "Experiment seed; repeat for several")->delimiter(',');
  app.add_option("--rank", plan.emf.rank, "Factorization rank k");
  app.add_option("--sampling-rate", plan.sampling_rate, "Fraction of entries used for training");
  app.add_option("--max-outer", plan.emf.max_outer, "Outer iteration cap");
  app.add_option("--max-inner", plan.emf.max_inner, "Inner sign-set iteration cap");
  app.add_option("--tol-obj", plan.emf.tol_objective, "Relative objective decrease that stops the fit");
  app.add_option("--tol-grad", plan.emf.tol_gradient, "Gradient norm that stops the fit");
  app.add_option("--ridge", plan.emf.ridge, "Ridge weight on both factors");
  app.add_flag("--use-qr", plan.emf.use_qr, "Orthonormalize factors between half steps");
  app.add_flag("--scale-init", plan.emf.scale_init, "Scale the initial spectrum by mn/p");
  app.add_option("--eval-floor", plan.emf.eval_denominator_floor, "Smallest |truth| allowed in relative errors");

  app.add_option("--rows", plan.rows, "Synthetic matrix rows");
  app.add_option("--cols", plan.cols, "Synthetic matrix columns");
  app.add_option("--true-rank", plan.true_rank, "Rank of the synthetic ground truth");
  app.add_option("--noise-scale", plan.noise_scale, "Multiplier on the chi-square noise");
  app.add_option("--dof", plan.dof, "Chi-square degrees of freedom");

  app.add_option("--input", paths.input, "Input matrix (complete, evaluate) or value file (expectile)");
  app.add_option("--sentinel", plan.sentinel, "Value marking a missing entry");
  app.add_option("--factors-x", paths.factors_x, "Row factor file for evaluate");
  app.add_option("--factors-y", paths.factors_y, "Column factor file for evaluate");
  app.add_option("--heldout", paths.heldout, "Triplet file of entries to score in evaluate");
  app.add_flag("--save-factors", plan.save_factors, "Write fitted factors next to the results");

  app.add_option("--out-dir", paths.out_dir, "Output directory");
  app.add_option("--bins", plan.bins, "Comma-separated bin boundaries on the truth value")->delimiter(',');
  app.add_option("--cdf-max", plan.cdf_max, "Right end of the CDF grid");
  app.add_option("--cdf-points", plan.cdf_points, "Number of CDF grid points");
  app.add_option("--workers", plan.workers, "Concurrent experiment cells");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  ExperimentPlan plan;
  PathArgs paths{"", "", "", "", plan.out_dir.string()};

  CLI::App app{"Expectile matrix factorization toolkit"};
  app.set_version_flag("--version", std::string(toolkit_version()));
  app.require_subcommand(1);
  app.fallthrough();
  add_options(app, plan, paths);

  auto* synth = app.add_subcommand("synth-exp", "Synthetic completion experiment over an omega sweep");
  auto* complete = app.add_subcommand("complete", "Complete a dense matrix file and score held-back entries");
  auto* evaluate = app.add_subcommand("evaluate", "Score saved factors against a truth matrix");
  auto* expectile = app.add_subcommand("expectile", "Mean, median and expectiles of a value file");
  for (auto* sub : {synth, complete, evaluate, expectile}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error,usage," << e.what() << "\n";
    return 2;
  }

  plan.input = paths.input;
  plan.factors_x = paths.factors_x;
  plan.factors_y = paths.factors_y;
  plan.heldout = paths.heldout;
  plan.out_dir = paths.out_dir;

  try {
    if (synth->parsed()) {
      plan.mode = Mode::SynthExperiment;
      return run_synth_experiment(plan, err);
    }
    if (complete->parsed()) {
      plan.mode = Mode::Complete;
      return run_complete(plan, err);
    }
    if (evaluate->parsed()) {
      plan.mode = Mode::Evaluate;
      return run_evaluate(plan, err);
    }
    plan.mode = Mode::Expectile1D;
    return run_expectile1d(plan, out);
  } catch (const Error& e) {
    err << "error," << to_string(e.code()) << "," << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error,internal," << e.what() << "\n";
  }
  return 1;
}

}  // namespace emf::cli
