#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emf/types.hpp"

namespace emf {

enum class Mode { SynthExperiment, Complete, Evaluate, Expectile1D };

std::string_view to_string(Mode mode);

/// Everything one harness invocation needs. The CLI fills it from flags and
/// an optional config file; tests build it directly.
struct ExperimentPlan {
  Mode mode = Mode::SynthExperiment;
  /// Solver settings; `emf.omega` is ignored in favour of `omegas`.
  EmfConfig emf{};
  std::vector<double> omegas{0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<std::uint64_t> seeds;  // defaults: {0} for synth-exp, {0..4} for complete

  // synth-exp
  Index rows = 1000;
  Index cols = 1000;
  Index true_rank = 10;
  double noise_scale = 0.5;
  Index dof = 3;
  double sampling_rate = 0.1;

  // complete / evaluate / expectile
  std::filesystem::path input;
  double sentinel = -1.0;
  std::filesystem::path factors_x;
  std::filesystem::path factors_y;
  std::filesystem::path heldout;
  bool save_factors = false;

  std::filesystem::path out_dir = "emf_out";
  /// Relative-error bins by truth value; empty means a single "all" bucket.
  std::vector<double> bins;
  double cdf_max = 2.0;
  Index cdf_points = 201;
  Index workers = 1;

  /// Throws InvalidArgument on the first missing or out-of-range field.
  void validate() const;
  /// Seeds after applying the per-mode default.
  std::vector<std::uint64_t> effective_seeds() const;
  /// Key = value lines describing the plan, in the config-file syntax.
  std::string echo() const;
};

/// Toolkit version string baked in at build time.
std::string_view toolkit_version();

/// Each run writes provenance.txt, results.csv, results.json,
/// failures.csv, and one cdf_<run_id>.csv per fitted cell into
/// `plan.out_dir`. The return value is the process exit status: zero iff
/// every cell succeeded. Progress lines go to `log`.
int run_synth_experiment(const ExperimentPlan& plan, std::ostream& log);

/// Fits the observed entries of `plan.input` after holding out a seeded
/// split: floor(R * m * n) observed entries train, the rest are evaluated.
/// Adds pooled rows per omega and median_iqr.csv (omega, bin, median, iqr).
int run_complete(const ExperimentPlan& plan, std::ostream& log);

/// Scores saved factors (plan.factors_x, plan.factors_y) against the truth in
/// plan.input on plan.heldout, or on every non-missing entry when no held-out
/// list is given.
int run_evaluate(const ExperimentPlan& plan, std::ostream& log);

/// Prints "statistic,omega,value" rows: count, mean, median, then one
/// expectile row per omega.
int run_expectile1d(const ExperimentPlan& plan, std::ostream& out);

}  // namespace emf
