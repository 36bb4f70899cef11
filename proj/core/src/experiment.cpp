#include "emf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "emf/emf.hpp"
#include "emf/io.hpp"
#include "emf/loss.hpp"
#include "emf/metrics.hpp"
#include "emf/random.hpp"
#include "emf/synth.hpp"
#include "emf/version.hpp"

namespace emf {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::SynthExperiment: return "synth-exp";
    case Mode::Complete: return "complete";
    case Mode::Evaluate: return "evaluate";
    case Mode::Expectile1D: return "expectile";
  }
  return "unknown";
}

std::string_view toolkit_version() { return EMF_VERSION; }

namespace {

template <typename T>
std::string list(const std::vector<T>& v) {
  std::string s = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i > 0) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s += format_double(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s + "]";
}

std::string quoted(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

std::string run_id(std::uint64_t seed, double omega) {
  return "seed" + std::to_string(seed) + "_omega" + format_double(omega);
}

// Runs job(i) for i in [0, n) on up to `workers` threads. Each job owns its
// slot in the caller's result vector, so completion order does not matter.
void parallel_for(Index n, Index workers, const std::function<void(Index)>& job) {
  const Index threads = std::max<Index>(1, std::min(workers, n));
  if (threads == 1) {
    for (Index i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (Index t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct Cell {
  std::optional<RunResult> result;
  std::vector<double> errors;  // relative errors, kept for pooling
  std::string failure;
};

BinnedSummary overall(std::span<const double> re) {
  BinnedSummary s{"all", re.size(), std::nullopt};
  if (!re.empty()) s.summary = summarize(re);
  return s;
}

std::vector<BinnedSummary> summaries_for(std::span<const double> re, const DenseMatrix& truth,
                                         std::span<const IndexPair> eval, const std::optional<BinSpec>& bins) {
  std::vector<BinnedSummary> out{overall(re)};
  if (!bins) return out;
  std::vector<std::vector<double>> groups(bins->bin_count() + 1);
  for (Index k = 0; k < eval.size(); ++k) {
    const auto bin = bins->locate(truth(eval[k].first, eval[k].second));
    groups[bin.value_or(bins->bin_count())].push_back(re[k]);
  }
  for (Index b = 0; b < groups.size(); ++b) {
    BinnedSummary s{b < bins->bin_count() ? bins->label(b) : "overflow", groups[b].size(), std::nullopt};
    if (!groups[b].empty()) s.summary = summarize(groups[b]);
    out.push_back(std::move(s));
  }
  return out;
}

CdfTable cdf_for(std::span<const double> re, const ExperimentPlan& plan) {
  CdfTable t;
  t.grid = linear_grid(0.0, plan.cdf_max, plan.cdf_points);
  if (!re.empty()) t.fraction = empirical_cdf(re, t.grid);
  else t.grid.clear();
  return t;
}

std::optional<BinSpec> bins_of(const ExperimentPlan& plan) {
  if (plan.bins.empty()) return std::nullopt;
  return BinSpec(plan.bins);
}

void write_provenance(const ExperimentPlan& plan) {
  const auto path = plan.out_dir / "provenance.txt";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# emf toolkit " << toolkit_version() << "\n" << plan.echo();
}

// Writes the consolidated tables and the failure manifest; returns the exit
// status for the run.
int flush(const ExperimentPlan& plan, const std::vector<RunResult>& runs,
          const std::vector<std::pair<std::string, std::string>>& failures, std::ostream& log) {
  export_results(runs, plan.out_dir / "results.csv", ExportFormat::CSV);
  export_results(runs, plan.out_dir / "results.json", ExportFormat::JSON);
  std::ofstream out(plan.out_dir / "failures.csv", std::ios::binary | std::ios::trunc);
  out << "run_id,error\n";
  for (const auto& [id, what] : failures) {
    std::string clean = what;
    std::replace(clean.begin(), clean.end(), '\n', ' ');
    std::replace(clean.begin(), clean.end(), '"', '\'');
    out << id << ",\"" << clean << "\"\n";
  }
  if (!out) throw Error(ErrorCode::IoError, "cannot write failures.csv");
  for (const auto& [id, what] : failures) log << "error," << id << "," << what << "\n";
  return failures.empty() ? 0 : 1;
}

void prepare_out_dir(const ExperimentPlan& plan) {
  std::error_code ec;
  std::filesystem::create_directories(plan.out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + plan.out_dir.string() + ": " + ec.message());
  write_provenance(plan);
}

EmfConfig config_for(const ExperimentPlan& plan, double omega, std::uint64_t seed) {
  EmfConfig c = plan.emf;
  c.omega = omega;
  c.seed = seed;
  return c;
}

}  // namespace

void ExperimentPlan::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (omegas.empty()) fail("at least one omega is required");
  for (double w : omegas) {
    if (!(w > 0.0 && w < 1.0)) fail("every omega must lie in (0, 1)");
  }
  if (workers < 1) fail("workers must be at least 1");
  if (!bins.empty()) BinSpec check(bins);
  if (mode != Mode::Expectile1D) {
    EmfConfig c = emf;
    c.omega = omegas.front();
    c.validate();
    if (!(cdf_max > 0.0) || cdf_points < 2) fail("CDF grid needs cdf_max > 0 and at least 2 points");
  }
  switch (mode) {
    case Mode::SynthExperiment:
      if (rows == 0 || cols == 0) fail("rows and cols must be positive");
      if (true_rank < 1 || true_rank > std::min(rows, cols)) fail("true rank must lie in [1, min(rows, cols)]");
      if (emf.rank > std::min(rows, cols)) fail("rank must not exceed min(rows, cols)");
      if (!(noise_scale >= 0.0)) fail("noise scale must be >= 0");
      if (dof < 1) fail("dof must be at least 1");
      if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) fail("sampling rate must lie in (0, 1]");
      break;
    case Mode::Complete:
      if (input.empty()) fail("complete needs --input");
      if (!(sampling_rate > 0.0 && sampling_rate < 1.0)) fail("sampling rate must lie in (0, 1)");
      break;
    case Mode::Evaluate:
      if (input.empty() || factors_x.empty() || factors_y.empty()) {
        fail("evaluate needs --input, --factors-x and --factors-y");
      }
      break;
    case Mode::Expectile1D:
      if (input.empty()) fail("expectile needs --input");
      break;
  }
}

std::vector<std::uint64_t> ExperimentPlan::effective_seeds() const {
  if (!seeds.empty()) return seeds;
  if (mode == Mode::Complete) return {0, 1, 2, 3, 4};
  return {0};
}

std::string ExperimentPlan::echo() const {
  std::ostringstream os;
  os << "# mode: " << to_string(mode) << "\n";
  os << "omega = " << list(omegas) << "\n";
  os << "seed = " << list(effective_seeds()) << "\n";
  os << "rank = " << emf.rank << "\n";
  os << "max-outer = " << emf.max_outer << "\n";
  os << "max-inner = " << emf.max_inner << "\n";
  os << "tol-obj = " << format_double(emf.tol_objective) << "\n";
  os << "tol-grad = " << format_double(emf.tol_gradient) << "\n";
  os << "ridge = " << format_double(emf.ridge) << "\n";
  os << "use-qr = " << (emf.use_qr ? "true" : "false") << "\n";
  os << "scale-init = " << (emf.scale_init ? "true" : "false") << "\n";
  os << "eval-floor = " << format_double(emf.eval_denominator_floor) << "\n";
  os << "sampling-rate = " << format_double(sampling_rate) << "\n";
  switch (mode) {
    case Mode::SynthExperiment:
      os << "rows = " << rows << "\ncols = " << cols << "\ntrue-rank = " << true_rank << "\n";
      os << "noise-scale = " << format_double(noise_scale) << "\ndof = " << dof << "\n";
      break;
    case Mode::Complete:
    case Mode::Evaluate:
    case Mode::Expectile1D:
      os << "input = " << quoted(input) << "\nsentinel = " << format_double(sentinel) << "\n";
      if (!factors_x.empty()) os << "factors-x = " << quoted(factors_x) << "\n";
      if (!factors_y.empty()) os << "factors-y = " << quoted(factors_y) << "\n";
      if (!heldout.empty()) os << "heldout = " << quoted(heldout) << "\n";
      break;
  }
  if (!bins.empty()) os << "bins = " << list(bins) << "\n";
  os << "cdf-max = " << format_double(cdf_max) << "\ncdf-points = " << cdf_points << "\n";
  os << "save-factors = " << (save_factors ? "true" : "false") << "\n";
  os << "out-dir = " << quoted(out_dir) << "\n";
  return os.str();
}

int run_synth_experiment(const ExperimentPlan& plan, std::ostream& log) {
  plan.validate();
  if (plan.mode != Mode::SynthExperiment) throw Error(ErrorCode::InvalidArgument, "plan is not a synth-exp plan");
  prepare_out_dir(plan);
  const auto bins = bins_of(plan);
  const auto seeds = plan.effective_seeds();

  std::vector<RunResult> runs;
  std::vector<std::pair<std::string, std::string>> failures;
  std::mutex log_mutex;
  for (const auto seed : seeds) {
    std::optional<SyntheticInstance> inst;
    try {
      inst = make_completion_instance(plan.rows, plan.cols, plan.true_rank, plan.noise_scale, plan.dof,
                                      plan.sampling_rate, seed);
    } catch (const Error& e) {
      for (double w : plan.omegas) failures.emplace_back(run_id(seed, w), e.what());
      continue;
    }
    std::vector<Cell> cells(plan.omegas.size());
    parallel_for(plan.omegas.size(), plan.workers, [&](Index c) {
      const double omega = plan.omegas[c];
      const auto id = run_id(seed, omega);
      try {
        auto report = fit(inst->observed, config_for(plan, omega, seed));
        auto re = relative_errors(inst->truth, report.factors, inst->heldout, plan.emf.eval_denominator_floor);
        RunResult r{id, omega, plan.emf.rank, plan.sampling_rate, seed, std::move(report),
                    summaries_for(re, inst->truth, inst->heldout, bins), cdf_for(re, plan)};
        export_cdf(r.cdf, plan.out_dir / ("cdf_" + id + ".csv"));
        {
          std::lock_guard lock(log_mutex);
          log << id << ": median RE " << format_double(r.summaries.front().summary->median) << ", "
              << r.report->objective_trace.size() - 1 << " outer iterations, "
              << to_string(r.report->stop_reason) << "\n";
        }
        cells[c].result = std::move(r);
      } catch (const Error& e) {
        cells[c].failure = e.what();
      }
    });
    for (Index c = 0; c < cells.size(); ++c) {
      if (cells[c].result) runs.push_back(std::move(*cells[c].result));
      else failures.emplace_back(run_id(seed, plan.omegas[c]), cells[c].failure);
    }
  }
  return flush(plan, runs, failures, log);
}

int run_complete(const ExperimentPlan& plan, std::ostream& log) {
  plan.validate();
  if (plan.mode != Mode::Complete) throw Error(ErrorCode::InvalidArgument, "plan is not a complete plan");
  const DenseFile data = load_dense(plan.input, MatrixFileSpec{MatrixFormat::DenseText, plan.sentinel});
  const auto& observed = data.observed.entry();
  const Index m = observed.rows();
  const Index n = observed.cols();
  const auto train_count = static_cast<Index>(std::floor(plan.sampling_rate * static_cast<double>(m * n)));
  if (train_count == 0) throw Error(ErrorCode::InvalidArgument, "sampling rate selects no entries");
  if (train_count >= observed.size()) {
    std::ostringstream os;
    os << "sampling rate " << format_double(plan.sampling_rate) << " needs " << train_count
       << " training entries plus at least one held-out entry, but only " << observed.size()
       << " of " << m * n << " entries are observed";
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
  if (plan.emf.rank > std::min(m, n)) throw Error(ErrorCode::InvalidArgument, "rank exceeds min(m, n)");
  prepare_out_dir(plan);
  const auto bins = bins_of(plan);
  const auto seeds = plan.effective_seeds();

  std::vector<RunResult> runs;
  std::vector<std::pair<std::string, std::string>> failures;
  std::vector<std::vector<double>> pooled(plan.omegas.size());
  std::vector<std::vector<IndexPair>> pooled_eval(plan.omegas.size());
  std::mutex log_mutex;
  for (const auto seed : seeds) {
    const auto picked = sample_without_replacement(observed.size(), train_count, seed, streams::kSplit);
    std::vector<char> in_train(observed.size(), 0);
    for (Index k : picked) in_train[k] = 1;
    std::vector<Entry> train;
    std::vector<IndexPair> test;
    train.reserve(train_count);
    test.reserve(observed.size() - train_count);
    for (Index k = 0; k < observed.size(); ++k) {
      if (in_train[k]) train.push_back(observed[k]);
      else test.emplace_back(observed[k].row, observed[k].col);
    }
    const ObservationSet train_obs(EntryObs(m, n, std::move(train)));

    std::vector<Cell> cells(plan.omegas.size());
    parallel_for(plan.omegas.size(), plan.workers, [&](Index c) {
      const double omega = plan.omegas[c];
      const auto id = run_id(seed, omega);
      try {
        auto report = fit(train_obs, config_for(plan, omega, seed));
        auto re = relative_errors(data.matrix, report.factors, test, plan.emf.eval_denominator_floor);
        if (plan.save_factors) {
          write_dense(plan.out_dir / ("factors_" + id + "_x.txt"), report.factors.x());
          write_dense(plan.out_dir / ("factors_" + id + "_y.txt"), report.factors.y());
        }
        RunResult r{id, omega, plan.emf.rank, plan.sampling_rate, seed, std::move(report),
                    summaries_for(re, data.matrix, test, bins), cdf_for(re, plan)};
        export_cdf(r.cdf, plan.out_dir / ("cdf_" + id + ".csv"));
        {
          std::lock_guard lock(log_mutex);
          log << id << ": median RE " << format_double(r.summaries.front().summary->median) << "\n";
        }
        cells[c].result = std::move(r);
        cells[c].errors = std::move(re);
      } catch (const Error& e) {
        cells[c].failure = e.what();
      }
    });
    for (Index c = 0; c < cells.size(); ++c) {
      if (!cells[c].result) {
        failures.emplace_back(run_id(seed, plan.omegas[c]), cells[c].failure);
        continue;
      }
      runs.push_back(std::move(*cells[c].result));
      pooled[c].insert(pooled[c].end(), cells[c].errors.begin(), cells[c].errors.end());
      pooled_eval[c].insert(pooled_eval[c].end(), test.begin(), test.end());
    }
  }

  std::ofstream table(plan.out_dir / "median_iqr.csv", std::ios::binary | std::ios::trunc);
  table << "omega,bin,median,iqr\n";
  for (Index c = 0; c < plan.omegas.size(); ++c) {
    if (pooled[c].empty()) continue;
    const double omega = plan.omegas[c];
    RunResult r{"pooled_omega" + format_double(omega), omega, plan.emf.rank, plan.sampling_rate, std::nullopt,
                std::nullopt, summaries_for(pooled[c], data.matrix, pooled_eval[c], bins),
                cdf_for(pooled[c], plan)};
    export_cdf(r.cdf, plan.out_dir / ("cdf_" + r.run_id + ".csv"));
    for (const auto& s : r.summaries) {
      if (!s.summary) continue;
      table << format_double(omega) << ",\"" << s.label << "\"," << format_double(s.summary->median) << ','
            << format_double(s.summary->iqr) << '\n';
    }
    runs.push_back(std::move(r));
  }
  if (!table) throw Error(ErrorCode::IoError, "cannot write median_iqr.csv");
  return flush(plan, runs, failures, log);
}

int run_evaluate(const ExperimentPlan& plan, std::ostream& log) {
  plan.validate();
  if (plan.mode != Mode::Evaluate) throw Error(ErrorCode::InvalidArgument, "plan is not an evaluate plan");
  const DenseFile data = load_dense(plan.input, MatrixFileSpec{MatrixFormat::DenseText, plan.sentinel});
  const FactorPair factors(load_matrix(plan.factors_x), load_matrix(plan.factors_y));
  if (factors.rows() != data.matrix.rows() || factors.cols() != data.matrix.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "factors do not match the truth matrix");
  }
  std::vector<IndexPair> eval;
  if (plan.heldout.empty()) {
    for (const auto& e : data.observed.entry().entries()) eval.emplace_back(e.row, e.col);
  } else {
    const auto held = load_triplets(plan.heldout);
    for (const auto& e : held.entry().entries()) eval.emplace_back(e.row, e.col);
  }
  prepare_out_dir(plan);
  std::vector<RunResult> runs;
  std::vector<std::pair<std::string, std::string>> failures;
  try {
    const auto re = relative_errors(data.matrix, factors, eval, plan.emf.eval_denominator_floor);
    RunResult r{"evaluate", plan.omegas.front(), factors.rank(), plan.sampling_rate, std::nullopt, std::nullopt,
                summaries_for(re, data.matrix, eval, bins_of(plan)), cdf_for(re, plan)};
    export_cdf(r.cdf, plan.out_dir / "cdf_evaluate.csv");
    log << "evaluate: median RE " << format_double(r.summaries.front().summary->median) << " over "
        << re.size() << " entries\n";
    runs.push_back(std::move(r));
  } catch (const Error& e) {
    failures.emplace_back("evaluate", e.what());
  }
  return flush(plan, runs, failures, log);
}

int run_expectile1d(const ExperimentPlan& plan, std::ostream& out) {
  plan.validate();
  const auto values = load_values(plan.input, plan.sentinel);
  if (values.empty()) throw Error(ErrorCode::EmptyObservations, plan.input.string() + " holds no usable values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  out << "statistic,omega,value\n";
  out << "count,," << values.size() << "\n";
  out << "mean,," << format_double(mean) << "\n";
  out << "median,," << format_double(quantile(sorted, 0.5)) << "\n";
  for (double w : plan.omegas) {
    out << "expectile," << format_double(w) << "," << format_double(scalar_expectile(values, w)) << "\n";
  }
  return 0;
}

}  // namespace emf
