// Command-line front end and file formats: fit / simulate / summarize /
// hermite-split / check-separation, plus the CSV and snapshot-file codecs
// they share.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "npmix/sampler.hpp"

namespace npmix {

// Flat key=value run configuration; unset fields fall back to data-driven
// defaults at fit time. Unknown keys are rejected while parsing.
struct RunConfig {
  // io
  std::optional<std::string> input;
  std::optional<std::string> output_dir;
  // model
  std::optional<int> K;
  std::optional<double> dp_alpha;
  std::optional<std::vector<double>> mu0;
  std::optional<double> eta;
  std::optional<double> gamma_shape;
  std::optional<double> gamma_rate;
  std::optional<double> tau;
  std::optional<int> nu;
  std::optional<double> sigma0;
  std::optional<double> theta1;
  std::optional<double> theta2;
  std::optional<double> iw_df;
  std::optional<double> iw_scale;  // scalar multiple of the identity
  std::optional<double> dirichlet_conc;
  std::optional<std::string> separation_axis;  // "location" | "scale"
  std::optional<bool> regions_fixed;
  std::optional<std::vector<std::vector<double>>> fixed_centers;
  std::optional<std::vector<double>> fixed_radii;
  std::optional<std::vector<double>> background_lo;
  std::optional<std::vector<double>> background_hi;
  std::optional<double> loc_mu0;
  std::optional<double> loc_eta;
  // sampler
  std::optional<long long> iters;
  std::optional<long long> burnin;
  std::optional<long long> thin;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  // grids
  std::optional<int> grid_points;
  std::optional<double> grid_pad;
  std::optional<double> band_level;
  std::optional<double> weight_level;
  std::optional<bool> cdf;
  std::optional<int> cdf_points;
};

// Parses a flat key=value config file ('#' comments allowed); throws
// InvalidArgumentError on unknown keys or malformed values.
RunConfig parse_config_file(const std::string& path);

// Applies one key=value pair; shared by the file parser and flag overrides.
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);

// Resolves hyperparameters from the config, filling unset fields with
// data-driven defaults, and finalizes them against the data dimension.
Hyperparams build_hyperparams(const RunConfig& cfg, const Dataset& data);

// Headered CSV with one row per observation.
Dataset read_csv(const std::string& path);
void write_csv(const std::string& path, const Dataset& data);

// Line-delimited snapshot file (version-tagged header carrying the full
// hyperparameter set). Observation labels and slice variables are not
// serialized; they are not needed for summaries.
void write_snapshots(const std::string& path, const ChainOutput& out);
ChainOutput read_snapshots(const std::string& path);

// Full dispatcher; returns the process exit code (0 ok, 2 usage/input
// error, 3 numerical failure).
int cli_main(int argc, const char* const* argv);

}  // namespace npmix
