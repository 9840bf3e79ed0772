#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "polymerlab/bounds.hpp"
#include "polymerlab/environment.hpp"
#include "polymerlab/walk.hpp"

// Experiment configs, validation, seed bookkeeping and the per-kind runners
// that write CSV/JSON artifacts plus a checksummed manifest.

namespace polymerlab::harness {

using Json = nlohmann::ordered_json;

enum class Kind { free_energy, phase_scan, overlap, atoms, fluct, blocks, bound, walk_check };

/// "free-energy", "phase-scan", ...
std::string to_string(Kind k);
std::optional<Kind> parse_kind(std::string_view name);
const std::vector<Kind>& all_kinds();
/// Name of the kind-specific config section: the kind with '-' replaced by '_'.
std::string section_name(Kind k);

/// Aggregated validation failure; each entry names the offending JSON path.
struct ValidationError : std::runtime_error {
  explicit ValidationError(std::vector<std::string> errors);
  std::vector<std::string> errors;
};

struct WalkSection {
  double alpha = 1.5;
  walk::SlowlyVaryingSpec L = walk::SlowlyVaryingSpec::constant();
  double p0 = 0.5;
  double tail_tolerance = 1e-6;
  /// Explicit truncation K; overrides tail_tolerance when set.
  std::optional<std::int64_t> support;
};

struct EnvSection {
  env::Family family = env::Family::gaussian;
  std::vector<double> values;
  std::vector<double> probabilities;
  double interval = env::EnvModel::kUnbounded;

  env::EnvModel model() const;
};

struct FreeEnergyOptions {
  double theta = 0.5;
  std::vector<std::int64_t> fm_grid;  ///< empty means {N/8, N/4, N/2, N}
  bool traces = false;
  std::size_t endpoint_replicas = 1;
};

struct PhaseScanOptions {
  double theta = 0.5;
  std::vector<std::int64_t> fm_grid;
  std::int64_t pi_horizon = 4096;
};

struct OverlapOptions {
  std::size_t mc_samples = 10000;
  double lo = 0.05;
  double hi = 20.0;
};

struct AtomsOptions {
  double epsilon = 0.05;
  bool per_step = false;
};

struct FluctOptions {
  double eps = 0.1;
  /// Replaces the theorem radius when set.
  std::optional<double> radius;
};

struct BlocksOptions {
  std::int64_t M = 1;
  /// Replaces the theorem half-width when set.
  std::optional<std::int64_t> L;
  double eps = 0.1;
  double delta = 0.1;
  std::int64_t shift_k_max = 8;
};

struct BoundOptions {
  bounds::BoundConfig config;
  /// Use analytic_constants at the smallest beta instead of the MC ladder.
  bool analytic = false;
};

struct WalkCheckOptions {
  std::int64_t horizon = 1024;
  std::int64_t pi_horizon = 4096;
};

struct ExperimentConfig {
  Kind kind = Kind::free_energy;
  WalkSection walk;
  EnvSection env;
  std::vector<double> alphas;  ///< defaults to {walk.alpha}
  std::vector<double> betas;
  std::vector<std::int64_t> Ns;
  std::size_t replicas = 100;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
  std::string output_dir = "out";
  double leak_budget = 1e-8;
  /// Reuse replica keys across cells; recorded in the seed ledger.
  bool share_seeds = false;

  FreeEnergyOptions free_energy;
  PhaseScanOptions phase_scan;
  OverlapOptions overlap;
  AtomsOptions atoms;
  FluctOptions fluct;
  BlocksOptions blocks;
  BoundOptions bound;
  WalkCheckOptions walk_check;

  /// Fully defaulted config as JSON; validate(to_json()) round-trips.
  Json to_json() const;
};

/// Parse a config file; syntax errors are reported as a ValidationError.
Json read_config(const std::filesystem::path& path);

/// Check every key, fill defaults and run the cross-field checks. `kind`,
/// when given, must agree with a "kind" key in the tree.
ExperimentConfig validate(const Json& tree, std::optional<Kind> kind = std::nullopt);

/// Command-line values layered over the config tree.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  std::optional<std::vector<double>> betas;
  std::optional<double> C1, C2, theta, gamma;
  std::optional<std::size_t> mc_samples;
};

/// Fill seed and threads from POLYMERLAB_SEED / POLYMERLAB_THREADS where the
/// command line left them unset. Malformed values raise ValidationError.
Overrides with_environment(Overrides cli);

/// Write the overrides into the tree before validation.
void apply_overrides(Json& tree, const Overrides& o, Kind kind);

struct FileRecord {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct SeedEntry {
  std::size_t cell = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  std::uint64_t first_replica = 0;
  std::size_t replicas = 0;
};

struct CellError {
  std::size_t cell = 0;
  std::string message;
};

struct RunManifest {
  Json config;
  std::string version;
  std::vector<FileRecord> files;
  double wall_clock_seconds = 0.0;
  std::vector<SeedEntry> seed_ledger;
  bool shared_seeds = false;
  std::vector<CellError> errors;
  bool partial() const noexcept { return !errors.empty(); }
  Json to_json() const;
};

std::string version();
std::string sha256_file(const std::filesystem::path& path);

/// Run the experiment, write its outputs and manifest.json into
/// config.output_dir. Failing cells are recorded rather than thrown.
RunManifest run(const ExperimentConfig& config);

}  // namespace polymerlab::harness
