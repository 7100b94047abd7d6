#pragma once

#include "riemmix/objective.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace riemmix {

/// Name of the generator family used for every random draw.
inline constexpr std::string_view kRngName = "mt19937_64+splitmix64";

/// SplitMix64 finalizer; used to derive independent seeds from one master seed.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);
std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream = 0);

struct Dataset {
  Matrix rows;  ///< n × d
  std::string source;
  std::optional<std::uint64_t> seed;
  std::optional<MixtureEstimate> truth;

  Eigen::Index n() const noexcept { return rows.rows(); }
  Eigen::Index d() const noexcept { return rows.cols(); }
};

struct CsvOptions {
  char delimiter = ',';
  bool header = false;
};

/// Throws ParseError with line and column for ragged rows or non-numeric
/// cells, std::runtime_error when the file cannot be read.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});
Dataset parse_csv(std::string_view text, const CsvOptions& opts = {});
/// Shortest round-trip decimal form, one row per line.
std::string to_csv(const Matrix& rows, char delimiter = ',');
std::string format_double(double v);

/// i.i.d. draws from the mixture. Throws ArgumentError for an invalid truth.
Dataset sample_gmm(const MixtureEstimate& truth, Eigen::Index n, std::uint64_t seed);

struct TruthSpec {
  std::size_t K = 2;
  Eigen::Index d = 2;
  /// Minimum pairwise mean distance in units of the largest component standard deviation.
  double separation = 5.0;
  double eig_min = 0.5;
  double eig_max = 2.0;
};
/// Random mixture: covariances with spectra in [eig_min, eig_max], weights
/// within a factor of two of each other, means placed by rejection so that
/// every pair is at least `separation` standard deviations apart.
MixtureEstimate random_truth(const TruthSpec& spec, std::uint64_t seed);

struct InitCandidate {
  std::vector<Vector> centers;
  double cost = 0.0;  ///< k-means cost of the seeding
  MixtureEstimate estimate;
  double objective = 0.0;  ///< penalized objective of `estimate`
};

/// One k-means++ seeding turned into a mixture: nearest-center assignment,
/// means = cluster means, covariances = 0.99 C_j + 0.01 C (global covariance
/// for clusters under two points), weights floored at 1/(10K).
InitCandidate kmeanspp_candidate(const Matrix& x, std::size_t K, std::mt19937_64& rng);

/// All seedings, scored with the penalized objective. Candidate c uses seed
/// derive_seed(seed, c), so results do not depend on the thread count.
std::vector<InitCandidate> kmeanspp_candidates(const Matrix& x, std::size_t K, const PenaltyConfig& cfg,
                                               std::uint64_t seed, int candidates = 30);

/// Best-scoring candidate. Throws ArgumentError if n < K or candidates < 1.
MixtureEstimate kmeanspp_init(const Matrix& x, std::size_t K, const PenaltyConfig& cfg, std::uint64_t seed,
                              int candidates = 30);

/// Sample covariance dividing by n.
Matrix sample_covariance(const Matrix& x);

/// Label alignment: permutation of `est` components minimizing the summed
/// mean distance to `truth` (exhaustive for K ≤ 8, greedy beyond).
std::vector<std::size_t> align_components(const std::vector<Vector>& est, const std::vector<Vector>& truth);

}  // namespace riemmix
