#include "riemmix/data.hpp"

#include "riemmix/errors.hpp"
#include "riemmix/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/QR>

namespace riemmix {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(master, stream));
}

// ---------------------------------------------------------------- csv

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Dataset parse_csv(std::string_view text, const CsvOptions& opts) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_pending = opts.header;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<double> row;
    std::size_t col = 0;
    std::size_t start = 0;
    for (;;) {
      const std::size_t cut = line.find(opts.delimiter, start);
      const std::string_view cell = trim(line.substr(start, cut == std::string_view::npos ? cut : cut - start));
      ++col;
      double v = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + std::string(cell) + "'", line_no, col);
      }
      row.push_back(v);
      if (cut == std::string_view::npos) break;
      start = cut + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged row: expected " + std::to_string(rows.front().size()) + " cells, found " +
                           std::to_string(row.size()),
                       line_no);
    }
    rows.push_back(std::move(row));
  }

  Dataset ds;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  ds.rows.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.rows(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset ds = parse_csv(buf.str(), opts);
  ds.source = path.string();
  return ds;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return std::string(buf, ptr);
}

std::string to_csv(const Matrix& rows, char delimiter) {
  std::string out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out += delimiter;
      out += format_double(rows(i, j));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- generators

Dataset sample_gmm(const MixtureEstimate& truth, Eigen::Index n, std::uint64_t seed) {
  const std::size_t K = truth.num_components();
  if (K == 0 || truth.covariances.size() != K || truth.weights.size() != static_cast<Eigen::Index>(K)) {
    throw ArgumentError("sample_gmm: inconsistent truth");
  }
  if (n < 0) throw ArgumentError("sample_gmm: negative sample count");
  if (!(truth.weights.minCoeff() >= 0.0) || !(truth.weights.sum() > 0.0)) {
    throw ArgumentError("sample_gmm: weights must be non-negative with positive sum");
  }
  const Eigen::Index d = truth.dim();
  std::vector<Matrix> factors;
  for (std::size_t j = 0; j < K; ++j) {
    if (truth.means[j].size() != d || truth.covariances[j].rows() != d || truth.covariances[j].cols() != d) {
      throw ArgumentError("sample_gmm: dimension mismatch in component " + std::to_string(j));
    }
    const auto sp = SpdPoint::try_make(truth.covariances[j]);
    if (!sp) throw ArgumentError("sample_gmm: covariance " + std::to_string(j) + " is not positive definite");
    factors.push_back(sp->cholesky_factor());
  }

  std::mt19937_64 rng = make_rng(seed, 0);
  std::discrete_distribution<std::size_t> comp(truth.weights.data(), truth.weights.data() + K);
  std::normal_distribution<double> normal;
  Dataset ds;
  ds.rows.resize(n, d);
  Vector z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t j = comp(rng);
    for (Eigen::Index k = 0; k < d; ++k) z(k) = normal(rng);
    ds.rows.row(i) = (truth.means[j] + factors[j] * z).transpose();
  }
  ds.source = "generated";
  ds.seed = seed;
  ds.truth = truth;
  return ds;
}

MixtureEstimate random_truth(const TruthSpec& spec, std::uint64_t seed) {
  if (spec.K < 1 || spec.d < 1) throw ArgumentError("random_truth: need K >= 1 and d >= 1");
  if (!(spec.eig_min > 0.0 && spec.eig_max >= spec.eig_min)) throw ArgumentError("random_truth: invalid spectrum range");
  if (!(spec.separation >= 0.0)) throw ArgumentError("random_truth: separation must be non-negative");
  std::mt19937_64 rng = make_rng(seed, 1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const Eigen::Index d = spec.d;

  MixtureEstimate t;
  t.weights.resize(static_cast<Eigen::Index>(spec.K));
  for (std::size_t j = 0; j < spec.K; ++j) {
    Matrix g(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) g(a, b) = normal(rng);
    }
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector ev(d);
    for (Eigen::Index a = 0; a < d; ++a) ev(a) = spec.eig_min + (spec.eig_max - spec.eig_min) * unit(rng);
    Matrix cov = q * ev.asDiagonal() * q.transpose();
    t.covariances.push_back(0.5 * (cov + cov.transpose()));
    t.weights(static_cast<Eigen::Index>(j)) = 1.0 + unit(rng);
  }
  t.weights /= t.weights.sum();

  const double min_dist = spec.separation * std::sqrt(spec.eig_max);
  // Two draws of spread·N(0, I) sit about spread·√(2d) apart, so this keeps the
  // typical pairwise distance near min_dist in any dimension; rejection then
  // enforces the minimum and widens the spread when it is too tight.
  double spread = std::max(min_dist, std::sqrt(spec.eig_max)) / std::sqrt(2.0 * static_cast<double>(d));
  int failures = 0;
  while (t.means.size() < spec.K) {
    Vector mu(d);
    for (Eigen::Index a = 0; a < d; ++a) mu(a) = spread * normal(rng);
    const bool far = std::all_of(t.means.begin(), t.means.end(), [&](const Vector& m) { return (m - mu).norm() >= min_dist; });
    if (far) {
      t.means.push_back(mu);
    } else if (++failures % 100 == 0) {
      spread *= 1.1;
    }
  }
  return t;
}

// ---------------------------------------------------------------- k-means++

Matrix sample_covariance(const Matrix& x) {
  if (x.rows() == 0) throw ArgumentError("sample_covariance: no samples");
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(x.rows());
}

namespace {

// Adds a small ridge until the matrix factorizes.
Matrix make_spd(Matrix m) {
  m = 0.5 * (m + m.transpose());
  double ridge = 1e-10 * std::max(1.0, m.trace() / static_cast<double>(std::max<Eigen::Index>(1, m.rows())));
  while (!SpdPoint::try_make(m)) {
    m.diagonal().array() += ridge;
    ridge *= 10.0;
  }
  return m;
}

}  // namespace

InitCandidate kmeanspp_candidate(const Matrix& x, std::size_t K, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (K < 1 || n < static_cast<Eigen::Index>(K)) throw ArgumentError("k-means++: need 1 <= K <= n");

  std::vector<Eigen::Index> chosen;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit;

  auto take = [&](Eigen::Index i) {
    chosen.push_back(i);
    taken[static_cast<std::size_t>(i)] = true;
    dist = dist.cwiseMin((x.rowwise() - x.row(i)).rowwise().squaredNorm());
  };
  take(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  while (chosen.size() < K) {
    const double total = dist.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double r = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (dist(i) <= 0.0) continue;
        pick = i;
        r -= dist(i);
        if (r < 0.0) break;
      }
    } else {
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
      }
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    take(pick);
  }

  InitCandidate c;
  for (Eigen::Index i : chosen) c.centers.push_back(x.row(i).transpose());
  c.cost = dist.sum();

  std::vector<std::vector<Eigen::Index>> members(K);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K; ++j) {
      const double dj = (x.row(i).transpose() - c.centers[j]).squaredNorm();
      if (dj < best_d) {
        best_d = dj;
        best = j;
      }
    }
    members[best].push_back(i);
  }

  const Matrix global = n >= 2 ? sample_covariance(x) : Matrix::Identity(d, d);
  const Matrix global_spd = make_spd(global);
  MixtureEstimate& est = c.estimate;
  est.weights.resize(static_cast<Eigen::Index>(K));
  const double floor = 1.0 / (10.0 * static_cast<double>(K));
  for (std::size_t j = 0; j < K; ++j) {
    const auto& m = members[j];
    if (m.empty()) {
      est.means.push_back(c.centers[j]);
    } else {
      Matrix sub(static_cast<Eigen::Index>(m.size()), d);
      for (std::size_t r = 0; r < m.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = x.row(m[r]);
      est.means.push_back(sub.colwise().mean().transpose());
      if (m.size() >= 2) {
        est.covariances.push_back(make_spd(0.99 * sample_covariance(sub) + 0.01 * global));
      }
    }
    if (est.covariances.size() < est.means.size()) est.covariances.push_back(global_spd);
    est.weights(static_cast<Eigen::Index>(j)) =
        std::max(floor, static_cast<double>(m.size()) / static_cast<double>(n));
  }
  est.weights /= est.weights.sum();
  return c;
}

std::vector<InitCandidate> kmeanspp_candidates(const Matrix& x, std::size_t K, const PenaltyConfig& cfg,
                                               std::uint64_t seed, int candidates) {
  if (candidates < 1) throw ArgumentError("k-means++: need at least one candidate");
  if (K < 1 || x.rows() < static_cast<Eigen::Index>(K)) throw ArgumentError("k-means++: need 1 <= K <= n");
  const AugmentedData aug = augment(x);
  std::vector<InitCandidate> out(static_cast<std::size_t>(candidates));
  for_each_chunk(out.size(), 1, [&](std::size_t c, std::size_t, std::size_t) {
    std::mt19937_64 rng(derive_seed(seed, c));
    out[c] = kmeanspp_candidate(x, K, rng);
    out[c].objective = penalized_objective(embed_mixture(out[c].estimate), aug, cfg);
    if (!std::isfinite(out[c].objective)) out[c].objective = -std::numeric_limits<double>::infinity();
  });
  return out;
}

MixtureEstimate kmeanspp_init(const Matrix& x, std::size_t K, const PenaltyConfig& cfg, std::uint64_t seed,
                              int candidates) {
  std::vector<InitCandidate> all = kmeanspp_candidates(x, K, cfg, seed, candidates);
  std::size_t best = 0;
  for (std::size_t c = 1; c < all.size(); ++c) {
    if (all[c].objective > all[best].objective) best = c;
  }
  return std::move(all[best].estimate);
}

std::vector<std::size_t> align_components(const std::vector<Vector>& est, const std::vector<Vector>& truth) {
  const std::size_t K = truth.size();
  if (est.size() != K) throw ArgumentError("align_components: component counts differ");
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  auto cost = [&](const std::vector<std::size_t>& p) {
    double s = 0.0;
    for (std::size_t t = 0; t < K; ++t) s += (est[p[t]] - truth[t]).norm();
    return s;
  };
  if (K <= 8) {
    std::vector<std::size_t> best = perm;
    double best_cost = cost(perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
      const double c = cost(perm);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    }
    return best;
  }
  std::vector<bool> used(K, false);
  for (std::size_t t = 0; t < K; ++t) {
    std::size_t pick = K;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K; ++j) {
      if (used[j]) continue;
      const double dj = (est[j] - truth[t]).norm();
      if (dj < best_d) {
        best_d = dj;
        pick = j;
      }
    }
    used[pick] = true;
    perm[t] = pick;
  }
  return perm;
}

}  // namespace riemmix
