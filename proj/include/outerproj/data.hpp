#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "outerproj/constraints.hpp"
#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"
#include "outerproj/random.hpp"

namespace outerproj::data {

/// Synthetic regulatory network: n_reg regulators, each driving n_genes
/// genes, laid out as blocks [regulator, gene_1 .. gene_n] so that
/// d = n_reg (n_genes + 1).
struct NetworkParams {
  std::size_t samples = 200;
  std::size_t regulators = 10;
  std::size_t genes_per_regulator = 10;
  double correlation = 0.7;
  double noise_sigma = 2.0;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return regulators * (genes_per_regulator + 1); }
};

enum class Kind { Labels, Responses };

struct Dataset {
  Matrix X;
  Vector y;
  Kind kind = Kind::Responses;
  std::optional<FeatureGraph> graph;
};

struct Network {
  Matrix X;
  FeatureGraph graph;
};

/// 0-based column of regulator r (0-based); the 1-based form is r(N_g+1) - N_g.
constexpr std::size_t regulator_column(std::size_t r, std::size_t genes_per_regulator) noexcept {
  return r * (genes_per_regulator + 1);
}

/// Regulators are N(0,1); each gene is correlation * regulator plus
/// N(0, 1 - correlation^2) noise. Rows are drawn in order, and within a row
/// regulator before its genes. The graph is a star from each regulator.
inline Network generate_network(const NetworkParams& params) {
  if (params.samples < 1 || params.regulators < 1 || params.genes_per_regulator < 1) {
    throw DataError("network needs at least one sample, regulator, and gene");
  }
  if (!(params.correlation >= 0.0 && params.correlation < 1.0)) {
    throw DataError("correlation must lie in [0, 1)");
  }
  const std::size_t d = params.dim();
  const std::size_t g = params.genes_per_regulator;
  const double residual = std::sqrt(1.0 - params.correlation * params.correlation);
  CounterRng rng(params.seed);
  Matrix X(static_cast<Eigen::Index>(params.samples), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (std::size_t r = 0; r < params.regulators; ++r) {
      const auto col = static_cast<Eigen::Index>(regulator_column(r, g));
      const double regulator = rng.next_normal();
      X(i, col) = regulator;
      for (std::size_t k = 1; k <= g; ++k) {
        X(i, col + static_cast<Eigen::Index>(k)) =
            params.correlation * regulator + residual * rng.next_normal();
      }
    }
  }
  std::vector<Edge> edges;
  edges.reserve(params.regulators * g);
  for (std::size_t r = 0; r < params.regulators; ++r) {
    const std::size_t col = regulator_column(r, g);
    for (std::size_t k = 1; k <= g; ++k) edges.push_back({col, col + k, 1});
  }
  return {std::move(X), FeatureGraph(d, std::move(edges))};
}

enum class Example { One = 1, Two = 2, Three = 3 };

inline constexpr std::size_t kExampleGenes = 10;
inline constexpr std::size_t kExampleActiveBlocks = 4;

/// Number of activated genes per block (the rest of the 10 are inhibited).
constexpr std::size_t activated_genes(Example ex) noexcept {
  switch (ex) {
    case Example::One: return 9;
    case Example::Two: return 8;
    case Example::Three: return 7;
  }
  return 10;
}

/// Four active blocks led by regulators (5, -5, 3, -3); genes carry
/// lead/sqrt(10), with the inhibited genes at the end of each block taking
/// the opposite sign. Remaining coordinates are zero.
inline Vector true_regressor(Example ex, std::size_t d) {
  constexpr std::size_t block = kExampleGenes + 1;
  if (d < kExampleActiveBlocks * block) {
    throw DataError("example regressors need d >= 44, got " + std::to_string(d));
  }
  const double leads[kExampleActiveBlocks] = {5.0, -5.0, 3.0, -3.0};
  const std::size_t activated = activated_genes(ex);
  Vector w = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t b = 0; b < kExampleActiveBlocks; ++b) {
    const auto col = static_cast<Eigen::Index>(b * block);
    const double gene = leads[b] / std::sqrt(10.0);
    w[col] = leads[b];
    for (std::size_t k = 1; k <= kExampleGenes; ++k) {
      w[col + static_cast<Eigen::Index>(k)] = k <= activated ? gene : -gene;
    }
  }
  return w;
}

/// Star graph over d / 11 blocks whose edge signs record whether each gene's
/// coefficient agrees in sign with its regulator's (zero blocks get +1).
inline FeatureGraph signed_graph_for_example(Example ex, std::size_t d) {
  constexpr std::size_t block = kExampleGenes + 1;
  if (d % block != 0) throw DataError("signed example graph needs d to be a multiple of 11");
  const Vector w = true_regressor(ex, d);
  std::vector<Edge> edges;
  for (std::size_t col = 0; col < d; col += block) {
    for (std::size_t k = 1; k <= kExampleGenes; ++k) {
      const double product = w[static_cast<Eigen::Index>(col)] * w[static_cast<Eigen::Index>(col + k)];
      edges.push_back({col, col + k, product < 0.0 ? -1 : 1});
    }
  }
  return FeatureGraph(d, std::move(edges));
}

/// Y = X w + eps, eps ~ N(0, sigma^2) i.i.d., drawn in row order.
inline Vector generate_response(const Matrix& X, const Vector& w, double sigma, std::uint64_t seed) {
  detail::require_dimension(w.size(), X.cols(), "response weights");
  if (!(sigma >= 0.0)) throw DataError("noise sigma must be >= 0");
  Vector y = X * w;
  if (sigma == 0.0) return y;
  CounterRng rng(seed);
  for (auto& v : y) v += sigma * rng.next_normal();
  return y;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// `folds` independent random train/test partitions of 0..m-1; the
/// training part has round(train_fraction * m) samples.
inline std::vector<Split> random_splits(std::size_t m, double train_fraction, std::size_t folds,
                                        std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DataError("train fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(m)));
  if (n_train == 0 || n_train >= m) throw DataError("split leaves an empty train or test set");
  CounterRng rng(seed);
  std::vector<Split> splits;
  splits.reserve(folds);
  std::vector<std::size_t> order(m);
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    for (std::size_t i = m - 1; i > 0; --i) std::swap(order[i], order[rng.next_below(i + 1)]);
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    splits.push_back(std::move(s));
  }
  return splits;
}

/// k-fold partition: fold f tests on every k-th sample of a seeded shuffle.
inline std::vector<Split> kfold_splits(std::size_t m, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > m) throw DataError("k-fold needs 2 <= k <= m");
  CounterRng rng(seed);
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  for (std::size_t i = m - 1; i > 0; --i) std::swap(order[i], order[rng.next_below(i + 1)]);
  std::vector<Split> splits(k);
  for (std::size_t pos = 0; pos < m; ++pos) {
    for (std::size_t f = 0; f < k; ++f) {
      (pos % k == f ? splits[f].test : splits[f].train).push_back(order[pos]);
    }
  }
  for (auto& s : splits) {
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
  }
  return splits;
}

inline Matrix select_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline Vector select_rows(const Vector& y, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
  return out;
}

}  // namespace outerproj::data
