#pragma once

#include "riemmix/spd.hpp"

#include <string_view>
#include <vector>

namespace riemmix {

/// Point on (P^{d+1})^K × R^m.
///
/// For mixture problems the SPD factors are the augmented matrices S_j and the
/// Euclidean factor holds the K-1 weight logits (ω_K = 0 is implicit). The
/// product-manifold operations themselves only require every SPD factor to
/// share one dimension, so other problems may put a different Euclidean
/// parameter in `logits`.
struct GmmParams {
  std::vector<SpdPoint> components;
  Vector logits;

  std::size_t num_components() const noexcept { return components.size(); }
  /// Size of each SPD factor.
  Eigen::Index factor_dim() const { return components.empty() ? 0 : components.front().dim(); }
};

struct GmmTangent {
  std::vector<TangentVector> components;
  Vector logit_dirs;

  static GmmTangent zero_like(const GmmParams& p);

  GmmTangent& operator+=(const GmmTangent& o);
  GmmTangent& operator-=(const GmmTangent& o);
  GmmTangent& operator*=(double s);

  friend GmmTangent operator+(GmmTangent a, const GmmTangent& b) { return a += b; }
  friend GmmTangent operator-(GmmTangent a, const GmmTangent& b) { return a -= b; }
  friend GmmTangent operator*(double s, GmmTangent a) { return a *= s; }
  friend GmmTangent operator-(GmmTangent a) { return a *= -1.0; }

  bool is_zero() const;
};

enum class RetractionKind { exp, euclidean };

/// How tangent vectors move between iterates. `parallel` pairs with the
/// exponential map; `identity` is the differentiated Euclidean retraction.
enum class TransportKind { parallel, identity };

RetractionKind parse_retraction(std::string_view name);
std::string_view to_string(RetractionKind kind);
TransportKind default_transport(RetractionKind kind);

/// Throws ArgumentError unless xi has the shape of a tangent at base.
void check_shapes(const GmmParams& base, const GmmTangent& xi);

double product_metric(const GmmParams& base, const GmmTangent& xi, const GmmTangent& eta);
double product_norm(const GmmParams& base, const GmmTangent& xi);

/// Retracts each SPD factor with `kind` and moves the Euclidean factor
/// additively. Euclidean retraction failures are rethrown tagged with the
/// index of the offending factor.
GmmParams product_retract(const GmmParams& base, const GmmTangent& xi, RetractionKind kind);

/// Transport operator between two product points, built once and applied to
/// many tangents. Euclidean directions are copied unchanged.
class ProductTransport {
 public:
  ProductTransport(const GmmParams& from, const GmmParams& to, TransportKind kind = TransportKind::parallel);
  GmmTangent operator()(const GmmTangent& xi) const;

 private:
  std::vector<TransportOperator> ops_;
  TransportKind kind_;
  std::size_t k_ = 0;
  Eigen::Index dim_ = 0;
  Eigen::Index euclid_dim_ = 0;
};

GmmTangent product_transport(const GmmParams& from, const GmmParams& to, const GmmTangent& xi);

}  // namespace riemmix
