#include "riemmix/product.hpp"

#include "riemmix/errors.hpp"

#include <string>

namespace riemmix {

namespace {

void check_points(const GmmParams& a, const GmmParams& b) {
  if (a.components.size() != b.components.size() || a.logits.size() != b.logits.size()) {
    throw ArgumentError("product manifold: points have different shapes");
  }
  for (std::size_t j = 0; j < a.components.size(); ++j) {
    if (a.components[j].dim() != b.components[j].dim()) {
      throw ArgumentError("product manifold: factor " + std::to_string(j) + " dimension mismatch");
    }
  }
}

void check_tangents(const GmmTangent& a, const GmmTangent& b) {
  if (a.components.size() != b.components.size() || a.logit_dirs.size() != b.logit_dirs.size()) {
    throw ArgumentError("product tangent: shape mismatch");
  }
}

}  // namespace

GmmTangent GmmTangent::zero_like(const GmmParams& p) {
  GmmTangent t;
  t.components.reserve(p.components.size());
  for (const auto& c : p.components) t.components.push_back(TangentVector::zero(c.dim()));
  t.logit_dirs = Vector::Zero(p.logits.size());
  return t;
}

GmmTangent& GmmTangent::operator+=(const GmmTangent& o) {
  check_tangents(*this, o);
  for (std::size_t j = 0; j < components.size(); ++j) components[j] += o.components[j];
  logit_dirs += o.logit_dirs;
  return *this;
}

GmmTangent& GmmTangent::operator-=(const GmmTangent& o) {
  check_tangents(*this, o);
  for (std::size_t j = 0; j < components.size(); ++j) components[j] -= o.components[j];
  logit_dirs -= o.logit_dirs;
  return *this;
}

GmmTangent& GmmTangent::operator*=(double s) {
  for (auto& c : components) c *= s;
  logit_dirs *= s;
  return *this;
}

bool GmmTangent::is_zero() const {
  for (const auto& c : components) {
    if (!c.is_zero()) return false;
  }
  return logit_dirs.isZero(0.0);
}

RetractionKind parse_retraction(std::string_view name) {
  if (name == "exp") return RetractionKind::exp;
  if (name == "euclidean") return RetractionKind::euclidean;
  throw ArgumentError("unknown retraction '" + std::string(name) + "' (expected exp or euclidean)");
}

std::string_view to_string(RetractionKind kind) {
  return kind == RetractionKind::exp ? "exp" : "euclidean";
}

TransportKind default_transport(RetractionKind kind) {
  return kind == RetractionKind::exp ? TransportKind::parallel : TransportKind::identity;
}

void check_shapes(const GmmParams& base, const GmmTangent& xi) {
  if (base.components.size() != xi.components.size() || base.logits.size() != xi.logit_dirs.size()) {
    throw ArgumentError("product manifold: tangent shape does not match base point");
  }
  for (std::size_t j = 0; j < base.components.size(); ++j) {
    if (base.components[j].dim() != xi.components[j].dim()) {
      throw ArgumentError("product manifold: factor " + std::to_string(j) + " dimension mismatch");
    }
  }
}

double product_metric(const GmmParams& base, const GmmTangent& xi, const GmmTangent& eta) {
  check_shapes(base, xi);
  check_shapes(base, eta);
  double total = xi.logit_dirs.dot(eta.logit_dirs);
  for (std::size_t j = 0; j < base.components.size(); ++j) {
    total += metric(base.components[j], xi.components[j], eta.components[j]);
  }
  return total;
}

double product_norm(const GmmParams& base, const GmmTangent& xi) {
  return std::sqrt(std::max(0.0, product_metric(base, xi, xi)));
}

GmmParams product_retract(const GmmParams& base, const GmmTangent& xi, RetractionKind kind) {
  check_shapes(base, xi);
  GmmParams out;
  out.components.reserve(base.components.size());
  for (std::size_t j = 0; j < base.components.size(); ++j) {
    if (kind == RetractionKind::exp) {
      out.components.push_back(exp_map(base.components[j], xi.components[j]));
      continue;
    }
    try {
      out.components.push_back(euclidean_retraction(base.components[j], xi.components[j]));
    } catch (const RetractionFailure& e) {
      throw e.with_component(j);
    }
  }
  out.logits = xi.logit_dirs.isZero(0.0) ? base.logits : Vector(base.logits + xi.logit_dirs);
  return out;
}

ProductTransport::ProductTransport(const GmmParams& from, const GmmParams& to, TransportKind kind)
    : kind_(kind), k_(from.components.size()), dim_(from.factor_dim()), euclid_dim_(from.logits.size()) {
  check_points(from, to);
  if (kind_ == TransportKind::parallel) {
    ops_.reserve(k_);
    for (std::size_t j = 0; j < k_; ++j) ops_.emplace_back(from.components[j], to.components[j]);
  }
}

GmmTangent ProductTransport::operator()(const GmmTangent& xi) const {
  if (xi.components.size() != k_ || xi.logit_dirs.size() != euclid_dim_) {
    throw ArgumentError("product_transport: tangent shape mismatch");
  }
  if (kind_ == TransportKind::identity) {
    for (const auto& c : xi.components) {
      if (c.dim() != dim_) throw ArgumentError("product_transport: factor dimension mismatch");
    }
    return xi;
  }
  GmmTangent out;
  out.components.reserve(k_);
  for (std::size_t j = 0; j < k_; ++j) out.components.push_back(ops_[j](xi.components[j]));
  out.logit_dirs = xi.logit_dirs;
  return out;
}

GmmTangent product_transport(const GmmParams& from, const GmmParams& to, const GmmTangent& xi) {
  return ProductTransport(from, to)(xi);
}

}  // namespace riemmix
