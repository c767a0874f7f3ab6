#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace synthqa {

using Vector = std::vector<double>;

/// Maps a batch of texts to one embedding per text, order preserved.
using Embedder = std::function<std::vector<Vector>(const std::vector<std::string>&)>;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Returns v scaled to unit length. A zero vector is returned unchanged.
Vector normalized(Vector v);

/// Cosine similarity; 0 when either side has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace synthqa
