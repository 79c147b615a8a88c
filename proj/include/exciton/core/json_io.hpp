#pragma once

#include "json.hpp"

#include <algorithm>
#include <string>

#include "exciton/core/linalg.hpp"

namespace exlab {

using json = nlohmann::json;

/// Complex matrix as nested row-major arrays of [re, im] pairs.
inline json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline cplx complex_from_json(const json& e) {
  if (e.is_number()) return {e.get<double>(), 0.0};
  if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
    return {e[0].get<double>(), e[1].get<double>()};
  }
  throw InvalidArgument("complex entry must be a number or a [re, im] pair, got " + e.dump());
}

inline bool is_complex_entry(const json& e) {
  return e.is_number() || (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number());
}

}  // namespace detail

/// Accepts the nested row-major form, or a flat row-major list of n^2
/// [re, im] pairs describing a square matrix.
inline CMatrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw InvalidArgument("matrix must be a non-empty array");
  const bool all_pairs = std::all_of(j.begin(), j.end(), [](const json& e) {
    return e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number();
  });
  const auto count = static_cast<Eigen::Index>(j.size());
  const auto n = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(count))));
  if (all_pairs && n * n == count) {
    CMatrix m(n, n);
    for (Eigen::Index k = 0; k < count; ++k) m(k / n, k % n) = detail::complex_from_json(j[k]);
    return m;
  }
  if (!j[0].is_array()) throw InvalidArgument("matrix rows must be arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  CMatrix m(count, cols);
  for (Eigen::Index r = 0; r < count; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InvalidArgument("matrix row " + std::to_string(r) + " has inconsistent length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = detail::complex_from_json(row[c]);
  }
  return m;
}

inline RVector real_vector_from_json(const json& j) {
  if (!j.is_array()) throw InvalidArgument("expected an array of numbers");
  RVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw InvalidArgument("expected a number, got " + j[k].dump());
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

inline json real_vector_to_json(const RVector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

}  // namespace exlab
