#pragma once

// Column encoders: typed raw values <-> standardized reals.
//
// Integers and text indices are dequantized with uniform noise so that a
// continuous density model can be fitted to them; decode() floors the noise
// away again.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "scd/error.hpp"
#include "scd/matrix.hpp"
#include "scd/random.hpp"
#include "scd/trace.hpp"

namespace scd {

inline constexpr double kDegenerateScale = 1e-12;

struct ColumnEncoder {
  DataType dtype = DataType::Float;
  double center = 0.0;
  double scale = 1.0;
  /// Text columns only: descending frequency, ties lexicographic.
  std::vector<std::string> vocabulary;

  bool operator==(const ColumnEncoder&) const = default;
};

namespace detail {

inline void mean_and_scale(std::span<const double> xs, double& center, double& scale) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  center = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - center) * (x - center);
  double sd = std::sqrt(ss / static_cast<double>(xs.size()));
  scale = sd < kDegenerateScale ? 1.0 : sd;
}

// Keeps dequantization noise off the cell edges so floor() recovers the
// integer despite rounding in the affine map. The margin grows with the
// magnitude of the numbers involved (and saturates at the cell center).
inline double cell_noise(double u, double magnitude = 0.0) {
  const double margin = std::min(0.5, std::max(1e-7, 32.0 * std::numeric_limits<double>::epsilon() * magnitude));
  return std::clamp(u, margin, 1.0 - margin);
}

inline double as_real(const Value& v) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::get<double>(v);
}

inline std::int64_t saturating_floor(double y) {
  constexpr double lo = static_cast<double>(std::numeric_limits<std::int64_t>::min());
  constexpr double hi = static_cast<double>(std::numeric_limits<std::int64_t>::max());
  double f = std::floor(y);
  if (std::isnan(f)) return 0;
  if (f <= lo) return std::numeric_limits<std::int64_t>::min();
  if (f >= hi) return std::numeric_limits<std::int64_t>::max();
  return static_cast<std::int64_t>(f);
}

inline std::ptrdiff_t vocab_index(const ColumnEncoder& enc, const std::string& s) {
  auto it = std::find(enc.vocabulary.begin(), enc.vocabulary.end(), s);
  return it == enc.vocabulary.end() ? -1 : it - enc.vocabulary.begin();
}

}  // namespace detail

inline ColumnEncoder fit_encoder(std::span<const Value> values, DataType dtype, std::uint64_t seed) {
  if (values.empty()) throw Error(Errc::EmptyColumn, "cannot fit an encoder on an empty column");
  for (const auto& v : values)
    if (dtype_of(v) != dtype)
      throw Error(Errc::TypeMismatch, "column value does not match dtype " + std::string(to_token(dtype)));

  ColumnEncoder enc;
  enc.dtype = dtype;
  std::vector<double> xs;
  xs.reserve(values.size());

  if (dtype != DataType::Text) {
    for (const auto& v : values) xs.push_back(detail::as_real(v));
    detail::mean_and_scale(xs, enc.center, enc.scale);
    return enc;
  }

  std::map<std::string, std::size_t> counts;
  for (const auto& v : values) ++counts[std::get<std::string>(v)];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [word, _] : ranked) enc.vocabulary.push_back(word);

  Rng rng(seed);
  for (const auto& v : values) {
    auto idx = detail::vocab_index(enc, std::get<std::string>(v));
    xs.push_back(static_cast<double>(idx) + detail::cell_noise(uniform01(rng)));
  }
  detail::mean_and_scale(xs, enc.center, enc.scale);
  return enc;
}

/// `noise` is a uniform draw in [0,1); ignored for Float columns.
inline double encode(const ColumnEncoder& enc, const Value& value, double noise) {
  if (dtype_of(value) != enc.dtype)
    throw Error(Errc::TypeMismatch, "value does not match encoder dtype " + std::string(to_token(enc.dtype)));
  switch (enc.dtype) {
    case DataType::Float:
      return (std::get<double>(value) - enc.center) / enc.scale;
    case DataType::Integer:
    {
      const double v = static_cast<double>(std::get<std::int64_t>(value));
      return (v + detail::cell_noise(noise, std::abs(v) + std::abs(enc.center)) - enc.center) / enc.scale;
    }
    case DataType::Text: {
      auto idx = detail::vocab_index(enc, std::get<std::string>(value));
      if (idx < 0) throw Error(Errc::UnknownCategory, "\"" + std::get<std::string>(value) + "\" not in vocabulary");
      return (static_cast<double>(idx) + detail::cell_noise(noise) - enc.center) / enc.scale;
    }
  }
  return 0.0;
}

/// Like encode(), but an unseen text category lands one cell past the end of
/// the vocabulary instead of failing. Used when moving values between models.
inline double encode_lenient(const ColumnEncoder& enc, const Value& value, double noise) {
  if (enc.dtype == DataType::Text) {
    auto idx = detail::vocab_index(enc, std::get<std::string>(value));
    if (idx < 0) idx = static_cast<std::ptrdiff_t>(enc.vocabulary.size());
    return (static_cast<double>(idx) + detail::cell_noise(noise) - enc.center) / enc.scale;
  }
  return encode(enc, value, noise);
}

inline Value decode(const ColumnEncoder& enc, double x) {
  const double y = x * enc.scale + enc.center;
  switch (enc.dtype) {
    case DataType::Float:
      return y;
    case DataType::Integer:
      return detail::saturating_floor(y);
    case DataType::Text: {
      auto last = static_cast<std::int64_t>(enc.vocabulary.size()) - 1;
      auto idx = std::clamp<std::int64_t>(detail::saturating_floor(y), 0, std::max<std::int64_t>(last, 0));
      return enc.vocabulary.empty() ? std::string() : enc.vocabulary[static_cast<std::size_t>(idx)];
    }
  }
  return 0.0;
}

struct EncodedMatrix {
  Matrix values;
  std::vector<ColumnEncoder> encoders;
};

/// Encodes a dataset with already-fitted encoders (one per schema element).
inline Matrix encode_with(const std::vector<ColumnEncoder>& encoders, const TraceDataset& ds, std::uint64_t seed) {
  const auto cols = ds.schema.elements.size();
  if (encoders.size() != cols)
    throw Error(Errc::InconsistentInputs, "encoder count does not match schema of " + ds.schema.id);
  Matrix m(ds.rows.size(), cols);
  Rng rng(derive_seed(seed, "dequantize"));
  for (std::size_t r = 0; r < ds.rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = encode(encoders[c], ds.rows[r][c], uniform01(rng));
  return m;
}

inline EncodedMatrix encode_matrix(const TraceDataset& ds, std::uint64_t seed) {
  EncodedMatrix out;
  for (std::size_t c = 0; c < ds.schema.elements.size(); ++c) {
    auto col = column(ds, c);
    out.encoders.push_back(
        fit_encoder(col, ds.schema.elements[c].dtype, derive_seed(seed, "column:" + std::to_string(c))));
  }
  out.values = encode_with(out.encoders, ds, seed);
  return out;
}

inline json encoder_to_json(const ColumnEncoder& e) {
  json j{{"dtype", to_token(e.dtype)}, {"center", e.center}, {"scale", e.scale}};
  if (e.dtype == DataType::Text) j["vocabulary"] = e.vocabulary;
  return j;
}

inline ColumnEncoder encoder_from_json(const json& j) {
  ColumnEncoder e;
  auto dtype = parse_data_type(j.at("dtype").get<std::string>());
  if (!dtype) throw Error(Errc::MalformedModel, "encoder has unknown dtype");
  e.dtype = *dtype;
  e.center = j.at("center").get<double>();
  e.scale = j.at("scale").get<double>();
  if (!(e.scale > 0.0)) throw Error(Errc::MalformedModel, "encoder scale must be positive");
  if (e.dtype == DataType::Text) e.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  return e;
}

}  // namespace scd
