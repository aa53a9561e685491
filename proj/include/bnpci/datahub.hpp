#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "gaussian.hpp"

// Data ingestion and synthetic generators. Columns live on [0,1] after an
// invertible rescale whose parameters are kept alongside the data.

namespace bnpci::datahub {

enum class RescaleMethod { minmax, gaussian_cdf };

struct RescaleRecord {
  RescaleMethod method = RescaleMethod::minmax;
  // minmax: a = min, b = max. gaussian_cdf: a = mean, b = sd.
  double a = 0.0;
  double b = 1.0;

  double to_unit(double raw) const {
    return method == RescaleMethod::minmax ? (raw - a) / (b - a)
                                           : normal_cdf((raw - a) / b);
  }
  double from_unit(double u) const {
    return method == RescaleMethod::minmax ? a + u * (b - a)
                                           : a + b * normal_quantile(u);
  }
};

struct Dataset {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;  // values in [0,1]
  std::vector<RescaleRecord> rescale;
  std::size_t dropped_rows = 0;  // rows removed at load time

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  bool has_column(std::string_view name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }

  std::size_t column_index(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
      throw DataError("no column named '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names.begin());
  }

  const std::vector<double>& column(std::string_view name) const {
    return columns[column_index(name)];
  }
};

namespace detail {

// RFC-4180-flavored reader: comma separators, optional double-quoted fields
// with "" escapes, \n or \r\n record ends, UTF-8 passthrough (BOM stripped).
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;  // saw content in the current record

  const auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
  };
  const auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    any = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        end_field();
        any = true;
        break;
      case '\r':
        break;  // swallowed; the following \n ends the record
      case '\n':
        if (any || !field.empty() || !record.empty()) end_record();
        break;
      default:
        field.push_back(ch);
        any = true;
        break;
    }
  }
  if (any || !field.empty() || !record.empty()) end_record();
  return records;
}

inline bool parse_double(std::string_view token, double& out) {
  std::size_t b = 0, e = token.size();
  while (b < e && (token[b] == ' ' || token[b] == '\t')) ++b;
  while (e > b && (token[e - 1] == ' ' || token[e - 1] == '\t')) --e;
  if (b == e) return false;
  const char* first = token.data() + b;
  const char* last = token.data() + e;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last && std::isfinite(out);
}

}  // namespace detail

// Column names from the header row only.
inline std::vector<std::string> csv_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const auto records = detail::parse_csv(text);
  if (records.empty()) throw DataError("'" + path.string() + "' has no header row");
  return records.front();
}

// Load the selected columns, drop rows with missing or non-finite values in
// them (count reported on the Dataset), and rescale each column to [0,1].
inline Dataset load_csv(const std::filesystem::path& path,
                        std::span<const std::string> columns,
                        RescaleMethod method) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const auto records = detail::parse_csv(text);
  if (records.empty()) throw DataError("'" + path.string() + "' has no header row");

  const auto& header = records.front();
  std::vector<std::size_t> at;
  for (const auto& name : columns) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw DataError("missing column '" + name + "' in '" + path.string() + "'");
    if (std::find(it + 1, header.end(), name) != header.end())
      throw DataError("duplicate column '" + name + "' in '" + path.string() + "'");
    at.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  Dataset ds;
  ds.names.assign(columns.begin(), columns.end());
  ds.columns.resize(columns.size());

  std::vector<double> row(columns.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    bool ok = true;
    for (std::size_t c = 0; c < at.size() && ok; ++c)
      ok = at[c] < rec.size() && detail::parse_double(rec[at[c]], row[c]);
    if (!ok) {
      ++ds.dropped_rows;
      continue;
    }
    for (std::size_t c = 0; c < row.size(); ++c) ds.columns[c].push_back(row[c]);
  }
  if (!columns.empty() && records.size() > 1 && ds.rows() == 0)
    throw AllRowsDroppedError(ds.dropped_rows);

  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    auto& col = ds.columns[c];
    if (col.empty()) {  // header-only file: nothing to rescale
      ds.rescale.push_back({method, 0.0, 1.0});
      continue;
    }
    RescaleRecord rec;
    if (method == RescaleMethod::minmax) {
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      if (!(*lo < *hi))
        throw DataError("degenerate column '" + ds.names[c] +
                        "': needs at least two distinct values");
      rec = {RescaleMethod::minmax, *lo, *hi};
    } else {
      double mean = 0.0;
      for (double v : col) mean += v;
      mean /= col.empty() ? 1.0 : static_cast<double>(col.size());
      double ss = 0.0;
      for (double v : col) ss += (v - mean) * (v - mean);
      const double sd =
          col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0;
      if (!(sd > 0.0))
        throw DataError("degenerate column '" + ds.names[c] +
                        "': zero spread under gaussian-cdf rescale");
      rec = {RescaleMethod::gaussian_cdf, mean, sd};
    }
    for (double& v : col) v = rec.to_unit(v);
    ds.rescale.push_back(rec);
  }
  return ds;
}

// Deterministic source of uniforms and normals. mt19937_64's output sequence
// is fixed by the standard; uniforms come from explicit bit shifts and
// normals through the quantile function, so no distribution object with
// implementation-defined behavior is involved.
struct Rng {
  explicit Rng(std::uint64_t seed) : eng(seed) {}

  double uniform01() {  // strictly inside (0,1)
    return std::ldexp(static_cast<double>(eng() >> 11) + 0.5, -53);
  }
  double normal() { return normal_quantile(uniform01()); }
  std::uint64_t below(std::uint64_t m) {  // unbiased draw from [0, m)
    const std::uint64_t lim = m * (UINT64_MAX / m);
    std::uint64_t v;
    do {
      v = eng();
    } while (v >= lim);
    return v % m;
  }

  std::mt19937_64 eng;
};

// Uniform subsample of n rows without replacement, deterministic for a given
// seed. The selection keeps original row order, so n = rows() returns the
// dataset unchanged.
inline Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  const std::size_t total = ds.rows();
  if (n > total)
    throw DataError("subsample: requested " + std::to_string(n) + " of " +
                    std::to_string(total) + " rows");
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  Dataset out;
  out.names = ds.names;
  out.rescale = ds.rescale;
  out.dropped_rows = ds.dropped_rows;
  out.columns.resize(ds.columns.size());
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    out.columns[c].reserve(n);
    for (const auto i : idx) out.columns[c].push_back(ds.columns[c][i]);
  }
  return out;
}

// Synthetic benchmark laws on [0,1]^3, columns (x, y, z):
//   1  x, y, z independent uniforms
//   2  z uniform; x = g(z, e1), y = g(z, e2)      (dependence only through z)
//   3  x, z uniform; y = h(x, z, e)               (x and y dependent given z,
//                                                  independent marginally)
//   4  with prob. 0.9 a model-2 row, else z uniform, x = g(z, e1),
//      y = h(x, z, e2)                            (10% conditionally coupled)
// with g(z, e) = clamp_[0,1](z + 0.25 e), h(x, z, e) = frac(x + z + 0.1 e),
// e ~ N(0,1). Per-row draw order is fixed (documented in the code) so a seed
// pins the dataset exactly.
struct SyntheticSpec {
  int model = 1;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }
inline double frac(double v) { return v - std::floor(v); }

}  // namespace detail

// component_flags, when non-null, receives 1 for rows drawn from model 4's
// conditionally-coupled branch and 0 otherwise (all zeros for models 1-3).
inline Dataset generate(const SyntheticSpec& spec,
                        std::vector<std::uint8_t>* component_flags = nullptr) {
  if (spec.model < 1 || spec.model > 4)
    throw std::invalid_argument("generate: model must be 1..4");
  using detail::clamp01;
  using detail::frac;

  Dataset ds;
  ds.names = {"x", "y", "z"};
  ds.columns.assign(3, {});
  ds.rescale.assign(3, RescaleRecord{RescaleMethod::minmax, 0.0, 1.0});
  for (auto& col : ds.columns) col.reserve(spec.n);
  if (component_flags) component_flags->assign(spec.n, 0);

  Rng rng(spec.seed);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double x = 0.0, y = 0.0, z = 0.0;
    switch (spec.model) {
      case 1:
        z = rng.uniform01();
        x = rng.uniform01();
        y = rng.uniform01();
        break;
      case 2:
        z = rng.uniform01();
        x = clamp01(z + 0.25 * rng.normal());
        y = clamp01(z + 0.25 * rng.normal());
        break;
      case 3:
        x = rng.uniform01();
        z = rng.uniform01();
        y = frac(x + z + 0.1 * rng.normal());
        break;
      case 4: {
        const bool coupled = rng.uniform01() < 0.1;
        z = rng.uniform01();
        x = clamp01(z + 0.25 * rng.normal());
        const double e2 = rng.normal();
        y = coupled ? frac(x + z + 0.1 * e2) : clamp01(z + 0.25 * e2);
        if (coupled && component_flags) (*component_flags)[i] = 1;
        break;
      }
    }
    ds.columns[0].push_back(x);
    ds.columns[1].push_back(y);
    ds.columns[2].push_back(z);
  }
  return ds;
}

// Writes the dataset's current (unit-scaled) values with full round-trip
// precision.
inline void write_csv(const Dataset& ds, std::ostream& out) {
  for (std::size_t c = 0; c < ds.names.size(); ++c)
    out << (c ? "," : "") << ds.names[c];
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.columns.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.columns[c][r]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace bnpci::datahub
