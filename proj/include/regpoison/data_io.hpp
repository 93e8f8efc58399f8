#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regpoison/model.hpp"
#include "regpoison/rng.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

enum class ColumnRole { NumericFeature, CategoricalFeature, Response, Ignore };

struct ColumnSchema {
  std::string name;
  ColumnRole role = ColumnRole::NumericFeature;
};

// Raw table as loaded: numeric columns parsed, categorical kept as strings,
// both vectors indexed like `schema` (unused slots stay empty).
struct RawTable {
  std::vector<ColumnSchema> schema;
  std::vector<std::vector<double>> numeric;
  std::vector<std::vector<std::string>> text;
  std::size_t rows = 0;
};

namespace detail {

inline std::string trim_ws(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim_ws(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_number(const std::string& cell, std::size_t row,
                           const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || cell.empty()) {
    throw DataError("row " + std::to_string(row) + ", column '" + column +
                    "': cannot parse '" + cell + "' as a number");
  }
  return value;
}

// Shortest exact decimal form; round-trips through parse_number.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

// Reads a comma-separated file with a header row. Every schema column must
// appear in the header; extra file columns are ignored. Numeric and
// response cells must parse fully as numbers.
inline RawTable load_csv(const std::string& path,
                         const std::vector<ColumnSchema>& schema) {
  if (schema.empty()) throw ConfigError("load_csv: empty schema");
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("load_csv: '" + path + "' is empty");
  }
  const std::vector<std::string> header = detail::split_line(line);
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < header.size(); ++i) by_name[header[i]] = i;

  RawTable table;
  table.schema = schema;
  table.numeric.resize(schema.size());
  table.text.resize(schema.size());
  std::vector<std::size_t> file_col(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto it = by_name.find(schema[c].name);
    if (it == by_name.end()) {
      throw DataError("load_csv: column '" + schema[c].name +
                      "' not found in header of '" + path + "'");
    }
    file_col[c] = it->second;
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    ++row;
    const std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("load_csv: row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string& cell = cells[file_col[c]];
      switch (schema[c].role) {
        case ColumnRole::NumericFeature:
        case ColumnRole::Response:
          table.numeric[c].push_back(
              detail::parse_number(cell, row, schema[c].name));
          break;
        case ColumnRole::CategoricalFeature:
          table.text[c].push_back(cell);
          break;
        case ColumnRole::Ignore:
          break;
      }
    }
  }
  table.rows = row;
  if (table.rows == 0) throw DataError("load_csv: '" + path + "' has no rows");
  return table;
}

// Per-column transformation learned by preprocess(): min-max rescaling for
// numeric columns (constant columns are dropped), one indicator per sorted
// distinct value for categorical columns.
struct ColumnTransform {
  enum class Kind { MinMax, OneHot, Drop };
  std::string name;
  Kind kind = Kind::MinMax;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> categories;
};

struct TransformRecord {
  std::vector<ColumnTransform> features;  // in schema order
  ColumnTransform response;
};

struct ApplyResult {
  Dataset data;
  std::vector<std::string> feature_names;
  Index out_of_range = 0;       // rescaled values outside [0,1]
  Index unseen_categories = 0;  // categorical cells with no indicator
};

// Applies a learned transform to a raw table (e.g. held-out rows). Values
// outside the recorded ranges are kept as-is, not clipped, and counted.
inline ApplyResult apply_transform(const TransformRecord& record,
                                   const RawTable& raw) {
  std::size_t fi = 0;  // feature slot in the record, advanced per column
  std::vector<std::vector<double>> cols;
  std::vector<std::string> names;
  ApplyResult result;

  const auto rescale = [&](const ColumnTransform& t,
                           const std::vector<double>& values) {
    std::vector<double> out(values.size());
    const double width = t.max - t.min;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = (values[i] - t.min) / width;
      if (out[i] < 0.0 || out[i] > 1.0) ++result.out_of_range;
    }
    return out;
  };

  std::vector<double> response;
  for (std::size_t c = 0; c < raw.schema.size(); ++c) {
    const ColumnSchema& col = raw.schema[c];
    if (col.role == ColumnRole::Ignore) continue;
    if (col.role == ColumnRole::Response) {
      if (record.response.name != col.name ||
          record.response.kind != ColumnTransform::Kind::MinMax) {
        throw DataError("apply_transform: response column mismatch ('" +
                        col.name + "')");
      }
      response = rescale(record.response, raw.numeric[c]);
      continue;
    }
    if (fi >= record.features.size() ||
        record.features[fi].name != col.name) {
      throw DataError("apply_transform: schema does not match the recorded "
                      "transform at column '" + col.name + "'");
    }
    const ColumnTransform& t = record.features[fi++];
    switch (t.kind) {
      case ColumnTransform::Kind::Drop:
        break;
      case ColumnTransform::Kind::MinMax:
        cols.push_back(rescale(t, raw.numeric[c]));
        names.push_back(col.name);
        break;
      case ColumnTransform::Kind::OneHot: {
        std::vector<std::vector<double>> hot(
            t.categories.size(), std::vector<double>(raw.rows, 0.0));
        for (std::size_t i = 0; i < raw.rows; ++i) {
          const std::string& v = raw.text[c][i];
          const auto it =
              std::find(t.categories.begin(), t.categories.end(), v);
          if (it == t.categories.end()) {
            ++result.unseen_categories;
          } else {
            hot[static_cast<std::size_t>(it - t.categories.begin())][i] = 1.0;
          }
        }
        for (std::size_t k = 0; k < t.categories.size(); ++k) {
          cols.push_back(std::move(hot[k]));
          names.push_back(col.name + "=" + t.categories[k]);
        }
        break;
      }
    }
  }
  if (fi != record.features.size()) {
    throw DataError("apply_transform: transform has more columns than the "
                    "table");
  }
  if (response.empty()) {
    throw DataError("apply_transform: no response column in schema");
  }
  if (cols.empty()) throw DataError("apply_transform: no usable features");

  result.feature_names = std::move(names);
  result.data.X.resize(static_cast<Index>(raw.rows),
                       static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t i = 0; i < raw.rows; ++i) {
      result.data.X(static_cast<Index>(i), static_cast<Index>(j)) = cols[j][i];
    }
  }
  result.data.y =
      Eigen::Map<Eigen::VectorXd>(response.data(), static_cast<Index>(raw.rows));
  return result;
}

struct PreprocessResult {
  Dataset data;
  TransformRecord transform;
  std::vector<std::string> feature_names;
  std::vector<std::string> warnings;
};

// Learns the transform from a raw table and applies it: numeric features
// min-max rescaled to [0,1] (constant columns dropped with a warning),
// categoricals one-hot encoded over lexicographically sorted values, the
// response min-max rescaled. The transformed data comes from the same code
// path as apply_transform, so learned-and-applied results match bit for bit.
inline PreprocessResult preprocess(const RawTable& raw) {
  PreprocessResult result;
  bool has_response = false;

  for (std::size_t c = 0; c < raw.schema.size(); ++c) {
    const ColumnSchema& col = raw.schema[c];
    ColumnTransform t;
    t.name = col.name;
    switch (col.role) {
      case ColumnRole::Ignore:
        continue;
      case ColumnRole::NumericFeature: {
        const auto& v = raw.numeric[c];
        t.min = *std::min_element(v.begin(), v.end());
        t.max = *std::max_element(v.begin(), v.end());
        if (t.max == t.min) {
          t.kind = ColumnTransform::Kind::Drop;
          result.warnings.push_back("column '" + col.name +
                                    "' is constant; dropped");
        } else {
          t.kind = ColumnTransform::Kind::MinMax;
        }
        result.transform.features.push_back(std::move(t));
        break;
      }
      case ColumnRole::CategoricalFeature: {
        std::set<std::string> values(raw.text[c].begin(), raw.text[c].end());
        t.kind = ColumnTransform::Kind::OneHot;
        t.categories.assign(values.begin(), values.end());
        result.transform.features.push_back(std::move(t));
        break;
      }
      case ColumnRole::Response: {
        const auto& v = raw.numeric[c];
        t.min = *std::min_element(v.begin(), v.end());
        t.max = *std::max_element(v.begin(), v.end());
        if (t.max == t.min) {
          throw DataError("preprocess: response column '" + col.name +
                          "' is constant");
        }
        t.kind = ColumnTransform::Kind::MinMax;
        result.transform.response = std::move(t);
        has_response = true;
        break;
      }
    }
  }
  if (!has_response) throw DataError("preprocess: schema has no response");

  ApplyResult applied = apply_transform(result.transform, raw);
  result.data = std::move(applied.data);
  result.feature_names = std::move(applied.feature_names);
  return result;
}

inline nlohmann::json transform_to_json(const TransformRecord& record) {
  const auto column = [](const ColumnTransform& t) {
    nlohmann::json j;
    j["name"] = t.name;
    switch (t.kind) {
      case ColumnTransform::Kind::MinMax:
        j["kind"] = "minmax";
        j["min"] = t.min;
        j["max"] = t.max;
        break;
      case ColumnTransform::Kind::OneHot:
        j["kind"] = "onehot";
        j["categories"] = t.categories;
        break;
      case ColumnTransform::Kind::Drop:
        j["kind"] = "drop";
        break;
    }
    return j;
  };
  nlohmann::json j;
  j["features"] = nlohmann::json::array();
  for (const ColumnTransform& t : record.features) {
    j["features"].push_back(column(t));
  }
  j["response"] = column(record.response);
  return j;
}

inline TransformRecord transform_from_json(const nlohmann::json& j) {
  const auto column = [](const nlohmann::json& c) {
    ColumnTransform t;
    t.name = c.at("name").get<std::string>();
    const std::string kind = c.at("kind").get<std::string>();
    if (kind == "minmax") {
      t.kind = ColumnTransform::Kind::MinMax;
      t.min = c.at("min").get<double>();
      t.max = c.at("max").get<double>();
    } else if (kind == "onehot") {
      t.kind = ColumnTransform::Kind::OneHot;
      t.categories = c.at("categories").get<std::vector<std::string>>();
    } else if (kind == "drop") {
      t.kind = ColumnTransform::Kind::Drop;
    } else {
      throw DataError("transform_from_json: unknown kind '" + kind + "'");
    }
    return t;
  };
  try {
    TransformRecord record;
    for (const auto& c : j.at("features")) {
      record.features.push_back(column(c));
    }
    record.response = column(j.at("response"));
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("transform_from_json: ") + e.what());
  }
}

struct SplitSpec {
  double train_fraction = 1.0 / 3.0;
  double test_fraction = 1.0 / 3.0;
  double val_fraction = 1.0 / 3.0;
  int runs = 1;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  Dataset val;
};

// Seeded permutation split: run_index selects an independent permutation,
// then contiguous blocks become train / test / val.
inline SplitResult split(const Dataset& data, const SplitSpec& spec,
                         int run_index) {
  check_shapes(data, "split");
  if (std::abs(spec.train_fraction + spec.test_fraction + spec.val_fraction -
               1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
  if (spec.runs < 1) throw ConfigError("split: runs must be >= 1");
  if (run_index < 0 || run_index >= spec.runs) {
    throw ConfigError("split: run_index " + std::to_string(run_index) +
                      " out of range for runs = " + std::to_string(spec.runs));
  }
  const Index n = data.n();
  if (n < 3) throw DataError("split: need at least 3 rows");

  std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(run_index)));
  const std::vector<Index> perm = shuffled_indices(n, rng);
  const Index a = static_cast<Index>(
      std::llround(spec.train_fraction * static_cast<double>(n)));
  const Index b = static_cast<Index>(std::llround(
      (spec.train_fraction + spec.test_fraction) * static_cast<double>(n)));
  if (a < 1 || b <= a || b >= n) {
    throw DataError("split: a fraction leaves an empty part for n = " +
                    std::to_string(n));
  }

  const auto block = [&](Index lo, Index hi) {
    std::vector<Index> rows(perm.begin() + lo, perm.begin() + hi);
    Dataset out;
    out.X.resize(hi - lo, data.d());
    out.y.resize(hi - lo);
    for (Index i = 0; i < hi - lo; ++i) {
      out.X.row(i) = data.X.row(rows[static_cast<std::size_t>(i)]);
      out.y(i) = data.y(rows[static_cast<std::size_t>(i)]);
    }
    return out;
  };
  return {block(0, a), block(a, b), block(b, n)};
}

struct SynthResult {
  Dataset data;
  Theta truth;  // generating parameters, expressed on the rescaled response
};

// Synthetic linear data: X ~ U[0,1]^d, y = X w* + b* + N(0, sigma) with
// w*, b* ~ U[-1,1], then y min-max rescaled to [0,1]. `truth` restates
// (w*, b*) in the rescaled units so fits can be compared against it.
inline SynthResult synth_linear(Index n, Index d, double sigma,
                                std::uint64_t seed) {
  if (d < 1) throw ConfigError("synth_linear: d must be >= 1");
  if (n < d + 2) {
    throw ConfigError("synth_linear: n must be >= d+2 = " +
                      std::to_string(d + 2));
  }
  if (!(sigma >= 0.0)) throw ConfigError("synth_linear: sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SynthResult result;
  result.truth.w.resize(d);
  for (Index j = 0; j < d; ++j) result.truth.w(j) = sym(rng);
  result.truth.b = sym(rng);

  result.data.X.resize(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) result.data.X(i, j) = unit(rng);
  }
  result.data.y = predict(result.truth, result.data.X);
  if (sigma > 0.0) {
    for (Index i = 0; i < n; ++i) result.data.y(i) += sigma * noise(rng);
  }

  const double lo = result.data.y.minCoeff();
  const double hi = result.data.y.maxCoeff();
  if (hi - lo < 1e-12) {
    throw NumericalError("synth_linear: degenerate response range");
  }
  result.data.y = (result.data.y.array() - lo) / (hi - lo);
  result.truth.w /= hi - lo;
  result.truth.b = (result.truth.b - lo) / (hi - lo);
  return result;
}

// Writes a dataset in the same dialect load_csv reads; numbers round-trip
// exactly.
inline void write_csv(const std::string& path, const Dataset& data,
                      const std::vector<std::string>& feature_names,
                      const std::string& response_name = "y") {
  check_shapes(data, "write_csv");
  if (static_cast<Index>(feature_names.size()) != data.d()) {
    throw ConfigError("write_csv: feature_names size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open '" + path + "' for write");
  for (const std::string& name : feature_names) out << name << ',';
  out << response_name << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.d(); ++j) {
      out << detail::format_number(data.X(i, j)) << ',';
    }
    out << detail::format_number(data.y(i)) << '\n';
  }
  if (!out) throw DataError("write_csv: write to '" + path + "' failed");
}

inline std::vector<std::string> default_feature_names(Index d) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

}  // namespace regpoison
