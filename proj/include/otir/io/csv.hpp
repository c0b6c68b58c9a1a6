#pragma once

// Cohort CSV ingestion and the small CSV writers shared by the commands.
//
// Input columns: id, time, event, init_time, then covariates named
// bin:<name> or num:<name>. An empty init_time is the only encoding of an
// unobserved initiation. Row numbers in diagnostics count data rows from 1.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <boost/tokenizer.hpp>

#include "otir/error.hpp"
#include "otir/format.hpp"
#include "otir/survival.hpp"

namespace otir::io {

struct LoadedCohort {
  CohortDataset dataset;
  std::vector<std::string> ids;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
  std::vector<std::string> out(tok.begin(), tok.end());
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Strict decimal parse: the whole field must be a finite number.
inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline LoadedCohort read_cohort_csv(std::istream& in, const StudyWindow& window) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "input CSV is empty (no header row)");
  const auto header = split_csv_line(line);

  std::unordered_map<std::string, std::size_t> position;
  std::vector<Covariate> covariates;
  std::vector<std::size_t> covariate_columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name(trim(header[c]));
    if (!position.emplace(name, c).second)
      throw Error(ErrorKind::ParseError, "duplicate column '" + name + "'");
    if (name.rfind("bin:", 0) == 0 || name.rfind("num:", 0) == 0) {
      const std::string bare = name.substr(4);
      if (bare.empty()) throw Error(ErrorKind::ParseError, "covariate column '" + name + "' has no name");
      covariates.push_back({bare, name[0] == 'b' ? CovariateKind::binary : CovariateKind::continuous});
      covariate_columns.push_back(c);
    } else if (name != "id" && name != "time" && name != "event" && name != "init_time") {
      throw Error(ErrorKind::ParseError,
                  "unexpected column '" + name + "' (covariates need a bin: or num: prefix)");
    }
  }
  for (const char* required : {"id", "time", "event", "init_time"})
    if (!position.count(required))
      throw Error(ErrorKind::ParseError, std::string("missing required column '") + required + "'");
  if (covariates.empty())
    throw Error(ErrorKind::ParseError, "no covariate columns (expected bin:<name> or num:<name>)");
  CovariateSchema schema(std::move(covariates));

  const std::size_t col_id = position["id"];
  const std::size_t col_time = position["time"];
  const std::size_t col_event = position["event"];
  const std::size_t col_init = position["init_time"];

  std::vector<SubjectRecord> records;
  std::vector<std::string> ids;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorKind::ParseError,
                  "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()),
                  row);
    auto number = [&](std::size_t c, const std::string& what) {
      const auto v = parse_number(fields[c]);
      if (!v) throw Error(ErrorKind::ParseError, what + " '" + fields[c] + "' is not a finite number", row);
      return *v;
    };

    SubjectRecord r;
    r.followup = number(col_time, "time");
    const std::string_view ev = trim(fields[col_event]);
    if (ev != "0" && ev != "1")
      throw Error(ErrorKind::ParseError, "event must be 0 or 1, got '" + fields[col_event] + "'", row);
    r.event = ev == "1";
    if (!trim(fields[col_init]).empty()) r.init_time = number(col_init, "init_time");
    for (std::size_t c : covariate_columns) r.covariates.push_back(number(c, "covariate '" + header[c] + "'"));

    validate_record(r, schema, window, row);
    ids.emplace_back(trim(fields[col_id]));
    records.push_back(std::move(r));
  }
  if (records.empty()) throw Error(ErrorKind::EmptyDataset, "input CSV has no data rows");
  return {validate_cohort(std::move(records), std::move(schema), window), std::move(ids)};
}

inline LoadedCohort read_cohort_csv(const std::string& path, const StudyWindow& window) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open data file '" + path + "'");
  return read_cohort_csv(in, window);
}

/// Writes a cohort in the ingestion format; ids are 1-based positions when
/// none are given.
inline void write_cohort_csv(std::ostream& os, const CohortDataset& dataset,
                             const std::vector<std::string>& ids = {}) {
  os << "id,time,event,init_time";
  for (const auto& c : dataset.schema().entries())
    os << ',' << (c.kind == CovariateKind::binary ? "bin:" : "num:") << c.name;
  os << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    os << (ids.empty() ? std::to_string(i + 1) : ids[i]) << ',' << format_number(r.followup) << ','
       << (r.event ? 1 : 0) << ',';
    if (r.init_time) os << format_number(*r.init_time);
    for (double v : r.covariates) os << ',' << format_number(v);
    os << '\n';
  }
}

}  // namespace otir::io
