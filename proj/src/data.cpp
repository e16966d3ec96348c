#include "causalshift/data.hpp"

#include <charconv>
#include <sstream>

#include "causalshift/errors.hpp"

namespace causalshift {

SampleMatrix::SampleMatrix(std::size_t width, std::vector<int> values)
    : width_(width), values_(std::move(values)) {
  if (width_ == 0 ? !values_.empty() : values_.size() % width_ != 0)
    throw ParameterError("sample matrix: value count is not a multiple of the width");
}

void SampleMatrix::push_back(std::span<const int> sample) {
  if (sample.size() != width_) throw ParameterError("sample matrix: sample width mismatch");
  values_.insert(values_.end(), sample.begin(), sample.end());
}

SampleMatrix SampleMatrix::select(std::span<const std::size_t> indices) const {
  SampleMatrix out(width_);
  out.reserve(indices.size());
  for (std::size_t r : indices) out.push_back(row(r));
  return out;
}

SampleMatrix SampleMatrix::slice(std::size_t begin, std::size_t end) const {
  return SampleMatrix(width_, std::vector<int>(values_.begin() + static_cast<std::ptrdiff_t>(begin * width_),
                                               values_.begin() + static_cast<std::ptrdiff_t>(end * width_)));
}

std::string to_csv(std::span<const Dataset> datasets) {
  std::ostringstream os;
  const std::size_t width = datasets.empty() ? 0 : datasets.front().samples.width();
  os << "regime,target,value";
  for (std::size_t c = 0; c < width; ++c) os << ",x" << c;
  os << '\n';
  for (const Dataset& d : datasets) {
    if (d.samples.width() != width) throw ParameterError("to_csv: datasets differ in width");
    for (std::size_t r = 0; r < d.size(); ++r) {
      if (!d.intervention) {
        os << "obs,,";
      } else if (d.intervention->uniform()) {
        os << "int_uniform," << d.intervention->target << ',';
      } else {
        os << "int," << d.intervention->target << ',' << *d.intervention->value;
      }
      for (int v : d.samples.row(r)) os << ',' << v;
      os << '\n';
    }
  }
  return os.str();
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

long long parse_int(std::string_view field, std::size_t line_no) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || v < 0)
    throw ParameterError("csv line " + std::to_string(line_no) + ": bad integer '" +
                         std::string(field) + "'");
  return v;
}

}  // namespace

std::vector<Dataset> parse_csv(std::string_view text) {
  std::vector<Dataset> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::vector<int> row;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (line_no == 1) {
      if (fields.size() < 3 || fields[0] != "regime" || fields[1] != "target" || fields[2] != "value")
        throw ParameterError("csv: header must start with regime,target,value");
      width = fields.size() - 3;
      continue;
    }
    if (fields.size() != width + 3)
      throw ParameterError("csv line " + std::to_string(line_no) + ": wrong field count");

    std::optional<Intervention> regime;
    if (fields[0] == "obs") {
      if (!fields[1].empty() || !fields[2].empty())
        throw ParameterError("csv line " + std::to_string(line_no) +
                             ": observational rows must have empty target/value");
    } else if (fields[0] == "int" || fields[0] == "int_uniform") {
      Intervention iv;
      iv.target = static_cast<std::size_t>(parse_int(fields[1], line_no));
      if (iv.target >= width)
        throw ParameterError("csv line " + std::to_string(line_no) + ": intervention target out of range");
      if (fields[0] == "int") iv.value = static_cast<int>(parse_int(fields[2], line_no));
      regime = iv;
    } else {
      throw ParameterError("csv line " + std::to_string(line_no) + ": unknown regime '" +
                           std::string(fields[0]) + "'");
    }

    row.clear();
    for (std::size_t c = 0; c < width; ++c)
      row.push_back(static_cast<int>(parse_int(fields[c + 3], line_no)));

    if (regime && regime->value && row[regime->target] != *regime->value)
      throw ParameterError("csv line " + std::to_string(line_no) + ": intervened column differs from the value");
    if (out.empty() || out.back().intervention != regime) {
      out.push_back(Dataset{SampleMatrix(width), regime});
    }
    out.back().samples.push_back(row);
  }
  return out;
}

}  // namespace causalshift
