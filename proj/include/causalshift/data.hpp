#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace causalshift {

/// Row-major table of categorical samples: rows() samples of `width()`
/// variables, each value a category index in [0, K).
class SampleMatrix {
 public:
  SampleMatrix() = default;
  explicit SampleMatrix(std::size_t width) : width_(width) {}
  SampleMatrix(std::size_t width, std::vector<int> values);

  std::size_t width() const noexcept { return width_; }
  std::size_t rows() const noexcept { return width_ == 0 ? 0 : values_.size() / width_; }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const int> row(std::size_t r) const noexcept {
    return {values_.data() + r * width_, width_};
  }
  int operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * width_ + c]; }

  void push_back(std::span<const int> sample);
  void reserve(std::size_t rows) { values_.reserve(rows * width_); }

  /// New matrix holding the selected rows, in the given order.
  SampleMatrix select(std::span<const std::size_t> indices) const;
  /// Rows [begin, end).
  SampleMatrix slice(std::size_t begin, std::size_t end) const;

  const std::vector<int>& values() const noexcept { return values_; }

  friend bool operator==(const SampleMatrix&, const SampleMatrix&) = default;

 private:
  std::size_t width_ = 0;
  std::vector<int> values_;
};

/// Point intervention do(X_target). A missing value means the target is
/// redrawn uniformly over the K categories for every sample.
struct Intervention {
  std::size_t target = 0;
  std::optional<int> value;

  bool uniform() const noexcept { return !value.has_value(); }
  friend bool operator==(const Intervention&, const Intervention&) = default;
};

/// Samples plus the regime they were drawn under.
struct Dataset {
  SampleMatrix samples;
  std::optional<Intervention> intervention;  ///< empty => observational

  bool interventional() const noexcept { return intervention.has_value(); }
  std::size_t size() const noexcept { return samples.rows(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Datasets as CSV with header `regime,target,value,x0,...,x{N-1}`.
///
/// regime is `obs`, `int` (fixed value) or `int_uniform` (value redrawn per
/// sample, value column empty). target/value are empty for observational
/// rows. Consecutive rows with the same regime/target/value form a dataset.
std::string to_csv(std::span<const Dataset> datasets);
std::vector<Dataset> parse_csv(std::string_view text);

}  // namespace causalshift
