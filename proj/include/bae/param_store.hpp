#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <string_view>

#include "bae/matrix.hpp"

namespace bae {

/// Named parameter matrices, each paired with a gradient accumulator of the
/// same shape. Slots are never relocated once added, so graph nodes may hold
/// references into the store.
class ParamStore {
 public:
  void add(std::string name, Matrix init);
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const { return slots_.size(); }
  const std::string& name(std::size_t i) const { return slots_.at(i).name; }
  Matrix& value(std::size_t i) { return slots_.at(i).value; }
  const Matrix& value(std::size_t i) const { return slots_.at(i).value; }
  Matrix& grad(std::size_t i) { return slots_.at(i).grad; }
  const Matrix& grad(std::size_t i) const { return slots_.at(i).grad; }
  Matrix& value(std::string_view name) { return value(index_of(name)); }
  const Matrix& value(std::string_view name) const { return value(index_of(name)); }
  Matrix& grad(std::string_view name) { return grad(index_of(name)); }
  const Matrix& grad(std::string_view name) const { return grad(index_of(name)); }

  void zero_grads();
  std::size_t num_scalars() const;
  double grad_norm() const;
  void scale_grads(double factor);
  bool all_finite() const;

  std::uint64_t step_count() const { return steps_; }
  void increment_step() { ++steps_; }
  void set_step_count(std::uint64_t s) { steps_ = s; }

  /// True when names, shapes and values match exactly.
  bool values_equal(const ParamStore& other) const;

 private:
  struct Slot {
    std::string name;
    Matrix value;
    Matrix grad;
  };
  std::deque<Slot> slots_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t steps_ = 0;
};

}  // namespace bae
