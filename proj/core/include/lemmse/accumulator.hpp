#pragma once

#include "lemmse/grid.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace lemmse {

/// Streaming form of sum_i exp(l_i) * (1, x_i), kept as exp(m) * (s, v) with
/// m the largest log weight seen so far.
class WeightedMeanAccumulator {
public:
  WeightedMeanAccumulator() = default;
  explicit WeightedMeanAccumulator(Index dim);

  Index dim() const { return sum_.size(); }
  Index count() const { return count_; }
  double running_max() const { return max_; }
  double scaled_weight_sum() const { return weight_; }
  const Vector &scaled_value_sum() const { return sum_; }

  /// -inf log weights are ignored. Throws DimensionMismatch.
  void accumulate(double log_weight, const Vector &value);
  void accumulate(double log_weight, const double *value, Index stride = 1);

  /// Block insert: raises the reference to `block_max` once, then add()
  /// takes weights already scaled by exp(-reference()).
  void rebase(double block_max);
  double reference() const { return max_; }
  void add(double scaled_weight, const double *value, Index stride = 1) {
    weight_ += scaled_weight;
    for (Index i = 0; i < sum_.size(); ++i) {
      sum_[i] += scaled_weight * value[i * stride];
    }
  }
  void note_inserted(Index n) { count_ += n; }
  /// Pre-reduced block of `inserted` components, scaled like add().
  void add_reduced(double scaled_weight, const Vector &scaled_values, Index inserted) {
    weight_ += scaled_weight;
    sum_ += scaled_values;
    count_ += inserted;
  }

  void merge(const WeightedMeanAccumulator &other);

  /// Weighted mean; throws AllWeightsOffSupport when nothing was inserted.
  Vector finalize() const;
  /// log sum_i exp(l_i); -inf when empty.
  double log_normalizer() const;

private:
  double max_ = -std::numeric_limits<double>::infinity();
  double weight_ = 0.0;
  Vector sum_;
  Index count_ = 0;
};

/// A single mixture component kept for diagnostics.
struct Component {
  double log_weight = 0.0;
  Index image = 0;
  /// Source pixel (patch estimators) or flat translation index (E-MMSE and
  /// augmented MMSE); -1 when the component has no location.
  Index source = -1;
};

/// Keeps the k largest log weights; k < 0 keeps everything.
class TopK {
public:
  TopK() = default;
  explicit TopK(Index k) : k_(k) {}

  Index capacity() const { return k_; }
  bool enabled() const { return k_ != 0; }
  /// Log weight a candidate must exceed to enter a full heap.
  double threshold() const;
  void push(const Component &c);
  void merge(const TopK &other);
  /// Retained components sorted by decreasing log weight, then (image, source).
  std::vector<Component> sorted() const;
  std::size_t size() const { return heap_.size(); }

private:
  Index k_ = 0;
  std::vector<Component> heap_;
};

/// Zero-noise limit: the value of the closest component, averaging every
/// component within tie_tolerance of the minimum distance.
class NearestAccumulator {
public:
  NearestAccumulator() = default;
  NearestAccumulator(Index dim, double tie_tolerance);

  Index dim() const { return dim_; }
  double min_distance() const { return min_; }
  bool empty() const { return candidates_.empty(); }
  bool accepts(double distance) const { return distance <= min_ + tie_tolerance_; }

  void accumulate(double distance, const double *value, Index stride, Index image, Index source);
  void accumulate(double distance, const Vector &value, Index image = 0, Index source = -1);
  void merge(const NearestAccumulator &other);

  /// Throws AllWeightsOffSupport when empty.
  Vector finalize() const;
  /// Tied components, each with log weight -log(#ties).
  std::vector<Component> winners() const;

private:
  struct Candidate {
    double distance;
    Index image;
    Index source;
    std::vector<double> value;
  };
  void prune();

  Index dim_ = 0;
  double tie_tolerance_ = 1e-9;
  double min_ = std::numeric_limits<double>::infinity();
  std::vector<Candidate> candidates_;
};

} // namespace lemmse
