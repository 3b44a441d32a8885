#include "lemmse/accumulator.hpp"

#include "lemmse/error.hpp"

#include <algorithm>
#include <cmath>

namespace lemmse {

namespace {

// Min-heap on log weight; ties broken so that the heap content is a pure
// function of the inserted multiset.
bool heap_less(const Component &a, const Component &b) {
  if (a.log_weight != b.log_weight) {
    return a.log_weight > b.log_weight;
  }
  if (a.image != b.image) {
    return a.image < b.image;
  }
  return a.source < b.source;
}

} // namespace

WeightedMeanAccumulator::WeightedMeanAccumulator(Index dim) : sum_(Vector::Zero(dim)) {}

void WeightedMeanAccumulator::rebase(double block_max) {
  if (!(block_max > max_)) {
    return;
  }
  if (weight_ > 0.0) {
    const double s = std::exp(max_ - block_max);
    weight_ *= s;
    sum_ *= s;
  }
  max_ = block_max;
}

void WeightedMeanAccumulator::accumulate(double log_weight, const double *value, Index stride) {
  if (log_weight == -std::numeric_limits<double>::infinity()) {
    return;
  }
  rebase(log_weight);
  add(std::exp(log_weight - max_), value, stride);
  ++count_;
}

void WeightedMeanAccumulator::accumulate(double log_weight, const Vector &value) {
  if (value.size() != sum_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "accumulated value has the wrong length");
  }
  accumulate(log_weight, value.data(), 1);
}

void WeightedMeanAccumulator::merge(const WeightedMeanAccumulator &other) {
  if (other.sum_.size() != sum_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cannot merge accumulators of different length");
  }
  if (other.weight_ == 0.0) {
    count_ += other.count_;
    return;
  }
  rebase(other.max_);
  const double s = std::exp(other.max_ - max_);
  weight_ += s * other.weight_;
  sum_ += s * other.sum_;
  count_ += other.count_;
}

Vector WeightedMeanAccumulator::finalize() const {
  if (!(weight_ > 0.0)) {
    throw Error(ErrorCode::AllWeightsOffSupport, "no on-support component received weight");
  }
  return sum_ / weight_;
}

double WeightedMeanAccumulator::log_normalizer() const {
  if (!(weight_ > 0.0)) {
    return -std::numeric_limits<double>::infinity();
  }
  return max_ + std::log(weight_);
}

double TopK::threshold() const {
  if (k_ < 0 || static_cast<Index>(heap_.size()) < k_) {
    return -std::numeric_limits<double>::infinity();
  }
  return heap_.front().log_weight;
}

void TopK::push(const Component &c) {
  if (k_ == 0 || c.log_weight == -std::numeric_limits<double>::infinity()) {
    return;
  }
  if (k_ < 0 || static_cast<Index>(heap_.size()) < k_) {
    heap_.push_back(c);
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
    return;
  }
  if (!heap_less(c, heap_.front())) {
    return;
  }
  std::pop_heap(heap_.begin(), heap_.end(), heap_less);
  heap_.back() = c;
  std::push_heap(heap_.begin(), heap_.end(), heap_less);
}

void TopK::merge(const TopK &other) {
  for (const auto &c : other.heap_) {
    push(c);
  }
}

std::vector<Component> TopK::sorted() const {
  std::vector<Component> out = heap_;
  std::sort(out.begin(), out.end(), heap_less);
  return out;
}

NearestAccumulator::NearestAccumulator(Index dim, double tie_tolerance) : dim_(dim), tie_tolerance_(tie_tolerance) {}

void NearestAccumulator::accumulate(double distance, const double *value, Index stride, Index image, Index source) {
  if (!(distance <= min_ + tie_tolerance_)) {
    return;
  }
  Candidate c{distance, image, source, std::vector<double>(static_cast<std::size_t>(dim_))};
  for (Index i = 0; i < dim_; ++i) {
    c.value[static_cast<std::size_t>(i)] = value[i * stride];
  }
  candidates_.push_back(std::move(c));
  if (distance < min_) {
    min_ = distance;
    prune();
  }
}

void NearestAccumulator::accumulate(double distance, const Vector &value, Index image, Index source) {
  if (value.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "accumulated value has the wrong length");
  }
  accumulate(distance, value.data(), 1, image, source);
}

void NearestAccumulator::prune() {
  std::erase_if(candidates_, [&](const Candidate &c) { return c.distance > min_ + tie_tolerance_; });
}

void NearestAccumulator::merge(const NearestAccumulator &other) {
  for (const auto &c : other.candidates_) {
    accumulate(c.distance, c.value.data(), 1, c.image, c.source);
  }
}

Vector NearestAccumulator::finalize() const {
  if (candidates_.empty()) {
    throw Error(ErrorCode::AllWeightsOffSupport, "no on-support component in the zero-noise limit");
  }
  Vector out = Vector::Zero(dim_);
  for (const auto &c : candidates_) {
    out += Eigen::Map<const Vector>(c.value.data(), dim_);
  }
  return out / static_cast<double>(candidates_.size());
}

std::vector<Component> NearestAccumulator::winners() const {
  std::vector<Component> out;
  const double lw = -std::log(static_cast<double>(candidates_.size()));
  for (const auto &c : candidates_) {
    out.push_back({lw, c.image, c.source});
  }
  std::sort(out.begin(), out.end(), [](const Component &a, const Component &b) {
    return a.image != b.image ? a.image < b.image : a.source < b.source;
  });
  return out;
}

} // namespace lemmse
