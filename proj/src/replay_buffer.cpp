#include "ofexi/replay_buffer.hpp"

#include <stdexcept>

namespace ofexi {

ReplayBuffer::ReplayBuffer(std::size_t capacity, Eigen::Index d_o, Eigen::Index d_a)
    : obs(Tensor2::Zero(static_cast<Eigen::Index>(capacity), d_o)),
      act(Tensor2::Zero(static_cast<Eigen::Index>(capacity), d_a)),
      reward(Tensor2::Zero(static_cast<Eigen::Index>(capacity), 1)),
      next_obs(Tensor2::Zero(static_cast<Eigen::Index>(capacity), d_o)),
      terminal(Tensor2::Zero(static_cast<Eigen::Index>(capacity), 1)),
      capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add(const Transition& t) {
  if (t.obs.size() != obs.cols() || t.next_obs.size() != obs.cols() || t.act.size() != act.cols()) {
    throw DimensionError("ReplayBuffer::add: transition shape mismatch");
  }
  const auto i = static_cast<Eigen::Index>(cursor_);
  obs.row(i) = t.obs;
  act.row(i) = t.act;
  reward(i, 0) = t.reward;
  next_obs.row(i) = t.next_obs;
  terminal(i, 0) = t.terminal ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

std::size_t ReplayBuffer::sample_index(Rng& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
  const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(size_));
  return k < size_ ? k : size_ - 1;
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = sample_index(rng);
  return gather(idx);
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& idx) const {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Batch b{Tensor2(n, obs.cols()), Tensor2(n, act.cols()), Tensor2(n, 1), Tensor2(n, obs.cols()),
          Tensor2(n, 1)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    b.obs.row(r) = obs.row(i);
    b.act.row(r) = act.row(i);
    b.reward(r, 0) = reward(i, 0);
    b.next_obs.row(r) = next_obs.row(i);
    b.not_done(r, 0) = 1.0 - terminal(i, 0);
  }
  return b;
}

void ReplayBuffer::restore(std::size_t size, std::size_t cursor) {
  if (size > capacity_ || cursor >= capacity_) {
    throw std::invalid_argument("ReplayBuffer::restore: size/cursor out of range");
  }
  size_ = size;
  cursor_ = cursor;
}

}  // namespace ofexi
