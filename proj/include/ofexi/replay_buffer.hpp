#pragma once

#include <cstddef>
#include <vector>

#include "ofexi/core_math.hpp"

namespace ofexi {

struct Transition {
  RowVec obs;
  RowVec act;  // squashed, in (-1, 1)
  double reward = 0.0;
  RowVec next_obs;
  bool terminal = false;
};

struct Batch {
  Tensor2 obs;
  Tensor2 act;
  Tensor2 reward;    // N x 1
  Tensor2 next_obs;
  Tensor2 not_done;  // N x 1
};

/// FIFO ring buffer with uniform sampling over the filled region.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, Eigen::Index d_o, Eigen::Index d_a);

  void add(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }

  std::size_t sample_index(Rng& rng) const;
  Batch sample(std::size_t n, Rng& rng) const;
  Batch gather(const std::vector<std::size_t>& idx) const;

  // Raw storage, exposed for checkpoints.
  Tensor2 obs, act, reward, next_obs, terminal;
  void restore(std::size_t size, std::size_t cursor);

 private:
  std::size_t capacity_ = 0;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace ofexi
