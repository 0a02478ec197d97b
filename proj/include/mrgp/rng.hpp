#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace mrgp {

// Counter-based random stream. Every output is a pure function of
// (key, stream, counter), so any stream can be re-addressed from its seed and
// id without replaying earlier draws. Satisfies UniformRandomBitGenerator, so
// the <random> distributions can be layered on top.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Child stream addressed by `id`; independent of this stream's position.
  RngStream split(std::uint64_t id) const;

  double uniform();                     // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  long uniform_int(long lo, long hi);  // inclusive bounds
  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mrgp
