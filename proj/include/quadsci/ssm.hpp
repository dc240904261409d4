#pragma once

#include <cstdint>
#include <vector>

#include "quadsci/rng.hpp"
#include "quadsci/video_cube.hpp"

namespace quadsci {

inline constexpr std::size_t kDefaultStateSize = 16;
// Below this |a| the ZOH input gain uses its analytic limit delta * b.
inline constexpr double kZohLimitThreshold = 1e-8;

/// Parameters of one selective scan over `channels` independent channels,
/// each with a diagonal state of `state_size`. A = -exp(a_log) is input
/// independent; delta, B and C are projections of the current input token.
struct SsmParams {
  std::size_t channels = 0;
  std::size_t state_size = kDefaultStateSize;
  VideoCube a_log;    // channels x N
  VideoCube w_delta;  // channels x channels
  VideoCube b_delta;  // channels
  VideoCube w_b;      // N x channels
  VideoCube w_c;      // N x channels

  void validate() const;
  /// A[c][n] = -exp(a_log[c][n]).
  std::vector<double> a_matrix() const;

  static SsmParams zeros(std::size_t channels, std::size_t state_size);
  /// a_log = log(1..N), projections ~ truncated N(0, 0.02^2), delta bias so
  /// softplus(b_delta) is log-uniform in [1e-3, 1e-1].
  static SsmParams init(std::size_t channels, std::size_t state_size, rng::Stream& stream);
};

enum class ScanDirection { kForward, kBackward };

double softplus(double x);
double sigmoid(double x);

struct Discretized {
  double a_bar;
  double b_bar;
};

/// Zero-order hold: a_bar = exp(delta a), b_bar = (exp(delta a) - 1) / a * b,
/// with b_bar = delta * b when |a| < 1e-8.
Discretized discretize(double a, double b, double delta);

/// Forward intermediates kept for the backward pass. Sequences are stored in
/// scan order (reversed for ScanDirection::kBackward).
struct ScanTrace {
  std::size_t length = 0, channels = 0, state_size = 0;
  ScanDirection direction = ScanDirection::kForward;
  std::vector<double> u;      // L x channels, scan input
  std::vector<double> pre;    // L x channels, pre-softplus delta
  std::vector<double> delta;  // L x channels
  std::vector<double> b;      // L x N
  std::vector<double> c;      // L x N
  std::vector<double> h;      // channels x L x N, state after each step
  std::vector<double> a_bar;  // channels x L x N
  std::vector<double> gain;   // channels x L x N, b_bar / b
};

/// seq is L x channels; returns L x channels. No skip term: y_k = <C_k, h_k>.
VideoCube selective_scan(const VideoCube& seq, const SsmParams& params, ScanDirection dir,
                         ScanTrace* trace = nullptr);

struct ScanGrads {
  VideoCube d_seq, d_a_log, d_w_delta, d_b_delta, d_w_b, d_w_c;
};

/// Reverse-mode gradients of selective_scan given dL/dy (L x channels).
ScanGrads selective_scan_backward(const ScanTrace& trace, const SsmParams& params,
                                  const VideoCube& d_out);

/// Literal step-by-step recurrence used as a correctness reference. Refuses
/// instances above 1e6 state-steps (L * channels * N).
VideoCube dense_oracle(const VideoCube& seq, const SsmParams& params, ScanDirection dir);

inline constexpr std::size_t kOracleMaxStateSteps = 1'000'000;

/// The bare recurrence with explicit per-step sequences, all in scan order:
/// x, delta: L x channels; b, c: L x N; a: channels x N continuous A values.
/// `h0` (channels x N) is the initial state, zero when null.
struct RecurrenceResult {
  VideoCube y;      // L x channels
  VideoCube h_end;  // channels x N
};
RecurrenceResult scan_recurrence(const VideoCube& x, const VideoCube& delta, const VideoCube& b,
                                 const VideoCube& c, const VideoCube& a,
                                 const VideoCube* h0 = nullptr);

/// Multiply-adds counted for one selective scan: per step, the delta/B/C
/// projections (channels^2 + 2 N channels) and the recurrence (3 N channels).
std::uint64_t scan_multiply_adds(std::size_t length, std::size_t channels, std::size_t state_size);

}  // namespace quadsci
