#pragma once

#include <cstdint>
#include <utility>

#include "vmb/tensor.hpp"

namespace vmb {

/// Evaluation strategy for the selective scan. `blocked` is the production
/// path (two-pass prefix composition over the affine maps h -> a*h + b);
/// `sequential` is the reference recurrence the blocked path is checked
/// against.
enum class ScanStrategy { blocked, sequential };

/// Raw kernels over contiguous buffers.
///   x     [S, D]   scan input (per token, per channel)
///   delta [S, D]   positive step sizes
///   a     [D, N]   diagonal state matrix (strictly negative for stability)
///   b     [S, N]   input-conditioned input projection
///   c     [S, N]   input-conditioned readout
///   y     [S, D]   output, overwritten
/// Recurrence per channel d and state n:
///   abar = exp(delta[t,d] * a[d,n]);  h = abar*h + delta[t,d]*b[t,n]*x[t,d]
///   y[t,d] = sum_n c[t,n] * h[t,d,n]
void selective_scan_sequential(const double* x, const double* delta, const double* a,
                               const double* b, const double* c, double* y, std::int64_t s,
                               std::int64_t d, std::int64_t n);
void selective_scan_blocked(const double* x, const double* delta, const double* a,
                            const double* b, const double* c, double* y, std::int64_t s,
                            std::int64_t d, std::int64_t n);

/// Per-token discretization of the continuous operands: abar = exp(delta*A)
/// elementwise on the diagonal, bbar = delta*B (Euler step).
///   a [D, N], b_t [N], delta_t [D]  ->  (abar [D, N], bbar [D, N])
/// Throws NumericalError when any step is not strictly positive.
std::pair<Tensor, Tensor> discretize(const Tensor& a, const Tensor& b_t, const Tensor& delta_t);

/// Autodiff selective scan. Shapes as in the raw kernels; returns y [S, D].
/// The backward pass recomputes the latent states per (channel, state) lane
/// instead of retaining them, so tape memory stays proportional to the
/// inputs.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b,
                      const Tensor& c, ScanStrategy strategy = ScanStrategy::blocked);

} // namespace vmb
