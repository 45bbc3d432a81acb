#pragma once

#include <random>
#include <vector>

#include "vmb/scan.hpp"
#include "vmb/tensor.hpp"

namespace vmb {

struct MambaConfig {
    int depth = 4;
    int embed_dim = 192;
    int d_state = 16;
    int conv_kernel = 4;
    int expand = 2;
    bool bidirectional = true;

    int inner_dim() const { return expand * embed_dim; }
    void validate() const;
};

/// One block's parameters. The state matrix is stored as a_log with
/// A = -exp(a_log), which keeps every entry of A strictly negative no matter
/// what training does to a_log.
struct MambaBlockParams {
    Tensor ln_gain, ln_bias; // [D]
    Tensor w_in;             // [D, inner]
    Tensor w_gate;           // [D, inner]
    Tensor conv_weight;      // [inner, K] depthwise causal taps
    Tensor w_delta;          // [inner, inner]
    Tensor b_delta;          // [inner], set so softplus lands in [1e-3, 1e-1]
    Tensor w_b, w_c;         // [inner, N]
    Tensor a_log;            // [inner, N], init log(1..N) per channel
    Tensor w_out;            // [inner, D]
};

struct MambaParams {
    std::vector<MambaBlockParams> blocks;
    Tensor final_gain, final_bias; // [D]
    Tensor head_weight;            // [D, 1], zero-initialized
    Tensor head_bias;              // [1]

    static MambaParams init(const MambaConfig& cfg, std::mt19937_64& rng);
};

/// Residual Mamba block:
///   z + out_proj( gate (.) scan( silu( conv( in_proj(LN(z)) )))),
///   gate = silu(gate_proj(LN(z))).
/// In bidirectional mode the scan also runs over the reversed token axis
/// (shared parameters) and the two outputs are averaged before projection.
Tensor mamba_block(const Tensor& z, const MambaBlockParams& p, const MambaConfig& cfg,
                   ScanStrategy strategy = ScanStrategy::blocked);

struct MambaTrace {
    Tensor tokens; // activations entering the final block, [N+1, D]
};

/// Full branch: depth blocks, final layernorm, linear head on the class
/// token (class_index selects the aggregating position; the embedding
/// prepends at 0). Returns the scalar branch prediction p_mamba.
Tensor mamba_forward(const Tensor& z0, const MambaConfig& cfg, const MambaParams& params,
                     MambaTrace* trace = nullptr, std::int64_t class_index = 0,
                     ScanStrategy strategy = ScanStrategy::blocked);

} // namespace vmb
