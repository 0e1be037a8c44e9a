#pragma once

#include <vector>

#include "copyseq/gru.hpp"
#include "copyseq/tensor.hpp"

namespace copyseq {

// Bidirectional encoder states, the decoder's short-term memory. states is
// b-major: row b*steps + t holds instance b's position t, a forward||backward
// concatenation of width 2*d_h. Positions at or past an instance's length are
// masked and zeroed.
struct Memory {
  Tensor states;                // [(B*T) x 2 d_h]
  Tensor mask;                  // [B x T], constant 0/1
  std::vector<std::size_t> lengths;
  std::size_t batch = 0, steps = 0;

  std::size_t width() const { return states.cols(); }
};

// Runs both directions over the true lengths (pad positions pass the state
// through unchanged rather than being mask-multiplied).
Memory encode(Graph& g, const std::vector<std::vector<int>>& src_base_ids, const Tensor& embedding,
              const GruParams& fwd, const GruParams& bwd);

// Fixed context for the no-attention baseline: forward state at the last
// valid position || backward state at position 0.
Tensor final_state_context(Graph& g, const Memory& mem);

}  // namespace copyseq
