#include "copyseq/encoder.hpp"

#include "copyseq/vocab.hpp"

namespace copyseq {

Memory encode(Graph& g, const std::vector<std::vector<int>>& src_base_ids, const Tensor& embedding,
              const GruParams& fwd, const GruParams& bwd) {
  const std::size_t B = src_base_ids.size();
  if (B == 0) throw DimensionError("encode: empty batch");
  std::size_t T = 0;
  std::vector<std::size_t> lengths(B);
  for (std::size_t b = 0; b < B; ++b) {
    lengths[b] = src_base_ids[b].size();
    if (lengths[b] == 0) throw DimensionError("encode: empty source row");
    T = std::max(T, lengths[b]);
  }
  const std::size_t d_h = fwd.d_h;

  // Per-position embeddings (pad rows fetch PAD and are discarded below).
  std::vector<Tensor> x(T);
  std::vector<std::vector<unsigned char>> valid(T, std::vector<unsigned char>(B));
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<int> ids(B, Vocabulary::kPad);
    for (std::size_t b = 0; b < B; ++b) {
      if (t < lengths[b]) {
        ids[b] = src_base_ids[b][t];
        valid[t][b] = 1;
      }
    }
    x[t] = gather_rows(g, embedding, ids);
  }

  GruRun fwd_run(g, fwd), bwd_run(g, bwd);
  Tensor zeros_h = Tensor::zeros({B, d_h});
  std::vector<Tensor> fstate(T), bstate(T);
  Tensor h = zeros_h;
  for (std::size_t t = 0; t < T; ++t) {
    h = row_where(g, valid[t], fwd_run.step(g, x[t], h), h);
    fstate[t] = h;
  }
  h = zeros_h;
  for (std::size_t t = T; t-- > 0;) {
    h = row_where(g, valid[t], bwd_run.step(g, x[t], h), h);
    bstate[t] = h;
  }

  Tensor zeros_pair = Tensor::zeros({B, 2 * d_h});
  std::vector<Tensor> positions(T);
  for (std::size_t t = 0; t < T; ++t)
    positions[t] = row_where(g, valid[t], concat_cols(g, {fstate[t], bstate[t]}), zeros_pair);

  Memory mem;
  mem.states = pack_blocks(g, positions);
  mem.batch = B;
  mem.steps = T;
  mem.lengths = std::move(lengths);
  mem.mask = Tensor::zeros({B, T});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < mem.lengths[b]; ++t) mem.mask.at(b, t) = 1.0;
  return mem;
}

Tensor final_state_context(Graph& g, const Memory& mem) {
  const std::size_t d_h = mem.width() / 2;
  std::vector<std::size_t> last(mem.batch), first(mem.batch, 0);
  for (std::size_t b = 0; b < mem.batch; ++b) last[b] = mem.lengths[b] - 1;
  Tensor f_last = slice_cols(g, select_block_row(g, mem.states, last, mem.steps), 0, d_h);
  Tensor b_first = slice_cols(g, select_block_row(g, mem.states, first, mem.steps), d_h, d_h);
  return concat_cols(g, {f_last, b_first});
}

}  // namespace copyseq
