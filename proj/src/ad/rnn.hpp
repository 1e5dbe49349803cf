#pragma once

#include <utility>

#include "ad/tape.hpp"
#include "ad/tensor.hpp"

namespace optlab::ad {

// One step of a standard LSTM cell over r independent rows, as a single
// fused tape node (keeps 20-step unrolls from flooding the tape with
// intermediates). Gate order in the packed weights is [input, forget,
// candidate, output].
//
//   x  : r x d      input block
//   h  : r x H      previous hidden state
//   c  : r x H      previous cell state
//   wx : d x 4H, wh : H x 4H, b : 4H
//
// Returns (h', c').
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const Tensor& wx, const Tensor& wh, const Tensor& b);

}  // namespace optlab::ad
