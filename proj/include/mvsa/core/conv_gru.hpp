#pragma once

#include "mvsa/core/ops.hpp"

namespace mvsa {

/// Weights of one convolutional GRU layer, already placed on a tape.
/// input_kernel [3,3,Cin,3*Ch] holds the update | reset | candidate input
/// maps side by side (channel blocks in that order); recurrent_zr [3,3,Ch,2*Ch]
/// holds update | reset recurrent maps; recurrent_c [3,3,Ch,Ch] acts on r*h.
struct ConvGruVars {
  Var input_kernel;
  Var input_bias;  // [3*Ch]
  Var recurrent_zr;
  Var recurrent_c;
};

inline constexpr Stride2 kGruInputStride{2, 2};

/// One step:
///   z = sigmoid(Wxz*x + Whz*h),  r = sigmoid(Wxr*x + Whr*h)
///   c = tanh(Wxc*x + Whc*(r.h)),  h' = (1-z).h + z.c
/// The input map is strided (3x3, stride 2, SAME) so the hidden grid is
/// ceil(H/2) x ceil(W/2); recurrent maps are stride-1 SAME.
template <typename T>
Var conv_gru_step(Tape<T>& tape, Var x, Var h_prev, const ConvGruVars& w);

/// Hidden grid produced from an input grid.
inline std::pair<std::int64_t, std::int64_t> conv_gru_hidden_grid(std::int64_t h, std::int64_t w) {
  return {same_padding(h, 3, 2).out, same_padding(w, 3, 2).out};
}

}  // namespace mvsa
