#include "mvsa/core/conv_gru.hpp"

namespace mvsa {

template <typename T>
Var conv_gru_step(Tape<T>& tape, Var x, Var h_prev, const ConvGruVars& w) {
  const Shape& ks = tape.shape(w.recurrent_c);
  const std::int64_t ch = ks.at(3);
  const Var gx = conv2d(tape, x, w.input_kernel, w.input_bias, kGruInputStride);
  const Shape& gs = tape.shape(gx);
  Shape expect = gs;
  expect.back() = ch;
  if (tape.shape(h_prev) != expect) {
    throw ConfigError("conv_gru_step: hidden state " + shape_str(tape.shape(h_prev)) +
                      " inconsistent with strided input map " + shape_str(expect));
  }
  const Var zero_zr = tape.constant(BasicTensor<T>(Shape{2 * ch}));
  const Var zero_c = tape.constant(BasicTensor<T>(Shape{ch}));
  const Var gh = conv2d(tape, h_prev, w.recurrent_zr, zero_zr, Stride2{1, 1});

  const Var z = sigmoid(tape, add(tape, slice_last(tape, gx, 0, ch), slice_last(tape, gh, 0, ch)));
  const Var r = sigmoid(tape, add(tape, slice_last(tape, gx, ch, ch), slice_last(tape, gh, ch, ch)));
  const Var rh = mul(tape, r, h_prev);
  const Var cand = tanh(tape, add(tape, slice_last(tape, gx, 2 * ch, ch),
                                  conv2d(tape, rh, w.recurrent_c, zero_c, Stride2{1, 1})));
  return add(tape, mul(tape, one_minus(tape, z), h_prev), mul(tape, z, cand));
}

template Var conv_gru_step(Tape<float>&, Var, Var, const ConvGruVars&);
template Var conv_gru_step(Tape<double>&, Var, Var, const ConvGruVars&);

}  // namespace mvsa
