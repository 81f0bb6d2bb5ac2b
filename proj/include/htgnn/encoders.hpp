#pragma once

// Context-aware node dynamics extraction: exogenous embedding MLP, GRU-based
// low-frequency encoder, and the gated multi-scale convolutional
// high-frequency encoder. All encoders are pure functions of (inputs, params)
// and shared across nodes of the same type.

#include <string>
#include <vector>

#include "htgnn/ad.hpp"
#include "htgnn/errors.hpp"
#include "htgnn/params.hpp"

namespace htgnn::enc {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nn::ParamStore;
using nn::ParamVars;

inline void ensure_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteInput(what);
}

// How the convolution gate g is produced.
enum class GateMode {
  FromContext,  // g = sigmoid(W_g h_w + b_g)
  BiasOnly,     // g = sigmoid(b_g); used when exogenous conditioning is ablated
  ForcedOne,    // g = 1; reduces the GCL to a plain convolution
};

// ---- exogenous embedding ------------------------------------------------------

inline void register_exogenous(ParamStore& ps, const std::string& prefix,
                               int n_w, int d_w) {
  ps.add(prefix + "/W1", d_w, n_w, n_w);
  ps.add(prefix + "/b1", d_w, 1, 0);
  ps.add(prefix + "/W2", d_w, d_w, d_w);
  ps.add(prefix + "/b2", d_w, 1, 0);
}

// Per-variable time mean through a two-layer perceptron with SiLU hidden
// activation. w_window is (N_w x L).
inline Var encode_exogenous(Tape& tape, Var w_window, const ParamVars& pv,
                            const std::string& prefix) {
  ensure_finite(w_window.value(), "encode_exogenous input");
  if (w_window.value().cols() < 1)
    throw WindowTooShort("encode_exogenous: empty window");
  Var wbar = ad::mean_cols(w_window);  // N_w x 1
  Var h1 = ad::silu(ad::add(ad::matmul(pv[prefix + "/W1"], wbar),
                            pv[prefix + "/b1"]));
  return ad::add(ad::matmul(pv[prefix + "/W2"], h1), pv[prefix + "/b2"]);
}

// ---- low-frequency GRU encoder -------------------------------------------------

inline void register_low_freq(ParamStore& ps, const std::string& prefix,
                              int d_w, int d_l, bool with_context = true) {
  if (with_context)
    ps.add(prefix + "/P", d_l, d_w, d_w);  // context -> initial hidden state
  for (const char* g : {"r", "z", "n"}) {
    ps.add(prefix + "/W" + std::string(g), d_l, 1, 1);
    ps.add(prefix + "/U" + std::string(g), d_l, d_l, d_l);
    ps.add(prefix + "/b" + std::string(g), d_l, 1, 0);
  }
  ps.add(prefix + "/bhn", d_l, 1, 0);
}

// One GRU step per time index, hidden state initialized from the projected
// exogenous embedding; SiLU applied to the cell output at every step when
// silu_in_gru is set. x is (N x L), one row per node, shared cell weights;
// returns the final states (d_l x N).
inline Var encode_low_freq(Tape& tape, Var x, Var h_w, const ParamVars& pv,
                           const std::string& prefix, int d_l,
                           bool silu_in_gru = true) {
  ensure_finite(x.value(), "encode_low_freq input");
  const Eigen::Index n_nodes = x.value().rows();
  const Eigen::Index window = x.value().cols();
  if (window < 1) throw WindowTooShort("encode_low_freq: empty window");

  Var h;
  if (h_w.valid()) {
    Var h0 = ad::matmul(pv[prefix + "/P"], h_w);  // d_l x 1
    h = ad::matmul(h0, ad::constant(tape, Mat::Ones(1, n_nodes)));
  } else {
    h = ad::constant(tape, Mat::Zero(d_l, n_nodes));
  }

  Var wr = pv[prefix + "/Wr"], ur = pv[prefix + "/Ur"], br = pv[prefix + "/br"];
  Var wz = pv[prefix + "/Wz"], uz = pv[prefix + "/Uz"], bz = pv[prefix + "/bz"];
  Var wn = pv[prefix + "/Wn"], un = pv[prefix + "/Un"], bn = pv[prefix + "/bn"];
  Var bhn = pv[prefix + "/bhn"];

  for (Eigen::Index t = 0; t < window; ++t) {
    Var u = ad::transpose(ad::slice_cols(x, t, 1));  // 1 x N
    Var r = ad::sigmoid(ad::add_col_broadcast(
        ad::add(ad::matmul(wr, u), ad::matmul(ur, h)), br));
    Var z = ad::sigmoid(ad::add_col_broadcast(
        ad::add(ad::matmul(wz, u), ad::matmul(uz, h)), bz));
    Var cand = ad::tanh_fn(ad::add_col_broadcast(
        ad::add(ad::matmul(wn, u),
                ad::cmul(r, ad::add_col_broadcast(ad::matmul(un, h), bhn))),
        bn));
    Var ones = ad::constant(tape, Mat::Ones(d_l, n_nodes));
    Var hn = ad::add(ad::cmul(ad::sub(ones, z), cand), ad::cmul(z, h));
    h = silu_in_gru ? ad::silu(hn) : hn;
  }
  return h;
}

// ---- gated convolutional layers -------------------------------------------------

struct GclStackSpec {
  int kernel = 3;
  int dilation = 1;
  std::vector<int> channels = {1, 4, 4, 1};  // including input channel count
};

inline int receptive_field(const GclStackSpec& s) {
  const int layers = static_cast<int>(s.channels.size()) - 1;
  return 1 + layers * (s.kernel - 1) * s.dilation;
}

inline void register_gcl(ParamStore& ps, const std::string& prefix, int c_in,
                         int c_out, int kernel, int d_w,
                         GateMode mode = GateMode::FromContext) {
  ps.add(prefix + "/Wz", c_out, c_in * kernel, c_in * kernel);
  if (mode == GateMode::FromContext) ps.add(prefix + "/Wg", c_out, d_w, d_w);
  if (mode != GateMode::ForcedOne) ps.add(prefix + "/bg", c_out, 1, 0);
}

// o = Conv1D(x) .* sigmoid(W_g h_w + b_g); same-padding, gate broadcast over
// time. x is (C_in x T), result (C_out x T).
inline Var gated_conv_layer(Tape& tape, Var x, Var h_w, const ParamVars& pv,
                            const std::string& prefix, int kernel, int dilation,
                            GateMode mode = GateMode::FromContext) {
  Var wz = pv[prefix + "/Wz"];
  const Eigen::Index c_in = x.value().rows();
  if (wz.value().cols() != c_in * kernel)
    throw ShapeMismatch("gated_conv_layer: kernel shape does not match input");
  Var z = ad::matmul(wz, ad::im2col_same(x, kernel, dilation));
  switch (mode) {
    case GateMode::ForcedOne:
      return z;
    case GateMode::BiasOnly:
      return ad::cmul_col_broadcast(z, ad::sigmoid(pv[prefix + "/bg"]));
    case GateMode::FromContext: {
      if (!h_w.valid())
        throw MissingParams("gated_conv_layer: context embedding required");
      Var g = ad::sigmoid(ad::add(ad::matmul(pv[prefix + "/Wg"], h_w),
                                  pv[prefix + "/bg"]));
      return ad::cmul_col_broadcast(z, g);
    }
  }
  throw Error("unreachable gate mode");
}

// ---- high-frequency multi-scale encoder ------------------------------------------

struct HighFreqSpec {
  GclStackSpec small = {3, 1, {1, 4, 4, 1}};
  GclStackSpec large = {5, 2, {1, 4, 4, 1}};
  int d_small = 5;
  int d_large = 5;
  int window = 30;
};

inline void register_high_freq(ParamStore& ps, const std::string& prefix,
                               const HighFreqSpec& spec, int d_w,
                               GateMode mode = GateMode::FromContext) {
  auto stack = [&](const char* name, const GclStackSpec& s, int d_out) {
    for (std::size_t l = 0; l + 1 < s.channels.size(); ++l)
      register_gcl(ps, prefix + "/" + name + "/gcl" + std::to_string(l),
                   s.channels[l], s.channels[l + 1], s.kernel, d_w, mode);
    // learned reduction of the channel-1 time output to a fixed-size vector
    ps.add(prefix + "/" + name + "/R", d_out, spec.window, spec.window);
  };
  stack("small", spec.small, spec.d_small);
  stack("large", spec.large, spec.d_large);
}

namespace detail {

inline Var run_stack(Tape& tape, Var x, Var h_w, const ParamVars& pv,
                     const std::string& prefix, const GclStackSpec& s,
                     GateMode mode) {
  Var h = x;
  for (std::size_t l = 0; l + 1 < s.channels.size(); ++l) {
    h = gated_conv_layer(tape, h, h_w, pv,
                         prefix + "/gcl" + std::to_string(l), s.kernel,
                         s.dilation, mode);
    h = ad::silu(h);
  }
  return h;  // 1 x T
}

}  // namespace detail

// Two parallel gated convolution stacks over one node's window (1 x L);
// each stack's time output is reduced by a learned linear map and the two
// feature vectors are concatenated: (d_small + d_large) x 1.
inline Var encode_high_freq(Tape& tape, Var x, Var h_w, const ParamVars& pv,
                            const std::string& prefix, const HighFreqSpec& spec,
                            GateMode mode = GateMode::FromContext) {
  ensure_finite(x.value(), "encode_high_freq input");
  const Eigen::Index window = x.value().cols();
  if (window < receptive_field(spec.large))
    throw WindowTooShort("encode_high_freq: window shorter than receptive field");
  if (window != spec.window)
    throw ShapeMismatch("encode_high_freq: window length differs from config");

  Var small = detail::run_stack(tape, x, h_w, pv, prefix + "/small",
                                spec.small, mode);
  Var large = detail::run_stack(tape, x, h_w, pv, prefix + "/large",
                                spec.large, mode);
  Var fs = ad::matmul(pv[prefix + "/small/R"], ad::transpose(small));
  Var fl = ad::matmul(pv[prefix + "/large/R"], ad::transpose(large));
  return ad::concat_rows({fs, fl});
}

}  // namespace htgnn::enc
