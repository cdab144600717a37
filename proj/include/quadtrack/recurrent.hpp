#pragma once

#include <utility>

#include "quadtrack/tape.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack::recurrent {

/// Gate parameters of a GRU cell with input width D_in and hidden width D.
/// Weight columns are ordered [x ; h_prev].
struct GruParams {
    Tensor w_z, w_r, w_h;  // [D x (D_in + D)]
    Tensor b_z, b_r, b_h;  // [D]

    int hidden() const { return b_z.dim(0); }
    int input() const { return w_z.dim(1) - hidden(); }
    void validate() const;

    static GruParams zeros(int d_in, int d);
    static GruParams seeded(int d_in, int d, Rng& rng, float scale = 0.2f);
};

/// Tape bindings for the six GRU parameter tensors.
struct GruNodes {
    ad::Value w_z, w_r, w_h, b_z, b_r, b_h;

    static GruNodes bind(ad::Tape* tape, const GruParams& p);
};

struct GruStep {
    ad::Value out;  // the estimated descriptor (equals h)
    ad::Value h;
};

// Standard GRU recurrence:
//   z = sigmoid(W_z [x;h] + b_z), r = sigmoid(W_r [x;h] + b_r),
//   cand = tanh(W_h [x; r*h] + b_h), h' = (1-z)*h + z*cand.
GruStep gru_step(ad::Tape* tape, ad::Value x, ad::Value h_prev, const GruNodes& p);

// Forward-only convenience; returns (out, h).
std::pair<Tensor, Tensor> gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p);

/// ConvLSTM gate kernels over the channel concatenation [x ; h]. Square odd
/// kernels; C_h output channels.
struct ConvLstmParams {
    Tensor w_i, w_f, w_o, w_c;  // [C_h x (C_in + C_h) x k x k]
    Tensor b_i, b_f, b_o, b_c;  // [C_h]

    int hidden_channels() const { return b_i.dim(0); }
    int input_channels() const { return w_i.dim(1) - hidden_channels(); }
    void validate() const;

    static ConvLstmParams zeros(int c_in, int c_h, int k = 3);
    static ConvLstmParams seeded(int c_in, int c_h, Rng& rng, int k = 3, float scale = 0.1f);
};

struct ConvLstmState {
    Tensor c;  // [C_h x H x W]
    Tensor h;  // [C_h x H x W], values in (-1, 1)

    static ConvLstmState zeros(int c_h, int h, int w);
};

struct ConvLstmOut {
    Tensor f;  // emitted feature map (the new hidden state)
    ConvLstmState state;
};

// Forward pass only: i,f,o = sigmoid(conv([x;h])), g = tanh(conv([x;h])),
// c' = f*c + i*g, h' = o * tanh(c').
ConvLstmOut convlstm_step(const Tensor& x, const ConvLstmState& s, const ConvLstmParams& p);

}  // namespace quadtrack::recurrent
