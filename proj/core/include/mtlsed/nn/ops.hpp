#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtlsed/nn/tape.hpp"

// Layer ops over the tape. Feature maps are [channels, freq, time] so that the
// innermost loops run over contiguous time samples.
namespace mtlsed::nn {

/// Same-padded 2-D convolution. x [Cin,F,T], w [Cout,Cin,kF,kT] (odd), b [Cout].
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b);

struct FdyVars {
  Var basis;       // [K, Cout, Cin, kF, kT]
  Var basis_bias;  // [K, Cout]
  Var attn_w;      // [K, Cin]
  Var attn_b;      // [K]
};

/// Per-frequency softmax attention over the K basis kernels: the input is
/// averaged over time, mapped linearly per frequency, divided by the
/// temperature and normalised over K. Returns [K, F].
template <typename T>
Tensor<T> fdy_attention(const Tensor<T>& x, const Tensor<T>& attn_w, const Tensor<T>& attn_b, T temperature);

/// Frequency-dynamic convolution: the kernel applied at output frequency f is
/// sum_k a_k(f) W_k (and likewise for the bias). `uniform_attention` replaces
/// the attention by 1/K (the infinite-temperature limit) for testing.
template <typename T>
Var fdy_conv(Tape<T>& tape, Var x, const FdyVars& p, T temperature, bool uniform_attention = false);

/// Average pooling with ceil-mode output sizes; partial windows average the
/// elements they cover. [C,F,T] -> [C, ceil(F/pf), ceil(T/pt)].
template <typename T>
Var avg_pool(Tape<T>& tape, Var x, std::size_t pool_freq, std::size_t pool_time);

template <typename T>
Var silu(Tape<T>& tape, Var x);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

/// [C,F,T] -> [T, C*F] with feature index c*F + f.
template <typename T>
Var to_sequence(Tape<T>& tape, Var x);

/// One GRU direction (gate order r, z, n). x [T,D] -> [T,H].
template <typename T>
Var gru(Tape<T>& tape, Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh, bool reverse);

/// [T,A], [T,B] -> [T,A+B]
template <typename T>
Var concat_features(Tape<T>& tape, Var a, Var b);

/// x [N,D], w [O,D], b [O] -> [N,O]
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b);

/// Linear-softmax pooling over time: p [T,C] -> [C], sum p^2 / sum p.
template <typename T>
Var linear_softmax_pool(Tape<T>& tape, Var p);

inline constexpr double kBceClamp = 1e-7;

/// Summed binary cross-entropy of probabilities p against 0/1 targets of the
/// same size; p is clamped to [1e-7, 1-1e-7]. Returns a scalar.
template <typename T>
Var bce_sum(Tape<T>& tape, Var p, const std::vector<T>& targets);

/// sum_i weights[i] * terms[i] over scalar nodes; returns a scalar.
template <typename T>
Var weighted_sum(Tape<T>& tape, std::span<const Var> terms, std::span<const T> weights);

/// Squared error 0.5*sum (x - target)^2; used by gradient-check fixtures.
template <typename T>
Var squared_error(Tape<T>& tape, Var x, const std::vector<T>& targets);

}  // namespace mtlsed::nn
