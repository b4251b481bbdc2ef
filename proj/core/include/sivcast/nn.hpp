#pragma once

// Recurrent building blocks, parameter initialization and the Adam optimizer.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sivcast/autodiff.hpp"

namespace sivcast::nn {

using ad::DArray;
using ad::Tape;
using Rng = std::mt19937_64;

/// Gate rows are laid out as [input | forget | cell | output], H rows each.
struct LstmCellParams {
  DArray w_ih;  // 4H × D
  DArray w_hh;  // 4H × H
  DArray bias;  // 4H
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

struct LstmState {
  DArray h;  // B × H
  DArray c;  // B × H
};

LstmState zero_state(std::size_t batch, std::size_t hidden);

/// One LSTM step on a batch: x[B×D], prev.h/c[B×H].
LstmState lstm_cell_step(Tape& tape, const LstmCellParams& p, const DArray& x,
                         const LstmState& prev);

/// Stacked (optionally bidirectional) LSTM. Cells are stored layer-major,
/// forward direction first.
struct StackedLstmParams {
  std::vector<LstmCellParams> cells;
  std::size_t num_layers = 0;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  bool bidirectional = false;

  std::size_t directions() const { return bidirectional ? 2 : 1; }
  std::size_t output_size() const { return directions() * hidden_size; }
  const LstmCellParams& cell(std::size_t layer, std::size_t direction) const {
    return cells.at(layer * directions() + direction);
  }
};

/// Runs the stack over `steps` (T arrays of shape B×D) and returns the top
/// layer's final hidden state, [B×H] or, when bidirectional, the forward and
/// backward final states concatenated as [B×2H].
DArray encode_sequence(Tape& tape, const StackedLstmParams& p, std::span<const DArray> steps);

/// Per-layer recurrent state of a unidirectional stack driven one step at a time.
struct DecoderState {
  std::vector<LstmState> layers;
};

DecoderState initial_decoder_state(const StackedLstmParams& p, std::size_t batch);

/// Advances a unidirectional stack by one step and returns the top hidden state.
DArray decoder_step(Tape& tape, const StackedLstmParams& p, const DArray& input,
                    DecoderState& state);

struct LinearParams {
  DArray weight;  // out × in
  DArray bias;    // out
};

/// x[B×in] -> [B×out]
DArray linear(Tape& tape, const LinearParams& p, const DArray& x);

// Initialization: weights ~ U(-1/sqrt(H), 1/sqrt(H)) with H the hidden width,
// forget-gate bias 1, every other bias 0.

LstmCellParams init_lstm_cell(std::size_t input_size, std::size_t hidden_size, Rng& rng);
StackedLstmParams init_stacked_lstm(std::size_t input_size, std::size_t hidden_size,
                                    std::size_t num_layers, bool bidirectional, Rng& rng);
LinearParams init_linear(std::size_t in, std::size_t out, std::size_t hidden_size, Rng& rng);

// Adam ----------------------------------------------------------------------

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
};

AdamState make_adam_state(std::span<const DArray> params, const AdamOptions& options);

/// Applies decoupled weight decay (p -= lr*wd*p) and then the bias-corrected
/// Adam delta, using the gradients stored on `params`. Throws NumericalError
/// naming the parameter if any gradient is not finite; nothing is modified
/// in that case.
void adam_step(AdamState& state, std::span<DArray> params,
               std::span<const std::string> names = {});

}  // namespace sivcast::nn
