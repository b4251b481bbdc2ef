#pragma once

// Linked encoder/decoder forecaster and its comparison architectures.
//
// A shared encoder summarizes [target ; SIVs] into h_psi. At every horizon
// step the target decoder (theta) advances from the previous combined state;
// each SIV decoder (phi_i) that is engaged for a sample advances from the same
// state plus that SIV's shifted window. The combined state
//
//     h'_t = h_theta_t + sum_i k_i * max(h_phi_t_i, 0)
//
// feeds the output layer and every decoder at the next step.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sivcast/autodiff.hpp"
#include "sivcast/checkpoint.hpp"
#include "sivcast/nn.hpp"
#include "sivcast/transform.hpp"

namespace sivcast::model {

enum class Architecture {
  kProposed,
  kEncDec,
  kFullCapacity,
  kNoGating,
  kNoRestriction,
  kNoSivInput,
  kOnlySivInput,
};

enum class Ablation { kNoGating, kNoRestriction, kNoSivInput, kOnlySivInput };

const char* architecture_name(Architecture a);
Architecture parse_architecture(const std::string& name);
Ablation parse_ablation(const std::string& name);
Architecture architecture_of(Ablation a);

/// Which mechanisms an architecture switches on.
struct Mechanisms {
  bool siv_decoders = false;       // phi networks exist
  bool gating = false;             // phi_i runs only when SIV i is present
  bool restriction = false;        // ReLU on phi output
  bool signed_contribution = false;  // multiply by k_i
  bool siv_input_to_phi = false;
  bool siv_input_to_theta = false;
};

Mechanisms mechanisms(Architecture a);

struct SivSpec {
  std::string name;
  std::size_t channel = 1;  // input channel; channel 0 is the target
  int sign = 1;             // +1 raises the target, -1 lowers it
};

void validate(const SivSpec& spec, std::size_t channels);

/// The glucose defaults: carbohydrates raise glucose, bolus insulin lowers it.
std::vector<SivSpec> default_sivs();

/// Specs for windows built with these SIV channels, in order (input channel
/// 1+i), signed by each channel's known effect on glucose.
std::vector<SivSpec> sivs_for_channels(std::span<const transform::Channel> channels);

struct ModelDims {
  std::size_t input_length = 24;  // T
  std::size_t horizon = 6;        // h
  std::size_t hidden = 32;        // H
  std::size_t layers = 2;
  bool bidirectional = true;      // encoder only; decoders step one at a time
};

struct LinkedModel {
  Architecture architecture = Architecture::kProposed;
  ModelDims dims;
  std::vector<SivSpec> sivs;
  nn::StackedLstmParams encoder;
  std::optional<nn::LinearParams> projection;  // 2H -> H when bidirectional
  nn::StackedLstmParams theta;
  std::vector<nn::StackedLstmParams> phi;  // one per SivSpec when siv_decoders
  nn::LinearParams fc;

  std::size_t channels() const { return 1 + sivs.size(); }
  /// Stable names in a fixed order; arrays alias the model's storage.
  std::vector<NamedParam> parameters() const;
  std::vector<ad::DArray> parameter_arrays() const;
  std::size_t parameter_count() const;
  /// Deep copy.
  LinkedModel clone() const;
};

/// Parameters are drawn in the order encoder, projection, theta, fc, phi, so
/// two architectures built from the same seed share encoder/theta/fc values
/// whenever their shapes agree.
LinkedModel make_model(Architecture architecture, const ModelDims& dims,
                       std::vector<SivSpec> sivs, std::uint64_t seed);

Checkpoint to_checkpoint(const LinkedModel& model);
LinkedModel from_checkpoint(const Checkpoint& ckpt);

/// Model inputs for a batch of windows.
struct Batch {
  std::size_t size = 0;
  std::size_t input_length = 0;
  std::vector<ad::DArray> steps;                  // T arrays of B × C
  std::vector<std::vector<double>> siv_windows;   // per SIV, B × T row-major
  ad::DArray labels;                              // B × h
};

Batch make_batch(const transform::WindowSet& windows, std::span<const std::size_t> indices,
                 const std::vector<SivSpec>& sivs);
Batch make_batch(const transform::WindowSet& windows, const std::vector<SivSpec>& sivs);

struct ForecastTrace {
  ad::DArray predictions;                             // B × h
  std::vector<ad::DArray> theta_states;               // per step, B × H
  std::vector<std::vector<ad::DArray>> contributions;  // [step][siv], B × H
  std::vector<std::vector<bool>> gated;               // [siv][row]
};

/// SIV window padded to length T+h for horizon step `step` (1-based):
/// h-(step-1) leading zeros, the window, then step-1 trailing zeros.
std::vector<double> shifted_siv_input(std::span<const double> window, std::size_t step,
                                      std::size_t horizon);

/// Rescales `siv` so its mean matches the mean of `state`; returned
/// unchanged when its own mean is zero.
std::vector<double> scale_siv_to_state(std::span<const double> siv,
                                       std::span<const double> state);
/// Row-wise differentiable form: siv[B×n] (constant), state[B×H].
ad::DArray scale_siv_to_state(ad::Tape& tape, const ad::DArray& siv, const ad::DArray& state);

/// Runs whichever architecture the model was built for.
ForecastTrace forward(ad::Tape& tape, const LinkedModel& m, const Batch& batch);

ForecastTrace forward_linked(ad::Tape& tape, const LinkedModel& m, const Batch& batch);
/// Encoder, theta and fc only; SIVs reach the model through the encoder input.
ad::DArray forward_baseline(ad::Tape& tape, const LinkedModel& m, const Batch& batch);
ad::DArray forward_full_capacity(ad::Tape& tape, const LinkedModel& m, const Batch& batch);
ad::DArray ablated_forward(ad::Tape& tape, Ablation variant, const LinkedModel& m,
                           const Batch& batch);

/// Copy of `m` with every k_i negated.
LinkedModel flip_restriction_sign(const LinkedModel& m);

}  // namespace sivcast::model
