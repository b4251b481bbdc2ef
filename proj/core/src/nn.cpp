#include "sivcast/nn.hpp"

#include <Eigen/Core>
#include <cmath>

#include "kernels.hpp"
#include "sivcast/error.hpp"

namespace sivcast::nn {

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using CMatMap = Eigen::Map<const RowMajor>;
}  // namespace

LstmState zero_state(std::size_t batch, std::size_t hidden) {
  return {DArray::zeros({batch, hidden}), DArray::zeros({batch, hidden})};
}

LstmState lstm_cell_step(Tape& tape, const LstmCellParams& p, const DArray& x,
                         const LstmState& prev) {
  const std::size_t H = p.hidden_size;
  if (x.rank() != 2 || x.dim(1) != p.input_size) {
    throw DimensionError("lstm_cell_step: input " + ad::to_string(x.shape()) +
                         " does not match input width " + std::to_string(p.input_size));
  }
  if (prev.h.shape() != ad::Shape{x.dim(0), H} || prev.c.shape() != prev.h.shape()) {
    throw DimensionError("lstm_cell_step: state " + ad::to_string(prev.h.shape()) +
                         " does not match batch " + std::to_string(x.dim(0)) +
                         " and hidden width " + std::to_string(H));
  }
  const std::size_t B = x.dim(0), D = p.input_size, G = 4 * H;
  const bool track = tape.tracks({&x, &prev.h, &prev.c, &p.w_ih, &p.w_hh, &p.bias});

  // Activated gates [i | f | g | o] per row, kept for the backward pass.
  ad::detail::Buffer act(B * G);
  MatMap z(act.data(), B, G);
  z.noalias() = CMatMap(x.values().data(), B, D) * CMatMap(p.w_ih.values().data(), G, D).transpose();
  z.noalias() += CMatMap(prev.h.values().data(), B, H) *
                 CMatMap(p.w_hh.values().data(), G, H).transpose();
  z.rowwise() += CMatMap(p.bias.values().data(), 1, G).row(0);
  for (std::size_t r = 0; r < B; ++r) {
    double* row = act.data() + r * G;
    kernels::sigmoid(row, row, 2 * H);
    kernels::tanh(row + 2 * H, row + 2 * H, H);
    kernels::sigmoid(row + 3 * H, row + 3 * H, H);
  }

  DArray c = tape.make_output({B, H}, track);
  DArray h = tape.make_output({B, H}, track);
  ad::detail::Buffer tanh_c(B * H);
  {
    auto cv = c.mutable_values();
    auto hv = h.mutable_values();
    auto cp = prev.c.values();
    for (std::size_t r = 0; r < B; ++r) {
      const double* a = act.data() + r * G;
      for (std::size_t j = 0; j < H; ++j) {
        cv[r * H + j] = a[H + j] * cp[r * H + j] + a[j] * a[2 * H + j];
      }
    }
    kernels::tanh(cv.data(), tanh_c.data(), B * H);
    for (std::size_t r = 0; r < B; ++r) {
      const double* a = act.data() + r * G;
      for (std::size_t j = 0; j < H; ++j) hv[r * H + j] = a[3 * H + j] * tanh_c[r * H + j];
    }
  }
  if (!track) return {h, c};

  tape.record(c, [] {});
  tape.record(h, [x, prev, p, h, c, act = std::move(act), tanh_c = std::move(tanh_c), B, D, H,
                  G]() {
    auto dh = h.grad();
    auto dc = c.grad();
    auto cp = prev.c.values();
    ad::detail::Buffer dz(B * G);
    std::span<double> dcp;
    if (prev.c.requires_grad()) dcp = prev.c.mutable_grad();
    for (std::size_t r = 0; r < B; ++r) {
      const double* a = act.data() + r * G;
      double* d = dz.data() + r * G;
      for (std::size_t j = 0; j < H; ++j) {
        const std::size_t k = r * H + j;
        const double i = a[j], f = a[H + j], g = a[2 * H + j], o = a[3 * H + j];
        const double tc = tanh_c[k];
        const double dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        d[j] = dct * g * i * (1.0 - i);
        d[H + j] = dct * cp[k] * f * (1.0 - f);
        d[2 * H + j] = dct * i * (1.0 - g * g);
        d[3 * H + j] = dh[k] * tc * o * (1.0 - o);
        if (!dcp.empty()) dcp[k] += dct * f;
      }
    }
    CMatMap dZ(dz.data(), B, G);
    if (p.w_ih.requires_grad()) {
      MatMap(p.w_ih.mutable_grad().data(), G, D).noalias() +=
          dZ.transpose() * CMatMap(x.values().data(), B, D);
    }
    if (p.w_hh.requires_grad()) {
      MatMap(p.w_hh.mutable_grad().data(), G, H).noalias() +=
          dZ.transpose() * CMatMap(prev.h.values().data(), B, H);
    }
    if (p.bias.requires_grad()) {
      MatMap(p.bias.mutable_grad().data(), 1, G).noalias() += dZ.colwise().sum();
    }
    if (x.requires_grad()) {
      MatMap(x.mutable_grad().data(), B, D).noalias() +=
          dZ * CMatMap(p.w_ih.values().data(), G, D);
    }
    if (prev.h.requires_grad()) {
      MatMap(prev.h.mutable_grad().data(), B, H).noalias() +=
          dZ * CMatMap(p.w_hh.values().data(), G, H);
    }
  });
  return {h, c};
}

DArray encode_sequence(Tape& tape, const StackedLstmParams& p, std::span<const DArray> steps) {
  if (steps.empty()) throw ContractError("encode_sequence: empty input sequence");
  const std::size_t T = steps.size();
  const std::size_t batch = steps[0].dim(0);
  const std::size_t dirs = p.directions();

  std::vector<DArray> layer_input(steps.begin(), steps.end());
  std::vector<DArray> finals(dirs);
  for (std::size_t layer = 0; layer < p.num_layers; ++layer) {
    const bool last = layer + 1 == p.num_layers;
    std::vector<std::vector<DArray>> outputs(dirs, std::vector<DArray>(last ? 0 : T));
    for (std::size_t d = 0; d < dirs; ++d) {
      const auto& cell = p.cell(layer, d);
      LstmState state = zero_state(batch, p.hidden_size);
      for (std::size_t s = 0; s < T; ++s) {
        const std::size_t t = d == 0 ? s : T - 1 - s;
        state = lstm_cell_step(tape, cell, layer_input[t], state);
        if (!last) outputs[d][t] = state.h;
      }
      finals[d] = state.h;
    }
    if (!last) {
      for (std::size_t t = 0; t < T; ++t) {
        layer_input[t] = dirs == 1 ? outputs[0][t]
                                   : ad::concat(tape, {outputs[0][t], outputs[1][t]}, 1);
      }
    }
  }
  return dirs == 1 ? finals[0] : ad::concat(tape, {finals[0], finals[1]}, 1);
}

DecoderState initial_decoder_state(const StackedLstmParams& p, std::size_t batch) {
  DecoderState state;
  state.layers.reserve(p.num_layers);
  for (std::size_t l = 0; l < p.num_layers; ++l) {
    state.layers.push_back(zero_state(batch, p.hidden_size));
  }
  return state;
}

DArray decoder_step(Tape& tape, const StackedLstmParams& p, const DArray& input,
                    DecoderState& state) {
  if (p.bidirectional) {
    throw ContractError("decoder_step: stepwise decoding needs a unidirectional stack");
  }
  DArray x = input;
  for (std::size_t l = 0; l < p.num_layers; ++l) {
    state.layers[l] = lstm_cell_step(tape, p.cell(l, 0), x, state.layers[l]);
    x = state.layers[l].h;
  }
  return x;
}

DArray linear(Tape& tape, const LinearParams& p, const DArray& x) {
  if (x.rank() != 2 || x.dim(1) != p.weight.dim(1)) {
    throw DimensionError("linear: input " + ad::to_string(x.shape()) + " vs weight " +
                         ad::to_string(p.weight.shape()));
  }
  return ad::add_row_vector(tape, ad::matmul_transposed(tape, x, p.weight), p.bias);
}

namespace {

DArray uniform_weights(ad::Shape shape, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(ad::element_count(shape));
  for (auto& v : values) v = dist(rng);
  return DArray::from_values(std::move(shape), std::move(values), true);
}

}  // namespace

LstmCellParams init_lstm_cell(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  if (input_size == 0 || hidden_size == 0) {
    throw ContractError("init_lstm_cell: dimensions must be positive");
  }
  LstmCellParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_ih = uniform_weights({4 * hidden_size, input_size}, hidden_size, rng);
  p.w_hh = uniform_weights({4 * hidden_size, hidden_size}, hidden_size, rng);
  std::vector<double> bias(4 * hidden_size, 0.0);
  for (std::size_t j = hidden_size; j < 2 * hidden_size; ++j) bias[j] = 1.0;
  p.bias = DArray::from_values({4 * hidden_size}, std::move(bias), true);
  return p;
}

StackedLstmParams init_stacked_lstm(std::size_t input_size, std::size_t hidden_size,
                                    std::size_t num_layers, bool bidirectional, Rng& rng) {
  if (num_layers == 0) throw ContractError("init_stacked_lstm: need at least one layer");
  StackedLstmParams p;
  p.num_layers = num_layers;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.bidirectional = bidirectional;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t in = l == 0 ? input_size : p.output_size();
    for (std::size_t d = 0; d < p.directions(); ++d) {
      p.cells.push_back(init_lstm_cell(in, hidden_size, rng));
    }
  }
  return p;
}

LinearParams init_linear(std::size_t in, std::size_t out, std::size_t hidden_size, Rng& rng) {
  if (in == 0 || out == 0 || hidden_size == 0) {
    throw ContractError("init_linear: dimensions must be positive");
  }
  return {uniform_weights({out, in}, hidden_size, rng), DArray::zeros({out}, true)};
}

AdamState make_adam_state(std::span<const DArray> params, const AdamOptions& options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.size(), 0.0);
    state.second_moment.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adam_step(AdamState& state, std::span<DArray> params, std::span<const std::string> names) {
  if (params.size() != state.first_moment.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double g : params[k].grad()) {
      if (!std::isfinite(g)) {
        const std::string label =
            k < names.size() ? names[k] : "#" + std::to_string(k);
        throw NumericalError("adam_step: non-finite gradient in parameter " + label);
      }
    }
  }
  const auto& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    auto grads = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      values[i] -= o.lr * o.weight_decay * values[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

}  // namespace sivcast::nn
