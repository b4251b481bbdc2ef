#include "sivcast/model.hpp"

#include <sstream>

#include "sivcast/error.hpp"

namespace sivcast::model {

using ad::DArray;
using ad::Tape;

const char* architecture_name(Architecture a) {
  switch (a) {
    case Architecture::kProposed:
      return "proposed";
    case Architecture::kEncDec:
      return "enc_dec";
    case Architecture::kFullCapacity:
      return "full_capacity";
    case Architecture::kNoGating:
      return "no_gating";
    case Architecture::kNoRestriction:
      return "no_restriction";
    case Architecture::kNoSivInput:
      return "no_siv_input";
    case Architecture::kOnlySivInput:
      return "only_siv_input";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  for (auto a : {Architecture::kProposed, Architecture::kEncDec, Architecture::kFullCapacity,
                 Architecture::kNoGating, Architecture::kNoRestriction,
                 Architecture::kNoSivInput, Architecture::kOnlySivInput}) {
    if (name == architecture_name(a)) return a;
  }
  throw ConfigError("unknown architecture '" + name + "'");
}

Ablation parse_ablation(const std::string& name) {
  if (name == "no_gating") return Ablation::kNoGating;
  if (name == "no_restriction") return Ablation::kNoRestriction;
  if (name == "no_siv_input") return Ablation::kNoSivInput;
  if (name == "only_siv_input") return Ablation::kOnlySivInput;
  throw ConfigError("unknown ablation variant '" + name + "'");
}

Architecture architecture_of(Ablation a) {
  switch (a) {
    case Ablation::kNoGating:
      return Architecture::kNoGating;
    case Ablation::kNoRestriction:
      return Architecture::kNoRestriction;
    case Ablation::kNoSivInput:
      return Architecture::kNoSivInput;
    case Ablation::kOnlySivInput:
      return Architecture::kOnlySivInput;
  }
  return Architecture::kProposed;
}

Mechanisms mechanisms(Architecture a) {
  Mechanisms m;
  switch (a) {
    case Architecture::kProposed:
      m = {true, true, true, true, true, false};
      break;
    case Architecture::kEncDec:
      m = {false, false, false, false, false, false};
      break;
    case Architecture::kFullCapacity:
      m = {true, false, false, false, false, false};
      break;
    case Architecture::kNoGating:
      m = {true, false, true, true, true, false};
      break;
    case Architecture::kNoRestriction:
      m = {true, true, false, true, true, false};
      break;
    case Architecture::kNoSivInput:
      m = {true, true, true, true, false, false};
      break;
    case Architecture::kOnlySivInput:
      m = {false, false, false, false, false, true};
      break;
  }
  return m;
}

void validate(const SivSpec& spec, std::size_t channels) {
  if (spec.sign != 1 && spec.sign != -1) {
    throw ContractError("SIV '" + spec.name + "': sign must be +1 or -1");
  }
  if (spec.channel == 0 || spec.channel >= channels) {
    throw ContractError("SIV '" + spec.name + "': channel " + std::to_string(spec.channel) +
                        " invalid for " + std::to_string(channels) + " input channels");
  }
}

std::vector<SivSpec> default_sivs() { return {{"carbs", 1, 1}, {"bolus", 2, -1}}; }

std::vector<SivSpec> sivs_for_channels(std::span<const transform::Channel> channels) {
  std::vector<SivSpec> out;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto c = channels[i];
    if (c == transform::Channel::kGlucose) {
      throw ContractError("sivs_for_channels: the target channel cannot be an SIV");
    }
    out.push_back({transform::channel_name(c), 1 + i, c == transform::Channel::kBolus ? -1 : 1});
  }
  return out;
}

namespace {

void append_lstm(std::vector<NamedParam>& out, const std::string& prefix,
                 const nn::StackedLstmParams& p) {
  for (std::size_t l = 0; l < p.num_layers; ++l) {
    for (std::size_t d = 0; d < p.directions(); ++d) {
      std::string base = prefix + ".l" + std::to_string(l);
      if (p.bidirectional) base += d == 0 ? ".fwd" : ".bwd";
      const auto& c = p.cell(l, d);
      out.push_back({base + ".w_ih", c.w_ih});
      out.push_back({base + ".w_hh", c.w_hh});
      out.push_back({base + ".bias", c.bias});
    }
  }
}

nn::StackedLstmParams clone_lstm(const nn::StackedLstmParams& p) {
  nn::StackedLstmParams out = p;
  for (auto& c : out.cells) {
    c.w_ih = c.w_ih.clone();
    c.w_hh = c.w_hh.clone();
    c.bias = c.bias.clone();
  }
  return out;
}

nn::LinearParams clone_linear(const nn::LinearParams& p) {
  return {p.weight.clone(), p.bias.clone()};
}

std::size_t theta_input_width(Architecture a, const ModelDims& d, std::size_t n_sivs) {
  const auto mech = mechanisms(a);
  return d.hidden + (mech.siv_input_to_theta ? n_sivs * (d.input_length + d.horizon) : 0);
}

std::size_t phi_input_width(Architecture a, const ModelDims& d) {
  return d.hidden + (mechanisms(a).siv_input_to_phi ? d.input_length + d.horizon : 0);
}

}  // namespace

std::vector<NamedParam> LinkedModel::parameters() const {
  std::vector<NamedParam> out;
  append_lstm(out, "encoder", encoder);
  if (projection) {
    out.push_back({"projection.weight", projection->weight});
    out.push_back({"projection.bias", projection->bias});
  }
  append_lstm(out, "theta", theta);
  out.push_back({"fc.weight", fc.weight});
  out.push_back({"fc.bias", fc.bias});
  for (std::size_t i = 0; i < phi.size(); ++i) append_lstm(out, "phi" + std::to_string(i), phi[i]);
  return out;
}

std::vector<DArray> LinkedModel::parameter_arrays() const {
  std::vector<DArray> out;
  for (auto& p : parameters()) out.push_back(p.array);
  return out;
}

std::size_t LinkedModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.array.size();
  return n;
}

LinkedModel LinkedModel::clone() const {
  LinkedModel out = *this;
  out.encoder = clone_lstm(encoder);
  if (projection) out.projection = clone_linear(*projection);
  out.theta = clone_lstm(theta);
  out.fc = clone_linear(fc);
  for (auto& p : out.phi) p = clone_lstm(p);
  return out;
}

LinkedModel make_model(Architecture architecture, const ModelDims& dims,
                       std::vector<SivSpec> sivs, std::uint64_t seed) {
  if (dims.input_length == 0 || dims.horizon == 0 || dims.hidden == 0 || dims.layers == 0) {
    throw ContractError("make_model: all dimensions must be positive");
  }
  LinkedModel m;
  m.architecture = architecture;
  m.dims = dims;
  m.sivs = std::move(sivs);
  for (const auto& s : m.sivs) validate(s, m.channels());
  const auto mech = mechanisms(architecture);
  if ((mech.siv_decoders || mech.siv_input_to_theta) && m.sivs.empty()) {
    throw ContractError(std::string("architecture ") + architecture_name(architecture) +
                        " needs at least one SIV");
  }

  nn::Rng rng(seed);
  const std::size_t H = dims.hidden;
  m.encoder = nn::init_stacked_lstm(m.channels(), H, dims.layers, dims.bidirectional, rng);
  if (dims.bidirectional) m.projection = nn::init_linear(2 * H, H, H, rng);
  m.theta = nn::init_stacked_lstm(theta_input_width(architecture, dims, m.sivs.size()), H,
                                  dims.layers, false, rng);
  m.fc = nn::init_linear(H, 1, H, rng);
  if (mech.siv_decoders) {
    for (std::size_t i = 0; i < m.sivs.size(); ++i) {
      m.phi.push_back(
          nn::init_stacked_lstm(phi_input_width(architecture, dims), H, dims.layers, false, rng));
    }
  }
  return m;
}

Checkpoint to_checkpoint(const LinkedModel& m) {
  Checkpoint ck;
  ck.metadata["architecture"] = architecture_name(m.architecture);
  ck.metadata["input_length"] = std::to_string(m.dims.input_length);
  ck.metadata["horizon"] = std::to_string(m.dims.horizon);
  ck.metadata["hidden"] = std::to_string(m.dims.hidden);
  ck.metadata["layers"] = std::to_string(m.dims.layers);
  ck.metadata["bidirectional"] = m.dims.bidirectional ? "1" : "0";
  ck.metadata["siv_count"] = std::to_string(m.sivs.size());
  for (std::size_t i = 0; i < m.sivs.size(); ++i) {
    const auto& s = m.sivs[i];
    ck.metadata["siv." + std::to_string(i)] =
        s.name + " " + std::to_string(s.channel) + " " + std::to_string(s.sign);
  }
  ck.params = m.parameters();
  return ck;
}

LinkedModel from_checkpoint(const Checkpoint& ck) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = ck.metadata.find(key);
    if (it == ck.metadata.end()) throw DataError("checkpoint metadata lacks '" + key + "'");
    return it->second;
  };
  auto to_size = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(get(key)));
    } catch (const std::logic_error&) {
      throw DataError("checkpoint metadata '" + key + "' is not an integer");
    }
  };
  ModelDims dims;
  dims.input_length = to_size("input_length");
  dims.horizon = to_size("horizon");
  dims.hidden = to_size("hidden");
  dims.layers = to_size("layers");
  dims.bidirectional = get("bidirectional") == "1";
  std::vector<SivSpec> sivs;
  const std::size_t n = to_size("siv_count");
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream ss(get("siv." + std::to_string(i)));
    SivSpec s;
    if (!(ss >> s.name >> s.channel >> s.sign)) {
      throw DataError("checkpoint metadata siv." + std::to_string(i) + " is malformed");
    }
    sivs.push_back(s);
  }
  LinkedModel m = make_model(parse_architecture(get("architecture")), dims, sivs, 0);
  auto params = m.parameters();
  assign_params(params, ck.params);
  return m;
}

// Batches ---------------------------------------------------------------------

Batch make_batch(const transform::WindowSet& w, std::span<const std::size_t> indices,
                 const std::vector<SivSpec>& sivs) {
  if (indices.empty()) throw DataError("make_batch: empty batch");
  for (const auto& s : sivs) validate(s, w.channels);
  const std::size_t B = indices.size(), T = w.input_length, C = w.channels, h = w.horizon;
  Batch b;
  b.size = B;
  b.input_length = T;
  b.steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> v(B * C);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t c = 0; c < C; ++c) v[r * C + c] = w.input(indices[r], t, c);
    }
    b.steps.push_back(DArray::from_values({B, C}, std::move(v)));
  }
  for (const auto& s : sivs) {
    std::vector<double> v(B * T);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t t = 0; t < T; ++t) v[r * T + t] = w.input(indices[r], t, s.channel);
    }
    b.siv_windows.push_back(std::move(v));
  }
  std::vector<double> labels(B * h);
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t j = 0; j < h; ++j) labels[r * h + j] = w.label(indices[r], j);
  }
  b.labels = DArray::from_values({B, h}, std::move(labels));
  return b;
}

Batch make_batch(const transform::WindowSet& w, const std::vector<SivSpec>& sivs) {
  std::vector<std::size_t> all(w.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(w, all, sivs);
}

// SIV input shaping -----------------------------------------------------------

std::vector<double> shifted_siv_input(std::span<const double> window, std::size_t step,
                                      std::size_t horizon) {
  if (step < 1 || step > horizon) {
    throw ContractError("shifted_siv_input: step " + std::to_string(step) +
                        " outside 1.." + std::to_string(horizon));
  }
  std::vector<double> out(window.size() + horizon, 0.0);
  const std::size_t lead = horizon - (step - 1);
  std::copy(window.begin(), window.end(), out.begin() + lead);
  return out;
}

std::vector<double> scale_siv_to_state(std::span<const double> siv,
                                       std::span<const double> state) {
  std::vector<double> out(siv.begin(), siv.end());
  if (siv.empty() || state.empty()) return out;
  double siv_mean = 0.0, state_mean = 0.0;
  for (double v : siv) siv_mean += v;
  for (double v : state) state_mean += v;
  siv_mean /= static_cast<double>(siv.size());
  state_mean /= static_cast<double>(state.size());
  if (siv_mean == 0.0) return out;
  const double factor = state_mean / siv_mean;
  for (auto& v : out) v *= factor;
  return out;
}

DArray scale_siv_to_state(Tape& tape, const DArray& siv, const DArray& state) {
  if (siv.rank() != 2 || state.rank() != 2 || siv.dim(0) != state.dim(0)) {
    throw DimensionError("scale_siv_to_state: " + ad::to_string(siv.shape()) + " vs state " +
                         ad::to_string(state.shape()));
  }
  const std::size_t B = siv.dim(0), n = siv.dim(1);
  std::vector<double> inv(B), offset(B);
  auto v = siv.values();
  for (std::size_t r = 0; r < B; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += v[r * n + j];
    const double m = acc / static_cast<double>(n);
    inv[r] = m == 0.0 ? 0.0 : 1.0 / m;
    offset[r] = m == 0.0 ? 1.0 : 0.0;
  }
  DArray factor = ad::mul(tape, ad::row_mean(tape, state),
                          DArray::from_values({B, 1}, std::move(inv)));
  factor = ad::add(tape, factor, DArray::from_values({B, 1}, std::move(offset)));
  return ad::scale_rows(tape, siv, factor);
}

// Forward passes --------------------------------------------------------------

namespace {

// Shifted SIV inputs for the selected rows as an [rows × (T+h)] constant.
DArray shifted_matrix(const Batch& b, std::size_t siv, std::span<const std::size_t> rows,
                      std::size_t step, std::size_t horizon) {
  const std::size_t T = b.input_length;
  const std::size_t width = T + horizon;
  std::vector<double> v(rows.size() * width, 0.0);
  const std::size_t lead = horizon - (step - 1);
  const auto& src = b.siv_windows[siv];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + rows[i] * T, T, v.begin() + i * width + lead);
  }
  return DArray::from_values({rows.size(), width}, std::move(v));
}

void check_batch(const LinkedModel& m, const Batch& b) {
  if (b.steps.size() != m.dims.input_length) {
    throw DimensionError("batch has " + std::to_string(b.steps.size()) +
                         " input steps, model expects T=" + std::to_string(m.dims.input_length));
  }
  if (b.steps[0].dim(1) != m.channels()) {
    throw DimensionError("batch has " + std::to_string(b.steps[0].dim(1)) +
                         " channels, model expects " + std::to_string(m.channels()));
  }
  if (b.siv_windows.size() != m.sivs.size()) {
    throw DimensionError("batch carries " + std::to_string(b.siv_windows.size()) +
                         " SIV windows, model has " + std::to_string(m.sivs.size()) + " SIVs");
  }
}

ForecastTrace run(Tape& tape, const LinkedModel& m, const Batch& b, const Mechanisms& mech) {
  check_batch(m, b);
  const std::size_t B = b.size, h = m.dims.horizon, H = m.dims.hidden, S = m.sivs.size();

  if (mech.siv_decoders) {
    if (m.phi.size() != S) {
      throw DimensionError("model has " + std::to_string(m.phi.size()) + " SIV decoders for " +
                           std::to_string(S) + " SIVs");
    }
    const std::size_t want = H + (mech.siv_input_to_phi ? m.dims.input_length + h : 0);
    for (const auto& p : m.phi) {
      if (p.input_size != want) {
        throw DimensionError("SIV decoder input width " + std::to_string(p.input_size) +
                             " does not match the requested variant (" + std::to_string(want) +
                             ")");
      }
    }
  }
  const std::size_t theta_want =
      H + (mech.siv_input_to_theta ? S * (m.dims.input_length + h) : 0);
  if (m.theta.input_size != theta_want) {
    throw DimensionError("target decoder input width " + std::to_string(m.theta.input_size) +
                         " does not match the requested variant (" +
                         std::to_string(theta_want) + ")");
  }

  ForecastTrace trace;
  std::vector<std::size_t> all_rows(B);
  for (std::size_t r = 0; r < B; ++r) all_rows[r] = r;

  // Rows routed through each phi.
  std::vector<std::vector<std::size_t>> engaged(S);
  trace.gated.assign(S, std::vector<bool>(B, false));
  if (mech.siv_decoders) {
    const std::size_t T = m.dims.input_length;
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t r = 0; r < B; ++r) {
        bool present = !mech.gating;
        for (std::size_t t = 0; t < T && !present; ++t) {
          present = b.siv_windows[i][r * T + t] != 0.0;
        }
        if (present) {
          engaged[i].push_back(r);
          trace.gated[i][r] = true;
        }
      }
    }
  }

  DArray h_psi = nn::encode_sequence(tape, m.encoder, b.steps);
  if (m.projection) h_psi = nn::linear(tape, *m.projection, h_psi);

  nn::DecoderState theta_state = nn::initial_decoder_state(m.theta, B);
  std::vector<nn::DecoderState> phi_state;
  if (mech.siv_decoders) {
    for (std::size_t i = 0; i < S; ++i) {
      // A phi with no engaged rows is never stepped and keeps an empty state.
      phi_state.push_back(engaged[i].empty() ? nn::DecoderState{}
                                             : nn::initial_decoder_state(m.phi[i], engaged[i].size()));
    }
  }

  DArray prev = h_psi;
  std::vector<DArray> outputs;
  for (std::size_t step = 1; step <= h; ++step) {
    DArray theta_in = prev;
    if (mech.siv_input_to_theta) {
      std::vector<DArray> parts{prev};
      for (std::size_t i = 0; i < S; ++i) {
        parts.push_back(scale_siv_to_state(tape, shifted_matrix(b, i, all_rows, step, h), prev));
      }
      theta_in = ad::concat(tape, parts, 1);
    }
    DArray h_theta = nn::decoder_step(tape, m.theta, theta_in, theta_state);
    trace.theta_states.push_back(h_theta);

    DArray combined = h_theta;
    std::vector<DArray> step_contrib(S);
    for (std::size_t i = 0; i < S; ++i) {
      const auto& rows = engaged[i];
      if (!mech.siv_decoders || rows.empty()) {
        step_contrib[i] = DArray::zeros({B, H});
        continue;
      }
      const bool every_row = rows.size() == B;
      DArray sub_prev = every_row ? prev : ad::gather_rows(tape, prev, rows);
      DArray phi_in = sub_prev;
      if (mech.siv_input_to_phi) {
        DArray siv = scale_siv_to_state(tape, shifted_matrix(b, i, rows, step, h), sub_prev);
        phi_in = ad::concat(tape, {sub_prev, siv}, 1);
      }
      DArray h_phi = nn::decoder_step(tape, m.phi[i], phi_in, phi_state[i]);
      DArray contrib = mech.restriction ? ad::relu(tape, h_phi) : h_phi;
      if (mech.signed_contribution && m.sivs[i].sign != 1) {
        contrib = ad::scale(tape, contrib, static_cast<double>(m.sivs[i].sign));
      }
      if (!every_row) contrib = ad::scatter_rows(tape, contrib, rows, B);
      combined = ad::add(tape, combined, contrib);
      step_contrib[i] = contrib;
    }
    trace.contributions.push_back(std::move(step_contrib));
    outputs.push_back(nn::linear(tape, m.fc, combined));
    prev = combined;
  }
  trace.predictions = ad::concat(tape, outputs, 1);
  return trace;
}

}  // namespace

ForecastTrace forward(Tape& tape, const LinkedModel& m, const Batch& b) {
  return run(tape, m, b, mechanisms(m.architecture));
}

ForecastTrace forward_linked(Tape& tape, const LinkedModel& m, const Batch& b) {
  return run(tape, m, b, mechanisms(Architecture::kProposed));
}

DArray forward_baseline(Tape& tape, const LinkedModel& m, const Batch& b) {
  return run(tape, m, b, mechanisms(Architecture::kEncDec)).predictions;
}

DArray forward_full_capacity(Tape& tape, const LinkedModel& m, const Batch& b) {
  return run(tape, m, b, mechanisms(Architecture::kFullCapacity)).predictions;
}

DArray ablated_forward(Tape& tape, Ablation variant, const LinkedModel& m, const Batch& b) {
  return run(tape, m, b, mechanisms(architecture_of(variant))).predictions;
}

LinkedModel flip_restriction_sign(const LinkedModel& m) {
  LinkedModel out = m.clone();
  for (auto& s : out.sivs) s.sign = -s.sign;
  return out;
}

}  // namespace sivcast::model
