#pragma once

#include <span>

#include "sve/matrix.hpp"

namespace sve {

// One conditioned block: affine, FiLM modulation from the conditioning
// embedding, ReLU, dropout. gamma = gamma_map e, beta = beta_map e.
struct FilmLayer {
  Matrix weight;     // H_out x H_in
  std::vector<double> bias;
  Matrix gamma_map;  // H_out x C
  Matrix beta_map;   // H_out x C
};

// Unconditioned block: affine, ReLU, dropout.
struct AffineLayer {
  Matrix weight;
  std::vector<double> bias;
};

// Encoder f (first layer maps the scalar value, width 1 -> H), decoder g1
// (no conditioning, per-sample work shared across targets), decoder g2
// (conditioned on the target embedding) ending in a plain scalar head.
struct PredictorParams {
  std::vector<FilmLayer> encoder_f;
  std::vector<AffineLayer> decoder_g1;
  std::vector<FilmLayer> decoder_g2;
  AffineLayer head;  // 1 x H, no activation
  std::size_t latent_dim = 0;     // H
  std::size_t embedding_dim = 0;  // C
  double dropout = 0.0;
};

struct DropoutMode {
  bool training = false;
  Rng* rng = nullptr;  // required when training and dropout rate > 0
};

namespace detail {

struct FilmTrace {
  std::vector<double> input;
  std::vector<double> preact;     // W h + b
  std::vector<double> gamma;
  std::vector<double> modulated;  // gamma . preact + beta
  std::vector<double> cond;       // conditioning embedding
  std::vector<std::uint8_t> mask;
};

struct AffineTrace {
  std::vector<double> input;
  std::vector<double> preact;
  std::vector<std::uint8_t> mask;
};

inline void apply_dropout(std::vector<double>& v, std::vector<std::uint8_t>& mask,
                          double rate, const DropoutMode& mode) {
  if (!mode.training || rate <= 0.0) return;
  if (mode.rng == nullptr) throw std::invalid_argument("dropout: training mode needs an rng");
  mask.resize(v.size());
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = mode.rng->uniform() >= rate ? 1 : 0;
    v[i] = mask[i] ? v[i] / keep : 0.0;
  }
}

inline std::vector<double> film_forward(const FilmLayer& layer, std::span<const double> input,
                                        std::span<const double> cond, double rate,
                                        const DropoutMode& mode, FilmTrace* trace) {
  const std::size_t h_out = layer.weight.rows;
  std::vector<double> preact(h_out), gamma(h_out), out(h_out);
  for (std::size_t i = 0; i < h_out; ++i) {
    preact[i] = layer.bias[i] + dot(layer.weight.row(i), input);
    gamma[i] = dot(layer.gamma_map.row(i), cond);
    out[i] = gamma[i] * preact[i] + dot(layer.beta_map.row(i), cond);
  }
  std::vector<double> modulated = out;
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  std::vector<std::uint8_t> mask;
  apply_dropout(out, mask, rate, mode);
  if (trace) {
    trace->input.assign(input.begin(), input.end());
    trace->preact = std::move(preact);
    trace->gamma = std::move(gamma);
    trace->modulated = std::move(modulated);
    trace->cond.assign(cond.begin(), cond.end());
    trace->mask = std::move(mask);
  }
  return out;
}

inline std::vector<double> affine_forward(const AffineLayer& layer, std::span<const double> input,
                                          double rate, const DropoutMode& mode,
                                          AffineTrace* trace) {
  const std::size_t h_out = layer.weight.rows;
  std::vector<double> preact(h_out);
  for (std::size_t i = 0; i < h_out; ++i)
    preact[i] = layer.bias[i] + dot(layer.weight.row(i), input);
  std::vector<double> out(h_out);
  for (std::size_t i = 0; i < h_out; ++i) out[i] = preact[i] > 0.0 ? preact[i] : 0.0;
  std::vector<std::uint8_t> mask;
  apply_dropout(out, mask, rate, mode);
  if (trace) {
    trace->input.assign(input.begin(), input.end());
    trace->preact = std::move(preact);
    trace->mask = std::move(mask);
  }
  return out;
}

// d_out -> d_input, accumulating parameter and conditioning gradients.
inline std::vector<double> film_backward(const FilmLayer& layer, const FilmTrace& trace,
                                         std::vector<double> d_out, double rate,
                                         FilmLayer& grads, std::span<double> d_cond) {
  const std::size_t h_out = layer.weight.rows;
  if (!trace.mask.empty()) {
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < h_out; ++i) d_out[i] = trace.mask[i] ? d_out[i] / keep : 0.0;
  }
  std::vector<double> d_input(trace.input.size(), 0.0);
  for (std::size_t i = 0; i < h_out; ++i) {
    const double dm = trace.modulated[i] > 0.0 ? d_out[i] : 0.0;
    if (dm == 0.0) continue;
    const double d_gamma = dm * trace.preact[i];
    const double da = dm * trace.gamma[i];
    grads.bias[i] += da;
    auto gw = grads.weight.row(i);
    const auto w = layer.weight.row(i);
    for (std::size_t j = 0; j < trace.input.size(); ++j) {
      gw[j] += da * trace.input[j];
      d_input[j] += da * w[j];
    }
    auto gg = grads.gamma_map.row(i);
    auto gb = grads.beta_map.row(i);
    const auto gm = layer.gamma_map.row(i);
    const auto bm = layer.beta_map.row(i);
    for (std::size_t j = 0; j < trace.cond.size(); ++j) {
      gg[j] += d_gamma * trace.cond[j];
      gb[j] += dm * trace.cond[j];
      d_cond[j] += d_gamma * gm[j] + dm * bm[j];
    }
  }
  return d_input;
}

inline std::vector<double> affine_backward(const AffineLayer& layer, const AffineTrace& trace,
                                           std::vector<double> d_out, double rate,
                                           AffineLayer& grads) {
  const std::size_t h_out = layer.weight.rows;
  if (!trace.mask.empty()) {
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < h_out; ++i) d_out[i] = trace.mask[i] ? d_out[i] / keep : 0.0;
  }
  std::vector<double> d_input(trace.input.size(), 0.0);
  for (std::size_t i = 0; i < h_out; ++i) {
    const double da = trace.preact[i] > 0.0 ? d_out[i] : 0.0;
    if (da == 0.0) continue;
    grads.bias[i] += da;
    auto gw = grads.weight.row(i);
    const auto w = layer.weight.row(i);
    for (std::size_t j = 0; j < trace.input.size(); ++j) {
      gw[j] += da * trace.input[j];
      d_input[j] += da * w[j];
    }
  }
  return d_input;
}

}  // namespace detail

// Cached activations for one sample, enough to rerun the backward pass.
struct ForwardTrace {
  std::vector<std::vector<detail::FilmTrace>> encoder;  // per observed variable
  std::vector<double> latent;
  std::vector<detail::AffineTrace> g1;
  std::vector<double> g1_out;
  std::vector<std::vector<detail::FilmTrace>> g2;  // per target
  std::vector<std::vector<double>> g2_head_input;  // per target
  std::vector<double> scores;
};

inline PredictorParams init_predictor(std::size_t c, std::size_t h, std::size_t depth,
                                      double dropout, Rng& rng) {
  if (depth < 1) throw std::invalid_argument("init_predictor: depth must be >= 1");
  PredictorParams p;
  p.latent_dim = h;
  p.embedding_dim = c;
  p.dropout = dropout;
  // FiLM gamma/beta are linear in the conditioning embedding, so map scales
  // are set against the conditioner's expected norm: attention-averaged
  // processed embeddings for the encoder (norm ~ 0.5 sqrt(C)), raw target
  // embeddings for g2 (norm ~ sqrt(C)). Both aim the per-layer modulation
  // gain at ~0.5 so stacked layers do not amplify tail activations.
  const double encoder_map_std = 1.0 / std::sqrt(static_cast<double>(c));
  const double g2_map_std = 0.5 / std::sqrt(static_cast<double>(c));
  auto film = [&](std::size_t h_in, double map_std) {
    FilmLayer layer;
    layer.weight = random_gaussian(h, h_in, std::sqrt(2.0 / static_cast<double>(h_in)), rng);
    layer.bias.assign(h, 0.0);
    layer.gamma_map = random_gaussian(h, c, map_std, rng);
    layer.beta_map = random_gaussian(h, c, map_std, rng);
    return layer;
  };
  p.encoder_f.push_back(film(1, encoder_map_std));
  for (std::size_t l = 1; l < depth; ++l) p.encoder_f.push_back(film(h, encoder_map_std));
  for (std::size_t l = 0; l < depth; ++l) {
    AffineLayer layer;
    layer.weight = random_gaussian(h, h, std::sqrt(2.0 / static_cast<double>(h)), rng);
    layer.bias.assign(h, 0.0);
    p.decoder_g1.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < depth; ++l) p.decoder_g2.push_back(film(h, g2_map_std));
  // zero head: scores start at 0, so early hinge gradients are bounded by 2
  // per class regardless of the depth of the stacks above
  p.head.weight = Matrix(1, h);
  p.head.bias.assign(1, 0.0);
  return p;
}

inline PredictorParams zeros_like(const PredictorParams& p) {
  PredictorParams g = p;
  auto clear = [](auto& container) { std::fill(container.begin(), container.end(), 0.0); };
  for (auto& l : g.encoder_f) {
    clear(l.weight.data);
    clear(l.bias);
    clear(l.gamma_map.data);
    clear(l.beta_map.data);
  }
  for (auto& l : g.decoder_g1) {
    clear(l.weight.data);
    clear(l.bias);
  }
  for (auto& l : g.decoder_g2) {
    clear(l.weight.data);
    clear(l.bias);
    clear(l.gamma_map.data);
    clear(l.beta_map.data);
  }
  clear(g.head.weight.data);
  clear(g.head.bias);
  return g;
}

// f(x_i, f_i): the encoder stack on one (value, embedding) pair.
inline std::vector<double> encode(const PredictorParams& params, double x,
                                  std::span<const double> embedding, const DropoutMode& mode,
                                  std::vector<detail::FilmTrace>* traces = nullptr) {
  if (embedding.size() != params.embedding_dim)
    throw std::invalid_argument("encode: embedding length mismatch");
  std::vector<double> h{x};
  for (std::size_t l = 0; l < params.encoder_f.size(); ++l) {
    detail::FilmTrace* t = nullptr;
    if (traces) {
      traces->emplace_back();
      t = &traces->back();
    }
    h = detail::film_forward(params.encoder_f[l], h, embedding, params.dropout, mode, t);
  }
  return h;
}

// E[y_j | x] = g2(g1(sum_i f(x_i, f_i)), z_j) for every target row. g1 runs
// once per sample; its output is reused across targets.
inline std::vector<double> predict(const PredictorParams& params, const Matrix& processed,
                                   const Matrix& z_out, std::span<const std::size_t> target_rows,
                                   std::span<const double> x, const DropoutMode& mode,
                                   ForwardTrace* trace = nullptr) {
  const std::size_t n = x.size();
  if (processed.rows != n) throw std::domain_error("predict: arity mismatch with embeddings");
  const std::size_t h_dim = params.latent_dim;

  if (trace) {
    *trace = ForwardTrace{};
    trace->encoder.resize(n);
  }
  std::vector<double> latent(h_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto out = encode(params, x[i], processed.row(i), mode,
                      trace ? &trace->encoder[i] : nullptr);
    for (std::size_t j = 0; j < h_dim; ++j) latent[j] += out[j];
  }

  std::vector<double> h = latent;
  if (trace) {
    trace->latent = latent;
    trace->g1.resize(params.decoder_g1.size());
  }
  for (std::size_t l = 0; l < params.decoder_g1.size(); ++l)
    h = detail::affine_forward(params.decoder_g1[l], h, params.dropout, mode,
                               trace ? &trace->g1[l] : nullptr);
  if (trace) trace->g1_out = h;

  std::vector<double> scores(target_rows.size());
  if (trace) {
    trace->g2.resize(target_rows.size());
    trace->g2_head_input.resize(target_rows.size());
  }
  for (std::size_t j = 0; j < target_rows.size(); ++j) {
    const auto z = z_out.row(target_rows[j]);
    std::vector<double> g = h;
    for (std::size_t l = 0; l < params.decoder_g2.size(); ++l) {
      detail::FilmTrace* t = nullptr;
      if (trace) {
        trace->g2[j].emplace_back();
        t = &trace->g2[j].back();
      }
      g = detail::film_forward(params.decoder_g2[l], g, z, params.dropout, mode, t);
    }
    if (trace) trace->g2_head_input[j] = g;
    scores[j] = params.head.bias[0] + dot(params.head.weight.row(0), g);
  }
  if (trace) trace->scores = scores;
  return scores;
}

struct PredictGrads {
  PredictorParams params;  // gradient values in parameter shapes
  Matrix grad_embeddings;  // n x C, processed embeddings
  Matrix grad_targets;     // m x C, target embeddings in target_rows order
};

// Exact reverse pass. Inputs x are data and are not differentiated.
inline PredictGrads predict_backward(const PredictorParams& params, const ForwardTrace& trace,
                                     std::span<const double> upstream_scores) {
  const std::size_t n = trace.encoder.size();
  const std::size_t m = trace.g2.size();
  if (upstream_scores.size() != m)
    throw std::invalid_argument("predict_backward: upstream length mismatch");

  PredictGrads out;
  out.params = zeros_like(params);
  out.grad_embeddings = Matrix(n, params.embedding_dim);
  out.grad_targets = Matrix(m, params.embedding_dim);

  std::vector<double> d_g1_out(params.latent_dim, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double ds = upstream_scores[j];
    out.params.head.bias[0] += ds;
    {
      auto gw = out.params.head.weight.row(0);
      const auto& head_in = trace.g2_head_input[j];
      for (std::size_t t = 0; t < head_in.size(); ++t) gw[t] += ds * head_in[t];
    }
    std::vector<double> d(params.latent_dim);
    const auto w = params.head.weight.row(0);
    for (std::size_t t = 0; t < d.size(); ++t) d[t] = ds * w[t];
    for (std::size_t l = params.decoder_g2.size(); l-- > 0;)
      d = detail::film_backward(params.decoder_g2[l], trace.g2[j][l], std::move(d),
                                params.dropout, out.params.decoder_g2[l],
                                out.grad_targets.row(j));
    for (std::size_t t = 0; t < d.size(); ++t) d_g1_out[t] += d[t];
  }

  std::vector<double> d_latent = std::move(d_g1_out);
  for (std::size_t l = params.decoder_g1.size(); l-- > 0;)
    d_latent = detail::affine_backward(params.decoder_g1[l], trace.g1[l], std::move(d_latent),
                                       params.dropout, out.params.decoder_g1[l]);

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d = d_latent;
    for (std::size_t l = params.encoder_f.size(); l-- > 0;)
      d = detail::film_backward(params.encoder_f[l], trace.encoder[i][l], std::move(d),
                                params.dropout, out.params.encoder_f[l],
                                out.grad_embeddings.row(i));
  }
  return out;
}

}  // namespace sve
