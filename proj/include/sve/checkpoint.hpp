#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sve/trainer.hpp"

namespace sve {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'V', 'E', 'C'};

inline std::string kernel_name(AttentionKernel::Kind k) {
  return k == AttentionKernel::Kind::softmax ? "softmax" : "entmax";
}

inline std::string regularizer_name(RegularizerConfig::Kind k) {
  switch (k) {
    case RegularizerConfig::Kind::orthogonality: return "orthogonality";
    case RegularizerConfig::Kind::stable_rank: return "stable-rank";
    case RegularizerConfig::Kind::von_neumann: return "von-neumann";
    default: return "none";
  }
}

inline RegularizerConfig::Kind regularizer_from_name(const std::string& name) {
  if (name == "none") return RegularizerConfig::Kind::none;
  if (name == "orthogonality") return RegularizerConfig::Kind::orthogonality;
  if (name == "stable-rank") return RegularizerConfig::Kind::stable_rank;
  if (name == "von-neumann") return RegularizerConfig::Kind::von_neumann;
  throw std::invalid_argument("unknown regularizer '" + name + "'");
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lr"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["max_steps"] = c.max_steps;
  j["eval_every"] = c.eval_every;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["init"] = c.init.kind == InitScheme::Kind::gaussian ? "gaussian" : "orthogonal";
  j["init_std"] = c.init.std_dev;
  j["kernel"] = kernel_name(c.kernel.kind);
  j["alpha"] = c.kernel.alpha.value;
  j["learn_alpha"] = c.kernel.alpha.learnable;
  j["regularizer"] = regularizer_name(c.regularizer.kind);
  j["weight"] = c.regularizer.weight;
  j["dropout"] = c.dropout;
  j["embedding_dim"] = c.embedding_dim;
  j["shared_count"] = c.shared_count;
  j["latent_dim"] = c.latent_dim;
  j["layers"] = c.layers;
  j["validation_fraction"] = c.validation_fraction;
  return j;
}

// Strict: every key must be known; misspellings abort before any compute.
inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lr") c.learning_rate = value.get<double>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "max_steps") c.max_steps = value.get<std::size_t>();
    else if (key == "eval_every") c.eval_every = value.get<std::size_t>();
    else if (key == "patience") c.patience = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "init") {
      const std::string name = value.get<std::string>();
      if (name == "gaussian") c.init.kind = InitScheme::Kind::gaussian;
      else if (name == "orthogonal") c.init.kind = InitScheme::Kind::orthogonal_det_plus_one;
      else throw std::invalid_argument("config: unknown init scheme '" + name + "'");
    } else if (key == "init_std") c.init.std_dev = value.get<double>();
    else if (key == "kernel") {
      const std::string name = value.get<std::string>();
      if (name == "softmax") c.kernel.kind = AttentionKernel::Kind::softmax;
      else if (name == "entmax") c.kernel.kind = AttentionKernel::Kind::entmax;
      else throw std::invalid_argument("config: unknown kernel '" + name + "'");
    } else if (key == "alpha") c.kernel.alpha.value = value.get<double>();
    else if (key == "learn_alpha") c.kernel.alpha.learnable = value.get<bool>();
    else if (key == "regularizer") c.regularizer.kind = regularizer_from_name(value.get<std::string>());
    else if (key == "weight") c.regularizer.weight = value.get<double>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "embedding_dim") c.embedding_dim = value.get<std::size_t>();
    else if (key == "shared_count") c.shared_count = value.get<std::size_t>();
    else if (key == "latent_dim") c.latent_dim = value.get<std::size_t>();
    else if (key == "layers") c.layers = value.get<std::size_t>();
    else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return c;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct TaskSignature {
  std::string name;
  std::size_t n_inputs = 0;
  std::size_t n_classes = 0;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  Model model;
  std::size_t step = 0;
  Rng rng;
  std::vector<TaskSignature> tasks;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t from_hex64(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

// Tensors in declared order, biases as 1 x len.
struct TensorRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  const double* data;
};

inline void collect_tensors(const Model& m, std::vector<TensorRef>& out) {
  out.push_back({"Z", m.store.Z.rows, m.store.Z.cols, m.store.Z.data.data()});
  out.push_back({"S", m.store.S.rows, m.store.S.cols, m.store.S.data.data()});
  out.push_back({"Z_out", m.store.Z_out.rows, m.store.Z_out.cols, m.store.Z_out.data.data()});
  auto film = [&](const std::string& prefix, const FilmLayer& l) {
    out.push_back({prefix + ".weight", l.weight.rows, l.weight.cols, l.weight.data.data()});
    out.push_back({prefix + ".bias", 1, l.bias.size(), l.bias.data()});
    out.push_back({prefix + ".gamma_map", l.gamma_map.rows, l.gamma_map.cols, l.gamma_map.data.data()});
    out.push_back({prefix + ".beta_map", l.beta_map.rows, l.beta_map.cols, l.beta_map.data.data()});
  };
  for (std::size_t i = 0; i < m.params.encoder_f.size(); ++i)
    film("f." + std::to_string(i), m.params.encoder_f[i]);
  for (std::size_t i = 0; i < m.params.decoder_g1.size(); ++i) {
    const auto& l = m.params.decoder_g1[i];
    const std::string prefix = "g1." + std::to_string(i);
    out.push_back({prefix + ".weight", l.weight.rows, l.weight.cols, l.weight.data.data()});
    out.push_back({prefix + ".bias", 1, l.bias.size(), l.bias.data()});
  }
  for (std::size_t i = 0; i < m.params.decoder_g2.size(); ++i)
    film("g2." + std::to_string(i), m.params.decoder_g2[i]);
  out.push_back({"head.weight", m.params.head.weight.rows, m.params.head.weight.cols,
                 m.params.head.weight.data.data()});
  out.push_back({"head.bias", 1, m.params.head.bias.size(), m.params.head.bias.data()});
}

inline std::vector<double*> collect_tensor_slots(Model& m) {
  std::vector<double*> slots;
  std::vector<TensorRef> refs;
  collect_tensors(m, refs);
  for (const auto& r : refs) slots.push_back(const_cast<double*>(r.data));
  return slots;
}

}  // namespace detail

// Small JSON header (shapes, version, config and its hash) followed by the
// raw little-endian float64 tensors in declared order.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "sve-checkpoint";
  header["version"] = ckpt.version;
  header["config"] = config_to_json(ckpt.config);
  header["config_hash"] = detail::hex64(fnv1a(header["config"].dump()));
  header["step"] = ckpt.step;
  header["alpha"] = ckpt.model.kernel.alpha.value;
  header["rng"] = {{"algorithm", Rng::kAlgorithm},
                   {"seed", detail::hex64(ckpt.rng.seed)},
                   {"state", {detail::hex64(ckpt.rng.state[0]), detail::hex64(ckpt.rng.state[1]),
                              detail::hex64(ckpt.rng.state[2]), detail::hex64(ckpt.rng.state[3])}}};
  header["tasks"] = nlohmann::json::array();
  for (const auto& t : ckpt.tasks)
    header["tasks"].push_back({{"name", t.name}, {"n_inputs", t.n_inputs}, {"n_classes", t.n_classes}});
  std::vector<detail::TensorRef> tensors;
  detail::collect_tensors(ckpt.model, tensors);
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors)
    header["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& t : tensors)
    out.write(reinterpret_cast<const char*>(t.data),
              static_cast<std::streamsize>(t.rows * t.cols * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string header_text(len, '\0');
  in.read(header_text.data(), len);
  if (!in) throw std::runtime_error("load_checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(header_text);
  if (header.at("version").get<std::uint32_t>() != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.version = header["version"].get<std::uint32_t>();
  ckpt.config = config_from_json(header.at("config"));
  ckpt.step = header.at("step").get<std::size_t>();
  ckpt.rng.seed = detail::from_hex64(header.at("rng").at("seed").get<std::string>());
  for (std::size_t i = 0; i < 4; ++i)
    ckpt.rng.state[i] = detail::from_hex64(header["rng"]["state"][i].get<std::string>());
  for (const auto& t : header.at("tasks"))
    ckpt.tasks.push_back({t.at("name").get<std::string>(), t.at("n_inputs").get<std::size_t>(),
                          t.at("n_classes").get<std::size_t>()});

  // rebuild parameter shapes from the config, then read tensors in order
  ckpt.model.kernel = ckpt.config.kernel;
  ckpt.model.kernel.alpha.value = header.at("alpha").get<double>();
  const auto& tensors = header.at("tensors");
  auto shape_of = [&](std::size_t idx) {
    return std::pair<std::size_t, std::size_t>(tensors[idx]["rows"].get<std::size_t>(),
                                               tensors[idx]["cols"].get<std::size_t>());
  };
  const auto [zn, zc] = shape_of(0);
  const auto [sd, sc] = shape_of(1);
  const auto [on, oc] = shape_of(2);
  ckpt.model.store.Z = Matrix(zn, zc);
  ckpt.model.store.S = Matrix(sd, sc);
  ckpt.model.store.Z_out = Matrix(on, oc);
  Rng dummy(0);
  ckpt.model.params = init_predictor(ckpt.config.embedding_dim, ckpt.config.latent_dim,
                                     ckpt.config.layers, ckpt.config.dropout, dummy);

  std::vector<double*> slots = detail::collect_tensor_slots(ckpt.model);
  if (slots.size() != tensors.size())
    throw std::runtime_error("load_checkpoint: tensor list does not match config shapes");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto [r, c] = shape_of(i);
    in.read(reinterpret_cast<char*>(slots[i]), static_cast<std::streamsize>(r * c * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data");
  }
  return ckpt;
}

inline std::vector<TaskSignature> task_signatures(const TaskBundle& bundle) {
  std::vector<TaskSignature> sigs;
  for (const auto& t : bundle.tasks)
    sigs.push_back({t.spec.name, t.spec.n_inputs, t.spec.n_classes});
  return sigs;
}

// A checkpoint only fits a bundle whose per-task variable counts match.
inline void check_compatible(const Checkpoint& ckpt, const TaskBundle& bundle) {
  if (ckpt.tasks.size() != bundle.tasks.size())
    throw std::runtime_error("checkpoint incompatible: " + std::to_string(ckpt.tasks.size()) +
                             " tasks in checkpoint, " + std::to_string(bundle.tasks.size()) +
                             " in bundle");
  for (std::size_t i = 0; i < bundle.tasks.size(); ++i) {
    const auto& spec = bundle.tasks[i].spec;
    const auto& sig = ckpt.tasks[i];
    if (sig.name != spec.name || sig.n_inputs != spec.n_inputs ||
        sig.n_classes != spec.n_classes)
      throw std::runtime_error("checkpoint incompatible at task '" + spec.name + "': checkpoint has ('" +
                               sig.name + "', " + std::to_string(sig.n_inputs) + " inputs, " +
                               std::to_string(sig.n_classes) + " classes), bundle has (" +
                               std::to_string(spec.n_inputs) + " inputs, " +
                               std::to_string(spec.n_classes) + " classes)");
  }
}

}  // namespace sve
