#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gramalign/data.hpp"
#include "gramalign/error.hpp"
#include "gramalign/heads.hpp"
#include "gramalign/modality.hpp"

namespace gramalign {

/// A named view of one trainable tensor.
struct TensorRef {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<double> data;
};

template <typename Params>
std::vector<TensorRef> tensors_of(Params& p, const std::string& prefix) {
  std::vector<TensorRef> out;
  p.for_each_tensor([&](const std::string& name, std::size_t r, std::size_t c, std::span<double> d) {
    out.push_back({prefix + name, r, c, d});
  });
  return out;
}

struct ModelDims {
  std::array<std::size_t, kNumModalities> input_dims = {768, 768, 768, 1280};
  std::size_t hidden_dim = kProjectorHidden;
  std::size_t shared_dim = kSharedDim;
  std::size_t ic50_hidden = kIc50Hidden;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// The four projectors plus the IC50 head trained during pre-training.
struct AlignmentModel {
  std::array<ProjectionHead, kNumModalities> projectors;
  Ic50Head ic50;

  const ProjectionHead& projector(Modality m) const { return projectors[index_of(m)]; }
  ProjectionHead& projector(Modality m) { return projectors[index_of(m)]; }
  std::size_t shared_dim() const { return projectors[0].params.shape.out_dim(); }

  /// Checkpoint names: proj.<modality>.L<i>.{w,b}, proj.<modality>.ln<i>.{g,b}, ic50.L<i>.{w,b}.
  std::vector<TensorRef> tensors() {
    std::vector<TensorRef> out;
    for (auto& p : projectors) {
      auto t = tensors_of(p.params, "proj." + std::string(name_of(p.modality)) + ".");
      out.insert(out.end(), t.begin(), t.end());
    }
    auto t = tensors_of(ic50.params, "ic50.");
    out.insert(out.end(), t.begin(), t.end());
    return out;
  }

  friend bool operator==(const AlignmentModel& a, const AlignmentModel& b) {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      if (!(a.projectors[m].params == b.projectors[m].params)) return false;
    }
    return a.ic50.params == b.ic50.params;
  }
};

inline AlignmentModel make_model(const ModelDims& dims, std::uint64_t seed) {
  AlignmentModel model;
  for (Modality m : kAllModalities) {
    auto& p = model.projector(m);
    p.modality = m;
    p.params = init_params(projector_shape(dims.input_dims[index_of(m)], dims.hidden_dim, dims.shared_dim),
                           derive_seed(seed, "init.proj", index_of(m)));
  }
  model.ic50.params = init_params(ic50_shape(dims.shared_dim, dims.ic50_hidden), derive_seed(seed, "init.ic50"));
  return model;
}

inline ModelDims dims_of(const AlignmentModel& model) {
  ModelDims d;
  for (Modality m : kAllModalities) d.input_dims[index_of(m)] = model.projector(m).params.shape.in_dim();
  d.hidden_dim = model.projectors[0].params.shape.dims[1];
  d.shared_dim = model.shared_dim();
  d.ic50_hidden = model.ic50.params.shape.dims[1];
  return d;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Round parameters and moments to float32 after every update so that the
  /// float32 checkpoint payload captures the optimizer state exactly.
  bool float32_storage = true;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::uint64_t t = 0;
  std::map<std::string, AdamMoments> moments;
};

namespace detail {
inline double maybe_round(double x, bool to_float) { return to_float ? static_cast<double>(static_cast<float>(x)) : x; }
}  // namespace detail

/// One bias-corrected Adam update of a single tensor at step t (t >= 1).
inline void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& mom, std::uint64_t t,
                        const AdamConfig& cfg) {
  require(param.size() == grad.size(), ErrorCode::ShapeMismatch, "parameter and gradient sizes differ");
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0);
    mom.v.assign(param.size(), 0.0);
  }
  require(mom.m.size() == param.size() && mom.v.size() == param.size(), ErrorCode::ShapeMismatch,
          "moment sizes differ from the parameter");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    mom.m[i] = detail::maybe_round(cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g, cfg.float32_storage);
    mom.v[i] = detail::maybe_round(cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g, cfg.float32_storage);
    const double m_hat = mom.m[i] / bc1;
    const double v_hat = mom.v[i] / bc2;
    param[i] = detail::maybe_round(param[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps), cfg.float32_storage);
  }
}

/// Advances the step counter once and updates every tensor with its gradient.
inline void adam_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads, AdamState& state,
                      const AdamConfig& cfg) {
  require(params.size() == grads.size(), ErrorCode::ShapeMismatch, "parameter and gradient lists differ");
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].name == grads[i].name, ErrorCode::ShapeMismatch, "gradient list out of order at " + params[i].name);
    adam_update(params[i].data, grads[i].data, state.moments[params[i].name], state.t, cfg);
  }
}

// ---------------------------------------------------------------------------
// GCKPT1 checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCkptMagic = "GCKPT1\n";

struct StoredTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;
};

/// JSON header plus float32 tensors keyed by name.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();  // version, config, state, ...
  std::map<std::string, StoredTensor> tensors;

  const StoredTensor& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    require(it != tensors.end(), ErrorCode::MissingTensor, "checkpoint has no tensor '" + name + "'");
    return it->second;
  }
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header = ck.meta;
  header["version"] = 1;
  nlohmann::json dir = nlohmann::json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    require(t.data.size() == t.rows * t.cols, ErrorCode::ShapeMismatch, "tensor " + name + " has inconsistent shape");
    dir[name] = {{"offset", offset}, {"rows", t.rows}, {"cols", t.cols}};
    offset += t.data.size() * 4;
  }
  header["tensors"] = dir;
  std::string out(kCkptMagic);
  out += header.dump();
  out += '\n';
  out += '\0';
  // std::map iteration order equals the (sorted) JSON directory order
  for (const auto& [name, t] : ck.tensors) {
    for (float f : t.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  require(bytes.size() >= kCkptMagic.size() && bytes.compare(0, kCkptMagic.size(), kCkptMagic) == 0, ErrorCode::BadMagic,
          "not a GCKPT1 checkpoint");
  const auto end = bytes.find(std::string_view("\n\0", 2), kCkptMagic.size());
  require(end != std::string::npos, ErrorCode::TruncatedFile, "checkpoint header is not terminated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kCkptMagic.size(), end - kCkptMagic.size()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::size_t payload = end + 2;
  Checkpoint ck;
  for (const auto& [name, entry] : header.at("tensors").items()) {
    StoredTensor t;
    t.rows = entry.at("rows").get<std::size_t>();
    t.cols = entry.at("cols").get<std::size_t>();
    const std::size_t off = payload + entry.at("offset").get<std::size_t>();
    const std::size_t n = t.rows * t.cols;
    require(bytes.size() >= off + 4 * n, ErrorCode::TruncatedFile, "tensor " + name + " runs past the end of the file");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(detail::get_u32(bytes, off + 4 * i));
    ck.tensors.emplace(name, std::move(t));
  }
  header.erase("tensors");
  ck.meta = std::move(header);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

inline StoredTensor store(const TensorRef& t) {
  StoredTensor s{t.rows, t.cols, std::vector<float>(t.data.size())};
  for (std::size_t i = 0; i < t.data.size(); ++i) s.data[i] = static_cast<float>(t.data[i]);
  return s;
}

inline void load_into(const Checkpoint& ck, const TensorRef& t) {
  const auto& s = ck.tensor(t.name);
  require(s.rows == t.rows && s.cols == t.cols, ErrorCode::DimensionMismatch,
          "tensor " + t.name + " is " + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ", expected " +
              std::to_string(t.rows) + "x" + std::to_string(t.cols));
  for (std::size_t i = 0; i < s.data.size(); ++i) t.data[i] = static_cast<double>(s.data[i]);
}

inline nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"input_dims", d.input_dims}, {"hidden_dim", d.hidden_dim}, {"shared_dim", d.shared_dim}, {"ic50_hidden", d.ic50_hidden}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.input_dims = j.at("input_dims").get<std::array<std::size_t, kNumModalities>>();
  d.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  d.shared_dim = j.at("shared_dim").get<std::size_t>();
  d.ic50_hidden = j.at("ic50_hidden").get<std::size_t>();
  return d;
}

/// Adds the model tensors (and Adam moments, when given) to `ck`.
inline void store_model(Checkpoint& ck, AlignmentModel& model, const AdamState* adam = nullptr) {
  ck.meta["dims"] = dims_to_json(dims_of(model));
  for (const auto& t : model.tensors()) {
    ck.tensors[t.name] = store(t);
    if (adam == nullptr) continue;
    auto it = adam->moments.find(t.name);
    if (it == adam->moments.end()) continue;
    StoredTensor m{t.rows, t.cols, {}}, v{t.rows, t.cols, {}};
    for (double x : it->second.m) m.data.push_back(static_cast<float>(x));
    for (double x : it->second.v) v.data.push_back(static_cast<float>(x));
    ck.tensors["adam.m." + t.name] = std::move(m);
    ck.tensors["adam.v." + t.name] = std::move(v);
  }
  if (adam != nullptr) ck.meta["adam_t"] = adam->t;
}

inline AlignmentModel restore_model(const Checkpoint& ck) {
  require(ck.meta.contains("dims"), ErrorCode::MissingTensor, "checkpoint has no model dims");
  AlignmentModel model = make_model(dims_from_json(ck.meta.at("dims")), 0);
  for (const auto& t : model.tensors()) load_into(ck, t);
  return model;
}

inline AdamState restore_adam(const Checkpoint& ck, AlignmentModel& model) {
  AdamState st;
  st.t = ck.meta.value("adam_t", std::uint64_t{0});
  for (const auto& t : model.tensors()) {
    auto mi = ck.tensors.find("adam.m." + t.name);
    auto vi = ck.tensors.find("adam.v." + t.name);
    if (mi == ck.tensors.end() || vi == ck.tensors.end()) continue;
    auto& mom = st.moments[t.name];
    for (float x : mi->second.data) mom.m.push_back(x);
    for (float x : vi->second.data) mom.v.push_back(x);
  }
  return st;
}

}  // namespace gramalign
