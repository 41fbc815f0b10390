#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gramalign/config.hpp"
#include "gramalign/data.hpp"
#include "gramalign/error.hpp"
#include "gramalign/eval.hpp"
#include "gramalign/heads.hpp"
#include "gramalign/losses.hpp"
#include "gramalign/model.hpp"
#include "gramalign/scheduler.hpp"

namespace gramalign {

/// Everything that evolves during pre-training.
struct TrainState {
  AlignmentModel model;
  AdamState adam;
  GradHistory history;
  std::uint64_t step = 0;
  std::size_t epoch = 0;  // completed epochs
  std::array<double, kIc50Classes> class_weights{1.0, 1.0, 1.0};
};

inline ModelDims model_dims(const Dataset& ds, const TrainConfig& cfg) {
  ModelDims d;
  for (Modality m : kAllModalities) d.input_dims[index_of(m)] = ds.table(m).dim();
  d.hidden_dim = cfg.hidden_dim;
  d.shared_dim = cfg.shared_dim;
  d.ic50_hidden = cfg.ic50_hidden;
  return d;
}

/// Class weights over the annotated quadruplets; unit weights when some
/// class never occurs (or nothing is annotated).
inline std::array<double, kIc50Classes> dataset_class_weights(const Dataset& ds) {
  std::vector<int> labels;
  for (const auto& q : ds.quads) {
    if (q.ic50_class) labels.push_back(*q.ic50_class);
  }
  try {
    return class_weights(labels).weights;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyClass) throw;
    return {1.0, 1.0, 1.0};
  }
}

inline TrainState initial_state(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  require(!ds.quads.empty(), ErrorCode::EmptyDataset, "dataset has no quadruplets");
  TrainState st{make_model(model_dims(ds, cfg), cfg.seed), {}, GradHistory(cfg.scheduler.history), 0, 0, {}};
  st.class_weights = dataset_class_weights(ds);
  return st;
}

inline Checkpoint make_checkpoint(TrainState& st, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.meta["config"] = cfg;
  nlohmann::json hist = nlohmann::json::object();
  for (Modality m : kAllModalities) {
    const auto& e = st.history.entries(m);
    hist[std::string(name_of(m))] = std::vector<double>(e.begin(), e.end());
  }
  ck.meta["state"] = {{"epoch", st.epoch}, {"step", st.step}, {"history", hist}, {"class_weights", st.class_weights}};
  store_model(ck, st.model, &st.adam);
  return ck;
}

inline TrainState restore_state(const Checkpoint& ck, const TrainConfig& cfg) {
  TrainState st{restore_model(ck), {}, GradHistory(cfg.scheduler.history), 0, 0, {}};
  st.adam = restore_adam(ck, st.model);
  const auto& s = ck.meta.at("state");
  st.epoch = s.at("epoch").get<std::size_t>();
  st.step = s.at("step").get<std::uint64_t>();
  st.class_weights = s.at("class_weights").get<std::array<double, kIc50Classes>>();
  for (Modality m : kAllModalities) {
    const auto v = s.at("history").at(std::string(name_of(m))).get<std::vector<double>>();
    st.history.restore(m, std::deque<double>(v.begin(), v.end()));
  }
  return st;
}


// ---------------------------------------------------------------------------
// Projection helpers
// ---------------------------------------------------------------------------

/// Eval-mode projections of the given quadruplets, one B x d block per modality.
inline std::array<Mat, kNumModalities> project_quads(const AlignmentModel& model, const Dataset& ds,
                                                     std::span<const std::size_t> quad_idx) {
  std::array<Mat, kNumModalities> out;
  for (Modality m : kAllModalities) {
    std::vector<std::size_t> rows(quad_idx.size());
    for (std::size_t i = 0; i < quad_idx.size(); ++i) rows[i] = ds.quads[quad_idx[i]].row(m);
    out[index_of(m)] = project(model.projector(m), ds.table(m).gather(rows), Mode::Eval, nullptr).output;
  }
  return out;
}

/// Eval-mode projection of every row of a table.
inline Mat project_table(const ProjectionHead& head, const EmbeddingTable& table) {
  require(head.params.shape.in_dim() == table.dim(), ErrorCode::DimensionMismatch,
          std::string(name_of(table.modality())) + " table has dim " + std::to_string(table.dim()) + ", projector expects " +
              std::to_string(head.params.shape.in_dim()));
  Mat out(table.size(), head.params.shape.out_dim());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t lo = 0; lo < table.size(); lo += kChunk) {
    std::vector<std::size_t> rows;
    for (std::size_t r = lo; r < std::min(table.size(), lo + kChunk); ++r) rows.push_back(r);
    const Mat f = project(head, table.gather(rows), Mode::Eval, nullptr).output;
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(f.row(r).begin(), f.row(r).end(), out.row(lo + r).begin());
  }
  return out;
}

struct VolumeSummary {
  double positive = 0.0;    // mean V over matched 4-tuples
  double mismatched = 0.0;  // mean V(protein_j, smiles_i, text_i, hta_i), j != i
};

/// Unregularized 4-modal volumes over the first `limit` quadruplets (eval mode).
inline VolumeSummary volume_summary(const AlignmentModel& model, const Dataset& ds, std::size_t limit) {
  const std::size_t n = std::min(limit, ds.quads.size());
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  auto f = project_quads(model, ds, idx);
  Batch b;
  b.f = f;
  const Modality active[] = {Modality::Smiles, Modality::Text, Modality::Hta, Modality::Protein};
  const Mat s = volume_similarity_forward(b, Modality::Protein, active, 1.0);
  VolumeSummary out;
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = std::sqrt(std::max(0.0, s(i, j) * s(i, j) - kVolumeEps));
      (i == j ? out.positive : off) += v;
    }
  }
  out.positive /= static_cast<double>(n);
  out.mismatched = n > 1 ? off / static_cast<double>(n * (n - 1)) : 0.0;
  return out;
}

/// Eval-mode accuracy of the IC50 head on annotated quadruplets (NaN when none).
inline double ic50_accuracy(const AlignmentModel& model, const Dataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.quads.size(); ++i) {
    if (ds.quads[i].ic50_class) idx.push_back(i);
  }
  if (idx.empty()) return std::nan("");
  auto f = project_quads(model, ds, idx);
  const Mat logits = ic50_forward(model.ic50, hconcat(f), Mode::Eval, nullptr).output;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto z = logits.row(r);
    const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    correct += pred == *ds.quads[idx[r]].ic50_class ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

inline double frobenius(const Mat& m) { return norm2(m.flat()); }

struct StepRecord {
  std::uint64_t step = 0;
  double vol = 0.0, bi = 0.0, ic50 = 0.0, total = 0.0;
  ModalityScores grad_norms{};
  ModalityScores smoothed{};
  DropDecision decision;
};

inline nlohmann::json to_json(const StepRecord& r, std::size_t epoch) {
  nlohmann::json dropped = nullptr;
  if (r.decision.dropped) dropped = std::string(name_of(*r.decision.dropped));
  return {
      {"type", "step"},
      {"epoch", epoch},
      {"step", r.step},
      {"loss", {{"vol", r.vol}, {"bi", r.bi}, {"ic50", r.ic50}, {"total", r.total}}},
      {"grad_norms", r.grad_norms},
      {"decision",
       {{"step", r.step},
        {"branch", std::string(name_of(r.decision.branch))},
        {"dropped", dropped},
        {"anchor", std::string(name_of(r.decision.anchor))},
        {"gbar", r.smoothed}}},
  };
}

namespace detail {
inline void check_finite_loss(double v, const char* component, std::uint64_t step) {
  require(std::isfinite(v), ErrorCode::NonFiniteLoss,
          std::string(component) + " loss is not finite at step " + std::to_string(step));
}
}  // namespace detail

/// One optimization step over the quadruplets `quad_idx`:
/// project (train mode) -> L_bi and L_IC50 with their embedding gradients ->
/// record norms and decide on a drop -> L_vol over the active modalities ->
/// weighted total -> backprop -> Adam.
inline StepRecord train_step(TrainState& st, const Dataset& ds, std::span<const std::size_t> quad_idx, const TrainConfig& cfg) {
  const std::size_t b = quad_idx.size();
  require(b >= 1, ErrorCode::EmptyDataset, "empty batch");
  Rng dropout_rng = make_rng(cfg.seed, "dropout", st.step);

  // (1) project
  std::array<ForwardTape, kNumModalities> tapes;
  Batch batch;
  for (Modality m : kAllModalities) {
    std::vector<std::size_t> rows(b);
    for (std::size_t i = 0; i < b; ++i) rows[i] = ds.quads[quad_idx[i]].row(m);
    tapes[index_of(m)] = project(st.model.projector(m), ds.table(m).gather(rows), Mode::Train, &dropout_rng);
    batch[m] = tapes[index_of(m)].output;
  }
  batch.ic50_label.assign(b, 0);
  batch.ic50_valid.assign(b, false);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& q = ds.quads[quad_idx[i]];
    if (q.ic50_class) {
      batch.ic50_label[i] = *q.ic50_class;
      batch.ic50_valid[i] = true;
    }
  }
  const std::size_t d = batch.dim();

  // (2) auxiliary losses
  const LossOut bi = clip_bimodal(batch, cfg.tau);
  const ForwardTape ic50_tape = ic50_forward(st.model.ic50, hconcat(batch.f), Mode::Train, &dropout_rng);
  const Ic50LossOut ic = ic50_loss(ic50_tape.output, batch.ic50_label, batch.ic50_valid, st.class_weights, cfg.label_smoothing);
  detail::check_finite_loss(bi.value, "bi", st.step);
  detail::check_finite_loss(ic.value, "ic50", st.step);
  BackwardResult ic50_back = backward(st.model.ic50.params, ic50_tape, ic.logit_grads);
  LossOut ic50_out = zero_loss(b, d);
  ic50_out.value = ic.value;
  for (Modality m : kAllModalities) ic50_out.grads[index_of(m)] = column_block(ic50_back.input_grad, index_of(m) * d, d);

  // (3) scheduler, driven by lambda2 * L_bi + lambda3 * L_IC50 only
  StepRecord rec;
  rec.step = st.step;
  for (Modality m : kAllModalities) {
    Mat g = bi.grads[index_of(m)];
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.flat()[i] = cfg.lambdas.bi * g.flat()[i] + cfg.lambdas.ic50 * ic50_out.grads[index_of(m)].flat()[i];
    }
    rec.grad_norms[index_of(m)] = frobenius(g);
  }
  st.history.record(rec.grad_norms);
  rec.smoothed = st.history.smoothed(cfg.scheduler.decay);
  Rng sched_rng = make_rng(cfg.seed, "scheduler", st.step);
  rec.decision = decide(rec.smoothed, cfg.scheduler, sched_rng, true);

  // (4) volume loss
  std::vector<Modality> active;
  for (Modality m : kAllModalities) {
    if (!rec.decision.dropped || *rec.decision.dropped != m) active.push_back(m);
  }
  const LossOut vol = volume_contrastive(batch, rec.decision.anchor, active, cfg.tau);

  // (5) total
  const LossOut total = total_loss(vol, bi, ic50_out, cfg.lambdas);
  rec.vol = vol.value;
  rec.bi = bi.value;
  rec.ic50 = ic.value;
  rec.total = total.value;
  detail::check_finite_loss(rec.vol, "vol", st.step);
  detail::check_finite_loss(rec.total, "total", st.step);

  // (6) backprop
  std::array<MlpParams, kNumModalities> proj_grads;
  for (Modality m : kAllModalities) {
    proj_grads[index_of(m)] = backward(st.model.projector(m).params, tapes[index_of(m)], total.grads[index_of(m)]).param_grads;
  }
  MlpParams ic50_grads = zero_params(st.model.ic50.params.shape);
  axpy(ic50_grads, ic50_back.param_grads, cfg.lambdas.ic50);

  // (7) Adam
  std::vector<TensorRef> grads;
  for (Modality m : kAllModalities) {
    auto t = tensors_of(proj_grads[index_of(m)], "proj." + std::string(name_of(m)) + ".");
    grads.insert(grads.end(), t.begin(), t.end());
  }
  auto t = tensors_of(ic50_grads, "ic50.");
  grads.insert(grads.end(), t.begin(), t.end());
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  adam_step(st.model.tensors(), grads, st.adam, acfg);
  ++st.step;
  return rec;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Where train() writes its artifacts; all optional.
struct TrainOutputs {
  std::optional<std::filesystem::path> dir;  // checkpoints + logs
  std::function<void(const nlohmann::json&)> on_record;
  bool per_epoch_checkpoints = true;
};

inline nlohmann::json epoch_summary(TrainState& st, const Dataset& ds, const TrainConfig& cfg, std::size_t epoch,
                                    std::span<const StepRecord> steps) {
  const VolumeSummary vs = volume_summary(st.model, ds, cfg.eval_subset);
  nlohmann::json j{{"type", "epoch"},
                   {"epoch", epoch},
                   {"steps", steps.size()},
                   {"positive_volume", vs.positive},
                   {"mismatched_volume", vs.mismatched}};
  const double acc = ic50_accuracy(st.model, ds);
  j["ic50_accuracy"] = std::isnan(acc) ? nlohmann::json(nullptr) : nlohmann::json(acc);
  if (!steps.empty()) {
    double v = 0, bi = 0, ic = 0, tot = 0;
    for (const auto& r : steps) {
      v += r.vol;
      bi += r.bi;
      ic += r.ic50;
      tot += r.total;
    }
    const double n = static_cast<double>(steps.size());
    j["loss"] = {{"vol", v / n}, {"bi", bi / n}, {"ic50", ic / n}, {"total", tot / n}};
  }
  return j;
}

inline std::string checkpoint_name(std::size_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%04zu.gckpt", epoch);
  return buf;
}

/// Runs epochs state.epoch+1 .. cfg.epochs. Each epoch shuffles the
/// quadruplets with an epoch-derived seed and drops the last partial batch.
/// With a fresh state an epoch-0 summary is emitted first.
inline TrainState train(const Dataset& ds, const TrainConfig& cfg, TrainState st, const TrainOutputs& out = {}) {
  cfg.validate();
  require(!ds.quads.empty(), ErrorCode::EmptyDataset, "dataset has no quadruplets");
  std::ofstream log, timing;
  if (out.dir) {
    std::filesystem::create_directories(*out.dir);
    const auto mode = st.epoch == 0 ? std::ios::trunc : std::ios::app;
    log.open(*out.dir / "run.log.jsonl", std::ios::out | mode);
    timing.open(*out.dir / "run.timing.jsonl", std::ios::out | mode);
    require(log && timing, ErrorCode::IoFailure, "cannot open log files in " + out.dir->string());
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto emit = [&](const nlohmann::json& j) {
    if (log) {
      log << j.dump() << '\n';
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      timing << nlohmann::json{{"type", j.at("type")}, {"epoch", j.at("epoch")}, {"wall_time_s", wall}}.dump() << '\n';
    }
    if (out.on_record) out.on_record(j);
  };
  auto save = [&](const std::string& name) {
    if (out.dir) save_checkpoint(*out.dir / name, make_checkpoint(st, cfg));
  };

  if (st.epoch == 0) {
    emit(epoch_summary(st, ds, cfg, 0, {}));
    save(checkpoint_name(0));
  }
  const std::size_t bsz = std::min(cfg.batch_size, ds.quads.size());
  for (std::size_t epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(ds.quads.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = make_rng(cfg.seed, "shuffle", epoch);
    shuffle(order.begin(), order.end(), shuffle_rng);
    std::vector<StepRecord> steps;
    for (std::size_t lo = 0; lo + bsz <= order.size(); lo += bsz) {
      if (bsz < 2) break;
      steps.push_back(train_step(st, ds, std::span(order).subspan(lo, bsz), cfg));
      emit(to_json(steps.back(), epoch));
    }
    st.epoch = epoch;
    emit(epoch_summary(st, ds, cfg, epoch, steps));
    if (out.per_epoch_checkpoints) save(checkpoint_name(epoch));
  }
  save("final.gckpt");
  return st;
}

// ---------------------------------------------------------------------------
// Zero-shot retrieval
// ---------------------------------------------------------------------------

/// Both retrieval directions over the full drug and protein pools. Each
/// interaction pair is one query whose relevant set is all known partners of
/// the query entity.
inline std::array<RetrievalResult, 2> run_retrieval(const AlignmentModel& model, const Dataset& ds,
                                                    std::span<const std::pair<std::string, std::string>> interactions) {
  const auto& drugs = ds.table(Modality::Smiles);
  const auto& prots = ds.table(Modality::Protein);
  const Mat fs = project_table(model.projector(Modality::Smiles), drugs);
  const Mat fp = project_table(model.projector(Modality::Protein), prots);
  std::map<std::size_t, std::set<std::size_t>> partners_of_drug, partners_of_prot;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [d, p] : interactions) {
    auto di = drugs.find(d);
    auto pi = prots.find(p);
    require(di && pi, ErrorCode::InvalidArgument, "interaction (" + d + ", " + p + ") references unknown ids");
    partners_of_drug[*di].insert(*pi);
    partners_of_prot[*pi].insert(*di);
    pairs.emplace_back(*di, *pi);
  }
  auto direction = [&](bool s_to_p) {
    const Mat& q_all = s_to_p ? fs : fp;
    const Mat& c_all = s_to_p ? fp : fs;
    Mat queries(pairs.size(), q_all.cols());
    std::vector<std::vector<std::size_t>> relevant;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::size_t q = s_to_p ? pairs[i].first : pairs[i].second;
      std::copy(q_all.row(q).begin(), q_all.row(q).end(), queries.row(i).begin());
      const auto& rel = s_to_p ? partners_of_drug[q] : partners_of_prot[q];
      relevant.emplace_back(rel.begin(), rel.end());
    }
    RetrievalResult r;
    r.direction = s_to_p ? RetrievalDirection::SmilesToProtein : RetrievalDirection::ProteinToSmiles;
    r.recall_at = recall_at_k(cosine_matrix(queries, c_all), relevant);
    return r;
  };
  return {direction(true), direction(false)};
}

inline nlohmann::json to_json(const RetrievalResult& r) {
  return {{"direction", std::string(name_of(r.direction))},
          {"r1", r.recall_at.at(1)},
          {"r10", r.recall_at.at(10)},
          {"r100", r.recall_at.at(100)}};
}

// ---------------------------------------------------------------------------
// Downstream DTI head
// ---------------------------------------------------------------------------

/// Frozen embeddings keyed by entity id.
struct EntityEmbeddings {
  std::unordered_map<std::string, std::size_t> index;
  Mat f;

  static EntityEmbeddings from(const EmbeddingTable& table, Mat f) {
    EntityEmbeddings e;
    for (std::size_t i = 0; i < table.size(); ++i) e.index.emplace(table.ids()[i], i);
    e.f = std::move(f);
    return e;
  }

  Mat gather(std::span<const std::string> ids) const {
    Mat out(ids.size(), f.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto it = index.find(ids[i]);
      require(it != index.end(), ErrorCode::InvalidArgument, "no embedding for id '" + ids[i] + "'");
      std::copy(f.row(it->second).begin(), f.row(it->second).end(), out.row(i).begin());
    }
    return out;
  }
};

struct DtiFoldResult {
  std::size_t fold = 0;
  SplitKind split = SplitKind::Warm;
  double auroc = 0.0;
  double auprc = 0.0;
  ClassificationMetrics metrics;
  DtiHead head;
};

inline nlohmann::json to_json(const DtiFoldResult& r, const std::string& dataset) {
  return {{"dataset", dataset},      {"split", std::string(name_of(r.split))}, {"fold", r.fold},
          {"auroc", r.auroc},        {"auprc", r.auprc},                      {"sensitivity", r.metrics.sensitivity},
          {"f1", r.metrics.f1},      {"accuracy", r.metrics.accuracy}};
}

/// P(label = 1) for each pair under `head` (eval mode).
inline std::vector<double> dti_predict(const DtiHead& head, const EntityEmbeddings& drugs, const EntityEmbeddings& prots,
                                       std::span<const LabeledPair> pairs) {
  std::vector<std::string> d, p;
  for (const auto& x : pairs) {
    d.push_back(x.drug);
    p.push_back(x.protein);
  }
  const Mat logits = dti_forward(head, drugs.gather(d), prots.gather(p), Mode::Eval, nullptr).output;
  std::vector<double> prob(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) prob[i] = 1.0 / (1.0 + std::exp(logits(i, 0) - logits(i, 1)));
  return prob;
}

/// Trains one DtiHead per fold on frozen embeddings with unweighted 2-class
/// cross-entropy and Adam, then scores the fold's test pairs.
inline std::vector<DtiFoldResult> train_dti_folds(const EntityEmbeddings& drugs, const EntityEmbeddings& prots,
                                                  std::span<const PairDataset> folds, const TrainConfig& cfg) {
  require(drugs.f.cols() == prots.f.cols(), ErrorCode::DimensionMismatch, "drug and protein embeddings differ in width");
  std::vector<DtiFoldResult> results;
  for (const auto& fold : folds) {
    require(!fold.train.empty(), ErrorCode::EmptyDataset, "fold has no training pairs");
    DtiHead head{init_params(dti_shape(drugs.f.cols(), cfg.dti_hidden), derive_seed(cfg.seed, "init.dti", fold.fold))};
    AdamState adam;
    AdamConfig acfg;
    acfg.lr = cfg.dti_lr;
    acfg.float32_storage = false;
    std::vector<std::size_t> order(fold.train.size());
    for (std::uint64_t epoch = 0; epoch < cfg.dti_epochs; ++epoch) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng shuffle_rng = make_rng(cfg.seed, "dti.shuffle", fold.fold * 1000003ULL + epoch);
      shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t lo = 0; lo < order.size(); lo += cfg.dti_batch_size) {
        const std::size_t hi = std::min(order.size(), lo + cfg.dti_batch_size);
        std::vector<std::string> d, p;
        std::vector<int> y;
        for (std::size_t k = lo; k < hi; ++k) {
          const auto& pair = fold.train[order[k]];
          d.push_back(pair.drug);
          p.push_back(pair.protein);
          y.push_back(pair.label);
        }
        Rng drop_rng = make_rng(cfg.seed, "dti.dropout", (fold.fold * 1000003ULL + epoch) * 65537ULL + lo);
        const ForwardTape tape = dti_forward(head, drugs.gather(d), prots.gather(p), Mode::Train, &drop_rng);
        Mat g(tape.output.rows(), 2);
        const double inv_b = 1.0 / static_cast<double>(y.size());
        for (std::size_t r = 0; r < y.size(); ++r) {
          const double p1 = 1.0 / (1.0 + std::exp(tape.output(r, 0) - tape.output(r, 1)));
          g(r, 0) = inv_b * ((1.0 - p1) - (y[r] == 0 ? 1.0 : 0.0));
          g(r, 1) = inv_b * (p1 - (y[r] == 1 ? 1.0 : 0.0));
        }
        const BackwardResult back = backward(head.params, tape, g);
        auto grads = back.param_grads;
        adam_step(tensors_of(head.params, "dti."), tensors_of(grads, "dti."), adam, acfg);
      }
    }
    DtiFoldResult r;
    r.fold = fold.fold;
    r.split = fold.split_kind;
    const auto prob = dti_predict(head, drugs, prots, fold.test);
    std::vector<int> labels;
    for (const auto& x : fold.test) labels.push_back(x.label);
    r.auroc = auroc(prob, labels);
    r.auprc = auprc(prob, labels);
    r.metrics = classification_metrics(prob, labels);
    r.head = std::move(head);
    results.push_back(std::move(r));
  }
  return results;
}

/// Downstream evaluation with the pre-trained SMILES and protein projectors frozen.
inline std::vector<DtiFoldResult> train_dti(const AlignmentModel& model, const Dataset& ds, std::span<const PairDataset> folds,
                                            const TrainConfig& cfg) {
  const auto& drugs = ds.table(Modality::Smiles);
  const auto& prots = ds.table(Modality::Protein);
  return train_dti_folds(EntityEmbeddings::from(drugs, project_table(model.projector(Modality::Smiles), drugs)),
                         EntityEmbeddings::from(prots, project_table(model.projector(Modality::Protein), prots)), folds, cfg);
}

/// Projected tables (eval mode) for external visualization.
inline TableSet export_embeddings(const AlignmentModel& model, const TableSet& tables) {
  TableSet out;
  for (Modality m : kAllModalities) {
    const auto& t = tables[index_of(m)];
    const Mat f = project_table(model.projector(m), t);
    std::vector<float> rows(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) rows[i] = static_cast<float>(f.flat()[i]);
    out[index_of(m)] = EmbeddingTable(m, f.cols(), t.ids(), std::move(rows));
  }
  return out;
}

}  // namespace gramalign
