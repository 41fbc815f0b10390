// gramalign command-line tool.
//
// Exit codes: 0 ok, 1 other error, 2 bad flags/arguments, 3 I/O or format
// failure, 4 non-finite loss, 5 gradient check failure, 6 dimension mismatch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gramalign.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gramalign;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNonFinite = 4;
constexpr int kExitGradcheck = 5;
constexpr int kExitDims = 6;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
      return kExitUsage;
    case ErrorCode::IoFailure:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedFile:
    case ErrorCode::MissingTensor:
      return kExitIo;
    case ErrorCode::NonFiniteLoss:
      return kExitNonFinite;
    case ErrorCode::DimensionMismatch:
      return kExitDims;
    default:
      return kExitOther;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
}

void echo_config(const fs::path& dir, const json& resolved) {
  fs::create_directories(dir);
  write_text(dir / "resolved-config.json", resolved.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    require(pos == tok.size() && !tok.empty() && v > 0, ErrorCode::InvalidArgument, "bad dimension '" + tok + "'");
    out.push_back(v);
  }
  require(out.size() == kNumModalities, ErrorCode::InvalidArgument, "--dims needs four comma-separated values");
  return out;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t n = 256;
  std::string dims = "768,768,768,1280";
  double noise = 0.05;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  SynthOptions opt;
  opt.n = a.n;
  const auto d = parse_dims(a.dims);
  std::copy(d.begin(), d.end(), opt.dims.begin());
  opt.noise_sigma = a.noise;
  opt.seed = a.seed;
  const Dataset ds = synth_quadruplets(opt);
  write_dataset(a.out, ds);
  echo_config(a.out, {{"command", "synth"},
                      {"n", opt.n},
                      {"dims", opt.dims},
                      {"noise", opt.noise_sigma},
                      {"seed", opt.seed},
                      {"latent_dim", opt.latent_dim},
                      {"ic50_every", opt.ic50_every}});
  return 0;
}

// --- shared training overrides ---------------------------------------------

struct ConfigArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, shared_dim, hidden_dim, ic50_hidden, eval_subset;
  std::optional<double> lr, tau, lambda1, lambda2, lambda3, p_drop;
  std::optional<std::size_t> folds, dti_epochs;
  std::optional<double> dti_lr;
  std::vector<std::size_t> dti_hidden;

  void attach(CLI::App* app, bool training) {
    app->add_option("--config", config, "JSON config file (defaults used when omitted)");
    app->add_option("--seed", seed, "random seed");
    if (training) {
      app->add_option("--epochs", epochs, "pre-training epochs");
      app->add_option("--batch-size", batch_size, "mini-batch size");
      app->add_option("--lr", lr, "Adam learning rate");
      app->add_option("--tau", tau, "temperature");
      app->add_option("--lambda1", lambda1, "weight of the volume loss");
      app->add_option("--lambda2", lambda2, "weight of the bimodal loss");
      app->add_option("--lambda3", lambda3, "weight of the IC50 loss");
      app->add_option("--p-drop", p_drop, "modality drop probability");
      app->add_option("--shared-dim", shared_dim, "shared embedding width");
      app->add_option("--hidden-dim", hidden_dim, "projector hidden width");
      app->add_option("--ic50-hidden", ic50_hidden, "IC50 head hidden width");
      app->add_option("--eval-subset", eval_subset, "quadruplets used for epoch volume summaries");
    } else {
      app->add_option("--folds", folds, "cross-validation folds");
      app->add_option("--dti-epochs", dti_epochs, "DTI head training epochs");
      app->add_option("--dti-lr", dti_lr, "DTI head learning rate");
      app->add_option("--dti-hidden", dti_hidden, "DTI head hidden widths, comma-separated")->delimiter(',');
    }
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config.empty()) merge_config(c, read_json(config));
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.lr = *lr;
    if (tau) c.tau = *tau;
    if (lambda1) c.lambdas.vol = *lambda1;
    if (lambda2) c.lambdas.bi = *lambda2;
    if (lambda3) c.lambdas.ic50 = *lambda3;
    if (p_drop) c.scheduler.p_drop = *p_drop;
    if (shared_dim) c.shared_dim = *shared_dim;
    if (hidden_dim) c.hidden_dim = *hidden_dim;
    if (ic50_hidden) c.ic50_hidden = *ic50_hidden;
    if (eval_subset) c.eval_subset = *eval_subset;
    if (folds) c.folds = *folds;
    if (dti_epochs) c.dti_epochs = *dti_epochs;
    if (dti_lr) c.dti_lr = *dti_lr;
    if (!dti_hidden.empty()) c.dti_hidden = dti_hidden;
    c.validate();
    return c;
  }
};

// --- pretrain --------------------------------------------------------------

struct PretrainArgs {
  std::string data, out, resume;
  ConfigArgs cfg;
};

int run_pretrain(const PretrainArgs& a) {
  const TrainConfig cfg = a.cfg.resolve();
  const Dataset ds = load_dataset(a.data);
  json resolved = cfg;
  resolved = {{"command", "pretrain"}, {"data", a.data}, {"resume", a.resume}, {"config", resolved}};
  echo_config(a.out, resolved);

  TrainState st = initial_state(ds, cfg);
  if (!a.resume.empty()) {
    st = restore_state(load_checkpoint(a.resume), cfg);
    require(dims_of(st.model) == model_dims(ds, cfg), ErrorCode::DimensionMismatch,
            "checkpoint " + a.resume + " does not match the data/config dimensions");
  }
  TrainOutputs outputs;
  outputs.dir = fs::path(a.out);
  outputs.on_record = [](const json& j) {
    if (j.at("type") != "epoch") return;
    std::cout << j.dump() << '\n';
  };
  train(ds, cfg, std::move(st), outputs);
  return 0;
}

// --- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t trials = 50;
  std::string sabotage;
};

int run_gradcheck_cmd(const GradcheckArgs& a) {
  const GradcheckReport report = run_gradcheck(a.seed, a.trials, a.sabotage);
  for (const auto& c : report.components) {
    std::printf("%-20s max_rel_error=%.3e tol=%.0e trials=%zu %s\n", c.name.c_str(), c.max_rel_error, c.tolerance, c.trials,
                c.passed() ? "ok" : "FAIL");
  }
  std::printf("elapsed %.2fs\n", report.seconds);
  if (report.passed()) return 0;
  const auto& w = report.worst();
  std::fprintf(stderr, "gradcheck failed: worst component %s (rel error %.3e, trial %llu)\n", w.name.c_str(),
               w.max_rel_error, static_cast<unsigned long long>(w.worst_trial));
  return kExitGradcheck;
}

// --- retrieve / dti / export -----------------------------------------------

struct EvalArgs {
  std::string data, checkpoint, out, split = "warm", dataset;
  bool csv = false;
  ConfigArgs cfg;
};

int run_retrieve(const EvalArgs& a) {
  echo_config(a.out, {{"command", "retrieve"}, {"data", a.data}, {"checkpoint", a.checkpoint}, {"csv", a.csv}});
  const Dataset ds = load_dataset(a.data);
  const AlignmentModel model = restore_model(load_checkpoint(a.checkpoint));
  const auto results = run_retrieval(model, ds, interaction_pairs(ds));
  json all = json::array();
  std::string csv = "direction,r1,r10,r100\n";
  for (const auto& r : results) {
    const json j = to_json(r);
    all.push_back(j);
    csv += j.at("direction").get<std::string>() + "," + detail::format_double(j.at("r1")) + "," +
           detail::format_double(j.at("r10")) + "," + detail::format_double(j.at("r100")) + "\n";
  }
  write_text(fs::path(a.out) / "retrieval.json", all.dump(2) + "\n");
  if (a.csv) write_text(fs::path(a.out) / "retrieval.csv", csv);
  std::cout << (a.csv ? csv : all.dump() + "\n");
  return 0;
}

int run_dti(const EvalArgs& a) {
  const TrainConfig cfg = a.cfg.resolve();
  const SplitKind kind = split_from_name(a.split);
  const std::string name = a.dataset.empty() ? fs::path(a.data).filename().string() : a.dataset;
  json resolved = cfg;
  echo_config(a.out, {{"command", "dti"},
                      {"data", a.data},
                      {"checkpoint", a.checkpoint},
                      {"split", a.split},
                      {"dataset", name},
                      {"csv", a.csv},
                      {"config", resolved}});
  const Dataset ds = load_dataset(a.data);
  const AlignmentModel model = restore_model(load_checkpoint(a.checkpoint));
  const auto folds = make_split(interaction_pairs(ds), kind, cfg.folds, cfg.seed);
  const auto results = train_dti(model, ds, folds, cfg);
  json all = json::array();
  std::string csv = "dataset,split,fold,auroc,auprc,sensitivity,f1,accuracy\n";
  for (const auto& r : results) {
    const json j = to_json(r, name);
    all.push_back(j);
    csv += name + "," + std::string(name_of(r.split)) + "," + std::to_string(r.fold);
    for (const char* k : {"auroc", "auprc", "sensitivity", "f1", "accuracy"}) csv += "," + detail::format_double(j.at(k));
    csv += "\n";
    for (const auto& w : r.metrics.warnings) std::cerr << "fold " << r.fold << ": " << w << '\n';
  }
  write_text(fs::path(a.out) / "dti_metrics.json", all.dump(2) + "\n");
  if (a.csv) write_text(fs::path(a.out) / "dti_metrics.csv", csv);
  std::cout << (a.csv ? csv : all.dump() + "\n");
  return 0;
}

int run_export(const EvalArgs& a) {
  echo_config(a.out, {{"command", "export"}, {"data", a.data}, {"checkpoint", a.checkpoint}});
  const Dataset ds = load_dataset(a.data);
  const AlignmentModel model = restore_model(load_checkpoint(a.checkpoint));
  const TableSet projected = export_embeddings(model, ds.tables);
  for (Modality m : kAllModalities) write_embedding_table(table_path(a.out, m), projected[index_of(m)]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gramian-volume multimodal alignment"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic four-modality dataset");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--n", synth.n, "number of quadruplets (>= 4)");
  c_synth->add_option("--dims", synth.dims, "per-modality dims: smiles,text,hta,protein");
  c_synth->add_option("--noise", synth.noise, "Gaussian noise sigma");
  c_synth->add_option("--seed", synth.seed, "random seed");

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "pre-train the projectors");
  c_pre->add_option("--data", pre.data, "dataset directory")->required();
  c_pre->add_option("--out", pre.out, "output directory")->required();
  c_pre->add_option("--resume", pre.resume, "checkpoint to resume from");
  pre.cfg.attach(c_pre, true);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  c_gc->add_option("--seed", gc.seed, "base seed");
  c_gc->add_option("--trials", gc.trials, "seeds per component")->check(CLI::PositiveNumber);
  c_gc->add_option("--sabotage", gc.sabotage, "perturb one analytic gradient (test hook)")->group("");

  EvalArgs ev;
  auto add_eval = [&](const char* name, const char* desc) {
    auto* c = app.add_subcommand(name, desc);
    c->add_option("--data", ev.data, "dataset directory")->required();
    c->add_option("--checkpoint", ev.checkpoint, "GCKPT1 checkpoint")->required();
    c->add_option("--out", ev.out, "output directory")->required();
    return c;
  };
  auto* c_ret = add_eval("retrieve", "zero-shot retrieval recall");
  c_ret->add_flag("--csv", ev.csv, "emit CSV instead of JSON");
  auto* c_dti = add_eval("dti", "downstream drug-target interaction folds");
  c_dti->add_option("--split", ev.split, "warm | drug-cold | target-cold");
  c_dti->add_option("--dataset", ev.dataset, "dataset name for the reports");
  c_dti->add_flag("--csv", ev.csv, "emit CSV instead of JSON");
  ev.cfg.attach(c_dti, false);
  auto* c_exp = add_eval("export", "write projected embeddings as GEMB1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_pre) return run_pretrain(pre);
    if (*c_gc) return run_gradcheck_cmd(gc);
    if (*c_ret) return run_retrieve(ev);
    if (*c_dti) return run_dti(ev);
    if (*c_exp) return run_export(ev);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoFailure: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
