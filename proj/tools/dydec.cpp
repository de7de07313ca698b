// dydec: command-line front end (synth, train, eval, decompose, count, gradcheck).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dydec/checkpoint.hpp"
#include "dydec/config.hpp"
#include "dydec/gradcheck.hpp"
#include "dydec/metrics.hpp"
#include "dydec/parallel.hpp"
#include "dydec/synth.hpp"
#include "dydec/train.hpp"
#include "dydec/wav.hpp"

namespace fs = std::filesystem;
using namespace dydec;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f, bool out_required) {
  app->add_option("--config", f.config, "TOML-style config file")->check(CLI::ExistingFile);
  app->add_option("--set", f.set, "override, e.g. --set train.epochs=5 (repeatable)");
  app->add_option("--seed", f.seed, "random seed");
  auto* out = app->add_option("--out", f.out, "output path");
  if (out_required) out->required();
}

Json run_config(const CommonFlags& f) {
  Json cfg = f.config.empty() ? Json::object() : load_config_file(f.config);
  for (const auto& s : f.set) apply_override(cfg, s);
  static const std::set<std::string> sections{"model", "train", "synth", "data", "gradcheck"};
  for (const auto& [k, v] : cfg.items())
    if (!sections.contains(k)) throw Error("config: unknown section [" + k + "]");
  return cfg;
}

Json section(const Json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : Json::object();
}

ModelConfig resolve_model(const Json& cfg, const std::vector<std::string>& ablations) {
  ModelConfig m = model_config_from_json(section(cfg, "model"));
  for (const auto& a : ablations) apply_ablation(m, a);
  return m;
}

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string p;
    while (std::getline(ss, p, ','))
      if (!p.empty()) out.push_back(p);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

// Fixed six decimals with trailing zeros trimmed, keeping one digit after the point.
std::string format_count(double c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", c);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  if (s == "-0.0") s = "0.0";
  return s;
}

template <typename Scalar>
Prediction predict_as(const Model& model, const AudioClip& clip) {
  const auto tf = decompose<Scalar>(clip, model.tree, model.config.frontend.mode, model.config.frontend.norm);
  const VectorX<Scalar> s = backbone_forward(tf, model.backbone);
  Prediction p;
  p.frame_scores = s.template cast<double>();
  p.count = model.config.head == HeadMode::density ? p.frame_scores.sum()
                                                    : regress_count_head(p.frame_scores, model.head);
  return p;
}

// ---- synth ----------------------------------------------------------------------------------

int cmd_synth(const CommonFlags& f) {
  const Json cfg = run_config(f);
  DatasetConfig dc = dataset_config_from_json(section(cfg, "synth"));
  if (f.seed) dc.seed = *f.seed;
  const auto clips = generate_dataset(dc, f.out);
  std::map<int, int> per_stratum;
  for (const auto& c : clips) ++per_stratum[c.stratum];
  Json summary{{"out", f.out}, {"clips", clips.size()}};
  for (const auto& [k, v] : per_stratum) summary["strata"][std::to_string(k)] = v;
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---- train ----------------------------------------------------------------------------------

struct TrainFlags {
  std::string dataset;
  std::string resume;
  std::vector<std::string> ablate;
};

int cmd_train(const CommonFlags& f, const TrainFlags& t) {
  const Json cfg = run_config(f);
  const auto ablations = split_list(t.ablate);
  TrainConfig tc = train_config_from_json(section(cfg, "train"));
  if (f.seed) tc.seed = *f.seed;
  std::string data_dir = t.dataset;
  const Json data = section(cfg, "data");
  for (const auto& [k, v] : data.items())
    if (k != "dir") throw Error("config: unknown key '" + k + "' in [data]");
  if (data_dir.empty() && data.contains("dir")) data_dir = data.at("dir").get<std::string>();
  if (data_dir.empty()) throw Error("train: no dataset (use --dataset or data.dir)");
  if (!fs::is_directory(data_dir)) throw Error("train: dataset directory " + data_dir + " does not exist");
  fs::create_directories(f.out);

  Checkpoint ck;
  if (!t.resume.empty()) {
    ck = load_checkpoint(t.resume);
    if (!cfg.contains("train") && !f.seed) tc = ck.train;
  } else {
    const ModelConfig mc = resolve_model(cfg, ablations);
    const auto labels = read_labels_jsonl((fs::path(data_dir) / "labels.jsonl").string());
    if (labels.empty()) throw Error("train: dataset has no clips");
    const auto samples = static_cast<Eigen::Index>(std::llround(labels.front().duration_s * mc.frontend.sample_rate));
    ck.state = init_train_state(init_model(mc, tc.seed, samples));
  }
  ck.train = tc;
  ck.extra = {{"dataset", fs::absolute(data_dir).string()}, {"ablations", ablations}};

  const auto examples = load_dataset(data_dir, ck.state.model);
  const Split split = split_dataset(examples.size(), tc.val_fraction, tc.seed);
  if (split.train.empty()) throw Error("train: validation split leaves no training clips");

  Json run;
  run["model"] = model_config_to_json(ck.state.model.config);
  run["train"] = train_config_to_json(tc);
  run["data"] = {{"dir", ck.extra["dataset"]}, {"clips", examples.size()}, {"train", split.train.size()},
                 {"val", split.val.size()}};
  run["ablations"] = ablations;
  write_text(fs::path(f.out) / "run.json", run.dump(2) + "\n");

  const fs::path ckpt = fs::path(f.out) / "checkpoint.bin";
  TrainHooks hooks;
  hooks.on_eval = [&](const EvalRecord& r, const TrainState& s) {
    std::cerr << "epoch " << r.epoch << " step " << r.step << " train_mae " << r.train_mae << " val_mae "
              << r.val_mae << '\n';
    ck.state = s;
    save_checkpoint(ckpt, ck);
  };
  TrainState state = ck.state;
  const TrainHistory history = train_loop(state, examples, split, tc, hooks);
  ck.state = std::move(state);
  save_checkpoint(ckpt, ck);
  write_history_csv(fs::path(f.out) / "history.csv", history);
  write_eval_csv(fs::path(f.out) / "eval.csv", history);

  Json summary{{"checkpoint", ckpt.string()}, {"steps", ck.state.step}, {"best_score", ck.state.best_score}};
  if (!history.steps.empty()) summary["final_loss"] = history.steps.back().loss;
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::string dataset;
  std::string pred;
  std::string labels;
  std::string stratify = "max";
};

std::map<std::string, double> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read predictions " + path);
  std::map<std::string, double> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("clip_id") || !j.contains("count"))
      throw Error(path + ":" + std::to_string(n) + ": expected {\"clip_id\", \"count\"}");
    out[j.at("clip_id").get<std::string>()] = j.at("count").get<double>();
  }
  return out;
}

int cmd_eval(const CommonFlags& f, const EvalFlags& e) {
  const Stratum stratum = parse_stratum(e.stratify);
  std::vector<ClipLabels> labels;
  std::map<std::string, double> predicted;
  Json source;
  if (!e.checkpoint.empty()) {
    if (e.dataset.empty()) throw Error("eval: --checkpoint requires --dataset");
    const Model model = load_model(e.checkpoint);
    labels = read_labels_jsonl((fs::path(e.dataset) / "labels.jsonl").string());
    std::vector<double> counts(labels.size());
    parallel_for(labels.size(), [&](std::size_t i) {
      const AudioClip clip = read_wav((fs::path(e.dataset) / "clips" / (labels[i].clip_id + ".wav")).string());
      counts[i] = predict(model, clip).count;
    });
    for (std::size_t i = 0; i < labels.size(); ++i) predicted[labels[i].clip_id] = counts[i];
    source = {{"checkpoint", e.checkpoint}, {"dataset", e.dataset}};
  } else {
    if (e.pred.empty() || e.labels.empty()) throw Error("eval: give --checkpoint/--dataset or --pred/--labels");
    labels = read_labels_jsonl(e.labels);
    predicted = read_predictions(e.pred);
    source = {{"pred", e.pred}, {"labels", e.labels}};
  }

  std::vector<ClipResult> results;
  for (const auto& l : labels) {
    const auto it = predicted.find(l.clip_id);
    if (it == predicted.end()) throw Error("eval: no prediction for clip " + l.clip_id);
    results.push_back(make_clip_result(l, it->second));
  }
  const StratifiedReport report = stratified_report(results, stratum);

  fs::create_directories(f.out);
  const std::string stem = "report_" + to_string(stratum);
  write_text(fs::path(f.out) / (stem + ".csv"), report_csv(report));
  write_text(fs::path(f.out) / (stem + ".json"), report_json(report));
  std::string preds;
  for (const auto& r : results)
    preds += Json{{"clip_id", r.clip_id}, {"count", r.predicted}, {"truth", r.truth}}.dump() + "\n";
  write_text(fs::path(f.out) / "predictions.jsonl", preds);
  write_text(fs::path(f.out) / "run.json", Json{{"source", source}, {"stratify", to_string(stratum)}}.dump(2) + "\n");

  Json summary{{"clips", results.size()}, {"mae", report.overall.mae.value_or(0.0)},
               {"mse", report.overall.mse.value_or(0.0)}, {"out", f.out}};
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---- decompose / count ----------------------------------------------------------------------

struct InferFlags {
  std::string checkpoint;
  std::string wav;
  std::string precision = "f64";
  std::vector<std::string> ablate;
};

Model inference_model(const CommonFlags& f, const InferFlags& i, const AudioClip& clip) {
  if (!i.checkpoint.empty()) return load_model(i.checkpoint);
  const Json cfg = run_config(f);
  const ModelConfig mc = resolve_model(cfg, split_list(i.ablate));
  return init_model(mc, f.seed.value_or(0), clip.size());
}

template <typename Scalar>
void dump_tfmap(const TFMapT<Scalar>& tf, const fs::path& bin, const fs::path& header, Json meta) {
  std::ofstream os(bin, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + bin.string());
  // Row-major, little-endian host order is checked at the top of main.
  os.write(reinterpret_cast<const char*>(tf.values.data()),
           static_cast<std::streamsize>(tf.values.size() * sizeof(Scalar)));
  if (!os) throw Error("write failed for " + bin.string());
  meta["bins"] = tf.bins();
  meta["frames"] = tf.frames();
  meta["rate"] = tf.frame_rate;
  meta["dtype"] = sizeof(Scalar) == 4 ? "float32" : "float64";
  meta["order"] = "row-major";
  meta["byte_order"] = "little";
  meta["data"] = bin.filename().string();
  write_text(header, meta.dump(2) + "\n");
}

int cmd_decompose(const CommonFlags& f, const InferFlags& i) {
  const AudioClip clip = read_wav(i.wav);
  const Model model = inference_model(f, i, clip);
  fs::path stem = f.out;
  if (stem.extension() == ".bin") stem.replace_extension();
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  const fs::path bin = stem.string() + ".bin", header = stem.string() + ".json";
  Json meta{{"wav", i.wav},
            {"sample_rate", clip.sample_rate},
            {"model", model_config_to_json(model.config)},
            {"source", i.checkpoint.empty() ? Json{{"init_seed", f.seed.value_or(0)}} : Json{{"checkpoint", i.checkpoint}}}};
  const auto mode = model.config.frontend.mode;
  const auto norm = model.config.frontend.norm;
  if (i.precision == "f32") dump_tfmap(decompose<float>(clip, model.tree, mode, norm), bin, header, meta);
  else dump_tfmap(decompose<double>(clip, model.tree, mode, norm), bin, header, meta);
  std::cout << Json{{"data", bin.string()}, {"header", header.string()}}.dump() << '\n';
  return 0;
}

int cmd_count(const InferFlags& i, bool json) {
  const AudioClip clip = read_wav(i.wav);
  const Model model = load_model(i.checkpoint);
  const Prediction p = i.precision == "f32" ? predict_as<float>(model, clip) : predict_as<double>(model, clip);
  if (json) {
    std::vector<double> frames(p.frame_scores.begin(), p.frame_scores.end());
    std::cout << Json{{"wav", i.wav}, {"count", p.count}, {"frame_scores", frames}}.dump() << '\n';
  } else {
    std::cout << format_count(p.count) << '\n';
  }
  return 0;
}

// ---- gradcheck ------------------------------------------------------------------------------

int cmd_gradcheck(const CommonFlags& f) {
  const Json cfg = run_config(f);
  GradCheckOptions opt;
  const Json g = section(cfg, "gradcheck");
  for (const auto& [k, v] : g.items()) {
    if (k == "depth") opt.depth = v.get<int>();
    else if (k == "kernel_len") opt.kernel_len = v.get<int>();
    else if (k == "samples") opt.samples = v.get<Eigen::Index>();
    else if (k == "sample_rate") opt.sample_rate = v.get<double>();
    else if (k == "seed") opt.seed = v.get<std::uint64_t>();
    else if (k == "per_kind") opt.per_kind = v.get<int>();
    else if (k == "frontend_step") opt.frontend_step = v.get<double>();
    else if (k == "backbone_step") opt.backbone_step = v.get<double>();
    else if (k == "training_step") opt.training_step = v.get<double>();
    else throw Error("config: unknown key '" + k + "' in [gradcheck]");
  }
  if (f.seed) opt.seed = *f.seed;
  const auto rows = run_gradcheck(opt);

  std::size_t fails = 0;
  std::printf("%-16s %-22s %14s %14s %10s %8s  %s\n", "check", "param", "analytic", "numeric", "rel_err", "tol",
              "result");
  for (const auto& r : rows) {
    if (!r.pass) ++fails;
    std::printf("%-16s %-22s %14.6e %14.6e %10.2e %8.0e  %s\n", r.check.c_str(), r.param.c_str(), r.analytic,
                r.numeric, r.rel_error, r.tolerance, r.pass ? "PASS" : "FAIL");
  }
  std::printf("%zu checks, %zu failed\n", rows.size(), fails);

  if (!f.out.empty()) {
    std::string csv = "check,param,analytic,numeric,rel_error,tolerance,pass\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%g,%d\n", r.check.c_str(), r.param.c_str(),
                    r.analytic, r.numeric, r.rel_error, r.tolerance, r.pass ? 1 : 0);
      csv += buf;
    }
    write_text(f.out, csv);
  }
  if (fails > 0) throw Error("gradient check failed: " + std::to_string(fails) + " of " + std::to_string(rows.size()));
  return 0;
}

void print_error(const std::string& command, const std::string& message, int code) {
  std::cerr << Json{{"error", message}, {"command", command}, {"exit_code", code}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  if constexpr (std::endian::native != std::endian::little) {
    print_error("", "big-endian hosts are not supported", 1);
    return 1;
  }

  CLI::App app{"dydec: dyadic decomposition sound counting"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, eval_f, dec_f, gc_f;
  TrainFlags train_t;
  EvalFlags eval_e;
  InferFlags dec_i, count_i;
  bool count_json = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic counting dataset");
  add_common(synth, synth_f, true);

  auto* train = app.add_subcommand("train", "train a model on a dataset directory");
  add_common(train, train_f, true);
  train->add_option("--dataset", train_t.dataset, "dataset directory (labels.jsonl + clips/)");
  train->add_option("--resume", train_t.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--ablate", train_t.ablate, "single_scale, bn, nonorm, reg_count (comma separated)");

  auto* eval = app.add_subcommand("eval", "stratified counting metrics");
  add_common(eval, eval_f, true);
  eval->add_option("--checkpoint", eval_e.checkpoint)->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_e.dataset)->check(CLI::ExistingDirectory);
  eval->add_option("--pred", eval_e.pred, "predictions as JSON lines {clip_id, count}")->check(CLI::ExistingFile);
  eval->add_option("--labels", eval_e.labels, "labels.jsonl")->check(CLI::ExistingFile);
  eval->add_option("--stratify", eval_e.stratify, "max, ratio or mean")
      ->check(CLI::IsMember({"max", "ratio", "mean"}));

  auto* decompose_cmd = app.add_subcommand("decompose", "dump the time-frequency map of a WAV file");
  add_common(decompose_cmd, dec_f, true);
  decompose_cmd->add_option("--wav", dec_i.wav)->required()->check(CLI::ExistingFile);
  decompose_cmd->add_option("--checkpoint", dec_i.checkpoint, "default: fresh init from --config/--seed")
      ->check(CLI::ExistingFile);
  decompose_cmd->add_option("--ablate", dec_i.ablate);
  decompose_cmd->add_option("--precision", dec_i.precision)->check(CLI::IsMember({"f32", "f64"}));

  auto* count = app.add_subcommand("count", "print the predicted event count of a WAV file");
  count->add_option("--checkpoint", count_i.checkpoint)->required()->check(CLI::ExistingFile);
  count->add_option("--wav", count_i.wav)->required()->check(CLI::ExistingFile);
  count->add_option("--precision", count_i.precision)->check(CLI::IsMember({"f32", "f64"}));
  count->add_flag("--json", count_json, "print count and frame scores as JSON");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gradcheck, gc_f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), e.what(), 2);
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") return cmd_synth(synth_f);
    if (name == "train") return cmd_train(train_f, train_t);
    if (name == "eval") return cmd_eval(eval_f, eval_e);
    if (name == "decompose") return cmd_decompose(dec_f, dec_i);
    if (name == "count") return cmd_count(count_i, count_json);
    if (name == "gradcheck") return cmd_gradcheck(gc_f);
  } catch (const std::exception& e) {
    print_error(name, e.what(), 1);
    return 1;
  }
  return 1;
}
