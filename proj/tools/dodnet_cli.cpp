// dodnet: data generation, training, inference, evaluation and self-checks.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or config error,
// 3 I/O or format error.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "dodnet/checkpoint.hpp"
#include "dodnet/dynamic_head.hpp"
#include "dodnet/error.hpp"
#include "dodnet/gradsuite.hpp"
#include "dodnet/inference.hpp"
#include "dodnet/metrics.hpp"
#include "dodnet/tasks.hpp"
#include "dodnet/threads.hpp"
#include "dodnet/train.hpp"
#include "dodnet/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dodnet;

namespace {

constexpr int kExitVerify = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

Extent3 parse_extent(const std::string& s) {
  Extent3 e{};
  std::stringstream ss(s);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i == 3) throw ConfigError("extent '" + s + "' must have three components");
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v <= 0) throw ConfigError("");
      e[i++] = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("extent '" + s + "' must be three positive integers D,W,H");
    }
  }
  if (i != 3) throw ConfigError("extent '" + s + "' must have three components");
  return e;
}

std::vector<std::size_t> parse_ids(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0) throw ConfigError("");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad task list '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty task list");
  return out;
}

void write_json(const fs::path& path, const json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string task_dir(const TaskDescriptor& t) { return "task" + std::to_string(t.id) + "_" + t.name; }

// --- gen -------------------------------------------------------------------

struct GenArgs {
  std::string tasks = "0,1,2,3,4,5,6";
  std::size_t cases = 4;
  std::size_t val = 1;
  std::string shape = "32,64,64";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  const auto ids = parse_ids(a.tasks);
  const auto shape = parse_extent(a.shape);
  for (auto id : ids) task_by_id(id);
  const fs::path root(a.out);
  std::vector<ManifestEntry> entries;
  for (auto id : ids) {
    const auto& t = task_by_id(id);
    for (int split = 0; split < 2; ++split) {
      const bool val = split == 1;
      const std::size_t n = val ? a.val : a.cases;
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = generate_case(t, case_seed(a.seed, id, i, val), shape);
        const std::string rel = task_dir(t) + "/" + (val ? "val_" : "train_") + std::to_string(i) + ".vol";
        write_volume(c, (root / rel).string());
        entries.push_back({rel, static_cast<std::uint32_t>(id), val ? "val" : "train"});
      }
    }
  }
  write_manifest((root / "manifest.json").string(), entries);
  json tasks = json::array();
  for (auto id : ids) {
    const auto& t = task_by_id(id);
    tasks.push_back({{"id", t.id}, {"name", t.name}, {"organ_labeled", t.organ_labeled}, {"tumor_labeled", t.tumor_labeled}});
  }
  write_json(root / "gen_config.json", {{"tasks", tasks},
                                        {"cases_per_task", a.cases},
                                        {"val_per_task", a.val},
                                        {"shape", shape},
                                        {"seed", a.seed}});
  std::printf("wrote %zu volumes for %zu tasks to %s\n", entries.size(), ids.size(), a.out.c_str());
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  cfg.model.validate();
  cfg.train.validate();
  fs::path manifest(a.data);
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  auto data = load_dataset(manifest.string());
  const fs::path out(a.out);
  fs::create_directories(out);
  write_json(out / "config.json", to_json(cfg));

  TransDoDNet<float> model(cfg.model, cfg.train.seed);
  Trainer trainer(model, cfg.train, std::move(data));
  if (!a.resume.empty()) {
    const auto ck = load_checkpoint(a.resume);
    restore_checkpoint(ck, model, &trainer.optimizer());
    trainer.set_state(ck.state);
  }
  std::vector<EpochRow> rows;
  const auto metrics = (out / "metrics.csv").string();
  trainer.run([&](const std::vector<EpochRow>& epoch) {
    for (const auto& r : epoch) {
      std::printf("epoch %zu task %zu dice %.4f ce %.4f", r.epoch, r.task, r.loss_dice, r.loss_ce);
      if (!std::isnan(r.val_dice_organ)) std::printf(" val_organ %.4f", r.val_dice_organ);
      if (!std::isnan(r.val_dice_tumor)) std::printf(" val_tumor %.4f", r.val_dice_tumor);
      std::printf("\n");
      rows.push_back(r);
    }
    std::fflush(stdout);
    write_metrics_csv(metrics, rows);
    save_checkpoint((out / "checkpoint.ckpt").string(),
                    capture_checkpoint(model, &trainer.optimizer(), cfg.train, trainer.state()));
  });
  save_checkpoint((out / "checkpoint.ckpt").string(),
                  capture_checkpoint(model, &trainer.optimizer(), cfg.train, trainer.state()));
  std::printf("trained %zu steps; checkpoint and metrics in %s\n", trainer.state().step, a.out.c_str());
  return 0;
}

// --- infer -----------------------------------------------------------------

struct InferArgs {
  std::string ckpt;
  std::string volume;
  std::optional<std::size_t> task;
  bool all = false;
  std::string window;
  std::string out;
};

int cmd_infer(const InferArgs& a) {
  if (a.task.has_value() == a.all) throw ConfigError("give exactly one of --task and --all-tasks");
  const auto ck = load_checkpoint(a.ckpt);
  TransDoDNet<float> model(ck.model, 0);
  restore_checkpoint<float>(ck, model, nullptr);
  const auto c = read_volume(a.volume);
  const Extent3 window = a.window.empty() ? ck.train.window : parse_extent(a.window);
  const Extent3 stride = half_window(window);
  if (a.task && *a.task >= ck.model.num_tasks) {
    throw TaskError("task " + std::to_string(*a.task) + " is not in this model (M = " +
                    std::to_string(ck.model.num_tasks) + ")");
  }
  const auto prob = infer_case(model, c, window, stride, a.task);
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<std::size_t> tasks;
  if (a.task) {
    tasks.push_back(*a.task);
  } else {
    for (std::size_t m = 0; m < ck.model.num_tasks; ++m) tasks.push_back(m);
  }
  json written = json::array();
  for (std::size_t row = 0; row < tasks.size(); ++row) {
    const auto& t = task_by_id(tasks[row]);
    VolumeCase mask;
    mask.shape = c.shape;
    mask.x.assign(c.voxels(), 0.0f);
    mask.y = to_labels(prob.channel(row, 0), prob.channel(row, 1), t);
    mask.task_id = static_cast<std::uint32_t>(t.id);
    mask.seed = c.seed;
    const std::string name = "mask_task" + std::to_string(t.id) + ".vol";
    write_volume(mask, (out / name).string());
    written.push_back(name);
  }
  write_json(out / "infer_config.json", {{"checkpoint", a.ckpt},
                                         {"volume", a.volume},
                                         {"model", to_json(ck.model)},
                                         {"window", window},
                                         {"stride", stride},
                                         {"outputs", written}});
  std::printf("wrote %zu mask volume(s) to %s\n", written.size(), a.out.c_str());
  return 0;
}

// --- eval ------------------------------------------------------------------

json channel_metrics(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& g, const Extent3& shape) {
  json j;
  j["dice"] = dice_metric(p, g);
  try {
    j["hausdorff"] = hausdorff(p, g, shape);
  } catch (const UndefinedMetricError& e) {
    j["hausdorff"] = nullptr;
    j["hausdorff_note"] = e.what();
  }
  return j;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& out) {
  const auto pred = read_volume(pred_path), gt = read_volume(gt_path);
  if (pred.shape != gt.shape) throw DimensionError("prediction and ground truth shapes differ");
  const auto& t = task_by_id(gt.task_id);
  const std::size_t n = gt.voxels();
  json j{{"task", t.id}, {"task_name", t.name}};
  for (int ch = 0; ch < 2; ++ch) {
    const bool labeled = ch == 0 ? t.organ_labeled : t.tumor_labeled;
    const char* key = ch == 0 ? "organ" : "tumor";
    if (!labeled) {
      j[key] = {{"available", false}};
      continue;
    }
    std::vector<std::uint8_t> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = ch == 0 ? pred.y[i] >= 1 : pred.y[i] == 2;
      g[i] = ch == 0 ? gt.y[i] >= 1 : gt.y[i] == 2;
    }
    j[key] = channel_metrics(p, g, gt.shape);
    j[key]["available"] = true;
  }
  const std::string text = j.dump(2);
  std::printf("%s\n", text.c_str());
  if (!out.empty()) write_json(out, j);
  return 0;
}

// --- paramcount / gradcheck ------------------------------------------------

int cmd_paramcount(const std::string& config) {
  const ModelConfig m = config.empty() ? ModelConfig{} : load_run_config(config).model;
  m.validate();
  const TransDoDNet<float> model(m, 0);
  const auto c = model.counts();
  std::printf("%-24s %12zu\n", "d_F (per task)", dynamic_param_count(m.head_width, m.head_depth));
  std::printf("%-24s %12zu\n", "dynamic (all tasks)", c.dynamic * m.num_tasks);
  std::printf("%-24s %12zu\n", "backbone", c.backbone);
  std::printf("%-24s %12zu\n", "transformer", c.generator);
  std::printf("%-24s %12zu\n", "filter head", c.filters);
  std::printf("%-24s %12zu\n", "total (stored)", c.total);
  return 0;
}

int cmd_gradcheck(const std::string& config, std::uint64_t seed) {
  const ModelConfig m = config.empty() ? micro_config() : load_run_config(config).model;
  bool ok = true;
  for (const auto& name : grad_case_names()) {
    const auto c = run_grad_case(name, seed, m);
    std::printf("%-5s %-18s %s\n", c.passed() ? "ok" : "FAIL", c.name.c_str(), describe(c.report).c_str());
    std::fflush(stdout);
    ok = ok && c.passed();
  }
  std::printf("%s (tolerance %.0e)\n", ok ? "all gradient checks passed" : "gradient check FAILED", kGradTolerance);
  return ok ? 0 : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-generated dynamic heads for partially labelled 3D segmentation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic multi-task dataset");
  g->add_option("--tasks", gen.tasks, "Comma-separated task ids")->capture_default_str();
  g->add_option("--cases-per-task", gen.cases, "Training cases per task")->capture_default_str();
  g->add_option("--val-per-task", gen.val, "Validation cases per task")->capture_default_str();
  g->add_option("--shape", gen.shape, "Volume extent D,W,H")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train on a generated dataset");
  t->add_option("--config", tr.config, "Run config JSON (defaults when omitted)");
  t->add_option("--data", tr.data, "Manifest file or dataset directory")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");

  InferArgs in;
  auto* i = app.add_subcommand("infer", "Sliding-window inference to mask volumes");
  i->add_option("--ckpt", in.ckpt)->required();
  i->add_option("--volume", in.volume)->required();
  i->add_option("--task", in.task, "Single task id");
  i->add_flag("--all-tasks", in.all, "Every task head in one pass");
  i->add_option("--window", in.window, "Window D,W,H (default: training window)");
  i->add_option("--out", in.out, "Output directory")->required();

  std::string pred, gt, eval_out;
  auto* e = app.add_subcommand("eval", "Dice and Hausdorff of a mask against ground truth");
  e->add_option("--pred", pred)->required();
  e->add_option("--gt", gt)->required();
  e->add_option("--out", eval_out, "Also write the metrics JSON here");

  std::string pc_config;
  auto* p = app.add_subcommand("paramcount", "Parameter counts of a model config");
  p->add_option("--config", pc_config);

  std::string gc_config;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--config", gc_config, "Run config whose model drives the end-to-end case");
  gc->add_option("--seed", gc_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    init_threads_from_env();
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(tr);
    if (*i) return cmd_infer(in);
    if (*e) return cmd_eval(pred, gt, eval_out);
    if (*p) return cmd_paramcount(pc_config);
    if (*gc) return cmd_gradcheck(gc_config, gc_seed);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const TaskError& err) {
    std::cerr << "task error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& err) {
    std::cerr << "dimension error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& err) {
    std::cerr << "format error: " << err.what() << "\n";
    return kExitIo;
  } catch (const IoError& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return kExitIo;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitVerify;
  }
  return kExitUsage;
}
