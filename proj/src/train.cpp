#include "dodnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "dodnet/error.hpp"
#include "dodnet/inference.hpp"
#include "dodnet/metrics.hpp"
#include "dodnet/objective.hpp"
#include "dodnet/ops.hpp"
#include "dodnet/volume_io.hpp"

namespace dodnet {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::uint64_t case_seed(std::uint64_t seed, std::size_t task, std::size_t index, bool val) {
  return mix_seed(mix_seed(seed, task), (index << 1) | (val ? 1u : 0u));
}

Dataset load_dataset(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  Dataset d;
  for (const auto& e : entries) {
    auto c = read_volume((dir / e.path).string());
    if (c.task_id != e.task_id) {
      throw ConfigError("volume '" + e.path + "' has task " + std::to_string(c.task_id) + " but the manifest says " +
                        std::to_string(e.task_id));
    }
    if (e.split == "train") {
      d.train.push_back(std::move(c));
    } else if (e.split == "val") {
      d.val.push_back(std::move(c));
    } else {
      throw ConfigError("unknown split '" + e.split + "' in manifest");
    }
  }
  return d;
}

Dataset synthetic_dataset(const std::vector<std::size_t>& tasks, std::size_t train_per_task,
                          std::size_t val_per_task, const Extent3& shape, std::uint64_t seed) {
  Dataset d;
  for (auto t : tasks) {
    const auto& desc = task_by_id(t);
    for (std::size_t i = 0; i < train_per_task; ++i) d.train.push_back(generate_case(desc, case_seed(seed, t, i, false), shape));
    for (std::size_t i = 0; i < val_per_task; ++i) d.val.push_back(generate_case(desc, case_seed(seed, t, i, true), shape));
  }
  return d;
}

std::vector<TaskDice> evaluate(const TransDoDNet<float>& model, const std::vector<VolumeCase>& cases,
                               const Extent3& window) {
  std::map<std::size_t, std::vector<std::pair<double, double>>> per_task;
  for (const auto& c : cases) {
    const auto& task = task_by_id(c.task_id);
    const auto prob = infer_case(model, c, window, half_window(window), c.task_id);
    const auto organ = prob.channel(0, 0), tumor = prob.channel(0, 1);
    const std::size_t n = c.voxels();
    std::vector<std::uint8_t> po(n), pt(n), go(n), gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      po[i] = organ[i] > 0.5f;
      pt[i] = tumor[i] > 0.5f;
      go[i] = c.y[i] >= 1;
      gt[i] = c.y[i] == 2;
    }
    per_task[c.task_id].emplace_back(task.organ_labeled ? dice_metric(po, go) : kNaN,
                                     task.tumor_labeled ? dice_metric(pt, gt) : kNaN);
  }
  std::vector<TaskDice> out;
  for (const auto& [task, scores] : per_task) {
    TaskDice d;
    d.task = task;
    double so = 0, st = 0;
    for (const auto& [o, t] : scores) {
      so += o;
      st += t;
    }
    d.organ = so / static_cast<double>(scores.size());
    d.tumor = st / static_cast<double>(scores.size());
    out.push_back(d);
  }
  return out;
}

double mean_dice(const std::vector<TaskDice>& d) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& t : d) {
    if (!std::isnan(t.organ)) {
      s += t.organ;
      ++n;
    }
    if (!std::isnan(t.tumor)) {
      s += t.tumor;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : kNaN;
}

Trainer::Trainer(TransDoDNet<float>& model, const TrainConfig& cfg, Dataset data)
    : model_(model),
      cfg_(cfg),
      data_(std::move(data)),
      opt_(model.params(), AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay}),
      rng_(mix_seed(cfg.seed, 0x747261696eull)) {
  cfg_.validate();
  if (data_.train.empty()) throw ConfigError("training set is empty");
  const std::size_t mult = model_.config().spatial_multiple();
  for (auto p : cfg_.patch) {
    if (p % mult != 0) {
      throw ConfigError("patch extent " + std::to_string(p) + " is not a multiple of " + std::to_string(mult));
    }
  }
  std::set<std::size_t> ids;
  for (const auto& c : data_.train) {
    if (c.task_id >= model_.config().num_tasks) {
      throw TaskError("case task id " + std::to_string(c.task_id) + " >= M = " + std::to_string(model_.config().num_tasks));
    }
    task_by_id(c.task_id);
    for (int a = 0; a < 3; ++a) {
      if (c.shape[a] < cfg_.patch[a]) throw ConfigError("training patch does not fit inside a case volume");
    }
    ids.insert(c.task_id);
  }
  tasks_.assign(ids.begin(), ids.end());
  cases_by_task_.resize(tasks_.size());
  for (std::size_t i = 0; i < data_.train.size(); ++i) {
    const auto pos = std::lower_bound(tasks_.begin(), tasks_.end(), data_.train[i].task_id) - tasks_.begin();
    cases_by_task_[pos].push_back(i);
  }
  state_.rng_state = rng_.state();
}

void Trainer::set_state(const TrainState& s) {
  state_ = s;
  rng_.set_state(s.rng_state);
}

StepRecord Trainer::step() {
  if (done()) throw ScheduleError("training already reached max_steps");
  const std::size_t slot = state_.cursor % tasks_.size();
  const std::size_t task_id = tasks_[slot];
  const auto& task = task_by_id(task_id);
  const auto& pool = cases_by_task_[slot];

  StepRecord rec;
  rec.step = state_.step;
  rec.task = task_id;
  rec.lr = poly_lr(state_.step, cfg_.max_steps, cfg_.lr_init);
  model_.params().zero_grad();
  const float inv_batch = 1.0f / static_cast<float>(cfg_.batch_size);
  const auto& P = cfg_.patch;
  const std::size_t np = P[0] * P[1] * P[2];
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
    const auto& c = data_.train[pool[rng_.below(pool.size())]];
    std::array<std::size_t, 3> o{};
    for (int a = 0; a < 3; ++a) o[a] = rng_.below(c.shape[a] - P[a] + 1);
    std::array<bool, 3> flip{false, false, false};
    if (cfg_.flip) {
      for (auto& f : flip) f = rng_.below(2) == 1;
    }
    std::vector<float> img(np);
    std::vector<std::uint8_t> lab(np);
    for (std::size_t z = 0; z < P[0]; ++z) {
      for (std::size_t y = 0; y < P[1]; ++y) {
        for (std::size_t x = 0; x < P[2]; ++x) {
          const std::size_t sz = o[0] + (flip[0] ? P[0] - 1 - z : z);
          const std::size_t sy = o[1] + (flip[1] ? P[1] - 1 - y : y);
          const std::size_t sx = o[2] + (flip[2] ? P[2] - 1 - x : x);
          const std::size_t src = (sz * c.shape[1] + sy) * c.shape[2] + sx;
          const std::size_t dst = (z * P[1] + y) * P[2] + x;
          img[dst] = c.x[src];
          lab[dst] = c.y[src];
        }
      }
    }
    LossParts parts;
    try {
      const auto x = Tensor<float>::from_data({1, P[0], P[1], P[2]}, std::move(img));
      const auto f = model_.forward(x);
      const auto loss = masked_loss(model_.task_logits(f, task_id), lab, task.organ_labeled, task.tumor_labeled,
                                    float(kDiceEps), &parts);
      if (!std::isfinite(parts.total())) {
        throw NumericError("loss is not finite");
      }
      scale(loss, inv_batch).backward();
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " [step " + std::to_string(state_.step) + ", task " +
                         std::to_string(task_id) + ", dice " + std::to_string(parts.dice) + ", ce " +
                         std::to_string(parts.ce) + "]");
    }
    rec.loss_dice += parts.dice / static_cast<double>(cfg_.batch_size);
    rec.loss_ce += parts.ce / static_cast<double>(cfg_.batch_size);
  }
  opt_.step(rec.lr);
  ++state_.step;
  ++state_.cursor;
  state_.rng_state = rng_.state();
  history_.push_back(rec);
  return rec;
}

std::vector<EpochRow> Trainer::epoch_rows(std::size_t epoch, std::size_t first_step, bool validate) {
  std::vector<TaskDice> val;
  if (validate && !data_.val.empty()) val = evaluate(model_, data_.val, cfg_.window);
  std::vector<EpochRow> rows;
  for (auto t : tasks_) {
    EpochRow r;
    r.epoch = epoch;
    r.task = t;
    std::size_t n = 0;
    for (const auto& h : history_) {
      if (h.step >= first_step && h.task == t) {
        r.loss_dice += h.loss_dice;
        r.loss_ce += h.loss_ce;
        ++n;
      }
    }
    if (n == 0) continue;
    r.loss_dice /= static_cast<double>(n);
    r.loss_ce /= static_cast<double>(n);
    r.val_dice_organ = r.val_dice_tumor = kNaN;
    for (const auto& v : val) {
      if (v.task == t) {
        r.val_dice_organ = v.organ;
        r.val_dice_tumor = v.tumor;
      }
    }
    rows.push_back(r);
  }
  return rows;
}

void Trainer::run(const std::function<void(const std::vector<EpochRow>&)>& on_epoch) {
  while (!done()) {
    const std::size_t first = state_.step;
    const std::size_t epoch = first / cfg_.steps_per_epoch;
    const std::size_t end = std::min<std::size_t>((epoch + 1) * cfg_.steps_per_epoch, cfg_.max_steps);
    while (state_.step < end) step();
    const bool last = done();
    const bool due = cfg_.val_every ? ((epoch + 1) % cfg_.val_every == 0) || last : last;
    auto rows = epoch_rows(epoch, first, due);
    if (on_epoch) on_epoch(rows);
  }
}

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics log '" + path + "'");
  out << "epoch,task,loss_dice,loss_ce,val_dice_organ,val_dice_tumor\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : std::to_string(v); };
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.task << ',' << num(r.loss_dice) << ',' << num(r.loss_ce) << ','
        << num(r.val_dice_organ) << ',' << num(r.val_dice_tumor) << '\n';
  }
}

}  // namespace dodnet
