#include "contextprobe/experiment.hpp"

#include "contextprobe/augment.hpp"
#include "contextprobe/metrics.hpp"
#include "contextprobe/raster_io.hpp"
#include "contextprobe/removal.hpp"
#include "contextprobe/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace contextprobe {

namespace {

using Eigen::VectorXd;

std::vector<int> shuffled(std::vector<int> ids, Rng& rng) {
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_int(i)]);
  return ids;
}

std::uint64_t mix3(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                   std::uint64_t b) {
  return mix_seed(mix_seed(mix_seed(seed, tag), a), b);
}

void check_arch_matches(const ExperimentConfig& cfg, const Dataset& ds) {
  const int k = static_cast<int>(ds.spec.classes.size()) + 1;
  if (cfg.arch.num_classes != k)
    throw std::runtime_error("task mismatch: model has " +
                             std::to_string(cfg.arch.num_classes) +
                             " classes, dataset has " + std::to_string(k));
  if (cfg.arch.in_h != ds.spec.height || cfg.arch.in_w != ds.spec.width)
    throw std::runtime_error("task mismatch: model input shape differs from canvas");
}

/// Labels with every pixel of the class's dilated mask set to ignore but the
/// image untouched (the no-removal ablation companion).
LabelPlane masked_labels_without_removal(const Scene& scene, int class_id,
                                         int radius) {
  MaskPlane uni =
      MaskPlane::Constant(scene.labels.rows(), scene.labels.cols(), false);
  for (const ObjectInstance& obj : scene.objects)
    if (obj.class_id == class_id) uni = uni || obj.mask;
  const MaskPlane dilated = dilate_mask(uni, radius);
  LabelPlane labels = scene.labels;
  for (Index r = 0; r < labels.rows(); ++r)
    for (Index c = 0; c < labels.cols(); ++c)
      if (dilated(r, c)) labels(r, c) = kIgnoreLabel;
  return labels;
}

}  // namespace

std::pair<ParamVec, TrainStats> train_model(const ExperimentConfig& cfg,
                                            const Dataset& ds) {
  check_arch_matches(cfg, ds);
  const Splits splits = split_dataset(ds);
  const std::vector<int>& train_ids =
      cfg.train_on == TrainSplit::full ? splits.full : splits.cooccur;
  if (train_ids.empty())
    throw std::runtime_error("training split is empty");

  const TrainingConfig& tc = cfg.training;
  const TrainMode mode = cfg.augmentation.mode;
  const SamplerKind sampler = cfg.augmentation.sampler;
  const Backfill backfill = resolve_backfill(cfg.removal, ds.mean_color);
  const int radius = cfg.removal.radius;
  const double gate = cfg.removal.size_gate;
  const int k = cfg.arch.num_classes;
  std::span<const ClassSpec> classes(ds.spec.classes);

  ParamVec params = init_params(cfg.arch, tc.seed);
  VectorXd velocity = VectorXd::Zero(params.values.size());
  ClassLossTracker tracker(k, ClassLossTracker::kDefaultDecay,
                           ClassLossTracker::kDefaultFloor, std::log(k));

  TrainStats stats;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(mix_seed(tc.seed, "shuffle"), epoch));
    const std::vector<int> order = shuffled(train_ids, shuffle_rng);

    double epoch_loss = 0;
    LossBreakdown epoch_parts;
    int batches = 0;

    for (std::size_t start = 0; start < order.size(); start += tc.batch) {
      const std::size_t stop = std::min(order.size(), start + tc.batch);
      VectorXd grad = VectorXd::Zero(params.values.size());
      LossBreakdown parts;
      double loss_sum = 0;
      const int n_scenes_batch = static_cast<int>(stop - start);
      std::map<int, std::pair<double, long>> class_ce;

      for (std::size_t i = start; i < stop; ++i) {
        const Scene& scene = ds.scenes[order[i]];
        const std::vector<int> present = present_classes(scene);
        const std::uint64_t scene_key = static_cast<std::uint64_t>(scene.scene_id);

        if (cfg.arch.task == Task::classifier) {
          LossBundle base = classifier_bce_bundle(params, scene.image, present);
          grad += base.grad;
          loss_sum += base.loss;
          parts += base.parts;

          if (mode == TrainMode::aug_rand) {
            Rng aug_rng(mix3(tc.seed, "aug", epoch, scene_key));
            const auto ex = make_augmented_example(
                scene, classes, sampler, tracker, aug_rng,
                TaskMode::classification, radius, backfill, gate);
            if (ex) {
              LossBundle aug = classifier_bce_bundle(params, ex->edit.edited_image,
                                                     ex->class_labels);
              grad += aug.grad;
              loss_sum += aug.loss;
              parts += aug.parts;
            }
          } else if (mode == TrainMode::aug_const) {
            Rng sel_rng(mix3(tc.seed, "const", epoch, scene_key));
            if (sel_rng.bernoulli(tc.const_fraction)) {
              std::vector<EditRecord> edits =
                  build_edited_set(scene, classes, radius, backfill, gate);
              if (edits.size() >= 2) {
                std::map<int, Image> images;
                for (EditRecord& e : edits)
                  images.emplace(e.removed_class, std::move(e.edited_image));
                LossBundle hinge =
                    classifier_hinge_bundle(params, images, present);
                grad += tc.lambda_hinge * hinge.grad;
                loss_sum += tc.lambda_hinge * hinge.loss;
                parts.hinge += tc.lambda_hinge * hinge.parts.hinge;
              }
            }
          }
        } else {
          LossBundle base =
              segmenter_bundle(params, scene.image, scene.labels,
                               SegLossMode::plain, -1, nullptr, 0.0, &class_ce);
          grad += base.grad;
          loss_sum += base.loss;
          parts += base.parts;

          if (mode == TrainMode::seg_ignore || mode == TrainMode::seg_neg) {
            Rng aug_rng(mix3(tc.seed, "aug", epoch, scene_key));
            const TaskMode tm = mode == TrainMode::seg_neg
                                    ? TaskMode::seg_negative
                                    : TaskMode::seg_ignore;
            const auto ex = make_augmented_example(scene, classes, sampler,
                                                   tracker, aug_rng, tm, radius,
                                                   backfill, gate);
            if (ex) {
              const bool neg = mode == TrainMode::seg_neg;
              LossBundle aug = segmenter_bundle(
                  params, ex->edit.edited_image, ex->edit.edited_labels,
                  neg ? SegLossMode::negative : SegLossMode::ignore_removed,
                  neg ? ex->removed_class : -1,
                  neg ? &ex->edit.dilated_mask : nullptr, tc.lambda_neg);
              grad += aug.grad;
              loss_sum += aug.loss;
              parts += aug.parts;
            }
          } else if (mode == TrainMode::no_removal_ignore) {
            Rng aug_rng(mix3(tc.seed, "aug", epoch, scene_key));
            const auto picked =
                pick_class(sampler, scene, classes, tracker, aug_rng, gate);
            if (picked) {
              const LabelPlane labels =
                  masked_labels_without_removal(scene, *picked, radius);
              LossBundle aug =
                  segmenter_bundle(params, scene.image, labels,
                                   SegLossMode::ignore_removed);
              grad += aug.grad;
              loss_sum += aug.loss;
              parts += aug.parts;
            }
          }
        }
      }

      // normalized per scene: companions and constraint terms add to their
      // scene's contribution instead of diluting everyone else's
      grad /= n_scenes_batch;
      loss_sum /= n_scenes_batch;
      parts.scale(1.0 / n_scenes_batch);
      if (!std::isfinite(loss_sum))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(start / tc.batch));
      sgd_step(params, velocity, grad, tc.lr, tc.momentum);

      // hard-negative bookkeeping from this batch's original images
      for (const auto& [cls, acc] : class_ce)
        if (acc.second > 0) tracker.update(cls, acc.first / acc.second);

      epoch_loss += loss_sum;
      epoch_parts += parts;
      ++batches;
    }
    stats.final_loss = epoch_loss / batches;
    stats.final_parts = epoch_parts;
    stats.final_parts.scale(1.0 / batches);
    stats.epochs_run = epoch + 1;
  }
  return {std::move(params), stats};
}

namespace {

LabelPlane argmax_labels(const std::vector<Planed>& logits) {
  const Index h = logits[0].rows(), w = logits[0].cols();
  LabelPlane out(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      int best = 0;
      double best_v = logits[0](r, c);
      for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k](r, c) > best_v) {  // first attaining max wins ties
          best_v = logits[k](r, c);
          best = static_cast<int>(k);
        }
      out(r, c) = static_cast<std::uint16_t>(best);
    }
  return out;
}

std::string checkpoint_mem_id(const ParamVec& params) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  const int task = params.arch.task == Task::classifier ? 0 : 1;
  h = fnv1a(&task, sizeof task, h);
  std::vector<float> vals(params.values.size());
  for (Index i = 0; i < params.values.size(); ++i)
    vals[i] = static_cast<float>(params.values[i]);
  h = fnv1a(vals.data(), vals.size() * sizeof(float), h);
  return hex64(h);
}

const char* backfill_label(BackfillKind b) {
  switch (b) {
    case BackfillKind::mask_only: return "mask_only";
    case BackfillKind::oracle_background: return "oracle_background";
    case BackfillKind::constant: return "constant";
  }
  return "mask_only";
}

struct SplitSets {
  std::map<std::string, std::vector<int>> by_name;
};

SplitSets named_splits(const Dataset& ds) {
  const Splits s = split_dataset(ds);
  SplitSets out;
  out.by_name["full"] = s.full;
  out.by_name["cooccur"] = s.cooccur;
  out.by_name["single"] = s.single;
  return out;
}

ClassifierReport classifier_audit(const ExperimentConfig& cfg,
                                  const ParamVec& params, const Dataset& ds,
                                  const Backfill& backfill) {
  const int k = cfg.arch.num_classes;
  std::span<const ClassSpec> classes(ds.spec.classes);

  ScoreTable table;
  table.num_classes = k;
  std::vector<VectorXd> original_logits(ds.scenes.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const Scene& scene = ds.scenes[i];
    SceneScores row;
    row.present = present_classes(scene);
    row.original = classifier_apply(params, scene.image);
    original_logits[i] = row.original;
    for (const EditRecord& e :
         build_edited_set(scene, classes, cfg.removal.radius, backfill,
                          cfg.removal.size_gate))
      row.edits.emplace(e.removed_class,
                        classifier_apply(params, e.edited_image));
    table.rows.emplace(scene.scene_id, std::move(row));
  }
  const VMetrics vm = v_metrics(table);

  ClassifierReport rep;
  rep.vmin_mean = vm.vmin_mean;
  rep.vmean_mean = vm.vmean_mean;

  const SplitSets splits = named_splits(ds);
  std::map<std::string, MeanAp> ap_by_split;
  for (const auto& [name, ids] : splits.by_name) {
    std::map<int, std::vector<double>> scores;
    std::map<int, std::vector<std::uint8_t>> labels;
    for (int c = 1; c < k; ++c) {
      scores[c] = {};
      labels[c] = {};
    }
    for (int idx : ids) {
      const std::vector<int> present = present_classes(ds.scenes[idx]);
      for (int c = 1; c < k; ++c) {
        scores[c].push_back(original_logits[idx][c]);
        labels[c].push_back(
            std::find(present.begin(), present.end(), c) != present.end() ? 1 : 0);
      }
    }
    ap_by_split[name] = mean_average_precision(scores, labels);
    rep.map_by_split[name] = ap_by_split[name].value;
  }

  for (int c = 1; c < k; ++c) {
    ClassifierClassReport pc;
    pc.class_id = c;
    auto ap_of = [&](const char* split) -> std::optional<double> {
      const auto& per = ap_by_split.at(split).per_class;
      const auto it = per.find(c);
      if (it == per.end()) return std::nullopt;
      return it->second;
    };
    pc.ap_full = ap_of("full");
    pc.ap_cooccur = ap_of("cooccur");
    pc.ap_single = ap_of("single");
    const auto it = vm.per_class.find(c);
    if (it != vm.per_class.end()) {
      pc.eligible = it->second.eligible;
      pc.vmin_violations = it->second.violated_min;
      pc.vmean_violations = it->second.violated_mean;
      pc.vmin = it->second.vmin();
      pc.vmean = it->second.vmean();
    }
    rep.per_class.push_back(pc);
  }
  return rep;
}

SegmenterReport segmenter_audit(const ExperimentConfig& cfg,
                                const ParamVec& params, const Dataset& ds,
                                const Backfill& backfill, double alpha) {
  const int k = cfg.arch.num_classes;
  std::span<const ClassSpec> classes(ds.spec.classes);
  // IoU changes are only evidence of context use where the model's input is
  // untouched: widen the excluded region by the trunk's receptive-field
  // radius so pixels that can see backfill do not enter the comparison.
  const int rf_margin = static_cast<int>(cfg.arch.convs.size());

  std::vector<ScenePredictions> main_preds, control_preds;
  std::vector<LabelPlane> pred_rasters(ds.scenes.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const Scene& scene = ds.scenes[i];
    ScenePredictions sp;
    sp.scene_id = scene.scene_id;
    sp.gt = scene.labels;
    sp.pred_original = argmax_labels(segmenter_apply(params, scene.image));
    pred_rasters[i] = sp.pred_original;

    ScenePredictions cp;
    cp.scene_id = scene.scene_id;
    cp.gt = scene.labels;
    cp.pred_original = sp.pred_original;

    for (int cls : removable_classes(scene, classes, cfg.removal.size_gate)) {
      EditRecord e = remove_object(scene, classes, cls, cfg.removal.radius,
                                   backfill, cfg.removal.size_gate);
      EditPrediction ep;
      ep.removed_class = cls;
      ep.pred = argmax_labels(segmenter_apply(params, e.edited_image));
      ep.excluded = dilate_mask(e.dilated_mask, rf_margin);
      sp.edits.push_back(std::move(ep));

      EditRecord fe = false_edit(scene, classes, cls, cfg.removal.radius,
                                 backfill, cfg.removal.size_gate);
      if (!degenerate_control(fe)) {
        EditPrediction fp;
        fp.removed_class = cls;
        fp.pred = argmax_labels(segmenter_apply(params, fe.edited_image));
        fp.excluded = dilate_mask(fe.dilated_mask, rf_margin);
        cp.edits.push_back(std::move(fp));
      }
    }
    main_preds.push_back(std::move(sp));
    control_preds.push_back(std::move(cp));
  }

  SegmenterReport rep;
  const SplitSets splits = named_splits(ds);
  for (const auto& [name, ids] : splits.by_name) {
    std::vector<LabelPlane> preds, gts;
    for (int idx : ids) {
      preds.push_back(pred_rasters[idx]);
      gts.push_back(ds.scenes[idx].labels);
    }
    const SegPerf perf = seg_perf(preds, gts);
    rep.splits[name] = {perf.miou, perf.pixel_accuracy};
    if (name == "full") rep.per_class_iou = perf.per_class_iou;
  }

  auto to_entries = [&](const ArMatrix& m) {
    std::vector<ArEntry> out;
    for (const auto& [key, ps] : m.pairs) {
      ArEntry e;
      e.affected = key.first;
      e.removed = key.second;
      e.images = ps.images;
      e.affected_n = ps.affected;
      e.ar = ps.ar();
      e.mean_delta_iou = ps.mean_delta();
      out.push_back(e);
    }
    return out;
  };
  rep.ar = to_entries(ar_matrix(main_preds, k, alpha));
  rep.ar_control = to_entries(ar_matrix(control_preds, k, alpha));
  return rep;
}

}  // namespace

RobustnessReport audit_model(const ExperimentConfig& cfg, const ParamVec& params,
                             const Dataset& ds,
                             std::optional<double> alpha_override) {
  check_arch_matches(cfg, ds);
  if (params.arch.task != cfg.arch.task)
    throw std::runtime_error("task mismatch: checkpoint task differs from config");
  if (params.arch.num_classes != cfg.arch.num_classes ||
      params.arch.in_h != cfg.arch.in_h || params.arch.in_w != cfg.arch.in_w)
    throw std::runtime_error(
        "task mismatch: checkpoint shape does not fit the dataset");
  const double alpha = alpha_override.value_or(cfg.metrics.alpha);
  const Backfill backfill = resolve_backfill(cfg.removal, ds.mean_color);

  RobustnessReport rep;
  rep.task = cfg.arch.task == Task::classifier ? "classifier" : "segmenter";
  rep.alpha = alpha;
  rep.dilation_radius = cfg.removal.radius;
  rep.backfill = backfill_label(cfg.removal.backfill);
  rep.config_hash = config_hash(cfg);
  rep.dataset_id = ds.dataset_id;
  rep.checkpoint_id = checkpoint_mem_id(params);
  rep.num_classes = cfg.arch.num_classes;

  std::vector<std::vector<int>> presence;
  presence.reserve(ds.scenes.size());
  for (const Scene& s : ds.scenes) presence.push_back(present_classes(s));
  const NcMatrix nc = nc_matrix(presence, cfg.arch.num_classes);
  rep.nc.assign(nc.num_classes, std::vector<double>(nc.num_classes, 0.0));
  for (int i = 0; i < nc.num_classes; ++i)
    for (int j = 0; j < nc.num_classes; ++j) rep.nc[i][j] = nc.values(i, j);
  rep.nc_row_defined = nc.class_present;

  if (cfg.arch.task == Task::classifier)
    rep.classifier = classifier_audit(cfg, params, ds, backfill);
  else
    rep.segmenter = segmenter_audit(cfg, params, ds, backfill, alpha);
  return rep;
}

Dataset cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  Dataset ds = generate_dataset(cfg.dataset, cfg.n_scenes, cfg.dataset_seed);
  save_dataset(ds, out_dir);
  return ds;
}

RunRecord cmd_train(const ExperimentConfig& cfg,
                    const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = load_dataset(dataset_dir);
  auto [params, stats] = train_model(cfg, ds);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path ckpt = out_dir / "checkpoint.cpw";
  save_checkpoint(ckpt, params);

  RunRecord rec;
  rec.config_hash = config_hash(cfg);
  rec.checkpoint_path = ckpt.string();
  rec.seed = cfg.training.seed;
  rec.final_loss = stats.final_loss;
  rec.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json j;
  j["config_hash"] = rec.config_hash;
  j["checkpoint"] = ckpt.filename().string();
  j["seed"] = rec.seed;
  j["wall_clock_sec"] = rec.wall_clock_sec;
  j["final_loss"] = rec.final_loss;
  j["final_parts"] = {{"bce", stats.final_parts.bce},
                      {"hinge", stats.final_parts.hinge},
                      {"seg_ce", stats.final_parts.seg_ce},
                      {"seg_neg", stats.final_parts.seg_neg}};
  std::ofstream os(out_dir / "run.json", std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write run.json");
  os << j.dump(2) << '\n';
  return rec;
}

RobustnessReport cmd_audit(const ExperimentConfig& cfg,
                           const std::filesystem::path& checkpoint,
                           const std::filesystem::path& dataset_dir,
                           std::optional<double> alpha_override,
                           const std::filesystem::path& out_dir,
                           bool dump_edits) {
  const Dataset ds = load_dataset(dataset_dir);
  const ParamVec params = load_checkpoint(checkpoint);
  if ((params.arch.task == Task::classifier) !=
      (cfg.arch.task == Task::classifier))
    throw std::runtime_error("task mismatch: checkpoint task differs from config");

  RobustnessReport rep = audit_model(cfg, params, ds, alpha_override);
  rep.checkpoint_id = hex64(hash_file(checkpoint));

  std::filesystem::create_directories(out_dir);
  std::ofstream os(out_dir / "report.json", std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write report.json");
  os << report_to_json(rep) << '\n';

  if (dump_edits) {
    const std::filesystem::path edir = out_dir / "edits";
    std::filesystem::create_directories(edir);
    const Backfill backfill = resolve_backfill(cfg.removal, ds.mean_color);
    nlohmann::json provenance = nlohmann::json::array();
    for (const Scene& scene : ds.scenes) {
      for (const EditRecord& e :
           build_edited_set(scene, ds.spec.classes, cfg.removal.radius,
                            backfill, cfg.removal.size_gate)) {
        char stem[64];
        std::snprintf(stem, sizeof stem, "scene_%05lld_r%02d",
                      static_cast<long long>(scene.scene_id), e.removed_class);
        write_image(edir / (std::string(stem) + ".img"), e.edited_image);
        write_labels(edir / (std::string(stem) + ".lab"), e.edited_labels);
        write_mask(edir / (std::string(stem) + ".msk"), e.dilated_mask);
        provenance.push_back({{"scene_id", e.base_scene_id},
                              {"removed_class", e.removed_class},
                              {"control", e.is_control},
                              {"control_overlap", e.control_overlap},
                              {"image", std::string(stem) + ".img"},
                              {"labels", std::string(stem) + ".lab"},
                              {"mask", std::string(stem) + ".msk"}});
      }
    }
    std::ofstream eos(edir / "edits.json", std::ios::binary | std::ios::trunc);
    eos << provenance.dump(2) << '\n';
  }
  return rep;
}

void cmd_report(const std::filesystem::path& report_json,
                const std::string& format,
                const std::filesystem::path& out_dir) {
  std::ifstream is(report_json, std::ios::binary);
  if (!is)
    throw std::runtime_error("cannot open report: " + report_json.string());
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  const RobustnessReport rep = report_from_json(text);

  std::filesystem::create_directories(out_dir);
  if (format == "json") {
    std::ofstream os(out_dir / "report.json", std::ios::binary | std::ios::trunc);
    os << report_to_json(rep) << '\n';
  } else if (format == "csv") {
    write_report_csv(rep, out_dir);
  } else if (format == "plot") {
    write_report_plotdata(rep, out_dir);
  } else {
    throw std::invalid_argument("unknown report format: " + format);
  }
}

}  // namespace contextprobe
