#include "contextprobe/config.hpp"

#include "contextprobe/raster_io.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace contextprobe {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

const json& require(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) fail("missing required key '" + ctx + key + "'");
  return j.at(key);
}

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& ctx) {
  if (!j.is_object()) fail("'" + ctx + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) fail("unknown key '" + ctx + key + "'");
}

double number(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number()) fail("'" + ctx + key + "' must be a number");
  return v.get<double>();
}

int integer(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number_integer()) fail("'" + ctx + key + "' must be an integer");
  return v.get<int>();
}

std::uint64_t uinteger(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number_unsigned() && !v.is_number_integer())
    fail("'" + ctx + key + "' must be a non-negative integer");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0)
    fail("'" + ctx + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string text(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_string()) fail("'" + ctx + key + "' must be a string");
  return v.get<std::string>();
}

bool boolean(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_boolean()) fail("'" + ctx + key + "' must be a boolean");
  return v.get<bool>();
}

Color color3(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_array() || v.size() != 3) fail("'" + ctx + key + "' must be [r,g,b]");
  Color c;
  for (int i = 0; i < 3; ++i) {
    if (!v.at(i).is_number()) fail("'" + ctx + key + "' must be numeric");
    c[i] = v.at(i).get<float>();
  }
  return c;
}

ShapeKind parse_shape(const std::string& s, const std::string& ctx) {
  if (s == "disc") return ShapeKind::disc;
  if (s == "square") return ShapeKind::square;
  if (s == "triangle") return ShapeKind::triangle;
  fail("'" + ctx + "shape' must be one of disc|square|triangle");
}

DatasetSpec parse_dataset(const json& j, int& n_scenes, std::uint64_t& seed) {
  const std::string ctx = "dataset.";
  reject_unknown(j, {"canvas", "n_scenes", "seed", "max_objects", "classes", "p_cond"},
                 ctx);
  DatasetSpec spec;
  const json& canvas = require(j, "canvas", ctx);
  if (!canvas.is_array() || canvas.size() != 2)
    fail("'dataset.canvas' must be [height,width]");
  spec.height = canvas.at(0).get<Index>();
  spec.width = canvas.at(1).get<Index>();
  n_scenes = integer(j, "n_scenes", ctx);
  if (n_scenes < 1) fail("'dataset.n_scenes' must be >= 1");
  seed = uinteger(j, "seed", ctx);
  const int max_objects = integer(j, "max_objects", ctx);

  const json& classes = require(j, "classes", ctx);
  if (!classes.is_array() || classes.empty())
    fail("'dataset.classes' must be a non-empty array");
  const int k = static_cast<int>(classes.size()) + 1;
  CoocSpec cooc;
  cooc.num_classes = k;
  cooc.max_objects = max_objects;
  cooc.p_anchor.assign(k, 0.0);
  cooc.p_cond.assign(k, std::vector<double>(k, 0.0));

  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string cctx = "dataset.classes[" + std::to_string(i) + "].";
    const json& jc = classes.at(i);
    reject_unknown(jc, {"id", "shape", "color", "size", "stuff", "p_anchor"}, cctx);
    ClassSpec c;
    c.class_id = integer(jc, "id", cctx);
    c.shape = parse_shape(text(jc, "shape", cctx), cctx);
    c.base_color = color3(jc, "color", cctx);
    const json& size = require(jc, "size", cctx);
    if (!size.is_array() || size.size() != 2)
      fail("'" + cctx + "size' must be [min,max]");
    c.size_min = size.at(0).get<double>();
    c.size_max = size.at(1).get<double>();
    c.is_stuff = boolean(jc, "stuff", cctx);
    const double pa = number(jc, "p_anchor", cctx);
    if (c.class_id < 1 || c.class_id >= k)
      fail("'" + cctx + "id' must be in 1..K-1");
    cooc.p_anchor[c.class_id] = pa;
    spec.classes.push_back(c);
  }

  const json& p_cond = require(j, "p_cond", ctx);
  if (!p_cond.is_array()) fail("'dataset.p_cond' must be an array");
  for (std::size_t i = 0; i < p_cond.size(); ++i) {
    const std::string ectx = "dataset.p_cond[" + std::to_string(i) + "].";
    const json& je = p_cond.at(i);
    reject_unknown(je, {"given", "add", "p"}, ectx);
    const int gi = integer(je, "given", ectx);
    const int ad = integer(je, "add", ectx);
    const double p = number(je, "p", ectx);
    if (gi < 1 || gi >= k || ad < 1 || ad >= k || gi == ad)
      fail("'" + ectx + "': given/add must be distinct class ids in 1..K-1");
    cooc.p_cond[gi][ad] = p;
  }
  spec.cooc = std::move(cooc);
  validate(spec);  // field-level messages for value constraints
  return spec;
}

ArchDescriptor parse_arch(const json& j, const DatasetSpec& ds) {
  const std::string ctx = "arch.";
  reject_unknown(j, {"task", "channels", "strides"}, ctx);
  ArchDescriptor arch;
  const std::string task = text(j, "task", ctx);
  if (task == "classifier")
    arch.task = Task::classifier;
  else if (task == "segmenter")
    arch.task = Task::segmenter;
  else
    fail("'arch.task' must be classifier|segmenter");
  const json& channels = require(j, "channels", ctx);
  const json& strides = require(j, "strides", ctx);
  if (!channels.is_array() || channels.empty())
    fail("'arch.channels' must be a non-empty array");
  if (!strides.is_array() || strides.size() != channels.size())
    fail("'arch.strides' must match channels in length");
  for (std::size_t i = 0; i < channels.size(); ++i)
    arch.convs.push_back(
        {channels.at(i).get<int>(), strides.at(i).get<int>()});
  arch.num_classes = static_cast<int>(ds.classes.size()) + 1;
  arch.in_h = ds.height;
  arch.in_w = ds.width;
  validate(arch);
  return arch;
}

TrainMode parse_mode(const std::string& s) {
  if (s == "baseline") return TrainMode::baseline;
  if (s == "aug-rand") return TrainMode::aug_rand;
  if (s == "aug-const") return TrainMode::aug_const;
  if (s == "seg-ignore") return TrainMode::seg_ignore;
  if (s == "seg-neg") return TrainMode::seg_neg;
  if (s == "no-removal-ignore") return TrainMode::no_removal_ignore;
  fail("'augmentation.mode' must be one of baseline|aug-rand|aug-const|"
       "seg-ignore|seg-neg|no-removal-ignore");
}

SamplerKind parse_sampler(const std::string& s) {
  if (s == "random") return SamplerKind::random;
  if (s == "sizebased") return SamplerKind::sizebased;
  if (s == "hardneg") return SamplerKind::hardneg;
  fail("'augmentation.sampler' must be one of random|sizebased|hardneg");
}

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::aug_rand: return "aug-rand";
    case TrainMode::aug_const: return "aug-const";
    case TrainMode::seg_ignore: return "seg-ignore";
    case TrainMode::seg_neg: return "seg-neg";
    case TrainMode::no_removal_ignore: return "no-removal-ignore";
  }
  return "baseline";
}

const char* sampler_name(SamplerKind s) {
  switch (s) {
    case SamplerKind::random: return "random";
    case SamplerKind::sizebased: return "sizebased";
    case SamplerKind::hardneg: return "hardneg";
  }
  return "random";
}

const char* backfill_name(BackfillKind b) {
  switch (b) {
    case BackfillKind::mask_only: return "mask_only";
    case BackfillKind::oracle_background: return "oracle_background";
    case BackfillKind::constant: return "constant";
  }
  return "mask_only";
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "disc";
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& content) {
  json j;
  try {
    j = json::parse(content);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(j, {"dataset", "arch", "training", "augmentation", "removal",
                     "metrics", "splits"},
                 "");

  ExperimentConfig cfg;
  cfg.dataset = parse_dataset(require(j, "dataset", ""), cfg.n_scenes,
                              cfg.dataset_seed);
  cfg.arch = parse_arch(require(j, "arch", ""), cfg.dataset);

  {
    const json& jt = require(j, "training", "");
    const std::string ctx = "training.";
    reject_unknown(jt,
                   {"epochs", "lr", "momentum", "batch", "lambda_hinge",
                    "lambda_neg", "const_fraction", "seed"},
                   ctx);
    cfg.training.epochs = integer(jt, "epochs", ctx);
    cfg.training.lr = number(jt, "lr", ctx);
    cfg.training.momentum = number(jt, "momentum", ctx);
    cfg.training.batch = integer(jt, "batch", ctx);
    cfg.training.lambda_hinge = number(jt, "lambda_hinge", ctx);
    cfg.training.lambda_neg = number(jt, "lambda_neg", ctx);
    cfg.training.const_fraction = number(jt, "const_fraction", ctx);
    cfg.training.seed = uinteger(jt, "seed", ctx);
    if (cfg.training.epochs < 1) fail("'training.epochs' must be >= 1");
    if (cfg.training.lr <= 0.0) fail("'training.lr' must be > 0");
    if (cfg.training.momentum < 0.0 || cfg.training.momentum >= 1.0)
      fail("'training.momentum' must be in [0,1)");
    if (cfg.training.batch < 1) fail("'training.batch' must be >= 1");
    if (cfg.training.lambda_hinge < 0.0) fail("'training.lambda_hinge' must be >= 0");
    if (cfg.training.lambda_neg < 0.0) fail("'training.lambda_neg' must be >= 0");
    if (cfg.training.const_fraction < 0.0 || cfg.training.const_fraction > 1.0)
      fail("'training.const_fraction' must be in [0,1]");
  }

  {
    const json& ja = require(j, "augmentation", "");
    reject_unknown(ja, {"mode", "sampler"}, "augmentation.");
    cfg.augmentation.mode = parse_mode(text(ja, "mode", "augmentation."));
    cfg.augmentation.sampler = parse_sampler(text(ja, "sampler", "augmentation."));
  }

  {
    const json& jr = require(j, "removal", "");
    const std::string ctx = "removal.";
    reject_unknown(jr, {"radius", "backfill", "constant_color", "size_gate"}, ctx);
    cfg.removal.radius = integer(jr, "radius", ctx);
    if (cfg.removal.radius < 0) fail("'removal.radius' must be >= 0");
    const std::string bf = text(jr, "backfill", ctx);
    if (bf == "mask_only")
      cfg.removal.backfill = BackfillKind::mask_only;
    else if (bf == "oracle_background")
      cfg.removal.backfill = BackfillKind::oracle_background;
    else if (bf == "constant")
      cfg.removal.backfill = BackfillKind::constant;
    else
      fail("'removal.backfill' must be mask_only|oracle_background|constant");
    if (cfg.removal.backfill == BackfillKind::constant)
      cfg.removal.constant_color = color3(jr, "constant_color", ctx);
    else if (jr.contains("constant_color"))
      fail("'removal.constant_color' is only valid with backfill=constant");
    cfg.removal.size_gate = number(jr, "size_gate", ctx);
    if (cfg.removal.size_gate <= 0.0 || cfg.removal.size_gate > 1.0)
      fail("'removal.size_gate' must be in (0,1]");
  }

  {
    const json& jm = require(j, "metrics", "");
    reject_unknown(jm, {"alpha"}, "metrics.");
    cfg.metrics.alpha = number(jm, "alpha", "metrics.");
    if (cfg.metrics.alpha <= 0.0 || cfg.metrics.alpha > 1.0)
      fail("'metrics.alpha' must be in (0,1]");
  }

  {
    const json& js = require(j, "splits", "");
    reject_unknown(js, {"train_on"}, "splits.");
    const std::string t = text(js, "train_on", "splits.");
    if (t == "full")
      cfg.train_on = TrainSplit::full;
    else if (t == "cooccur")
      cfg.train_on = TrainSplit::cooccur;
    else
      fail("'splits.train_on' must be full|cooccur");
  }

  // mode/task compatibility
  const bool cls = cfg.arch.task == Task::classifier;
  switch (cfg.augmentation.mode) {
    case TrainMode::baseline:
      break;
    case TrainMode::aug_rand:
    case TrainMode::aug_const:
      if (!cls) fail("'augmentation.mode' requires arch.task=classifier");
      break;
    case TrainMode::seg_ignore:
    case TrainMode::seg_neg:
    case TrainMode::no_removal_ignore:
      if (cls) fail("'augmentation.mode' requires arch.task=segmenter");
      break;
  }
  return cfg;
}

ExperimentConfig config_from_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::invalid_argument("config: cannot open file " + path.string());
  std::string content((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
  return config_from_json_text(content);
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
  json j;
  json classes = json::array();
  for (const ClassSpec& c : cfg.dataset.classes)
    classes.push_back({{"id", c.class_id},
                       {"shape", shape_name(c.shape)},
                       {"color", {c.base_color[0], c.base_color[1], c.base_color[2]}},
                       {"size", {c.size_min, c.size_max}},
                       {"stuff", c.is_stuff},
                       {"p_anchor", cfg.dataset.cooc.p_anchor[c.class_id]}});
  json p_cond = json::array();
  const int k = cfg.dataset.cooc.num_classes;
  for (int i = 1; i < k; ++i)
    for (int jj = 1; jj < k; ++jj)
      if (i != jj && cfg.dataset.cooc.p_cond[i][jj] > 0.0)
        p_cond.push_back(
            {{"given", i}, {"add", jj}, {"p", cfg.dataset.cooc.p_cond[i][jj]}});
  j["dataset"] = {{"canvas", {cfg.dataset.height, cfg.dataset.width}},
                  {"n_scenes", cfg.n_scenes},
                  {"seed", cfg.dataset_seed},
                  {"max_objects", cfg.dataset.cooc.max_objects},
                  {"classes", classes},
                  {"p_cond", p_cond}};
  json channels = json::array(), strides = json::array();
  for (const ConvSpec& c : cfg.arch.convs) {
    channels.push_back(c.out_channels);
    strides.push_back(c.stride);
  }
  j["arch"] = {{"task", cfg.arch.task == Task::classifier ? "classifier" : "segmenter"},
               {"channels", channels},
               {"strides", strides}};
  j["training"] = {{"epochs", cfg.training.epochs},
                   {"lr", cfg.training.lr},
                   {"momentum", cfg.training.momentum},
                   {"batch", cfg.training.batch},
                   {"lambda_hinge", cfg.training.lambda_hinge},
                   {"lambda_neg", cfg.training.lambda_neg},
                   {"const_fraction", cfg.training.const_fraction},
                   {"seed", cfg.training.seed}};
  j["augmentation"] = {{"mode", mode_name(cfg.augmentation.mode)},
                       {"sampler", sampler_name(cfg.augmentation.sampler)}};
  json removal = {{"radius", cfg.removal.radius},
                  {"backfill", backfill_name(cfg.removal.backfill)},
                  {"size_gate", cfg.removal.size_gate}};
  if (cfg.removal.backfill == BackfillKind::constant)
    removal["constant_color"] = {cfg.removal.constant_color[0],
                                 cfg.removal.constant_color[1],
                                 cfg.removal.constant_color[2]};
  j["removal"] = removal;
  j["metrics"] = {{"alpha", cfg.metrics.alpha}};
  j["splits"] = {{"train_on", cfg.train_on == TrainSplit::full ? "full" : "cooccur"}};
  return j.dump();  // nlohmann objects are key-sorted: canonical
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config_json(cfg);
  return hex64(fnv1a(text.data(), text.size()));
}

Backfill resolve_backfill(const RemovalConfig& removal, const Color& dataset_mean) {
  Backfill b;
  b.kind = removal.backfill;
  b.value = removal.backfill == BackfillKind::constant ? removal.constant_color
                                                       : dataset_mean;
  return b;
}

}  // namespace contextprobe
