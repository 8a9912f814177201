#include "contextprobe/report.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace contextprobe {

namespace {

using nlohmann::json;

json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json ar_entries_json(const std::vector<ArEntry>& entries) {
  json out = json::array();
  for (const ArEntry& e : entries)
    out.push_back({{"affected", e.affected},
                   {"removed", e.removed},
                   {"images", e.images},
                   {"affected_n", e.affected_n},
                   {"ar", e.ar},
                   {"mean_delta_iou", e.mean_delta_iou}});
  return out;
}

std::vector<ArEntry> ar_entries_from(const json& j) {
  std::vector<ArEntry> out;
  for (const json& je : j) {
    ArEntry e;
    e.affected = je.at("affected").get<int>();
    e.removed = je.at("removed").get<int>();
    e.images = je.at("images").get<int>();
    e.affected_n = je.at("affected_n").get<int>();
    e.ar = je.at("ar").get<double>();
    e.mean_delta_iou = je.at("mean_delta_iou").get<double>();
    out.push_back(e);
  }
  return out;
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

}  // namespace

std::string report_to_json(const RobustnessReport& r) {
  json j;
  j["task"] = r.task;
  j["alpha"] = r.alpha;
  j["dilation_radius"] = r.dilation_radius;
  j["backfill"] = r.backfill;
  j["config_hash"] = r.config_hash;
  j["dataset_id"] = r.dataset_id;
  j["checkpoint_id"] = r.checkpoint_id;
  j["num_classes"] = r.num_classes;
  j["nc"] = r.nc;
  j["nc_row_defined"] = r.nc_row_defined;

  if (r.classifier) {
    const ClassifierReport& c = *r.classifier;
    json per_class = json::array();
    for (const ClassifierClassReport& pc : c.per_class)
      per_class.push_back({{"class_id", pc.class_id},
                           {"ap_full", opt_json(pc.ap_full)},
                           {"ap_cooccur", opt_json(pc.ap_cooccur)},
                           {"ap_single", opt_json(pc.ap_single)},
                           {"eligible", pc.eligible},
                           {"vmin_violations", pc.vmin_violations},
                           {"vmean_violations", pc.vmean_violations},
                           {"vmin", opt_json(pc.vmin)},
                           {"vmean", opt_json(pc.vmean)}});
    json maps;
    for (const auto& [split, v] : c.map_by_split) maps[split] = v;
    j["classifier"] = {{"per_class", per_class},
                       {"map", maps},
                       {"vmin_mean", c.vmin_mean},
                       {"vmean_mean", c.vmean_mean}};
  }

  if (r.segmenter) {
    const SegmenterReport& s = *r.segmenter;
    json splits;
    for (const auto& [name, perf] : s.splits)
      splits[name] = {{"miou", perf.miou}, {"pixel_accuracy", perf.pixel_accuracy}};
    json per_class_iou = json::array();
    for (const auto& [cls, v] : s.per_class_iou)
      per_class_iou.push_back({{"class_id", cls}, {"iou", v}});
    j["segmenter"] = {{"splits", splits},
                      {"per_class_iou", per_class_iou},
                      {"ar", ar_entries_json(s.ar)},
                      {"ar_control", ar_entries_json(s.ar_control)}};
  }
  return j.dump(2);
}

RobustnessReport report_from_json(const std::string& text) {
  json j = json::parse(text);
  RobustnessReport r;
  r.task = j.at("task").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.dilation_radius = j.at("dilation_radius").get<int>();
  r.backfill = j.at("backfill").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  r.num_classes = j.at("num_classes").get<int>();
  r.nc = j.at("nc").get<std::vector<std::vector<double>>>();
  r.nc_row_defined = j.at("nc_row_defined").get<std::vector<bool>>();

  if (j.contains("classifier")) {
    ClassifierReport c;
    for (const json& jp : j.at("classifier").at("per_class")) {
      ClassifierClassReport pc;
      pc.class_id = jp.at("class_id").get<int>();
      pc.ap_full = opt_from(jp.at("ap_full"));
      pc.ap_cooccur = opt_from(jp.at("ap_cooccur"));
      pc.ap_single = opt_from(jp.at("ap_single"));
      pc.eligible = jp.at("eligible").get<int>();
      pc.vmin_violations = jp.at("vmin_violations").get<int>();
      pc.vmean_violations = jp.at("vmean_violations").get<int>();
      pc.vmin = opt_from(jp.at("vmin"));
      pc.vmean = opt_from(jp.at("vmean"));
      c.per_class.push_back(pc);
    }
    for (const auto& [split, v] : j.at("classifier").at("map").items())
      c.map_by_split[split] = v.get<double>();
    c.vmin_mean = j.at("classifier").at("vmin_mean").get<double>();
    c.vmean_mean = j.at("classifier").at("vmean_mean").get<double>();
    r.classifier = std::move(c);
  }

  if (j.contains("segmenter")) {
    SegmenterReport s;
    for (const auto& [name, perf] : j.at("segmenter").at("splits").items())
      s.splits[name] = {perf.at("miou").get<double>(),
                        perf.at("pixel_accuracy").get<double>()};
    for (const json& jp : j.at("segmenter").at("per_class_iou"))
      s.per_class_iou[jp.at("class_id").get<int>()] = jp.at("iou").get<double>();
    s.ar = ar_entries_from(j.at("segmenter").at("ar"));
    s.ar_control = ar_entries_from(j.at("segmenter").at("ar_control"));
    r.segmenter = std::move(s);
  }
  return r;
}

bool operator==(const RobustnessReport& a, const RobustnessReport& b) {
  return report_to_json(a) == report_to_json(b);
}

void write_report_csv(const RobustnessReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (r.classifier) {
    auto os = open_text(dir / "per_class.csv");
    os << "class_id,AP,Vmin,Vmean,eligible_n\n";
    for (const ClassifierClassReport& pc : r.classifier->per_class) {
      os << pc.class_id << ',';
      if (pc.ap_full) os << *pc.ap_full;
      os << ',';
      if (pc.vmin) os << *pc.vmin;
      os << ',';
      if (pc.vmean) os << *pc.vmean;
      os << ',' << pc.eligible << '\n';
    }
  }
  if (r.segmenter) {
    auto os = open_text(dir / "ar_matrix.csv");
    os << "affected,removed,AR,mean_delta_iou,images\n";
    for (const ArEntry& e : r.segmenter->ar)
      os << e.affected << ',' << e.removed << ',' << e.ar << ','
         << e.mean_delta_iou << ',' << e.images << '\n';
    auto osc = open_text(dir / "ar_control.csv");
    osc << "affected,removed,AR,mean_delta_iou,images\n";
    for (const ArEntry& e : r.segmenter->ar_control)
      osc << e.affected << ',' << e.removed << ',' << e.ar << ','
          << e.mean_delta_iou << ',' << e.images << '\n';
  }
}

void write_report_plotdata(const RobustnessReport& r,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (r.classifier) {
    // one point per class with at least one eligible image: x = AP, y = Vmin
    auto os = open_text(dir / "ap_vs_vmin.txt");
    for (const ClassifierClassReport& pc : r.classifier->per_class)
      if (pc.eligible > 0 && pc.ap_full && pc.vmin)
        os << *pc.ap_full << ' ' << *pc.vmin << '\n';
  }
  if (r.segmenter) {
    auto os = open_text(dir / "ar_heatmap.txt");
    for (const ArEntry& e : r.segmenter->ar)
      os << e.affected << ' ' << e.removed << ' ' << e.ar << '\n';
  }
}

}  // namespace contextprobe
