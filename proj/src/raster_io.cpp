#include "contextprobe/raster_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "raster formats are little-endian; byte swapping not implemented");

namespace contextprobe {

namespace {

using nlohmann::json;

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("unexpected end of file");
}

void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  read_bytes(is, &v, 4);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v;
  read_bytes(is, &v, 8);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

void expect_magic(std::istream& is, const char (&magic)[5],
                  const std::filesystem::path& path) {
  char buf[4];
  read_bytes(is, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error("bad magic in " + path.string() + ", expected " +
                             std::string(magic, 4));
}

}  // namespace

void write_image(const std::filesystem::path& path, const Image& image) {
  auto os = open_out(path);
  write_bytes(os, "CPR1", 4);
  const Index h = image.rows(), w = image.cols();
  write_u32(os, static_cast<std::uint32_t>(h));
  write_u32(os, static_cast<std::uint32_t>(w));
  write_u32(os, 3);
  std::vector<float> row(static_cast<std::size_t>(w) * 3);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c)
      for (int k = 0; k < 3; ++k) row[c * 3 + k] = image.ch[k](r, c);
    write_bytes(os, row.data(), row.size() * sizeof(float));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "CPR1", path);
  const Index h = read_u32(is), w = read_u32(is);
  const std::uint32_t channels = read_u32(is);
  if (channels != 3) throw std::runtime_error("expected 3 channels: " + path.string());
  Image image(h, w);
  std::vector<float> row(static_cast<std::size_t>(w) * 3);
  for (Index r = 0; r < h; ++r) {
    read_bytes(is, row.data(), row.size() * sizeof(float));
    for (Index c = 0; c < w; ++c)
      for (int k = 0; k < 3; ++k) image.ch[k](r, c) = row[c * 3 + k];
  }
  return image;
}

void write_labels(const std::filesystem::path& path, const LabelPlane& labels) {
  auto os = open_out(path);
  write_bytes(os, "CPL1", 4);
  write_u32(os, static_cast<std::uint32_t>(labels.rows()));
  write_u32(os, static_cast<std::uint32_t>(labels.cols()));
  std::vector<std::uint16_t> row(labels.cols());
  for (Index r = 0; r < labels.rows(); ++r) {
    for (Index c = 0; c < labels.cols(); ++c) row[c] = labels(r, c);
    write_bytes(os, row.data(), row.size() * sizeof(std::uint16_t));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

LabelPlane read_labels(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "CPL1", path);
  const Index h = read_u32(is), w = read_u32(is);
  LabelPlane labels(h, w);
  std::vector<std::uint16_t> row(w);
  for (Index r = 0; r < h; ++r) {
    read_bytes(is, row.data(), row.size() * sizeof(std::uint16_t));
    for (Index c = 0; c < w; ++c) labels(r, c) = row[c];
  }
  return labels;
}

void write_mask(const std::filesystem::path& path, const MaskPlane& mask) {
  auto os = open_out(path);
  write_bytes(os, "CPM1", 4);
  const Index h = mask.rows(), w = mask.cols();
  write_u32(os, static_cast<std::uint32_t>(h));
  write_u32(os, static_cast<std::uint32_t>(w));
  // bits packed row-major, LSB first within each byte, no row padding
  std::vector<std::uint8_t> bytes((static_cast<std::size_t>(h) * w + 7) / 8, 0);
  std::size_t bit = 0;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c, ++bit)
      if (mask(r, c)) bytes[bit >> 3] |= static_cast<std::uint8_t>(1u << (bit & 7));
  write_bytes(os, bytes.data(), bytes.size());
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

MaskPlane read_mask(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "CPM1", path);
  const Index h = read_u32(is), w = read_u32(is);
  std::vector<std::uint8_t> bytes((static_cast<std::size_t>(h) * w + 7) / 8);
  read_bytes(is, bytes.data(), bytes.size());
  MaskPlane mask(h, w);
  std::size_t bit = 0;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c, ++bit)
      mask(r, c) = (bytes[bit >> 3] >> (bit & 7)) & 1u;
  return mask;
}

void save_checkpoint(const std::filesystem::path& path, const ParamVec& params) {
  auto os = open_out(path);
  write_bytes(os, "CPW1", 4);
  const ArchDescriptor& a = params.arch;
  write_u32(os, a.task == Task::classifier ? 0u : 1u);
  write_u32(os, static_cast<std::uint32_t>(a.num_classes));
  write_u32(os, static_cast<std::uint32_t>(a.in_h));
  write_u32(os, static_cast<std::uint32_t>(a.in_w));
  write_u32(os, static_cast<std::uint32_t>(a.in_channels));
  write_u32(os, static_cast<std::uint32_t>(a.convs.size()));
  for (const ConvSpec& c : a.convs) {
    write_u32(os, static_cast<std::uint32_t>(c.out_channels));
    write_u32(os, static_cast<std::uint32_t>(c.stride));
  }
  write_u64(os, params.init_seed);
  write_u64(os, static_cast<std::uint64_t>(params.values.size()));
  std::vector<float> vals(params.values.size());
  for (Index i = 0; i < params.values.size(); ++i)
    vals[i] = static_cast<float>(params.values[i]);
  write_bytes(os, vals.data(), vals.size() * sizeof(float));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ParamVec load_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "CPW1", path);
  ParamVec p;
  p.arch.task = read_u32(is) == 0 ? Task::classifier : Task::segmenter;
  p.arch.num_classes = static_cast<int>(read_u32(is));
  p.arch.in_h = read_u32(is);
  p.arch.in_w = read_u32(is);
  p.arch.in_channels = static_cast<int>(read_u32(is));
  const std::uint32_t n_convs = read_u32(is);
  for (std::uint32_t i = 0; i < n_convs; ++i) {
    ConvSpec c;
    c.out_channels = static_cast<int>(read_u32(is));
    c.stride = static_cast<int>(read_u32(is));
    p.arch.convs.push_back(c);
  }
  p.init_seed = read_u64(is);
  const std::uint64_t n = read_u64(is);
  if (n != param_count(p.arch))
    throw std::runtime_error("checkpoint parameter count does not match header: " +
                             path.string());
  std::vector<float> vals(n);
  read_bytes(is, vals.data(), vals.size() * sizeof(float));
  p.values.resize(static_cast<Index>(n));
  for (std::uint64_t i = 0; i < n; ++i)
    p.values[static_cast<Index>(i)] = vals[i];
  return p;
}

namespace {

std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05d", index);
  return buf;
}

json color_json(const Color& c) {
  return json::array({c[0], c[1], c[2]});
}

Color color_from(const json& j) {
  return Color{j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()};
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "disc";
}

ShapeKind shape_from(const std::string& s) {
  if (s == "disc") return ShapeKind::disc;
  if (s == "square") return ShapeKind::square;
  if (s == "triangle") return ShapeKind::triangle;
  throw std::runtime_error("unknown shape: " + s);
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scenes");

  json manifest;
  manifest["format_version"] = 1;
  manifest["dataset_id"] = ds.dataset_id;
  manifest["seed"] = ds.seed;
  manifest["n_scenes"] = ds.scenes.size();
  manifest["canvas"] = {{"height", ds.spec.height}, {"width", ds.spec.width}};
  manifest["mean_color"] = color_json(ds.mean_color);

  json classes = json::array();
  for (const ClassSpec& c : ds.spec.classes) {
    classes.push_back({{"id", c.class_id},
                       {"shape", shape_name(c.shape)},
                       {"color", color_json(c.base_color)},
                       {"size", {c.size_min, c.size_max}},
                       {"stuff", c.is_stuff},
                       {"p_anchor", ds.spec.cooc.p_anchor[c.class_id]}});
  }
  manifest["classes"] = classes;
  json p_cond = json::array();
  const int k = ds.spec.cooc.num_classes;
  for (int i = 1; i < k; ++i)
    for (int j = 1; j < k; ++j)
      if (i != j && ds.spec.cooc.p_cond[i][j] > 0.0)
        p_cond.push_back({{"given", i}, {"add", j}, {"p", ds.spec.cooc.p_cond[i][j]}});
  manifest["p_cond"] = p_cond;
  manifest["max_objects"] = ds.spec.cooc.max_objects;

  json scenes = json::array();
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const Scene& sc = ds.scenes[i];
    const std::string stem = scene_stem(static_cast<int>(i));
    write_image(dir / "scenes" / (stem + ".img"), sc.image);
    write_labels(dir / "scenes" / (stem + ".lab"), sc.labels);
    json objects = json::array();
    for (std::size_t o = 0; o < sc.objects.size(); ++o) {
      const ObjectInstance& obj = sc.objects[o];
      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "_obj%02d.msk", static_cast<int>(o));
      const std::string mask_file = stem + suffix;
      write_mask(dir / "scenes" / mask_file, obj.mask);
      objects.push_back({{"class_id", obj.class_id},
                         {"mask", mask_file},
                         {"bbox", {obj.bbox.top, obj.bbox.left, obj.bbox.bottom, obj.bbox.right}},
                         {"area_fraction", obj.area_fraction},
                         {"color", color_json(obj.color)}});
    }
    scenes.push_back({{"id", sc.scene_id},
                      {"seed", sc.seed},
                      {"image", stem + ".img"},
                      {"labels", stem + ".lab"},
                      {"objects", objects}});
  }
  manifest["scenes"] = scenes;

  std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
  if (!os) throw std::runtime_error("manifest write failed in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is)
    throw std::runtime_error("no manifest.json in " + dir.string());
  json manifest = json::parse(is);

  Dataset ds;
  ds.dataset_id = manifest.at("dataset_id").get<std::string>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.mean_color = color_from(manifest.at("mean_color"));
  ds.spec.height = manifest.at("canvas").at("height").get<Index>();
  ds.spec.width = manifest.at("canvas").at("width").get<Index>();

  for (const json& jc : manifest.at("classes")) {
    ClassSpec c;
    c.class_id = jc.at("id").get<int>();
    c.shape = shape_from(jc.at("shape").get<std::string>());
    c.base_color = color_from(jc.at("color"));
    c.size_min = jc.at("size").at(0).get<double>();
    c.size_max = jc.at("size").at(1).get<double>();
    c.is_stuff = jc.at("stuff").get<bool>();
    ds.spec.classes.push_back(c);
  }
  const int k = static_cast<int>(ds.spec.classes.size()) + 1;
  ds.spec.cooc.num_classes = k;
  ds.spec.cooc.p_anchor.assign(k, 0.0);
  for (const json& jc : manifest.at("classes"))
    ds.spec.cooc.p_anchor[jc.at("id").get<int>()] = jc.at("p_anchor").get<double>();
  ds.spec.cooc.p_cond.assign(k, std::vector<double>(k, 0.0));
  for (const json& je : manifest.at("p_cond"))
    ds.spec.cooc.p_cond[je.at("given").get<int>()][je.at("add").get<int>()] =
        je.at("p").get<double>();
  ds.spec.cooc.max_objects = manifest.at("max_objects").get<int>();

  for (const json& js : manifest.at("scenes")) {
    Scene sc;
    sc.scene_id = js.at("id").get<std::int64_t>();
    sc.seed = js.at("seed").get<std::uint64_t>();
    sc.image = read_image(dir / "scenes" / js.at("image").get<std::string>());
    sc.labels = read_labels(dir / "scenes" / js.at("labels").get<std::string>());
    for (const json& jo : js.at("objects")) {
      ObjectInstance obj;
      obj.class_id = jo.at("class_id").get<int>();
      obj.mask = read_mask(dir / "scenes" / jo.at("mask").get<std::string>());
      const json& bb = jo.at("bbox");
      obj.bbox = Box{bb.at(0).get<Index>(), bb.at(1).get<Index>(),
                     bb.at(2).get<Index>(), bb.at(3).get<Index>()};
      obj.area_fraction = jo.at("area_fraction").get<double>();
      obj.color = color_from(jo.at("color"));
      sc.objects.push_back(std::move(obj));
    }
    ds.scenes.push_back(std::move(sc));
  }
  return ds;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
  }
  return h;
}

std::uint64_t hash_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::vector<std::string> rel;
  rel.reserve(files.size());
  for (const auto& f : files)
    rel.push_back(fs::relative(f, dir).generic_string());
  std::vector<std::size_t> order(files.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return rel[a] < rel[b]; });
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i : order) {
    h = fnv1a(rel[i].data(), rel[i].size(), h);
    const std::uint64_t fh = hash_file(files[i]);
    h = fnv1a(&fh, sizeof fh, h);
  }
  return h;
}

}  // namespace contextprobe
