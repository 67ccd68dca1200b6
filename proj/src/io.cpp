#include "tailspin/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"
#include "tailspin/error.hpp"

namespace tailspin {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string stem_of(const fs::path& manifest) {
  std::string name = manifest.filename().string();
  const std::string suffix = ".json";
  if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    name.resize(name.size() - suffix.size());
  }
  return name;
}

void ensure_parent(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void put_u32_le(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_buffer(const fs::path& path, const std::vector<unsigned char>& buf) {
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ordered_json parse_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <class T>
T field(const ordered_json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw IoError(where.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where.string() + ": bad field '" + key + "': " + e.what());
  }
}

ordered_json array_entry(const std::string& file, const char* dtype, std::size_t bytes) {
  ordered_json j;
  j["file"] = file;
  j["dtype"] = dtype;
  j["bytes"] = bytes;
  return j;
}

ordered_json provenance_json(const Provenance& p, const std::vector<std::size_t>& counts) {
  ordered_json j = ordered_json::object();
  if (p.generator_seed) j["generator_seed"] = *p.generator_seed;
  if (p.separation) j["separation"] = *p.separation;
  if (p.gamma) j["gamma"] = *p.gamma;
  if (p.imbalance_seed) j["imbalance_seed"] = *p.imbalance_seed;
  if (p.nu) j["nu"] = *p.nu;
  if (p.noise_seed) j["noise_seed"] = *p.noise_seed;
  if (p.num_resampled) j["num_resampled"] = *p.num_resampled;
  std::size_t lo = counts.empty() ? 0 : counts[0], hi = lo;
  for (auto c : counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  j["min_class_count"] = lo;
  j["max_class_count"] = hi;
  return j;
}

Provenance provenance_from(const ordered_json& j) {
  Provenance p;
  if (j.contains("generator_seed")) p.generator_seed = j["generator_seed"].get<std::uint64_t>();
  if (j.contains("separation")) p.separation = j["separation"].get<double>();
  if (j.contains("gamma")) p.gamma = j["gamma"].get<double>();
  if (j.contains("imbalance_seed")) p.imbalance_seed = j["imbalance_seed"].get<std::uint64_t>();
  if (j.contains("nu")) p.nu = j["nu"].get<double>();
  if (j.contains("noise_seed")) p.noise_seed = j["noise_seed"].get<std::uint64_t>();
  if (j.contains("num_resampled")) p.num_resampled = j["num_resampled"].get<std::size_t>();
  return p;
}

struct RawArrays {
  std::size_t n = 0, dim = 0;
  std::uint32_t num_classes = 0;
  Split split = Split::train;
  std::vector<float> features;
  std::vector<std::uint32_t> labels_observed, labels_true;
  ordered_json manifest;
};

void write_arrays(const fs::path& manifest_path, std::size_t n, std::size_t dim, std::uint32_t num_classes,
                  Split split, std::span<const float> features, std::span<const std::uint32_t> observed,
                  std::span<const std::uint32_t> truth, ordered_json extra) {
  const std::string stem = stem_of(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  const std::string f_name = stem + ".features.f32";
  const std::string o_name = stem + ".labels_observed.u32";
  const std::string t_name = stem + ".labels_true.u32";
  write_f32_le(dir / f_name, features);
  write_u32_le(dir / o_name, observed);
  write_u32_le(dir / t_name, truth);

  ordered_json j;
  j["format"] = "tailspin-dataset";
  j["version"] = kDatasetFormatVersion;
  j["num_samples"] = n;
  j["feature_dim"] = dim;
  j["shape"] = {n, dim};
  j["num_classes"] = num_classes;
  j["split"] = split_name(split);
  j["features"] = array_entry(f_name, "float32-le", 4 * n * dim);
  j["labels_observed"] = array_entry(o_name, "uint32-le", 4 * n);
  j["labels_true"] = array_entry(t_name, "uint32-le", 4 * n);
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_text_file(manifest_path, j.dump(2) + "\n");
}

RawArrays read_arrays(const fs::path& manifest_path) {
  RawArrays raw;
  raw.manifest = parse_json_file(manifest_path);
  const auto& j = raw.manifest;
  if (field<std::string>(j, "format", manifest_path) != "tailspin-dataset") {
    throw IoError(manifest_path.string() + ": not a tailspin dataset manifest");
  }
  if (field<int>(j, "version", manifest_path) != kDatasetFormatVersion) {
    throw IoError(manifest_path.string() + ": unsupported format version");
  }
  raw.n = field<std::size_t>(j, "num_samples", manifest_path);
  raw.dim = field<std::size_t>(j, "feature_dim", manifest_path);
  raw.num_classes = field<std::uint32_t>(j, "num_classes", manifest_path);
  raw.split = parse_split(field<std::string>(j, "split", manifest_path));
  const fs::path dir = manifest_path.parent_path();
  auto entry = [&](const char* key, std::size_t bytes) {
    const auto& e = j.at(key);
    if (field<std::size_t>(e, "bytes", manifest_path) != bytes) {
      throw IoError(manifest_path.string() + ": declared size of '" + key + "' disagrees with shape");
    }
    return dir / field<std::string>(e, "file", manifest_path);
  };
  raw.features = read_f32_le(entry("features", 4 * raw.n * raw.dim), raw.n * raw.dim);
  raw.labels_observed = read_u32_le(entry("labels_observed", 4 * raw.n), raw.n);
  raw.labels_true = read_u32_le(entry("labels_true", 4 * raw.n), raw.n);
  return raw;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_f32_le(const fs::path& path, std::span<const float> values) {
  std::vector<unsigned char> buf;
  buf.reserve(values.size() * 4);
  for (float v : values) put_u32_le(buf, std::bit_cast<std::uint32_t>(v));
  write_buffer(path, buf);
}

std::vector<float> read_f32_le(const fs::path& path, std::size_t expected_count) {
  const auto bytes = read_bytes(path);
  if (bytes.size() != expected_count * 4) {
    throw IoError(path.string() + ": holds " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                  std::to_string(expected_count * 4));
  }
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) out[i] = std::bit_cast<float>(get_u32_le(&bytes[4 * i]));
  return out;
}

void write_u32_le(const fs::path& path, std::span<const std::uint32_t> values) {
  std::vector<unsigned char> buf;
  buf.reserve(values.size() * 4);
  for (auto v : values) put_u32_le(buf, v);
  write_buffer(path, buf);
}

std::vector<std::uint32_t> read_u32_le(const fs::path& path, std::size_t expected_count) {
  const auto bytes = read_bytes(path);
  if (bytes.size() != expected_count * 4) {
    throw IoError(path.string() + ": holds " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                  std::to_string(expected_count * 4));
  }
  std::vector<std::uint32_t> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) out[i] = get_u32_le(&bytes[4 * i]);
  return out;
}

void write_dataset(const Dataset& data, const fs::path& manifest) {
  const auto counts_true = data.class_counts_true();
  ordered_json extra;
  extra["class_counts_true"] = counts_true;
  extra["class_counts_observed"] = data.class_counts_observed();
  extra["provenance"] = provenance_json(data.provenance(), counts_true);
  write_arrays(manifest, data.size(), data.dim(), data.num_classes(), data.split(), data.features(),
               data.labels_observed(), data.labels_true(), std::move(extra));
}

Dataset read_dataset(const fs::path& manifest) {
  RawArrays raw = read_arrays(manifest);
  try {
    Dataset ds(raw.dim, raw.num_classes, std::move(raw.features), std::move(raw.labels_true),
               std::move(raw.labels_observed), raw.split);
    if (raw.manifest.contains("provenance")) ds.provenance() = provenance_from(raw.manifest["provenance"]);
    return ds;
  } catch (const Error& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
}

void export_embeddings(const EmbeddingSet& set, const fs::path& manifest) {
  if (set.values.size() != set.size() * set.dim || set.labels_observed.size() != set.size()) {
    throw DimensionError("export_embeddings: row count does not match label count");
  }
  ordered_json extra;
  extra["content"] = "embeddings";
  write_arrays(manifest, set.size(), set.dim, set.num_classes, set.split, set.values, set.labels_observed,
               set.labels, std::move(extra));
}

EmbeddingSet import_embeddings(const fs::path& manifest) {
  RawArrays raw = read_arrays(manifest);
  EmbeddingSet set;
  set.dim = raw.dim;
  set.values = std::move(raw.features);
  set.labels = std::move(raw.labels_true);
  set.labels_observed = std::move(raw.labels_observed);
  set.num_classes = raw.num_classes;
  set.split = raw.split;
  return set;
}

// ---------------------------------------------------------------------------

void write_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  std::vector<float> flat;
  ordered_json modules = ordered_json::object();
  for (const auto& [name, mlp] : checkpoint.modules) {
    ordered_json m;
    m["dims"] = mlp.dims();
    m["relu_output"] = mlp.relu_output();
    ordered_json tensors = ordered_json::array();
    for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
      for (const auto& [suffix, t] : {std::pair<const char*, const Tensor*>{"weight", &mlp.layers()[l].weight},
                                      std::pair<const char*, const Tensor*>{"bias", &mlp.layers()[l].bias}}) {
        ordered_json e;
        e["name"] = "layer" + std::to_string(l) + "." + suffix;
        e["shape"] = t->shape();
        e["offset"] = flat.size();
        e["count"] = t->size();
        tensors.push_back(e);
        for (double v : t->values()) flat.push_back(static_cast<float>(v));
      }
    }
    m["tensors"] = tensors;
    modules[name] = m;
  }
  ordered_json j;
  j["format"] = "tailspin-checkpoint";
  j["version"] = 1;
  j["method"] = checkpoint.method;
  j["params"] = array_entry("params.f32", "float32-le", 4 * flat.size());
  j["modules"] = modules;
  write_f32_le(dir / "params.f32", flat);
  write_text_file(dir / "checkpoint.json", j.dump(2) + "\n");
}

Checkpoint read_checkpoint(const fs::path& dir) {
  const fs::path manifest = dir / "checkpoint.json";
  const auto j = parse_json_file(manifest);
  if (field<std::string>(j, "format", manifest) != "tailspin-checkpoint") {
    throw IoError(manifest.string() + ": not a tailspin checkpoint");
  }
  const std::size_t bytes = field<std::size_t>(j.at("params"), "bytes", manifest);
  if (bytes % 4 != 0) throw IoError(manifest.string() + ": parameter byte count not a multiple of 4");
  const auto flat = read_f32_le(dir / field<std::string>(j.at("params"), "file", manifest), bytes / 4);
  Checkpoint cp;
  cp.method = field<std::string>(j, "method", manifest);
  for (const auto& [name, m] : j.at("modules").items()) {
    std::vector<Tensor> tensors;
    for (const auto& e : m.at("tensors")) {
      const auto shape = e.at("shape").get<Shape>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t count = e.at("count").get<std::size_t>();
      if (offset + count > flat.size() || shape_size(shape) != count) {
        throw IoError(manifest.string() + ": tensor '" + name + "." + e.at("name").get<std::string>() +
                      "' out of bounds");
      }
      std::vector<double> v(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                            flat.begin() + static_cast<std::ptrdiff_t>(offset + count));
      tensors.push_back(Tensor::parameter(shape, std::move(v)));
    }
    if (tensors.size() % 2 != 0) throw IoError(manifest.string() + ": module '" + name + "' is malformed");
    std::vector<Linear> layers;
    for (std::size_t i = 0; i < tensors.size(); i += 2) layers.push_back(Linear{tensors[i], tensors[i + 1]});
    try {
      cp.modules.emplace(name, Mlp(std::move(layers), m.at("relu_output").get<bool>()));
    } catch (const Error& e) {
      throw IoError(manifest.string() + ": module '" + name + "': " + e.what());
    }
  }
  return cp;
}

// ---------------------------------------------------------------------------

std::string metrics_to_line(const MetricsRecord& record) {
  ordered_json j;
  j["stage"] = record.stage;
  j["epoch"] = record.epoch;
  j["loss"] = record.loss;
  j["lr"] = record.lr;
  if (record.knn_accuracy) j["knn_accuracy"] = *record.knn_accuracy;
  if (record.balanced_accuracy) j["balanced_accuracy"] = *record.balanced_accuracy;
  if (record.per_class_accuracy) {
    ordered_json arr = ordered_json::array();
    for (double v : *record.per_class_accuracy) {
      if (std::isnan(v)) arr.push_back(nullptr);
      else arr.push_back(v);
    }
    j["per_class_accuracy"] = arr;
  }
  j["seed"] = record.seed;
  if (record.wall_time) j["wall_time"] = *record.wall_time;
  return j.dump();
}

MetricsRecord metrics_from_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed metrics line: ") + e.what());
  }
  const fs::path where("metrics line");
  MetricsRecord r;
  r.stage = field<std::string>(j, "stage", where);
  r.epoch = field<std::size_t>(j, "epoch", where);
  r.loss = field<double>(j, "loss", where);
  r.lr = field<double>(j, "lr", where);
  if (j.contains("knn_accuracy")) r.knn_accuracy = j["knn_accuracy"].get<double>();
  if (j.contains("balanced_accuracy")) r.balanced_accuracy = j["balanced_accuracy"].get<double>();
  if (j.contains("per_class_accuracy")) {
    std::vector<double> v;
    for (const auto& e : j["per_class_accuracy"]) v.push_back(e.is_null() ? std::nan("") : e.get<double>());
    r.per_class_accuracy = std::move(v);
  }
  r.seed = field<std::uint64_t>(j, "seed", where);
  if (j.contains("wall_time")) r.wall_time = j["wall_time"].get<double>();
  return r;
}

MetricsWriter::MetricsWriter(const fs::path& path) : path_(path) {
  ensure_parent(path);
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open " + path.string() + " for appending");
}

void MetricsWriter::append(const MetricsRecord& record) {
  record.validate();
  out_ << metrics_to_line(record) << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed for " + path_.string());
}

void metrics_append(const MetricsRecord& record, const fs::path& path) { MetricsWriter(path).append(record); }

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(metrics_from_line(line));
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  auto out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace tailspin
