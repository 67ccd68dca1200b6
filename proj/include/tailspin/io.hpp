#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tailspin/data.hpp"
#include "tailspin/evaluation.hpp"
#include "tailspin/model.hpp"

namespace tailspin {

// Dataset on disk: a JSON manifest plus three raw arrays next to it,
//   <stem>.features.f32         N*d float32 little-endian, row-major
//   <stem>.labels_observed.u32  N uint32 little-endian
//   <stem>.labels_true.u32      N uint32 little-endian
// The manifest declares every byte length; readers reject any mismatch.
constexpr int kDatasetFormatVersion = 1;

void write_dataset(const Dataset& data, const std::filesystem::path& manifest);
Dataset read_dataset(const std::filesystem::path& manifest);

// Embeddings use the dataset format; features hold the representation rows.
void export_embeddings(const EmbeddingSet& set, const std::filesystem::path& manifest);
EmbeddingSet import_embeddings(const std::filesystem::path& manifest);

void write_f32_le(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_le(const std::filesystem::path& path, std::size_t expected_count);
void write_u32_le(const std::filesystem::path& path, std::span<const std::uint32_t> values);
std::vector<std::uint32_t> read_u32_le(const std::filesystem::path& path, std::size_t expected_count);

// Checkpoint: <dir>/checkpoint.json (architecture descriptor) and
// <dir>/params.f32 (every tensor, float32 little-endian, in descriptor order).
struct Checkpoint {
  std::string method;
  std::map<std::string, Mlp> modules;  // encoder, projector, predictor, head
};

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

// Metrics: one JSON object per line, keys in a fixed order.
std::string metrics_to_line(const MetricsRecord& record);
MetricsRecord metrics_from_line(std::string_view line);

// Appends and flushes one line per record.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void append(const MetricsRecord& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void metrics_append(const MetricsRecord& record, const std::filesystem::path& path);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace tailspin
