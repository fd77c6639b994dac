#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lesion/dataset.hpp"
#include "lesion/model.hpp"

namespace lesion {

// One LesionRecord per line:
// {lesion_id, patient_id, sentence, bbox_mm:[x0,y0,x1,y1], slice_mm, volume_ref?, truth_labels?}
// Blank lines are skipped. Throws DataError naming the 1-based line number.
std::vector<LesionRecord> read_records(std::istream& in);
std::vector<LesionRecord> read_records(const std::filesystem::path& path);
void write_records(std::ostream& out, std::span<const LesionRecord> records);
void write_records(const std::filesystem::path& path, std::span<const LesionRecord> records);

// {lesion_id, label_ids, label_names}
void write_mined(std::ostream& out, const Corpus& corpus, const Ontology& o);

// Contiguous 3x120x120 float patches, one per record.
class PatchStore {
 public:
  PatchStore() = default;
  explicit PatchStore(std::size_t count) : count_(count), data_(count * kPatchPixels, 0.0f) {}

  std::size_t size() const { return count_; }
  std::span<const float> patch(std::size_t i) const { return {data_.data() + i * kPatchPixels, kPatchPixels}; }
  std::span<float> patch(std::size_t i) { return {data_.data() + i * kPatchPixels, kPatchPixels}; }
  void push_back(std::span<const float> pixels);

 private:
  std::size_t count_ = 0;
  std::vector<float> data_;
};

// Raw float32 little-endian array plus sidecar (extension -> .json):
// {height, width, channels, spacing_mm, count}.
void save_patches(const std::filesystem::path& path, const PatchStore& patches);
PatchStore load_patches(const std::filesystem::path& path);

// Checkpoint: <stem>.bin holds little-endian float32 tensors back to back;
// <stem>.json lists names, shapes and byte offsets plus the network config
// and the label names the outputs refer to.
struct Checkpoint {
  NetworkConfig config;
  std::vector<std::string> labels;
  Parameters<float> params;
};

void save_checkpoint(const std::filesystem::path& stem, const NetworkConfig& cfg, const Parameters<float>& p,
                     std::span<const std::string> labels);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

// Little-endian float32 encoding shared by patches and checkpoints.
void write_f32(std::ostream& out, std::span<const float> values);
void read_f32(std::istream& in, std::span<float> values, const std::string& what);

}  // namespace lesion
