#include "lesion/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lesion/error.hpp"

namespace lesion {

using nlohmann::json;

namespace {

LesionRecord record_from_json(const json& j) {
  LesionRecord r;
  r.lesion_id = j.at("lesion_id").get<std::string>();
  r.patient_id = j.at("patient_id").get<std::string>();
  r.sentence = Sentence::from_text(j.at("sentence").get<std::string>());
  const auto bb = j.at("bbox_mm").get<std::vector<double>>();
  if (bb.size() != 4) throw DataError("bbox_mm needs 4 values");
  r.bbox_mm = {bb[0], bb[1], bb[2], bb[3]};
  r.slice_mm = j.value("slice_mm", 0.0);
  if (j.contains("volume_ref") && !j["volume_ref"].is_null()) r.volume_ref = j["volume_ref"].get<std::string>();
  if (j.contains("truth_labels") && !j["truth_labels"].is_null()) {
    r.truth_labels = j["truth_labels"].get<std::vector<std::string>>();
  }
  validate(r);
  return r;
}

json record_to_json(const LesionRecord& r) {
  json j = {{"lesion_id", r.lesion_id},
            {"patient_id", r.patient_id},
            {"sentence", r.sentence.text},
            {"bbox_mm", {r.bbox_mm.x0, r.bbox_mm.y0, r.bbox_mm.x1, r.bbox_mm.y1}},
            {"slice_mm", r.slice_mm}};
  if (r.volume_ref) j["volume_ref"] = *r.volume_ref;
  if (r.truth_labels) j["truth_labels"] = *r.truth_labels;
  return j;
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  s.replace_extension(".json");
  return s;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<LesionRecord> read_records(std::istream& in) {
  std::vector<LesionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<LesionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  return read_records(in);
}

void write_records(std::ostream& out, std::span<const LesionRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_records(const std::filesystem::path& path, std::span<const LesionRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_records(out, records);
}

void write_mined(std::ostream& out, const Corpus& corpus, const Ontology& o) {
  for (const auto& e : corpus) {
    nlohmann::ordered_json ids = nlohmann::ordered_json::array(), names = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < e.labels.size(); ++c) {
      if (!e.labels[c]) continue;
      ids.push_back(c);
      names.push_back(o.label(static_cast<LabelId>(c)).name);
    }
    out << nlohmann::ordered_json{{"lesion_id", e.record.lesion_id}, {"label_ids", ids}, {"label_names", names}}.dump()
        << '\n';
  }
}

void PatchStore::push_back(std::span<const float> pixels) {
  if (pixels.size() != kPatchPixels) throw std::invalid_argument("PatchStore: wrong patch size");
  data_.insert(data_.end(), pixels.begin(), pixels.end());
  ++count_;
}

void write_f32(std::ostream& out, std::span<const float> values) {
  std::vector<unsigned char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_f32(std::istream& in, std::span<float> values, const std::string& what) {
  std::vector<unsigned char> buf(values.size() * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw DataError(what + " is truncated");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
}

void save_patches(const std::filesystem::path& path, const PatchStore& patches) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < patches.size(); ++i) write_f32(out, patches.patch(i));
  const json meta = {{"height", kPatchSize},
                     {"width", kPatchSize},
                     {"channels", kPatchChannels},
                     {"spacing_mm", 1.0},
                     {"count", patches.size()}};
  std::ofstream(sidecar(path)) << meta.dump() << '\n';
}

PatchStore load_patches(const std::filesystem::path& path) {
  const json meta = read_json(sidecar(path));
  try {
    if (meta.at("height").get<std::size_t>() != kPatchSize || meta.at("width").get<std::size_t>() != kPatchSize ||
        meta.at("channels").get<std::size_t>() != kPatchChannels) {
      throw DataError(sidecar(path).string() + ": patches must be 3x120x120");
    }
  } catch (const json::exception& e) {
    throw DataError(sidecar(path).string() + ": " + e.what());
  }
  const auto size = std::filesystem::file_size(path);
  if (size % (kPatchPixels * 4) != 0) throw DataError(path.string() + ": size is not a whole number of patches");
  const std::size_t count = size / (kPatchPixels * 4);
  if (meta.contains("count") && meta["count"].get<std::size_t>() != count) {
    throw DataError(path.string() + ": patch count disagrees with sidecar");
  }
  PatchStore store(count);
  std::ifstream in(path, std::ios::binary);
  for (std::size_t i = 0; i < count; ++i) read_f32(in, store.patch(i), path.string());
  return store;
}

namespace {

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const NetworkConfig& cfg, const Parameters<float>& p,
                     std::span<const std::string> labels) {
  if (labels.size() != cfg.n_labels) throw std::invalid_argument("save_checkpoint: label list does not match n_labels");
  std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw DataError("cannot write checkpoint " + with_ext(stem, ".bin").string());
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& t : p.tensors()) {
    write_f32(bin, t.data);
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data.size() * 4;
  }
  std::vector<std::string> roi;
  for (auto r : cfg.roi) roi.emplace_back(to_string(r));
  const json manifest = {{"format", "lesion-checkpoint-1"},
                         {"dtype", "float32"},
                         {"byte_order", "little"},
                         {"network",
                          {{"in_channels", cfg.in_channels},
                           {"in_size", cfg.in_size},
                           {"channels", cfg.channels},
                           {"roi", roi},
                           {"grid", {cfg.grid_h, cfg.grid_w}},
                           {"fc_dim", cfg.fc_dim},
                           {"n_labels", cfg.n_labels}}},
                         {"labels", labels},
                         {"tensors", tensors}};
  std::ofstream(with_ext(stem, ".json")) << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  const json m = read_json(with_ext(stem, ".json"));
  Checkpoint ck;
  try {
    const auto& n = m.at("network");
    ck.config.in_channels = n.at("in_channels");
    ck.config.in_size = n.at("in_size");
    ck.config.channels = n.at("channels").get<std::vector<std::size_t>>();
    ck.config.roi.clear();
    for (const auto& r : n.at("roi")) {
      const auto s = r.get<std::string>();
      if (s != "lesion" && s != "whole") throw DataError("checkpoint: unknown ROI source " + s);
      ck.config.roi.push_back(s == "lesion" ? RoiSource::lesion : RoiSource::whole);
    }
    const auto grid = n.at("grid").get<std::vector<std::size_t>>();
    if (grid.size() != 2) throw DataError("checkpoint: grid needs two values");
    ck.config.grid_h = grid[0];
    ck.config.grid_w = grid[1];
    ck.config.fc_dim = n.at("fc_dim");
    ck.config.n_labels = n.at("n_labels");
    ck.labels = m.at("labels").get<std::vector<std::string>>();
    ck.config.validate();
    ck.params = Parameters<float>(ck.config);
    const auto& tensors = m.at("tensors");
    if (tensors.size() != ck.params.tensors().size()) throw DataError("checkpoint: tensor count mismatch");
    std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
    if (!bin) throw DataError("cannot open checkpoint " + with_ext(stem, ".bin").string());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& t = ck.params.tensors()[i];
      if (tensors[i].at("name").get<std::string>() != t.name ||
          tensors[i].at("shape").get<std::vector<std::size_t>>() != t.shape) {
        throw DataError("checkpoint: tensor " + t.name + " does not match the network config");
      }
      bin.seekg(static_cast<std::streamoff>(tensors[i].at("offset").get<std::size_t>()));
      read_f32(bin, t.data, "checkpoint tensor " + t.name);
    }
  } catch (const json::exception& e) {
    throw DataError(with_ext(stem, ".json").string() + ": " + e.what());
  }
  if (ck.labels.size() != ck.config.n_labels) throw DataError("checkpoint: label list does not match n_labels");
  ck.params.touch();
  return ck;
}

}  // namespace lesion
