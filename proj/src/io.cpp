#include "bbr/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace bbr {

namespace {

constexpr char kMagic[4] = {'B', 'B', 'R', '1'};
constexpr uint8_t kDtypeF32 = 0;

void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

uint32_t get_u32_le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_tensor_bytes(const std::string& path, const std::vector<uint32_t>& dims,
                        const float* data) {
  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kDtypeF32));
  out.push_back(static_cast<char>(dims.size()));
  size_t count = 1;
  for (uint32_t d : dims) {
    put_u32_le(out, d);
    count *= d;
  }
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32_le(out, bits);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoErrorCode::Unwritable, "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(IoErrorCode::Unwritable, "write failed: " + path);
}

}  // namespace

void write_tensor(const std::string& path, const Heatmap& m) {
  write_tensor_bytes(path,
                     {static_cast<uint32_t>(m.height), static_cast<uint32_t>(m.width)},
                     m.values.data());
}

void write_tensor(const std::string& path, const FeatureGrid& g) {
  std::vector<float> data(g.features.begin(), g.features.end());
  write_tensor_bytes(path,
                     {static_cast<uint32_t>(g.rows), static_cast<uint32_t>(g.cols),
                      static_cast<uint32_t>(g.dim)},
                     data.data());
}

Tensor read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoErrorCode::Truncated, "cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError(IoErrorCode::BadMagic, "bad magic: " + path);
  }
  if (bytes.size() < 6) throw IoError(IoErrorCode::Truncated, "truncated header: " + path);
  const uint8_t dtype = bytes[4];
  if (dtype != kDtypeF32) {
    throw IoError(IoErrorCode::UnsupportedDtype,
                  "unsupported dtype " + std::to_string(dtype) + ": " + path);
  }
  const uint8_t ndim = bytes[5];
  if (ndim != 2 && ndim != 3) {
    throw IoError(IoErrorCode::BadDims, "expected 2 or 3 dims, got " + std::to_string(ndim));
  }
  if (bytes.size() < 6 + 4u * ndim) {
    throw IoError(IoErrorCode::Truncated, "truncated dims: " + path);
  }
  std::vector<uint32_t> dims(ndim);
  size_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    dims[i] = get_u32_le(bytes.data() + 6 + 4 * i);
    if (dims[i] == 0) throw IoError(IoErrorCode::BadDims, "zero dimension: " + path);
    count *= dims[i];
  }
  const size_t payload_off = 6 + 4u * ndim;
  if (bytes.size() != payload_off + 4 * count) {
    throw IoError(IoErrorCode::Truncated, "truncated payload: " + path);
  }
  std::vector<float> values(count);
  for (size_t i = 0; i < count; ++i) {
    const uint32_t bits = get_u32_le(bytes.data() + payload_off + 4 * i);
    std::memcpy(&values[i], &bits, 4);
  }
  if (ndim == 2) {
    Heatmap m;
    m.height = static_cast<int>(dims[0]);
    m.width = static_cast<int>(dims[1]);
    m.values = std::move(values);
    return m;
  }
  FeatureGrid g;
  g.rows = static_cast<int>(dims[0]);
  g.cols = static_cast<int>(dims[1]);
  g.dim = static_cast<int>(dims[2]);
  g.features.assign(values.begin(), values.end());
  return g;
}

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string box_document_to_json(const BoxDocument& doc) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["image_width"] = doc.image_width;
  j["image_height"] = doc.image_height;
  j["boxes"] = json::array();
  for (const BoxDocumentEntry& e : doc.boxes) {
    json b;
    b["cx"] = clamp01(e.box.cx);
    b["cy"] = clamp01(e.box.cy);
    b["w"] = clamp01(e.box.w);
    b["h"] = clamp01(e.box.h);
    if (e.score) b["score"] = *e.score;
    if (e.is_object) b["is_object"] = *e.is_object;
    j["boxes"].push_back(std::move(b));
  }
  j["metadata"] = doc.metadata;
  return j.dump(2) + "\n";
}

BoxDocument box_document_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(IoErrorCode::BadSchema, std::string("invalid JSON: ") + e.what());
  }
  auto fail = [](const std::string& msg) -> void {
    throw IoError(IoErrorCode::BadSchema, "box document: " + msg);
  };
  if (!j.is_object()) fail("root must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "schema_version" && key != "image_width" && key != "image_height" &&
        key != "boxes" && key != "metadata") {
      fail("unknown field '" + key + "'");
    }
  }
  if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion) {
    fail("missing or unsupported schema_version");
  }
  if (!j.contains("image_width") || !j.contains("image_height") || !j.contains("boxes")) {
    fail("missing required field");
  }

  BoxDocument doc;
  doc.image_width = j["image_width"].get<int>();
  doc.image_height = j["image_height"].get<int>();
  if (!j["boxes"].is_array()) fail("boxes must be an array");
  for (const json& b : j["boxes"]) {
    if (!b.is_object()) fail("box entries must be objects");
    for (const auto& [key, _] : b.items()) {
      if (key != "cx" && key != "cy" && key != "w" && key != "h" && key != "score" &&
          key != "is_object") {
        fail("unknown box field '" + key + "'");
      }
    }
    for (const char* req : {"cx", "cy", "w", "h"}) {
      if (!b.contains(req)) fail(std::string("box missing '") + req + "'");
    }
    BoxDocumentEntry e;
    e.box = {b["cx"].get<double>(), b["cy"].get<double>(), b["w"].get<double>(),
             b["h"].get<double>()};
    if (b.contains("score")) e.score = b["score"].get<double>();
    if (b.contains("is_object")) e.is_object = b["is_object"].get<bool>();
    doc.boxes.push_back(std::move(e));
  }
  if (j.contains("metadata")) {
    if (!j["metadata"].is_object()) fail("metadata must be an object");
    for (const auto& [key, value] : j["metadata"].items()) {
      if (!value.is_string()) fail("metadata values must be strings");
      doc.metadata[key] = value.get<std::string>();
    }
  }
  return doc;
}

void write_box_document(const std::string& path, const BoxDocument& doc) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(IoErrorCode::Unwritable, "cannot open for writing: " + path);
  f << box_document_to_json(doc);
  if (!f) throw IoError(IoErrorCode::Unwritable, "write failed: " + path);
}

BoxDocument read_box_document(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoErrorCode::BadSchema, "cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return box_document_from_json(text);
}

}  // namespace bbr
