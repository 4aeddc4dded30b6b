#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bbr/discovery.hpp"
#include "bbr/geometry.hpp"
#include "bbr/heatmap.hpp"

namespace bbr {

enum class IoErrorCode {
  BadMagic,
  Truncated,
  UnsupportedDtype,
  BadDims,
  Unwritable,
  BadSchema,
};

class IoError : public std::runtime_error {
 public:
  IoError(IoErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  IoErrorCode code() const { return code_; }

 private:
  IoErrorCode code_;
};

using Tensor = std::variant<Heatmap, FeatureGrid>;

// "BBR1" | dtype u8 (0 = f32 LE) | ndim u8 | ndim x u32 LE dims | payload.
// Heatmaps are 2-D (H, W); feature grids are 3-D (rows, cols, d).
Tensor read_tensor(const std::string& path);
void write_tensor(const std::string& path, const Heatmap& m);
void write_tensor(const std::string& path, const FeatureGrid& g);

struct BoxDocumentEntry {
  Box box;
  std::optional<double> score;
  std::optional<bool> is_object;
};

struct BoxDocument {
  int image_width = 0;
  int image_height = 0;
  std::vector<BoxDocumentEntry> boxes;
  std::map<std::string, std::string> metadata;
};

// Coordinates are clamped to [0,1] on write; unknown fields are
// rejected on read.
std::string box_document_to_json(const BoxDocument& doc);
BoxDocument box_document_from_json(const std::string& text);

void write_box_document(const std::string& path, const BoxDocument& doc);
BoxDocument read_box_document(const std::string& path);

}  // namespace bbr
