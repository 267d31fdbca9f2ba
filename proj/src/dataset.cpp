#include "dcec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dcec {

namespace {

// Splits one CSV record into fields, honoring double-quoted fields with ""
// escapes. Throws kMalformedRow on dangling quotes or stray characters.
std::vector<std::string> split_csv_row(const std::string& line, std::size_t line_no) {
  const auto fail = [&](const std::string& why) {
    throw DatasetError(DatasetErrorKind::kMalformedRow,
                       "manifest line " + std::to_string(line_no) + ": " + why);
  };
  std::vector<std::string> fields;
  std::string field;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (true) {
    field.clear();
    if (i < n && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < n) {
        if (line[i] == '"') {
          if (i + 1 < n && line[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            ++i;
            closed = true;
            break;
          }
        } else {
          field.push_back(line[i++]);
        }
      }
      if (!closed) fail("unterminated quoted field");
      if (i < n && line[i] != ',') fail("unexpected character after closing quote");
    } else {
      while (i < n && line[i] != ',') {
        if (line[i] == '"') fail("quote inside unquoted field");
        field.push_back(line[i++]);
      }
    }
    fields.push_back(field);
    if (i >= n) break;
    ++i;  // skip the comma; a trailing comma yields a final empty field
  }
  return fields;
}

int parse_label(const std::string& text, std::size_t line_no) {
  int value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || value < 0)
    throw DatasetError(DatasetErrorKind::kMalformedRow,
                       "manifest line " + std::to_string(line_no) + ": bad label '" + text + "'");
  return value;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(DatasetErrorKind::kMissingFile, "cannot open manifest " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<ManifestEntry> entries;
  bool saw_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<int> labels;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (pos > text.size() && line.empty()) break;  // trailing newline
    if (line.empty()) continue;

    if (!saw_header) {
      if (line != "path,label,group")
        throw DatasetError(DatasetErrorKind::kMalformedRow,
                           "manifest header must be 'path,label,group', got '" + line + "'");
      saw_header = true;
      continue;
    }

    const std::vector<std::string> fields = split_csv_row(line, line_no);
    if (fields.size() != 3)
      throw DatasetError(DatasetErrorKind::kMalformedRow,
                         "manifest line " + std::to_string(line_no) + ": expected 3 fields, got " +
                             std::to_string(fields.size()));
    if (fields[0].empty())
      throw DatasetError(DatasetErrorKind::kMalformedRow,
                         "manifest line " + std::to_string(line_no) + ": empty image path");

    ManifestEntry entry;
    entry.path = fields[0];
    if (!fields[1].empty()) {
      entry.label = parse_label(fields[1], line_no);
      labels.push_back(*entry.label);
    }
    if (!fields[2].empty()) entry.group = fields[2];
    entries.push_back(std::move(entry));
  }
  if (!saw_header)
    throw DatasetError(DatasetErrorKind::kMalformedRow, "manifest " + path + " is empty");

  if (!labels.empty()) {
    const int top = *std::max_element(labels.begin(), labels.end());
    std::vector<bool> seen(static_cast<std::size_t>(top) + 1, false);
    for (int l : labels) seen[static_cast<std::size_t>(l)] = true;
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
      throw DatasetError(DatasetErrorKind::kNonContiguousLabels,
                         "labels in " + path + " do not cover 0.." + std::to_string(top));
  }
  return entries;
}

bool Dataset::has_labels() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(),
                                         [](const ManifestEntry& e) { return e.label.has_value(); });
}

std::vector<int> Dataset::labels() const {
  if (!has_labels()) throw ShapeError("dataset is not fully labeled");
  std::vector<int> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) out.push_back(*e.label);
  return out;
}

int Dataset::n_classes() const {
  int top = -1;
  for (const ManifestEntry& e : entries)
    if (e.label) top = std::max(top, *e.label);
  return top + 1;
}

Dataset load_dataset(const std::string& manifest_path, Index image_size) {
  if (image_size < 1) throw ShapeError("load_dataset: image size must be >= 1");
  Dataset ds;
  ds.entries = load_manifest(manifest_path);
  ds.image_size = image_size;
  if (ds.entries.empty()) throw ShapeError("load_dataset: manifest lists no images");

  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  const Index n = static_cast<Index>(ds.entries.size());
  ds.images = TensorF({n, image_size, image_size, 3});
  const Index row = image_size * image_size * 3;
  for (Index i = 0; i < n; ++i) {
    std::filesystem::path p(ds.entries[static_cast<std::size_t>(i)].path);
    if (p.is_relative()) p = base / p;
    const TensorF img = preprocess(decode_image(p.string()), image_size);
    std::copy(img.data(), img.data() + row, ds.images.data() + i * row);
  }
  return ds;
}

}  // namespace dcec
