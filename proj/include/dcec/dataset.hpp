#ifndef DCEC_DATASET_HPP
#define DCEC_DATASET_HPP
// Manifest-driven corpus loading: CSV of (path,label,group) rows decoded and
// preprocessed into one [n,S,S,3] tensor. Batching lives in batching.hpp.

#include <optional>
#include <string>
#include <vector>

#include "dcec/image.hpp"
#include "dcec/tensor.hpp"

namespace dcec {

struct ManifestEntry {
  std::string path;
  std::optional<int> label;  // ground-truth class id, >= 0, contiguous when present
  std::optional<std::string> group;
};

// Parses a manifest CSV (header `path,label,group`; empty label/group allowed;
// fields may be double-quoted with "" escapes). Entries come back in file
// order with paths exactly as written. Labels, where present, must form a
// contiguous 0..m-1 range across the file.
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct Dataset {
  std::vector<ManifestEntry> entries;
  TensorF images;  // [n, S, S, 3], values in [0,1]
  Index image_size = 0;

  Index size() const { return static_cast<Index>(entries.size()); }
  bool has_labels() const;
  std::vector<int> labels() const;  // throws unless every entry is labeled
  int n_classes() const;            // 0 for unlabeled corpora
};

// Loads every manifest entry, resolving relative image paths against the
// manifest's directory, and preprocesses to image_size.
Dataset load_dataset(const std::string& manifest_path, Index image_size);

}  // namespace dcec

#endif  // DCEC_DATASET_HPP
