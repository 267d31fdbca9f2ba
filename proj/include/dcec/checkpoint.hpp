#ifndef DCEC_CHECKPOINT_HPP
#define DCEC_CHECKPOINT_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcec/adamax.hpp"
#include "dcec/autoencoder.hpp"
#include "dcec/clustering.hpp"
#include "dcec/tensor.hpp"

namespace dcec {

enum class CheckpointErrorKind { kIo, kFormat, kVersion, kChecksum, kTruncated, kMalformed };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct NamedTensor {
  std::string name;
  TensorF value;
};

// Low-level container: magic "DCEC", u32 version, u32 count, then per entry
// (u32 name length, name bytes, u32 rank, u64 extents, f32 values), all
// little-endian, closed by a CRC-32 of every preceding byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

struct CheckpointContents {
  CaeModel<float> model;
  std::optional<ClusterHead> head;
  std::optional<AdamaxState<float>> optimizer;
};

// Serializes the model, and optionally the cluster head and optimizer state.
// When both head and optimizer are present, the optimizer is expected to
// cover the model parameters followed by the centroids.
void save_checkpoint(const std::string& path, const CaeModel<float>& model,
                     const ClusterHead* head = nullptr,
                     const AdamaxState<float>* optimizer = nullptr);
CheckpointContents load_checkpoint(const std::string& path);

}  // namespace dcec

#endif  // DCEC_CHECKPOINT_HPP
