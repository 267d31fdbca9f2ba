#include "dcec/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace dcec {

namespace {

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void push_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

// Bounds-checked little-endian reader over the loaded file body.
struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t bytes) const {
    if (pos + bytes > size)
      throw CheckpointError(CheckpointErrorKind::kTruncated,
                            "checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(data[pos + b]) << (8 * b);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(data[pos + b]) << (8 * b);
    pos += 8;
    return v;
  }
  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(data + pos), len);
    pos += len;
    return s;
  }
};

const char kMagic[4] = {'D', 'C', 'E', 'C'};

std::string opt_entry_name(const std::string& name) { return "opt/" + name; }

std::vector<float> encode_arch(const CaeArchitecture& a) {
  std::vector<float> v{static_cast<float>(a.input_size), static_cast<float>(a.channels),
                       static_cast<float>(a.embed_dim), a.elu_alpha,
                       static_cast<float>(a.conv_specs.size())};
  for (const ConvSpec& c : a.conv_specs) {
    v.push_back(static_cast<float>(c.filters));
    v.push_back(static_cast<float>(c.kernel));
    v.push_back(static_cast<float>(c.stride));
  }
  return v;
}

CaeArchitecture decode_arch(const TensorF& t) {
  const auto bad = [] {
    return CheckpointError(CheckpointErrorKind::kMalformed,
                           "checkpoint architecture record is malformed");
  };
  if (t.rank() != 1 || t.size() < 5) throw bad();
  CaeArchitecture a;
  a.input_size = static_cast<Index>(t[0]);
  a.channels = static_cast<Index>(t[1]);
  a.embed_dim = static_cast<Index>(t[2]);
  a.elu_alpha = t[3];
  if (static_cast<std::size_t>(t[4]) != a.conv_specs.size() ||
      t.size() != 5 + static_cast<Index>(3 * a.conv_specs.size()))
    throw bad();
  for (std::size_t i = 0; i < a.conv_specs.size(); ++i) {
    a.conv_specs[i].filters = static_cast<Index>(t[5 + 3 * i]);
    a.conv_specs[i].kernel = static_cast<Index>(t[6 + 3 * i]);
    a.conv_specs[i].stride = static_cast<Index>(t[7 + 3 * i]);
  }
  try {
    a.validate();
  } catch (const ShapeError&) {
    throw bad();
  }
  return a;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& entries) {
  std::vector<std::uint8_t> body;
  body.insert(body.end(), kMagic, kMagic + 4);
  push_u32(body, kCheckpointVersion);
  push_u32(body, static_cast<std::uint32_t>(entries.size()));
  for (const NamedTensor& e : entries) {
    push_u32(body, static_cast<std::uint32_t>(e.name.size()));
    body.insert(body.end(), e.name.begin(), e.name.end());
    push_u32(body, static_cast<std::uint32_t>(e.value.rank()));
    for (Index d = 0; d < e.value.rank(); ++d)
      push_u64(body, static_cast<std::uint64_t>(e.value.dim(d)));
    for (Index i = 0; i < e.value.size(); ++i)
      push_u32(body, std::bit_cast<std::uint32_t>(e.value[i]));
  }
  const auto crc =
      static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size())));
  push_u32(body, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "short write to " + path);
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), size))
    throw CheckpointError(CheckpointErrorKind::kIo, "cannot read " + path);

  Reader r{bytes.data(), bytes.size()};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::kFormat, path + " is not a checkpoint file");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::kVersion,
                          "unsupported checkpoint version " + std::to_string(version));

  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> entries;
  entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8)
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "entry '" + name + "' has implausible rank");
    std::vector<Index> shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t extent = r.u64();
      if (extent < 1 || extent > (1ull << 32) || numel * extent > (1ull << 32))
        throw CheckpointError(CheckpointErrorKind::kMalformed,
                              "entry '" + name + "' has implausible extents");
      numel *= extent;
      shape.push_back(static_cast<Index>(extent));
    }
    TensorF t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(r.u32());
    entries.push_back({std::move(name), std::move(t)});
  }

  if (r.pos + 4 > r.size)
    throw CheckpointError(CheckpointErrorKind::kTruncated, path + " is missing its checksum");
  if (r.pos + 4 < r.size)
    throw CheckpointError(CheckpointErrorKind::kMalformed, path + " has trailing bytes");
  const auto expected =
      static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(r.pos)));
  if (r.u32() != expected)
    throw CheckpointError(CheckpointErrorKind::kChecksum, path + " failed its checksum");
  return entries;
}

void save_checkpoint(const std::string& path, const CaeModel<float>& model,
                     const ClusterHead* head, const AdamaxState<float>* optimizer) {
  std::vector<NamedTensor> entries;
  entries.push_back({"meta/arch", TensorF({static_cast<Index>(encode_arch(model.arch).size())},
                                          encode_arch(model.arch))});
  std::vector<std::string> param_names;
  model.for_each_param([&](const std::string& name, const TensorF& t) {
    entries.push_back({name, t});
    param_names.push_back(name);
  });
  if (head) {
    entries.push_back({"head/centroids", head->centroids});
    param_names.push_back("head/centroids");
  }
  if (optimizer) {
    if (optimizer->m.size() != param_names.size())
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "optimizer state does not cover the saved parameters");
    entries.push_back(
        {"opt/meta", TensorF({5}, {static_cast<float>(optimizer->step), optimizer->config.lr,
                                   optimizer->config.beta1, optimizer->config.beta2,
                                   optimizer->config.epsilon})});
    for (std::size_t i = 0; i < param_names.size(); ++i) {
      entries.push_back({opt_entry_name(param_names[i]) + "/m", optimizer->m[i]});
      entries.push_back({opt_entry_name(param_names[i]) + "/u", optimizer->u[i]});
    }
  }
  write_tensor_file(path, entries);
}

CheckpointContents load_checkpoint(const std::string& path) {
  std::map<std::string, TensorF> table;
  for (NamedTensor& e : read_tensor_file(path)) {
    if (!table.emplace(e.name, std::move(e.value)).second)
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "duplicate checkpoint entry '" + e.name + "'");
  }
  const auto take = [&](const std::string& name) -> TensorF {
    auto it = table.find(name);
    if (it == table.end())
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "checkpoint is missing entry '" + name + "'");
    TensorF t = std::move(it->second);
    table.erase(it);
    return t;
  };

  CheckpointContents out;
  out.model = make_model_shell<float>(decode_arch(take("meta/arch")));
  std::vector<std::string> param_names;
  out.model.for_each_param([&](const std::string& name, TensorF& t) {
    TensorF loaded = take(name);
    if (loaded.shape() != t.shape())
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "entry '" + name + "' has shape " + shape_string(loaded.shape()) +
                                ", expected " + shape_string(t.shape()));
    t = std::move(loaded);
    param_names.push_back(name);
  });

  if (table.count("head/centroids")) {
    TensorF c = take("head/centroids");
    if (c.rank() != 2 || c.dim(1) != out.model.arch.embed_dim || c.dim(0) < 2)
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "centroid entry does not match the architecture");
    out.head = ClusterHead{std::move(c)};
    param_names.push_back("head/centroids");
  }

  if (table.count("opt/meta")) {
    const TensorF meta = take("opt/meta");
    if (meta.size() != 5)
      throw CheckpointError(CheckpointErrorKind::kMalformed, "optimizer record is malformed");
    AdamaxState<float> opt;
    opt.step = static_cast<long>(meta[0]);
    opt.config = {meta[1], meta[2], meta[3], meta[4]};
    if (opt.step < 0)
      throw CheckpointError(CheckpointErrorKind::kMalformed, "optimizer record is malformed");
    for (const std::string& name : param_names) {
      opt.m.push_back(take(opt_entry_name(name) + "/m"));
      opt.u.push_back(take(opt_entry_name(name) + "/u"));
    }
    out.optimizer = std::move(opt);
  }

  if (!table.empty())
    throw CheckpointError(CheckpointErrorKind::kMalformed,
                          "unrecognized checkpoint entry '" + table.begin()->first + "'");
  return out;
}

}  // namespace dcec
