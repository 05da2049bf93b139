#include "relprop/nnwb.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "relprop/error.hpp"

namespace relprop::nnwb {
namespace {

constexpr char kMagic[4] = {'N', 'N', 'W', 'B'};
// Guards against absurd allocations from corrupted headers.
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(checked(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void tensor(const Tensor& t) {
    u32(checked(t.rank()));
    for (auto d : t.shape()) u32(checked(d));
    for (float v : t.values()) f32(v);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

  static std::uint32_t checked(std::size_t v) {
    if (v > UINT32_MAX) throw InvalidInput("value does not fit the 32-bit NNWB field");
    return static_cast<std::uint32_t>(v);
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(const char* what) {
    const auto len = u32(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  Tensor tensor(const char* what) {
    const std::size_t start = pos_;
    const auto rank = u32(what);
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError(std::string("invalid tensor rank ") + std::to_string(rank) + " in " + what,
                        start);
    }
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = u32(what);
      if (d == 0) throw FormatError(std::string("zero tensor dimension in ") + what, pos_ - 4);
      count *= d;
      if (count > (bytes_.size() - start) / 4 + 1) {
        throw FormatError(std::string("truncated tensor payload in ") + what, pos_);
      }
    }
    need(count * 4, what);
    std::vector<float> data(count);
    for (auto& v : data) v = std::bit_cast<float>(u32(what));
    return Tensor(std::move(shape), std::move(data));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  Writer w;
  w.tensor(t);
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto t = r.tensor("tensor");
  if (!r.at_end()) throw FormatError("trailing bytes after tensor", r.offset());
  return t;
}

std::vector<std::uint8_t> encode_model(const NetworkModel& model) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(Writer::checked(model.layers().size()));
  for (const auto& layer : model.layers()) {
    w.str(layer.name);
    w.u8(static_cast<std::uint8_t>(layer.kind));
    if (layer.kind == LayerKind::Conv2D) {
      w.u32(layer.kernel_h);
      w.u32(layer.kernel_w);
      w.u32(layer.in_channels);
      w.u32(layer.out_channels);
      w.u32(layer.stride);
      w.u32(static_cast<std::uint32_t>(layer.padding));
    } else if (layer.kind == LayerKind::Dense) {
      w.u32(layer.in_features);
      w.u32(layer.out_features);
    }
    if (layer.has_params()) {
      const auto& p = model.params(layer.name);
      w.tensor(p.weights);
      w.tensor(p.bias);
    }
  }
  for (auto d : model.input_shape()) w.u32(Writer::checked(d));
  w.u32(Writer::checked(model.class_labels().size()));
  for (const auto& label : model.class_labels()) w.str(label);
  return w.take();
}

NetworkModel decode_model(std::span<const std::uint8_t> bytes, std::string id) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("bad magic, expected NNWB", 0);
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const auto version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported NNWB version " + std::to_string(version), r.offset() - 4);
  }
  const auto count = r.u32("layer count");

  std::vector<LayerSpec> layers;
  std::map<std::string, LayerParams> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec layer;
    layer.name = r.str("layer name");
    const std::size_t kind_at = r.offset();
    const auto tag = r.u8("layer kind");
    if (tag < 1 || tag > 6) throw FormatError("unknown layer kind tag " + std::to_string(tag), kind_at);
    layer.kind = static_cast<LayerKind>(tag);
    if (layer.kind == LayerKind::Conv2D) {
      layer.kernel_h = r.u32("conv header");
      layer.kernel_w = r.u32("conv header");
      layer.in_channels = r.u32("conv header");
      layer.out_channels = r.u32("conv header");
      layer.stride = r.u32("conv header");
      const auto pad = r.u32("conv header");
      if (pad > 1) throw FormatError("unknown padding code " + std::to_string(pad), r.offset() - 4);
      layer.padding = static_cast<Padding>(pad);
      if (layer.stride == 0) throw FormatError("conv stride of 0", r.offset() - 8);
    } else if (layer.kind == LayerKind::Dense) {
      layer.in_features = r.u32("dense header");
      layer.out_features = r.u32("dense header");
    }
    if (layer.has_params()) {
      const std::size_t w_at = r.offset();
      auto weights = r.tensor("weights");
      if (weights.shape() != layer.weight_shape()) {
        throw FormatError("layer '" + layer.name + "' weights " + shape_string(weights.shape()) +
                              " do not match declared " + shape_string(layer.weight_shape()),
                          w_at);
      }
      const std::size_t b_at = r.offset();
      auto bias = r.tensor("bias");
      if (bias.shape() != layer.bias_shape()) {
        throw FormatError("layer '" + layer.name + "' bias " + shape_string(bias.shape()) +
                              " does not match declared " + shape_string(layer.bias_shape()),
                          b_at);
      }
      params.emplace(layer.name, LayerParams{std::move(weights), std::move(bias)});
    }
    layers.push_back(std::move(layer));
  }

  Shape input(3);
  for (auto& d : input) d = r.u32("input shape");
  const auto label_count = r.u32("label count");
  std::vector<std::string> labels;
  for (std::uint32_t i = 0; i < label_count; ++i) labels.push_back(r.str("class label"));
  if (!r.at_end()) throw FormatError("trailing bytes after model", r.offset());

  try {
    return NetworkModel::create(std::move(layers), std::move(params), std::move(input),
                                std::move(labels), std::move(id));
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid model: ") + e.what(), r.offset());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("short write to '" + path.string() + "'");
}

void save_weights(const NetworkModel& model, const std::filesystem::path& path) {
  write_file(path, encode_model(model));
}

NetworkModel load_weights(const std::filesystem::path& path) {
  return decode_model(read_file(path), path.stem().string());
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file(path, encode_tensor(t));
}

Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

NetworkModel load_model(const std::filesystem::path& path) {
  if (path.extension() == ".json") return load_topology_json(path);
  return load_weights(path);
}

}  // namespace relprop::nnwb
