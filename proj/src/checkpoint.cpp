#include "shopmatch/models/checkpoint.hpp"

#include <bit>

#include "shopmatch/binary_io.hpp"

namespace shopmatch {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_floats(ByteWriter& w, std::span<const float> v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (float x : v) w.f32(x);
}

std::vector<float> get_floats(ByteReader& r) {
  const auto n = r.u32();
  if (r.remaining() < std::size_t{n} * 4) r.fail("float blob longer than file");
  std::vector<float> v(n);
  for (auto& x : v) x = r.f32();
  return v;
}

void put_sizes(ByteWriter& w, const std::vector<std::size_t>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (auto x : v) w.u32(static_cast<std::uint32_t>(x));
}

std::vector<std::size_t> get_sizes(ByteReader& r) {
  const auto n = r.u32();
  if (r.remaining() < std::size_t{n} * 4) r.fail("size list longer than file");
  std::vector<std::size_t> v(n);
  for (auto& x : v) x = r.u32();
  return v;
}

void put_stack(ByteWriter& w, const Sequential<float>& net) {
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    w.u8(static_cast<std::uint8_t>(kind_of(layer)));
    if (const auto* d = std::get_if<Dense<float>>(&layer)) {
      w.u32(static_cast<std::uint32_t>(d->out_dim()));
      w.u32(static_cast<std::uint32_t>(d->in_dim()));
      put_floats(w, d->weight.values());
      put_floats(w, d->bias);
    } else if (const auto* b = std::get_if<BatchNorm<float>>(&layer)) {
      put_floats(w, b->gamma);
      put_floats(w, b->beta);
      put_floats(w, b->running_mean);
      put_floats(w, b->running_var);
      w.f32(b->momentum);
      w.f32(b->epsilon);
    } else if (const auto* p = std::get_if<Dropout<float>>(&layer)) {
      w.u64(std::bit_cast<std::uint64_t>(p->rate));
    }
  }
}

Sequential<float> get_stack(ByteReader& r) {
  Sequential<float> net;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto kind = static_cast<LayerKind>(r.u8());
    switch (kind) {
      case LayerKind::dense: {
        const auto out = r.u32();
        const auto in = r.u32();
        Dense<float> d(in, out);
        auto w = get_floats(r);
        auto b = get_floats(r);
        if (w.size() != std::size_t{in} * out || b.size() != out) {
          throw FormatError("dense blob shape mismatch", at);
        }
        d.weight = Tensor2(out, in, std::move(w));
        d.bias = std::move(b);
        net.add(std::move(d));
        break;
      }
      case LayerKind::batchnorm: {
        auto gamma = get_floats(r);
        BatchNorm<float> b(gamma.size());
        b.gamma = std::move(gamma);
        b.beta = get_floats(r);
        b.running_mean = get_floats(r);
        b.running_var = get_floats(r);
        b.momentum = r.f32();
        b.epsilon = r.f32();
        if (b.beta.size() != b.width() || b.running_mean.size() != b.width() ||
            b.running_var.size() != b.width()) {
          throw FormatError("batchnorm blob shape mismatch", at);
        }
        net.add(std::move(b));
        break;
      }
      case LayerKind::dropout:
        net.add(Dropout<float>(std::bit_cast<double>(r.u64())));
        break;
      case LayerKind::relu:
        net.add(Relu<float>{});
        break;
      case LayerKind::sigmoid:
        net.add(Sigmoid<float>{});
        break;
      default:
        throw FormatError("unknown layer kind " + std::to_string(static_cast<int>(kind)), at);
    }
  }
  return net;
}

}  // namespace

std::string encode_checkpoint(const Model<float>& model) {
  ByteWriter w;
  w.bytes("M2SH");
  w.u32(kCheckpointVersion);
  // variant record: tag count, then (tag, value) pairs
  const VariantSpec& v = model.variant;
  w.u8(5);
  w.u8(0), w.u8(static_cast<std::uint8_t>(v.name));
  w.u8(1), w.u8(static_cast<std::uint8_t>(v.loss));
  w.u8(2), w.u8(static_cast<std::uint8_t>(v.query_features));
  w.u8(3), w.u8(static_cast<std::uint8_t>(v.matching));
  w.u8(4), w.u8(static_cast<std::uint8_t>(v.article_features));

  const ModelConfig& c = model.config;
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  put_sizes(w, c.hidden_widths);
  w.u32(static_cast<std::uint32_t>(c.feature_dim));
  w.u64(std::bit_cast<std::uint64_t>(c.dropout_rate));
  put_sizes(w, c.head_widths);
  w.u32(static_cast<std::uint32_t>(c.attributes.size()));
  for (const auto& a : c.attributes) {
    w.u16(static_cast<std::uint16_t>(a.name.size()));
    w.bytes(a.name);
    w.u16(a.cardinality);
  }

  put_stack(w, model.encoder);
  put_stack(w, model.right_leg);
  put_stack(w, model.head);
  w.f32(model.linear_bias);
  w.u32(static_cast<std::uint32_t>(model.left_attribute_heads.size()));
  for (const auto& h : model.left_attribute_heads) put_stack(w, h);
  w.u32(static_cast<std::uint32_t>(model.right_attribute_heads.size()));
  for (const auto& h : model.right_attribute_heads) put_stack(w, h);
  return w.buffer();
}

Model<float> decode_checkpoint(const std::string& bytes) {
  ByteReader r(std::span<const char>(bytes.data(), bytes.size()));
  if (r.bytes(4) != "M2SH") throw FormatError("bad magic: expected \"M2SH\"", 0);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  Model<float> m;
  const std::size_t record_at = r.offset();
  const auto tags = r.u8();
  std::uint8_t fields[5] = {255, 255, 255, 255, 255};
  for (int i = 0; i < tags; ++i) {
    const auto tag = r.u8();
    const auto value = r.u8();
    if (tag >= 5) throw FormatError("unknown variant tag " + std::to_string(tag), r.offset() - 2);
    fields[tag] = value;
  }
  m.variant = VariantSpec{static_cast<VariantName>(fields[0]), static_cast<LossKind>(fields[1]),
                          static_cast<QueryFeatures>(fields[2]), static_cast<Matching>(fields[3]),
                          static_cast<ArticleFeatures>(fields[4])};
  try {
    validate_variant(m.variant);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid variant record: ") + e.what(), record_at);
  }

  ModelConfig& c = m.config;
  c.input_dim = r.u32();
  c.hidden_widths = get_sizes(r);
  c.feature_dim = r.u32();
  c.dropout_rate = std::bit_cast<double>(r.u64());
  c.head_widths = get_sizes(r);
  c.attributes.resize(r.u32());
  for (auto& a : c.attributes) {
    const auto len = r.u16();
    a.name = r.bytes(len);
    a.cardinality = r.u16();
  }

  m.encoder = get_stack(r);
  m.right_leg = get_stack(r);
  m.head = get_stack(r);
  m.linear_bias = r.f32();
  const auto left = r.u32();
  for (std::uint32_t i = 0; i < left; ++i) m.left_attribute_heads.push_back(get_stack(r));
  const auto right = r.u32();
  for (std::uint32_t i = 0; i < right; ++i) m.right_attribute_heads.push_back(get_stack(r));
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  return m;
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model));
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(std::string(bytes.begin(), bytes.end()));
}

}  // namespace shopmatch
