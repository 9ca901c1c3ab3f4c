#include "scatterbench/nn/checkpoint.hpp"

#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "scatterbench/errors.hpp"

namespace scatterbench::nn {

namespace {

constexpr char kMagic[5] = "SCW1";
constexpr std::uint32_t kVersion = 1;
constexpr const char* kWhat = "SCW1";

enum class Tag : std::uint8_t { Conv = 0, BatchNorm = 1, LeakyReLU = 2, MaxPool = 3, Upsample = 4, Concat = 5 };

struct Header {
  Tag tag;
  std::vector<std::uint32_t> dims;
  std::vector<float> hyper;
};

Header header_of(const Layer& layer) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    return {Tag::Conv,
            {static_cast<std::uint32_t>(c->kh), static_cast<std::uint32_t>(c->kw), static_cast<std::uint32_t>(c->c_in),
             static_cast<std::uint32_t>(c->c_out), static_cast<std::uint32_t>(c->stride),
             static_cast<std::uint32_t>(c->pad), c->bias ? 1u : 0u},
            {}};
  }
  if (const auto* b = std::get_if<BatchNorm>(&layer)) {
    return {Tag::BatchNorm, {static_cast<std::uint32_t>(b->channels)}, {b->momentum, b->eps}};
  }
  if (const auto* l = std::get_if<LeakyReLU>(&layer)) return {Tag::LeakyReLU, {}, {l->slope}};
  if (std::holds_alternative<MaxPool2>(layer)) return {Tag::MaxPool, {}, {}};
  if (std::holds_alternative<BilinearUp2>(layer)) return {Tag::Upsample, {}, {}};
  return {Tag::Concat, {}, {}};
}

Layer layer_of(const Header& h) {
  auto need = [&](std::size_t nd, std::size_t nh) {
    if (h.dims.size() != nd || h.hyper.size() != nh) throw IoError("SCW1: malformed layer header");
  };
  switch (h.tag) {
    case Tag::Conv: {
      need(7, 0);
      Conv2d c;
      c.kh = static_cast<int>(h.dims[0]);
      c.kw = static_cast<int>(h.dims[1]);
      c.c_in = static_cast<int>(h.dims[2]);
      c.c_out = static_cast<int>(h.dims[3]);
      c.stride = static_cast<int>(h.dims[4]);
      c.pad = static_cast<int>(h.dims[5]);
      c.bias = h.dims[6] != 0;
      return c;
    }
    case Tag::BatchNorm:
      need(1, 2);
      return BatchNorm{static_cast<int>(h.dims[0]), h.hyper[0], h.hyper[1]};
    case Tag::LeakyReLU:
      need(0, 1);
      return LeakyReLU{h.hyper[0]};
    case Tag::MaxPool:
      need(0, 0);
      return MaxPool2{};
    case Tag::Upsample:
      need(0, 0);
      return BilinearUp2{};
    case Tag::Concat:
      need(0, 0);
      return Concat{};
  }
  throw IoError("SCW1: unknown layer kind " + std::to_string(static_cast<int>(h.tag)));
}

void write_tensor(std::ostream& os, const std::vector<float>& v) {
  detail::write_u32(os, static_cast<std::uint32_t>(v.size()));
  detail::write_f32s(os, v);
}

void read_tensor(std::istream& is, std::vector<float>& v) {
  const std::uint32_t n = detail::read_u32(is, kWhat);
  if (n != v.size()) {
    throw IoError("SCW1: tensor holds " + std::to_string(n) + " values, layer expects " + std::to_string(v.size()));
  }
  detail::read_f32s(is, v, kWhat);
}

}  // namespace

void write_scw1(std::ostream& os, const Net& net) {
  os.write(kMagic, 4);
  detail::write_u32(os, kVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(net.input_channels()));
  detail::write_u32(os, static_cast<std::uint32_t>(net.size()));
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Node& node = net.node(i);
    const Header h = header_of(node.layer);
    detail::write_u8(os, static_cast<std::uint8_t>(h.tag));
    detail::write_u32(os, static_cast<std::uint32_t>(h.dims.size()));
    for (std::uint32_t d : h.dims) detail::write_u32(os, d);
    detail::write_u32(os, static_cast<std::uint32_t>(h.hyper.size()));
    for (float f : h.hyper) detail::write_f32(os, f);
    detail::write_u32(os, static_cast<std::uint32_t>(node.inputs.size()));
    // Stored shifted by one so the network input is 0.
    for (int in : node.inputs) detail::write_u32(os, static_cast<std::uint32_t>(in + 1));
    const NodeState& st = net.state(i);
    write_tensor(os, st.weight);
    write_tensor(os, st.bias);
    write_tensor(os, st.running_mean);
    write_tensor(os, st.running_var);
  }
  if (!os) throw IoError("SCW1: write failed");
}

Net read_scw1(std::istream& is) {
  detail::expect_magic(is, kMagic, kWhat);
  const std::uint32_t version = detail::read_u32(is, kWhat);
  if (version != kVersion) throw IoError("SCW1: unsupported version " + std::to_string(version));
  const std::uint32_t channels = detail::read_u32(is, kWhat);
  const std::uint32_t count = detail::read_u32(is, kWhat);
  Net net(static_cast<int>(channels));
  for (std::uint32_t i = 0; i < count; ++i) {
    Header h;
    h.tag = static_cast<Tag>(detail::read_u8(is, kWhat));
    h.dims.resize(detail::read_u32(is, kWhat));
    if (h.dims.size() > 16) throw IoError("SCW1: malformed layer header");
    for (auto& d : h.dims) d = detail::read_u32(is, kWhat);
    h.hyper.resize(detail::read_u32(is, kWhat));
    if (h.hyper.size() > 16) throw IoError("SCW1: malformed layer header");
    for (auto& f : h.hyper) f = detail::read_f32(is, kWhat);
    std::vector<int> inputs(detail::read_u32(is, kWhat));
    if (inputs.empty() || inputs.size() > 2) throw IoError("SCW1: malformed node inputs");
    for (int& in : inputs) in = static_cast<int>(detail::read_u32(is, kWhat)) - 1;
    try {
      net.add(layer_of(h), inputs);
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("SCW1: ") + e.what());
    }
    NodeState& st = net.state(i);
    read_tensor(is, st.weight);
    read_tensor(is, st.bias);
    read_tensor(is, st.running_mean);
    read_tensor(is, st.running_var);
  }
  return net;
}

void write_scw1(const std::filesystem::path& path, const Net& net) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_scw1(os, net);
}

Net read_scw1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_scw1(is);
}

}  // namespace scatterbench::nn
