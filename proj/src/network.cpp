#include "qsdc/network.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "qsdc/errors.hpp"

namespace qsdc {

std::vector<std::size_t> Network::conv_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (kind_of(layers[i]) == LayerKind::conv2d) out.push_back(i);
  }
  return out;
}

void Network::validate() const {
  Shape4 s{1, input.c, input.h, input.w};
  for (const auto& layer : layers) s = output_shape(layer, s);
  if (s.c != classes || s.h != 1 || s.w != 1) {
    throw ConfigError("network output shape does not match class count " + std::to_string(classes));
  }
}

std::vector<Shape4> Network::conv_output_shapes(std::size_t n) const {
  std::vector<Shape4> out;
  Shape4 s{n, input.c, input.h, input.w};
  for (const auto& layer : layers) {
    s = output_shape(layer, s);
    if (kind_of(layer) == LayerKind::conv2d) out.push_back(s);
  }
  return out;
}

Conv2d& Network::conv(std::size_t index) {
  const auto pos = conv_positions();
  if (index >= pos.size()) throw ConfigError("conv layer index " + std::to_string(index) + " out of range");
  return std::get<Conv2d>(layers[pos[index]]);
}

const Conv2d& Network::conv(std::size_t index) const {
  const auto pos = conv_positions();
  if (index >= pos.size()) throw ConfigError("conv layer index " + std::to_string(index) + " out of range");
  return std::get<Conv2d>(layers[pos[index]]);
}

namespace {

Tensor4 run_layers(const Network& net, std::size_t first_layer, std::size_t first_conv, Tensor4 x,
                   std::span<const ConvHook> hooks, std::vector<Tensor4>* conv_inputs) {
  std::size_t conv_index = first_conv;
  for (std::size_t i = first_layer; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    switch (kind_of(layer)) {
      case LayerKind::conv2d:
        if (conv_inputs) conv_inputs->push_back(x);
        x = conv2d(x, std::get<Conv2d>(layer));
        for (const auto& hook : hooks) hook(conv_index, x);
        ++conv_index;
        break;
      case LayerKind::relu:
        relu_inplace(x);
        break;
      default:
        x = apply_layer(x, layer);
    }
  }
  return x;
}

void check_input(const Network& net, const Tensor4& batch) {
  if (batch.c() != net.input.c || batch.h() != net.input.h || batch.w() != net.input.w) {
    throw ConfigError("batch shape does not match network input shape");
  }
}

}  // namespace

Tensor4 forward(const Network& net, const Tensor4& batch, std::span<const ConvHook> hooks) {
  check_input(net, batch);
  return run_layers(net, 0, 0, batch, hooks, nullptr);
}

Tensor4 forward_recording(const Network& net, const Tensor4& batch, std::span<const ConvHook> hooks,
                          std::vector<Tensor4>& conv_inputs) {
  check_input(net, batch);
  conv_inputs.clear();
  return run_layers(net, 0, 0, batch, hooks, &conv_inputs);
}

Tensor4 forward_from(const Network& net, std::size_t start_conv, const Tensor4& conv_input,
                     std::span<const ConvHook> hooks) {
  const auto pos = net.conv_positions();
  if (start_conv >= pos.size()) throw ConfigError("forward_from: conv index out of range");
  return run_layers(net, pos[start_conv], start_conv, conv_input, hooks, nullptr);
}

namespace {

class Fnv1a {
 public:
  void add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (8 * i)) & 0xffu;
      hash_ *= 0x100000001b3ull;
    }
  }
  void add_floats(std::span<const float> values) {
    for (float f : values) add_u64(std::bit_cast<std::uint32_t>(f));
  }
  [[nodiscard]] std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

}  // namespace

std::uint64_t network_hash(const Network& net) {
  Fnv1a h;
  h.add_u64(net.input.c);
  h.add_u64(net.input.h);
  h.add_u64(net.input.w);
  h.add_u64(net.classes);
  for (const auto& layer : net.layers) {
    h.add_u64(static_cast<std::uint64_t>(kind_of(layer)));
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      h.add_u64(c->stride);
      h.add_u64(c->padding);
      h.add_floats(c->weight.data());
      h.add_floats(c->bias);
    } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
      h.add_u64(p->window);
      h.add_u64(p->stride);
    } else if (const auto* l = std::get_if<Linear>(&layer)) {
      h.add_u64(l->out_features);
      h.add_u64(l->in_features);
      h.add_floats(l->weight);
      h.add_floats(l->bias);
    }
  }
  return h.value();
}

bool bitwise_equal(const Network& a, const Network& b) {
  if (!(a.input == b.input) || a.classes != b.classes || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const Layer& la = a.layers[i];
    const Layer& lb = b.layers[i];
    if (kind_of(la) != kind_of(lb)) return false;
    if (const auto* c = std::get_if<Conv2d>(&la)) {
      const auto& d = std::get<Conv2d>(lb);
      if (c->stride != d.stride || c->padding != d.padding || !(c->weight.shape() == d.weight.shape()) ||
          !bitwise_equal(c->weight.data(), d.weight.data()) || !bitwise_equal(c->bias, d.bias)) {
        return false;
      }
    } else if (const auto* p = std::get_if<MaxPool2d>(&la)) {
      const auto& q = std::get<MaxPool2d>(lb);
      if (p->window != q.window || p->stride != q.stride) return false;
    } else if (const auto* l = std::get_if<Linear>(&la)) {
      const auto& m = std::get<Linear>(lb);
      if (l->out_features != m.out_features || l->in_features != m.in_features ||
          !bitwise_equal(l->weight, m.weight) || !bitwise_equal(l->bias, m.bias)) {
        return false;
      }
    }
  }
  return true;
}

Network parse_topology(std::istream& in, std::uint64_t seed) {
  Network net;
  std::mt19937_64 rng(seed);
  Shape4 cur{};
  bool have_input = false;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError("topology line " + std::to_string(line_no) + ": " + msg);
  };
  auto he_fill = [&](std::span<float> values, std::size_t fan_in) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (float& v : values) v = dist(rng);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "input") {
      if (!(ls >> cur.c >> cur.h >> cur.w)) fail("expected: input <c> <h> <w>");
      cur.n = 1;
      net.input = cur;
      have_input = true;
      continue;
    }
    if (kind == "classes") {
      if (!(ls >> net.classes)) fail("expected: classes <k>");
      continue;
    }
    if (!have_input) fail("'input' must precede layers");
    if (kind == "conv2d") {
      std::size_t out_ch = 0, k = 0, stride = 1, padding = 0;
      if (!(ls >> out_ch >> k >> stride >> padding)) fail("expected: conv2d <out_ch> <kernel> <stride> <padding>");
      Conv2d conv{Tensor4({out_ch, cur.c, k, k}), std::vector<float>(out_ch, 0.0f), stride, padding};
      he_fill(conv.weight.data(), cur.c * k * k);
      net.layers.emplace_back(std::move(conv));
    } else if (kind == "relu") {
      net.layers.emplace_back(Relu{});
    } else if (kind == "maxpool2d") {
      MaxPool2d p;
      if (!(ls >> p.window >> p.stride)) fail("expected: maxpool2d <window> <stride>");
      net.layers.emplace_back(p);
    } else if (kind == "linear") {
      Linear l;
      if (!(ls >> l.out_features)) fail("expected: linear <out_features>");
      l.in_features = cur.c * cur.h * cur.w;
      l.weight.resize(l.out_features * l.in_features);
      l.bias.assign(l.out_features, 0.0f);
      he_fill(l.weight, l.in_features);
      net.layers.emplace_back(std::move(l));
    } else {
      fail("unknown layer kind '" + kind + "'");
    }
    cur = output_shape(net.layers.back(), cur);
  }
  if (!have_input) throw ConfigError("topology has no 'input' line");
  if (net.classes == 0) net.classes = cur.c;
  net.validate();
  return net;
}

Network parse_topology(const std::string& text, std::uint64_t seed) {
  std::istringstream in(text);
  return parse_topology(in, seed);
}

std::string describe(const Network& net) {
  std::ostringstream os;
  os << "input " << net.input.c << "x" << net.input.h << "x" << net.input.w << ", " << net.classes
     << " classes\n";
  Shape4 s{1, net.input.c, net.input.h, net.input.w};
  std::size_t params = 0;
  for (const auto& layer : net.layers) {
    s = output_shape(layer, s);
    switch (kind_of(layer)) {
      case LayerKind::conv2d: {
        const auto& c = std::get<Conv2d>(layer);
        params += c.weight.size() + c.bias.size();
        os << "  conv2d " << c.in_channels() << "->" << c.out_channels() << " k" << c.weight.h() << " s"
           << c.stride << " p" << c.padding;
        break;
      }
      case LayerKind::relu:
        os << "  relu";
        break;
      case LayerKind::maxpool2d:
        os << "  maxpool2d " << std::get<MaxPool2d>(layer).window;
        break;
      case LayerKind::linear: {
        const auto& l = std::get<Linear>(layer);
        params += l.weight.size() + l.bias.size();
        os << "  linear " << l.in_features << "->" << l.out_features;
        break;
      }
    }
    os << "  -> " << s.c << "x" << s.h << "x" << s.w << "\n";
  }
  os << "parameters: " << params << "\n";
  return os.str();
}

// --- QSNT binary format ---

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'S', 'N', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_floats(std::ostream& out, std::span<const float> values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw TruncatedError("QSNT: unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void get_floats(std::istream& in, std::span<float> values) {
  for (float& f : values) f = std::bit_cast<float>(get_u32(in));
}

// Guards against absurd headers before allocating.
std::size_t checked_count(std::uint64_t count) {
  if (count > (1ull << 28)) throw ParseError("QSNT: implausible tensor size");
  return static_cast<std::size_t>(count);
}

}  // namespace

void write_network(const Network& net, std::ostream& out) {
  out.write(kMagic.data(), 4);
  put_u32(out, kNetworkFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(net.input.c));
  put_u32(out, static_cast<std::uint32_t>(net.input.h));
  put_u32(out, static_cast<std::uint32_t>(net.input.w));
  put_u32(out, static_cast<std::uint32_t>(net.classes));
  put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    put_u32(out, static_cast<std::uint32_t>(kind_of(layer)));
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      const Shape4& s = c->weight.shape();
      for (auto v : {s.n, s.c, s.h, s.w, c->stride, c->padding}) put_u32(out, static_cast<std::uint32_t>(v));
      put_floats(out, c->weight.data());
      put_floats(out, c->bias);
    } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
      put_u32(out, static_cast<std::uint32_t>(p->window));
      put_u32(out, static_cast<std::uint32_t>(p->stride));
    } else if (const auto* l = std::get_if<Linear>(&layer)) {
      put_u32(out, static_cast<std::uint32_t>(l->out_features));
      put_u32(out, static_cast<std::uint32_t>(l->in_features));
      put_floats(out, l->weight);
      put_floats(out, l->bias);
    }
  }
  if (!out) throw IoError("QSNT: write failed");
}

Network read_network(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4)) throw TruncatedError("QSNT: file shorter than magic");
  if (magic != kMagic) throw BadMagicError("QSNT: bad magic bytes");
  const std::uint32_t version = get_u32(in);
  if (version != kNetworkFormatVersion) {
    throw VersionMismatchError("QSNT: unsupported format version " + std::to_string(version));
  }
  Network net;
  net.input.n = 1;
  net.input.c = get_u32(in);
  net.input.h = get_u32(in);
  net.input.w = get_u32(in);
  net.classes = get_u32(in);
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t tag = get_u32(in);
    switch (static_cast<LayerKind>(tag)) {
      case LayerKind::conv2d: {
        Shape4 s;
        s.n = get_u32(in);
        s.c = get_u32(in);
        s.h = get_u32(in);
        s.w = get_u32(in);
        Conv2d c;
        c.stride = get_u32(in);
        c.padding = get_u32(in);
        c.weight = Tensor4(Shape4{checked_count(s.n), s.c, s.h, s.w});
        checked_count(static_cast<std::uint64_t>(s.n) * s.c * s.h * s.w);
        get_floats(in, c.weight.data());
        c.bias.resize(s.n);
        get_floats(in, c.bias);
        net.layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::relu:
        net.layers.emplace_back(Relu{});
        break;
      case LayerKind::maxpool2d: {
        MaxPool2d p;
        p.window = get_u32(in);
        p.stride = get_u32(in);
        net.layers.emplace_back(p);
        break;
      }
      case LayerKind::linear: {
        Linear l;
        l.out_features = get_u32(in);
        l.in_features = get_u32(in);
        l.weight.resize(checked_count(static_cast<std::uint64_t>(l.out_features) * l.in_features));
        get_floats(in, l.weight);
        l.bias.resize(l.out_features);
        get_floats(in, l.bias);
        net.layers.emplace_back(std::move(l));
        break;
      }
      default:
        throw ParseError("QSNT: unknown layer tag " + std::to_string(tag));
    }
  }
  net.validate();
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_network(net, out);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_network(in);
}

}  // namespace qsdc
