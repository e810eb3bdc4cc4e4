#include "ecgdx/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ecgdx::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'C', 'K', 'P'};

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::Io, "checkpoint is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

Tensor<float> vec(std::initializer_list<double> values) {
  std::vector<float> v(values.begin(), values.end());
  const Shape shape{v.size()};
  return Tensor<float>(shape, std::move(v));
}

const Tensor<float>& need(const NamedTensors& t, const std::string& name, std::size_t size) {
  auto it = t.find(name);
  if (it == t.end()) throw Error(ErrorCode::ShapeMismatch, "checkpoint lacks " + name);
  if (it->second.size() != size) throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor " + name + " has wrong size");
  return it->second;
}

}  // namespace

std::string encode_tensors(const NamedTensors& tensors) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  }
  return out;
}

NamedTensors decode_tensors(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not an ECKP checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) throw Error(ErrorCode::Io, "checkpoint is truncated");
    std::string name(len, '\0');
    r.read(name.data(), len);
    std::uint8_t rank;
    r.read(&rank, 1);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    const std::size_t n = shape_size(shape);
    if (n > r.remaining() / sizeof(float)) throw Error(ErrorCode::Io, "checkpoint is truncated");
    std::vector<float> data(n);
    r.read(data.data(), n * sizeof(float));
    out.insert_or_assign(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return out;
}

NamedTensors checkpoint_tensors(const ModelParams& model, const AdamState<float>* adam) {
  NamedTensors t = model.state();
  const ModelConfig& c = model.config();
  t.emplace("config.widths", vec({double(c.widths[0]), double(c.widths[1]), double(c.widths[2]), double(c.widths[3])}));
  t.emplace("config.dims", vec({double(c.in_channels), double(c.stem_kernel), double(c.block_kernel),
                                double(c.num_features), double(c.num_outputs)}));
  t.emplace("config.pool", vec({double(static_cast<int>(c.pool))}));
  t.emplace("config.use_features", vec({c.use_features ? 1.0 : 0.0}));
  if (adam) {
    auto params = const_cast<ModelParams&>(model).parameters();
    if (adam->m.size() == params.size()) {
      t.emplace("adam.step", vec({double(adam->step)}));
      for (std::size_t i = 0; i < params.size(); ++i) {
        t.emplace("adam.m." + params[i].name, adam->m[i]);
        t.emplace("adam.v." + params[i].name, adam->v[i]);
      }
    }
  }
  return t;
}

Checkpoint checkpoint_from_tensors(const NamedTensors& tensors) {
  ModelConfig c;
  const auto& w = need(tensors, "config.widths", 4);
  for (std::size_t i = 0; i < 4; ++i) c.widths[i] = static_cast<std::size_t>(w[i]);
  const auto& d = need(tensors, "config.dims", 5);
  c.in_channels = static_cast<std::size_t>(d[0]);
  c.stem_kernel = static_cast<std::size_t>(d[1]);
  c.block_kernel = static_cast<std::size_t>(d[2]);
  c.num_features = static_cast<std::size_t>(d[3]);
  c.num_outputs = static_cast<std::size_t>(d[4]);
  const int pool = static_cast<int>(need(tensors, "config.pool", 1)[0]);
  if (pool < 0 || pool > 2) throw Error(ErrorCode::InvalidConfig, "unknown pooling mode in checkpoint");
  c.pool = static_cast<PoolMode>(pool);
  c.use_features = need(tensors, "config.use_features", 1)[0] != 0.0f;

  Checkpoint ck{ModelParams(c), std::nullopt};
  ck.model.load_state(tensors);
  if (auto it = tensors.find("adam.step"); it != tensors.end()) {
    AdamState<float> s;
    s.step = static_cast<std::uint64_t>(it->second[0]);
    for (const auto& p : ck.model.parameters()) {
      s.m.push_back(need(tensors, "adam.m." + p.name, p.value->size()));
      s.v.push_back(need(tensors, "adam.v." + p.name, p.value->size()));
    }
    ck.adam = std::move(s);
  }
  return ck;
}

void save_checkpoint(const ModelParams& model, const AdamState<float>* adam, const std::filesystem::path& path) {
  const std::string bytes = encode_tensors(checkpoint_tensors(model, adam));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_tensors(decode_tensors(ss.str()));
}

}  // namespace ecgdx::nn
