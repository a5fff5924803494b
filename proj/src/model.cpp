#include "fkan/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

namespace fkan {

const char* to_string(HeadKind kind) { return kind == HeadKind::kMlp ? "mlp" : "kan"; }

HeadKind parse_head_kind(const std::string& name) {
  if (name == "mlp") return HeadKind::kMlp;
  if (name == "kan") return HeadKind::kKan;
  throw ConfigError("unknown head '" + name + "'");
}

std::vector<Index> ModelConfig::stage_extents() const {
  std::vector<Index> extents;
  Index s = input_size;
  for (std::size_t l = 0; l < conv_kernels.size(); ++l) {
    s = sliding_extent(s, conv_kernels[l], 1, "conv stage");
    s = sliding_extent(s, pooling.window, pooling.stride, "pool stage");
    extents.push_back(s);
  }
  return extents;
}

Index ModelConfig::flatten_width() const {
  const std::vector<Index> extents = stage_extents();
  return conv_filters.back() * extents.back() * extents.back();
}

void ModelConfig::validate() const {
  if (conv_filters.empty() || conv_filters.size() != conv_kernels.size()) {
    throw ConfigError("conv_filters and conv_kernels must be non-empty and of equal length");
  }
  for (Index f : conv_filters)
    if (f < 1) throw ConfigError("conv filter counts must be positive");
  for (Index w : head == HeadKind::kMlp ? mlp_widths : kan_widths)
    if (w < 1) throw ConfigError("head widths must be positive");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (pooling.window < 1 || pooling.stride < 1) throw ConfigError("pool window and stride must be >= 1");
  if (!(pooling.membership.r_max > 0)) throw ConfigError("r_max must be positive");
  kan_grid.validate();
  try {
    stage_extents();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("backbone does not fit the input size: ") + e.what());
  }
}

std::string ModelConfig::canonical() const {
  auto list = [](const std::vector<Index>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto real = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string out;
  out += "dataset=" + std::string(to_string(dataset));
  out += ";pool=" + std::string(to_string(pooling.kind)) + "," + std::to_string(pooling.window) + "," +
         std::to_string(pooling.stride) + "," + real(pooling.membership.r_max);
  out += ";head=" + std::string(to_string(head));
  out += ";activation=" + std::string(to_string(conv_activation));
  out += ";grid=" + std::to_string(kan_grid.order) + "," + std::to_string(kan_grid.intervals) + "," +
         real(kan_grid.lo) + "," + real(kan_grid.hi);
  out += ";kan_tanh=" + std::to_string(kan_input_tanh ? 1 : 0);
  out += ";mlp=" + list(mlp_widths) + ";kan=" + list(kan_widths);
  out += ";filters=" + list(conv_filters) + ";kernels=" + list(conv_kernels);
  out += ";input=" + std::to_string(input_size) + ";classes=" + std::to_string(classes);
  return out;
}

std::uint64_t ModelConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

template <typename Scalar>
Tensor<Scalar> glorot_uniform(Shape shape, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(uniform(rng));
  return t;
}

}  // namespace

template <typename Scalar>
Model<Scalar>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);

  Index channels = config_.input_channels();
  for (std::size_t l = 0; l < config_.conv_filters.size(); ++l) {
    const Index f = config_.conv_filters[l], k = config_.conv_kernels[l];
    const std::string name = "conv" + std::to_string(l + 1);
    convs_.push_back(Conv{
        Parameter<Scalar>(name + ".kernels", glorot_uniform<Scalar>({f, channels, k, k}, channels * k * k, f * k * k, rng)),
        Parameter<Scalar>(name + ".bias", Tensor<Scalar>::zeros({f}))});
    channels = f;
  }

  Index width = config_.flatten_width();
  if (config_.head == HeadKind::kMlp) {
    std::vector<Index> dims = config_.mlp_widths;
    dims.push_back(config_.classes);
    for (std::size_t l = 0; l < dims.size(); ++l) {
      const std::string name = "fc" + std::to_string(l + 1);
      dense_.push_back(Dense{Parameter<Scalar>(name + ".weights", glorot_uniform<Scalar>({width, dims[l]}, width, dims[l], rng)),
                             Parameter<Scalar>(name + ".bias", Tensor<Scalar>::zeros({dims[l]}))});
      width = dims[l];
    }
  } else {
    std::vector<Index> dims = config_.kan_widths;
    dims.push_back(config_.classes);
    for (std::size_t l = 0; l < dims.size(); ++l) {
      KanLayer<Scalar> layer = kan_init<Scalar>(width, dims[l], config_.kan_grid, rng);
      const std::string name = "kan" + std::to_string(l + 1);
      layer.coeffs.name = name + ".coeffs";
      layer.w_base.name = name + ".w_base";
      layer.w_spline.name = name + ".w_spline";
      kan_.push_back(std::move(layer));
      width = dims[l];
    }
  }
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::forward(Var<Scalar> batch, ForwardTrace<Scalar>* trace) {
  Graph<Scalar>& g = *batch.graph;
  const Shape& s = batch.shape();
  const Shape expected{s.empty() ? 0 : s[0], config_.input_channels(), config_.input_size, config_.input_size};
  if (s != expected) {
    throw ShapeError("model input must be " + to_string(expected) + ", got " + to_string(s));
  }
  Var<Scalar> x = batch;
  for (Conv& conv : convs_) {
    x = conv2d(x, g.parameter(conv.kernels), g.parameter(conv.bias), 1);
    if (trace) trace->conv_outputs.push_back(x);
    x = activate(config_.conv_activation, x);
    if (trace) trace->pool_inputs.push_back(x);
    x = pool(x, config_.pooling);
  }
  x = flatten(x);
  if (trace) trace->head_input = x;

  if (config_.head == HeadKind::kMlp) {
    for (std::size_t l = 0; l < dense_.size(); ++l) {
      x = add_bias(matmul(x, g.parameter(dense_[l].weights)), g.parameter(dense_[l].bias));
      if (l + 1 < dense_.size()) {
        if (trace) trace->dense_preactivations.push_back(x);
        x = activate(config_.conv_activation, x);
      }
    }
    return x;
  }
  if (config_.kan_input_tanh) x = activate(Activation::kTanh, x);
  return kan_stack_forward(x, std::span<KanLayer<Scalar>>(kan_));
}

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::logits(const Tensor<Scalar>& batch) {
  Graph<Scalar> g(false);
  return forward(g.input(batch)).value();
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> Model<Scalar>::parameters() {
  std::vector<Parameter<Scalar>*> out;
  for (Conv& c : convs_) {
    out.push_back(&c.kernels);
    out.push_back(&c.bias);
  }
  for (Dense& d : dense_) {
    out.push_back(&d.weights);
    out.push_back(&d.bias);
  }
  for (KanLayer<Scalar>& k : kan_) {
    out.push_back(&k.coeffs);
    out.push_back(&k.w_base);
    out.push_back(&k.w_spline);
  }
  return out;
}

template <typename Scalar>
std::vector<const Parameter<Scalar>*> Model<Scalar>::parameters() const {
  std::vector<const Parameter<Scalar>*> out;
  for (Parameter<Scalar>* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename Scalar>
Index Model<Scalar>::parameter_count() const {
  Index total = 0;
  for (const Parameter<Scalar>* p : parameters()) total += p->value.size();
  return total;
}

template <typename Scalar>
void Model<Scalar>::zero_grad() {
  for (Parameter<Scalar>* p : parameters()) p->zero_grad();
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'K', 'A', 'N'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError(DataError::Kind::kTruncated, path.string() + ": truncated checkpoint");
  }
  return value;
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, model.config().digest());
  for (const Parameter<Scalar>* p : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (Index d : p->value.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < p->value.size(); ++i) put<double>(out, static_cast<double>(p->value[i]));
  }
  if (!out) throw DataError(DataError::Kind::kMissingFile, "failed writing " + path.string());
}

template <typename Scalar>
void load_checkpoint(Model<Scalar>& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(DataError::Kind::kBadMagic, path.string() + ": not an FKAN checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw DataError(DataError::Kind::kBadMagic, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto digest = get<std::uint64_t>(in, path);
  if (digest != model.config().digest()) {
    throw ConfigError(path.string() + ": checkpoint was written for a different model configuration");
  }
  std::map<std::string, Tensor<Scalar>> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError(DataError::Kind::kTruncated, path.string() + ": truncated name");
    const auto rank = get<std::uint32_t>(in, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<Index>(get<std::uint64_t>(in, path)));
    Tensor<Scalar> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(get<double>(in, path));
    records.emplace(std::move(name), std::move(t));
  }
  for (Parameter<Scalar>* p : model.parameters()) {
    auto it = records.find(p->name);
    if (it == records.end()) throw DataError(DataError::Kind::kTruncated, path.string() + ": missing tensor " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw DataError(DataError::Kind::kBadShape, path.string() + ": tensor " + p->name + " has shape " +
                                                      to_string(it->second.shape()));
    }
    p->value = std::move(it->second);
    p->zero_grad();
  }
}

template class Model<float>;
template class Model<double>;
template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template void load_checkpoint<float>(Model<float>&, const std::filesystem::path&);
template void load_checkpoint<double>(Model<double>&, const std::filesystem::path&);

}  // namespace fkan
