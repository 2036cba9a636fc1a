#include "metareid/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <type_traits>

#include "metareid/errors.hpp"

namespace metareid {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'R', 'I', 'D'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(U);
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ValidationError("checkpoint: truncated at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t element_size(DType t) { return t == DType::f32 ? 4 : 8; }

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

template <typename T>
CheckpointArray pack(std::string name, const Tensor<T>& t) {
  using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
  CheckpointArray a;
  a.name = std::move(name);
  a.dtype = dtype_of<T>();
  for (auto d : t.shape()) a.dims.push_back(static_cast<std::uint32_t>(d));
  a.payload.reserve(t.numel() * sizeof(T));
  for (T v : t.data()) put_le(a.payload, std::bit_cast<Bits>(v));
  return a;
}

template <typename T>
Tensor<T> unpack(const CheckpointArray& a) {
  Shape shape(a.dims.begin(), a.dims.end());
  Tensor<T> out(shape);
  Reader r(a.payload);
  for (auto& v : out.data()) {
    if (a.dtype == DType::f32) {
      v = static_cast<T>(std::bit_cast<float>(r.le<std::uint32_t>()));
    } else {
      v = static_cast<T>(std::bit_cast<double>(r.le<std::uint64_t>()));
    }
  }
  return out;
}

}  // namespace

std::size_t CheckpointArray::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const CheckpointArray& Checkpoint::at(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ValidationError("checkpoint: missing array '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (a.name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: array name too long");
    if (a.dims.size() > 0xFF) throw std::invalid_argument("checkpoint: rank too large");
    if (a.payload.size() != a.numel() * element_size(a.dtype)) {
      throw std::invalid_argument("checkpoint: payload size mismatch for '" + a.name + "'");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    out.push_back(static_cast<std::uint8_t>(a.dtype));
    out.push_back(static_cast<std::uint8_t>(a.dims.size()));
    for (auto d : a.dims) put_le<std::uint32_t>(out, d);
    out.insert(out.end(), a.payload.begin(), a.payload.end());
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw ValidationError("checkpoint: bad magic");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointArray a;
    const auto name_len = r.le<std::uint16_t>();
    auto name = r.take(name_len);
    a.name.assign(name.begin(), name.end());
    const auto dtype = r.le<std::uint8_t>();
    if (dtype > 1) {
      throw ValidationError("checkpoint: unknown dtype " + std::to_string(dtype) + " for '" +
                            a.name + "'");
    }
    a.dtype = static_cast<DType>(dtype);
    const auto rank = r.le<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) a.dims.push_back(r.le<std::uint32_t>());
    auto payload = r.take(a.numel() * element_size(a.dtype));
    a.payload.assign(payload.begin(), payload.end());
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
Checkpoint to_checkpoint(const ModelParams<T>& params) {
  Checkpoint ckpt;
  auto refs = params.weights.refs();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    ckpt.arrays.push_back(pack(std::string(ParamSet<Tensor<T>>::kNames[i]), *refs[i]));
  }
  ckpt.arrays.push_back(pack("mlr.running_mean", params.buffers.running_mean));
  ckpt.arrays.push_back(pack("mlr.running_var", params.buffers.running_var));
  return ckpt;
}

template <typename T>
ModelParams<T> params_from_checkpoint(const Checkpoint& ckpt) {
  ModelParams<T> params;
  auto refs = params.weights.refs();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    *refs[i] = unpack<T>(ckpt.at(std::string(ParamSet<Tensor<T>>::kNames[i])));
  }
  params.buffers.running_mean = unpack<T>(ckpt.at("mlr.running_mean"));
  params.buffers.running_var = unpack<T>(ckpt.at("mlr.running_var"));
  const auto expect = [&](const Tensor<T>& t, Shape shape, const char* what) {
    if (t.shape() != shape) {
      throw ValidationError(std::string("checkpoint: inconsistent shape for ") + what + ": " +
                            shape_str(t.shape()));
    }
  };
  const auto& w = params.weights;
  if (w.trunk0_w.rank() != 2 || w.trunk1_w.rank() != 2 || w.embed_w.rank() != 2 ||
      w.classifier_w.rank() != 2) {
    throw ValidationError("checkpoint: weight matrices must be rank 2");
  }
  const auto dims = params.dims();
  expect(w.trunk0_b, {dims.hidden}, "trunk0.bias");
  expect(w.trunk1_w, {dims.hidden, dims.feature}, "trunk1.weight");
  expect(w.trunk1_b, {dims.feature}, "trunk1.bias");
  expect(w.norm_scale, {dims.feature}, "mlr.scale");
  expect(w.norm_shift, {dims.feature}, "mlr.shift");
  expect(w.embed_w, {dims.feature, dims.embed}, "embed.weight");
  expect(w.classifier_w, {dims.embed, dims.classes}, "classifier.weight");
  expect(params.buffers.running_mean, {dims.feature}, "mlr.running_mean");
  expect(params.buffers.running_var, {dims.feature}, "mlr.running_var");
  return params;
}

template Checkpoint to_checkpoint<float>(const ModelParams<float>&);
template Checkpoint to_checkpoint<double>(const ModelParams<double>&);
template ModelParams<float> params_from_checkpoint<float>(const Checkpoint&);
template ModelParams<double> params_from_checkpoint<double>(const Checkpoint&);

}  // namespace metareid
