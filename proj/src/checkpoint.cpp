#include "gandistill/checkpoint.hpp"

#include <cstring>

#include "gandistill/io.hpp"

namespace gandistill {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'C', 'K', 'P', 'T', 0, 0};

template <typename V>
void put(std::string& buf, V v) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &v, sizeof(V));
  buf.append(bytes, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  const char* raw(std::size_t n) {
    need(n);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& buf, std::size_t n) {
  return crc32_of(std::string_view(buf.data(), n));
}

template <typename T>
TensorRecord record_of(const std::string& name, const Tensor<T>& t) {
  TensorRecord r;
  r.name = name;
  r.shape = t.shape();
  r.f64 = std::is_same_v<T, double>;
  r.data.assign(t.vec().begin(), t.vec().end());
  return r;
}

template <typename T>
void load_into(const Container& c, const std::string& name, Tensor<T>& t) {
  const TensorRecord* r = c.find(name);
  if (!r) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  if (r->shape != t.shape())
    throw CheckpointError("tensor '" + name + "' has shape mismatch in checkpoint");
  std::transform(r->data.begin(), r->data.end(), t.data(),
                 [](double v) { return static_cast<T>(v); });
}

}  // namespace

const TensorRecord* Container::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, Container::kVersion);
  const std::string header = c.header.dump();
  put<std::uint64_t>(buf, header.size());
  buf += header;
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    for (int d : t.shape) put<std::int32_t>(buf, d);
    put<std::uint8_t>(buf, t.f64 ? 1 : 0);
    if (t.f64) {
      for (double v : t.data) put<double>(buf, v);
    } else {
      for (double v : t.data) put<float>(buf, static_cast<float>(v));
    }
  }
  put<std::uint32_t>(buf, crc_of(buf, buf.size()));

  write_file_atomic(path, buf);
}

Container read_container(const std::filesystem::path& path) {
  std::string buf;
  try {
    buf = read_file(path);
  } catch (const IoError&) {
    throw CheckpointError("cannot open checkpoint " + path.string());
  }
  if (buf.size() < sizeof(kMagic) + 4 + 8 + 4 + 4 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint container");
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + body, 4);
  if (stored_crc != crc_of(buf, body))
    throw CheckpointError(path.string() + " failed its checksum (corrupted)");

  Reader r(buf, body);
  r.raw(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != Container::kVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " unsupported (expected " + std::to_string(Container::kVersion) + ")");
  Container c;
  const auto header_len = r.get<std::uint64_t>();
  try {
    c.header = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.bytes(r.get<std::uint32_t>());
    std::size_t n = 1;
    for (auto& d : t.shape) {
      d = r.get<std::int32_t>();
      if (d < 0) throw CheckpointError("negative tensor dimension in checkpoint");
      n *= static_cast<std::size_t>(d);
    }
    t.f64 = r.get<std::uint8_t>() != 0;
    t.data.resize(n);
    const char* p = r.raw(n * (t.f64 ? 8 : 4));
    for (std::size_t j = 0; j < n; ++j) {
      if (t.f64) {
        std::memcpy(&t.data[j], p + 8 * j, 8);
      } else {
        float f;
        std::memcpy(&f, p + 4 * j, 4);
        t.data[j] = f;
      }
    }
    c.tensors.push_back(std::move(t));
  }
  return c;
}

template <typename T>
void export_tensors(Container& c, const ParamList<T>& params) {
  for (const auto& p : params) c.tensors.push_back(record_of(p.name, *p.value));
}

template <typename T>
void export_tensors(Container& c, const BufferList<T>& buffers) {
  for (const auto& b : buffers) c.tensors.push_back(record_of(b.name, *b.value));
}

template <typename T>
void import_tensors(const Container& c, const ParamList<T>& params) {
  for (const auto& p : params) load_into(c, p.name, *p.value);
}

template <typename T>
void import_tensors(const Container& c, const BufferList<T>& buffers) {
  for (const auto& b : buffers) load_into(c, b.name, *b.value);
}

template void export_tensors(Container&, const ParamList<float>&);
template void export_tensors(Container&, const ParamList<double>&);
template void export_tensors(Container&, const BufferList<float>&);
template void export_tensors(Container&, const BufferList<double>&);
template void import_tensors(const Container&, const ParamList<float>&);
template void import_tensors(const Container&, const ParamList<double>&);
template void import_tensors(const Container&, const BufferList<float>&);
template void import_tensors(const Container&, const BufferList<double>&);

}  // namespace gandistill
