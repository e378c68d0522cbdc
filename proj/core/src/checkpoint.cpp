#include "sealkit/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "sealkit/errors.hpp"

namespace sealkit {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'A', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  void raw(const void* p, size_t n) {
    const char* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class T>
  void pod(T v) {
    raw(&v, sizeof(T));
  }
  void str(const std::string& s) {
    pod<uint32_t>(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const Tensorf& t) {
    pod<uint8_t>(0);  // dtype f32
    pod<uint8_t>(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) pod<int64_t>(d);
    raw(t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* p, size_t n) : p_(p), end_(p + n) {}
  void raw(void* out, size_t n) {
    if (p_ + n > end_) throw DataError("checkpoint: truncated data");
    std::memcpy(out, p_, n);
    p_ += n;
  }
  template <class T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  std::string str() {
    uint32_t n = pod<uint32_t>();
    if (p_ + n > end_) throw DataError("checkpoint: truncated string");
    std::string s(p_, p_ + n);
    p_ += n;
    return s;
  }
  Tensorf tensor() {
    uint8_t dtype = pod<uint8_t>();
    if (dtype != 0) throw DataError("checkpoint: unsupported tensor dtype");
    uint8_t rank = pod<uint8_t>();
    nd::Shape shape(rank);
    for (auto& d : shape) d = pod<int64_t>();
    Tensorf t(shape);
    raw(t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
    return t;
  }
  bool done() const { return p_ == end_; }

 private:
  const char* p_;
  const char* end_;
};

void write_tensor_map(Writer& w, const std::map<std::string, Tensorf>& m) {
  w.pod<uint32_t>(static_cast<uint32_t>(m.size()));
  for (const auto& [name, t] : m) {
    w.str(name);
    w.tensor(t);
  }
}

std::map<std::string, Tensorf> read_tensor_map(Reader& r) {
  uint32_t n = r.pod<uint32_t>();
  std::map<std::string, Tensorf> m;
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    m.emplace(std::move(name), r.tensor());
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& st) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<uint32_t>(kVersion);

  const ArchConfig& a = st.bundle.arch;
  for (int v : {a.model_res, a.n_bits, a.base_channels, a.depth, a.msg_embed_channels,
                a.gn_groups})
    w.pod<int32_t>(v);

  w.pod<int64_t>(st.step);
  w.pod<int32_t>(st.stage);
  w.pod<int64_t>(st.stage2_entry);
  w.pod<int64_t>(st.stage3_entry);
  w.pod<double>(st.alpha);
  w.pod<uint8_t>(st.stage1_saturated ? 1 : 0);
  w.pod<int64_t>(st.opt_t_model);
  w.pod<int64_t>(st.opt_t_disc);
  w.str(st.rng.serialize());
  w.pod<uint32_t>(static_cast<uint32_t>(st.acc_window.size()));
  for (double v : st.acc_window) w.pod<double>(v);

  write_tensor_map(w, st.bundle.params);
  write_tensor_map(w, st.opt_m);
  write_tensor_map(w, st.opt_v);

  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(w.bytes().data()), static_cast<uInt>(w.bytes().size())));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  f.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!f) throw DataError("short checkpoint write: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(uint32_t) * 2)
    throw DataError("checkpoint too small: " + path);

  uint32_t crc_stored;
  std::memcpy(&crc_stored, bytes.data() + bytes.size() - sizeof(uint32_t), sizeof(uint32_t));
  size_t payload = bytes.size() - sizeof(uint32_t);
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(payload)));
  if (crc != crc_stored) throw DataError("checkpoint integrity check failed: " + path);

  Reader r(bytes.data(), payload);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a sealkit checkpoint: " + path);
  uint32_t version = r.pod<uint32_t>();
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kVersion) + ")");

  TrainState st;
  ArchConfig a;
  a.model_res = r.pod<int32_t>();
  a.n_bits = r.pod<int32_t>();
  a.base_channels = r.pod<int32_t>();
  a.depth = r.pod<int32_t>();
  a.msg_embed_channels = r.pod<int32_t>();
  a.gn_groups = r.pod<int32_t>();
  st.bundle.arch = a;

  st.step = r.pod<int64_t>();
  st.stage = r.pod<int32_t>();
  st.stage2_entry = r.pod<int64_t>();
  st.stage3_entry = r.pod<int64_t>();
  st.alpha = r.pod<double>();
  st.stage1_saturated = r.pod<uint8_t>() != 0;
  st.opt_t_model = r.pod<int64_t>();
  st.opt_t_disc = r.pod<int64_t>();
  st.rng = Rng::deserialize(r.str());
  uint32_t wn = r.pod<uint32_t>();
  for (uint32_t i = 0; i < wn; ++i) st.acc_window.push_back(r.pod<double>());

  st.bundle.params = read_tensor_map(r);
  st.opt_m = read_tensor_map(r);
  st.opt_v = read_tensor_map(r);
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  if (!st.bundle.all_finite()) throw DataError("checkpoint holds non-finite parameters");
  return st;
}

}  // namespace sealkit
