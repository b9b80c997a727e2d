#include "utm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "utm/tensor.hpp"

namespace utm {

namespace {

constexpr char kMagic[8] = {'U', 'T', 'M', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_blobs(
    std::string& out,
    const std::vector<std::pair<std::string, std::vector<float>>>& blobs) {
  put_u64(out, blobs.size());
  for (const auto& [name, values] : blobs) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, values.size());
    for (float v : values) put_f32(out, v);
  }
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  const char* take(std::size_t n) {
    if (buf_.size() - pos_ < n)
      throw IoError("truncated checkpoint: " + path_);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str(std::size_t n) { return std::string(take(n), n); }

  std::vector<std::pair<std::string, std::vector<float>>> blobs() {
    std::vector<std::pair<std::string, std::vector<float>>> out;
    const std::uint64_t count = u64();
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::string name = str(u64());
      const std::uint64_t n = u64();
      std::vector<float> values(n);
      for (auto& v : values) v = f32();
      out.emplace_back(name, std::move(values));
    }
    return out;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, ck.version);
  put_u64(out, ck.config_text.size());
  out += ck.config_text;
  put_blobs(out, ck.params);
  put_blobs(out, ck.velocity);
  put_u32(out, ck.epoch);
  put_f64(out, ck.best_metric);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint file not found: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Reader r(buf, path);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " +
                  std::to_string(ck.version) + " (expected " +
                  std::to_string(kCheckpointVersion) + "): " + path);
  ck.config_text = r.str(r.u64());
  ck.params = r.blobs();
  ck.velocity = r.blobs();
  ck.epoch = r.u32();
  ck.best_metric = r.f64();
  if (!r.done()) throw IoError("trailing bytes in checkpoint: " + path);
  return ck;
}

}  // namespace utm
