#include "glyphmatch/checkpoint.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "glyphmatch/prng.h"

namespace gm {

namespace {

constexpr char kMagic[4] = {'G', 'L', 'Y', 'F'};
constexpr uint32_t kVersion = 1;

void put_u16(std::string& b, uint16_t v) {
  b.push_back(char(v & 0xff));
  b.push_back(char((v >> 8) & 0xff));
}
void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& b, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, u);
}

void put_tensor(std::string& b, const std::string& name, const Tensor& t) {
  if (name.empty() || name.size() > 0xffff) throw std::invalid_argument("checkpoint: bad tensor name");
  put_u16(b, uint16_t(name.size()));
  b.append(name);
  b.push_back(0);  // dtype f32
  if (t.shape.empty() || t.shape.size() > 0xff) throw std::invalid_argument("checkpoint: bad rank: " + name);
  b.push_back(char(t.shape.size()));
  for (int d : t.shape) {
    if (d <= 0) throw std::invalid_argument("checkpoint: bad dim: " + name);
    put_u32(b, uint32_t(d));
  }
  for (float f : t.v) put_f32(b, f);
}

struct Reader {
  const uint8_t* p;
  const uint8_t* end;
  void need(size_t n) const {
    if (size_t(end - p) < n) throw std::runtime_error("checkpoint: truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p[0]) | uint16_t(p[1]) << 8;
    p += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  float f32() {
    uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m, const Adam* adam) {
  // name -> tensor, std::map so everything lands in name order
  std::map<std::string, const Tensor*> out;
  for (const auto& [name, t] : m.params.values) out[name] = &t;
  if (adam) {
    for (const auto& [name, t] : adam->m()) out[name + ".adam.m"] = &t;
    for (const auto& [name, t] : adam->v()) out[name + ".adam.v"] = &t;
  }
  Tensor alpha({int(m.alphabet.size())});
  for (size_t i = 0; i < m.alphabet.size(); ++i) alpha.v[i] = float(m.alphabet[i]);
  out["config.alphabet"] = &alpha;

  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u64(buf, uint64_t(m.iteration));
  put_u32(buf, uint32_t(out.size()));
  for (const auto& [name, t] : out) put_tensor(buf, name, *t);
  put_u64(buf, fnv1a(buf.data(), buf.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, Model& m, Adam* adam) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 + 4 + 8 + 4 + 8) throw std::runtime_error("checkpoint: truncated");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  uint64_t want = fnv1a(buf.data(), buf.size() - 8);
  Reader tail{reinterpret_cast<const uint8_t*>(buf.data()) + buf.size() - 8,
              reinterpret_cast<const uint8_t*>(buf.data()) + buf.size()};
  if (tail.u64() != want) throw std::runtime_error("checkpoint: checksum mismatch");

  Reader r{reinterpret_cast<const uint8_t*>(buf.data()) + 4,
           reinterpret_cast<const uint8_t*>(buf.data()) + buf.size() - 8};
  uint32_t version = r.u32();
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  int64_t iteration = int64_t(r.u64());
  uint32_t count = r.u32();

  std::map<std::string, Tensor> tensors;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16());
    if (name.empty()) throw std::runtime_error("checkpoint: empty tensor name");
    r.need(2);
    uint8_t dtype = *r.p++;
    uint8_t ndim = *r.p++;
    if (dtype != 0) throw std::runtime_error("checkpoint: unknown dtype: " + name);
    if (ndim == 0) throw std::runtime_error("checkpoint: rank-0 tensor: " + name);
    std::vector<int> shape(ndim);
    size_t numel = 1;
    for (auto& d : shape) {
      uint32_t v = r.u32();
      if (v == 0 || v > (1u << 28)) throw std::runtime_error("checkpoint: bad dim: " + name);
      d = int(v);
      numel *= v;
      if (numel > (1u << 28)) throw std::runtime_error("checkpoint: oversized tensor: " + name);
    }
    Tensor t(shape);
    for (auto& x : t.v) x = r.f32();
    if (!tensors.emplace(std::move(name), std::move(t)).second)
      throw std::runtime_error("checkpoint: duplicate tensor name");
  }
  if (r.p != r.end) throw std::runtime_error("checkpoint: trailing bytes");

  auto it = tensors.find("config.alphabet");
  if (it == tensors.end()) throw std::runtime_error("checkpoint: missing alphabet");
  std::u32string alphabet;
  for (float x : it->second.v) alphabet += char32_t(x);
  tensors.erase(it);

  ParamStore params;
  std::map<std::string, Tensor> mm, mv;
  for (auto& [name, t] : tensors) {
    if (ends_with(name, ".adam.m"))
      mm[name.substr(0, name.size() - 7)] = std::move(t);
    else if (ends_with(name, ".adam.v"))
      mv[name.substr(0, name.size() - 7)] = std::move(t);
    else
      params.add(name, std::move(t));
  }
  for (const auto* moments : {&mm, &mv})
    for (const auto& [name, t] : *moments) {
      if (!params.has(name)) throw std::runtime_error("checkpoint: moment without param: " + name);
      if (params.value(name).shape != t.shape)
        throw std::runtime_error("checkpoint: moment shape mismatch: " + name);
    }

  m.params = std::move(params);
  m.alphabet = std::move(alphabet);
  m.iteration = iteration;
  if (adam) {
    adam->m() = std::move(mm);
    adam->v() = std::move(mv);
    adam->set_iteration(iteration);
  }
}

}  // namespace gm
