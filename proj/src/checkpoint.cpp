#include "teformer/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "teformer/errors.hpp"

namespace teformer {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'E', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_string(std::ofstream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::string get_string(std::ifstream& in, std::uint64_t limit) {
  const std::uint64_t n = get_u64(in);
  if (!in || n > limit) throw DataError("checkpoint: corrupt string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

template <typename T>
Checkpoint snapshot(const nn::ParamStore<T>& store, const std::string& metadata) {
  Checkpoint ck{metadata, {}};
  for (const auto& [name, var] : store.entries()) {
    NamedTensor t{name, var.shape(), {}};
    const auto d = var.data();
    t.values.assign(d.begin(), d.end());
    ck.tensors.push_back(std::move(t));
  }
  std::sort(ck.tensors.begin(), ck.tensors.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return ck;
}

template <typename T>
void restore(nn::ParamStore<T>& store, const Checkpoint& ckpt) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  for (const auto& [name, var] : store.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + name);
    if (!(it->second->shape == var.shape()))
      throw DataError("checkpoint shape " + it->second->shape.str() + " for " + name + " does not match " +
                      var.shape().str());
  }
  if (by_name.size() != store.entries().size()) throw DataError("checkpoint holds parameters the model lacks");
  for (const auto& [name, var] : store.entries()) {
    auto d = var.data();
    const auto& v = by_name[name]->values;
    std::transform(v.begin(), v.end(), d.begin(), [](float x) { return static_cast<T>(x); });
  }
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  put_string(out, ckpt.metadata);
  put_u64(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    put_string(out, t.name);
    const std::int32_t dims[4] = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("not a checkpoint file: " + path);
  Checkpoint ck;
  ck.metadata = get_string(in, 1u << 26);
  const std::uint64_t count = get_u64(in);
  if (!in || count > (1u << 20)) throw DataError("checkpoint: corrupt tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_string(in, 4096);
    std::int32_t dims[4] = {};
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::any_of(dims, dims + 4, [](std::int32_t d) { return d < 1; }))
      throw DataError("checkpoint: corrupt dims for " + t.name);
    t.shape = Shape{dims[0], dims[1], dims[2], dims[3]};
    t.values.resize(t.shape.numel());
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    if (!in) throw DataError("checkpoint: truncated data for " + t.name);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template Checkpoint snapshot(const nn::ParamStore<float>&, const std::string&);
template Checkpoint snapshot(const nn::ParamStore<double>&, const std::string&);
template void restore(nn::ParamStore<float>&, const Checkpoint&);
template void restore(nn::ParamStore<double>&, const Checkpoint&);

}  // namespace teformer
