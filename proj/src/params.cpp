#include "hremrg/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace hremrg {

namespace {

constexpr char kMagic[4] = {'H', 'R', 'M', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  // assumes a little-endian host
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw ContractError("duplicate parameter: " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [k, v] : params_) n += v.size();
  return n;
}

Tensor& ParamStore::add_matrix(const std::string& name, int rows, int cols,
                               std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor m = Tensor::zeros({rows, cols});
  for (double& v : m.data) v = dist(rng);
  return add(name, std::move(m));
}

Tensor& ParamStore::add_zeros(const std::string& name, std::vector<int> shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor& ParamStore::add_ones(const std::string& name, std::vector<int> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = 1.0;
  return add(name, std::move(t));
}

void ParamStore::save(const std::filesystem::path& path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params_.size()));
    for (const auto& [name, t] : params_) {
      write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
      for (int d : t.shape) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad checkpoint magic in " + path.string());
  const auto version = read_le<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = read_le<std::uint32_t>(is, "parameter count");

  ParamStore store;
  for (std::uint32_t p = 0; p < count; ++p) {
    const auto name_len = read_le<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint truncated while reading name");
    const auto rank = read_le<std::uint32_t>(is, "rank");
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = read_le<std::uint32_t>(is, "dimension");
      shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    std::vector<double> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated in payload of " + name);
    store.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

Tensor param(GradTape* t, const ParamStore& store, const std::string& name) {
  const Tensor& v = store.at(name);
  return t ? t->leaf(name, v) : v;
}

GradCheckResult grad_check(ParamStore& params,
                           const std::function<Tensor(GradTape*, const ParamStore&)>& f,
                           double eps) {
  if (eps <= 0) throw ContractError("grad_check: eps must be positive");

  GradTape tape;
  Tensor loss = f(&tape, params);
  auto grads = tape.backward(loss);

  GradCheckResult res;
  for (auto& [name, value] : params) {
    const Tensor* g = grads.count(name) ? &grads.at(name) : nullptr;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value.data[i];
      value.data[i] = saved + eps;
      const double fp = f(nullptr, params).item();
      value.data[i] = saved - eps;
      const double fm = f(nullptr, params).item();
      value.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = g ? g->data[i] : 0.0;
      const double denom =
          std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace hremrg
