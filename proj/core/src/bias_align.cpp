#include "vlbias/bias_align.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vlbias/errors.hpp"
#include "vlbias/leb1.hpp"
#include "vlbias/rng.hpp"

namespace vlbias {

using json = nlohmann::ordered_json;

BAParams BAParams::zero_init(std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("bias-alignment net needs dim >= 2");
  BAParams p;
  p.dim = dim;
  p.w1.assign(dim * dim, 0.0);
  p.b1.assign(dim, 0.0);
  p.w2.assign(dim * dim, 0.0);
  p.b2.assign(dim, 0.0);
  Rng rng(mix_seed(seed, 0xBA11));
  const auto basis = random_orthonormal(dim, dim, rng);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) p.w1[r * dim + c] = basis[r][c];
  p.zero_grads();
  return p;
}

void BAParams::zero_grads() {
  gw1.assign(dim * dim, 0.0);
  gb1.assign(dim, 0.0);
  gw2.assign(dim * dim, 0.0);
  gb2.assign(dim, 0.0);
}

namespace {

// flat layout: w1 | b1 | w2 | b2
template <class P>
auto& flat_at(P& p, std::size_t i, Vec BAParams::*w1, Vec BAParams::*b1, Vec BAParams::*w2,
              Vec BAParams::*b2) {
  const std::size_t dd = p.dim * p.dim;
  if (i < dd) return (p.*w1)[i];
  i -= dd;
  if (i < p.dim) return (p.*b1)[i];
  i -= p.dim;
  if (i < dd) return (p.*w2)[i];
  i -= dd;
  if (i < p.dim) return (p.*b2)[i];
  throw DomainError("parameter index out of range");
}

}  // namespace

double& BAParams::param(std::size_t i) {
  return flat_at(*this, i, &BAParams::w1, &BAParams::b1, &BAParams::w2, &BAParams::b2);
}
double BAParams::param(std::size_t i) const {
  return flat_at(*this, i, &BAParams::w1, &BAParams::b1, &BAParams::w2, &BAParams::b2);
}
double& BAParams::grad(std::size_t i) {
  return flat_at(*this, i, &BAParams::gw1, &BAParams::gb1, &BAParams::gw2, &BAParams::gb2);
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
}  // namespace

double gelu(double x) {
  // exact form: x * Phi(x)
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
  const double phi_cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi_cdf + x * phi_pdf;
}

namespace {

void check_dim(const Vec& x, const BAParams& p, const char* what) {
  if (x.size() != p.dim)
    throw DimError(std::string(what) + ": input dim " + std::to_string(x.size()) +
                   " != net dim " + std::to_string(p.dim));
}

}  // namespace

Vec ba_forward(const Vec& x, const BAParams& params, BAForwardCache& cache) {
  check_dim(x, params, "ba_forward");
  const std::size_t d = params.dim;
  cache.pre_activation.assign(d, 0.0);
  cache.hidden.assign(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    double h = params.b1[r];
    const double* w = &params.w1[r * d];
    for (std::size_t c = 0; c < d; ++c) h += w[c] * x[c];
    cache.pre_activation[r] = h;
    cache.hidden[r] = gelu(h);
  }
  Vec out(d);
  for (std::size_t r = 0; r < d; ++r) {
    double y = params.b2[r];
    const double* w = &params.w2[r * d];
    for (std::size_t c = 0; c < d; ++c) y += w[c] * cache.hidden[c];
    out[r] = y;
  }
  cache.valid = true;
  return out;
}

Vec ba_forward(const Vec& x, const BAParams& params) {
  BAForwardCache cache;
  return ba_forward(x, params, cache);
}

Vec ba_backward(const Vec& x, const BAForwardCache& cache, const Vec& upstream,
                BAParams& params) {
  check_dim(x, params, "ba_backward");
  check_dim(upstream, params, "ba_backward upstream");
  if (!cache.valid || cache.hidden.size() != params.dim)
    throw StateError("ba_backward: no forward cache for this input");

  const std::size_t d = params.dim;

  // output layer
  for (std::size_t r = 0; r < d; ++r) {
    params.gb2[r] += upstream[r];
    double* gw = &params.gw2[r * d];
    for (std::size_t c = 0; c < d; ++c) gw[c] += upstream[r] * cache.hidden[c];
  }
  Vec dhidden(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double* w = &params.w2[r * d];
    for (std::size_t c = 0; c < d; ++c) dhidden[c] += w[c] * upstream[r];
  }

  // activation
  Vec dpre(d);
  for (std::size_t c = 0; c < d; ++c)
    dpre[c] = dhidden[c] * gelu_grad(cache.pre_activation[c]);

  // input layer
  for (std::size_t r = 0; r < d; ++r) {
    params.gb1[r] += dpre[r];
    double* gw = &params.gw1[r * d];
    for (std::size_t c = 0; c < d; ++c) gw[c] += dpre[r] * x[c];
  }
  Vec dx(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double* w = &params.w1[r * d];
    for (std::size_t c = 0; c < d; ++c) dx[c] += w[c] * dpre[r];
  }
  return dx;
}

BiasDecomposition decompose(const Vec& x, const BAParams& params) {
  BiasDecomposition out;
  out.bias = ba_forward(x, params);
  out.neutral.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.neutral[i] = x[i] - out.bias[i];
  return out;
}

namespace {

MatrixF32 to_f32(const Vec& v, std::uint32_t rows, std::uint32_t dim) {
  MatrixF32 m;
  m.rows = rows;
  m.dim = dim;
  m.data.reserve(v.size());
  for (double x : v) m.data.push_back(static_cast<float>(x));
  return m;
}

Vec from_f32(const MatrixF32& m, std::size_t expect_rows, std::size_t expect_dim,
             const char* what) {
  if (m.rows != expect_rows || m.dim != expect_dim)
    throw ConsistencyError(std::string("checkpoint blob ") + what + " has shape " +
                           std::to_string(m.rows) + "x" + std::to_string(m.dim));
  Vec v(m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i) v[i] = static_cast<double>(m.data[i]);
  return v;
}

}  // namespace

void save_checkpoint(const BAParams& params, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  json header;
  header["dim"] = params.dim;
  header["arch"] = meta.arch;
  header["seed"] = meta.seed;
  header["step"] = meta.step;
  os << header.dump() << "\n";
  const auto d32 = static_cast<std::uint32_t>(params.dim);
  write_leb1(os, to_f32(params.w1, d32, d32));
  write_leb1(os, to_f32(params.b1, 1, d32));
  write_leb1(os, to_f32(params.w2, d32, d32));
  write_leb1(os, to_f32(params.b2, 1, d32));
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

std::pair<BAParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError("checkpoint missing header line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  CheckpointMeta meta;
  meta.dim = header.at("dim").get<std::size_t>();
  meta.arch = header.at("arch").get<std::string>();
  meta.seed = header.at("seed").get<std::uint64_t>();
  meta.step = header.at("step").get<std::uint64_t>();
  if (meta.arch != "mlp2-gelu")
    throw FormatError("unsupported checkpoint arch: " + meta.arch);

  BAParams params;
  params.dim = meta.dim;
  params.w1 = from_f32(read_leb1(is), meta.dim, meta.dim, "W1");
  params.b1 = from_f32(read_leb1(is), 1, meta.dim, "b1");
  params.w2 = from_f32(read_leb1(is), meta.dim, meta.dim, "W2");
  params.b2 = from_f32(read_leb1(is), 1, meta.dim, "b2");
  params.zero_grads();
  return {std::move(params), meta};
}

}  // namespace vlbias
