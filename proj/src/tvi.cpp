#include "navtoken/tvi.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "navtoken/binary_io.hpp"
#include "navtoken/random.hpp"

namespace navtoken::tvi {

namespace {

constexpr char kMagic[4] = {'T', 'V', 'I', 'P'};
constexpr std::uint32_t kVersion = 1;

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

void check_projector_shape(const Projector& p, const char* name) {
  const auto in = static_cast<std::size_t>(p.in_dim);
  const auto hid = static_cast<std::size_t>(p.hidden_dim);
  const auto out = static_cast<std::size_t>(p.out_dim);
  if (p.in_dim <= 0 || p.hidden_dim <= 0 || p.out_dim <= 0 || p.w1.size() != hid * in || p.b1.size() != hid ||
      p.w2.size() != out * hid || p.b2.size() != out) {
    throw Error(ErrorCode::ShapeMismatch, std::string(name) + " projector tensors do not match its dimensions");
  }
}

void check_projector(const Projector& p, const char* name) {
  check_projector_shape(p, name);
  for (const auto* t : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    for (float v : *t) {
      if (!std::isfinite(v)) throw Error(ErrorCode::FieldOutOfRange, std::string(name) + " projector has non-finite weight");
    }
  }
}

void fill_uniform(std::vector<float>& v, std::size_t n, double bound, DeterministicRng& rng) {
  v.resize(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
}

Projector random_projector(int in, int hidden, int out, DeterministicRng& rng) {
  Projector p{in, hidden, out, Activation::Gelu, {}, {}, {}, {}};
  const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w1, static_cast<std::size_t>(hidden) * in, b1, rng);
  fill_uniform(p.b1, static_cast<std::size_t>(hidden), b1, rng);
  fill_uniform(p.w2, static_cast<std::size_t>(out) * hidden, b2, rng);
  fill_uniform(p.b2, static_cast<std::size_t>(out), b2, rng);
  return p;
}

void add_into(std::vector<float>& acc, std::span<const float> term) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += term[i];
}

}  // namespace

std::vector<float> sinusoidal_encoding(double position, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw Error(ErrorCode::OddDimension, "encoding dimension must be positive and even");
  std::vector<float> pe(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(kFrequencyBase, -2.0 * i / dim);
    pe[2 * i] = static_cast<float>(std::sin(position * freq));
    pe[2 * i + 1] = static_cast<float>(std::cos(position * freq));
  }
  return pe;
}

std::vector<float> time_pe(int t, int pe_dim) {
  if (t < 0) throw Error(ErrorCode::FieldOutOfRange, "timestep must be >= 0");
  return sinusoidal_encoding(static_cast<double>(t), pe_dim);
}

std::vector<float> angle_pe(double azimuth, int pe_dim) {
  if (pe_dim <= 0 || pe_dim % 4 != 0) throw Error(ErrorCode::BadDimension, "angle encoding dimension must be a multiple of 4");
  if (!std::isfinite(azimuth)) throw Error(ErrorCode::FieldOutOfRange, "non-finite azimuth");
  double phi = std::fmod(azimuth, kTwoPi);
  if (phi < 0.0) phi += kTwoPi;
  auto pe = sinusoidal_encoding(std::cos(phi), pe_dim / 2);
  const auto second = sinusoidal_encoding(std::sin(phi), pe_dim / 2);
  pe.insert(pe.end(), second.begin(), second.end());
  return pe;
}

std::vector<float> projector_forward(const Projector& proj, std::span<const float> x) {
  if (x.size() != static_cast<std::size_t>(proj.in_dim)) {
    throw Error(ErrorCode::ShapeMismatch, "projector expects input of width " + std::to_string(proj.in_dim) +
                                              ", got " + std::to_string(x.size()));
  }
  check_projector_shape(proj, "input");
  std::vector<double> hidden(static_cast<std::size_t>(proj.hidden_dim));
  for (int h = 0; h < proj.hidden_dim; ++h) {
    double acc = proj.b1[h];
    const float* row = proj.w1.data() + static_cast<std::size_t>(h) * proj.in_dim;
    for (int i = 0; i < proj.in_dim; ++i) acc += static_cast<double>(row[i]) * x[i];
    hidden[h] = proj.activation == Activation::Gelu ? gelu(acc) : acc;
  }
  std::vector<float> out(static_cast<std::size_t>(proj.out_dim));
  for (int o = 0; o < proj.out_dim; ++o) {
    double acc = proj.b2[o];
    const float* row = proj.w2.data() + static_cast<std::size_t>(o) * proj.hidden_dim;
    for (int h = 0; h < proj.hidden_dim; ++h) acc += static_cast<double>(row[h]) * hidden[h];
    out[o] = static_cast<float>(acc);
  }
  return out;
}

Projector identity_projector(int in_dim, int hidden_dim, int out_dim) {
  Projector p{in_dim, hidden_dim, out_dim, Activation::Identity, {}, {}, {}, {}};
  p.w1.assign(static_cast<std::size_t>(hidden_dim) * in_dim, 0.0f);
  p.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0f);
  p.w2.assign(static_cast<std::size_t>(out_dim) * hidden_dim, 0.0f);
  p.b2.assign(static_cast<std::size_t>(out_dim), 0.0f);
  for (int i = 0; i < std::min(in_dim, hidden_dim); ++i) p.w1[static_cast<std::size_t>(i) * in_dim + i] = 1.0f;
  for (int i = 0; i < std::min(out_dim, hidden_dim); ++i) p.w2[static_cast<std::size_t>(i) * hidden_dim + i] = 1.0f;
  return p;
}

void validate_params(const TviParams& params) {
  if (params.channels <= 0) throw Error(ErrorCode::BadDimension, "channel count must be positive");
  if (params.pe_dim <= 0 || params.pe_dim % 4 != 0) throw Error(ErrorCode::BadDimension, "pe_dim must be a multiple of 4");
  if (params.base.size() != static_cast<std::size_t>(params.channels)) {
    throw Error(ErrorCode::ShapeMismatch, "base embedding width differs from C");
  }
  for (float v : params.base) {
    if (!std::isfinite(v)) throw Error(ErrorCode::FieldOutOfRange, "base embedding has non-finite value");
  }
  check_projector(params.time, "time");
  check_projector(params.angle, "angle");
  for (const auto* p : {&params.time, &params.angle}) {
    if (p->in_dim != params.pe_dim || p->out_dim != params.channels) {
      throw Error(ErrorCode::ShapeMismatch, "projectors must map pe_dim -> C");
    }
  }
}

TviToken tvi_token(const TviParams& params, TaskMode mode, std::optional<int> t, std::optional<double> azimuth) {
  const bool wants_time = mode != TaskMode::ImageQA;
  const bool wants_angle = mode == TaskMode::Navigation;
  const auto mode_name = std::string(to_string(mode));
  if (wants_time && !t) throw Error(ErrorCode::MissingArgument, mode_name + " indicator needs a timestep");
  if (!wants_time && t) throw Error(ErrorCode::UnexpectedArgument, mode_name + " indicator takes no timestep");
  if (wants_angle && !azimuth) throw Error(ErrorCode::MissingArgument, mode_name + " indicator needs an azimuth");
  if (!wants_angle && azimuth) throw Error(ErrorCode::UnexpectedArgument, mode_name + " indicator takes no azimuth");

  TviToken token{params.base, mode, t, azimuth};
  if (wants_time) add_into(token.vector, time_term(params, *t));
  if (wants_angle) add_into(token.vector, angle_term(params, *azimuth));
  return token;
}

std::vector<float> time_term(const TviParams& params, int t) {
  return projector_forward(params.time, time_pe(t, params.pe_dim));
}

std::vector<float> angle_term(const TviParams& params, double azimuth) {
  return projector_forward(params.angle, angle_pe(azimuth, params.pe_dim));
}

std::vector<float> compose_indicator(const TviParams& params, std::span<const float> time,
                                     std::span<const float> angle) {
  std::vector<float> v = params.base;
  if (!time.empty()) add_into(v, time);
  if (!angle.empty()) add_into(v, angle);
  return v;
}

TviParams init_params(int channels, int pe_dim, std::uint64_t seed) {
  if (channels <= 0) throw Error(ErrorCode::BadDimension, "channel count must be positive");
  if (pe_dim <= 0 || pe_dim % 4 != 0) throw Error(ErrorCode::BadDimension, "pe_dim must be a multiple of 4");
  DeterministicRng rng(seed);
  TviParams p;
  p.channels = channels;
  p.pe_dim = pe_dim;
  fill_uniform(p.base, static_cast<std::size_t>(channels), 0.02, rng);
  p.time = random_projector(pe_dim, 2 * pe_dim, channels, rng);
  p.angle = random_projector(pe_dim, 2 * pe_dim, channels, rng);
  return p;
}

void save_params(const std::filesystem::path& path, const TviParams& params) {
  validate_params(params);
  if (params.time.hidden_dim != 2 * params.pe_dim || params.angle.hidden_dim != 2 * params.pe_dim ||
      params.time.activation != Activation::Gelu || params.angle.activation != Activation::Gelu) {
    throw Error(ErrorCode::ShapeMismatch, "only GELU projectors with hidden width 2 * pe_dim are serializable");
  }
  std::vector<std::uint8_t> buf(std::begin(kMagic), std::end(kMagic));
  binary::put_u32(buf, kVersion);
  binary::put_u32(buf, static_cast<std::uint32_t>(params.channels));
  binary::put_u32(buf, static_cast<std::uint32_t>(params.pe_dim));
  binary::put_f32s(buf, params.base);
  for (const auto* p : {&params.time, &params.angle}) {
    binary::put_f32s(buf, p->w1);
    binary::put_f32s(buf, p->b1);
    binary::put_f32s(buf, p->w2);
    binary::put_f32s(buf, p->b2);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write on " + path.string());
}

TviParams load_params(const std::filesystem::path& path, std::optional<int> expected_channels,
                      std::optional<int> expected_pe_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  binary::Reader r(buf);
  if (r.str(4) != std::string(kMagic, 4)) throw Error(ErrorCode::VersionMismatch, path.string() + " is not a TVIP file");
  const auto version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported TVIP version " + std::to_string(version));
  }
  TviParams p;
  p.channels = static_cast<int>(r.u32());
  p.pe_dim = static_cast<int>(r.u32());
  if (!r.ok()) throw Error(ErrorCode::VersionMismatch, "truncated TVIP header");
  if (expected_channels && *expected_channels != p.channels) {
    throw Error(ErrorCode::VersionMismatch, "file has C=" + std::to_string(p.channels) + ", expected " +
                                                std::to_string(*expected_channels));
  }
  if (expected_pe_dim && *expected_pe_dim != p.pe_dim) {
    throw Error(ErrorCode::VersionMismatch, "file has pe_dim=" + std::to_string(p.pe_dim) + ", expected " +
                                                std::to_string(*expected_pe_dim));
  }
  if (p.channels <= 0 || p.pe_dim <= 0 || p.pe_dim % 4 != 0 || p.channels > (1 << 20) || p.pe_dim > (1 << 16)) {
    throw Error(ErrorCode::VersionMismatch, "implausible TVIP dimensions");
  }
  const auto c = static_cast<std::size_t>(p.channels);
  const auto d = static_cast<std::size_t>(p.pe_dim);
  const auto h = 2 * d;
  const std::size_t floats = c + 2 * (h * d + h + c * h + c);
  if (r.remaining() != floats * 4) {
    throw Error(ErrorCode::VersionMismatch, "TVIP payload size does not match its header");
  }
  r.f32s(p.base, c);
  for (auto* proj : {&p.time, &p.angle}) {
    proj->in_dim = p.pe_dim;
    proj->hidden_dim = static_cast<int>(h);
    proj->out_dim = p.channels;
    proj->activation = Activation::Gelu;
    r.f32s(proj->w1, h * d);
    r.f32s(proj->b1, h);
    r.f32s(proj->w2, c * h);
    r.f32s(proj->b2, c);
  }
  validate_params(p);
  return p;
}

float l2_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "distance between vectors of different width");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return static_cast<float>(std::sqrt(acc));
}

}  // namespace navtoken::tvi
