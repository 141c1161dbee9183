#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "navtoken/core.hpp"

// Temporal-viewpoint indicator (TVI) tokens. Each visual frame is preceded by
// one indicator embedding built from a learnable base vector plus projected
// sinusoidal encodings of its timestep and camera azimuth:
//
//   Navigation: base + P_time(TimePE(t)) + P_angle(AnglePE(phi))
//   VideoQA:    base + P_time(TimePE(t))
//   ImageQA:    base
namespace navtoken::tvi {

inline constexpr int kDefaultChannels = 64;
inline constexpr int kDefaultPeDim = 64;
inline constexpr double kFrequencyBase = 10000.0;

enum class Activation { Gelu, Identity };

// Two-layer perceptron: out = W2 * act(W1 * x + b1) + b2, weights row-major.
struct Projector {
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::Gelu;
  std::vector<float> w1, b1, w2, b2;

  friend bool operator==(const Projector&, const Projector&) = default;
};

struct TviParams {
  int channels = kDefaultChannels;
  int pe_dim = kDefaultPeDim;
  std::vector<float> base;
  Projector time;
  Projector angle;

  friend bool operator==(const TviParams&, const TviParams&) = default;
};

struct TviToken {
  std::vector<float> vector;
  TaskMode mode = TaskMode::ImageQA;
  std::optional<int> t;
  std::optional<double> azimuth;
};

// Alternating sin/cos encoding: pe[2i] = sin(pos w_i), pe[2i+1] = cos(pos w_i),
// w_i = 10000^(-2i/dim). Throws OddDimension for odd `dim`.
std::vector<float> sinusoidal_encoding(double position, int dim);

std::vector<float> time_pe(int t, int pe_dim);

// First half encodes cos(phi), second half sin(phi). pe_dim must be a
// multiple of 4 (BadDimension otherwise).
std::vector<float> angle_pe(double azimuth, int pe_dim);

std::vector<float> projector_forward(const Projector& proj, std::span<const float> x);

// Zero-bias rectangular identities with an identity activation; forwards x
// padded or truncated to out_dim.
Projector identity_projector(int in_dim, int hidden_dim, int out_dim);

void validate_params(const TviParams& params);

TviToken tvi_token(const TviParams& params, TaskMode mode, std::optional<int> t = std::nullopt,
                   std::optional<double> azimuth = std::nullopt);

// The projected terms on their own. compose_indicator(base, time, angle)
// reproduces tvi_token bit for bit (same summation order), which lets
// callers memoize the per-timestep and per-camera terms.
std::vector<float> time_term(const TviParams& params, int t);
std::vector<float> angle_term(const TviParams& params, double azimuth);
std::vector<float> compose_indicator(const TviParams& params, std::span<const float> time,
                                     std::span<const float> angle);

TviParams init_params(int channels, int pe_dim, std::uint64_t seed);

// Binary layout (little-endian): "TVIP", u32 version, u32 C, u32 pe_dim, then
// f32 tensors base[C], time.{w1,b1,w2,b2}, angle.{w1,b1,w2,b2}; hidden width
// is 2 * pe_dim.
void save_params(const std::filesystem::path& path, const TviParams& params);
TviParams load_params(const std::filesystem::path& path, std::optional<int> expected_channels = std::nullopt,
                      std::optional<int> expected_pe_dim = std::nullopt);

float l2_distance(std::span<const float> a, std::span<const float> b);

}  // namespace navtoken::tvi
