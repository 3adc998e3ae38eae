#include "pcbd/rng.hpp"

#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "pcbd/error.hpp"

namespace pcbd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateCloud: return "DegenerateCloud";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::SizeLimit: return "SizeLimit";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::UntrainedModel: return "UntrainedModel";
    case ErrorKind::FractionTooSmall: return "FractionTooSmall";
    case ErrorKind::PointAtOrigin: return "PointAtOrigin";
    case ErrorKind::OrderTooHigh: return "OrderTooHigh";
    case ErrorKind::NothingToPoison: return "NothingToPoison";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::ZeroResidual: return "ZeroResidual";
    case ErrorKind::AllPointsRemoved: return "AllPointsRemoved";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

SeededRng SeededRng::derive(std::uint64_t sub) const {
  return SeededRng(seed_, mix64(stream_ ^ mix64(sub + 1)));
}

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "below(0)");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

std::vector<std::size_t> SeededRng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw Error(ErrorKind::InvalidArgument, "sample size exceeds population");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace pcbd
