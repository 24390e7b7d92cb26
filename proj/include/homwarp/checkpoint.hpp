#pragma once

// Checkpoint file: "STNH", u32 version, u32 flags, config block, then every
// parameter tensor in declaration order (f32, or f64 when kWideTensors is
// set). Little-endian throughout.
//
// config block: input_side u32, channels u32, conv_count u32,
// filters u32[conv_count], fc1_units u32, outputs u32, dropout f64.
//
// kOracleFixture marks a stand-in that predicts the ground truth; it carries
// the config block but no tensors and is only meaningful for evaluation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>

#include "homwarp/binary_io.hpp"
#include "homwarp/error.hpp"
#include "homwarp/model.hpp"

namespace homwarp {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kWideTensors = 1u << 0;
inline constexpr std::uint32_t kOracleFixture = 1u << 1;

struct Checkpoint {
  RegressorConfig config;
  bool oracle = false;
  bool wide = false;
  std::optional<RegressorParams<double>> params;  // absent for oracle fixtures

  [[nodiscard]] RegressorParams<float> params_f32() const {
    if (!params) throw Error(ErrorKind::CorruptCheckpoint, "oracle fixture has no parameters");
    return params->cast<float>();
  }
};

namespace detail {

inline void write_config(std::ostream& out, const RegressorConfig& c) {
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_side));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(c.channels));
  binary::put_uint<std::uint32_t>(out, kConvLayers);
  for (int f : c.filters) binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(f));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(c.fc1_units));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(c.outputs));
  binary::put_f64(out, c.dropout);
}

inline RegressorConfig read_config(binary::Reader& rd) {
  RegressorConfig c;
  c.input_side = static_cast<int>(rd.uint<std::uint32_t>());
  c.channels = static_cast<int>(rd.uint<std::uint32_t>());
  if (rd.uint<std::uint32_t>() != kConvLayers) rd.fail("unsupported conv layer count");
  for (int& f : c.filters) {
    f = static_cast<int>(rd.uint<std::uint32_t>());
    if (f <= 0 || f > 65536) rd.fail("implausible filter count");
  }
  c.fc1_units = static_cast<int>(rd.uint<std::uint32_t>());
  c.outputs = static_cast<int>(rd.uint<std::uint32_t>());
  c.dropout = rd.f64();
  try {
    c.validate();
  } catch (const Error& e) {
    rd.fail(e.what());
  }
  return c;
}

}  // namespace detail

template <typename T>
void save_checkpoint(std::ostream& out, const RegressorParams<T>& params) {
  const bool wide = std::is_same_v<T, double>;
  out.write("STNH", 4);
  binary::put_uint<std::uint32_t>(out, kCheckpointVersion);
  binary::put_uint<std::uint32_t>(out, wide ? kWideTensors : 0u);
  detail::write_config(out, params.config);
  for (const auto& t : params.tensors)
    for (T v : t.value) {
      if (wide) {
        binary::put_f64(out, static_cast<double>(v));
      } else {
        binary::put_f32(out, static_cast<float>(v));
      }
    }
  if (!out) throw Error(ErrorKind::CorruptCheckpoint, "write failed");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RegressorParams<T>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::CorruptCheckpoint, path.string() + ": cannot open for writing");
  save_checkpoint(out, params);
}

inline void save_oracle_checkpoint(const std::filesystem::path& path, const RegressorConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::CorruptCheckpoint, path.string() + ": cannot open for writing");
  out.write("STNH", 4);
  binary::put_uint<std::uint32_t>(out, kCheckpointVersion);
  binary::put_uint<std::uint32_t>(out, kOracleFixture);
  detail::write_config(out, cfg);
}

inline Checkpoint load_checkpoint(std::istream& in, const std::string& name = "checkpoint") {
  binary::Reader rd(in, ErrorKind::CorruptCheckpoint, name);
  std::array<std::uint8_t, 4> magic{};
  rd.bytes(magic);
  if (magic != std::array<std::uint8_t, 4>{'S', 'T', 'N', 'H'}) rd.fail("bad magic");
  if (rd.uint<std::uint32_t>() != kCheckpointVersion) rd.fail("unsupported version");
  const auto flags = rd.uint<std::uint32_t>();
  if (flags & ~(kWideTensors | kOracleFixture)) rd.fail("unknown flags");
  Checkpoint ck;
  ck.config = detail::read_config(rd);
  ck.oracle = (flags & kOracleFixture) != 0;
  ck.wide = (flags & kWideTensors) != 0;
  if (!ck.oracle) {
    RegressorParams<double> p(ck.config);
    for (auto& t : p.tensors)
      for (double& v : t.value) v = ck.wide ? rd.f64() : static_cast<double>(rd.f32());
    ck.params = std::move(p);
  }
  if (!rd.at_end()) rd.fail("trailing bytes");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptCheckpoint, path.string() + ": cannot open");
  return load_checkpoint(in, path.string());
}

/// A network whose output is the identity for every input: zero weights and
/// the identity's free elements as the head bias.
template <typename T>
RegressorParams<T> identity_params(const RegressorConfig& cfg) {
  RegressorParams<T> p(cfg);
  const auto id = Homography3::identity(Frame::Normalized).free_elements();
  for (int i = 0; i < kOutputs; ++i) p.fc2_b().value[i] = static_cast<T>(id[i]);
  return p;
}

}  // namespace homwarp
