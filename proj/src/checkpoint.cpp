#include "dfss/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "dfss/io.hpp"

namespace dfss {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'F', 'S', 'S', 'C', 'K', 'P', 'T'};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Network& net) {
  ByteWriter out;
  out.bytes(std::span<const char>(kMagic, 8));
  out.u32(kCheckpointVersion);
  const Digest digest = spec_digest(net.spec());
  out.bytes(std::span<const std::uint8_t>(digest));
  out.u64(net.parameter_count());
  for (const Param<float>* p : net.parameters()) out.f32s(p->value.values());
  const auto bns = net.batchnorm_layers();
  out.u32(static_cast<std::uint32_t>(bns.size()));
  for (const BatchNormLayer<float>* bn : bns) {
    out.u32(static_cast<std::uint32_t>(bn->channels()));
    out.f32s(bn->running_mean);
    out.f32s(bn->running_var);
  }
  out.u64(net.init_seed());
  return out.take();
}

Network deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                               const NetworkSpec& expected_spec) {
  ByteReader in(bytes, "checkpoint");
  char magic[8];
  in.bytes(std::span<char>(magic, 8));
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic bytes");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Digest digest{};
  in.bytes(std::span<std::uint8_t>(digest));
  if (digest != spec_digest(expected_spec)) {
    throw FormatError("checkpoint: spec digest mismatch (file " + to_hex(digest) +
                      ", expected spec '" + expected_spec.name + "' " +
                      to_hex(spec_digest(expected_spec)) + ")");
  }
  // Decode into a scratch network; the real one is rebuilt once the trailing
  // init seed is known.
  Network scratch(expected_spec, 0);
  const std::uint64_t count = in.u64();
  if (count != scratch.parameter_count()) {
    throw FormatError("checkpoint: parameter count " + std::to_string(count) +
                      " != " + std::to_string(scratch.parameter_count()));
  }
  for (Param<float>* p : scratch.parameters()) in.f32s(p->value.values());
  auto bns = scratch.batchnorm_layers();
  const std::uint32_t nbn = in.u32();
  if (nbn != bns.size()) throw FormatError("checkpoint: batch-norm layer count mismatch");
  for (BatchNormLayer<float>* bn : bns) {
    if (in.u32() != bn->channels()) {
      throw FormatError("checkpoint: batch-norm channel count mismatch");
    }
    in.f32s(std::span<float>(bn->running_mean));
    in.f32s(std::span<float>(bn->running_var));
  }
  const std::uint64_t seed = in.u64();
  in.expect_end();

  Network net(expected_spec, seed);
  auto dst = net.parameters();
  auto src = scratch.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  auto dst_bn = net.batchnorm_layers();
  for (std::size_t i = 0; i < dst_bn.size(); ++i) {
    dst_bn[i]->running_mean = bns[i]->running_mean;
    dst_bn[i]->running_var = bns[i]->running_var;
  }
  net.set_mode(Mode::eval);
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path,
                        const NetworkSpec& expected_spec) {
  return deserialize_checkpoint(read_file(path), expected_spec);
}

}  // namespace dfss
