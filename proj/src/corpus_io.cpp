#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dfss/corpus.hpp"
#include "dfss/io.hpp"

namespace dfss {
namespace {

using json = nlohmann::ordered_json;

constexpr char kImageMagic[8] = {'D', 'F', 'S', 'S', 'I', 'M', 'G', '1'};

std::filesystem::path payload_path_for(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  std::string stem = p.filename().string();
  const std::string suffix = ".json";
  if (stem.size() > suffix.size() &&
      stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
    stem.resize(stem.size() - suffix.size());
  }
  return p.replace_filename(stem + ".bin");
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& manifest_path) {
  static_assert(std::endian::native == std::endian::little);
  ByteWriter out;
  out.bytes(std::span<const char>(kImageMagic, 8));
  json entries = json::array();
  for (const ImageRecord& r : corpus.records) {
    if (r.height > 0xffff || r.width > 0xffff) {
      throw PreconditionError("write_corpus: image too large for u16 extents");
    }
    if (r.labels.has_value() != corpus.labeled) {
      throw PreconditionError("write_corpus: record " + std::to_string(r.id) +
                              " label presence disagrees with corpus");
    }
    entries.push_back({{"id", r.id},
                       {"stratum", stratum_name(r.stratum)},
                       {"seed", r.seed},
                       {"offset", out.size()}});
    out.u32(r.id);
    out.u8(static_cast<std::uint8_t>(r.stratum));
    out.u16(static_cast<std::uint16_t>(r.height));
    out.u16(static_cast<std::uint16_t>(r.width));
    out.f32s(r.pixels);
    if (r.labels) out.bytes(std::span<const std::uint8_t>(*r.labels));
  }
  const auto payload = payload_path_for(manifest_path);
  json m;
  m["name"] = corpus.name;
  m["record_count"] = corpus.records.size();
  m["labeled"] = corpus.labeled;
  m["height"] = corpus.height;
  m["width"] = corpus.width;
  m["proportions"] = {{"in_dist", corpus.proportions[0]},
                      {"shifted", corpus.proportions[1]},
                      {"ood", corpus.proportions[2]}};
  m["config_hash"] = corpus.config_hash;
  m["payload"] = payload.filename().string();
  m["entries"] = std::move(entries);
  const auto bytes = out.take();
  write_file(payload, bytes);
  write_text_file(manifest_path, m.dump(2) + "\n");
}

Corpus read_corpus(const std::filesystem::path& manifest_path) {
  json m;
  try {
    m = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
  Corpus corpus;
  std::vector<std::uint8_t> payload;
  try {
    corpus.name = m.at("name").get<std::string>();
    corpus.labeled = m.at("labeled").get<bool>();
    corpus.height = m.at("height").get<std::size_t>();
    corpus.width = m.at("width").get<std::size_t>();
    const auto& p = m.at("proportions");
    corpus.proportions = {p.at("in_dist").get<double>(), p.at("shifted").get<double>(),
                          p.at("ood").get<double>()};
    corpus.config_hash = m.at("config_hash").get<std::string>();
    const auto count = m.at("record_count").get<std::size_t>();
    const auto& entries = m.at("entries");
    if (entries.size() != count) {
      throw FormatError("manifest " + manifest_path.string() +
                        ": entry count differs from record_count");
    }
    const double total = corpus.proportions[0] + corpus.proportions[1] + corpus.proportions[2];
    if (std::abs(total - 1.0) > 1e-9) {
      throw FormatError("manifest " + manifest_path.string() + ": proportions do not sum to 1");
    }
    payload = read_file(manifest_path.parent_path() / m.at("payload").get<std::string>());
    ByteReader in(payload, "image payload");
    char magic[8];
    in.bytes(std::span<char>(magic, 8));
    if (std::memcmp(magic, kImageMagic, 8) != 0) {
      throw FormatError("image payload: bad magic bytes");
    }
    corpus.records.reserve(count);
    for (const auto& e : entries) {
      in.seek(e.at("offset").get<std::size_t>());
      ImageRecord r;
      r.id = in.u32();
      r.stratum = static_cast<Stratum>(in.u8());
      r.height = in.u16();
      r.width = in.u16();
      r.seed = e.at("seed").get<std::uint64_t>();
      if (r.id != e.at("id").get<std::uint32_t>() ||
          r.stratum != parse_stratum(e.at("stratum").get<std::string>())) {
        throw FormatError("image payload: record header disagrees with manifest entry " +
                          std::to_string(r.id));
      }
      r.pixels.resize(3 * r.height * r.width);
      in.f32s(r.pixels);
      if (corpus.labeled) {
        std::vector<std::uint8_t> labels(r.height * r.width);
        in.bytes(std::span<std::uint8_t>(labels));
        r.labels = std::move(labels);
      }
      corpus.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return corpus;
}

void export_ppm(const ImageRecord& record, const std::filesystem::path& path) {
  std::string out = "P6\n" + std::to_string(record.width) + " " +
                    std::to_string(record.height) + "\n255\n";
  const std::size_t plane = record.height * record.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const long v = std::lround(std::clamp(record.pixels[ch * plane + i], 0.0f, 1.0f) * 255.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  write_text_file(path, out);
}

}  // namespace dfss
