#include "csteer/vector.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "csteer/checksum.hpp"
#include "csteer/error.hpp"

namespace csteer {

static_assert(std::endian::native == std::endian::little,
              "vector files are written as little-endian float32");

namespace {

constexpr std::string_view kMagic = "CSTEER-VEC/1";

std::string payload_checksum(const ContextualVector& v) {
  Fnv1a h;
  for (const auto& layer : v.deltas) h.update_values(std::span<const float>(layer));
  return h.hex();
}

}  // namespace

std::string to_string(VectorDesign d) {
  switch (d) {
    case VectorDesign::kReferVsNoRefer: return "ReferVsNoRefer";
    case VectorDesign::kMatchVsShuffle: return "MatchVsShuffle";
    case VectorDesign::kGtVsRollout: return "GtVsRollout";
    case VectorDesign::kRewriteVsRollout: return "RewriteVsRollout";
  }
  return "?";
}

VectorDesign parse_design(std::string_view s) {
  for (auto d : {VectorDesign::kReferVsNoRefer, VectorDesign::kMatchVsShuffle,
                 VectorDesign::kGtVsRollout, VectorDesign::kRewriteVsRollout}) {
    if (s == to_string(d)) return d;
  }
  throw ParseError("unknown vector design '" + std::string(s) + "'");
}

void validate_vector(const ContextualVector& v) {
  if (v.deltas.empty()) throw ConfigError("contextual vector has no layers");
  if (v.sample_count < 1) throw ConfigError("contextual vector sample_count must be >= 1");
  const auto d = v.deltas.front().size();
  if (d == 0) throw ConfigError("contextual vector has zero hidden size");
  for (std::size_t l = 0; l < v.deltas.size(); ++l) {
    if (v.deltas[l].size() != d) {
      throw ConfigError("layer " + std::to_string(l) + " has " +
                        std::to_string(v.deltas[l].size()) + " entries, expected " +
                        std::to_string(d));
    }
    for (float x : v.deltas[l]) {
      if (!std::isfinite(x)) throw ConfigError("non-finite delta at layer " + std::to_string(l));
    }
  }
}

void save_vector(const ContextualVector& v, const std::filesystem::path& path) {
  validate_vector(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  nlohmann::json header = {
      {"backbone", v.backbone_id},     {"layers", v.num_layers()},
      {"dim", v.hidden_size()},        {"design", to_string(v.design)},
      {"sample_count", v.sample_count}, {"dataset_id", v.dataset_id},
      {"payload_checksum", payload_checksum(v)},
  };
  out << kMagic << '\n' << header.dump() << '\n';
  for (const auto& layer : v.deltas) {
    out.write(reinterpret_cast<const char*>(layer.data()),
              static_cast<std::streamsize>(layer.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

ContextualVector load_vector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open vector file '" + path.string() + "'");
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kMagic) throw ParseError("'" + path.string() + "' is not a " + std::string(kMagic) + " file");
  std::getline(in, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt vector header: " + std::string(e.what()));
  }
  ContextualVector v;
  int layers = 0, dim = 0;
  std::string checksum;
  try {
    v.backbone_id = header.at("backbone").get<std::string>();
    layers = header.at("layers").get<int>();
    dim = header.at("dim").get<int>();
    v.design = parse_design(header.at("design").get<std::string>());
    v.sample_count = header.at("sample_count").get<int>();
    v.dataset_id = header.at("dataset_id").get<std::string>();
    checksum = header.at("payload_checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt vector header: " + std::string(e.what()));
  }
  if (layers < 1 || dim < 1) throw ParseError("vector header has invalid shape");
  v.deltas.assign(static_cast<std::size_t>(layers), std::vector<float>(static_cast<std::size_t>(dim)));
  for (int l = 0; l < layers; ++l) {
    auto& layer = v.deltas[static_cast<std::size_t>(l)];
    in.read(reinterpret_cast<char*>(layer.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(dim * sizeof(float))) {
      throw ParseError("vector file truncated at layer " + std::to_string(l) + " of " +
                       std::to_string(layers));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after vector payload");
  if (payload_checksum(v) != checksum) throw MismatchError("vector payload checksum mismatch");
  validate_vector(v);
  return v;
}

void check_compatible(const ContextualVector& v, const BackboneInfo& backbone) {
  if (v.num_layers() != backbone.num_layers || v.hidden_size() != backbone.hidden_size) {
    throw MismatchError("vector shape (L=" + std::to_string(v.num_layers()) +
                        ", d=" + std::to_string(v.hidden_size()) + ") does not match backbone (L=" +
                        std::to_string(backbone.num_layers) +
                        ", d=" + std::to_string(backbone.hidden_size) + ")");
  }
  if (!backbone.checksum.empty() && v.backbone_id != backbone.checksum) {
    throw MismatchError("vector was built on backbone " + v.backbone_id + ", not " +
                        backbone.checksum);
  }
}

ContextualVector load_vector_for(const std::filesystem::path& path, const BackboneInfo& backbone) {
  auto v = load_vector(path);
  check_compatible(v, backbone);
  return v;
}

}  // namespace csteer
