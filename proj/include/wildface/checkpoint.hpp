#pragma once

// Parameter checkpoint layout:
//   bytes 0..7   header length N, unsigned 64-bit little-endian
//   bytes 8..N+7 UTF-8 JSON header: format tag, dims, share_head, tensor
//                table (name + shape, in payload order), optional train config
//   remainder    every tensor's values as little-endian IEEE-754 doubles,
//                concatenated in header order

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildface/error.hpp"
#include "wildface/fam.hpp"
#include "wildface/train.hpp"

namespace wildface {

inline constexpr std::string_view kCheckpointFormat = "wildface-fam";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_u64_le(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// Scalars (biases, batch-norm state) are stored as rank-0-like 1-element tensors.
template <typename Params>
auto checkpoint_layout(Params& p, std::vector<Tensor>& scalars) {
  std::vector<NamedTensor> out = {{"fusion", &p.fusion}, {"se_w1", &p.se_w1}, {"se_b1", &p.se_b1},
                                  {"se_w2", &p.se_w2},   {"se_b2", &p.se_b2}};
  scalars.clear();
  scalars.reserve(10);
  for (auto* h : {&p.fused_head, &p.body_head}) {
    const std::string prefix = h == &p.fused_head ? "fused_head." : "body_head.";
    out.push_back({prefix + "fc_w", &h->fc_w});
    for (const char* field : {"fc_b", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"}) {
      scalars.emplace_back(Shape{1});
      out.push_back({prefix + field, &scalars.back()});
    }
  }
  return out;
}

template <typename Head>
auto head_scalars(Head& h) {
  return std::array<double*, 5>{&h.fc_b, &h.bn_gamma, &h.bn_beta, &h.bn_running_mean, &h.bn_running_var};
}

}  // namespace detail

inline std::string encode_checkpoint(const FamParams& params, const std::optional<TrainConfig>& config = {}) {
  params.validate();
  FamParams p = params;
  std::vector<Tensor> scalars;
  const auto layout = detail::checkpoint_layout(p, scalars);
  std::size_t s = 0;
  for (auto* h : {&p.fused_head, &p.body_head})
    for (double* v : detail::head_scalars(*h)) scalars[s++][0] = *v;

  nlohmann::ordered_json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["dims"] = {{"channels", p.dims.channels},
                    {"height", p.dims.height},
                    {"width", p.dims.width},
                    {"reduction", p.dims.reduction}};
  header["share_head"] = p.share_head;
  auto table = nlohmann::ordered_json::array();
  for (const auto& nt : layout) table.push_back({{"name", nt.name}, {"shape", nt.tensor->shape()}});
  header["tensors"] = table;
  if (config) {
    nlohmann::ordered_json cfg;
    to_json(cfg, *config);
    header["train_config"] = cfg;
  }
  const std::string head = header.dump();

  std::string out;
  detail::put_u64_le(out, head.size());
  out += head;
  for (const auto& nt : layout) {
    for (double v : nt.tensor->values()) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

struct Checkpoint {
  FamParams params;
  std::optional<TrainConfig> config;
};

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(Errc::parse, "checkpoint truncated before header length");
  const std::uint64_t head_len = detail::get_u64_le(bytes);
  if (head_len > bytes.size() - 8) throw Error(Errc::parse, "checkpoint header length exceeds file size");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(8, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    if (header.at("format").get<std::string>() != kCheckpointFormat) throw Error(Errc::parse, "not a FAM checkpoint");
    if (header.at("version").get<int>() != kCheckpointVersion) throw Error(Errc::parse, "unsupported version");
    const auto& d = header.at("dims");
    FamDims dims{d.at("channels").get<std::size_t>(), d.at("height").get<std::size_t>(),
                 d.at("width").get<std::size_t>(), d.at("reduction").get<std::size_t>()};
    ck.params = FamParams::zeros(dims, header.at("share_head").get<bool>());
    std::vector<Tensor> scalars;
    const auto layout = detail::checkpoint_layout(ck.params, scalars);
    const auto& table = header.at("tensors");
    if (table.size() != layout.size()) throw Error(Errc::parse, "checkpoint tensor table has wrong length");

    std::string_view payload = bytes.substr(8 + head_len);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& entry = table[i];
      if (entry.at("name").get<std::string>() != layout[i].name ||
          entry.at("shape").get<Shape>() != layout[i].tensor->shape()) {
        throw Error(Errc::parse, "checkpoint tensor " + std::to_string(i) + " does not match the expected layout");
      }
      for (double& v : layout[i].tensor->values()) {
        if (payload.size() < 8) throw Error(Errc::parse, "checkpoint payload truncated");
        v = std::bit_cast<double>(detail::get_u64_le(payload));
        payload.remove_prefix(8);
      }
    }
    if (!payload.empty()) throw Error(Errc::parse, "trailing bytes after checkpoint payload");
    std::size_t s = 0;
    for (auto* h : {&ck.params.fused_head, &ck.params.body_head})
      for (double* v : detail::head_scalars(*h)) *v = scalars[s++][0];
    if (header.contains("train_config")) {
      TrainConfig cfg;
      from_json(header["train_config"], cfg);
      ck.config = cfg;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("checkpoint header: ") + e.what());
  }
  ck.params.validate();
  return ck;
}

inline void save_checkpoint(const std::string& path, const FamParams& params,
                            const std::optional<TrainConfig>& config = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io, "cannot open " + path + " for writing");
  const std::string bytes = encode_checkpoint(params, config);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(Errc::io, "failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace wildface
