#pragma once

// NNWB: little-endian binary container for network weights and tensors.
//
//   file    := "NNWB" u32:version(=1) u32:layer_count layer* trailer
//   layer   := string:name u8:kind header [tensor:weights tensor:bias]
//   header  := Conv2D: u32 kernel_h, kernel_w, in_channels, out_channels, stride, padding
//              Dense:  u32 in_features, out_features
//              others: (empty)
//   trailer := u32 H, u32 W, u32 C, u32:label_count string*
//   string  := u32:byte_length bytes (UTF-8)
//   tensor  := u32:rank u32:dim* f32:payload*
//
// Weights and bias follow only Conv2D and Dense layers. Padding is 0 = valid,
// 1 = same. The trailer carries the model input shape and class labels.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relprop/network.hpp"
#include "relprop/tensor.hpp"

namespace relprop::nnwb {

inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> encode_model(const NetworkModel& model);
/// Throws FormatError (with byte offset) for bad magic, truncation,
/// declaration/tensor mismatches and models that fail validation.
NetworkModel decode_model(std::span<const std::uint8_t> bytes, std::string id = {});

void save_weights(const NetworkModel& model, const std::filesystem::path& path);
/// Model id defaults to the file stem.
NetworkModel load_weights(const std::filesystem::path& path);

/// Bare tensor encoding (rank, dims, payload) with nothing around it.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

/// JSON topology sidecar:
///   {"weights": "<nnwb path, relative to the sidecar>", "input_shape": [H, W, C],
///    "class_labels": [...], "layers": [{"name", "kind", ...kind fields}]}
/// The layer list must agree with the declarations inside the NNWB file.
void save_topology_json(const NetworkModel& model, const std::filesystem::path& json_path,
                        const std::filesystem::path& weights_path);
NetworkModel load_topology_json(const std::filesystem::path& json_path);

/// Dispatches on extension: ".json" reads a sidecar, anything else NNWB.
NetworkModel load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace relprop::nnwb
