#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwnet/nn.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet {

using Json = nlohmann::ordered_json;

// Parameter tensors are stored as JSON objects {"shape": [...], "data": "v0,v1,..."}
// where data is a flat CSV string of 17-significant-digit decimals. Reading the
// string back with from_chars recovers every double bit-for-bit.

std::string format_double(double value);
double parse_double(std::string_view text);

std::string doubles_to_csv(std::span<const double> values);
std::vector<double> doubles_from_csv(std::string_view csv);

Json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const Json& j);

Json conv_to_json(const ConvLayer& layer);
ConvLayer conv_from_json(const Json& j);
Json dense_to_json(const DenseLayer& layer);
DenseLayer dense_from_json(const Json& j);

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_string(std::string_view text);
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed);
std::string hex64(std::uint64_t value);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace dwnet
