#include "dwnet/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dwnet/error.hpp"

namespace dwnet {

std::string format_double(double value) {
    if (!std::isfinite(value)) {
        throw ConfigError("cannot serialize non-finite value");
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
        text.remove_prefix(1);
    }
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
        text.remove_suffix(1);
    }
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
        throw ParseError("not a number: '" + std::string(text) + "'");
    }
    return value;
}

std::string doubles_to_csv(std::span<const double> values) {
    std::string out;
    out.reserve(values.size() * 24);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        out += format_double(values[i]);
    }
    return out;
}

std::vector<double> doubles_from_csv(std::string_view csv) {
    std::vector<double> out;
    if (csv.empty()) {
        return out;
    }
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = csv.find(',', start);
        const auto field = csv.substr(start, comma == std::string_view::npos ? csv.npos
                                                                             : comma - start);
        out.push_back(parse_double(field));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

Json tensor_to_json(const Tensor& t) {
    Json j;
    j["shape"] = t.shape();
    j["data"] = doubles_to_csv(t.data());
    return j;
}

Tensor tensor_from_json(const Json& j) {
    try {
        auto shape = j.at("shape").get<Shape>();
        auto data = doubles_from_csv(j.at("data").get<std::string>());
        return Tensor(std::move(shape), std::move(data));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("tensor record: ") + e.what());
    }
}

Json conv_to_json(const ConvLayer& layer) {
    Json j;
    j["type"] = "conv2d";
    j["stride"] = layer.stride;
    j["padding"] = layer.padding;
    j["weights"] = tensor_to_json(layer.weights);
    j["bias"] = tensor_to_json(layer.bias);
    return j;
}

ConvLayer conv_from_json(const Json& j) {
    ConvLayer layer;
    try {
        layer.stride = j.at("stride").get<std::array<std::size_t, 2>>();
        layer.padding = j.at("padding").get<std::array<std::size_t, 2>>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("conv2d record: ") + e.what());
    }
    layer.weights = tensor_from_json(j.at("weights"));
    layer.bias = tensor_from_json(j.at("bias"));
    require_rank(layer.weights, 4, "conv2d record weights");
    require_shape(layer.bias, {layer.weights.dim(0)}, "conv2d record bias");
    return layer;
}

Json dense_to_json(const DenseLayer& layer) {
    Json j;
    j["type"] = "dense";
    j["weights"] = tensor_to_json(layer.weights);
    j["bias"] = tensor_to_json(layer.bias);
    return j;
}

DenseLayer dense_from_json(const Json& j) {
    DenseLayer layer{tensor_from_json(j.at("weights")), tensor_from_json(j.at("bias"))};
    require_rank(layer.weights, 2, "dense record weights");
    require_shape(layer.bias, {layer.weights.dim(1)}, "dense record bias");
    return layer;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_string(std::string_view text) {
    return fnv1a64({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed) {
    return fnv1a64({reinterpret_cast<const unsigned char*>(values.data()),
                    values.size() * sizeof(double)},
                   seed);
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write file: " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace dwnet
