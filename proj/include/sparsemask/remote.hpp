#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "sparsemask/errors.hpp"
#include "sparsemask/oracle.hpp"

namespace sparsemask {

// Wire format for the scoring protocol.
//
//   POST /score  {"shape":[c,w,h], "data":[...floats] | "<base64 float32 LE>"}
//             -> {"scores":[...]} | {"labels":[[label, score], ...]}
//   GET  /meta  -> {"classes":K, "shape":[c,w,h]}
//
// `data` follows Image's channel-major order.
namespace wire {

inline constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::span<const unsigned char> in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{in[i]} << 16) | (std::uint32_t{in[i + 1]} << 8) | in[i + 2];
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += kBase64Alphabet[(v >> 6) & 63];
    out += kBase64Alphabet[v & 63];
  }
  if (i + 1 == in.size()) {
    const std::uint32_t v = std::uint32_t{in[i]} << 16;
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == in.size()) {
    const std::uint32_t v = (std::uint32_t{in[i]} << 16) | (std::uint32_t{in[i + 1]} << 8);
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += kBase64Alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& in) {
  auto sextet = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0) throw ProtocolError("base64 payload length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = in[i + k];
      int s = 0;
      if (c == '=' && i + 4 == in.size() && k >= 2) {
        ++pad;
      } else if (pad > 0 || (s = sextet(c)) < 0) {
        throw ProtocolError("invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(s);
    }
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(v >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v));
  }
  return out;
}

inline nlohmann::json encode_image(const Image& img, bool base64) {
  const Shape& s = img.shape();
  nlohmann::json j{{"shape", {s.channels, s.width, s.height}}};
  if (base64) {
    std::vector<unsigned char> bytes(4 * s.size());
    std::size_t k = 0;
    for (float v : img.data()) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) bytes[k++] = static_cast<unsigned char>((u >> (8 * b)) & 0xff);
    }
    j["data"] = base64_encode(bytes);
  } else {
    j["data"] = std::vector<float>(img.data().begin(), img.data().end());
  }
  return j;
}

inline Image decode_image(const nlohmann::json& j) {
  try {
    const auto dims = j.at("shape").get<std::vector<std::uint32_t>>();
    if (dims.size() != 3) throw ProtocolError("image shape must be [c, w, h]");
    const Shape s{dims[0], dims[1], dims[2]};
    const auto& data = j.at("data");
    std::vector<float> values;
    if (data.is_string()) {
      const auto bytes = base64_decode(data.get<std::string>());
      if (bytes.size() != 4 * s.size()) throw ProtocolError("base64 image payload does not match shape");
      values.resize(s.size());
      for (std::size_t k = 0; k < values.size(); ++k) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= std::uint32_t{bytes[4 * k + b]} << (8 * b);
        values[k] = std::bit_cast<float>(u);
      }
    } else {
      values = data.get<std::vector<float>>();
    }
    return Image(s, std::move(values));
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed image payload: ") + e.what());
  }
}

inline nlohmann::json encode_scores(const ScoreVector& v) {
  if (v.is_full()) return {{"scores", v.probabilities()}};
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : v.labeled()) labels.push_back({l.label, l.score});
  return {{"labels", labels}};
}

inline ScoreVector decode_scores(const nlohmann::json& j) {
  try {
    if (j.contains("scores")) return ScoreVector::full(j.at("scores").get<std::vector<double>>());
    if (j.contains("labels")) {
      std::vector<LabeledScore> out;
      for (const auto& e : j.at("labels")) {
        if (!e.is_array() || e.size() != 2) throw ProtocolError("label entry must be [label, score]");
        out.push_back({e[0].get<std::string>(), e[1].get<double>()});
      }
      return ScoreVector::partial(std::move(out));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed score response: ") + e.what());
  } catch (const DomainError& e) {
    throw ProtocolError(std::string("invalid score response: ") + e.what());
  }
  throw ProtocolError("score response has neither 'scores' nor 'labels'");
}

}  // namespace wire

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{30000};
};

/// Parsed http://host[:port][/prefix] endpoint.
struct Endpoint {
  std::string scheme_host_port;
  std::string prefix;

  static Endpoint parse(const std::string& url) {
    const auto sep = url.find("://");
    if (sep == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
    const auto path = url.find('/', sep + 3);
    Endpoint e;
    e.scheme_host_port = url.substr(0, path);
    e.prefix = path == std::string::npos ? "" : url.substr(path);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    return e;
  }
};

/// Scores served over HTTP. 5xx answers and connection failures are retried
/// with exponential backoff; 4xx answers and malformed bodies are not.
class RemoteModel : public ScoreModel {
 public:
  RemoteModel(Endpoint endpoint, Shape shape, std::size_t classes, RetryPolicy retry = {},
              std::string bearer_token = {}, bool base64 = false)
      : endpoint_(std::move(endpoint)),
        shape_(shape),
        classes_(classes),
        retry_(retry),
        token_(std::move(bearer_token)),
        base64_(base64) {}

  /// Reads shape and class count from GET /meta.
  static RemoteModel connect(const std::string& url, RetryPolicy retry = {}, std::string bearer_token = {},
                             bool base64 = false) {
    Endpoint e = Endpoint::parse(url);
    RemoteModel probe(e, Shape{}, 0, retry, bearer_token, base64);
    const auto meta = probe.fetch_meta();
    try {
      const auto dims = meta.at("shape").get<std::vector<std::uint32_t>>();
      if (dims.size() != 3) throw ProtocolError("/meta shape must be [c, w, h]");
      return RemoteModel(std::move(e), Shape{dims[0], dims[1], dims[2]}, meta.at("classes").get<std::size_t>(),
                         retry, std::move(bearer_token), base64);
    } catch (const nlohmann::json::exception& ex) {
      throw ProtocolError(std::string("malformed /meta response: ") + ex.what());
    }
  }

  nlohmann::json fetch_meta() const {
    const auto body = request("GET", "/meta", {});
    return parse_body(body);
  }

  ScoreVector evaluate(const Image& image) const override {
    const auto body = request("POST", "/score", wire::encode_image(image, base64_).dump());
    return wire::decode_scores(parse_body(body));
  }

  Shape input_shape() const override { return shape_; }
  std::size_t classes() const override { return classes_; }

 private:
  static nlohmann::json parse_body(const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
  }

  std::string request(const std::string& method, const std::string& path, const std::string& payload) const {
    httplib::Client client(endpoint_.scheme_host_port);
    client.set_connection_timeout(retry_.connect_timeout);
    client.set_read_timeout(retry_.read_timeout);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    const std::string target = endpoint_.prefix + path;
    std::string last_error;
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
      auto res = method == "GET" ? client.Get(target, headers)
                                 : client.Post(target, headers, payload, "application/json");
      if (res && res->status >= 200 && res->status < 300) return res->body;
      if (res && res->status >= 400 && res->status < 500)
        throw ProtocolError(method + " " + target + " rejected with HTTP " + std::to_string(res->status) + ": " +
                            res->body);
      last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (attempt < retry_.attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw TransportError(method + " " + endpoint_.scheme_host_port + target + " failed after " +
                             std::to_string(retry_.attempts) + " attempts: " + last_error,
                         retry_.attempts);
  }

  Endpoint endpoint_;
  Shape shape_;
  std::size_t classes_;
  RetryPolicy retry_;
  std::string token_;
  bool base64_;
};

}  // namespace sparsemask
