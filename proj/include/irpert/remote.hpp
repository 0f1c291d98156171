#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "irpert/oracle.hpp"

namespace irpert {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ProtocolError on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Comma-separated run lengths over the row-major mask; the first run counts
// zeros (and may be 0).
std::string rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(std::string_view rle, int width, int height);

// Row-major RGB8 after quantization, base64 encoded.
std::string encode_pixels(const RgbImage& img);
RgbImage decode_pixels(std::string_view b64, int width, int height);

nlohmann::json make_request(long id, Capability op, const RgbImage& img);

// Response parsers check the id and the payload shape. An "error" field
// becomes CapabilityError for "unsupported_op", ProtocolError otherwise.
ProbSimplex parse_classify_response(const nlohmann::json& doc, long id);
// Boxes whose top probability does not exceed tau are dropped.
DetectorOutput parse_detect_response(const nlohmann::json& doc, long id, double tau);
SegmentationResult parse_segment_response(const nlohmann::json& doc, long id, int width, int height);

// One line-oriented duplex channel.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send_line(const std::string& line) = 0;
  // Throws TimeoutError when no full line arrives in time, TransportError
  // when the peer has gone away.
  virtual std::string recv_line(std::chrono::milliseconds timeout) = 0;
};

// Runs `/bin/sh -c command` with its stdin/stdout as the channel.
std::unique_ptr<Transport> spawn_process(const std::string& command);
std::unique_ptr<Transport> connect_tcp(const std::string& host, int port);

// "exec:<command>" or "tcp:<host>:<port>".
std::unique_ptr<Transport> open_transport(const std::string& spec);

struct RemoteOptions {
  std::set<Capability> capabilities{Capability::classify, Capability::detect, Capability::segment};
  std::chrono::milliseconds timeout{30000};
  std::optional<std::pair<int, int>> resolution;
};

class RemoteOracle final : public Oracle {
 public:
  RemoteOracle(std::unique_ptr<Transport> transport, RemoteOptions opt = {});

  // "exec:<command>" or "tcp:<host>:<port>".
  static std::unique_ptr<RemoteOracle> connect(const std::string& spec, RemoteOptions opt = {});

  bool supports(Capability cap) const override { return opt_.capabilities.count(cap) > 0; }
  ProbSimplex classify(const RgbImage& image) const override;
  DetectorOutput detect(const RgbImage& image, double tau) const override;
  SegmentationResult segment(const RgbImage& image) const override;
  std::optional<std::pair<int, int>> resolution() const override { return opt_.resolution; }

 private:
  nlohmann::json round_trip(Capability op, const RgbImage& image, long& id) const;

  std::unique_ptr<Transport> transport_;
  RemoteOptions opt_;
  mutable std::mutex mu_;
  mutable long next_id_ = 1;
  // A timed-out or garbled exchange leaves the stream out of sync.
  mutable bool broken_ = false;
};

// Server side: answers one request line. Never throws; malformed input
// yields {"id": ..., "error": "<code>"} with id null when unreadable.
std::string handle_request(const std::string& line, const Oracle& oracle, double detect_tau = 1e-9);

// Answers lines from `in` until EOF.
void serve_stream(std::istream& in, std::ostream& out, const Oracle& oracle);

}  // namespace irpert
