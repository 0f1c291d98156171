#include "irpert/remote.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>

namespace irpert {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool alpha = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/';
    const bool pad = c == '=' && i + 2 >= text.size() && (i + 1 == text.size() || text[i + 1] == '=');
    if (!alpha && !pad) throw ProtocolError("invalid base64 character");
  }
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload");
  // EVP_DecodeBlock keeps the padding bytes as zeros.
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string rle_encode(const BinaryMask& mask) {
  std::string out;
  std::uint8_t current = 0;
  std::size_t run = 0;
  for (std::uint8_t b : mask.bits()) {
    if (b == current) {
      ++run;
      continue;
    }
    out += std::to_string(run);
    out += ',';
    current = b;
    run = 1;
  }
  out += std::to_string(run);
  return out;
}

BinaryMask rle_decode(std::string_view rle, int width, int height) {
  BinaryMask mask(width, height);
  auto bits = mask.bits();
  std::size_t pos = 0;
  std::uint8_t value = 0;
  std::size_t i = 0;
  while (i <= rle.size()) {
    const std::size_t comma = std::min(rle.find(',', i), rle.size());
    const std::string_view tok = rle.substr(i, comma - i);
    std::size_t run = 0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), run);
    if (tok.empty() || ec != std::errc{} || end != tok.data() + tok.size())
      throw ProtocolError("malformed RLE token '" + std::string(tok) + "'");
    if (run > bits.size() - pos) throw ProtocolError("RLE runs exceed the mask size");
    std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1;
    i = comma + 1;
  }
  if (pos != bits.size()) throw ProtocolError("RLE runs do not cover the mask");
  return mask;
}

std::string encode_pixels(const RgbImage& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(3 * img.pixel_count());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) bytes.push_back(quantize(img.at(x, y, c)));
  return base64_encode(bytes);
}

RgbImage decode_pixels(std::string_view b64, int width, int height) {
  if (width < 1 || height < 1) throw ProtocolError("image dimensions must be positive");
  const auto bytes = base64_decode(b64);
  if (bytes.size() != 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ProtocolError("pixel payload does not match width x height x 3");
  RgbImage img(width, height);
  std::size_t i = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = bytes[i++];
  return img;
}

json make_request(long id, Capability op, const RgbImage& img) {
  return {{"id", id},
          {"op", std::string(capability_name(op))},
          {"width", img.width()},
          {"height", img.height()},
          {"pixels", encode_pixels(img)}};
}

namespace {

void check_envelope(const json& doc, long id) {
  if (!doc.is_object()) throw ProtocolError("response is not a JSON object");
  if (doc.contains("error")) {
    const std::string code = doc["error"].is_string() ? doc["error"].get<std::string>() : doc["error"].dump();
    if (code == "unsupported_op") throw CapabilityError("endpoint does not support the operation");
    throw ProtocolError("endpoint error: " + code);
  }
  if (!doc.contains("id") || !doc["id"].is_number_integer()) throw ProtocolError("response lacks an integer id");
  if (doc["id"].get<long>() != id)
    throw ProtocolError("response id " + std::to_string(doc["id"].get<long>()) + " does not match request id " +
                        std::to_string(id));
}

ProbSimplex probs_from(const json& arr) {
  if (!arr.is_array()) throw ProtocolError("probs is not an array");
  std::vector<double> p;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ProtocolError("probs entry is not a number");
    p.push_back(v.get<double>());
  }
  return ProbSimplex(std::move(p));  // validation raises ProtocolError
}

}  // namespace

ProbSimplex parse_classify_response(const json& doc, long id) {
  check_envelope(doc, id);
  if (!doc.contains("probs")) throw ProtocolError("classify response lacks probs");
  return probs_from(doc["probs"]);
}

DetectorOutput parse_detect_response(const json& doc, long id, double tau) {
  check_envelope(doc, id);
  if (!doc.contains("boxes") || !doc["boxes"].is_array()) throw ProtocolError("detect response lacks boxes");
  DetectorOutput out;
  out.tau = tau;
  for (const auto& b : doc["boxes"]) {
    if (!b.is_object()) throw ProtocolError("box is not an object");
    for (const char* k : {"x", "y", "w", "h"})
      if (!b.contains(k) || !b[k].is_number()) throw ProtocolError(std::string("box lacks numeric ") + k);
    if (!b.contains("probs")) throw ProtocolError("box lacks probs");
    Detection d{{b["x"].get<double>(), b["y"].get<double>(), b["w"].get<double>(), b["h"].get<double>()},
                probs_from(b["probs"])};
    if (d.probs.max() > tau) out.detections.push_back(std::move(d));
  }
  return out;
}

SegmentationResult parse_segment_response(const json& doc, long id, int width, int height) {
  check_envelope(doc, id);
  if (!doc.contains("masks") || !doc["masks"].is_array()) throw ProtocolError("segment response lacks masks");
  SegmentationResult out;
  out.width = width;
  out.height = height;
  for (const auto& m : doc["masks"]) {
    if (!m.is_string()) throw ProtocolError("mask is not an RLE string");
    out.masks.push_back(rle_decode(m.get<std::string>(), width, height));
  }
  return out;
}

namespace {

// Line reader over a file descriptor with a deadline per line.
class FdLineReader {
 public:
  explicit FdLineReader(int fd) : fd_(fd) {}

  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      const auto left =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError("oracle endpoint did not answer in time");
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) throw TimeoutError("oracle endpoint did not answer in time");
      char chunk[65536];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw TransportError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("oracle endpoint closed the connection");
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
};

void write_all(int fd, const std::string& data, bool socket) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = socket ? ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                             : ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

class ProcessTransport final : public Transport {
 public:
  explicit ProcessTransport(const std::string& command) {
    // A dead child must surface as EPIPE, not kill us.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw TransportError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError("pipe failed");
    }
    // Hold SIGTERM until the child has dropped the handlers it inherits, so
    // an early shutdown cannot run our handlers in the forked copy.
    sigset_t term, old;
    sigemptyset(&term);
    sigaddset(&term, SIGTERM);
    ::pthread_sigmask(SIG_BLOCK, &term, &old);
    pid_ = ::fork();
    if (pid_ == 0) {
      ::signal(SIGTERM, SIG_DFL);
      ::signal(SIGPIPE, SIG_DFL);
      ::pthread_sigmask(SIG_SETMASK, &old, nullptr);
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::pthread_sigmask(SIG_SETMASK, &old, nullptr);
    if (pid_ < 0) throw TransportError("fork failed");
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_ = to_child[1];
    out_ = from_child[0];
    reader_ = std::make_unique<FdLineReader>(out_);
  }

  ~ProcessTransport() override {
    ::close(in_);
    ::close(out_);
    ::kill(pid_, SIGTERM);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

  void send_line(const std::string& line) override { write_all(in_, line + "\n", false); }
  std::string recv_line(std::chrono::milliseconds timeout) override { return reader_->read_line(timeout); }

 private:
  pid_t pid_ = -1;
  int in_ = -1, out_ = -1;
  std::unique_ptr<FdLineReader> reader_;
};

class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(int fd) : fd_(fd), reader_(fd) {}
  ~SocketTransport() override { ::close(fd_); }

  void send_line(const std::string& line) override { write_all(fd_, line + "\n", true); }
  std::string recv_line(std::chrono::milliseconds timeout) override { return reader_.read_line(timeout); }

 private:
  int fd_;
  FdLineReader reader_;
};

}  // namespace

std::unique_ptr<Transport> spawn_process(const std::string& command) {
  return std::make_unique<ProcessTransport>(command);
}

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
    throw TransportError("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + service);
  return std::make_unique<SocketTransport>(fd);
}

RemoteOracle::RemoteOracle(std::unique_ptr<Transport> transport, RemoteOptions opt)
    : transport_(std::move(transport)), opt_(std::move(opt)) {
  if (!transport_) throw UsageError("remote oracle needs a transport");
  if (opt_.capabilities.empty()) throw UsageError("remote oracle needs at least one capability");
  if (opt_.timeout.count() <= 0) throw UsageError("remote oracle timeout must be positive");
}

std::unique_ptr<Transport> open_transport(const std::string& spec) {
  if (spec.rfind("exec:", 0) == 0) {
    const std::string cmd = spec.substr(5);
    if (cmd.empty()) throw UsageError("exec: oracle needs a command");
    return spawn_process(cmd);
  }
  if (spec.rfind("tcp:", 0) == 0) {
    const std::string addr = spec.substr(4);
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0) throw UsageError("tcp: oracle needs host:port");
    int port = 0;
    const std::string p = addr.substr(colon + 1);
    const auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
    if (ec != std::errc{} || end != p.data() + p.size() || port < 1 || port > 65535)
      throw UsageError("invalid port in '" + spec + "'");
    return connect_tcp(addr.substr(0, colon), port);
  }
  throw UsageError("unknown oracle spec '" + spec + "'");
}

std::unique_ptr<RemoteOracle> RemoteOracle::connect(const std::string& spec, RemoteOptions opt) {
  return std::make_unique<RemoteOracle>(open_transport(spec), std::move(opt));
}

json RemoteOracle::round_trip(Capability op, const RgbImage& image, long& id) const {
  if (!supports(op)) throw CapabilityError("endpoint is not configured for " + std::string(capability_name(op)));
  std::lock_guard lock(mu_);
  if (broken_) throw TransportError("endpoint stream is out of sync after an earlier failure");
  id = next_id_++;
  try {
    transport_->send_line(make_request(id, op, image).dump());
    const std::string line = transport_->recv_line(opt_.timeout);
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      broken_ = true;
      throw ProtocolError("response is not valid JSON");
    }
    return doc;
  } catch (const TimeoutError&) {
    broken_ = true;
    throw;
  } catch (const TransportError&) {
    broken_ = true;
    throw;
  }
}

ProbSimplex RemoteOracle::classify(const RgbImage& image) const {
  long id = 0;
  const json doc = round_trip(Capability::classify, image, id);
  return parse_classify_response(doc, id);
}

DetectorOutput RemoteOracle::detect(const RgbImage& image, double tau) const {
  long id = 0;
  const json doc = round_trip(Capability::detect, image, id);
  return parse_detect_response(doc, id, tau);
}

SegmentationResult RemoteOracle::segment(const RgbImage& image) const {
  long id = 0;
  const json doc = round_trip(Capability::segment, image, id);
  return parse_segment_response(doc, id, image.width(), image.height());
}

std::string handle_request(const std::string& line, const Oracle& oracle, double detect_tau) {
  json id = nullptr;
  auto error = [&](const std::string& code) { return json{{"id", id}, {"error", code}}.dump(); };
  const json req = json::parse(line, nullptr, false);
  if (req.is_discarded() || !req.is_object()) return error("malformed_json");
  if (req.contains("id") && req["id"].is_number_integer()) id = req["id"];
  if (id.is_null()) return error("missing_id");
  if (!req.contains("op") || !req["op"].is_string()) return error("missing_op");
  const std::string op = req["op"].get<std::string>();
  Capability cap;
  if (op == "classify")
    cap = Capability::classify;
  else if (op == "detect")
    cap = Capability::detect;
  else if (op == "segment")
    cap = Capability::segment;
  else
    return error("unknown_op");
  if (!oracle.supports(cap)) return error("unsupported_op");
  if (!req.contains("width") || !req["width"].is_number_integer() || !req.contains("height") ||
      !req["height"].is_number_integer() || !req.contains("pixels") || !req["pixels"].is_string())
    return error("bad_image");
  RgbImage img;
  try {
    img = decode_pixels(req["pixels"].get<std::string>(), req["width"].get<int>(), req["height"].get<int>());
  } catch (const Error&) {
    return error("bad_image");
  }
  try {
    json resp{{"id", id}};
    switch (cap) {
      case Capability::classify: {
        const auto res = oracle.resolution();
        const RgbImage in = res && (res->first != img.width() || res->second != img.height())
                                ? resize_bilinear(img, res->first, res->second)
                                : img;
        resp["probs"] = oracle.classify(in).probs();
        break;
      }
      case Capability::detect: {
        json boxes = json::array();
        for (const auto& d : oracle.detect(img, detect_tau).detections)
          boxes.push_back({{"x", d.bbox.x}, {"y", d.bbox.y}, {"w", d.bbox.w}, {"h", d.bbox.h}, {"probs", d.probs.probs()}});
        resp["boxes"] = std::move(boxes);
        break;
      }
      case Capability::segment: {
        json masks = json::array();
        for (const auto& m : oracle.segment(img).masks) masks.push_back(rle_encode(m));
        resp["masks"] = std::move(masks);
        break;
      }
    }
    return resp.dump();
  } catch (const std::exception&) {
    return error("model_failure");
  }
}

void serve_stream(std::istream& in, std::ostream& out, const Oracle& oracle) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_request(line, oracle) << '\n' << std::flush;
  }
}

}  // namespace irpert
