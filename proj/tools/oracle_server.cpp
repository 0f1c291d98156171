// Reference endpoint for the line protocol: serves a centroid classifier, an
// optional detector and the built-in segmenter over stdio or TCP.
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "irpert/defense.hpp"
#include "irpert/harness/harness.hpp"
#include "irpert/remote.hpp"

using namespace irpert;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw DataError(path + " is not valid JSON");
  return doc;
}

void serve_fd(int fd, const Oracle& oracle) {
  std::string buf;
  char chunk[65536];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0, nl;
    while ((nl = buf.find('\n', start)) != std::string::npos) {
      std::string line = buf.substr(start, nl - start);
      start = nl + 1;
      if (line.empty()) continue;
      const std::string reply = handle_request(line, oracle) + "\n";
      std::size_t sent = 0;
      while (sent < reply.size()) {
        const ssize_t w = ::send(fd, reply.data() + sent, reply.size() - sent, MSG_NOSIGNAL);
        if (w <= 0) {
          ::close(fd);
          return;
        }
        sent += static_cast<std::size_t>(w);
      }
    }
    buf.erase(0, start);
  }
  ::close(fd);
}

int serve_tcp(int port, std::shared_ptr<const Oracle> oracle) {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  if (srv < 0) throw TransportError("socket failed");
  const int one = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(srv, 16) != 0)
    throw TransportError("cannot listen on port " + std::to_string(port));
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  std::cout << "listening " << ntohs(addr.sin_port) << std::endl;
  for (;;) {
    const int fd = ::accept(srv, nullptr, nullptr);
    if (fd < 0) continue;
    std::thread([fd, oracle] { serve_fd(fd, *oracle); }).detach();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line-protocol oracle endpoint"};
  std::string model_path, detector_path, export_path;
  bool builtin = false, no_segment = false;
  int tcp_port = -1;
  double temperature = kDefaultTemperature;
  app.add_option("--model", model_path, "Centroid classifier JSON")->check(CLI::ExistingFile);
  app.add_option("--detector", detector_path, "Centroid crop model JSON for detection")->check(CLI::ExistingFile);
  app.add_flag("--builtin", builtin, "Train the default classifier and detector at startup");
  app.add_option("--temperature", temperature, "Softmax temperature for --builtin");
  app.add_option("--export-model", export_path, "With --builtin: write the classifier JSON and exit");
  app.add_flag("--no-segment", no_segment, "Answer segment requests with unsupported_op");
  app.add_option("--tcp", tcp_port, "Listen on 127.0.0.1:<port> (0 picks one) instead of stdio");
  CLI11_PARSE(app, argc, argv);

  try {
    std::shared_ptr<const Oracle> classifier, detector, segmenter;
    if (builtin) {
      RunConfig cfg;
      cfg.temperature = temperature;
      const Dataset train = load_data(cfg.train_data);
      const double mean_l = dataset_mean_lightness(train);
      auto model = std::make_shared<CentroidModel>(train_builtin_classifier(train, mean_l, temperature));
      if (!export_path.empty()) {
        std::ofstream out(export_path);
        out << model->to_json().dump() << '\n';
        return out ? 0 : 2;
      }
      classifier = model;
      detector = std::make_shared<BuiltinDetector>(train_builtin_detector(train, mean_l, temperature));
    }
    if (!model_path.empty()) classifier = std::make_shared<CentroidModel>(CentroidModel::from_json(read_json(model_path)));
    if (!detector_path.empty())
      detector = std::make_shared<BuiltinDetector>(CentroidModel::from_json(read_json(detector_path)));
    if (!no_segment) segmenter = std::make_shared<BuiltinSegmenter>();
    if (!classifier && !detector && !segmenter) {
      std::cerr << "no capability configured\n";
      return 1;
    }
    auto oracle = std::make_shared<CompositeOracle>(classifier, detector, segmenter);
    std::signal(SIGPIPE, SIG_IGN);
    if (tcp_port >= 0) return serve_tcp(tcp_port, oracle);
    std::ios::sync_with_stdio(false);
    serve_stream(std::cin, std::cout, *oracle);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "startup failed: " << e.what() << "\n";
    return 2;
  }
}
