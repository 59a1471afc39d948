#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "flatbench/service.hpp"

using namespace flatbench;

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloth-flattening session server"};
  int port = 8080;
  std::string host = "127.0.0.1", config_file;
  app.add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
  app.add_option("--host", host, "bind address");
  app.add_option("--config", config_file, "service JSON: {\"run\": {...}, \"records_dir\": \"...\"}")
      ->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  try {
    ServiceConfig cfg;
    if (!config_file.empty()) cfg = service_config_from_json(read_json_file(config_file));
    SessionManager mgr(cfg);
    httplib::Server srv;
    install_routes(srv, mgr);
    g_server = &srv;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << port << std::endl;
    if (!srv.listen(host, port)) {
      std::cerr << "cannot listen on " << host << ":" << port << "\n";
      return 1;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
