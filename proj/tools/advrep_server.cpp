#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "advrep/fixtures.hpp"
#include "advrep/http_service.hpp"

using namespace advrep;

namespace {
Service* g_service = nullptr;
void on_signal(int) {
  if (g_service) g_service->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advrep-server: adversarial reporting workflow service"};
  std::string config_path;
  std::optional<int> port;
  std::string host = "127.0.0.1";
  std::string port_file;
  bool seed_fixtures = false;
  bool harness_mode = false;
  app.add_option("--config", config_path, "JSON service config");
  app.add_option("--port", port, "listen port (0 picks a free port)");
  app.add_option("--host", host, "listen address");
  app.add_option("--port-file", port_file, "write the bound port to this file");
  app.add_flag("--seed-fixtures", seed_fixtures, "load the demo fixtures into an empty store");
  app.add_flag("--harness-mode", harness_mode, "honor the logical clock header");
  CLI11_PARSE(app, argc, argv);

  try {
    ServiceConfig cfg = config_path.empty() ? ServiceConfig{} : load_config(config_path);
    if (port) cfg.port = *port;
    cfg.harness_mode = cfg.harness_mode || harness_mode;
    if (seed_fixtures)
      for (const auto& s : fixtures::sessions()) cfg.sessions.push_back(s);

    auto keys = load_or_create_keys(cfg.key_store_path);
    auto durable = std::make_unique<DurableEngine>(std::make_unique<Engine>(cfg.engine, std::move(keys)),
                                                   std::make_unique<FileStorage>(cfg.persistence_path));
    const auto replayed = durable->replay();
    if (replayed == 0 && seed_fixtures) fixtures::seed(*durable);
    std::cerr << "replayed " << replayed << " journaled commands from " << cfg.persistence_path << "\n";

    Service service(cfg, std::move(durable));
    const int bound = service.bind(host, cfg.port);
    if (!port_file.empty()) {
      std::ofstream out(port_file + ".tmp");
      out << bound << "\n";
      out.close();
      std::rename((port_file + ".tmp").c_str(), port_file.c_str());
    }
    std::cout << "advrep-server listening on " << host << ":" << bound << std::endl;
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.run();
    return 0;
  } catch (const Error& e) {
    std::cerr << "advrep-server: " << e.code() << ": " << e.detail() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "advrep-server: " << e.what() << "\n";
    return 2;
  }
}
