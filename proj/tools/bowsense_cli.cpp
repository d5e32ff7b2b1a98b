#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "bowsense/app/annotation_api.hpp"
#include "bowsense/app/config.hpp"
#include "bowsense/app/pipeline.hpp"
#include "bowsense/app/session_io.hpp"
#include "bowsense/neural_nets.hpp"

namespace {

bowsense::app::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int serve(const bowsense::app::PipelineConfig& cfg, const std::string& static_dir) {
  bowsense::app::AnnotationService service(cfg.data_path(), cfg.smooth_window);
  bowsense::app::HttpServer server(service);
  if (!static_dir.empty() && !server.mount_static(static_dir)) {
    std::cerr << "error: cannot serve static files from " << static_dir << "\n";
    return bowsense::app::kExitBadConfig;
  }
  const int port = server.bind(cfg.host, static_cast<int>(cfg.port));
  std::cout << "label-serve: " << service.session_ids().size() << " sessions on http://" << cfg.host << ":" << port
            << "/api/sessions" << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bowsense::app;

  CLI::App app{"bowsense: archery motion-phase and stress pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "JSON config file; flags override it")->check(CLI::ExistingFile);

  const auto& keys = PipelineConfig::keys();
  std::vector<std::string> values(keys.size());
  std::vector<CLI::Option*> options;
  const PipelineConfig defaults;
  const auto default_json = defaults.to_json();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& d = default_json.at(keys[i]);
    const std::string shown = d.is_string() ? d.get<std::string>() : d.dump();
    options.push_back(app.add_option("--" + keys[i], values[i], "default: " + shown)->group("Pipeline"));
  }

  std::string static_dir;
  std::map<std::string, CLI::App*> commands;
  const std::map<std::string, std::string> help = {
      {"synth", "generate synthetic sessions with ground-truth labels into data_dir"},
      {"preprocess", "compute accelerometer channels and corrected RR series"},
      {"build-dataset", "window, label, balance and split the motion and stress datasets"},
      {"train-motion", "train the motion-phase LSTM"},
      {"train-stress", "train the stress MLP"},
      {"eval-motion", "evaluate the motion model and write detected events"},
      {"eval-stress", "evaluate the stress model"},
      {"report", "combine evaluation reports"},
  };
  for (const auto& name : stage_names()) commands[name] = app.add_subcommand(name, help.at(name));
  auto* label_serve = app.add_subcommand("label-serve", "serve the annotation HTTP API");
  label_serve->add_option("--static", static_dir, "directory with a built annotation frontend");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::map<std::string, std::string> overrides;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (options[i]->count() > 0) overrides[keys[i]] = values[i];
  }

  PipelineConfig cfg;
  try {
    const std::filesystem::path path = config_file;
    cfg = load_config(config_file.empty() ? nullptr : &path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  }

  try {
    if (label_serve->parsed()) return serve(cfg, static_dir);
    for (const auto& [name, sub] : commands) {
      if (!sub->parsed()) continue;
      const auto result = run_stage(cfg, name);
      std::cout << name << ": " << result.summary << "\n";
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code();
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailed;
  }
  return kExitStageFailed;
}
