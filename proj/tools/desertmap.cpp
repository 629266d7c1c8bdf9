#include <dmap/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

enum ExitCode { kOk = 0, kBadArgs = 1, kIo = 2, kValidation = 3 };

dmap::io::PipelineConfig build_config(const std::string& config_path,
                                      const std::vector<std::string>& overrides) {
  dmap::io::PipelineConfig cfg;
  if (!config_path.empty())
    cfg = dmap::io::load_config(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    dmap::io::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  dmap::io::validate(cfg);
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Settlement mapping from satellite imagery: synthetic data, training, "
               "dense inference, vectorization and coverage analytics"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "config file (key = value lines)")
        ->check(CLI::ExistingFile);
    sub->add_option("-s,--set", overrides, "override a config key, key=value (repeatable)");
    sub->add_flag("--print-config", print_config, "print the effective config and exit");
  };

  std::vector<std::pair<CLI::App*, dmap::pipeline::Stage>> commands;
  for (const auto& stage : dmap::pipeline::stages()) {
    CLI::App* sub = app.add_subcommand(stage.name, std::string("run the ") + stage.name + " stage");
    add_common(sub);
    commands.emplace_back(sub, stage.run);
  }
  CLI::App* all = app.add_subcommand("pipeline", "run every stage in order");
  add_common(all);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kBadArgs;
  }

  try {
    const auto cfg = build_config(config_path, overrides);
    if (print_config) {
      std::cout << dmap::io::serialize_config(cfg);
      return kOk;
    }
    if (all->parsed()) {
      dmap::pipeline::run_all(cfg, [](const std::string& line) { std::cout << line << std::endl; });
      return kOk;
    }
    for (const auto& [sub, run] : commands)
      if (sub->parsed())
        std::cout << run(cfg) << std::endl;
    return kOk;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const dmap::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const dmap::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const dmap::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kValidation;
  } catch (const dmap::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kValidation;
  }
}
