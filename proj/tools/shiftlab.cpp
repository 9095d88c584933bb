#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "shiftlab/harness.hpp"
#include "shiftlab/io_util.hpp"

namespace {

constexpr const char* kFooter =
    "Exit codes:\n"
    "  0  success\n"
    "  1  unexpected error\n"
    "  2  configuration error (bad key, bad value, constraint violation)\n"
    "  3  data error (bad dataset, pool exhaustion, malformed CSV)\n"
    "  4  runtime error during training or evaluation\n"
    "  5  I/O error\n"
    "\n"
    "Output directory resolution: --out, then output.dir from the config\n"
    "file, then the SHIFTLAB_OUT environment variable, then ./out.\n";

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) seeds.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shiftlab: adversarial domain adaptation, normalization layers "
               "and batch-mode active learning on a desk-scale training core"};
  app.footer(kFooter);
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_text;
  int workers = 1;

  for (const char* name : {"train", "al", "grid", "significance"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seeds", seeds_text, "comma-separated run seeds");
    sub->add_option("--workers", workers, "parallel worker slots");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    std::string config_text;
    if (!config_path.empty()) config_text = shiftlab::read_file(config_path);
    shiftlab::ExperimentConfig cfg = shiftlab::parse_config_text(config_text);

    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    } else if (!shiftlab::config_text_has_key(config_text, "output.dir")) {
      if (const char* env = std::getenv("SHIFTLAB_OUT")) cfg.out_dir = env;
    }
    if (!seeds_text.empty()) {
      cfg.seeds = parse_seed_list(seeds_text);
      shiftlab::validate_config(cfg);
    }
    return shiftlab::run_command(cfg, command, workers);
  } catch (const shiftlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return shiftlab::kExitConfig;
  } catch (const shiftlab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return shiftlab::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return shiftlab::kExitUnknown;
  }
}
