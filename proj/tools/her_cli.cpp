#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "her/harness.hpp"

namespace {

// Exit codes: 0 success, 2 bad configuration, 3 missing file,
// 4 checkpoint mismatch, 5 runtime failure.
constexpr int kBadConfig = 2;
constexpr int kMissingFile = 3;
constexpr int kCheckpointMismatch = 4;
constexpr int kRuntime = 5;

her::StopCondition parse_stop_flag(const std::string& text,
                                   her::StopCondition base) {
  // Forms: max:N | eos:TARGET[:PERIODS] | stable:WINDOW
  std::istringstream is(text);
  std::string kind, a, b;
  std::getline(is, kind, ':');
  std::getline(is, a, ':');
  std::getline(is, b, ':');
  if (kind == "max" && !a.empty()) {
    base.kind = her::StopCondition::Kind::kMaxCycles;
    base.max_cycles = std::stoull(a);
  } else if (kind == "eos" && !a.empty()) {
    base.kind = her::StopCondition::Kind::kPerfectEos;
    base.eos_target = std::stod(a);
    if (!b.empty()) base.eos_periods = static_cast<std::uint32_t>(std::stoul(b));
  } else if (kind == "stable" && !a.empty()) {
    base.kind = her::StopCondition::Kind::kStabilityWindow;
    base.window = std::stoull(a);
  } else {
    throw her::ConfigError("bad --stop value: " + text);
  }
  return base;
}

int do_run(her::ExperimentSpec spec) {
  her::Runner runner(spec);
  const her::RunSummary summary = runner.run();
  std::cout << summary.to_json() << '\n';
  return 0;
}

int do_inspect(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw her::MissingFileError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string bytes = buf.str();
  her::BinReader r(bytes);
  try {
    const std::uint64_t magic = r.u64();
    if (magic != 0x3154504b43524548ull)
      throw her::CheckpointError("not a checkpoint file");
    std::cout << "version: " << r.u32() << '\n';
    std::cout << "config_digest: " << std::hex << r.u64() << std::dec << '\n';
    std::cout << "cortex_bytes: " << r.bytes().size() << '\n';
    std::cout << "source_bytes: " << r.bytes().size() << '\n';
    const std::uint64_t rungs = r.u64();
    std::cout << "rungs: " << rungs << '\n';
    for (std::uint64_t i = 0; i < rungs; ++i)
      std::cout << "  ledger[" << i << "]_bytes: " << r.bytes().size() << '\n';
    std::cout << "tracker_bytes: " << r.bytes().size() << '\n';
    std::cout << "encodings_bytes: " << r.bytes().size() << '\n';
    std::cout << "cycles: " << r.u64() << '\n';
    std::cout << "top_symbols: " << r.u64() << '\n';
    std::cout << "speculative_top_symbols: " << r.u64() << '\n';
    std::cout << "injections: " << r.u64() << '\n';
    std::cout << "forwards: " << r.u64() << '\n';
    std::cout << "mutes: " << r.u64() << '\n';
    std::cout << "mgn_suppressed: " << r.u64() << '\n';
    std::cout << "ripples: " << r.u64() << '\n';
    std::cout << "replay_deliveries: " << r.u64() << '\n';
  } catch (const std::out_of_range&) {
    throw her::CheckpointError("checkpoint file truncated or corrupt");
  }
  std::cout << "total_bytes: " << bytes.size() << '\n';
  return 0;
}

int do_gen_stream(const std::string& config_path, const std::string& out_path,
                  std::uint64_t items) {
  const her::ExperimentSpec spec = her::load_experiment_file(config_path);
  if (!spec.synthetic)
    throw her::ConfigError("gen-stream needs a synthetic input section");
  her::SyntheticStream stream(*spec.synthetic);
  if (items == 0) {
    if (spec.synthetic->repeats == 0)
      throw her::ConfigError(
          "gen-stream on an unbounded stream needs --items");
    items = stream.period_items() * spec.synthetic->repeats;
  }
  std::ofstream os(out_path);
  if (!os)
    throw her::MissingFileError("cannot open output file: " + out_path);
  her::write_stream_file(os, stream, items);
  if (!os) throw std::runtime_error("stream file write failed");
  std::cout << "wrote " << items << " items to " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical event recaller simulator"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, out_path, stop_flag, input_file;
  std::string checkpoint_out, trace_dir;
  std::uint64_t items = 0, max_cycles = 0, seed = 0;
  std::uint32_t threads = 0;
  bool seed_set = false, threads_set = false;

  CLI::App* run = app.add_subcommand("run", "stream input into a cortex");
  run->add_option("--config", config_path, "experiment JSON")->required();
  run->add_option("--seed", seed, "override master seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--input", input_file, "override input with a stream file");
  run->add_option("--checkpoint-in", checkpoint_path, "resume state");
  run->add_option("--checkpoint-out", checkpoint_out, "save state at stop");
  run->add_option("--trace-dir", trace_dir, "artifact directory");
  run->add_option("--threads", threads, "worker pool size (0 = all cores)")
      ->each([&](const std::string&) { threads_set = true; });
  run->add_option("--stop", stop_flag, "max:N | eos:X[:P] | stable:W");
  run->add_option("--max-cycles", max_cycles, "hard cycle cap");

  CLI::App* resume = app.add_subcommand("resume", "continue a checkpoint");
  resume->add_option("--config", config_path, "experiment JSON")->required();
  resume->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  resume->add_option("--checkpoint-out", checkpoint_out, "save state at stop");
  resume->add_option("--trace-dir", trace_dir, "artifact directory");
  resume->add_option("--stop", stop_flag, "max:N | eos:X[:P] | stable:W");
  resume->add_option("--max-cycles", max_cycles, "hard cycle cap");

  CLI::App* inspect = app.add_subcommand("inspect", "dump checkpoint stats");
  inspect->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  CLI::App* gen =
      app.add_subcommand("gen-stream", "materialize a synthetic stream");
  gen->add_option("--config", config_path, "experiment JSON with synthetic "
                                           "input")
      ->required();
  gen->add_option("--out", out_path, "output stream file")->required();
  gen->add_option("--items", items, "items to write (0 = full corpus)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || resume->parsed()) {
      her::ExperimentSpec spec = her::load_experiment_file(config_path);
      if (seed_set) spec.cortex.master_seed = seed;
      if (!input_file.empty()) {
        spec.synthetic.reset();
        spec.input_file = input_file;
      }
      if (!checkpoint_path.empty()) spec.checkpoint_in = checkpoint_path;
      if (!checkpoint_out.empty()) spec.checkpoint_out = checkpoint_out;
      if (!trace_dir.empty()) spec.trace_dir = trace_dir;
      if (threads_set) spec.threads = threads;
      if (!stop_flag.empty()) spec.stop = parse_stop_flag(stop_flag, spec.stop);
      if (max_cycles != 0) spec.stop.max_cycles = max_cycles;
      return do_run(std::move(spec));
    }
    if (inspect->parsed()) return do_inspect(checkpoint_path);
    if (gen->parsed()) return do_gen_stream(config_path, out_path, items);
  } catch (const her::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kCheckpointMismatch;
  } catch (const her::MissingFileError& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return kMissingFile;
  } catch (const her::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return 0;
}
