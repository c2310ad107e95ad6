#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "her/cortex.hpp"
#include "her/metrics.hpp"
#include "her/periphery.hpp"
#include "her/serialize.hpp"

namespace her {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StopCondition {
  enum class Kind : std::uint8_t {
    kMaxCycles = 0,
    kPerfectEos = 1,     // every rung's ratio reaches eos_target
    kStabilityWindow = 2  // every column known for a whole window
  };
  Kind kind = Kind::kMaxCycles;
  std::uint64_t max_cycles = 10000;  // hard cap in every mode
  std::uint64_t min_cycles = 0;      // burn-in before the rule is consulted
                                     // (a silent ledger scores a vacuous 1.0)
  double eos_target = 0.95;
  std::uint32_t eos_periods = 2;   // consecutive periods compared
  std::uint64_t window = 1000;     // stability window length, cycles
};

struct ExperimentSpec {
  CortexConfig cortex;
  std::optional<StreamSpec> synthetic;  // exactly one input source
  std::string input_file;
  StopCondition stop;
  std::string checkpoint_in;
  std::string checkpoint_out;
  std::string trace_dir;
  std::uint64_t load_sample_every = 1000;
  std::uint32_t threads = 1;  // 0 = available parallelism
};

// JSON codec. Parsing validates shape and the one-source rule; engine-level
// validation happens when the cortex is built.
ExperimentSpec parse_experiment(const std::string& json_text);
std::string experiment_to_json(const ExperimentSpec& spec);
ExperimentSpec load_experiment_file(const std::string& path);

// Digest over the semantic part of a spec (cortex + input, not plumbing);
// checkpoints refuse to load under a different digest.
std::uint64_t config_digest(const ExperimentSpec& spec);

// Uniform pull interface over the two input sources.
class InputSource {
 public:
  virtual ~InputSource() = default;
  virtual std::vector<TaggedSdr> next() = 0;
  virtual bool exhausted() const = 0;
  virtual std::uint64_t consumed() const = 0;
  virtual std::uint64_t period_items() const = 0;
  virtual std::uint32_t flows() const = 0;
  virtual std::uint32_t width() const = 0;
  virtual std::uint32_t n_streams() const = 0;
  virtual void save(BinWriter& w) const = 0;
  virtual void load(BinReader& r) = 0;
};

std::unique_ptr<InputSource> make_synthetic_source(const StreamSpec& spec);
std::unique_ptr<InputSource> make_file_source(const std::string& path);

// Stream files: plain text, `her-stream 1 flows=F width=W period=P
// streams=S` header, then one `sid off sdr [sdr ...]` line per item.
void write_stream_file(std::ostream& os, SyntheticStream& stream,
                       std::uint64_t items);

struct RunSummary {
  std::uint64_t cycles = 0;
  std::string stop_reason;  // max-cycles | perfect-eos | stability |
                            // input-exhausted
  std::vector<std::uint64_t> rung_load;
  std::uint64_t total_load = 0;
  std::vector<double> perfect_eos;  // per rung; NaN until measurable
  std::vector<double> known_ratio;
  std::vector<double> stable_ratio;
  std::uint64_t top_symbols = 0;
  std::uint64_t speculative_top_symbols = 0;
  double forwarding_ratio = 0.0;  // speculative share of top-rung output
  std::uint64_t injections = 0;
  std::uint64_t forwards = 0;
  std::uint64_t mutes = 0;
  std::uint64_t mgn_suppressed = 0;
  std::uint64_t ripples = 0;
  std::uint64_t replay_deliveries = 0;
  std::string to_json() const;
};

// Owns one cortex plus its input source and metric taps; drives the cycle
// loop until the stop condition, then writes artifacts.
class Runner {
 public:
  static constexpr std::uint32_t kCheckpointVersion = 1;

  explicit Runner(const ExperimentSpec& spec);  // honors spec.checkpoint_in

  RunSummary run();  // stream until stop; writes artifacts if configured
  void step_cycles(std::uint64_t n);  // manual drive, no stop evaluation
  RunSummary summary() const;

  const Cortex& cortex() const { return *cortex_; }
  Cortex& cortex() { return *cortex_; }
  const InputSource& source() const { return *source_; }
  const EosLedger& ledger(std::uint32_t rung) const { return ledgers_[rung]; }
  const EncodingAccumulator& encodings() const { return acc_; }
  std::uint64_t cycles() const { return cycles_; }

  // Per-rung ratio over the trailing stop.eos_periods periods; NaN while
  // not yet measurable.
  std::vector<double> perfect_eos_now() const;

  void save_checkpoint(std::ostream& os) const;
  void save_checkpoint_file(const std::string& path) const;
  void write_artifacts() const;  // trace_dir must be set

 private:
  void ingest(const CycleReport& rep);
  bool stop_satisfied(std::string& reason) const;
  void load_checkpoint(const std::string& path);

  ExperimentSpec spec_;
  std::unique_ptr<Cortex> cortex_;
  std::unique_ptr<InputSource> source_;
  std::vector<EosLedger> ledgers_;
  StabilityTracker tracker_;
  EncodingAccumulator acc_;
  std::vector<LoadSample> load_samples_;
  std::vector<StabilitySample> stability_samples_;
  std::vector<double> last_window_known_;
  std::vector<double> last_window_stable_;
  bool have_window_ = false;
  std::uint64_t cycles_ = 0;
  std::uint64_t top_symbols_ = 0;
  std::uint64_t speculative_top_ = 0;
  std::uint64_t injections_ = 0;
  std::uint64_t forwards_ = 0;
  std::uint64_t mutes_ = 0;
  std::uint64_t mgn_suppressed_ = 0;
  std::uint64_t ripples_ = 0;
  std::uint64_t deliveries_ = 0;
  std::string stop_reason_;
  int trace_level_ = 0;
};

}  // namespace her
