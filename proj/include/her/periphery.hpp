#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "her/rng.hpp"
#include "her/sdr.hpp"
#include "her/serialize.hpp"

namespace her {

// Slow automatic gain control for one frequency band: a negative-feedback
// controller nudging the binarization threshold until the band's long-run
// emitted activity sits inside [act_tdown, act_tup]. Inside the band the
// threshold freezes (hysteresis). Note the low branch *lowers* the
// threshold: the source formula's sign there is a positive feedback loop as
// written, so it is corrected here to keep the controller stable.
struct MocrParams {
  double k_step = 4e-5;        // per-update relative threshold step
  double act_tup = 14.0;       // activity ceiling, bits
  double act_tdown = 13.0;     // activity floor, bits
  double alpha_act = 4e-5;     // EMA coefficient (~25 s of 1 ms updates)
};

struct MocrState {
  double thr = 0.5;
  double act_ema = 0.0;
};

// Fold one emitted-activity observation into the state; returns the new
// threshold.
double mocr_update(MocrState& state, double act_now, const MocrParams& p);

// Dual-rail codeword pair for one band: silence is a small fixed set nested
// inside the larger active set, so turning the band on only adds bits
// (intensity-monotone coding) and downstream expectations always overlap
// whichever rail is emitted.
struct DrCode {
  Sdr ones_set;
  Sdr zeros_set;
};

DrCode make_dr_code(std::uint32_t width, std::uint32_t ones_bits,
                    std::uint32_t zeros_bits, RngStream& rng);

struct EncoderConfig {
  std::uint32_t bands = 0;
  std::uint32_t code_width = 121;
  std::uint32_t ones_bits = 40;
  std::uint32_t zeros_bits = 10;
  double initial_thr = 0.5;
  MocrParams mocr;
  std::uint64_t master_seed = 1;
};

// Per-band binarization front-end: energy >= threshold selects the ones
// rail, otherwise the zeros rail; the emitted bit count then drives the
// band's gain controller. Codewords are fixed at construction.
class AuditoryEncoder {
 public:
  explicit AuditoryEncoder(const EncoderConfig& cfg);

  // One frame of per-band energies -> one codeword per band.
  std::vector<Sdr> encode(const std::vector<double>& energies);

  std::uint32_t bands() const { return cfg_.bands; }
  const MocrState& mocr(std::uint32_t band) const { return states_[band]; }
  const DrCode& code(std::uint32_t band) const { return codes_[band]; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  EncoderConfig cfg_;
  std::vector<DrCode> codes_;
  std::vector<MocrState> states_;
};

struct DcnConfig {
  std::uint32_t input_width = 0;
  std::uint32_t output_width = 0;
  double receptive_fraction = 0.10;  // inputs visible to each output
  double sparsity = 0.02;            // winners per projection
};

// Non-plastic sparsifier between the encoder and the first rung: every
// output bit sees a fixed random subset of the input and the most-driven
// outputs win. Stateless after construction, so replayed or repeated inputs
// project identically.
class DcnProjector {
 public:
  DcnProjector(const DcnConfig& cfg, std::uint64_t master_seed,
               const std::string& rng_path);

  Sdr project(const Sdr& input) const;

  std::uint32_t k() const { return k_; }
  std::uint32_t output_width() const { return cfg_.output_width; }
  const std::vector<std::uint32_t>& receptive_field(std::uint32_t out) const {
    return fields_[out];
  }

 private:
  DcnConfig cfg_;
  std::uint32_t k_ = 0;
  std::vector<std::vector<std::uint32_t>> fields_;  // sorted input indices
};

struct AlphabetConfig {
  std::uint32_t width = 0;
  std::uint32_t active_bits = 0;
  std::uint32_t symbols = 0;
  std::uint32_t max_overlap = 0;  // pairwise cap, enforced at generation
};

// Fixed random codebook for synthetic streams; generation rejects candidates
// that overlap an accepted symbol above the cap.
class SymbolAlphabet {
 public:
  SymbolAlphabet(const AlphabetConfig& cfg, std::uint64_t master_seed,
                 const std::string& rng_path);

  const Sdr& at(std::uint32_t id) const;
  std::uint32_t size() const {
    return static_cast<std::uint32_t>(codes_.size());
  }

 private:
  std::vector<Sdr> codes_;
};

enum class OrderPolicy : std::uint8_t { kSequential = 0, kShuffle = 1 };

struct StreamSpec {
  AlphabetConfig alphabet;
  std::vector<std::vector<std::uint32_t>> sentences;  // symbol ids
  OrderPolicy order = OrderPolicy::kSequential;
  std::uint64_t repeats = 0;  // full passes over the corpus; 0 = unbounded
  std::uint32_t flows = 1;    // parallel encodings with per-flow alphabets
  std::uint64_t master_seed = 1;
};

// Deterministic corpus player. Every flow carries the same symbol sequence
// under its own codebook, so the flows stay mutually synchronized; tags are
// (sentence id, offset within sentence).
class SyntheticStream {
 public:
  explicit SyntheticStream(const StreamSpec& spec);

  std::vector<TaggedSdr> next();  // one item per flow
  bool exhausted() const;
  std::uint64_t emitted() const { return emitted_; }
  std::uint64_t period_items() const { return period_items_; }
  const StreamSpec& spec() const { return spec_; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  void reshuffle();

  StreamSpec spec_;
  std::vector<SymbolAlphabet> alphabets_;
  std::vector<std::uint32_t> order_;  // sentence visit order this pass
  RngStream rng_;
  std::uint64_t emitted_ = 0;
  std::uint64_t period_items_ = 0;
  std::uint64_t pass_ = 0;
  std::uint32_t cursor_ = 0;  // index into order_
  std::uint32_t offset_ = 0;  // position within the current sentence
};

}  // namespace her
