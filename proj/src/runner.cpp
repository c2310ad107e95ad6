#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "her/harness.hpp"
#include "json.hpp"

namespace her {

namespace {

constexpr std::uint64_t kMagic = 0x3154504b43524548ull;  // "HERCKPT1"

int env_trace_level() {
  const char* v = std::getenv("HER_TRACE_LEVEL");
  if (v == nullptr) return 0;
  return std::atoi(v);
}

void write_f64_vec(BinWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}

std::vector<double> read_f64_vec(BinReader& r) {
  std::vector<double> out(r.u64());
  for (double& x : out) x = r.f64();
  return out;
}

}  // namespace

std::string RunSummary::to_json() const {
  nlohmann::json j{{"cycles", cycles},
                   {"stop_reason", stop_reason},
                   {"rung_load", rung_load},
                   {"total_load", total_load},
                   {"perfect_eos", perfect_eos},
                   {"known_ratio", known_ratio},
                   {"stable_ratio", stable_ratio},
                   {"top_symbols", top_symbols},
                   {"speculative_top_symbols", speculative_top_symbols},
                   {"forwarding_ratio", forwarding_ratio},
                   {"injections", injections},
                   {"forwards", forwards},
                   {"mutes", mutes},
                   {"mgn_suppressed", mgn_suppressed},
                   {"ripples", ripples},
                   {"replay_deliveries", replay_deliveries}};
  return j.dump(2);
}

Runner::Runner(const ExperimentSpec& spec)
    : spec_(spec),
      cortex_(std::make_unique<Cortex>(spec.cortex)),
      source_(spec.synthetic ? make_synthetic_source(*spec.synthetic)
                             : make_file_source(spec.input_file)),
      tracker_(*cortex_, spec.stop.window),
      acc_(std::max(1u, source_ ? source_->n_streams() : 1u),
           cortex_->rung_width(cortex_->n_rungs() - 1) *
               cortex_->symbol_width()),
      trace_level_(env_trace_level()) {
  if (source_->flows() != cortex_->rung_width(0))
    throw ConfigError("input flows do not match first-rung width");
  if (source_->width() != spec.cortex.input_width)
    throw ConfigError("input width does not match cortex input width");
  cortex_->set_threads(spec.threads);
  for (std::uint32_t r = 0; r < cortex_->n_rungs(); ++r)
    ledgers_.emplace_back(cortex_->rung_width(r), source_->period_items());
  if (!spec.checkpoint_in.empty()) load_checkpoint(spec.checkpoint_in);
}

void Runner::ingest(const CycleReport& rep) {
  ++cycles_;
  for (EosLedger& l : ledgers_) l.set_cycles(cycles_);
  for (const EosEvent& e : rep.eos_events)
    ledgers_[e.rung].record(e.column, rep.cycle, e.tag, e.muted);

  injections_ += rep.injections;
  forwards_ += rep.forwards;
  mutes_ += rep.mutes;
  mgn_suppressed_ += rep.mgn_suppressed;
  ripples_ += rep.ripples_started;
  deliveries_ += rep.replay_deliveries;

  const std::uint32_t top = cortex_->n_rungs() - 1;
  const std::uint32_t sw = cortex_->symbol_width();
  for (const SymbolEvent& s : rep.symbols) {
    if (s.rung != top) continue;
    ++top_symbols_;
    if (s.speculative) {
      ++speculative_top_;
      continue;  // encodings reflect real recall, not speculation
    }
    if (s.symbol.tag.stream_id >= acc_.streams()) continue;
    std::vector<std::uint16_t> bits;
    bits.reserve(s.symbol.sdr.active.size());
    for (std::uint16_t b : s.symbol.sdr.active)
      bits.push_back(static_cast<std::uint16_t>(b + s.column * sw));
    acc_.record(s.symbol.tag.stream_id, Sdr{acc_.vector_width(), bits});
  }

  tracker_.observe(*cortex_);
  if (tracker_.window_complete()) {
    last_window_known_ = tracker_.known_ratio();
    last_window_stable_ = tracker_.stable_ratio();
    have_window_ = true;
    stability_samples_.push_back(
        {cycles_, last_window_known_, last_window_stable_});
    tracker_.reset_window();
  }

  if (cycles_ % spec_.load_sample_every == 0) {
    LoadSample sample;
    sample.cycle = cycles_;
    for (std::uint32_t r = 0; r < cortex_->n_rungs(); ++r)
      sample.rung_load.push_back(cortex_->rung_synaptic_load(r));
    load_samples_.push_back(std::move(sample));
    if (trace_level_ >= 2) {
      std::cerr << "cycle " << cycles_ << " load " << cortex_->synaptic_load()
                << " eos";
      for (const EosLedger& l : ledgers_) std::cerr << ' ' << l.size();
      std::cerr << '\n';
    }
  }
}

std::vector<double> Runner::perfect_eos_now() const {
  std::vector<double> out;
  for (const EosLedger& l : ledgers_) {
    try {
      out.push_back(perfect_eos_ratio(l, std::max(2u, spec_.stop.eos_periods)));
    } catch (const std::invalid_argument&) {
      out.push_back(std::nan(""));
    }
  }
  return out;
}

bool Runner::stop_satisfied(std::string& reason) const {
  if (cycles_ < spec_.stop.min_cycles) return false;
  switch (spec_.stop.kind) {
    case StopCondition::Kind::kMaxCycles:
      return false;  // the cap in run() handles it
    case StopCondition::Kind::kPerfectEos: {
      if (cycles_ % source_->period_items() != 0) return false;
      for (const EosLedger& l : ledgers_)
        if (l.complete_periods() < spec_.stop.eos_periods) return false;
      for (const EosLedger& l : ledgers_)
        if (perfect_eos_ratio(l, spec_.stop.eos_periods) <
            spec_.stop.eos_target)
          return false;
      reason = "perfect-eos";
      return true;
    }
    case StopCondition::Kind::kStabilityWindow: {
      if (!have_window_) return false;
      if (stability_samples_.empty() ||
          stability_samples_.back().cycle != cycles_)
        return false;  // only judge freshly completed windows
      for (double k : last_window_known_)
        if (k < 1.0) return false;
      reason = "stability";
      return true;
    }
  }
  return false;
}

RunSummary Runner::run() {
  std::string reason;
  std::uint64_t stepped = 0;
  while (true) {
    if (cycles_ >= spec_.stop.max_cycles) {
      reason = "max-cycles";
      break;
    }
    if (source_->exhausted()) {
      reason = "input-exhausted";
      break;
    }
    ingest(cortex_->step(source_->next()));
    ++stepped;
    if (stop_satisfied(reason)) break;
  }
  // A resume that had nothing left to do keeps the recorded outcome.
  if (stepped > 0 || stop_reason_.empty()) stop_reason_ = reason;
  if (trace_level_ >= 1)
    std::cerr << "run stopped after " << cycles_ << " cycles: " << stop_reason_
              << '\n';
  if (!spec_.trace_dir.empty()) write_artifacts();
  if (!spec_.checkpoint_out.empty())
    save_checkpoint_file(spec_.checkpoint_out);
  return summary();
}

void Runner::step_cycles(std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) {
    if (source_->exhausted()) throw std::logic_error("input exhausted");
    ingest(cortex_->step(source_->next()));
  }
}

RunSummary Runner::summary() const {
  RunSummary s;
  s.cycles = cycles_;
  s.stop_reason = stop_reason_;
  for (std::uint32_t r = 0; r < cortex_->n_rungs(); ++r)
    s.rung_load.push_back(cortex_->rung_synaptic_load(r));
  s.total_load = cortex_->synaptic_load();
  s.perfect_eos = perfect_eos_now();
  s.known_ratio = have_window_ ? last_window_known_ : tracker_.known_ratio();
  s.stable_ratio =
      have_window_ ? last_window_stable_ : tracker_.stable_ratio();
  s.top_symbols = top_symbols_;
  s.speculative_top_symbols = speculative_top_;
  s.forwarding_ratio =
      top_symbols_ == 0
          ? 0.0
          : static_cast<double>(speculative_top_) /
                static_cast<double>(top_symbols_);
  s.injections = injections_;
  s.forwards = forwards_;
  s.mutes = mutes_;
  s.mgn_suppressed = mgn_suppressed_;
  s.ripples = ripples_;
  s.replay_deliveries = deliveries_;
  return s;
}

void Runner::save_checkpoint(std::ostream& os) const {
  BinWriter w;
  w.u64(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(config_digest(spec_));

  BinWriter cx;
  cortex_->save(cx);
  w.bytes(cx.buffer());
  BinWriter src;
  source_->save(src);
  w.bytes(src.buffer());
  w.u64(ledgers_.size());
  for (const EosLedger& l : ledgers_) {
    BinWriter lw;
    l.save(lw);
    w.bytes(lw.buffer());
  }
  BinWriter tw;
  tracker_.save(tw);
  w.bytes(tw.buffer());
  BinWriter aw;
  acc_.save(aw);
  w.bytes(aw.buffer());

  w.u64(cycles_);
  w.u64(top_symbols_);
  w.u64(speculative_top_);
  w.u64(injections_);
  w.u64(forwards_);
  w.u64(mutes_);
  w.u64(mgn_suppressed_);
  w.u64(ripples_);
  w.u64(deliveries_);
  w.u8(have_window_ ? 1 : 0);
  write_f64_vec(w, last_window_known_);
  write_f64_vec(w, last_window_stable_);
  w.bytes(stop_reason_);

  w.u64(load_samples_.size());
  for (const LoadSample& s : load_samples_) {
    w.u64(s.cycle);
    w.u64(s.rung_load.size());
    for (std::uint64_t x : s.rung_load) w.u64(x);
  }
  w.u64(stability_samples_.size());
  for (const StabilitySample& s : stability_samples_) {
    w.u64(s.cycle);
    write_f64_vec(w, s.known);
    write_f64_vec(w, s.stable);
  }

  os.write(w.buffer().data(),
           static_cast<std::streamsize>(w.buffer().size()));
  if (!os) throw std::runtime_error("checkpoint write failed");
}

void Runner::save_checkpoint_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFileError("cannot open checkpoint for write: " + path);
  save_checkpoint(os);
}

void Runner::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string bytes = buf.str();

  BinReader r(bytes);
  try {
    if (r.u64() != kMagic) throw CheckpointError("not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
      throw CheckpointError("checkpoint format version mismatch: found " +
                            std::to_string(version));
    const std::uint64_t digest = r.u64();
    if (digest != config_digest(spec_))
      throw CheckpointError(
          "checkpoint was produced by a different configuration");

    const std::string cx = r.bytes();
    BinReader cr(cx);
    cortex_->load(cr);
    const std::string src = r.bytes();
    BinReader sr(src);
    source_->load(sr);
    const std::uint64_t n_ledgers = r.u64();
    if (n_ledgers != ledgers_.size())
      throw CheckpointError("checkpoint rung count mismatch");
    for (EosLedger& l : ledgers_) {
      const std::string lb = r.bytes();
      BinReader lr(lb);
      l.load(lr);
    }
    const std::string tb = r.bytes();
    BinReader tr(tb);
    tracker_.load(tr);
    const std::string ab = r.bytes();
    BinReader ar(ab);
    acc_.load(ar);

    cycles_ = r.u64();
    top_symbols_ = r.u64();
    speculative_top_ = r.u64();
    injections_ = r.u64();
    forwards_ = r.u64();
    mutes_ = r.u64();
    mgn_suppressed_ = r.u64();
    ripples_ = r.u64();
    deliveries_ = r.u64();
    have_window_ = r.u8() != 0;
    last_window_known_ = read_f64_vec(r);
    last_window_stable_ = read_f64_vec(r);
    stop_reason_ = r.bytes();

    load_samples_.clear();
    const std::uint64_t n_loads = r.u64();
    for (std::uint64_t i = 0; i < n_loads; ++i) {
      LoadSample s;
      s.cycle = r.u64();
      s.rung_load.resize(r.u64());
      for (std::uint64_t& x : s.rung_load) x = r.u64();
      load_samples_.push_back(std::move(s));
    }
    stability_samples_.clear();
    const std::uint64_t n_stab = r.u64();
    for (std::uint64_t i = 0; i < n_stab; ++i) {
      StabilitySample s;
      s.cycle = r.u64();
      s.known = read_f64_vec(r);
      s.stable = read_f64_vec(r);
      stability_samples_.push_back(std::move(s));
    }
    if (!r.exhausted()) throw CheckpointError("trailing bytes in checkpoint");
  } catch (const std::out_of_range&) {
    throw CheckpointError("checkpoint file truncated or corrupt");
  }
}

void Runner::write_artifacts() const {
  namespace fs = std::filesystem;
  if (spec_.trace_dir.empty())
    throw std::logic_error("no trace directory configured");
  fs::create_directories(spec_.trace_dir);
  const fs::path dir(spec_.trace_dir);

  {
    std::ofstream os(dir / "eos_ledger.csv");
    os << "rung,column,cycle,stream,offset,speculative\n";
    for (std::size_t r = 0; r < ledgers_.size(); ++r)
      for (std::uint32_t c = 0; c < ledgers_[r].n_columns(); ++c)
        for (const auto& e : ledgers_[r].column_entries(c))
          os << r << ',' << c << ',' << e.cycle << ',' << e.tag.stream_id
             << ',' << e.tag.offset << ',' << (e.speculative ? 1 : 0) << '\n';
  }
  {
    std::ofstream os(dir / "synaptic_load.csv");
    write_load_csv(os, load_samples_);
  }
  {
    std::ofstream os(dir / "stability.csv");
    write_stability_csv(os, stability_samples_);
  }
  {
    std::ofstream os(dir / "similarity.csv");
    write_similarity_csv(os,
                         similarity_matrix(acc_, EncodingMode::kRateVector));
  }
  {
    std::ofstream os(dir / "summary.json");
    os << summary().to_json() << '\n';
  }
  {
    nlohmann::json manifest{
        {"format", "her-run/1"},
        {"artifacts",
         {"eos_ledger.csv", "synaptic_load.csv", "stability.csv",
          "similarity.csv", "summary.json"}},
        {"spec", nlohmann::json::parse(experiment_to_json(spec_))},
        {"summary", nlohmann::json::parse(summary().to_json())}};
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
  }
}

}  // namespace her
