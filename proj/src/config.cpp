#include <charconv>
#include <fstream>
#include <sstream>

#include "her/harness.hpp"
#include "her/rng.hpp"
#include "json.hpp"

namespace her {

namespace {

using nlohmann::json;

json hysteresis_to_json(const HysteresisParams& p) {
  return json{{"alpha", p.alpha},
              {"down", p.down},
              {"up", p.up},
              {"k_steepness", p.k_steepness},
              {"ltp_delta", p.ltp_delta},
              {"ltd_ratio", p.ltd_ratio}};
}

HysteresisParams hysteresis_from_json(const json& j, HysteresisParams base) {
  base.alpha = j.value("alpha", base.alpha);
  base.down = j.value("down", base.down);
  base.up = j.value("up", base.up);
  base.k_steepness = j.value("k_steepness", base.k_steepness);
  base.ltp_delta = j.value("ltp_delta", base.ltp_delta);
  base.ltd_ratio = j.value("ltd_ratio", base.ltd_ratio);
  return base;
}

json cortex_to_json(const CortexConfig& c) {
  json rungs = json::array();
  for (const RungSpec& r : c.rungs)
    rungs.push_back(json{{"width", r.width},
                         {"lateral_width", r.lateral_width},
                         {"lateral_offsets", r.lateral_offsets},
                         {"branches_per_cell", r.branches_per_cell}});
  return json{
      {"rungs", rungs},
      {"input_width", c.input_width},
      {"input_active_bits", c.input_active_bits},
      {"cells", c.cells},
      {"symbol_active", c.symbol_active},
      {"replicas_l23_l4", c.replicas_l23_l4},
      {"replicas_l6", c.replicas_l6},
      {"replicas_l5", c.replicas_l5},
      {"l23_params", hysteresis_to_json(c.l23_params)},
      {"l6a_params", hysteresis_to_json(c.l6a_params)},
      {"l6b_params", hysteresis_to_json(c.l6b_params)},
      {"l5_params", hysteresis_to_json(c.l5_params)},
      {"l4_ltp", c.l4_ltp},
      {"l4_ltd", c.l4_ltd},
      {"l4_hetero", c.l4_hetero},
      {"l1_ltp", c.l1_ltp},
      {"l1_ltd", c.l1_ltd},
      {"l1_hetero", c.l1_hetero},
      {"potential_fraction", c.potential_fraction},
      {"connected_fraction", c.connected_fraction},
      {"prune_rate", c.prune_rate},
      {"ca3_group_size", c.ca3_group_size},
      {"ca3_shift_per_rung", c.ca3_shift_per_rung},
      {"ca3_replicas", c.ca3_replicas},
      {"swr", c.swr},
      {"supervised_eos", c.supervised_eos},
      {"attention", c.attention},
      {"ctloop_match_l6b", c.ctloop_match_l6b},
      {"runaway_limit", c.runaway_limit},
      {"match_min_bits", c.match_min_bits},
      {"match_max_bits", c.match_max_bits},
      {"mgn", c.mgn},
      {"mgn_t_rep", c.mgn_t_rep},
      {"master_seed", c.master_seed},
      {"l6b_learn_with_output_slice", c.l6b_learn_with_output_slice}};
}

CortexConfig cortex_from_json(const json& j) {
  CortexConfig c;
  if (!j.contains("rungs") || !j["rungs"].is_array() || j["rungs"].empty())
    throw ConfigError("cortex.rungs must be a non-empty array");
  for (const json& rj : j["rungs"]) {
    RungSpec r;
    r.width = rj.value("width", 0u);
    r.lateral_width = rj.value("lateral_width", 0u);
    r.lateral_offsets =
        rj.value("lateral_offsets", std::vector<std::uint32_t>{});
    r.branches_per_cell = rj.value("branches_per_cell", 0u);
    c.rungs.push_back(std::move(r));
  }
  c.input_width = j.value("input_width", c.input_width);
  c.input_active_bits = j.value("input_active_bits", c.input_active_bits);
  c.cells = j.value("cells", c.cells);
  c.symbol_active = j.value("symbol_active", c.symbol_active);
  c.replicas_l23_l4 = j.value("replicas_l23_l4", c.replicas_l23_l4);
  c.replicas_l6 = j.value("replicas_l6", c.replicas_l6);
  c.replicas_l5 = j.value("replicas_l5", c.replicas_l5);
  if (j.contains("l23_params"))
    c.l23_params = hysteresis_from_json(j["l23_params"], c.l23_params);
  if (j.contains("l6a_params"))
    c.l6a_params = hysteresis_from_json(j["l6a_params"], c.l6a_params);
  if (j.contains("l6b_params"))
    c.l6b_params = hysteresis_from_json(j["l6b_params"], c.l6b_params);
  if (j.contains("l5_params"))
    c.l5_params = hysteresis_from_json(j["l5_params"], c.l5_params);
  c.l4_ltp = j.value("l4_ltp", c.l4_ltp);
  c.l4_ltd = j.value("l4_ltd", c.l4_ltd);
  c.l4_hetero = j.value("l4_hetero", c.l4_hetero);
  c.l1_ltp = j.value("l1_ltp", c.l1_ltp);
  c.l1_ltd = j.value("l1_ltd", c.l1_ltd);
  c.l1_hetero = j.value("l1_hetero", c.l1_hetero);
  c.potential_fraction = j.value("potential_fraction", c.potential_fraction);
  c.connected_fraction = j.value("connected_fraction", c.connected_fraction);
  c.prune_rate = j.value("prune_rate", c.prune_rate);
  c.ca3_group_size = j.value("ca3_group_size", c.ca3_group_size);
  c.ca3_shift_per_rung = j.value("ca3_shift_per_rung", c.ca3_shift_per_rung);
  c.ca3_replicas = j.value("ca3_replicas", c.ca3_replicas);
  c.swr = j.value("swr", c.swr);
  c.supervised_eos = j.value("supervised_eos", c.supervised_eos);
  c.attention = j.value("attention", c.attention);
  c.ctloop_match_l6b = j.value("ctloop_match_l6b", c.ctloop_match_l6b);
  c.runaway_limit = j.value("runaway_limit", c.runaway_limit);
  c.match_min_bits = j.value("match_min_bits", c.match_min_bits);
  c.match_max_bits = j.value("match_max_bits", c.match_max_bits);
  c.mgn = j.value("mgn", c.mgn);
  c.mgn_t_rep = j.value("mgn_t_rep", c.mgn_t_rep);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.l6b_learn_with_output_slice =
      j.value("l6b_learn_with_output_slice", c.l6b_learn_with_output_slice);
  return c;
}

json stream_to_json(const StreamSpec& s) {
  return json{{"alphabet",
               json{{"width", s.alphabet.width},
                    {"active_bits", s.alphabet.active_bits},
                    {"symbols", s.alphabet.symbols},
                    {"max_overlap", s.alphabet.max_overlap}}},
              {"sentences", s.sentences},
              {"order",
               s.order == OrderPolicy::kShuffle ? "shuffle" : "sequential"},
              {"repeats", s.repeats},
              {"flows", s.flows},
              {"master_seed", s.master_seed}};
}

StreamSpec stream_from_json(const json& j) {
  StreamSpec s;
  if (!j.contains("alphabet")) throw ConfigError("stream needs an alphabet");
  const json& a = j["alphabet"];
  s.alphabet.width = a.value("width", 0u);
  s.alphabet.active_bits = a.value("active_bits", 0u);
  s.alphabet.symbols = a.value("symbols", 0u);
  s.alphabet.max_overlap = a.value("max_overlap", 0u);
  if (!j.contains("sentences"))
    throw ConfigError("stream needs sentences");
  s.sentences = j["sentences"].get<std::vector<std::vector<std::uint32_t>>>();
  const std::string order = j.value("order", std::string("sequential"));
  if (order == "sequential") {
    s.order = OrderPolicy::kSequential;
  } else if (order == "shuffle") {
    s.order = OrderPolicy::kShuffle;
  } else {
    throw ConfigError("stream order must be sequential or shuffle");
  }
  s.repeats = j.value("repeats", s.repeats);
  s.flows = j.value("flows", s.flows);
  s.master_seed = j.value("master_seed", s.master_seed);
  return s;
}

StopCondition stop_from_json(const json& j) {
  StopCondition s;
  const std::string kind = j.value("kind", std::string("max_cycles"));
  if (kind == "max_cycles") {
    s.kind = StopCondition::Kind::kMaxCycles;
  } else if (kind == "perfect_eos") {
    s.kind = StopCondition::Kind::kPerfectEos;
  } else if (kind == "stability") {
    s.kind = StopCondition::Kind::kStabilityWindow;
  } else {
    throw ConfigError("stop kind must be max_cycles, perfect_eos, or "
                      "stability");
  }
  s.max_cycles = j.value("max_cycles", s.max_cycles);
  s.min_cycles = j.value("min_cycles", s.min_cycles);
  s.eos_target = j.value("eos_target", s.eos_target);
  s.eos_periods = j.value("eos_periods", s.eos_periods);
  s.window = j.value("window", s.window);
  return s;
}

json stop_to_json(const StopCondition& s) {
  const char* kind = s.kind == StopCondition::Kind::kPerfectEos ? "perfect_eos"
                     : s.kind == StopCondition::Kind::kStabilityWindow
                         ? "stability"
                         : "max_cycles";
  return json{{"kind", kind},
              {"max_cycles", s.max_cycles},
              {"min_cycles", s.min_cycles},
              {"eos_target", s.eos_target},
              {"eos_periods", s.eos_periods},
              {"window", s.window}};
}

}  // namespace

ExperimentSpec parse_experiment(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    ExperimentSpec spec;
    if (!j.contains("cortex")) throw ConfigError("config needs a cortex");
    spec.cortex = cortex_from_json(j["cortex"]);
    if (!j.contains("input")) throw ConfigError("config needs an input");
    const json& in = j["input"];
    const bool synth = in.contains("synthetic");
    const bool file = in.contains("file");
    if (synth == file)
      throw ConfigError("input must name exactly one of synthetic|file");
    if (synth)
      spec.synthetic = stream_from_json(in["synthetic"]);
    else
      spec.input_file = in["file"].get<std::string>();
    if (j.contains("stop")) spec.stop = stop_from_json(j["stop"]);
    spec.checkpoint_in = j.value("checkpoint_in", std::string());
    spec.checkpoint_out = j.value("checkpoint_out", std::string());
    spec.trace_dir = j.value("trace_dir", std::string());
    spec.load_sample_every = j.value("load_sample_every",
                                     spec.load_sample_every);
    if (spec.load_sample_every == 0)
      throw ConfigError("load_sample_every must be positive");
    spec.threads = j.value("threads", spec.threads);
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config field: ") + e.what());
  }
}

std::string experiment_to_json(const ExperimentSpec& spec) {
  json in;
  if (spec.synthetic)
    in["synthetic"] = stream_to_json(*spec.synthetic);
  else
    in["file"] = spec.input_file;
  json j{{"cortex", cortex_to_json(spec.cortex)},
         {"input", in},
         {"stop", stop_to_json(spec.stop)},
         {"checkpoint_in", spec.checkpoint_in},
         {"checkpoint_out", spec.checkpoint_out},
         {"trace_dir", spec.trace_dir},
         {"load_sample_every", spec.load_sample_every},
         {"threads", spec.threads}};
  return j.dump(2);
}

ExperimentSpec load_experiment_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError("cannot open config: " + path);
  std::ostringstream text;
  text << is.rdbuf();
  return parse_experiment(text.str());
}

std::uint64_t config_digest(const ExperimentSpec& spec) {
  // Only the semantic half participates: what the cortex is plus what it
  // eats. Plumbing (paths, stop rules, thread count) may differ on resume.
  json in;
  if (spec.synthetic)
    in["synthetic"] = stream_to_json(*spec.synthetic);
  else
    in["file_width"] = "external";  // file identity checked by shape instead
  const json j{{"cortex", cortex_to_json(spec.cortex)}, {"input", in}};
  return fnv1a64(j.dump());
}

namespace {

class SyntheticSource final : public InputSource {
 public:
  explicit SyntheticSource(const StreamSpec& spec) : stream_(spec) {}

  std::vector<TaggedSdr> next() override { return stream_.next(); }
  bool exhausted() const override { return stream_.exhausted(); }
  std::uint64_t consumed() const override { return stream_.emitted(); }
  std::uint64_t period_items() const override {
    return stream_.period_items();
  }
  std::uint32_t flows() const override { return stream_.spec().flows; }
  std::uint32_t width() const override { return stream_.spec().alphabet.width; }
  std::uint32_t n_streams() const override {
    return static_cast<std::uint32_t>(stream_.spec().sentences.size());
  }
  void save(BinWriter& w) const override { stream_.save(w); }
  void load(BinReader& r) override { stream_.load(r); }

 private:
  SyntheticStream stream_;
};

class FileSource final : public InputSource {
 public:
  explicit FileSource(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MissingFileError("cannot open stream file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("stream file is empty");
    parse_header(line);
    std::uint64_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      items_.push_back(parse_item(line, line_no));
    }
  }

  std::vector<TaggedSdr> next() override {
    if (exhausted()) throw std::logic_error("stream file exhausted");
    return items_[cursor_++];
  }
  bool exhausted() const override { return cursor_ >= items_.size(); }
  std::uint64_t consumed() const override { return cursor_; }
  std::uint64_t period_items() const override { return period_; }
  std::uint32_t flows() const override { return flows_; }
  std::uint32_t width() const override { return width_; }
  std::uint32_t n_streams() const override { return streams_; }
  void save(BinWriter& w) const override { w.u64(cursor_); }
  void load(BinReader& r) override {
    cursor_ = r.u64();
    if (cursor_ > items_.size())
      throw CheckpointError("stream cursor beyond file length");
  }

 private:
  void parse_header(const std::string& line) {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != "her-stream" || version != 1)
      throw ConfigError("stream file: bad header");
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("stream file: bad header field " + kv);
      const std::string key = kv.substr(0, eq);
      const std::uint64_t val = std::stoull(kv.substr(eq + 1));
      if (key == "flows")
        flows_ = static_cast<std::uint32_t>(val);
      else if (key == "width")
        width_ = static_cast<std::uint32_t>(val);
      else if (key == "period")
        period_ = val;
      else if (key == "streams")
        streams_ = static_cast<std::uint32_t>(val);
      else
        throw ConfigError("stream file: unknown header field " + key);
    }
    if (flows_ == 0 || width_ == 0 || period_ == 0 || streams_ == 0)
      throw ConfigError("stream file: incomplete header");
  }

  std::vector<TaggedSdr> parse_item(const std::string& line,
                                    std::uint64_t line_no) {
    std::istringstream ls(line);
    std::uint32_t sid = 0, off = 0;
    if (!(ls >> sid >> off))
      throw ConfigError("stream file: bad tag at line " +
                        std::to_string(line_no));
    std::vector<TaggedSdr> item;
    std::string tok;
    while (ls >> tok) {
      Sdr sdr = Sdr::parse(tok);
      if (sdr.width != width_)
        throw ConfigError("stream file: width mismatch at line " +
                          std::to_string(line_no));
      item.push_back(TaggedSdr{std::move(sdr), StreamTag{sid, off}});
    }
    if (item.size() != flows_)
      throw ConfigError("stream file: flow count mismatch at line " +
                        std::to_string(line_no));
    return item;
  }

  std::vector<std::vector<TaggedSdr>> items_;
  std::uint64_t cursor_ = 0;
  std::uint64_t period_ = 0;
  std::uint32_t flows_ = 0;
  std::uint32_t width_ = 0;
  std::uint32_t streams_ = 0;
};

}  // namespace

std::unique_ptr<InputSource> make_synthetic_source(const StreamSpec& spec) {
  return std::make_unique<SyntheticSource>(spec);
}

std::unique_ptr<InputSource> make_file_source(const std::string& path) {
  return std::make_unique<FileSource>(path);
}

void write_stream_file(std::ostream& os, SyntheticStream& stream,
                       std::uint64_t items) {
  os << "her-stream 1 flows=" << stream.spec().flows << " width="
     << stream.spec().alphabet.width << " period=" << stream.period_items()
     << " streams=" << stream.spec().sentences.size() << '\n';
  for (std::uint64_t i = 0; i < items; ++i) {
    if (stream.exhausted()) break;
    const std::vector<TaggedSdr> item = stream.next();
    os << item[0].tag.stream_id << ' ' << item[0].tag.offset;
    for (const TaggedSdr& t : item) os << ' ' << t.sdr.to_text();
    os << '\n';
  }
}

}  // namespace her
