#include "hemopar/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hemopar/errors.hpp"

namespace hemopar {

using nlohmann::json;
using nlohmann::ordered_json;

Paradigm ParadigmConfig::resolve() const {
  if (generator)
    return generate_paradigm(n_scans, tr, dt, generator->conditions, generator->isi_min, generator->isi_max,
                             generator->first_onset, generator->seed);
  Paradigm p;
  p.n_scans = n_scans;
  p.tr = tr;
  p.dt = dt;
  p.onsets = onsets;
  p.validate();
  return p;
}

void ExperimentConfig::validate() const {
  if (version != kConfigVersion)
    throw ConfigError("unsupported config version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  phantom.validate();
  const Paradigm p = paradigm.resolve();
  for (const auto& h : phantom.hrfs) build_bezier_hrf(h, p.dt);
  if (drift.order < 1 || drift.order >= p.n_scans) throw ConfigError("drift.order must lie in [1, n_scans)");
  if (!(drift.variance >= 0.0)) throw ConfigError("drift.variance must be >= 0");
  if (!(noise_variance >= 0.0)) throw ConfigError("noise.variance must be >= 0");
  if (noise_grid.empty()) throw ConfigError("noise.grid must not be empty");
  for (double s : noise_grid)
    if (!(s >= 0.0)) throw ConfigError("noise.grid entries must be >= 0");
  if (glm.drift_order < 1) throw ConfigError("glm.drift_order must be >= 1");
  if (glm.hrf_duration < 25.0) throw ConfigError("glm.hrf_duration must be >= 25");
  if (parcels < 1 || parcels > static_cast<std::size_t>(phantom.width) * phantom.height)
    throw ConfigError("parcellation.parcels must lie in [1, voxel count]");
  if (refit.max_iters < 1) throw ConfigError("refit.max_iters must be >= 1");
  if (!(refit.tol >= 0.0)) throw ConfigError("refit.tol must be >= 0");
  if (!(refit.hrf_duration > 0.0)) throw ConfigError("refit.hrf_duration must be > 0");
  if (runs < 1) throw ConfigError("mc.runs must be >= 1");
}

RefitOptions ExperimentConfig::refit_options() const {
  return RefitOptions{glm.drift_order, refit.max_iters, refit.tol, refit.hrf_duration};
}

McConfig ExperimentConfig::mc_config() const {
  McConfig c;
  c.phantom = phantom;
  c.paradigm = paradigm.resolve();
  c.drift = drift;
  c.glm = glm;
  c.refit = refit_options();
  c.target_parcels = parcels;
  c.noise_grid = noise_grid;
  c.runs = runs;
  c.base_seed = base_seed;
  return c;
}

// ---------------------------------------------------------------------------
// Serialisation

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json doc;
  doc["version"] = c.version;
  doc["grid"] = {{"width", c.phantom.width}, {"height", c.phantom.height}};

  ordered_json par;
  par["n_scans"] = c.paradigm.n_scans;
  par["tr"] = c.paradigm.tr;
  par["dt"] = c.paradigm.dt;
  par["onsets"] = c.paradigm.onsets;
  if (c.paradigm.generator) {
    const auto& g = *c.paradigm.generator;
    par["generator"] = {{"conditions", g.conditions}, {"isi_min", g.isi_min}, {"isi_max", g.isi_max},
                        {"first_onset", g.first_onset}, {"seed", g.seed}};
  }
  doc["paradigm"] = par;

  ordered_json ph;
  ph["tiles"] = {c.phantom.tiles_x, c.phantom.tiles_y};
  ph["hrfs"] = ordered_json::array();
  for (const auto& h : c.phantom.hrfs)
    ph["hrfs"].push_back({{"time_to_peak", h.time_to_peak},
                          {"peak_amplitude", h.peak_amplitude},
                          {"time_to_undershoot", h.time_to_undershoot},
                          {"undershoot_amplitude", h.undershoot_amplitude},
                          {"duration", h.duration},
                          {"peak_width", h.peak_width},
                          {"undershoot_width", h.undershoot_width}});
  ph["blobs"] = ordered_json::array();
  for (const auto& b : c.phantom.blobs) ph["blobs"].push_back({{"cx", b.cx}, {"cy", b.cy}, {"radius", b.radius}});
  ph["amplitude"] = {{"mean", c.phantom.amplitude.mean}, {"variance", c.phantom.amplitude.variance}};
  doc["phantom"] = ph;

  doc["drift"] = {{"order", c.drift.order}, {"variance", c.drift.variance}};
  doc["noise"] = {{"variance", c.noise_variance}, {"grid", c.noise_grid}};
  doc["glm"] = {{"drift_order", c.glm.drift_order}, {"hrf_duration", c.glm.hrf_duration}};
  doc["parcellation"] = {{"method", to_string(c.method)}, {"parcels", c.parcels}};
  doc["refit"] = {{"max_iters", c.refit.max_iters}, {"tol", c.refit.tol}, {"hrf_duration", c.refit.hrf_duration}};
  doc["mc"] = {{"runs", c.runs}, {"base_seed", c.base_seed}};
  return doc;
}

namespace {

// Walks one JSON object, tracking which keys were consumed.
class Section {
public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  Section child(const std::string& key) {
    used_.insert(key);
    if (!node_.contains(key)) return Section(empty_object(), join(key));
    return Section(node_.at(key), join(key));
  }

  void number(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      out = v->get<int>();
    }
  }
  void count(const std::string& key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void seed(const std::string& key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "an unsigned 64-bit integer");
      out = v->get<std::uint64_t>();
    }
  }
  void text(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw type_error(key, "an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw type_error(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  const json* array(const std::string& key) {
    const json* v = take(key);
    if (v && !v->is_array()) throw type_error(key, "an array");
    return v;
  }

  // Rejects keys nobody asked for.
  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(join(it.key()) + ": unknown field");
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
  static const json& empty_object() {
    static const json e = json::object();
    return e;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json* take(const std::string& key) {
    used_.insert(key);
    return node_.contains(key) ? &node_.at(key) : nullptr;
  }
  ConfigError type_error(const std::string& key, const char* expected) const {
    return ConfigError(join(key) + ": expected " + std::string(expected));
  }

  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  Section root(doc, "");
  if (!root.has("version")) throw ConfigError("version: required field missing");
  root.integer("version", c.version);
  if (c.version != kConfigVersion)
    throw ConfigError("version: unsupported value " + std::to_string(c.version) + " (expected " +
                      std::to_string(kConfigVersion) + ")");

  {
    Section grid = root.child("grid");
    grid.integer("width", c.phantom.width);
    grid.integer("height", c.phantom.height);
    grid.finish();
  }
  {
    Section par = root.child("paradigm");
    par.integer("n_scans", c.paradigm.n_scans);
    par.number("tr", c.paradigm.tr);
    par.number("dt", c.paradigm.dt);
    const json* onsets = par.array("onsets");
    if (onsets) {
      c.paradigm.onsets.clear();
      for (std::size_t m = 0; m < onsets->size(); ++m) {
        const json& list = (*onsets)[m];
        if (!list.is_array()) throw ConfigError(par.join("onsets") + "[" + std::to_string(m) + "]: expected an array");
        std::vector<double> cond;
        for (const auto& t : list) {
          if (!t.is_number()) throw ConfigError(par.join("onsets") + ": onsets must be numbers");
          cond.push_back(t.get<double>());
        }
        c.paradigm.onsets.push_back(std::move(cond));
      }
    }
    if (par.has("generator")) {
      Section gen = par.child("generator");
      ParadigmGenerator g;
      gen.integer("conditions", g.conditions);
      gen.number("isi_min", g.isi_min);
      gen.number("isi_max", g.isi_max);
      gen.number("first_onset", g.first_onset);
      gen.seed("seed", g.seed);
      gen.finish();
      c.paradigm.generator = g;
    } else if (onsets) {
      c.paradigm.generator.reset();
    }
    par.finish();
  }
  {
    Section ph = root.child("phantom");
    if (const json* tiles = ph.array("tiles")) {
      if (tiles->size() != 2 || !(*tiles)[0].is_number_integer() || !(*tiles)[1].is_number_integer())
        throw ConfigError(ph.join("tiles") + ": expected [tiles_x, tiles_y]");
      c.phantom.tiles_x = (*tiles)[0].get<int>();
      c.phantom.tiles_y = (*tiles)[1].get<int>();
    }
    if (const json* hrfs = ph.array("hrfs")) {
      c.phantom.hrfs.clear();
      for (std::size_t i = 0; i < hrfs->size(); ++i) {
        Section h((*hrfs)[i], ph.join("hrfs") + "[" + std::to_string(i) + "]");
        BezierHrfSpec spec;
        h.number("time_to_peak", spec.time_to_peak);
        h.number("peak_amplitude", spec.peak_amplitude);
        h.number("time_to_undershoot", spec.time_to_undershoot);
        h.number("undershoot_amplitude", spec.undershoot_amplitude);
        h.number("duration", spec.duration);
        h.number("peak_width", spec.peak_width);
        h.number("undershoot_width", spec.undershoot_width);
        h.finish();
        c.phantom.hrfs.push_back(spec);
      }
    }
    if (const json* blobs = ph.array("blobs")) {
      c.phantom.blobs.clear();
      for (std::size_t i = 0; i < blobs->size(); ++i) {
        Section b((*blobs)[i], ph.join("blobs") + "[" + std::to_string(i) + "]");
        Blob blob;
        b.number("cx", blob.cx);
        b.number("cy", blob.cy);
        b.number("radius", blob.radius);
        b.finish();
        c.phantom.blobs.push_back(blob);
      }
    }
    Section amp = ph.child("amplitude");
    amp.number("mean", c.phantom.amplitude.mean);
    amp.number("variance", c.phantom.amplitude.variance);
    amp.finish();
    ph.finish();
  }
  {
    Section drift = root.child("drift");
    drift.integer("order", c.drift.order);
    drift.number("variance", c.drift.variance);
    drift.finish();
  }
  {
    Section noise = root.child("noise");
    noise.number("variance", c.noise_variance);
    noise.numbers("grid", c.noise_grid);
    noise.finish();
  }
  {
    Section glm = root.child("glm");
    glm.integer("drift_order", c.glm.drift_order);
    glm.number("hrf_duration", c.glm.hrf_duration);
    glm.finish();
  }
  {
    Section pc = root.child("parcellation");
    std::string method = to_string(c.method);
    pc.text("method", method);
    try {
      c.method = parse_method(method);
    } catch (const ConfigError& e) {
      throw ConfigError(pc.join("method") + ": " + e.what());
    }
    pc.count("parcels", c.parcels);
    pc.finish();
  }
  {
    Section rf = root.child("refit");
    rf.integer("max_iters", c.refit.max_iters);
    rf.number("tol", c.refit.tol);
    rf.number("hrf_duration", c.refit.hrf_duration);
    rf.finish();
  }
  {
    Section mc = root.child("mc");
    mc.integer("runs", c.runs);
    mc.seed("base_seed", c.base_seed);
    mc.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace hemopar
