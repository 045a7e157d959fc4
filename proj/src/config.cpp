#include "piconv/config.hpp"

#include "piconv/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace piconv {

using Json = nlohmann::ordered_json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t end = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + std::ptrdiff_t(end), '\n');
    std::string msg = e.what();
    if (auto p = msg.find("parse error"); p != std::string::npos) msg = msg.substr(p);
    throw ValidationError(origin + ": line " + std::to_string(line) + ": " + msg);
  }
}

namespace {

/// Reads keys from one JSON object, tracking which were defaulted and
/// rejecting keys nobody asked for.
class Section {
 public:
  Section(const Json* obj, std::string prefix, std::vector<std::string>& defaulted)
      : obj_(obj), prefix_(std::move(prefix)), defaulted_(defaulted) {
    if (obj_ != nullptr && !obj_->is_object()) {
      throw ValidationError("'" + prefix_ + "' must be an object");
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    known_.insert(key);
    const std::string name = qualified(key);
    if (obj_ == nullptr || !obj_->contains(key)) {
      defaulted_.push_back(name);
      resolved_[key] = fallback;
      return fallback;
    }
    const Json& v = (*obj_)[key];
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ValidationError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ValidationError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ValidationError("");
      }
      T out = v.get<T>();
      resolved_[key] = out;
      return out;
    } catch (const std::exception&) {
      throw ValidationError("'" + name + "' has the wrong type (" +
                            std::string(v.type_name()) + ")");
    }
  }

  bool has(const std::string& key) const {
    return obj_ != nullptr && obj_->contains(key);
  }

  const Json* child(const std::string& key) {
    known_.insert(key);
    return has(key) ? &(*obj_)[key] : nullptr;
  }

  std::string qualified(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  /// Throws on keys that were never read.
  void finish() const {
    if (obj_ == nullptr) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!known_.count(it.key())) {
        throw ValidationError("unknown key '" + qualified(it.key()) + "'");
      }
    }
  }

  Json& resolved() { return resolved_; }

 private:
  const Json* obj_;
  std::string prefix_;
  std::vector<std::string>& defaulted_;
  std::set<std::string> known_;
  Json resolved_ = Json::object();
};

template <typename Fn>
auto with_field(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(field + ": " + e.what());
  }
}

}  // namespace

Json to_json(const ModelConfig& c) {
  return {{"convlstm_layers", c.convlstm_layers}, {"conv_layers", c.conv_layers},
          {"filters", c.filters},                 {"kernel_size", c.kernel_size},
          {"window", c.window},                   {"horizon", c.horizon},
          {"input_channels", c.input_channels},   {"flux_channels", c.flux_channels},
          {"t_min", c.t_min},                     {"t_max", c.t_max},
          {"flux_norm", c.flux_norm}};
}

Json to_json(const MaterialModel& m) {
  return {{"rho0", m.rho0},     {"rho1", m.rho1},     {"k0", m.k0},
          {"k1", m.k1},         {"cp0", m.cp0},       {"cp1", m.cp1},
          {"h_conv", m.h_conv}, {"h_top", m.h_top},   {"emissivity", m.emissivity},
          {"sigma_sb", m.sigma_sb}, {"t_amb", m.t_amb}};
}

Json to_json(const GridSpec& g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"dx", g.dx}, {"dt", g.dt},
          {"thickness", g.thickness}};
}

Json to_json(const LaserSpec& l) {
  return {{"power", l.power}, {"absorptivity", l.absorptivity},
          {"beam_radius", l.beam_radius}};
}

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  const Json doc = parse_json_text(text, origin);
  Scenario sc;
  auto& defaulted = sc.defaulted;
  Section root(&doc, "", defaulted);

  Section mat(root.child("material"), "material", defaulted);
  MaterialModel m;
  m.rho0 = mat.get("rho0", m.rho0);
  m.rho1 = mat.get("rho1", m.rho1);
  m.k0 = mat.get("k0", m.k0);
  m.k1 = mat.get("k1", m.k1);
  m.cp0 = mat.get("cp0", m.cp0);
  m.cp1 = mat.get("cp1", m.cp1);
  m.h_conv = mat.get("h_conv", m.h_conv);
  m.h_top = mat.get("h_top", m.h_top);
  m.emissivity = mat.get("emissivity", m.emissivity);
  m.sigma_sb = mat.get("sigma_sb", m.sigma_sb);
  m.t_amb = mat.get("t_amb", m.t_amb);
  mat.finish();

  Section grid(root.child("grid"), "grid", defaulted);
  GridSpec g;
  g.rows = grid.get<Index>("rows", g.rows);
  g.cols = grid.get<Index>("cols", g.cols);
  g.dx = grid.get("dx", g.dx);
  g.dt = grid.get("dt", g.dt);
  g.thickness = grid.get("thickness", g.thickness);
  const Index record_every = grid.get<Index>("record_every", 1);
  grid.finish();

  Section las(root.child("laser"), "laser", defaulted);
  LaserSpec l;
  l.power = las.get("power", l.power);
  l.absorptivity = las.get("absorptivity", l.absorptivity);
  l.beam_radius = las.get("beam_radius", l.beam_radius);
  las.finish();

  Section path(root.child("path"), "path", defaulted);
  PathParams pp;
  pp.kind = with_field("path.kind", [&] {
    return path_kind_from_string(path.get<std::string>("kind", to_string(pp.kind)));
  });
  pp.scan_speed = path.get("scan_speed", default_scan_speed(pp.kind));
  pp.process_temperature = path.get("process_temperature", pp.process_temperature);
  pp.layers = path.get<Index>("layers", pp.layers);
  pp.substrate_rows = path.get<Index>("substrate_rows", pp.substrate_rows);
  pp.width = path.get<Index>("width", pp.width);
  path.finish();

  Section sim(root.child("simulation"), "simulation", defaulted);
  StepOptions opt;
  const HeatMode default_mode = pp.kind == PathKind::thin_wall_raster ? HeatMode::thin_wall
                                                                      : HeatMode::interior_2d;
  opt.mode = with_field("simulation.mode", [&] {
    return heat_mode_from_string(sim.get<std::string>("mode", to_string(default_mode)));
  });
  const std::string edges = sim.get<std::string>("edges", "robin");
  if (edges == "robin") {
    opt.edges = EdgeCondition::robin;
  } else if (edges == "dirichlet_ambient") {
    opt.edges = EdgeCondition::dirichlet_ambient;
  } else {
    throw ValidationError("simulation.edges: unknown edge condition '" + edges +
                          "' (expected robin or dirichlet_ambient)");
  }
  const bool steps_given = sim.has("n_steps");
  Index n_steps = sim.get<Index>("n_steps", 0);

  Section norm(root.child("normalization"), "normalization", defaulted);
  sc.t_min = norm.get("t_min", m.t_amb);
  sc.t_max = norm.get("t_max", 1.1 * pp.process_temperature);
  norm.finish();

  sc.seed = root.get<std::uint64_t>("seed", 0);
  root.finish();

  // Semantic validation.
  g.validate();
  l.validate();
  if (record_every < 1) throw ValidationError("grid.record_every must be >= 1");
  if (!(sc.t_min < sc.t_max)) throw ValidationError("normalization: t_min must be < t_max");
  const double t_hi = std::max({sc.t_max, pp.process_temperature, m.t_amb});
  const double t_lo = std::min(sc.t_min, m.t_amb);
  m.validate(t_lo, t_hi);
  const double limit = cfl_max_dt(m, g, t_lo, t_hi);
  if (g.dt > limit) {
    std::ostringstream os;
    os.precision(9);
    os << "grid.dt = " << g.dt << " s exceeds cfl_max_dt = " << limit
       << " s over [" << t_lo << ", " << t_hi << "] C";
    throw ValidationError(os.str());
  }
  DepositionPath dp = with_field("path", [&] { return generate_path(pp, g); });
  if (!steps_given) {
    n_steps = dp.steps();
    sim.resolved()["n_steps"] = n_steps;
  }
  if (n_steps < 0) throw ValidationError("simulation.n_steps must be >= 0");
  sim.finish();

  sc.sim.material = m;
  sc.sim.grid = g;
  sc.sim.laser = l;
  sc.sim.path = std::move(dp);
  sc.sim.n_steps = n_steps;
  sc.sim.record_every = record_every;
  sc.sim.options = opt;
  sc.path = pp;

  sc.resolved = Json::object();
  sc.resolved["material"] = mat.resolved();
  sc.resolved["grid"] = grid.resolved();
  sc.resolved["laser"] = las.resolved();
  sc.resolved["path"] = path.resolved();
  sc.resolved["simulation"] = sim.resolved();
  sc.resolved["normalization"] = norm.resolved();
  sc.resolved["seed"] = sc.seed;
  return sc;
}

Scenario parse_scenario(const std::filesystem::path& path) {
  return parse_scenario_text(read_text_file(path), path.string());
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
  const Json doc = parse_json_text(text, origin);
  RunConfig rc;
  auto& defaulted = rc.defaulted;
  Section root(&doc, "", defaulted);

  Section model(root.child("model"), "model", defaulted);
  const ModelConfig base;
  Json& mo = rc.model_overrides;
  mo["convlstm_layers"] = model.get<Index>("convlstm_layers", base.convlstm_layers);
  mo["conv_layers"] = model.get<Index>("conv_layers", base.conv_layers);
  mo["filters"] = model.get<Index>("filters", base.filters);
  mo["kernel_size"] = model.get<Index>("kernel_size", base.kernel_size);
  mo["window"] = model.get<Index>("window", base.window);
  mo["horizon"] = model.get<Index>("horizon", base.horizon);
  // Data-derived unless given.
  for (const char* key : {"t_min", "t_max", "flux_norm"}) {
    if (model.has(key)) {
      mo[key] = model.get<double>(key, 0.0);
    } else {
      model.child(key);
      defaulted.push_back(model.qualified(key) + " (from data)");
    }
  }
  model.finish();

  Section tr(root.child("train"), "train", defaulted);
  TrainConfig& tc = rc.train;
  tc.learning_rate = tr.get("learning_rate", tc.learning_rate);
  tc.epochs = tr.get<Index>("epochs", tc.epochs);
  tc.batch_size = tr.get<Index>("batch_size", tc.batch_size);
  tc.seed = tr.get<std::uint64_t>("seed", tc.seed);
  tc.use_pi_loss = tr.get("use_pi_loss", tc.use_pi_loss);
  tc.use_pi_input = tr.get("use_pi_input", tc.use_pi_input);
  tc.split = tr.get("split", tc.split);
  tc.max_train_samples = tr.get<Index>("max_train_samples", tc.max_train_samples);
  tc.target_noise = tr.get("target_noise", tc.target_noise);
  tc.train_laser_power = tr.get("train_laser_power", tc.train_laser_power);
  if (const Json* w = tr.child("weights")) {
    Section ws(w, "train.weights", defaulted);
    LossWeights lw;
    lw.w_p = ws.get("w_p", lw.w_p);
    lw.w_i = ws.get("w_i", lw.w_i);
    lw.w_b = ws.get("w_b", lw.w_b);
    lw.w_d = ws.get("w_d", lw.w_d);
    ws.finish();
    tc.weights = lw;
    tr.resolved()["weights"] = ws.resolved();
  } else {
    defaulted.push_back("train.weights (balanced on the first batch)");
  }
  tr.finish();
  tc.validate();

  Section st(root.child("study"), "study", defaulted);
  StudyParams& sp = rc.study;
  sp.windows = st.get("windows", sp.windows);
  sp.sizes = st.get("sizes", sp.sizes);
  sp.horizons = st.get("horizons", sp.horizons);
  sp.seeds = st.get<Index>("seeds", sp.seeds);
  sp.ablation_rows = st.get("ablation_rows", sp.ablation_rows);
  st.finish();
  if (sp.seeds < 1) throw ValidationError("study.seeds must be >= 1");
  root.finish();

  rc.resolved = Json::object();
  rc.resolved["model"] = model.resolved();
  rc.resolved["train"] = tr.resolved();
  rc.resolved["study"] = st.resolved();
  return rc;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  return parse_run_config_text(read_text_file(path), path.string());
}

ModelConfig RunConfig::model_for(const FrameSeries& series) const {
  const Json& mo = model_overrides;
  ModelConfig c = default_model_config(series, mo.at("window").get<Index>(),
                                       mo.at("horizon").get<Index>());
  c.convlstm_layers = mo.at("convlstm_layers").get<Index>();
  c.conv_layers = mo.at("conv_layers").get<Index>();
  c.filters = mo.at("filters").get<Index>();
  c.kernel_size = mo.at("kernel_size").get<Index>();
  if (mo.contains("t_min")) c.t_min = mo["t_min"].get<double>();
  if (mo.contains("t_max")) c.t_max = mo["t_max"].get<double>();
  if (mo.contains("flux_norm")) c.flux_norm = mo["flux_norm"].get<double>();
  c.validate();
  return c;
}

}  // namespace piconv
