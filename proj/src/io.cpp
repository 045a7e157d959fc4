#include "piconv/io.hpp"

#include "piconv/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace piconv {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string format_field_csv(const Field& f) {
  std::string out;
  out.reserve(std::size_t(f.size()) * 16);
  char buf[32];
  for (Index i = 0; i < f.rows(); ++i) {
    for (Index j = 0; j < f.cols(); ++j) {
      if (j) out.push_back(',');
      const int n = std::snprintf(buf, sizeof buf, "%.9g", f(i, j));
      out.append(buf, std::size_t(n));
    }
    out.push_back('\n');
  }
  return out;
}

std::string format_mask_csv(const Mask& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out.push_back(m(i, j) ? '1' : '0');
    }
    out.push_back('\n');
  }
  return out;
}

Field parse_field_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                      : comma - pos);
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      double v = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ValidationError(origin + ": line " + std::to_string(line_no) +
                              ": not a number: '" + cell + "'");
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ValidationError(origin + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(row.size()) + " values, expected " +
                            std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(origin + ": empty frame");
  Field f(Index(rows.size()), Index(rows.front().size()));
  for (Index i = 0; i < f.rows(); ++i) {
    for (Index j = 0; j < f.cols(); ++j) f(i, j) = rows[std::size_t(i)][std::size_t(j)];
  }
  return f;
}

Field read_field_csv(const fs::path& path) {
  return parse_field_csv(read_text_file(path), path.string());
}

Mask read_mask_csv(const fs::path& path) {
  const Field f = read_field_csv(path);
  Mask m(f.rows(), f.cols());
  for (Index i = 0; i < f.rows(); ++i) {
    for (Index j = 0; j < f.cols(); ++j) {
      if (f(i, j) != 0.0 && f(i, j) != 1.0) {
        throw ValidationError(path.string() + ": mask values must be 0 or 1");
      }
      m(i, j) = f(i, j) == 1.0;
    }
  }
  return m;
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

std::string numbered(const char* stem, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu.csv", stem, k);
  return buf;
}

Json physics_json(const PhysicsSettings& p) {
  Json j;
  j["material"] = to_json(p.material);
  j["grid"] = to_json(p.grid);
  j["frame_dt"] = p.frame_dt;
  j["mode"] = to_string(p.options.mode);
  j["edges"] = p.options.edges == EdgeCondition::robin ? "robin" : "dirichlet_ambient";
  return j;
}

}  // namespace

std::vector<std::string> write_frame_set(const fs::path& dir, const SimulationResult& sim,
                                         const Scenario& scenario) {
  std::vector<std::string> written;
  Json frames = Json::array(), flux = Json::array(), masks = Json::array(),
       steps = Json::array();
  for (std::size_t k = 0; k < sim.frames.size(); ++k) {
    const std::string f = "frames/" + numbered("frame", k);
    const std::string q = "flux/" + numbered("flux", k);
    const std::string m = "mask/" + numbered("mask", k);
    write_text_file(dir / f, format_field_csv(sim.frames[k].values));
    write_text_file(dir / q, format_field_csv(sim.flux[k]));
    write_text_file(dir / m, format_mask_csv(sim.frames[k].active));
    frames.push_back(f);
    flux.push_back(q);
    masks.push_back(m);
    steps.push_back(sim.frames[k].t);
    written.insert(written.end(), {f, q, m});
  }
  const SimScenario& s = scenario.sim;
  Json man;
  man["format"] = "piconv-frames";
  PhysicsSettings ps;
  ps.material = s.material;
  ps.grid = s.grid;
  ps.frame_dt = s.grid.dt * double(s.record_every);
  ps.options = s.options;
  man["physics"] = physics_json(ps);
  man["record_every"] = s.record_every;
  man["path_kind"] = to_string(s.path.kind);
  man["process_temperature"] = s.path.process_temperature;
  man["laser"] = to_json(s.laser);
  man["peak_flux"] = s.laser.peak_flux();
  man["normalization"] = {{"t_min", scenario.t_min}, {"t_max", scenario.t_max}};
  man["channels"] = 1;
  man["frames"] = frames;
  man["flux"] = flux;
  man["masks"] = masks;
  man["steps"] = steps;
  write_text_file(dir / "manifest.json", man.dump(2) + "\n");
  written.push_back("manifest.json");
  return written;
}

Field downsample(const Field& f, Index factor) {
  if (factor < 1) throw ValidationError("downsample factor must be >= 1");
  if (factor == 1) return f;
  const Index r = f.rows() / factor, c = f.cols() / factor;
  if (r < 1 || c < 1) throw ValidationError("downsample factor larger than the frame");
  Field out(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) {
      out(i, j) = f.block(i * factor, j * factor, factor, factor).mean();
    }
  }
  return out;
}

namespace {

std::vector<fs::path> csv_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

PhysicsSettings physics_from_json(const Json* j) {
  PhysicsSettings p;
  if (j == nullptr) return p;
  if (j->contains("material")) {
    const Json& m = (*j)["material"];
    MaterialModel& mm = p.material;
    mm.rho0 = m.value("rho0", mm.rho0);
    mm.rho1 = m.value("rho1", mm.rho1);
    mm.k0 = m.value("k0", mm.k0);
    mm.k1 = m.value("k1", mm.k1);
    mm.cp0 = m.value("cp0", mm.cp0);
    mm.cp1 = m.value("cp1", mm.cp1);
    mm.h_conv = m.value("h_conv", mm.h_conv);
    mm.h_top = m.value("h_top", mm.h_top);
    mm.emissivity = m.value("emissivity", mm.emissivity);
    mm.sigma_sb = m.value("sigma_sb", mm.sigma_sb);
    mm.t_amb = m.value("t_amb", mm.t_amb);
  }
  if (j->contains("grid")) {
    const Json& g = (*j)["grid"];
    p.grid.rows = g.value("rows", p.grid.rows);
    p.grid.cols = g.value("cols", p.grid.cols);
    p.grid.dx = g.value("dx", p.grid.dx);
    p.grid.dt = g.value("dt", p.grid.dt);
    p.grid.thickness = g.value("thickness", p.grid.thickness);
  }
  p.frame_dt = j->value("frame_dt", p.grid.dt);
  p.options.mode = heat_mode_from_string(j->value("mode", std::string("interior_2d")));
  const std::string edges = j->value("edges", std::string("robin"));
  if (edges == "robin") {
    p.options.edges = EdgeCondition::robin;
  } else if (edges == "dirichlet_ambient") {
    p.options.edges = EdgeCondition::dirichlet_ambient;
  } else {
    throw ValidationError("unknown edge condition '" + edges + "'");
  }
  return p;
}

FrameSeries load_from_manifest(const fs::path& manifest_path) {
  const Json man = parse_json_text(read_text_file(manifest_path), manifest_path.string());
  const fs::path base = manifest_path.parent_path();
  FrameSeries s;
  try {
    s.physics = physics_from_json(man.contains("physics") ? &man["physics"] : nullptr);
    s.process_temperature = man.value("process_temperature", 0.0);
    s.peak_flux = man.value("peak_flux", 0.0);
    const Index channels = man.value("channels", Index{1});
    if (channels < 1) throw ValidationError("channels must be >= 1");
    const Json& frames = man.at("frames");
    if (!frames.is_array() || frames.empty()) {
      throw ValidationError("no frames found in '" + manifest_path.string() + "'");
    }
    for (const Json& entry : frames) {
      std::vector<Field> ch;
      if (entry.is_string()) {
        ch.push_back(read_field_csv(base / entry.get<std::string>()));
      } else {
        for (const Json& c : entry) ch.push_back(read_field_csv(base / c.get<std::string>()));
      }
      if (Index(ch.size()) != channels) {
        throw ValidationError("frame entry has " + std::to_string(ch.size()) +
                              " channels, manifest declares " + std::to_string(channels));
      }
      s.channels.push_back(std::move(ch));
    }
    const Index r = s.rows(), c = s.cols();
    if (man.contains("flux")) {
      for (const Json& e : man["flux"]) s.flux.push_back(read_field_csv(base / e.get<std::string>()));
    } else {
      s.flux.assign(s.channels.size(), Field::Zero(r, c));
    }
    if (man.contains("masks")) {
      for (const Json& e : man["masks"]) s.active.push_back(read_mask_csv(base / e.get<std::string>()));
    } else {
      s.active.assign(s.channels.size(), Mask::Constant(r, c, true));
    }
    s.physics.grid.rows = r;
    s.physics.grid.cols = c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  s.validate();
  return s;
}

}  // namespace

FrameSeries load_frame_set(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("data path '" + path.string() + "' does not exist");
  if (fs::is_regular_file(path)) return load_from_manifest(path);
  if (fs::exists(path / "manifest.json")) return load_from_manifest(path / "manifest.json");
  const std::vector<fs::path> files = csv_files(path);
  if (files.empty()) throw ValidationError("no frames found in '" + path.string() + "'");
  FrameSeries s;
  for (const fs::path& f : files) s.channels.push_back({read_field_csv(f)});
  const Index r = s.rows(), c = s.cols();
  s.flux.assign(files.size(), Field::Zero(r, c));
  s.active.assign(files.size(), Mask::Constant(r, c, true));
  s.physics.grid.rows = r;
  s.physics.grid.cols = c;
  s.validate();
  return s;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

void RunManifest::add_input(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) inputs.emplace_back(f.string(), sha256_file(f));
  } else {
    inputs.emplace_back(p.string(), sha256_file(p));
  }
}

void RunManifest::add_artifacts(const fs::path& out_dir,
                                const std::vector<std::string>& relative_paths) {
  for (const std::string& r : relative_paths) {
    artifacts.emplace_back(r, sha256_file(out_dir / r));
  }
}

std::string RunManifest::to_json() const {
  Json j;
  j["command"] = command;
  j["argv"] = argv;
  j["config"] = config;
  j["defaulted"] = defaulted;
  Json in = Json::array();
  for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"sha256", h}});
  j["inputs"] = in;
  Json out = Json::array();
  for (const auto& [p, h] : artifacts) out.push_back({{"path", p}, {"sha256", h}});
  j["artifacts"] = out;
  j["volatile_fields"] = volatile_fields;
  return j.dump(2) + "\n";
}

void write_run_manifest(const fs::path& out_dir, const RunManifest& m) {
  write_text_file(out_dir / "run_manifest.json", m.to_json());
}

}  // namespace piconv
