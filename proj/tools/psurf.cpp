#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <psurf/config.hpp>
#include <psurf/evolution.hpp>
#include <psurf/trimesh.hpp>
#include <psurf/voxel_image.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace psurf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::vector<double> split_numbers(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw ParameterError("cannot parse '" + tok + "' as a number");
    out.push_back(v);
  }
  return out;
}

std::array<int, 3> parse_dims(const std::string& text) {
  const auto v = split_numbers(text, 'x');
  if (v.size() != 3) throw ParameterError("--dims expects AxBxC");
  std::array<int, 3> d{};
  for (int i = 0; i < 3; ++i) {
    d[i] = static_cast<int>(v[i]);
    if (d[i] != v[i] || d[i] < 2) throw ParameterError("--dims entries must be integers >= 2");
  }
  return d;
}

Box parse_domain(const std::string& text) {
  const auto v = split_numbers(text, ',');
  if (v.size() != 6) throw ParameterError("--domain expects x0,y0,z0,x1,y1,z1");
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

Vec3 parse_point(const std::string& text) {
  const auto v = split_numbers(text, ',');
  if (v.size() != 3) throw ParameterError("expected x,y,z");
  return {v[0], v[1], v[2]};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SurfaceSet load_mesh_set(const fs::path& path) {
  SurfaceSet s;
  for (auto& m : import_obj(path)) s.add(std::move(m), {1, 2});
  return s;
}

// --- phantom ---------------------------------------------------------------

struct PhantomArgs {
  std::string kind;
  std::string dims;
  std::string domain;
  std::string center;
  std::optional<double> radius;
  std::optional<double> major_radius;
  std::optional<double> minor_radius;
  std::string out;
};

int cmd_phantom(const PhantomArgs& a) {
  const auto kind = parse_phantom_kind(a.kind);
  if (!kind) {
    std::cerr << "unknown phantom kind '" << a.kind
              << "' (expected two_balls, one_ball, torus, custom_ball, custom_torus)\n";
    return kExitConfig;
  }
  PhantomSpec spec;
  switch (*kind) {
    case PhantomKind::TwoBalls: spec = PhantomSpec::two_balls(); break;
    case PhantomKind::OneBall: spec = PhantomSpec::one_ball(a.radius.value_or(0.6)); break;
    case PhantomKind::Torus: spec = PhantomSpec::torus(); break;
    case PhantomKind::CustomBall:
      spec = PhantomSpec::custom_ball(a.center.empty() ? Vec3{} : parse_point(a.center), a.radius.value_or(0.8));
      break;
    case PhantomKind::CustomTorus:
      spec = PhantomSpec::custom_torus(a.major_radius.value_or(1.2), a.minor_radius.value_or(0.4));
      if (!a.center.empty()) spec.center = parse_point(a.center);
      break;
  }
  if (!(spec.radius > 0.0) || !(spec.major_radius > 0.0) || !(spec.minor_radius > 0.0))
    throw ParameterError("phantom radii must be positive");
  const Box domain = a.domain.empty() ? spec.default_domain() : parse_domain(a.domain);
  const VoxelGrid g = make_phantom(spec, parse_dims(a.dims), domain);
  fs::path header = a.out;
  if (header.extension() != ".json") header += ".json";
  if (header.has_parent_path()) fs::create_directories(header.parent_path());
  save_raw(g, header);
  std::cout << header.string() << '\n';
  return kExitOk;
}

// --- segment ---------------------------------------------------------------

struct SegmentArgs {
  std::string image;
  std::string config;
  std::string out_prefix;
  std::optional<int> max_steps;
  bool quiet = false;
};

void write_outputs(const std::string& prefix, const RunResult& r) {
  const fs::path p(prefix);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  export_obj(r.surfaces, prefix + ".obj");
  write_json(prefix + ".report.json", to_json(r.report));
}

int cmd_segment(const SegmentArgs& a) {
  SegmentConfig cfg;
  try {
    cfg = load_config(a.config);
    if (a.max_steps) {
      if (*a.max_steps < 0) throw ConfigError("--max-steps must be non-negative");
      cfg.run.max_steps = *a.max_steps;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const std::string image = a.image.empty() ? cfg.image : a.image;
  if (image.empty()) {
    std::cerr << "config error: no image given (--image or \"image\" in the config)\n";
    return kExitConfig;
  }
  const VoxelGrid g = load_raw(image);
  const SurfaceSet seeds = cfg.build_surfaces();
  const Box omega = g.bounds();
  for (const auto& m : seeds.meshes)
    for (const auto& v : m.vertices)
      if (!omega.contains(v)) {
        std::cerr << "config error: seed surface " << m.surface_id << " leaves the image domain\n";
        return kExitConfig;
      }

  StepObserver progress;
  if (!a.quiet)
    progress = [](const StepRecord& r, const SurfaceSet&) {
      std::fprintf(stderr, "step %4d  tau %.3e  dxn %.3e  energy %.6g  surfaces %d  vertices %d\n", r.step, r.tau,
                   r.dxn, r.energy, r.surfaces, r.vertices);
    };
  try {
    const RunResult r = run(g, seeds, cfg.run, progress);
    write_outputs(a.out_prefix, r);
    for (const auto& e : r.report.events) std::cerr << format_event(e) << '\n';
    std::cerr << "stopped: " << r.report.stop_reason << " after " << r.report.steps_taken << " steps\n";
    return kExitOk;
  } catch (const RunAborted& e) {
    write_outputs(a.out_prefix, e.partial());
    std::cerr << "run aborted: " << e.what() << '\n';
    return e.numerical() ? kExitNumerical : kExitFailure;
  }
}

// --- mesh-info / export ----------------------------------------------------

int cmd_mesh_info(const std::string& mesh) {
  json out = json::array();
  for (const auto& m : import_obj(mesh)) {
    json j = to_json(surface_metrics(m));
    const ManifoldCheck mc = check_closed_manifold(m);
    j["closed"] = mc.ok;
    if (!mc.ok) j["problem"] = mc.message;
    out.push_back(std::move(j));
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_export(const std::string& mesh, const std::string& out, std::string format) {
  const SurfaceSet s = load_mesh_set(mesh);
  if (format.empty()) format = fs::path(out).extension() == ".stl" ? "stl" : "obj";
  if (format == "stl")
    export_stl(s, out);
  else if (format == "obj")
    export_obj(s, out);
  else
    throw ParameterError("unknown export format '" + format + "'");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segment volumetric images with evolving triangulated surfaces"};
  app.require_subcommand(1);
  // TODO: hand --threads to the per-column label walk; every pass runs on one thread today.
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (currently single-threaded)")->check(CLI::PositiveNumber);

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "Write a synthetic binary phantom image");
  phantom->add_option("--kind", ph.kind, "two_balls, one_ball, torus, custom_ball or custom_torus")->required();
  phantom->add_option("--dims", ph.dims, "Voxel counts, e.g. 100x60x60")->required();
  phantom->add_option("--domain", ph.domain, "x0,y0,z0,x1,y1,z1 (default: the phantom's own domain)");
  phantom->add_option("--center", ph.center, "x,y,z for custom phantoms");
  phantom->add_option("--radius", ph.radius, "Ball radius");
  phantom->add_option("--major-radius", ph.major_radius, "Torus major radius");
  phantom->add_option("--minor-radius", ph.minor_radius, "Torus minor radius");
  phantom->add_option("--out", ph.out, "Output prefix; writes <out>.json and <out>.raw")->required();

  SegmentArgs sg;
  auto* segment = app.add_subcommand("segment", "Run a segmentation from a config file");
  segment->add_option("--image", sg.image, "Image header (.json)");
  segment->add_option("--config", sg.config, "Run configuration (.json)")->required();
  segment->add_option("--out-prefix", sg.out_prefix, "Writes <prefix>.obj and <prefix>.report.json")->required();
  segment->add_option("--max-steps", sg.max_steps, "Override the configured step limit");
  segment->add_flag("--quiet", sg.quiet, "No per-step progress on stderr");

  std::string info_mesh;
  auto* info = app.add_subcommand("mesh-info", "Print per-surface metrics of an OBJ file as JSON");
  info->add_option("--mesh", info_mesh, "OBJ file")->required();

  std::string ex_mesh, ex_out, ex_format;
  auto* exp = app.add_subcommand("export", "Convert an OBJ surface file to OBJ or binary STL");
  exp->add_option("--mesh", ex_mesh, "Input OBJ file")->required();
  exp->add_option("--out", ex_out, "Output file")->required();
  exp->add_option("--format", ex_format, "obj or stl (default: from the output extension)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*phantom) return cmd_phantom(ph);
    if (*segment) return cmd_segment(sg);
    if (*info) return cmd_mesh_info(info_mesh);
    if (*exp) return cmd_export(ex_mesh, ex_out, ex_format);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
