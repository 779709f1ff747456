#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <regex>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "run_config.hpp"
#include "streetside/acquisition.hpp"
#include "streetside/evaluation.hpp"
#include "streetside/geo.hpp"
#include "streetside/image.hpp"
#include "streetside/projection.hpp"
#include "streetside/synthetic.hpp"

namespace streetside::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void use_stderr_logger(const std::string& level) {
  auto logger = spdlog::get("streetside");
  if (!logger) logger = spdlog::stderr_color_mt("streetside");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

json latlon(const geo::GeoPoint& g) { return {{"lat", g.lat}, {"lon", g.lon}}; }

struct Common {
  std::string input;
  fs::path config;
  std::vector<std::string> overrides;
  std::string log_level;
};

RunConfig configure(const Common& c) {
  RunConfig cfg = load_run_config(c.config, process_env(), c.overrides);
  use_stderr_logger(c.log_level.empty() ? cfg.log_level : c.log_level);
  return cfg;
}

void cmd_extract(const Common& c, const fs::path& out_dir, std::ostream& out) {
  const RunConfig cfg = configure(c);
  // The input is resolved before any provider is built.
  const auto input = pipeline::resolve_input(parse_input(c.input));
  auto provider = make_provider(cfg);
  auto detector = make_detector(cfg);
  auto matcher = make_matcher(cfg);
  const auto result = pipeline::run(input, *provider, *detector, *matcher, cfg.extraction, out_dir);
  const json summary = {{"x_g", latlon(result.building_location.x_g)},
                        {"views", result.views.size()},
                        {"crops", result.crop_count()},
                        {"manifest", (out_dir / "run_manifest.json").string()}};
  out << summary.dump() << '\n';
}

void cmd_localize(const Common& c, std::ostream& out) {
  const RunConfig cfg = configure(c);
  const auto input = pipeline::resolve_input(parse_input(c.input));
  auto provider = make_provider(cfg);
  auto detector = make_detector(cfg);
  auto matcher = make_matcher(cfg);
  pipeline::PanoramaCache cache(*provider, cfg.extraction.download);
  const auto loc = pipeline::locate(input, *provider, cache, *detector, *matcher, cfg.extraction);
  out << pipeline::localization_json(loc);
}

void cmd_stitch(const fs::path& manifest, const std::string& pano_id, const fs::path& png,
                std::ostream& out) {
  acquisition::FixtureProvider provider(manifest);
  const auto& all = provider.all();
  const auto it = std::find_if(all.begin(), all.end(),
                               [&](const acquisition::PanoMetadata& m) { return m.pano_id == pano_id; });
  if (it == all.end()) throw Error(Errc::kNotFound, "pano " + pano_id + " is not in " + manifest.string());
  const auto pano = acquisition::download_panorama(provider, *it);
  write_image(png, pano.image);
  out << json{{"pano_id", pano_id},
              {"width", pano.image.width()},
              {"height", pano.image.height()},
              {"out", png.string()}}
             .dump()
      << '\n';
}

struct ProjectArgs {
  fs::path pano;
  double heading = 0.0;
  double alpha = 0.0;
  double theta = 90.0;
  int size = 2048;
  fs::path out;
};

void cmd_project(const ProjectArgs& a, std::ostream& out) {
  const auto intr = projection::intrinsics_for(a.theta, a.size);  // validates theta first
  const Image pano = read_image(a.pano);
  const auto view = projection::render_rectilinear(pano, a.alpha, a.theta, a.size);
  write_image(a.out, view.image);
  out << json{{"alpha_deg", a.alpha},
              {"bearing_deg", geo::wrap_360(a.heading + a.alpha)},
              {"theta_deg", a.theta},
              {"size", a.size},
              {"focal_px", intr.f},
              {"out", a.out.string()}}
             .dump()
      << '\n';
}

struct EvaluateArgs {
  fs::path gt, dets, op_counts;
  double iou = 0.5;
  std::vector<long> fp_budgets{100, 200};
};

long count_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_integer()) {
    throw Error(Errc::kParse, fmt::format("op counts: integer field '{}' required", key));
  }
  return doc[key].get<long>();
}

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  json report = json::object();
  std::vector<std::string> summary;
  if (!a.gt.empty()) {
    const auto gt = evaluation::to_ground_truth(evaluation::read_ndjson(a.gt));
    const auto dets = evaluation::read_ndjson(a.dets);
    const auto labeled = evaluation::match_detections_to_gt(dets, gt, a.iou);
    std::vector<bool> tp;
    for (const auto& d : labeled) tp.push_back(d.true_positive);
    const std::size_t total = evaluation::total_ground_truth(gt);
    const double ap = evaluation::average_precision(evaluation::pr_curve(tp, total));
    const auto tpr = evaluation::roc_tpr_at_fp(tp, total, a.fp_budgets);
    json roc = json::object();
    for (std::size_t i = 0; i < tpr.size(); ++i) roc[std::to_string(a.fp_budgets[i])] = tpr[i];
    report["ground_truth"] = total;
    report["detections"] = dets.size();
    report["ap"] = ap;
    report["tpr_at_fp"] = roc;
    summary.push_back(fmt::format("AP {:.4f}", ap));
  }
  if (!a.op_counts.empty()) {
    const auto bytes = read_file_bytes(a.op_counts);
    const json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw Error(Errc::kParse, "op counts: not a JSON object");
    long n_t = 0;
    if (doc.contains("n_t")) {
      n_t = count_field(doc, "n_t");
    } else {
      evaluation::EvalCounts c;
      c.n_b = count_field(doc, "n_b");
      c.n = count_field(doc, "n");
      if (doc.contains("m")) c.m = doc["m"].get<std::vector<long>>();
      n_t = evaluation::count_nt(c);
    }
    const long n_u = count_field(doc, "n_u");
    const long n_o = count_field(doc, "n_o");
    const double op = evaluation::op_metric(n_u, n_t, n_o);
    report["op"] = {{"n_u", n_u}, {"n_t", n_t}, {"n_o", n_o}, {"value", op}};
    summary.push_back(fmt::format("OP {:.4f}", op));
  }
  report["summary"] = fmt::format("{}", fmt::join(summary, ", "));
  out << report.dump() << '\n';
}

void cmd_simulate(const fs::path& scene, const fs::path& out_dir, unsigned threads, std::ostream& out) {
  const auto spec = synthetic::load_fixture_spec(scene);
  const auto truth = synthetic::make_fixture(spec, out_dir, threads);
  out << json{{"panos", spec.panos.size()},
              {"target", latlon(truth.target_geo)},
              {"occluded", truth.occluded_panos},
              {"out", out_dir.string()}}
             .dump()
      << '\n';
}

}  // namespace

pipeline::RunInput parse_input(const std::string& arg) {
  static const std::regex latlon_re(R"(^\s*([-+]?\d+(?:\.\d*)?)\s*,\s*([-+]?\d+(?:\.\d*)?)\s*$)");
  std::smatch m;
  if (std::regex_match(arg, m, latlon_re)) {
    return geo::make_geopoint(std::stod(m[1].str()), std::stod(m[2].str()));
  }
  if (!fs::is_regular_file(arg)) {
    throw Error(Errc::kIo, "input '" + arg + "' is neither lat,lon nor a readable file", "input");
  }
  return read_file_bytes(arg);
}

std::string error_line(const Error& e) {
  json err = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  err["step"] = e.step().empty() ? json(nullptr) : json(e.step());
  return json{{"error", err}}.dump();
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Street-level building image extraction from panoramas"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  Common common;
  fs::path out_dir;
  auto* extract = app.add_subcommand("extract", "Locate the building and crop it from every panorama");
  extract->add_option("--input", common.input, "Geotagged JPEG or lat,lon")->required();
  extract->add_option("--config", common.config, "Run configuration")->required()->check(CLI::ExistingFile);
  extract->add_option("--out", out_dir, "Output directory")->required();
  extract->add_option("--set", common.overrides, "Override a setting: section.key=value");

  auto* localize = app.add_subcommand("localize", "Print the building location as JSON");
  localize->add_option("--input", common.input, "Geotagged JPEG or lat,lon")->required();
  localize->add_option("--config", common.config, "Run configuration")->required()->check(CLI::ExistingFile);
  localize->add_option("--set", common.overrides, "Override a setting: section.key=value");

  fs::path manifest, png;
  std::string pano_id;
  auto* stitch = app.add_subcommand("stitch", "Assemble one panorama from its tiles");
  stitch->add_option("--manifest", manifest, "Fixture manifest.json")->required()->check(CLI::ExistingFile);
  stitch->add_option("--pano", pano_id, "Panorama id")->required();
  stitch->add_option("--out", png, "Output image (.png or .jpg)")->required();

  ProjectArgs proj;
  auto* project = app.add_subcommand("project", "Render a rectilinear view of a panorama");
  project->add_option("--pano", proj.pano, "Equirectangular image, heading at the center column")
      ->required()
      ->check(CLI::ExistingFile);
  project->add_option("--heading", proj.heading, "Panorama heading, degrees");
  project->add_option("--alpha", proj.alpha, "View azimuth relative to the heading, degrees")->required();
  project->add_option("--theta", proj.theta, "Field of view, degrees");
  project->add_option("--size", proj.size, "Output side, px");
  project->add_option("--out", proj.out, "Output image")->required();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Average precision, ROC and overall practicality");
  auto* gt_opt = evaluate->add_option("--gt", ev.gt, "Ground truth NDJSON")->check(CLI::ExistingFile);
  auto* det_opt = evaluate->add_option("--dets", ev.dets, "Detections NDJSON")->check(CLI::ExistingFile);
  gt_opt->needs(det_opt);
  det_opt->needs(gt_opt);
  auto* op_opt = evaluate->add_option("--op-counts", ev.op_counts, "JSON with n_u, n_o and n_t (or n_b, n, m)")
                     ->check(CLI::ExistingFile);
  evaluate->add_option("--iou", ev.iou, "IoU needed for a true positive")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--fp", ev.fp_budgets, "False-positive budgets for the ROC read-out");

  fs::path scene;
  unsigned threads = 0;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic fixture from a scene description");
  simulate->add_option("--scene", scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir, "Output directory")->required();
  simulate->add_option("--threads", threads, "Render workers (0: all cores)");

  try {
    app.parse(argc, argv);
    if (!extract->parsed() && !localize->parsed()) use_stderr_logger(log_level.empty() ? "info" : log_level);
    common.log_level = log_level;
    if (extract->parsed()) {
      cmd_extract(common, out_dir, out);
    } else if (localize->parsed()) {
      cmd_localize(common, out);
    } else if (stitch->parsed()) {
      cmd_stitch(manifest, pano_id, png, out);
    } else if (project->parsed()) {
      cmd_project(proj, out);
    } else if (evaluate->parsed()) {
      if (ev.gt.empty() && op_opt->count() == 0) {
        throw CLI::ValidationError("evaluate", "give --gt/--dets, --op-counts or both");
      }
      cmd_evaluate(ev, out);
    } else if (simulate->parsed()) {
      cmd_simulate(scene, out_dir, threads, out);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << json{{"error", {{"code", "usage"}, {"step", nullptr}, {"message", e.what()}}}}.dump() << '\n';
    return 2;
  } catch (const Error& e) {
    err << error_line(e) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", {{"code", "internal"}, {"step", nullptr}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace streetside::cli
