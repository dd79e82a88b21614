// salient: batch front end for consolidation, evaluation, scene-graph replay,
// synthetic scenes and plan skeletons.
//
// Exit codes: 0 success or --help, 1 data error, 2 usage error. Errors are
// reported on stderr as one JSON object. Each successful run writes a
// manifest (default <primary output>.manifest.json).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "salient/consolidation.hpp"
#include "salient/datasetio.hpp"
#include "salient/evalmetrics.hpp"
#include "salient/io_util.hpp"
#include "salient/planskeleton.hpp"
#include "salient/planskeleton_http.hpp"
#include "salient/scenegraph.hpp"
#include "salient/synth.hpp"
#include "salient/trackmodel.hpp"

namespace {

using salient::Json;

constexpr const char* kVersion = "1.0.0";

// Manifest of one run. `manifest_hash` covers everything except wall time,
// so identical runs produce identical hashes.
class Manifest {
 public:
  explicit Manifest(std::string subcommand) : subcommand_(std::move(subcommand)) {}

  void param(const std::string& key, Json value) { params_[key] = std::move(value); }
  void input(const std::string& path) { inputs_[path] = salient::fnv1a_hex(salient::read_file(path)); }
  void input_bytes(const std::string& path, std::string_view bytes) { inputs_[path] = salient::fnv1a_hex(bytes); }
  void output(const std::string& path, std::string_view bytes) { outputs_[path] = salient::fnv1a_hex(bytes); }

  void write(const std::string& path, double wall_s) const {
    Json body;
    body["tool"] = "salient";
    body["version"] = kVersion;
    body["subcommand"] = subcommand_;
    body["parameters"] = params_;
    body["inputs"] = inputs_;
    body["outputs"] = outputs_;
    Json j = body;
    j["manifest_hash"] = salient::fnv1a_hex(body.dump());
    j["wall_time_s"] = wall_s;
    salient::write_file(path, j.dump(1) + "\n");
  }

 private:
  std::string subcommand_;
  Json params_ = Json::object();
  Json inputs_ = Json::object();
  Json outputs_ = Json::object();
};

void write_output(Manifest& m, const std::string& path, const std::string& bytes) {
  salient::write_file(path, bytes);
  m.output(path, bytes);
}

std::string plural(std::size_t n, const std::string& word) {
  const bool es = word.ends_with('x') || word.ends_with('s');
  return std::to_string(n) + " " + word + (n == 1 ? "" : es ? "es" : "s");
}

void warn(const std::string& msg) {
  std::cerr << Json{{"warning", msg}}.dump() << "\n";
}

// Per-frame PPM images: fused masks tinted by object, boxes outlined.
void render_overlays(const salient::SalientDataset& ds, const std::string& dir) {
  static const std::uint8_t palette[][3] = {{230, 25, 75},  {60, 180, 75},  {255, 225, 25},
                                            {0, 130, 200},  {245, 130, 48}, {145, 30, 180},
                                            {70, 240, 240}, {240, 50, 230}, {210, 245, 60}};
  std::filesystem::create_directories(dir);
  const std::uint32_t w = ds.width, h = ds.height;
  if (w == 0 || h == 0) return;
  std::map<std::int32_t, std::vector<const salient::SalientItem*>> by_frame;
  for (const auto& it : ds.items) by_frame[it.frame_index].push_back(&it);
  for (const auto& [frame, items] : by_frame) {
    std::vector<std::uint8_t> img(static_cast<std::size_t>(w) * h * 3, 0);
    auto put = [&](std::int64_t row, std::int64_t col, const std::uint8_t* c, int share) {
      if (row < 0 || col < 0 || row >= h || col >= w) return;
      auto* px = &img[(static_cast<std::size_t>(row) * w + static_cast<std::size_t>(col)) * 3];
      for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>((px[k] * (4 - share) + c[k] * share) / 4);
    };
    for (const auto* it : items) {
      const auto* c = palette[static_cast<std::size_t>(it->object_label) % std::size(palette)];
      if (it->mask) {
        for (const auto& iv : it->mask->intervals()) {
          for (auto i = iv.begin; i < iv.end; ++i) put(static_cast<std::int64_t>(i / w), static_cast<std::int64_t>(i % w), c, 2);
        }
      }
      const auto x0 = static_cast<std::int64_t>(it->bbox.x_min()), x1 = static_cast<std::int64_t>(it->bbox.x_max()) - 1;
      const auto y0 = static_cast<std::int64_t>(it->bbox.y_min()), y1 = static_cast<std::int64_t>(it->bbox.y_max()) - 1;
      for (auto x = x0; x <= x1; ++x) {
        put(y0, x, c, 4);
        put(y1, x, c, 4);
      }
      for (auto y = y0; y <= y1; ++y) {
        put(y, x0, c, 4);
        put(y, x1, c, 4);
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05d.ppm", frame);
    std::string bytes = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    bytes.append(reinterpret_cast<const char*>(img.data()), img.size());
    salient::write_file((std::filesystem::path(dir) / name).string(), bytes);
  }
}

struct Common {
  std::string manifest;
};

std::string manifest_path(const Common& c, const std::string& primary, const std::string& subcommand) {
  if (!c.manifest.empty()) return c.manifest;
  if (!primary.empty()) return primary + ".manifest.json";
  return "salient-" + subcommand + ".manifest.json";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Salient-object dataset tooling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  app.add_option("--manifest", common.manifest, "Manifest path (default: <output>.manifest.json)");
  const unsigned threads = salient::thread_count_from_env();

  // consolidate
  auto* cons = app.add_subcommand("consolidate", "Cluster tracks into objects and write the dataset");
  std::string tracks_path, cons_out, min_size = "appendix", metric = "bbox", overlays;
  double spatial_eps = 0.4, temporal_eps = 0.4, val_ratio = 0;
  std::size_t temporal_min = 2;
  cons->add_option("--tracks", tracks_path, "Track JSONL file")->required()->check(CLI::ExistingFile);
  cons->add_option("--out", cons_out, "Dataset JSON output")->required();
  cons->add_option("--spatial-eps", spatial_eps, "Spatial DBSCAN eps (1 - IoU)")->check(CLI::Range(0.0, 1.0));
  cons->add_option("--temporal-eps", temporal_eps, "Temporal DBSCAN eps (1 - Jaccard)")->check(CLI::Range(0.0, 1.0));
  cons->add_option("--min-size", min_size, "Spatial min cluster size: 'appendix' or a positive integer")
      ->check([](const std::string& v) -> std::string {
        if (v == "appendix") return {};
        try {
          std::size_t used = 0;
          if (std::stol(v, &used) >= 1 && used == v.size()) return {};
        } catch (const std::exception&) {
        }
        return "must be 'appendix' or a positive integer";
      });
  cons->add_option("--temporal-min-size", temporal_min, "Temporal min cluster size")->check(CLI::PositiveNumber);
  cons->add_option("--metric", metric, "Spatial distance: bbox or mask")->check(CLI::IsMember({"bbox", "mask"}));
  cons->add_option("--render-overlays", overlays, "Write per-frame PPM overlays into this directory");
  cons->add_option("--val-ratio", val_ratio, "Share of annotated frames (the trailing ones) marked split=val")
      ->check(CLI::Range(0.0, 1.0));

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score detections against ground truth");
  std::string dets_path, gt_path, ev_out;
  double score_cutoff = 0.5;
  ev->add_option("--dets", dets_path, "Detections JSON array")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", gt_path, "Ground-truth COCO-style JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--score-cutoff", score_cutoff, "Score cutoff for set-level precision/recall")
      ->check(CLI::Range(0.0, 1.0));
  ev->add_option("--out", ev_out, "Also write the report here");

  // scenegraph-replay
  auto* sg = app.add_subcommand("scenegraph-replay", "Replay an observation stream into a scene graph");
  std::string stream_path, groups_path, dump_path;
  salient::FitnessParams fit;
  sg->add_option("--stream", stream_path, "Observation JSONL stream")->required()->check(CLI::ExistingFile);
  sg->add_option("--groups", groups_path, "Acceptance groups JSON")->check(CLI::ExistingFile);
  sg->add_option("--dump", dump_path, "Graph dump output")->required();
  sg->add_option("--seg-threshold", fit.seg_threshold, "Minimum segmentation score")->check(CLI::PositiveNumber);
  sg->add_option("--pix-threshold", fit.pix_threshold, "Minimum per-pixel confidence")->check(CLI::PositiveNumber);
  sg->add_option("--alpha", fit.alpha, "Per-pixel confidence scale")->check(CLI::PositiveNumber);
  sg->add_option("--sighting-weight", fit.sighting_weight, "Object score weight per sighting")->check(CLI::PositiveNumber);
  sg->add_option("--nn-radius", fit.nn_radius, "Association radius (m)")->check(CLI::PositiveNumber);

  // synth
  auto* sy = app.add_subcommand("synth", "Generate a synthetic track file");
  std::string synth_cfg, synth_out, synth_truth;
  std::string preset;
  sy->add_option("--config", synth_cfg, "key=value config file")->check(CLI::ExistingFile);
  sy->add_option("--preset", preset, "Built-in scene")->check(CLI::IsMember({"fig3"}));
  sy->add_option("--out", synth_out, "Track JSONL output")->required();
  sy->add_option("--truth", synth_truth, "Ground-truth JSON output");

  // plan
  auto* pl = app.add_subcommand("plan", "Build a plan skeleton from skill definitions");
  std::string skills_path, backend = "mock", backend_cfg, response_path, plan_out;
  bool emit_prompt = false;
  std::int64_t frame_count = 0;
  double fps = 30.0;
  pl->add_option("--skills", skills_path, "Skill definitions JSON")->required()->check(CLI::ExistingFile);
  pl->add_option("--backend", backend, "Planner backend: mock or http")->check(CLI::IsMember({"mock", "http"}));
  pl->add_option("--backend-config", backend_cfg, "HTTP backend config (endpoint, model, timeout)")
      ->check(CLI::ExistingFile);
  pl->add_option("--response", response_path, "Canned response for the mock backend")->check(CLI::ExistingFile);
  pl->add_option("--frames", frame_count, "Video frame count to subsample")->check(CLI::NonNegativeNumber);
  pl->add_option("--fps", fps, "Video frame rate")->check(CLI::PositiveNumber);
  pl->add_option("--out", plan_out, "Expanded plan JSON output");
  pl->add_flag("--emit-prompt", emit_prompt, "Print the planner prompt and exit");

  try {
    app.parse(argc, argv);
    if (sy->parsed() && synth_cfg.empty() == preset.empty()) {
      throw CLI::ValidationError("synth", "exactly one of --config or --preset is required");
    }
    if (pl->parsed() && !emit_prompt && plan_out.empty()) {
      throw CLI::RequiredError("--out");
    }
    if (pl->parsed() && backend == "http" && backend_cfg.empty() && !emit_prompt) {
      throw CLI::RequiredError("--backend-config");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  try {
    if (cons->parsed()) {
      Manifest m("consolidate");
      const std::string text = salient::read_file(tracks_path);
      m.input_bytes(tracks_path, text);
      const salient::TrackSet ts = salient::parse_trackset(text);
      if (ts.tracks().empty()) warn("track file has no tracks; writing an empty dataset");
      salient::ClusterParams p;
      p.spatial_eps = spatial_eps;
      p.temporal_eps = temporal_eps;
      p.temporal_min_size = temporal_min;
      p.spatial_min_size = min_size == "appendix"
                               ? salient::MinSizePolicy::appendix_formula()
                               : salient::MinSizePolicy::fixed_size(std::stoul(min_size));
      p.spatial_metric = metric == "mask" ? salient::SpatialMetric::kMaskIoU : salient::SpatialMetric::kBBoxIoU;
      p.threads = threads;
      m.param("spatial_eps", spatial_eps);
      m.param("temporal_eps", temporal_eps);
      m.param("temporal_min_size", temporal_min);
      m.param("min_size", min_size);
      m.param("metric", metric);
      m.param("val_ratio", val_ratio);
      auto r = salient::consolidate(ts, p, salient::fnv1a_hex(text));
      r.dataset.val_ratio = val_ratio;
      write_output(m, cons_out, salient::serialize_dataset(r.dataset));
      if (!overlays.empty()) {
        render_overlays(r.dataset, overlays);
        m.param("render_overlays", overlays);
      }
      std::cout << plural(static_cast<std::size_t>(r.assignment.label_count), "object") << ", "
                << plural(r.assignment.discarded_count(), "track") << " discarded\n";
      m.write(manifest_path(common, cons_out, "consolidate"), elapsed());
    } else if (ev->parsed()) {
      Manifest m("evaluate");
      m.input(dets_path);
      m.input(gt_path);
      const auto dets = salient::read_detections(dets_path);
      const auto gt = salient::read_groundtruth_file(gt_path);
      for (auto c : salient::unknown_categories(dets, gt)) {
        warn("detections use category " + std::to_string(c) + " absent from the ground truth");
      }
      salient::EvalOptions opt;
      opt.score_cutoff = score_cutoff;
      m.param("score_cutoff", score_cutoff);
      const auto rep = salient::evaluate(dets, gt.records, opt);
      Json out;
      out["iou_thresholds"] = opt.iou_thresholds;
      out["score_cutoff"] = score_cutoff;
      const Json report = salient::report_to_json(rep);
      for (const auto& [k, v] : report.items()) out[k] = v;
      const std::string bytes = out.dump(1) + "\n";
      std::cout << bytes;
      if (!ev_out.empty()) write_output(m, ev_out, bytes);
      m.write(manifest_path(common, ev_out, "evaluate"), elapsed());
    } else if (sg->parsed()) {
      Manifest m("scenegraph-replay");
      std::vector<salient::AcceptanceGroup> groups;
      if (!groups_path.empty()) {
        m.input(groups_path);
        groups = salient::parse_groups(salient::read_file(groups_path));
      }
      const std::string stream = salient::read_file(stream_path);
      m.input_bytes(stream_path, stream);
      m.param("seg_threshold", fit.seg_threshold);
      m.param("pix_threshold", fit.pix_threshold);
      m.param("alpha", fit.alpha);
      m.param("sighting_weight", fit.sighting_weight);
      m.param("nn_radius", fit.nn_radius);
      salient::SceneGraph graph(fit, groups);
      const auto stats = salient::replay_stream(graph, stream);
      Json dump = salient::graph_to_json(graph);
      dump["stats"] = Json{{"observations", stats.observations}, {"rejected", stats.rejected},
                           {"buffered", stats.buffered}, {"integrated", stats.integrated},
                           {"directives", stats.directives}};
      write_output(m, dump_path, dump.dump(1) + "\n");
      std::cout << plural(graph.nodes().size(), "node") << ", " << stats.integrated << " of "
                << stats.observations << " observations integrated\n";
      m.write(manifest_path(common, dump_path, "scenegraph-replay"), elapsed());
    } else if (sy->parsed()) {
      Manifest m("synth");
      salient::SynthScene scene;
      if (!preset.empty()) {
        m.param("preset", preset);
        scene = salient::fig3_scene();
      } else {
        m.input(synth_cfg);
        scene = salient::generate(salient::parse_synth_config(salient::read_file(synth_cfg)), threads);
      }
      write_output(m, synth_out, salient::serialize_trackset(scene.tracks));
      if (!synth_truth.empty()) write_output(m, synth_truth, salient::truth_to_json(scene.truth).dump(1) + "\n");
      std::cout << plural(scene.tracks.tracks().size(), "track") << ", "
                << plural(scene.tracks.entry_count(), "box") << "\n";
      m.write(manifest_path(common, synth_out, "synth"), elapsed());
    } else if (pl->parsed()) {
      Manifest m("plan");
      m.input(skills_path);
      const auto skills = salient::parse_skills(salient::read_file(skills_path));
      if (emit_prompt) {
        std::cout << salient::build_prompt(skills);
        std::cout.flush();
        if (!plan_out.empty() || !common.manifest.empty()) {
          m.param("emit_prompt", true);
          m.write(manifest_path(common, plan_out, "plan"), elapsed());
        }
        return 0;
      }
      std::unique_ptr<salient::SemanticPlannerBackend> be;
      m.param("backend", backend);
      if (backend == "http") {
        m.input(backend_cfg);
        be = std::make_unique<salient::HttpPlannerBackend>(
            salient::parse_http_backend_config(salient::read_file(backend_cfg)));
      } else if (!response_path.empty()) {
        m.input(response_path);
        be = std::make_unique<salient::MockPlannerBackend>(salient::read_file(response_path));
      } else {
        be = std::make_unique<salient::MockPlannerBackend>();
      }
      std::vector<std::int64_t> frames;
      if (frame_count > 0) {
        frames = salient::subsample_frames(frame_count, fps);
        m.param("frames", frame_count);
        m.param("fps", fps);
      }
      salient::PlannerRequest req{salient::build_prompt(skills), salient::build_schema(skills), frames};
      const auto semantic = salient::parse_plan(be->generate(req), skills);
      const auto full = salient::expand_plan(semantic, skills);
      Json out;
      out["semantic_plan"] = salient::semantic_plan_to_json(semantic)["plan"];
      out["plan"] = salient::full_plan_to_json(full)["plan"];
      out["display"] = salient::to_display_string(full, skills);
      write_output(m, plan_out, out.dump(1) + "\n");
      std::cout << out["display"].get<std::string>() << "\n";
      m.write(manifest_path(common, plan_out, "plan"), elapsed());
    }
  } catch (const salient::Error& e) {
    std::cerr << Json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
