// Command-line front end: simplify, vectorize, render, layers, metrics.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "layervec/error.hpp"
#include "layervec/image.hpp"
#include "layervec/masks.hpp"
#include "layervec/metrics.hpp"
#include "layervec/pipeline.hpp"
#include "layervec/simplify.hpp"
#include "layervec/svgio.hpp"

namespace fs = std::filesystem;
using namespace layervec;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitDivergence = 3;

fs::path manifest_in(const fs::path& p, const char* name) {
  return fs::is_directory(p) ? p / name : p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
}

struct VectorizeArgs {
  std::string target;
  std::string sequence;
  std::string masks;
  std::string segment;
  std::string out;
  std::string batch;
  std::string color_fit = "dominant";
  std::size_t min_area = 64;
  int paths = 128;
  std::uint64_t seed = 0;
  bool no_sequence = false;
  bool no_overlap_loss = false;
  bool no_structure_opt = false;
  int threads = 1;
  std::size_t overlap_slack = 0;
  int stage1_iters = 500;
  int stage2_iters = 500;
};

nlohmann::ordered_json run_record(const VectorizeArgs& a, const PipelineConfig& cfg) {
  const auto& o = cfg.optimizer;
  nlohmann::ordered_json j;
  j["inputs"] = {{"target", a.target},
                 {"sequence", a.sequence},
                 {"masks", a.masks},
                 {"segment", a.segment.empty() ? "none" : a.segment},
                 {"min_area", cfg.segment_min_area}};
  j["pipeline"] = {{"paths", cfg.paths},
                   {"structure_cap", (cfg.paths + 1) / 2},
                   {"seed", cfg.seed},
                   {"use_sequence", cfg.use_sequence},
                   {"overlap_loss", cfg.overlap_loss},
                   {"structure_opt", cfg.structure_opt},
                   {"color_fit", to_string(cfg.color_fit)},
                   {"overlap_slack", cfg.overlap_slack},
                   {"dedup_jaccard", cfg.dedup_threshold},
                   {"stage1_iters", cfg.stage1_iters},
                   {"stage2_iters", cfg.stage2_iters},
                   {"iters_per_block", BudgetPlan{}.iters_per_block}};
  j["render"] = {{"softness", o.render.softness},
                 {"flatten_tolerance", o.render.flatten_tolerance},
                 {"cutoff", o.render.cutoff},
                 {"threads", o.render.threads}};
  j["loss"] = {{"w_mse", o.structure.w_mse},
               {"w_overlap", cfg.overlap_loss ? o.structure.w_overlap : 0.0},
               {"overlap_opacity", o.structure.overlap_opacity},
               {"transparency_threshold", o.structure.transparency_threshold}};
  j["adam"] = {{"lr_points", o.lr_points},
               {"lr_colors", o.lr_colors},
               {"beta1", o.adam.beta1},
               {"beta2", o.adam.beta2},
               {"eps", o.adam.eps}};
  j["stage2"] = {{"dp_epsilon", o.tolerance.epsilon},
                 {"diff_threshold", o.diff_threshold},
                 {"min_region_area", o.min_region_area},
                 {"diff_opening_radius", o.diff_opening_radius},
                 {"cleanup_every", o.cleanup_every},
                 {"cleanup_min_area", o.cleanup_min_area},
                 {"contribution_tol", o.contribution_tol},
                 {"mse_color_iters", o.mse_color_iters}};
  j["divergence"] = {{"window", o.divergence_window}, {"factor", o.divergence_factor}};
  return j;
}

void vectorize_one(const VectorizeArgs& a) {
  if (a.masks.empty() && a.segment != "builtin")
    throw Error(ErrorKind::invalid_input, "no masks given: pass --masks DIR or --segment builtin");
  if (!a.masks.empty() && !fs::exists(a.masks))
    throw Error(ErrorKind::invalid_input, "masks path does not exist: " + a.masks);

  const Image target = load_png(a.target);
  std::optional<SimplificationSequence> seq;
  if (!a.sequence.empty()) {
    seq = load_sequence(manifest_in(a.sequence, "sequence.json"));
    if (seq->levels[0].width() != target.width() || seq->levels[0].height() != target.height())
      throw Error(ErrorKind::shape, "sequence does not match the target");
  }

  PipelineConfig cfg;
  cfg.paths = a.paths;
  cfg.seed = a.seed;
  cfg.use_sequence = !a.no_sequence;
  cfg.overlap_loss = !a.no_overlap_loss;
  cfg.structure_opt = !a.no_structure_opt;
  cfg.color_fit = color_fit_from_string(a.color_fit);
  cfg.overlap_slack = a.overlap_slack;
  cfg.segment_min_area = a.min_area;
  cfg.stage1_iters = a.stage1_iters;
  cfg.stage2_iters = a.stage2_iters;
  cfg.optimizer.render.threads = a.threads;

  const MaskSet masks = a.masks.empty()
                            ? segment_levels(target, cfg.use_sequence && seq ? &*seq : nullptr, cfg.segment_min_area)
                            : import_masks(manifest_in(a.masks, "masks.json"));

  const fs::path out = a.out;
  fs::create_directories(out);
  nlohmann::ordered_json record = run_record(a, cfg);
  write_text(out / "run.json", record.dump(2) + "\n");

  PipelineResult res = run_pipeline(target, masks, cfg);
  for (const auto& w : masks.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";

  save_scene_json(res.structure_scene, out / "scene_stage1.json");
  save_scene_json(res.final_scene, out / "scene_final.json");
  save_scene_json(res.final_scene, out / "scene.json");
  export_svg(res.final_scene, out / "scene.svg");
  save_png(render(res.final_scene, cfg.optimizer.render), out / "render.png");
  res.log.write_csv(out / "loss.csv");
  save_layers_json(res.layers, out / "layers.json");

  std::size_t structure = 0;
  for (const auto& p : res.final_scene.paths) structure += p.kind == PathKind::structure ? 1 : 0;
  record["result"] = {{"masks_used", res.masks.masks.size()},
                      {"layers", res.layers.layer_count()},
                      {"structure_paths", structure},
                      {"total_paths", res.final_scene.paths.size()},
                      {"structure_mse", res.structure_mse},
                      {"final_mse", res.final_mse},
                      {"warnings", res.warnings}};
  write_text(out / "run.json", record.dump(2) + "\n");
  std::cout << out.string() << ": " << res.final_scene.paths.size() << " paths (" << structure
            << " structure), mse " << res.final_mse << "\n";
}

int cmd_vectorize(const VectorizeArgs& a) {
  if (a.batch.empty()) {
    vectorize_one(a);
    return 0;
  }
  // Each non-empty line: target.png [masks_dir] [sequence_dir]
  std::ifstream in(a.batch);
  if (!in) throw Error(ErrorKind::io, "cannot read batch list " + a.batch);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    VectorizeArgs item = a;
    if (!(ls >> item.target) || item.target.front() == '#') continue;
    if (std::string m; ls >> m) item.masks = m;
    if (std::string s; ls >> s) item.sequence = s;
    item.out = (fs::path(a.out) / fs::path(item.target).stem()).string();
    vectorize_one(item);
  }
  return 0;
}

int cmd_simplify(const std::string& in, const std::string& method, const std::string& out) {
  const Image img = load_png(in);
  SimplificationSequence seq;
  if (method == "gaussian") {
    seq = gaussian_sequence(img);
  } else if (method == "bilateral") {
    seq = bilateral_sequence(img);
  } else if (method == "slic") {
    seq = slic_sequence(img);
  } else {
    throw Error(ErrorKind::invalid_input, "unknown method '" + method + "'");
  }
  save_sequence(seq, out);
  std::cout << "wrote " << seq.size() << " levels to " << out << "\n";
  return 0;
}

Scene scaled(Scene scene, int k) {
  scene.width *= k;
  scene.height *= k;
  for (auto& p : scene.paths) {
    for (auto& q : p.points) q = q * static_cast<double>(k);
  }
  return scene;
}

int cmd_render(const std::string& scene_path, const std::string& out, int scale, int threads) {
  if (scale < 1) throw Error(ErrorKind::invalid_input, "--scale must be >= 1");
  RenderConfig rc;
  rc.threads = threads;
  save_png(render(scaled(load_scene_json(scene_path), scale), rc), out);
  return 0;
}

int cmd_layers(const std::string& scene_path, const std::string& out, int threads) {
  const Scene scene = load_scene_json(scene_path);
  RenderConfig rc;
  rc.threads = threads;
  fs::create_directories(out);
  Scene partial = scene;
  partial.paths.clear();
  std::size_t i = 0;
  int written = 0;
  while (i < scene.paths.size()) {
    const int layer = scene.paths[i].layer;
    while (i < scene.paths.size() && scene.paths[i].layer == layer) partial.paths.push_back(scene.paths[i++]);
    save_png(render(partial, rc), fs::path(out) / ("layer_" + std::to_string(layer) + ".png"));
    ++written;
  }
  std::cout << "wrote " << written << " cumulative layer renders to " << out << "\n";
  return 0;
}

int cmd_metrics(const std::string& scene_path, const std::string& target_path, const std::string& masks_dir,
                const std::string& out, double threshold) {
  const Scene scene = load_scene_json(scene_path);
  const Image target = load_png(target_path);
  Image rgb(target.width(), target.height(), 3);
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = target.at(x, y, std::min(c, target.channels() - 1));
    }
  }
  nlohmann::ordered_json j;
  j["mse"] = mse(render(scene), rgb);
  if (!masks_dir.empty()) {
    const MaskSet ms = import_masks(manifest_in(masks_dir, "masks.json"));
    j["vec"] = nlohmann::ordered_json::parse(vec_compactness(scene, ms.masks, threshold).to_json());
  }
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered image vectorizer"};
  app.require_subcommand(1);

  std::string s_in, s_method = "gaussian", s_out;
  auto* simplify = app.add_subcommand("simplify", "Write a simplified image sequence and its manifest");
  simplify->add_option("--in", s_in, "Input PNG")->required();
  simplify->add_option("--method", s_method, "gaussian|bilateral|slic")
      ->check(CLI::IsMember({"gaussian", "bilateral", "slic"}));
  simplify->add_option("--out", s_out, "Output directory")->required();

  VectorizeArgs va;
  auto* vectorize = app.add_subcommand("vectorize", "Run the full two-stage vectorization");
  vectorize->add_option("--target", va.target, "Target PNG");
  vectorize->add_option("--sequence", va.sequence, "Sequence directory or sequence.json");
  vectorize->add_option("--masks", va.masks, "Mask directory or masks.json");
  vectorize->add_option("--segment", va.segment, "Fallback segmenter when no masks are given")
      ->check(CLI::IsMember({"builtin"}));
  vectorize->add_option("--min-area", va.min_area, "Minimum mask area for the builtin segmenter");
  vectorize->add_option("--paths", va.paths, "Total path budget N")->check(CLI::PositiveNumber);
  vectorize->add_option("--seed", va.seed, "Random seed");
  vectorize->add_flag("--no-sequence", va.no_sequence, "Use only level-0 masks");
  vectorize->add_flag("--no-overlap-loss", va.no_overlap_loss, "Disable the overlap term");
  vectorize->add_flag("--no-structure-opt", va.no_structure_opt, "Skip Stage I optimisation");
  vectorize->add_option("--color-fit", va.color_fit, "dominant|mse")->check(CLI::IsMember({"dominant", "mse"}));
  vectorize->add_option("--out", va.out, "Output directory")->required();
  vectorize->add_option("--threads", va.threads, "Raster threads")->check(CLI::PositiveNumber);
  vectorize->add_option("--overlap-slack", va.overlap_slack, "Shared pixels tolerated within a layer");
  vectorize->add_option("--stage1-iters", va.stage1_iters, "Stage I iterations")->check(CLI::NonNegativeNumber);
  vectorize->add_option("--stage2-iters", va.stage2_iters, "Stage II iterations")->check(CLI::NonNegativeNumber);
  vectorize->add_option("--batch", va.batch, "File listing one 'target [masks] [sequence]' per line");

  std::string r_scene, r_out;
  int r_scale = 1, r_threads = 1;
  auto* rend = app.add_subcommand("render", "Rasterize a scene");
  rend->add_option("--scene", r_scene, "scene.json")->required();
  rend->add_option("--out", r_out, "Output PNG")->required();
  rend->add_option("--scale", r_scale, "Integer upscale factor");
  rend->add_option("--threads", r_threads, "Raster threads")->check(CLI::PositiveNumber);

  std::string l_scene, l_out;
  int l_threads = 1;
  auto* layers = app.add_subcommand("layers", "Write cumulative back-to-front layer renders");
  layers->add_option("--scene", l_scene, "scene.json")->required();
  layers->add_option("--out", l_out, "Output directory")->required();
  layers->add_option("--threads", l_threads, "Raster threads")->check(CLI::PositiveNumber);

  std::string m_scene, m_target, m_masks, m_out;
  double m_threshold = 0.85;
  auto* metrics = app.add_subcommand("metrics", "Report pixel MSE and vector compactness");
  metrics->add_option("--scene", m_scene, "scene.json")->required();
  metrics->add_option("--target", m_target, "Target PNG")->required();
  metrics->add_option("--masks", m_masks, "Mask directory or masks.json");
  metrics->add_option("--out", m_out, "Write JSON here instead of stdout");
  metrics->add_option("--contain", m_threshold, "Containment threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*simplify) return cmd_simplify(s_in, s_method, s_out);
    if (*vectorize) {
      if (va.target.empty() && va.batch.empty()) throw Error(ErrorKind::invalid_input, "--target or --batch is required");
      return cmd_vectorize(va);
    }
    if (*rend) return cmd_render(r_scene, r_out, r_scale, r_threads);
    if (*layers) return cmd_layers(l_scene, l_out, l_threads);
    if (*metrics) return cmd_metrics(m_scene, m_target, m_masks, m_out, m_threshold);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::divergence ? kExitDivergence : kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
