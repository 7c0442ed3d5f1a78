// msreg - trajectory-guided deformable registration toolkit, command line
// front end. Subcommands are thin wrappers: flag resolution, file I/O, one
// library call chain, and a run manifest.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "msreg/config.hpp"
#include "msreg/demons.hpp"
#include "msreg/field_io.hpp"
#include "msreg/metrics.hpp"
#include "msreg/msnet.hpp"
#include "msreg/phantom.hpp"
#include "msreg/pipeline.hpp"
#include "msreg/volume_io.hpp"

namespace {

using Clock = std::chrono::steady_clock;

// Records resolved values, paths and stage timings; written for every run so
// a run can be replayed from its manifest.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void set(const std::string& key, double value) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, std::string(buf));
  }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

  void stage_done(const std::string& name) {
    const auto now = Clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    timings_.emplace_back(name, ms);
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) return;  // manifests are best-effort metadata
    for (const auto& [k, v] : entries_) out << k << ": " << v << "\n";
    for (const auto& [name, ms] : timings_) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.3f", ms);
      out << "stage." << name << "_ms: " << buf << "\n";
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::pair<std::string, double>> timings_;
  Clock::time_point last_ = Clock::now();
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = msreg::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct DemonsFlags {
  std::string config_path;
  int pyramid_levels = -1;
  std::string iterations;
  double sigma_update = -1.0, sigma_field = -1.0, max_step = -1.0, kappa = -1.0;
  bool no_normalize = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--demons-config", config_path, "demons key=value config file");
    cmd->add_option("--pyramid-levels", pyramid_levels, "pyramid levels (downsample x2 each)");
    cmd->add_option("--iterations", iterations, "iterations per level, coarse to fine (comma list)");
    cmd->add_option("--sigma-update", sigma_update, "update smoothing sigma, voxels");
    cmd->add_option("--sigma-field", sigma_field, "field smoothing sigma, voxels");
    cmd->add_option("--max-step", max_step, "per-iteration update cap, voxels");
    cmd->add_option("--kappa", kappa, "intensity-difference scale");
    cmd->add_flag("--no-normalize", no_normalize, "skip [0,1] intensity normalization");
  }

  // precedence: flag > config file > default
  msreg::DemonsParams resolve() const {
    msreg::DemonsParams p;
    if (!config_path.empty()) p = msreg::demons_params_from_config(msreg::load_config(config_path));
    if (pyramid_levels > 0) p.pyramid_levels = pyramid_levels;
    if (!iterations.empty()) p.iterations_per_level = msreg::parse_int_list(iterations);
    if (sigma_update > 0) p.sigma_update = sigma_update;
    if (sigma_field > 0) p.sigma_field = sigma_field;
    if (max_step > 0) p.max_step = max_step;
    if (kappa > 0) p.kappa = kappa;
    if (no_normalize) p.normalize_intensities = false;
    p.validate();
    return p;
  }

  void record(Manifest& m, const msreg::DemonsParams& p) const {
    m.set("demons.pyramid_levels", p.pyramid_levels);
    std::string iters;
    for (int i : p.iterations_per_level) iters += (iters.empty() ? "" : ",") + std::to_string(i);
    m.set("demons.iterations", iters);
    m.set("demons.sigma_update", p.sigma_update);
    m.set("demons.sigma_field", p.sigma_field);
    m.set("demons.max_step", p.max_step);
    m.set("demons.kappa", p.kappa);
    m.set("demons.normalize", p.normalize_intensities ? 1 : 0);
  }
};

msreg::MsNetConfig parse_net_arch(const std::string& channels, const std::string& skips) {
  msreg::MsNetConfig cfg;
  if (!channels.empty()) cfg.hidden_channels = msreg::parse_int_list(channels);
  cfg.skips.clear();
  for (const auto& item : split_list(skips)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("skip must be src:dst with 1-based hidden layer numbers");
    msreg::SkipEdge e;
    e.src = std::stoi(item.substr(0, colon)) - 1;
    e.dst = std::stoi(item.substr(colon + 1)) - 1;
    cfg.skips.push_back(e);
  }
  return cfg;
}

std::vector<msreg::MsNet> load_nets(const std::string& list, int levels) {
  const auto paths = split_list(list);
  std::vector<msreg::MsNet> nets;
  const int n = levels >= 0 ? levels : static_cast<int>(paths.size());
  if (n > static_cast<int>(paths.size()))
    throw std::invalid_argument("--levels asks for more nets than --nets provides");
  for (int i = 0; i < n; ++i) nets.push_back(msreg::read_msnet(paths[i]));
  return nets;
}

std::string default_manifest_path(const std::string& primary_output) {
  return primary_output + ".manifest";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-guided deformable registration toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 1;
  std::string manifest_path;
  app.add_option("--seed", seed, "seed for all randomness")->capture_default_str();
  app.add_option("--threads", threads, "worker threads; 1 is bitwise deterministic")
      ->capture_default_str();
  app.add_option("--manifest", manifest_path, "run manifest path (default <first output>.manifest)");

  // --- phantom ---------------------------------------------------------------
  auto* cmd_phantom = app.add_subcommand("phantom", "generate a folded-cortex phantom");
  struct {
    std::string out_intensity, out_gm, out_wm, dims = "48,48,48";
    double r_wm = 10.0, r_gm = 14.0, amplitude = 3.0, noise = 0.02;
    int frequency = 4;
    double mean_bg = 0.1, mean_gm = 0.5, mean_wm = 0.9;
  } ph;
  cmd_phantom->add_option("--out-intensity", ph.out_intensity)->required();
  cmd_phantom->add_option("--out-gm", ph.out_gm)->required();
  cmd_phantom->add_option("--out-wm", ph.out_wm)->required();
  cmd_phantom->add_option("--dims", ph.dims, "nx,ny,nz")->capture_default_str();
  cmd_phantom->add_option("--r-wm", ph.r_wm)->capture_default_str();
  cmd_phantom->add_option("--r-gm", ph.r_gm)->capture_default_str();
  cmd_phantom->add_option("--amplitude", ph.amplitude)->capture_default_str();
  cmd_phantom->add_option("--frequency", ph.frequency)->capture_default_str();
  cmd_phantom->add_option("--noise", ph.noise)->capture_default_str();
  cmd_phantom->add_option("--mean-background", ph.mean_bg)->capture_default_str();
  cmd_phantom->add_option("--mean-gm", ph.mean_gm)->capture_default_str();
  cmd_phantom->add_option("--mean-wm", ph.mean_wm)->capture_default_str();

  // --- make-pair -------------------------------------------------------------
  auto* cmd_pair = app.add_subcommand("make-pair", "generate a complex/simple training pair");
  struct {
    std::string complex_path, gm_path, wm_path;
    std::string out_simple, out_gm, out_wm, out_field;
    int level = 1, smooth_iterations = -1;
    double lambda = 0.5;
    int iterations_per_level = 10;
  } mp;
  DemonsFlags mp_demons;
  cmd_pair->add_option("--complex", mp.complex_path)->required();
  cmd_pair->add_option("--gm", mp.gm_path)->required();
  cmd_pair->add_option("--wm", mp.wm_path)->required();
  cmd_pair->add_option("--level", mp.level, "simplification level k")->capture_default_str();
  cmd_pair->add_option("--lambda", mp.lambda, "smoothing step factor")->capture_default_str();
  cmd_pair->add_option("--iterations-per-level", mp.iterations_per_level,
                       "smoothing iterations = this * level")
      ->capture_default_str();
  cmd_pair->add_option("--smooth-iterations", mp.smooth_iterations,
                       "absolute smoothing iteration override");
  cmd_pair->add_option("--out-simple", mp.out_simple)->required();
  cmd_pair->add_option("--out-gm", mp.out_gm, "re-derived GM labels output");
  cmd_pair->add_option("--out-wm", mp.out_wm, "re-derived WM labels output");
  cmd_pair->add_option("--out-field", mp.out_field, "deformation field output base (no extension)");
  mp_demons.attach(cmd_pair);

  // --- train -----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train one MS-Net on a complex/simple pair");
  struct {
    std::string complex_path, simple_path, mask_path, out_net, train_config;
    std::string channels, skips = "";
    double lr = -1.0;
    int batch = -1, epochs = -1, patches = -1;
  } tr;
  cmd_train->add_option("--complex", tr.complex_path)->required();
  cmd_train->add_option("--simple", tr.simple_path)->required();
  cmd_train->add_option("--mask", tr.mask_path, "sampling mask labels (default: whole grid)");
  cmd_train->add_option("--out", tr.out_net)->required();
  cmd_train->add_option("--train-config", tr.train_config, "training key=value config file");
  cmd_train->add_option("--channels", tr.channels, "hidden channels, e.g. 32,64,64,64,64,64,32,32");
  cmd_train->add_option("--skips", tr.skips,
                        "concatenation skips src:dst (1-based hidden layers), e.g. 1:6,2:5");
  cmd_train->add_option("--lr", tr.lr, "learning rate");
  cmd_train->add_option("--batch", tr.batch, "batch size");
  cmd_train->add_option("--epochs", tr.epochs, "training epochs");
  cmd_train->add_option("--patches", tr.patches, "patches sampled from the pair");

  // --- simplify ---------------------------------------------------------------
  auto* cmd_simplify = app.add_subcommand("simplify", "apply one MS-Net to a volume");
  struct {
    std::string net_path, in_path, out_path;
  } sf;
  cmd_simplify->add_option("--net", sf.net_path)->required();
  cmd_simplify->add_option("--in", sf.in_path)->required();
  cmd_simplify->add_option("--out", sf.out_path)->required();

  // --- trajectory ---------------------------------------------------------------
  auto* cmd_traj = app.add_subcommand("trajectory", "apply a net sequence, writing every level");
  struct {
    std::string nets, in_path, out_prefix;
    int levels = -1;
  } tj;
  cmd_traj->add_option("--nets", tj.nets, "comma list of net files, level order")->required();
  cmd_traj->add_option("--levels", tj.levels, "use only the first n nets");
  cmd_traj->add_option("--in", tj.in_path)->required();
  cmd_traj->add_option("--out-prefix", tj.out_prefix, "writes <prefix>_<k>.nii")->required();

  // --- register ----------------------------------------------------------------
  auto* cmd_reg = app.add_subcommand("register", "plain diffeomorphic demons registration");
  struct {
    std::string fixed_path, moving_path, out_field, out_warped;
  } rg;
  DemonsFlags rg_demons;
  cmd_reg->add_option("--fixed", rg.fixed_path)->required();
  cmd_reg->add_option("--moving", rg.moving_path)->required();
  cmd_reg->add_option("--out-field", rg.out_field, "field output base (no extension)")->required();
  cmd_reg->add_option("--out-warped", rg.out_warped);
  rg_demons.attach(cmd_reg);

  // --- guided-register -----------------------------------------------------------
  auto* cmd_guided = app.add_subcommand("guided-register", "trajectory-guided registration");
  struct {
    std::string fixed_path, moving_path, nets, out_field, out_warped, out_steps;
    std::string warp_labels, warped_labels_out;
    int levels = -1;
  } gd;
  DemonsFlags gd_demons;
  cmd_guided->add_option("--fixed", gd.fixed_path)->required();
  cmd_guided->add_option("--moving", gd.moving_path)->required();
  cmd_guided->add_option("--nets", gd.nets, "comma list of net files, level order");
  cmd_guided->add_option("--levels", gd.levels, "trajectory length n (default: all nets)");
  cmd_guided->add_option("--out-field", gd.out_field, "composed field base (no extension)")->required();
  cmd_guided->add_option("--out-warped", gd.out_warped);
  cmd_guided->add_option("--out-steps", gd.out_steps, "per-step field base; writes <base>_<i>");
  cmd_guided->add_option("--warp-labels", gd.warp_labels, "label volumes to warp (comma list)");
  cmd_guided->add_option("--warped-labels-out", gd.warped_labels_out,
                         "outputs for --warp-labels (comma list)");
  gd_demons.attach(cmd_guided);

  // --- metrics -------------------------------------------------------------------
  auto* cmd_metrics = app.add_subcommand("metrics", "label overlap/distance report");
  struct {
    std::string warped_path, fixed_path, field_base, out_report, out_table;
  } mt;
  cmd_metrics->add_option("--warped", mt.warped_path)->required();
  cmd_metrics->add_option("--fixed", mt.fixed_path)->required();
  cmd_metrics->add_option("--field", mt.field_base, "field base for Jacobian statistics");
  cmd_metrics->add_option("--out", mt.out_report, "machine-readable report")->required();
  cmd_metrics->add_option("--out-table", mt.out_table, "human-readable table file");

  CLI11_PARSE(app, argc, argv);

  try {
    msreg::set_thread_count(threads);
    Manifest manifest;
    manifest.set("seed", seed);
    manifest.set("threads", threads);

    if (*cmd_phantom) {
      manifest.set("subcommand", "phantom");
      msreg::PhantomSpec spec;
      const auto dims = msreg::parse_int_list(ph.dims);
      if (dims.size() != 3) throw std::invalid_argument("--dims must be nx,ny,nz");
      spec.dims = {dims[0], dims[1], dims[2]};
      spec.r_wm = ph.r_wm;
      spec.r_gm = ph.r_gm;
      spec.amplitude = ph.amplitude;
      spec.frequency = ph.frequency;
      spec.noise_sigma = ph.noise;
      spec.mean_background = ph.mean_bg;
      spec.mean_gm = ph.mean_gm;
      spec.mean_wm = ph.mean_wm;
      spec.seed = seed;
      manifest.set("dims", ph.dims);
      manifest.set("r_wm", spec.r_wm);
      manifest.set("r_gm", spec.r_gm);
      manifest.set("amplitude", spec.amplitude);
      manifest.set("frequency", spec.frequency);
      manifest.set("noise", spec.noise_sigma);
      const auto phantom = msreg::generate_phantom(spec);
      manifest.stage_done("generate");
      msreg::write_volume(phantom.intensity, ph.out_intensity);
      msreg::write_volume(phantom.gm, ph.out_gm);
      msreg::write_volume(phantom.wm, ph.out_wm);
      manifest.set("output.intensity", ph.out_intensity);
      manifest.set("output.gm", ph.out_gm);
      manifest.set("output.wm", ph.out_wm);
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(ph.out_intensity) : manifest_path);
    } else if (*cmd_pair) {
      manifest.set("subcommand", "make-pair");
      const auto complex_image = msreg::read_scalar_volume(mp.complex_path);
      const auto gm = msreg::read_label_volume(mp.gm_path);
      const auto wm = msreg::read_label_volume(mp.wm_path);
      manifest.set("input.complex", mp.complex_path);
      manifest.set("input.gm", mp.gm_path);
      manifest.set("input.wm", mp.wm_path);
      manifest.stage_done("read");
      msreg::LevelParams lp =
          msreg::LevelParams::for_level(mp.level, mp.lambda, mp.iterations_per_level);
      if (mp.smooth_iterations >= 0) lp.smoothing.iterations = mp.smooth_iterations;
      const auto dp = mp_demons.resolve();
      manifest.set("level", lp.level);
      manifest.set("lambda", lp.smoothing.lambda);
      manifest.set("smooth_iterations", lp.smoothing.iterations);
      mp_demons.record(manifest, dp);
      const auto pair = msreg::make_training_pair(complex_image, gm, wm, lp, dp);
      manifest.stage_done("make_pair");
      msreg::write_volume(pair.simple_image, mp.out_simple);
      manifest.set("output.simple", mp.out_simple);
      if (!mp.out_gm.empty()) {
        msreg::write_volume(pair.gm_simple, mp.out_gm);
        manifest.set("output.gm", mp.out_gm);
      }
      if (!mp.out_wm.empty()) {
        msreg::write_volume(pair.wm_simple, mp.out_wm);
        manifest.set("output.wm", mp.out_wm);
      }
      if (!mp.out_field.empty()) {
        msreg::write_field(pair.field, mp.out_field);
        manifest.set("output.field", mp.out_field);
      }
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(mp.out_simple) : manifest_path);
    } else if (*cmd_train) {
      manifest.set("subcommand", "train");
      const auto complex_image = msreg::read_scalar_volume(tr.complex_path);
      const auto simple_image = msreg::read_scalar_volume(tr.simple_path);
      msreg::BrainMask mask = tr.mask_path.empty() ? msreg::full_mask(complex_image.grid)
                                                   : msreg::read_label_volume(tr.mask_path);
      manifest.set("input.complex", tr.complex_path);
      manifest.set("input.simple", tr.simple_path);
      if (!tr.mask_path.empty()) manifest.set("input.mask", tr.mask_path);
      manifest.stage_done("read");

      msreg::TrainConfig cfg;
      if (!tr.train_config.empty())
        cfg = msreg::train_config_from_config(msreg::load_config(tr.train_config));
      if (tr.lr > 0) cfg.learning_rate = tr.lr;
      if (tr.batch > 0) cfg.batch_size = tr.batch;
      if (tr.epochs >= 0) cfg.epochs = tr.epochs;
      if (tr.patches > 0) cfg.patches_per_pair = tr.patches;
      cfg.seed = seed;
      cfg.validate();
      manifest.set("train.learning_rate", cfg.learning_rate);
      manifest.set("train.batch_size", cfg.batch_size);
      manifest.set("train.epochs", cfg.epochs);
      manifest.set("train.patches_per_pair", cfg.patches_per_pair);

      const auto [lo, hi] = msreg::min_max(complex_image);
      const auto complex_norm = msreg::normalize_to_unit(complex_image, lo, hi);
      const auto simple_norm = msreg::normalize_to_unit(simple_image, lo, hi);
      const auto map = msreg::sampling_map(complex_norm, mask);
      const auto pairs = msreg::sample_patch_pairs(complex_norm, simple_norm, map,
                                                   cfg.patches_per_pair,
                                                   msreg::derive_seed(seed, 1));
      manifest.stage_done("sample");

      msreg::MsNetConfig arch = parse_net_arch(tr.channels, tr.skips);
      if (tr.channels.empty() && tr.skips.empty()) arch = msreg::MsNetConfig{};
      msreg::MsNet net = msreg::make_msnet(arch);
      msreg::init_weights(net, msreg::derive_seed(seed, 2));
      const auto history = msreg::train(net, pairs, cfg);
      manifest.stage_done("train");
      msreg::write_msnet(net, tr.out_net);
      manifest.set("output.net", tr.out_net);
      for (std::size_t e = 0; e < history.size(); ++e)
        manifest.set("loss.epoch_" + std::to_string(e), history[e]);
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(tr.out_net) : manifest_path);
    } else if (*cmd_simplify) {
      manifest.set("subcommand", "simplify");
      const auto net = msreg::read_msnet(sf.net_path);
      const auto vol = msreg::read_scalar_volume(sf.in_path);
      manifest.set("input.net", sf.net_path);
      manifest.set("input.volume", sf.in_path);
      manifest.stage_done("read");
      const auto out = msreg::simplify_volume(net, vol);
      manifest.stage_done("simplify");
      msreg::write_volume(out, sf.out_path);
      manifest.set("output.volume", sf.out_path);
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(sf.out_path) : manifest_path);
    } else if (*cmd_traj) {
      manifest.set("subcommand", "trajectory");
      const auto nets = load_nets(tj.nets, tj.levels);
      const auto vol = msreg::read_scalar_volume(tj.in_path);
      manifest.set("input.volume", tj.in_path);
      manifest.set("levels", static_cast<int>(nets.size()));
      manifest.stage_done("read");
      const auto traj = msreg::build_trajectory(vol, nets);
      manifest.stage_done("trajectory");
      for (std::size_t k = 0; k < traj.images.size(); ++k) {
        const std::string path = tj.out_prefix + "_" + std::to_string(k) + ".nii";
        msreg::write_volume(traj.images[k], path);
        manifest.set("output.level_" + std::to_string(k), path);
      }
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(tj.out_prefix + "_0.nii")
                                           : manifest_path);
    } else if (*cmd_reg) {
      manifest.set("subcommand", "register");
      const auto fixed = msreg::read_scalar_volume(rg.fixed_path);
      const auto moving = msreg::read_scalar_volume(rg.moving_path);
      manifest.set("input.fixed", rg.fixed_path);
      manifest.set("input.moving", rg.moving_path);
      manifest.stage_done("read");
      const auto dp = rg_demons.resolve();
      rg_demons.record(manifest, dp);
      const auto result = msreg::demons_register(fixed, moving, dp);
      manifest.set("final_msd", result.final_msd);
      manifest.stage_done("register");
      msreg::write_field(result.field, rg.out_field);
      manifest.set("output.field", rg.out_field);
      if (!rg.out_warped.empty()) {
        msreg::write_volume(msreg::warp(moving, result.field), rg.out_warped);
        manifest.set("output.warped", rg.out_warped);
      }
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(rg.out_field + ".ux.nii")
                                           : manifest_path);
    } else if (*cmd_guided) {
      manifest.set("subcommand", "guided-register");
      const auto fixed = msreg::read_scalar_volume(gd.fixed_path);
      const auto moving = msreg::read_scalar_volume(gd.moving_path);
      manifest.set("input.fixed", gd.fixed_path);
      manifest.set("input.moving", gd.moving_path);
      manifest.stage_done("read");
      std::vector<msreg::MsNet> nets;
      if (!gd.nets.empty()) nets = load_nets(gd.nets, gd.levels);
      if (gd.levels >= 0 && static_cast<int>(nets.size()) != gd.levels)
        throw std::invalid_argument("--levels does not match the provided nets");
      const auto dp = gd_demons.resolve();
      gd_demons.record(manifest, dp);
      manifest.set("levels", static_cast<int>(nets.size()));
      const auto result = msreg::guided_register(fixed, moving, nets, dp);
      manifest.set("step_fields", static_cast<int>(result.step_fields.size()));
      manifest.stage_done("guided_register");
      msreg::write_field(result.field, gd.out_field);
      manifest.set("output.field", gd.out_field);
      if (!gd.out_warped.empty()) {
        msreg::write_volume(result.warped, gd.out_warped);
        manifest.set("output.warped", gd.out_warped);
      }
      if (!gd.out_steps.empty())
        for (std::size_t i = 0; i < result.step_fields.size(); ++i) {
          const std::string base = gd.out_steps + "_" + std::to_string(i + 1);
          msreg::write_field(result.step_fields[i], base);
          manifest.set("output.step_" + std::to_string(i + 1), base);
        }
      if (!gd.warp_labels.empty()) {
        const auto ins = split_list(gd.warp_labels);
        const auto outs = split_list(gd.warped_labels_out);
        if (ins.size() != outs.size())
          throw std::invalid_argument("--warp-labels and --warped-labels-out lengths differ");
        for (std::size_t i = 0; i < ins.size(); ++i) {
          const auto labels = msreg::read_label_volume(ins[i]);
          msreg::write_volume(msreg::warp(labels, result.field), outs[i]);
          manifest.set("output.warped_labels_" + std::to_string(i), outs[i]);
        }
      }
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(gd.out_field + ".ux.nii")
                                           : manifest_path);
    } else if (*cmd_metrics) {
      manifest.set("subcommand", "metrics");
      const auto warped = msreg::read_label_volume(mt.warped_path);
      const auto fixed = msreg::read_label_volume(mt.fixed_path);
      manifest.set("input.warped", mt.warped_path);
      manifest.set("input.fixed", mt.fixed_path);
      manifest.stage_done("read");
      msreg::MetricReport report;
      if (!mt.field_base.empty()) {
        const auto field = msreg::read_field(mt.field_base);
        report = msreg::evaluate_labels(warped, fixed, &field);
      } else {
        report = msreg::evaluate_labels(warped, fixed);
      }
      manifest.stage_done("evaluate");
      msreg::write_report(report, mt.out_report);
      manifest.set("output.report", mt.out_report);
      const std::string table = msreg::report_table(report);
      std::cout << table;
      if (!mt.out_table.empty()) {
        std::ofstream out(mt.out_table, std::ios::trunc);
        out << table;
        manifest.set("output.table", mt.out_table);
      }
      manifest.stage_done("write");
      manifest.write(manifest_path.empty() ? default_manifest_path(mt.out_report) : manifest_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
