#include "fingerdiff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "fingerdiff/errors.hpp"
#include "fingerdiff/frames.hpp"
#include "fingerdiff/rng.hpp"

namespace fingerdiff {

using nlohmann::json;

namespace {

constexpr double kTau = 6.283185307179586476925;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Soft-edged ellipse coverage in [0,1].
double soft_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  const double d = dx * dx + dy * dy;
  return clamp01((1.0 - d) / 0.18);
}

double soft_box(double x, double y, double cx, double cy, double hx, double hy) {
  const double ax = clamp01((hx - std::abs(x - cx)) / 1.2);
  const double ay = clamp01((hy - std::abs(y - cy)) / 1.2);
  return ax * ay;
}

struct StyleParams {
  double blur_sigma;
  double noise_std;
  double gamma;
};

// Styles are keyed on the tag alone, so a tag means the same rendering
// perturbation in every dataset.
StyleParams style_params(const std::string& tag) {
  Rng rng(mix_seed(fnv1a64(tag), "style-params"));
  StyleParams s;
  const int blur_pick = static_cast<int>(rng.below(3));
  s.blur_sigma = blur_pick == 0 ? 0.0 : (blur_pick == 1 ? 0.6 : 1.1);
  s.noise_std = rng.uniform(0.010, 0.030);
  s.gamma = rng.uniform(0.82, 1.22);
  return s;
}

void gaussian_blur_inplace(std::vector<float>& img, int size, double sigma) {
  if (sigma <= 0.0) return;
  const int half = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double w = std::exp(-0.5 * (i / sigma) * (i / sigma));
    kernel[static_cast<std::size_t>(i + half)] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : kernel) w = static_cast<float>(w / sum);

  std::vector<float> tmp(img.size());
  // horizontal
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      float acc = 0.0f;
      for (int i = -half; i <= half; ++i) {
        const int xi = std::clamp(x + i, 0, size - 1);
        acc += kernel[static_cast<std::size_t>(i + half)] *
               img[static_cast<std::size_t>(y) * size + xi];
      }
      tmp[static_cast<std::size_t>(y) * size + x] = acc;
    }
  // vertical
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      float acc = 0.0f;
      for (int i = -half; i <= half; ++i) {
        const int yi = std::clamp(y + i, 0, size - 1);
        acc += kernel[static_cast<std::size_t>(i + half)] *
               tmp[static_cast<std::size_t>(yi) * size + x];
      }
      img[static_cast<std::size_t>(y) * size + x] = acc;
    }
}

std::string identity_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "id%03d", i);
  return buf;
}

}  // namespace

ParamMap synth_appearance_params(std::uint64_t motion_seed, const std::string& target_id) {
  Rng rng(mix_seed(mix_seed(motion_seed, "appearance"), target_id));
  ParamMap p;
  p["face_cx"] = 64.0 + rng.uniform(-5.0, 5.0);
  p["face_cy"] = 62.0 + rng.uniform(-4.0, 4.0);
  p["face_rx"] = rng.uniform(34.0, 44.0);
  p["face_ry"] = rng.uniform(46.0, 56.0);
  p["skin"] = rng.uniform(0.55, 0.80);
  p["background"] = rng.uniform(0.08, 0.30);
  p["tex_amp"] = rng.uniform(0.02, 0.07);
  p["tex_fx"] = rng.uniform(0.15, 0.8);
  p["tex_fy"] = rng.uniform(0.15, 0.8);
  p["tex_phase"] = rng.uniform(0.0, kTau);
  p["eye_dx"] = rng.uniform(13.0, 18.0);
  p["eye_y"] = rng.uniform(-14.0, -8.0);   // relative to face center
  p["eye_r"] = rng.uniform(4.0, 6.0);
  p["brow_gap"] = rng.uniform(7.0, 10.0);  // brow distance above eye
  p["brow_len"] = rng.uniform(6.0, 9.0);
  p["mouth_y"] = rng.uniform(18.0, 26.0);  // below face center
  p["mouth_w"] = rng.uniform(9.0, 14.0);
  return p;
}

ParamMap synth_motion_params(std::uint64_t motion_seed, const std::string& driver_id) {
  Rng rng(mix_seed(mix_seed(motion_seed, "motion"), driver_id));
  ParamMap p;
  // Frequencies carry most of the identity signal; amplitudes overlap across
  // drivers so a single frame stays ambiguous.
  p["brow_freq"] = rng.uniform(0.020, 0.160);
  p["brow_amp"] = rng.uniform(2.4, 4.2);
  p["brow_asym"] = rng.uniform(0.30, 1.00);
  p["blink_period"] = std::floor(rng.uniform(18.0, 56.0));
  p["blink_len"] = std::floor(rng.uniform(2.0, 5.0));
  p["mouth_freq"] = rng.uniform(0.025, 0.200);
  p["mouth_amp"] = rng.uniform(2.6, 5.4);
  p["mouth_shape"] = rng.uniform(0.0, 0.7);
  p["sway_freq"] = rng.uniform(0.008, 0.050);
  p["sway_amp"] = rng.uniform(0.8, 2.4);
  p["gaze_freq"] = rng.uniform(0.010, 0.090);
  p["gaze_amp"] = rng.uniform(0.6, 1.8);
  return p;
}

ParamMap synth_video_phases(std::uint64_t video_seed) {
  Rng rng(mix_seed(video_seed, "phases"));
  ParamMap p;
  p["brow"] = rng.uniform(0.0, kTau);
  p["mouth"] = rng.uniform(0.0, kTau);
  p["sway"] = rng.uniform(0.0, kTau);
  p["sway2"] = rng.uniform(0.0, kTau);
  p["gaze"] = rng.uniform(0.0, kTau);
  p["blink_off"] = std::floor(rng.uniform(0.0, 40.0));
  return p;
}

void synth_render_frame(const ParamMap& app, const ParamMap& mot, const ParamMap& phase,
                        const std::string& style_tag, int t, int size,
                        std::vector<float>& out) {
  const StyleParams style = style_params(style_tag);
  const double scale = size / 128.0;
  auto a = [&](const char* k) { return app.at(k); };
  auto m = [&](const char* k) { return mot.at(k); };
  auto ph = [&](const char* k) { return phase.at(k); };

  const double sway_x = m("sway_amp") * std::sin(kTau * m("sway_freq") * t + ph("sway"));
  const double sway_y =
      0.6 * m("sway_amp") * std::cos(kTau * m("sway_freq") * 0.83 * t + ph("sway2"));
  const double cx = (a("face_cx") + sway_x) * scale;
  const double cy = (a("face_cy") + sway_y) * scale;
  const double rx = a("face_rx") * scale;
  const double ry = a("face_ry") * scale;

  const double brow_wave = std::sin(kTau * m("brow_freq") * t + ph("brow"));
  const double brow_lift_l = m("brow_amp") * m("brow_asym") * brow_wave;
  const double brow_lift_r = m("brow_amp") * brow_wave;

  const double blink_u =
      std::fmod(t + ph("blink_off"), std::max(2.0, m("blink_period")));
  const double aperture = blink_u < m("blink_len") ? 0.15 : 1.0;

  double mouth_open = m("mouth_amp") * (0.5 + 0.5 * std::sin(kTau * m("mouth_freq") * t +
                                                             ph("mouth")) +
                                        0.3 * m("mouth_shape") *
                                            std::sin(2.0 * kTau * m("mouth_freq") * t +
                                                     2.0 * ph("mouth")));
  mouth_open = std::max(0.6, mouth_open);

  const double gaze_x = m("gaze_amp") * std::sin(kTau * m("gaze_freq") * t + ph("gaze"));

  const double eye_y = cy + a("eye_y") * scale;
  const double eye_dx = a("eye_dx") * scale;
  const double eye_r = a("eye_r") * scale;
  const double brow_y_l = eye_y - (a("brow_gap") + brow_lift_l) * scale;
  const double brow_y_r = eye_y - (a("brow_gap") + brow_lift_r) * scale;
  const double mouth_cy = cy + a("mouth_y") * scale;

  out.assign(static_cast<std::size_t>(size) * size, 0.0f);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = a("background") + 0.08 * (static_cast<double>(y) / size);

      const double face = soft_ellipse(x, y, cx, cy, rx, ry);
      if (face > 0.0) {
        const double tex = a("tex_amp") * std::sin(a("tex_fx") * x / scale + a("tex_phase")) *
                           std::sin(a("tex_fy") * y / scale);
        v = v * (1.0 - face) + (a("skin") + tex) * face;

        for (int side = 0; side < 2; ++side) {
          const double ex = side == 0 ? cx - eye_dx : cx + eye_dx;
          const double eye =
              soft_ellipse(x, y, ex, eye_y, eye_r, std::max(0.8, eye_r * 0.62 * aperture));
          v = v * (1.0 - eye) + 0.16 * eye;
          if (aperture > 0.5) {
            const double pupil =
                soft_ellipse(x, y, ex + gaze_x * scale, eye_y, 1.6 * scale, 1.6 * scale);
            v = v * (1.0 - pupil) + 0.05 * pupil;
          }
          const double brow_y = side == 0 ? brow_y_l : brow_y_r;
          const double brow =
              soft_box(x, y, ex, brow_y, a("brow_len") * scale, 1.6 * scale);
          v = v * (1.0 - brow) + 0.22 * brow;
        }

        const double mouth = soft_ellipse(x, y, cx, mouth_cy, a("mouth_w") * scale,
                                          std::max(0.8, mouth_open * scale));
        v = v * (1.0 - mouth) + 0.18 * mouth;
      }

      v = std::pow(clamp01(v), style.gamma);
      out[static_cast<std::size_t>(y) * size + x] = static_cast<float>(v);
    }
  }

  gaussian_blur_inplace(out, size, style.blur_sigma);
}

namespace {

struct VideoTask {
  std::string target;
  std::string driver;
  std::string style;
  int index;
  Split split;
  std::string dir_name;
  std::int64_t num_frames;
};

}  // namespace

Manifest generate_synthetic_dataset(const SynthConfig& cfg,
                                    const std::filesystem::path& out_dir) {
  if (cfg.n_identities < 2) throw ConfigError("synth: n_identities must be >= 2");
  if (cfg.frame_count_range[0] < 1 || cfg.frame_count_range[1] < cfg.frame_count_range[0])
    throw ConfigError("synth: bad frame_count_range");
  if (cfg.frame_size < 32) throw ConfigError("synth: frame_size must be >= 32");
  if (cfg.videos_per_pair < 1) throw ConfigError("synth: videos_per_pair must be >= 1");
  if (cfg.style_tags.empty()) throw ConfigError("synth: need at least one style tag");

  std::array<int, 3> counts = cfg.split_counts;
  if (counts[0] == 0 && counts[1] == 0 && counts[2] == 0) counts = {cfg.n_identities, 0, 0};
  if (counts[0] + counts[1] + counts[2] != cfg.n_identities)
    throw ConfigError("synth: split_counts must sum to n_identities");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "videos", ec);
  if (ec) throw IoError("cannot create output dir '" + (out_dir / "videos").string() + "'");

  // Identity -> split assignment is positional and deterministic.
  std::vector<std::pair<std::string, Split>> identities;
  for (int i = 0; i < cfg.n_identities; ++i) {
    Split s = i < counts[0] ? Split::train
                            : (i < counts[0] + counts[1] ? Split::val : Split::test);
    identities.emplace_back(identity_name(i), s);
  }

  const int vpp_eval = cfg.videos_per_pair_eval > 0 ? cfg.videos_per_pair_eval
                                                    : cfg.videos_per_pair;

  std::vector<VideoTask> tasks;
  for (Split split : {Split::train, Split::val, Split::test}) {
    std::vector<std::string> ids;
    for (const auto& [id, s] : identities)
      if (s == split) ids.push_back(id);
    const int vpp = split == Split::train ? cfg.videos_per_pair : vpp_eval;
    for (const auto& target : ids)
      for (const auto& driver : ids)
        for (const auto& style : cfg.style_tags)
          for (int k = 0; k < vpp; ++k) {
            VideoTask task;
            task.target = target;
            task.driver = driver;
            task.style = style;
            task.index = k;
            task.split = split;
            task.dir_name = target + "_" + driver + "_" + style + "_" +
                            std::to_string(k);
            const std::uint64_t vseed =
                mix_seed(mix_seed(mix_seed(mix_seed(cfg.motion_seed, task.target),
                                           task.driver),
                                  task.style),
                         static_cast<std::uint64_t>(k));
            Rng vrng(mix_seed(vseed, "frame-count"));
            task.num_frames =
                vrng.uniform_int(cfg.frame_count_range[0], cfg.frame_count_range[1]);
            tasks.push_back(std::move(task));
          }
  }

  const std::int64_t n_tasks = static_cast<std::int64_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ti = 0; ti < n_tasks; ++ti) {
    const VideoTask& task = tasks[static_cast<std::size_t>(ti)];
    const std::filesystem::path vdir = out_dir / "videos" / task.dir_name;
    std::filesystem::create_directories(vdir);

    const ParamMap app = synth_appearance_params(cfg.motion_seed, task.target);
    const ParamMap mot = synth_motion_params(cfg.motion_seed, task.driver);
    const std::uint64_t vseed =
        mix_seed(mix_seed(mix_seed(mix_seed(cfg.motion_seed, task.target), task.driver),
                          task.style),
                 static_cast<std::uint64_t>(task.index));
    const ParamMap phases = synth_video_phases(vseed);
    const StyleParams style = style_params(task.style);
    Rng noise_rng(mix_seed(vseed, "noise"));

    std::vector<float> frame;
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(cfg.frame_size) *
                                    cfg.frame_size);
    for (std::int64_t t = 0; t < task.num_frames; ++t) {
      synth_render_frame(app, mot, phases, task.style, static_cast<int>(t), cfg.frame_size,
                         frame);
      for (std::size_t i = 0; i < frame.size(); ++i) {
        const double noisy = frame[i] + noise_rng.normal() * style.noise_std;
        bytes[i] = static_cast<std::uint8_t>(std::lround(clamp01(noisy) * 255.0));
      }
      char name[32];
      std::snprintf(name, sizeof(name), "f_%06lld.pgm", static_cast<long long>(t));
      write_pgm(vdir / name, bytes.data(), cfg.frame_size, cfg.frame_size);
    }

    json meta;
    meta["appearance_params"] = app;
    meta["motion_params"] = mot;
    meta["style_tag"] = task.style;
    std::ofstream meta_out(vdir / "meta.json");
    meta_out << meta.dump(2) << "\n";
    if (!meta_out) throw IoError("cannot write sidecar for '" + task.dir_name + "'");
  }

  Manifest manifest;
  for (const auto& task : tasks) {
    VideoRecord rec;
    rec.video_path = "videos/" + task.dir_name;
    rec.target_id = task.target;
    rec.driver_id = task.driver;
    rec.generator = task.style;
    rec.split = task.split;
    rec.num_frames = task.num_frames;
    rec.fps = cfg.fps;
    manifest.records.push_back(std::move(rec));
  }
  validate_manifest(manifest, out_dir);
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace fingerdiff
