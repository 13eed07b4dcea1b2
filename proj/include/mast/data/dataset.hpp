#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mast/data/clip.hpp"

namespace mast::data {

namespace fs = std::filesystem;

/// "frame2" < "frame10": digit runs compare by value.
inline bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
      nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      if (ie - i != je - j) return ie - i < je - j;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

inline std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

/// 8-bit BGR image -> 3 x H x W in [0, 1], RGB order.
inline Tensor image_to_tensor(const cv::Mat& bgr) {
  const std::size_t h = static_cast<std::size_t>(bgr.rows), w = static_cast<std::size_t>(bgr.cols);
  std::vector<double> v(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) v[c * h * w + y * w + x] = row[x][2 - c] / 255.0;
  }
  return Tensor({3, h, w}, std::move(v));
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)); }

inline cv::Mat tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw DimensionError("expected a 3 x H x W frame, got " + shape_str(t.shape()));
  const std::size_t h = t.dim(1), w = t.dim(2);
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
  auto d = t.data();
  for (std::size_t y = 0; y < h; ++y) {
    auto* row = m.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) row[x][2 - c] = to_byte(d[c * h * w + y * w + x]);
  }
  return m;
}

/// Single-plane map in [0, 1] -> 8-bit grayscale, round half up.
inline cv::Mat map_to_gray(std::span<const double> v, std::size_t h, std::size_t w) {
  if (v.size() != h * w) throw DimensionError("map size does not match " + std::to_string(h) + "x" + std::to_string(w));
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = to_byte(v[i]);
  return m;
}

inline cv::Mat read_image(const fs::path& p, int flags) {
  cv::Mat m = cv::imread(p.string(), flags);
  if (m.empty()) throw DataError("cannot read image " + p.string());
  return m;
}

inline void write_image(const fs::path& p, const cv::Mat& m) {
  if (!cv::imwrite(p.string(), m)) throw DataError("cannot write image " + p.string());
}

/// Grayscale PNG divided by 255.
inline std::vector<double> read_gray(const fs::path& p, std::size_t& h, std::size_t& w) {
  cv::Mat m = read_image(p, cv::IMREAD_GRAYSCALE);
  h = static_cast<std::size_t>(m.rows);
  w = static_cast<std::size_t>(m.cols);
  std::vector<double> v(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = row[x] / 255.0;
  }
  return v;
}

/// <dir>/Frame/*.png|jpg with masks <dir>/GT/<stem>.png, binarized at 128.
inline VideoClip load_clip(const fs::path& dir) {
  const fs::path frame_dir = dir / "Frame", gt_dir = dir / "GT";
  if (!fs::is_directory(frame_dir) || !fs::is_directory(gt_dir)) {
    throw DataError("clip directory " + dir.string() + " lacks Frame/ or GT/");
  }
  std::vector<fs::path> frames, masks;
  for (const auto& e : fs::directory_iterator(frame_dir)) {
    const auto ext = lower_ext(e.path());
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) frames.push_back(e.path());
  }
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && lower_ext(e.path()) == ".png") masks.push_back(e.path());
  }
  auto by_name = [](const fs::path& a, const fs::path& b) { return natural_less(a.filename().string(), b.filename().string()); };
  std::sort(frames.begin(), frames.end(), by_name);
  for (const auto& f : frames) {
    const fs::path m = gt_dir / (f.stem().string() + ".png");
    if (!fs::exists(m)) throw DataError("missing mask " + m.string() + " for frame " + f.string());
  }
  if (frames.size() != masks.size()) {
    throw DataError("clip " + dir.string() + ": " + std::to_string(frames.size()) + " frames but " + std::to_string(masks.size()) + " masks");
  }
  VideoClip clip;
  clip.id = dir.filename().string();
  for (const auto& f : frames) {
    clip.frames.push_back(image_to_tensor(read_image(f, cv::IMREAD_COLOR)));
    std::size_t h = 0, w = 0;
    auto v = read_gray(gt_dir / (f.stem().string() + ".png"), h, w);
    for (auto& x : v) x = x * 255.0 >= 128.0 ? 1.0 : 0.0;
    clip.masks.emplace_back(Shape{1, h, w}, std::move(v));
  }
  clip.validate();
  return clip;
}

/// Every subdirectory of `root` is one clip, in natural name order.
inline std::vector<VideoClip> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end(), [](const fs::path& a, const fs::path& b) {
    return natural_less(a.filename().string(), b.filename().string());
  });
  std::vector<VideoClip> out;
  for (const auto& d : dirs) out.push_back(load_clip(d));
  return out;
}

inline std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

/// Writes <root>/<id>/Frame/NNNNN.png and GT/NNNNN.png.
inline void export_clip(const fs::path& root, const VideoClip& clip) {
  clip.validate();
  const fs::path dir = root / clip.id;
  fs::create_directories(dir / "Frame");
  fs::create_directories(dir / "GT");
  for (std::size_t i = 0; i < clip.size(); ++i) {
    write_image(dir / "Frame" / (frame_name(i) + ".png"), tensor_to_image(clip.frames[i]));
    write_image(dir / "GT" / (frame_name(i) + ".png"), map_to_gray(clip.masks[i].data(), clip.height(), clip.width()));
  }
}

inline void export_dataset(const fs::path& root, const std::vector<VideoClip>& clips) {
  for (const auto& c : clips) export_clip(root, c);
}

/// Bilinear for frames, nearest for masks.
inline VideoClip resize_clip(const VideoClip& clip, std::size_t size) {
  if (clip.height() == size && clip.width() == size) return clip;
  VideoClip out;
  out.id = clip.id;
  out.fps = clip.fps;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    cv::Mat f;
    cv::resize(tensor_to_image(clip.frames[i]), f, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_LINEAR);
    out.frames.push_back(image_to_tensor(f));
    cv::Mat m;
    cv::resize(map_to_gray(clip.masks[i].data(), clip.height(), clip.width()), m, cv::Size(static_cast<int>(size), static_cast<int>(size)),
               0, 0, cv::INTER_NEAREST);
    std::vector<double> v(size * size);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = m.data[k] >= 128 ? 1.0 : 0.0;
    out.masks.emplace_back(Shape{1, size, size}, std::move(v));
  }
  return out;
}

}  // namespace mast::data
