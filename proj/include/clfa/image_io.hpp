#pragma once
// image_io.hpp - image decode/encode at the dataset boundary.
//
// PPM/PGM have a native codec so the synthetic pipeline has no library
// dependency; everything else (png/jpg/bmp) goes through OpenCV's
// imgcodecs. Decoded pixels land in [0,1] doubles, RGB channel order.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "clfa/image.hpp"

namespace clfa {

namespace detail {

inline int ppm_next_int(std::istream& in, const std::string& path) {
  // skips whitespace and '#' comment lines between header tokens
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("malformed ppm header in " + path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

inline bool has_suffix(const std::string& s, const std::string& suf) {
  if (s.size() < suf.size()) return false;
  std::string tail = s.substr(s.size() - suf.size());
  std::transform(tail.begin(), tail.end(), tail.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return tail == suf;
}

}  // namespace detail

inline ImageTensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6')) throw IoError("not a binary pnm file: " + path);
  const int channels = m1 == '6' ? 3 : 1;
  const int w = detail::ppm_next_int(in, path);
  const int h = detail::ppm_next_int(in, path);
  const int maxval = detail::ppm_next_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw IoError("unsupported pnm geometry in " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw IoError("truncated pnm payload in " + path);
  ImageTensor img(h, w, channels);
  const double inv = 1.0 / maxval;
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] * inv;
  return img;
}

inline void write_ppm(const std::string& path, const ImageTensor& img) {
  require_arg(img.channels == 3 || img.channels == 1, "ppm writer wants 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path);
  out << (img.channels == 3 ? "P6\n" : "P5\n") << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = clamp01(img.data[i]);
    raw[i] = static_cast<unsigned char>(v * 255.0 + 0.5);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write on image " + path);
}

inline bool is_image_file(const std::string& path) {
  using detail::has_suffix;
  return has_suffix(path, ".ppm") || has_suffix(path, ".pgm") || has_suffix(path, ".png") ||
         has_suffix(path, ".jpg") || has_suffix(path, ".jpeg") || has_suffix(path, ".bmp");
}

// decode any supported format to RGB (or grayscale for single-channel pgm)
inline ImageTensor read_image(const std::string& path) {
  if (detail::has_suffix(path, ".ppm") || detail::has_suffix(path, ".pgm"))
    return read_pnm(path);
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);  // BGR uint8
  if (m.empty()) throw IoError("cannot decode image " + path);
  ImageTensor img(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.0;
      img.at(y, x, 1) = row[x][1] / 255.0;
      img.at(y, x, 2) = row[x][0] / 255.0;
    }
  }
  return img;
}

}  // namespace clfa
