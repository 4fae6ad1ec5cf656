#include "corrtrack/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace corrtrack {
namespace {

unsigned char quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::size_t parse_dim(const std::string& tok, const std::string& path) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("bad header in " + path);
  }
  if (pos != tok.size() || v == 0)
    throw std::runtime_error("bad header in " + path);
  return static_cast<std::size_t>(v);
}

std::vector<unsigned char> read_netpbm(const std::string& path,
                                       const std::string& magic,
                                       std::size_t samples_per_pixel,
                                       std::size_t* h, std::size_t* w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (next_token(in) != magic)
    throw std::runtime_error(path + " is not a " + magic + " file");
  const std::size_t width = parse_dim(next_token(in), path);
  const std::size_t height = parse_dim(next_token(in), path);
  if (parse_dim(next_token(in), path) != 255)
    throw std::runtime_error(path + ": only maxval 255 is supported");
  std::vector<unsigned char> raw(samples_per_pixel * width * height);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error(path + ": truncated pixel data");
  *h = height;
  *w = width;
  return raw;
}

}  // namespace

Tensor image_to_tensor(const Image& img) {
  return Tensor::from_data({3, img.height, img.width}, img.data);
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(3 * img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        row[3 * x + c] = quantize(img.at(c, y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Image read_ppm(const std::string& path) {
  std::size_t h = 0, w = 0;
  const std::vector<unsigned char> raw = read_netpbm(path, "P6", 3, &h, &w);
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = raw[3 * (y * w + x) + c] / 255.0;
  return img;
}

void write_pgm(const std::string& path, std::size_t h, std::size_t w,
               const std::vector<double>& gray) {
  if (gray.size() != h * w)
    throw std::invalid_argument("write_pgm: value count does not match h*w");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) bytes[i] = quantize(gray[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_pgm(const std::string& path, std::size_t* h,
                             std::size_t* w) {
  const std::vector<unsigned char> raw = read_netpbm(path, "P5", 1, h, w);
  std::vector<double> gray(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) gray[i] = raw[i] / 255.0;
  return gray;
}

}  // namespace corrtrack
