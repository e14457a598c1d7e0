#include "evego/image_io.hpp"

#include <cctype>
#include <fstream>

#include "evego/errors.hpp"

namespace evego {

namespace {

// Next whitespace-delimited header token, skipping `#` comments.
std::string next_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

int parse_positive(const std::string& token, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    int v = std::stoi(token, &used);
    if (used == token.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::ParseError, "bad PGM header field '" + token + "' in " + path.string());
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.geometry.pixel_count())
    throw Error(ErrorCode::ShapeMismatch, "image buffer does not match geometry");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << "P5\n" << image.geometry.width << ' ' << image.geometry.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  if (next_token(in) != "P5") throw Error(ErrorCode::ParseError, "not a P5 PGM: " + path.string());
  SensorGeometry g;
  g.width = parse_positive(next_token(in), path);
  g.height = parse_positive(next_token(in), path);
  if (parse_positive(next_token(in), path) != 255)
    throw Error(ErrorCode::ParseError, "only 8-bit PGM supported: " + path.string());
  GrayImage image(g);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size()))
    throw Error(ErrorCode::ParseError, "truncated PGM: " + path.string());
  return image;
}

}  // namespace evego
