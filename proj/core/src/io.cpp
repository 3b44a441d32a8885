#include "lemmse/io.hpp"

#include "lemmse/error.hpp"
#include "lemmse/random.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

namespace lemmse {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "NPY output assumes a little-endian host");

[[noreturn]] void unreadable(const fs::path &p, const std::string &why) {
  throw Error(ErrorCode::UnreadableFile, p.string() + ": " + why);
}

std::size_t element_count(const std::vector<std::size_t> &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_literal(const std::vector<std::size_t> &shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << shape[i] << (shape.size() == 1 || i + 1 < shape.size() ? "," : "");
    if (i + 1 < shape.size()) {
      os << " ";
    }
  }
  os << ")";
  return os.str();
}

// Value following `'key':` in the NPY header dictionary.
std::string header_field(const std::string &header, const std::string &key) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) {
    return {};
  }
  auto pos = header.find(':', k);
  if (pos == std::string::npos) {
    return {};
  }
  ++pos;
  while (pos < header.size() && header[pos] == ' ') {
    ++pos;
  }
  if (header[pos] == '(') {
    return header.substr(pos, header.find(')', pos) - pos + 1);
  }
  const auto end = header.find_first_of(",}", pos);
  return header.substr(pos, end - pos);
}

FILE *open_file(const fs::path &p, const char *mode) {
  FILE *f = std::fopen(p.c_str(), mode);
  if (f == nullptr) {
    unreadable(p, "cannot open");
  }
  return f;
}

} // namespace

void write_npy(const fs::path &path, const Tensor &t) {
  if (element_count(t.shape) != t.data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor shape does not match its data");
  }
  std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape_literal(t.shape) + ", }";
  // magic(6) + version(2) + length(2) + dict + padding + '\n' is a multiple of 64
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::UnreadableFile, path.string() + ": cannot open for writing");
  }
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(dict.size());
  const char lenbytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(lenbytes, 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(reinterpret_cast<const char *>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) {
    throw Error(ErrorCode::UnreadableFile, path.string() + ": write failed");
  }
}

Tensor read_npy(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    unreadable(path, "cannot open");
  }
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    unreadable(path, "not an NPY file");
  }
  std::size_t header_len = 0;
  if (magic[6] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char *>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else if (magic[6] == 2 || magic[6] == 3) {
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::size_t>(b[3]) << 24);
  } else {
    unreadable(path, "unsupported NPY version");
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    unreadable(path, "truncated header");
  }
  const std::string descr = header_field(header, "descr");
  const std::string fortran = header_field(header, "fortran_order");
  const std::string shape = header_field(header, "shape");
  if (fortran.find("False") == std::string::npos) {
    unreadable(path, "Fortran-ordered arrays are not supported");
  }
  const bool f8 = descr.find("<f8") != std::string::npos;
  const bool f4 = descr.find("<f4") != std::string::npos;
  if (!f8 && !f4) {
    unreadable(path, "dtype " + descr + " is not little-endian float64");
  }
  Tensor t;
  std::string digits;
  for (char c : shape) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
    } else if (!digits.empty()) {
      t.shape.push_back(std::stoull(digits));
      digits.clear();
    }
  }
  const std::size_t n = element_count(t.shape);
  t.data.resize(n);
  if (f8) {
    if (!in.read(reinterpret_cast<char *>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      unreadable(path, "truncated data");
    }
  } else {
    std::vector<float> tmp(n);
    if (!in.read(reinterpret_cast<char *>(tmp.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
      unreadable(path, "truncated data");
    }
    std::copy(tmp.begin(), tmp.end(), t.data.begin());
  }
  return t;
}

Tensor to_tensor(const ImageGrid &img) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(img.channels()), static_cast<std::size_t>(img.height()),
             static_cast<std::size_t>(img.width())};
  t.data.assign(img.values().data(), img.values().data() + img.size());
  return t;
}

Tensor to_tensor(const Dataset &d) {
  Tensor t;
  const Shape s = d.shape();
  t.shape = {d.size(), static_cast<std::size_t>(s.channels), static_cast<std::size_t>(s.height),
             static_cast<std::size_t>(s.width)};
  t.data.reserve(element_count(t.shape));
  for (const auto &img : d.items()) {
    t.data.insert(t.data.end(), img.values().data(), img.values().data() + img.size());
  }
  return t;
}

ImageGrid image_from_tensor(const Tensor &t) {
  Shape s;
  if (t.shape.size() == 3) {
    s = {static_cast<Index>(t.shape[0]), static_cast<Index>(t.shape[1]), static_cast<Index>(t.shape[2])};
  } else if (t.shape.size() == 2) {
    s = {1, static_cast<Index>(t.shape[0]), static_cast<Index>(t.shape[1])};
  } else {
    throw Error(ErrorCode::ShapeMismatch, "image tensors must be (C, H, W) or (H, W)");
  }
  return ImageGrid(s, Eigen::Map<const Vector>(t.data.data(), static_cast<Index>(t.data.size())));
}

Dataset dataset_from_tensor(const Tensor &t) {
  Shape s;
  if (t.shape.size() == 4) {
    s = {static_cast<Index>(t.shape[1]), static_cast<Index>(t.shape[2]), static_cast<Index>(t.shape[3])};
  } else if (t.shape.size() == 3) {
    s = {1, static_cast<Index>(t.shape[1]), static_cast<Index>(t.shape[2])};
  } else {
    throw Error(ErrorCode::ShapeMismatch, "dataset tensors must be (K, C, H, W) or (K, H, W)");
  }
  std::vector<ImageGrid> items;
  const auto per = static_cast<std::size_t>(s.size());
  for (std::size_t k = 0; k < t.shape[0]; ++k) {
    items.emplace_back(s, Eigen::Map<const Vector>(t.data.data() + k * per, static_cast<Index>(per)));
  }
  return Dataset(std::move(items));
}

ImageGrid read_png(const fs::path &path) {
  FILE *f = open_file(path, "rb");
  std::unique_ptr<FILE, int (*)(FILE *)> guard(f, &std::fclose);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    unreadable(path, "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    unreadable(path, "libpng initialization failed");
  }
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  int bit_depth = 0, color = 0;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    unreadable(path, "corrupt PNG data");
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  bit_depth = png_get_bit_depth(png, info);
  color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    bit_depth = 8;
  } else if (bit_depth != 8 && bit_depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UnsupportedBitDepth, path.string() + ": bit depth " + std::to_string(bit_depth));
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
  }
  png_set_strip_alpha(png);
  if (bit_depth == 16) {
    png_set_swap(png); // host order
  }
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) {
    rows[r] = buffer.data() + r * stride;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageGrid img(Shape{channels, static_cast<Index>(height), static_cast<Index>(width)});
  const double full_scale = bit_depth == 16 ? 65535.0 : 255.0;
  for (Index r = 0; r < static_cast<Index>(height); ++r) {
    for (Index c = 0; c < static_cast<Index>(width); ++c) {
      for (Index ch = 0; ch < channels; ++ch) {
        double v;
        if (bit_depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[static_cast<std::size_t>(r)] + 2 * (c * channels + ch), 2);
          v = s;
        } else {
          v = rows[static_cast<std::size_t>(r)][c * channels + ch];
        }
        img(ch, r, c) = v / full_scale;
      }
    }
  }
  return img;
}

namespace {

void write_rgb_rows(const fs::path &path, Index height, Index width, int channels, const std::vector<unsigned char> &pixels) {
  FILE *f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) {
    throw Error(ErrorCode::UnreadableFile, path.string() + ": cannot open for writing");
  }
  std::unique_ptr<FILE, int (*)(FILE *)> guard(f, &std::fclose);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::UnreadableFile, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::UnreadableFile, path.string() + ": PNG write failed");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_const_bytep> rows(static_cast<std::size_t>(height));
  for (Index r = 0; r < height; ++r) {
    rows[static_cast<std::size_t>(r)] = pixels.data() + r * width * channels;
  }
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

} // namespace

void write_png(const fs::path &path, const ImageGrid &img) {
  const Index C = img.channels(), H = img.height(), W = img.width();
  if (C != 1 && C != 3) {
    throw Error(ErrorCode::InvalidArgument, "PNG export supports 1 or 3 channels");
  }
  std::vector<unsigned char> px(static_cast<std::size_t>(C * H * W));
  for (Index r = 0; r < H; ++r) {
    for (Index c = 0; c < W; ++c) {
      for (Index ch = 0; ch < C; ++ch) {
        const double v = std::clamp(img(ch, r, c), 0.0, 1.0);
        px[static_cast<std::size_t>((r * W + c) * C + ch)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  write_rgb_rows(path, H, W, static_cast<int>(C), px);
}

std::array<std::uint8_t, 3> label_color(Index id) {
  // splitmix64 of the id; channels capped at 224 so no label is white.
  const std::uint64_t h = derive_seed(0x5eed, static_cast<std::uint64_t>(id));
  return {static_cast<std::uint8_t>((h & 0xff) % 225), static_cast<std::uint8_t>(((h >> 8) & 0xff) % 225),
          static_cast<std::uint8_t>(((h >> 16) & 0xff) % 225)};
}

void write_label_png(const fs::path &path, const std::vector<std::optional<Index>> &labels, Index height, Index width) {
  if (static_cast<Index>(labels.size()) != height * width) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not match H*W");
  }
  std::vector<unsigned char> px(static_cast<std::size_t>(3 * height * width), 255);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      const auto c = label_color(*labels[i]);
      std::copy(c.begin(), c.end(), px.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
  }
  write_rgb_rows(path, height, width, 3, px);
}

Dataset ingest_dataset(const fs::path &path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto &entry : fs::directory_iterator(path)) {
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (entry.is_regular_file() && ext == ".png") {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) {
      unreadable(path, "directory holds no PNG files");
    }
    std::sort(files.begin(), files.end());
    std::vector<ImageGrid> items;
    for (const auto &f : files) {
      items.push_back(read_png(f));
    }
    return Dataset(std::move(items));
  }
  if (!fs::exists(path, ec)) {
    unreadable(path, "no such file or directory");
  }
  if (path.extension() == ".npy") {
    return dataset_from_tensor(read_npy(path));
  }
  if (path.extension() == ".png") {
    std::vector<ImageGrid> one;
    one.push_back(read_png(path));
    return Dataset(std::move(one));
  }
  unreadable(path, "expected a directory of PNG files or a .npy tensor");
}

ImageGrid read_image(const fs::path &path) {
  if (path.extension() == ".npy") {
    return image_from_tensor(read_npy(path));
  }
  return read_png(path);
}

ImageGrid synthesize_measurement(const ImageGrid &xbar, const LinearOperator &A, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "sigma must be non-negative");
  }
  ImageGrid y = A.apply(xbar);
  if (sigma > 0.0) {
    NormalStream stream(seed);
    y.values() += sigma * stream.vector(y.size());
  }
  return y;
}

} // namespace lemmse
