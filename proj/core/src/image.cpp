#include "pavepci/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace pavepci {

namespace {

enum class Format { png, jpeg, unknown };

Format sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), sizeof(sig));
  if (in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0) return Format::png;
  if (in.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return Format::jpeg;
  return Format::unknown;
}

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw LoadError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw LoadError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Corrupt-data warnings (truncated scans and the like) are fatal; trace
// messages are ignored.
void jpeg_message(j_common_ptr cinfo, int level) {
  if (level < 0) jpeg_fail(cinfo);
}

// Decodes into `out`; returns false with `message` set on failure. Kept free
// of C++ objects with destructors between setjmp and longjmp.
bool decode_jpeg(std::FILE* file, Image& out, std::string& message) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  err.mgr.emit_message = jpeg_message;
  if (setjmp(err.jump)) {
    message = err.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.assign(static_cast<std::size_t>(out.width) * out.height * 3, 0);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Image read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw LoadError("cannot open image " + path.string());
  Image out;
  std::string message;
  if (!decode_jpeg(file.get(), out, message)) {
    throw LoadError("cannot decode JPEG " + path.string() + ": " + message);
  }
  return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  Image img;
  switch (sniff(path)) {
    case Format::png:
      img = read_png(path);
      break;
    case Format::jpeg:
      img = read_jpeg(path);
      break;
    case Format::unknown:
      throw LoadError("unrecognized image format: " + path.string());
  }
  if (img.width < 1 || img.height < 1) throw LoadError("empty image: " + path.string());
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw InputError("write_png: inconsistent image buffer");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

Tensor<float> to_tensor(const Image& image) {
  Tensor<float> t(1, 3, image.height, image.width);
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) t[c * plane + i] = image.pixels[i * 3 + c] / 255.0f;
  }
  return t;
}

Image to_image(const Tensor<float>& t, int b) {
  if (t.c() != 3 || b < 0 || b >= t.n()) throw InputError("to_image: expected (B,3,H,W)");
  Image img(t.w(), t.h());
  const std::size_t plane = t.shape().plane();
  for (int c = 0; c < 3; ++c) {
    const float* src = t.plane(b, c);
    for (std::size_t i = 0; i < plane; ++i) {
      const float v = std::clamp(src[i], 0.0f, 1.0f);
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& t, int height, int width) {
  if (height < 1 || width < 1) throw InputError("resize_bilinear: target must be positive");
  if (t.h() < 1 || t.w() < 1) throw InputError("resize_bilinear: empty input " + t.shape().str());
  Tensor<T> out(t.n(), t.c(), height, width);
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in, int out_size) {
    std::vector<Tap> v(out_size);
    const double scale = static_cast<double>(in) / out_size;
    for (int o = 0; o < out_size; ++o) {
      const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in - 1);
      v[o] = {i0, i1, src - i0};
    }
    return v;
  };
  const auto ty = taps(t.h(), height);
  const auto tx = taps(t.w(), width);
  for (int b = 0; b < t.n(); ++b) {
    for (int c = 0; c < t.c(); ++c) {
      const T* src = t.plane(b, c);
      T* dst = out.plane(b, c);
      for (int y = 0; y < height; ++y) {
        const T* r0 = src + static_cast<std::size_t>(ty[y].i0) * t.w();
        const T* r1 = src + static_cast<std::size_t>(ty[y].i1) * t.w();
        const double fy = ty[y].f;
        for (int x = 0; x < width; ++x) {
          const Tap& h = tx[x];
          const double top = r0[h.i0] + (r0[h.i1] - r0[h.i0]) * h.f;
          const double bottom = r1[h.i0] + (r1[h.i1] - r1[h.i0]) * h.f;
          dst[static_cast<std::size_t>(y) * width + x] = static_cast<T>(top + (bottom - top) * fy);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (int b = 0; b < t.n(); ++b) {
    for (int c = 0; c < t.c(); ++c) {
      for (int y = 0; y < t.h(); ++y) {
        const T* src = t.plane(b, c) + static_cast<std::size_t>(y) * t.w();
        T* dst = out.plane(b, c) + static_cast<std::size_t>(y) * t.w();
        std::reverse_copy(src, src + t.w(), dst);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (int b = 0; b < t.n(); ++b) {
    for (int c = 0; c < t.c(); ++c) {
      for (int y = 0; y < t.h(); ++y) {
        std::copy_n(t.plane(b, c) + static_cast<std::size_t>(y) * t.w(), t.w(),
                    out.plane(b, c) + static_cast<std::size_t>(t.h() - 1 - y) * t.w());
      }
    }
  }
  return out;
}

template Tensor<float> resize_bilinear(const Tensor<float>&, int, int);
template Tensor<double> resize_bilinear(const Tensor<double>&, int, int);
template Tensor<float> flip_horizontal(const Tensor<float>&);
template Tensor<double> flip_horizontal(const Tensor<double>&);
template Tensor<float> flip_vertical(const Tensor<float>&);
template Tensor<double> flip_vertical(const Tensor<double>&);

}  // namespace pavepci
