#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ded {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB canvas with a few primitives; origin at the top-left pixel.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);  // ignores out-of-range pixels

  void line(double x0, double y0, double x1, double y1, Rgb c, int thickness = 1);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void disc(double cx, double cy, double r, Rgb c);
  void cross(double cx, double cy, int half, Rgb c, int thickness = 2);
  // 5x7 bitmap glyphs for digits, a few letters and punctuation; unknown
  // characters render as blanks. Returns the advance in pixels.
  int text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

  void write_png(const std::filesystem::path& path) const;
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

// Maps data coordinates into a plotting rectangle, y up.
struct PlotFrame {
  int left = 60, top = 20, right = 20, bottom = 40;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  int width = 640, height = 480;

  double px(double x) const;
  double py(double y) const;
};

// Axes box with tick labels at "nice" intervals.
void draw_axes(Canvas& canvas, const PlotFrame& frame);

}  // namespace ded
