#include "multiattn/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "multiattn/errors.hpp"

namespace multiattn {

void write_trace_tsv(std::ostream& out, const AttentionTrace& trace, const std::vector<std::string>& token_names) {
  out << "step\ttoken";
  for (const auto& c : trace.columns) out << "\tmass_" << c;
  out << '\n';
  for (std::size_t i = 0; i < trace.steps(); ++i) {
    const auto tok = i < trace.tokens.size() ? trace.tokens[i] : 0;
    out << i << '\t' << (tok < token_names.size() ? token_names[tok] : std::to_string(tok));
    for (double m : trace.mass[i]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", m);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

GrayImage attention_heatmap(const AttentionTrace& trace) {
  GrayImage img;
  img.width = trace.steps();
  img.height = trace.columns.size();
  img.pixels.assign(img.width * img.height, 0);
  for (std::size_t step = 0; step < img.width; ++step) {
    if (trace.mass[step].size() != img.height) throw DataError("attention trace row has wrong width");
    for (std::size_t c = 0; c < img.height; ++c) {
      const double m = std::clamp(trace.mass[step][c], 0.0, 1.0);
      img.pixels[c * img.width + step] = static_cast<std::uint8_t>(std::lround(255.0 * m));
    }
  }
  return img;
}

void write_pgm(std::ostream& out, const GrayImage& image) {
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

}  // namespace multiattn
