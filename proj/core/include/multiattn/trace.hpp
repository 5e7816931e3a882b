#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace multiattn {

/// Per-step attention mass over the encoders (and the sentinel, last).
struct AttentionTrace {
  std::vector<std::string> columns;
  std::vector<std::size_t> tokens;           // symbol produced at each step
  std::vector<std::vector<double>> mass;     // steps x columns

  std::size_t steps() const noexcept { return mass.size(); }
};

/// Tab-separated table: step, token, then one mass column per entry of
/// trace.columns. `token_names` maps ids to strings.
void write_trace_tsv(std::ostream& out, const AttentionTrace& trace, const std::vector<std::string>& token_names);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// One column per decoding step, one row per trace column (encoders, then
/// the sentinel). Intensity is round(255 * mass): white = all attention.
GrayImage attention_heatmap(const AttentionTrace& trace);

/// Binary PGM: "P5\n<width> <height>\n255\n" followed by width*height bytes.
void write_pgm(std::ostream& out, const GrayImage& image);

}  // namespace multiattn
