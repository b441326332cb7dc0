#pragma once

// Scalar-loop reimplementations of the encoder and decoder blocks, used by
// the verification suite as an independent reference. No tape, no Eigen
// expressions: every sum is an explicit loop.

#include <string>
#include <vector>

#include "avsd/decoder.hpp"

namespace avsd::naive {

using Grid = std::vector<std::vector<double>>;

Grid to_grid(const Matrix& m);
double max_abs_diff(const Grid& a, const Matrix& b);

std::pair<Grid, Grid> encoder_block(const ParameterSet& ps, const std::string& prefix, const Grid& audio,
                                    const Grid& visual, int heads);

// `caption` is ignored unless cfg.use_caption.
Grid decoder_block(const ParameterSet& ps, const std::string& prefix, const Grid& y, const Grid& audio,
                   const Grid& visual, const Grid& caption, const model::DecoderConfig& cfg);

}  // namespace avsd::naive
