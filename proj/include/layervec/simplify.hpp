#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "layervec/image.hpp"

namespace layervec {

/// Level 0 is the original; higher levels are progressively simpler.
struct SimplificationSequence {
  std::string method;
  std::vector<Image> levels;
  std::vector<std::map<std::string, double>> params;

  std::size_t size() const { return levels.size(); }
};

/// Separable Gaussian, sigma = kernel_size / 3, taps over [-kernel_size, kernel_size],
/// half-sample symmetric borders.
Image gaussian_blur(const Image& img, int kernel_size);

/// Bilateral filter with OpenCV parameter conventions: circular window of
/// radius diameter/2, sigma_color over 0..255-scaled RGB distance, sigma_space
/// in pixels. An infinite sigma_color disables the range term.
Image bilateral_filter(const Image& img, int diameter, double sigma_color, double sigma_space);

struct SlicResult {
  std::vector<int> labels;  // one per pixel, dense 0..count-1
  int count = 0;
  Image mean_color;
};

SlicResult slic(const Image& img, int superpixels, double compactness = 10.0, int iterations = 10);

SimplificationSequence gaussian_sequence(const Image& img, const std::vector<int>& kernel_sizes = {2, 6, 10, 14});
SimplificationSequence bilateral_sequence(const Image& img, int levels = 4);
SimplificationSequence slic_sequence(const Image& img, const std::vector<int>& counts = {400, 200, 100, 50});

/// Reads a sequence.json manifest and the PNGs next to it.
SimplificationSequence load_sequence(const std::filesystem::path& manifest);

/// Writes level_K.png files and sequence.json into dir.
void save_sequence(const SimplificationSequence& seq, const std::filesystem::path& dir);

/// Mean absolute 4-neighbour Laplacian over all samples; a blur proxy.
double mean_abs_laplacian(const Image& img);

}  // namespace layervec
