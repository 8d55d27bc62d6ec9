#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfnn/rng.hpp"
#include "sfnn/tensor.hpp"

namespace sfnn {

/// An immutable labeled image collection. Every image shares one shape
/// (h x w x c, values in [0,1]); provenance records how the set was made so
/// cached datasets stay auditable.
struct LabeledImageSet {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::string provenance;

    std::size_t size() const { return images.size(); }
    const Shape& image_shape() const;
    void validate() const; // sizes match, labels < 10, pixels in [0,1]
};

/// Big-endian IDX ingestion (the standard MNIST distribution format).
/// Image files carry magic 0x00000803 and dims (N, rows, cols); label files
/// carry 0x00000801 and (N). Bytes are scaled to [0,1] by /255.
LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path);

/// Inverse of load_idx: pixels are rounded to bytes (clamped to [0,255]).
void save_idx(const LabeledImageSet& set, const std::string& images_path,
              const std::string& labels_path);

/// Text matrix reader: one row per sample, 785 whitespace-separated numbers
/// (784 pixels already in [0,1], then the label).
LabeledImageSet load_amat(const std::string& path);

enum class VariationKind { rot, rand, img };
VariationKind variation_from_name(const std::string& name);
std::string variation_name(VariationKind kind);

/// Tuning knobs for make_variation; the defaults are the documented
/// conventions, the overrides exist for oracle tests.
struct VariationOptions {
    double noise_amplitude = 0.8;  // rand: noise is amplitude * U[0,1]
    double background_gain = 0.8;  // img: background scaled before compositing
    bool force_angle = false;      // rot: use `angle` instead of drawing one
    double angle = 0.0;
};

/// Rotates about the image center by `angle` radians (counterclockwise in
/// row/column space), bilinear resampling, zero outside the source extent.
Tensor rotate_image(const Tensor& image, double angle);

/// Derives a benchmark-style variation set: rot rotates each image by an
/// angle uniform in [0, 2pi); rand and img composite a background behind the
/// digit with out = max(digit, gain * background). Labels and order are kept.
/// img requires a pool of background images to draw patches from.
LabeledImageSet make_variation(const LabeledImageSet& set, VariationKind kind, std::uint64_t seed,
                               const LabeledImageSet* background_pool = nullptr,
                               const VariationOptions& options = {});

/// Stratified subsampling for the limited-supervision protocol.
struct SubsampleSpec {
    std::size_t per_class = 0;
    std::uint64_t trial_seed = 0;
};

/// Picks exactly per_class samples of every class by seeded shuffle, without
/// replacement. The chosen original indices (ascending) are appended to
/// `chosen_indices` when non-null and recorded in the provenance text.
LabeledImageSet subsample(const LabeledImageSet& set, const SubsampleSpec& spec,
                          std::vector<std::size_t>* chosen_indices = nullptr);

/// Self-contained digit corpus: glyph bitmaps warped by a random affine map
/// (jittered position, rotation, scale, shear), with intensity jitter and
/// additive noise. Serves as a stand-in distribution wherever the benchmark
/// files are unavailable; images are 28 x 28 x 1.
LabeledImageSet synthetic_digits(std::size_t per_class, std::uint64_t seed);

/// Key-value sidecar next to cached datasets ("key = value" lines).
void write_sidecar(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& entries);

} // namespace sfnn
