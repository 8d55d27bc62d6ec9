#include "sfnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sfnn/errors.hpp"

namespace sfnn {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError(path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

double bilinear(const Tensor& image, double r, double s, std::size_t ch) {
    const auto h = double(image.dims()[0]), w = double(image.dims()[1]);
    if (r <= -1.0 || s <= -1.0 || r >= h || s >= w) return 0.0;
    const double fr = std::floor(r), fs = std::floor(s);
    const double tr = r - fr, ts = s - fs;
    auto at = [&](double rr, double ss) -> double {
        if (rr < 0.0 || ss < 0.0 || rr >= h || ss >= w) return 0.0;
        return image(std::size_t(rr), std::size_t(ss), ch);
    };
    return (1.0 - tr) * (1.0 - ts) * at(fr, fs) + (1.0 - tr) * ts * at(fr, fs + 1.0) +
           tr * (1.0 - ts) * at(fr + 1.0, fs) + tr * ts * at(fr + 1.0, fs + 1.0);
}

} // namespace

const Shape& LabeledImageSet::image_shape() const {
    if (images.empty()) throw DataError("image set is empty");
    return images.front().dims();
}

void LabeledImageSet::validate() const {
    if (images.size() != labels.size())
        throw DataError("image/label count mismatch: " + std::to_string(images.size()) + " vs " +
                        std::to_string(labels.size()));
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] > 9)
            throw DataError("sample " + std::to_string(i) + ": label " +
                            std::to_string(labels[i]) + " out of range");
        if (images[i].dims() != images.front().dims())
            throw DataError("sample " + std::to_string(i) + ": image shape differs from first");
        for (std::size_t p = 0; p < images[i].size(); ++p)
            if (!(images[i][p] >= 0.0 && images[i][p] <= 1.0))
                throw DataError("sample " + std::to_string(i) + ": pixel outside [0,1]");
    }
}

LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imf(images_path, std::ios::binary);
    if (!imf) throw DataError(images_path + ": cannot open");
    const std::uint32_t im_magic = read_be32(imf, images_path);
    if (im_magic != 0x00000803u)
        throw DataError(images_path + ": bad image magic " + hex32(im_magic) +
                        " (want 0x00000803)");
    const std::uint32_t n = read_be32(imf, images_path);
    const std::uint32_t rows = read_be32(imf, images_path);
    const std::uint32_t cols = read_be32(imf, images_path);

    std::ifstream lbf(labels_path, std::ios::binary);
    if (!lbf) throw DataError(labels_path + ": cannot open");
    const std::uint32_t lb_magic = read_be32(lbf, labels_path);
    if (lb_magic != 0x00000801u)
        throw DataError(labels_path + ": bad label magic " + hex32(lb_magic) +
                        " (want 0x00000801)");
    const std::uint32_t ln = read_be32(lbf, labels_path);
    if (ln != n)
        throw DataError("count mismatch: " + std::to_string(n) + " images vs " +
                        std::to_string(ln) + " labels");

    LabeledImageSet set;
    set.images.reserve(n);
    set.labels.reserve(n);
    std::vector<unsigned char> buf(std::size_t(rows) * cols);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!imf.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
            throw DataError(images_path + ": truncated at image " + std::to_string(i));
        Tensor img({rows, cols, 1});
        for (std::size_t p = 0; p < buf.size(); ++p) img[p] = double(buf[p]) / 255.0;
        set.images.push_back(std::move(img));
        char lb;
        if (!lbf.get(lb)) throw DataError(labels_path + ": truncated at label " + std::to_string(i));
        set.labels.push_back(std::size_t(static_cast<unsigned char>(lb)));
    }
    set.provenance = "idx:" + images_path;
    return set;
}

void save_idx(const LabeledImageSet& set, const std::string& images_path,
              const std::string& labels_path) {
    const Shape& dims = set.image_shape();
    if (dims.size() != 3 || dims[2] != 1)
        throw DataError("save_idx: want h x w x 1 images, got rank " + std::to_string(dims.size()));
    std::ofstream imf(images_path, std::ios::binary);
    if (!imf) throw DataError(images_path + ": cannot open for writing");
    write_be32(imf, 0x00000803u);
    write_be32(imf, std::uint32_t(set.size()));
    write_be32(imf, std::uint32_t(dims[0]));
    write_be32(imf, std::uint32_t(dims[1]));
    for (const Tensor& img : set.images)
        for (std::size_t p = 0; p < img.size(); ++p) {
            const double v = std::clamp(std::round(img[p] * 255.0), 0.0, 255.0);
            imf.put(char(static_cast<unsigned char>(v)));
        }

    std::ofstream lbf(labels_path, std::ios::binary);
    if (!lbf) throw DataError(labels_path + ": cannot open for writing");
    write_be32(lbf, 0x00000801u);
    write_be32(lbf, std::uint32_t(set.size()));
    for (std::size_t lb : set.labels) lbf.put(char(static_cast<unsigned char>(lb)));
    if (!imf || !lbf) throw DataError("save_idx: write failed");
}

LabeledImageSet load_amat(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open");
    LabeledImageSet set;
    std::vector<double> row;
    row.reserve(785);
    double v;
    while (in >> v) {
        row.push_back(v);
        if (row.size() == 785) {
            Tensor img({28, 28, 1});
            for (std::size_t p = 0; p < 784; ++p) img[p] = row[p];
            const double label = row[784];
            if (label < 0.0 || label > 9.0 || label != std::floor(label))
                throw DataError(path + ": sample " + std::to_string(set.size()) +
                                ": bad label column " + std::to_string(label));
            set.images.push_back(std::move(img));
            set.labels.push_back(std::size_t(label));
            row.clear();
        }
    }
    if (!row.empty())
        throw DataError(path + ": trailing " + std::to_string(row.size()) +
                        " values (rows must have 785 columns)");
    if (set.images.empty()) throw DataError(path + ": no samples");
    set.provenance = "amat:" + path;
    return set;
}

VariationKind variation_from_name(const std::string& name) {
    if (name == "rot") return VariationKind::rot;
    if (name == "rand") return VariationKind::rand;
    if (name == "img") return VariationKind::img;
    throw ConfigError("unknown variation '" + name + "' (want rot, rand, or img)");
}

std::string variation_name(VariationKind kind) {
    switch (kind) {
    case VariationKind::rot: return "rot";
    case VariationKind::rand: return "rand";
    case VariationKind::img: return "img";
    }
    throw ConfigError("unknown variation kind");
}

Tensor rotate_image(const Tensor& image, double angle) {
    const Shape& dims = image.dims();
    if (dims.size() != 3) throw DimensionError("rotate_image: want h x w x c");
    const double cr = 0.5 * double(dims[0] - 1), cs = 0.5 * double(dims[1] - 1);
    const double co = std::cos(angle), si = std::sin(angle);
    Tensor out(dims);
    for (std::size_t r = 0; r < dims[0]; ++r)
        for (std::size_t s = 0; s < dims[1]; ++s) {
            // Inverse map: where did this output pixel come from?
            const double dr = double(r) - cr, ds = double(s) - cs;
            const double src_r = cr + co * dr + si * ds;
            const double src_s = cs - si * dr + co * ds;
            for (std::size_t ch = 0; ch < dims[2]; ++ch)
                out(r, s, ch) = bilinear(image, src_r, src_s, ch);
        }
    return out;
}

LabeledImageSet make_variation(const LabeledImageSet& set, VariationKind kind, std::uint64_t seed,
                               const LabeledImageSet* background_pool,
                               const VariationOptions& options) {
    if (kind == VariationKind::img && (background_pool == nullptr || background_pool->size() == 0))
        throw DataError("img variation needs a background pool");
    const Shape& dims = set.image_shape();

    LabeledImageSet out;
    out.images.reserve(set.size());
    out.labels = set.labels;
    for (std::size_t i = 0; i < set.size(); ++i) {
        Rng rng(derive_seed(seed, i)); // per-sample stream: order-independent
        const Tensor& src = set.images[i];
        switch (kind) {
        case VariationKind::rot: {
            const double angle =
                options.force_angle ? options.angle : uniform01(rng) * 2.0 * 3.14159265358979323846;
            out.images.push_back(rotate_image(src, angle));
            break;
        }
        case VariationKind::rand: {
            Tensor dst = src;
            for (std::size_t p = 0; p < dst.size(); ++p)
                dst[p] = std::max(dst[p], options.noise_amplitude * uniform01(rng));
            out.images.push_back(std::move(dst));
            break;
        }
        case VariationKind::img: {
            const Tensor& bg = background_pool->images[uniform_index(rng, background_pool->size())];
            const Shape& bd = bg.dims();
            if (bd[0] < dims[0] || bd[1] < dims[1] || bd[2] != dims[2])
                throw DataError("background image smaller than the digit canvas");
            const std::size_t r0 =
                bd[0] == dims[0] ? 0 : uniform_index(rng, bd[0] - dims[0] + 1);
            const std::size_t s0 =
                bd[1] == dims[1] ? 0 : uniform_index(rng, bd[1] - dims[1] + 1);
            Tensor dst = src;
            for (std::size_t r = 0; r < dims[0]; ++r)
                for (std::size_t s = 0; s < dims[1]; ++s)
                    for (std::size_t ch = 0; ch < dims[2]; ++ch)
                        dst(r, s, ch) = std::max(
                            dst(r, s, ch), options.background_gain * bg(r0 + r, s0 + s, ch));
            out.images.push_back(std::move(dst));
            break;
        }
        }
    }
    out.provenance = set.provenance + " | variation=" + variation_name(kind) +
                     " seed=" + std::to_string(seed);
    return out;
}

LabeledImageSet subsample(const LabeledImageSet& set, const SubsampleSpec& spec,
                          std::vector<std::size_t>* chosen_indices) {
    if (spec.per_class == 0) throw ConfigError("subsample: per_class must be positive");
    std::vector<std::vector<std::size_t>> by_class(10);
    for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);

    std::vector<std::size_t> picked;
    picked.reserve(spec.per_class * 10);
    for (std::size_t c = 0; c < 10; ++c) {
        if (by_class[c].size() < spec.per_class)
            throw DataError("class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " samples, need " +
                            std::to_string(spec.per_class));
        Rng rng(derive_seed(spec.trial_seed, c));
        shuffle(by_class[c], rng);
        picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + spec.per_class);
    }
    std::sort(picked.begin(), picked.end());
    if (chosen_indices) chosen_indices->insert(chosen_indices->end(), picked.begin(), picked.end());

    LabeledImageSet out;
    out.images.reserve(picked.size());
    out.labels.reserve(picked.size());
    for (std::size_t i : picked) {
        out.images.push_back(set.images[i]);
        out.labels.push_back(set.labels[i]);
    }
    out.provenance = set.provenance + " | subsample per_class=" + std::to_string(spec.per_class) +
                     " trial_seed=" + std::to_string(spec.trial_seed);
    return out;
}

namespace {

// 5x7 digit bitmaps ('#' = ink), warped onto the canvas per sample.
const char* const kGlyphs[10][7] = {
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},
    {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},
    {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},
    {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "},
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},
    {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "},
    {"#####", "    #", "   # ", "  #  ", "  #  ", "  #  ", "  #  "},
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},
    {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "},
};

double glyph_bilinear(std::size_t digit, double r, double s) {
    if (r <= -1.0 || s <= -1.0 || r >= 7.0 || s >= 5.0) return 0.0;
    const double fr = std::floor(r), fs = std::floor(s);
    const double tr = r - fr, ts = s - fs;
    auto at = [&](double rr, double ss) -> double {
        if (rr < 0.0 || ss < 0.0 || rr >= 7.0 || ss >= 5.0) return 0.0;
        return kGlyphs[digit][std::size_t(rr)][std::size_t(ss)] == '#' ? 1.0 : 0.0;
    };
    return (1.0 - tr) * (1.0 - ts) * at(fr, fs) + (1.0 - tr) * ts * at(fr, fs + 1.0) +
           tr * (1.0 - ts) * at(fr + 1.0, fs) + tr * ts * at(fr + 1.0, fs + 1.0);
}

} // namespace

LabeledImageSet synthetic_digits(std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw ConfigError("synthetic_digits: per_class must be positive");
    LabeledImageSet set;
    const std::size_t n = per_class * 10;
    set.images.reserve(n);
    set.labels.reserve(n);
    GaussianDraw gauss;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t digit = i % 10;
        Rng rng(derive_seed(seed, i));

        // Forward map: glyph coords -> canvas = C + R(theta) * Shear * S * (g - G).
        const double theta = uniform(rng, -0.35, 0.35);
        const double scale_r = 3.0 * uniform(rng, 0.85, 1.15);
        const double scale_s = 3.0 * uniform(rng, 0.85, 1.15);
        const double shear = uniform(rng, -0.2, 0.2);
        const double center_r = 13.5 + uniform(rng, -2.5, 2.5);
        const double center_s = 13.5 + uniform(rng, -2.5, 2.5);
        const double ink = uniform(rng, 0.75, 1.0);
        const double co = std::cos(theta), si = std::sin(theta);
        // A = R * Shear * S, inverted analytically for the sampling loop.
        const double a00 = co * scale_r, a01 = (co * shear - si) * scale_s;
        const double a10 = si * scale_r, a11 = (si * shear + co) * scale_s;
        const double det = a00 * a11 - a01 * a10;
        const double i00 = a11 / det, i01 = -a01 / det;
        const double i10 = -a10 / det, i11 = a00 / det;

        Tensor img({28, 28, 1});
        for (std::size_t r = 0; r < 28; ++r)
            for (std::size_t s = 0; s < 28; ++s) {
                const double pr = double(r) - center_r, ps = double(s) - center_s;
                const double gr = 3.0 + i00 * pr + i01 * ps;
                const double gs = 2.0 + i10 * pr + i11 * ps;
                double v = ink * glyph_bilinear(digit, gr, gs) + 0.03 * gauss(rng);
                img(r, s, 0) = std::clamp(v, 0.0, 1.0);
            }
        set.images.push_back(std::move(img));
        set.labels.push_back(digit);
    }
    set.provenance = "synthetic per_class=" + std::to_string(per_class) +
                     " seed=" + std::to_string(seed);
    return set;
}

void write_sidecar(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open for writing");
    for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
    if (!out) throw DataError(path + ": write failed");
}

} // namespace sfnn
