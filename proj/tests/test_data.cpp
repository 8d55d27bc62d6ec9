#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "sfnn/data.hpp"
#include "sfnn/errors.hpp"
#include "test_support.hpp"

using namespace sfnn;

namespace {

// Pixels on the byte grid so save -> load round-trips exactly.
LabeledImageSet byte_grid_fixture() {
    LabeledImageSet set;
    Rng rng(900);
    for (std::size_t i = 0; i < 2; ++i) {
        Tensor img({5, 4, 1});
        for (std::size_t p = 0; p < img.size(); ++p)
            img[p] = double(uniform_index(rng, 256)) / 255.0;
        set.images.push_back(std::move(img));
        set.labels.push_back(i + 3);
    }
    return set;
}

struct TempFiles {
    std::vector<std::string> paths;
    ~TempFiles() {
        for (const std::string& p : paths) std::remove(p.c_str());
    }
    const std::string& add(std::string p) {
        paths.push_back(std::move(p));
        return paths.back();
    }
};

} // namespace

TEST_CASE("idx files round-trip pixel-exactly") {
    TempFiles tmp;
    const std::string im = tmp.add("idx_rt_images.bin"), lb = tmp.add("idx_rt_labels.bin");
    LabeledImageSet set = byte_grid_fixture();
    save_idx(set, im, lb);
    LabeledImageSet back = load_idx(im, lb);
    REQUIRE(back.size() == 2);
    CHECK(back.labels == set.labels);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(testsup::max_abs_diff(back.images[i], set.images[i]) == 0.0);
    back.validate();
}

TEST_CASE("idx loading rejects a wrong magic, naming the value") {
    TempFiles tmp;
    const std::string im = tmp.add("idx_badmagic.bin"), lb = tmp.add("idx_badmagic_labels.bin");
    LabeledImageSet set = byte_grid_fixture();
    save_idx(set, im, lb);
    {
        std::fstream f(im, std::ios::in | std::ios::out | std::ios::binary);
        f.put(char(0x12)); // corrupt the first magic byte
    }
    CHECK_THROWS_WITH_AS(load_idx(im, lb),
                         doctest::Contains("bad image magic 0x12000803"), DataError);
}

TEST_CASE("idx loading rejects truncation and count mismatches") {
    TempFiles tmp;
    const std::string im = tmp.add("idx_trunc_images.bin"), lb = tmp.add("idx_trunc_labels.bin");
    LabeledImageSet set = byte_grid_fixture();
    save_idx(set, im, lb);

    // Chop the image payload short.
    {
        std::ifstream in(im, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(im, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size() - 5));
    }
    CHECK_THROWS_AS(load_idx(im, lb), DataError);

    // Rebuild, then claim a different label count.
    save_idx(set, im, lb);
    LabeledImageSet three = set;
    three.images.push_back(set.images[0]);
    three.labels.push_back(1);
    const std::string lb3 = tmp.add("idx_trunc_labels3.bin");
    const std::string im3 = tmp.add("idx_trunc_images3.bin");
    save_idx(three, im3, lb3);
    CHECK_THROWS_WITH_AS(load_idx(im, lb3), doctest::Contains("count mismatch"), DataError);
}

TEST_CASE("text matrix rows parse as 784 pixels plus a label") {
    TempFiles tmp;
    const std::string path = tmp.add("amat_fixture.txt");
    {
        std::ofstream out(path);
        for (int row = 0; row < 2; ++row) {
            for (int p = 0; p < 784; ++p) out << (p == row ? 0.5 : 0.0) << ' ';
            out << (row == 0 ? 7 : 2) << '\n';
        }
    }
    LabeledImageSet set = load_amat(path);
    REQUIRE(set.size() == 2);
    CHECK(set.image_shape() == Shape{28, 28, 1});
    CHECK(set.labels[0] == 7);
    CHECK(set.labels[1] == 2);
    CHECK(set.images[0][0] == 0.5);
    CHECK(set.images[1][1] == 0.5);
    CHECK(set.images[1][0] == 0.0);

    const std::string ragged = tmp.add("amat_ragged.txt");
    {
        std::ofstream out(ragged);
        out << "0.1 0.2 0.3\n";
    }
    CHECK_THROWS_WITH_AS(load_amat(ragged), doctest::Contains("785"), DataError);
}

TEST_CASE("rotation by zero is the identity") {
    LabeledImageSet set = synthetic_digits(1, 42);
    VariationOptions opt;
    opt.force_angle = true;
    opt.angle = 0.0;
    LabeledImageSet rotated = make_variation(set, VariationKind::rot, 1, nullptr, opt);
    for (std::size_t i = 0; i < set.size(); ++i)
        CHECK(testsup::max_abs_diff(rotated.images[i], set.images[i]) < 1e-12);
    CHECK(rotated.labels == set.labels);
}

TEST_CASE("a half-turn equals two quarter-turns within resampling tolerance") {
    LabeledImageSet set = synthetic_digits(1, 43);
    const double pi = 3.14159265358979323846;
    VariationOptions half;
    half.force_angle = true;
    half.angle = pi;
    LabeledImageSet once = make_variation(set, VariationKind::rot, 1, nullptr, half);

    VariationOptions quarter;
    quarter.force_angle = true;
    quarter.angle = pi / 2.0;
    LabeledImageSet twice =
        make_variation(make_variation(set, VariationKind::rot, 1, nullptr, quarter),
                       VariationKind::rot, 1, nullptr, quarter);
    for (std::size_t i = 0; i < set.size(); ++i) {
        double worst = 0.0;
        for (std::size_t p = 0; p < once.images[i].size(); ++p)
            worst = std::max(worst, std::abs(once.images[i][p] - twice.images[i][p]));
        CHECK(worst < 2e-2);
    }
}

TEST_CASE("noise with zero amplitude is the identity") {
    LabeledImageSet set = synthetic_digits(1, 44);
    VariationOptions opt;
    opt.noise_amplitude = 0.0;
    LabeledImageSet out = make_variation(set, VariationKind::rand, 5, nullptr, opt);
    for (std::size_t i = 0; i < set.size(); ++i)
        CHECK(testsup::max_abs_diff(out.images[i], set.images[i]) == 0.0);
}

TEST_CASE("background noise never darkens the digit and stays in range") {
    LabeledImageSet set = synthetic_digits(2, 45);
    LabeledImageSet out = make_variation(set, VariationKind::rand, 6);
    REQUIRE(out.size() == set.size());
    CHECK(out.labels == set.labels);
    out.validate();
    bool some_background = false;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t p = 0; p < out.images[i].size(); ++p) {
            CHECK(out.images[i][p] >= set.images[i][p]);
            if (out.images[i][p] > set.images[i][p] + 0.1) some_background = true;
        }
    CHECK(some_background);
}

TEST_CASE("image backgrounds composite by a scaled pointwise maximum") {
    LabeledImageSet set = synthetic_digits(1, 46);
    LabeledImageSet pool;
    Tensor bg({28, 28, 1});
    bg.fill(1.0);
    pool.images.push_back(bg);
    pool.labels.push_back(0);
    LabeledImageSet out = make_variation(set, VariationKind::img, 7, &pool);
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t p = 0; p < out.images[i].size(); ++p)
            CHECK(out.images[i][p] ==
                  doctest::Approx(std::max(set.images[i][p], 0.8)).epsilon(1e-15));

    CHECK_THROWS_WITH_AS(make_variation(set, VariationKind::img, 7, nullptr),
                         doctest::Contains("background pool"), DataError);
}

TEST_CASE("variations are deterministic per seed") {
    LabeledImageSet set = synthetic_digits(2, 47);
    LabeledImageSet a = make_variation(set, VariationKind::rot, 9);
    LabeledImageSet b = make_variation(set, VariationKind::rot, 9);
    LabeledImageSet c = make_variation(set, VariationKind::rot, 10);
    double same = 0.0, different = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        same = std::max(same, testsup::max_abs_diff(a.images[i], b.images[i]));
        different = std::max(different, testsup::max_abs_diff(a.images[i], c.images[i]));
    }
    CHECK(same == 0.0);
    CHECK(different > 1e-3);
}

TEST_CASE("subsampling is stratified, seeded, and logged") {
    LabeledImageSet set = synthetic_digits(20, 48);
    SubsampleSpec spec;
    spec.per_class = 10;
    spec.trial_seed = 1;
    std::vector<std::size_t> chosen;
    LabeledImageSet out = subsample(set, spec, &chosen);
    REQUIRE(out.size() == 100);
    REQUIRE(chosen.size() == 100);
    std::size_t histogram[10] = {};
    for (std::size_t lb : out.labels) ++histogram[lb];
    for (std::size_t c = 0; c < 10; ++c) CHECK(histogram[c] == 10);
    // Chosen indices refer to the original set.
    for (std::size_t k = 0; k < chosen.size(); ++k)
        CHECK(set.labels[chosen[k]] == out.labels[k]);
    CHECK(out.provenance.find("per_class=10") != std::string::npos);
}

TEST_CASE("subsampling the full class population returns it whole") {
    LabeledImageSet set = synthetic_digits(5, 49);
    SubsampleSpec spec;
    spec.per_class = 5;
    spec.trial_seed = 123;
    LabeledImageSet out = subsample(set, spec);
    CHECK(out.size() == set.size());
    std::size_t histogram[10] = {};
    for (std::size_t lb : out.labels) ++histogram[lb];
    for (std::size_t c = 0; c < 10; ++c) CHECK(histogram[c] == 5);
}

TEST_CASE("subsampling fails loudly when a class is too small") {
    LabeledImageSet set = synthetic_digits(3, 50);
    set.images.pop_back(); // drop one label-9 sample
    set.labels.pop_back();
    SubsampleSpec spec;
    spec.per_class = 3;
    spec.trial_seed = 1;
    CHECK_THROWS_WITH_AS(subsample(set, spec), doctest::Contains("class 9"), DataError);
}

TEST_CASE("distinct trial seeds choose distinct subsets") {
    LabeledImageSet set = synthetic_digits(50, 51);
    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SubsampleSpec spec;
        spec.per_class = 10;
        spec.trial_seed = seed;
        std::vector<std::size_t> chosen;
        subsample(set, spec, &chosen);
        seen.insert(chosen);
    }
    CHECK(seen.size() == 20);
}

TEST_CASE("the synthetic corpus is shaped, bounded, labeled, and varied") {
    LabeledImageSet set = synthetic_digits(3, 52);
    REQUIRE(set.size() == 30);
    set.validate();
    CHECK(set.image_shape() == Shape{28, 28, 1});
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(set.labels[i] == i % 10);
        double ink = 0.0;
        for (std::size_t p = 0; p < set.images[i].size(); ++p) ink += set.images[i][p];
        CHECK(ink / double(set.images[i].size()) > 0.02); // a digit is actually drawn
    }
    // Same class, different samples: the warp must actually vary them.
    CHECK(testsup::max_abs_diff(set.images[0], set.images[10]) > 0.05);
    // Determinism per seed.
    LabeledImageSet again = synthetic_digits(3, 52);
    for (std::size_t i = 0; i < set.size(); ++i)
        CHECK(testsup::max_abs_diff(set.images[i], again.images[i]) == 0.0);
}

TEST_CASE("sidecar files record key-value provenance lines") {
    TempFiles tmp;
    const std::string path = tmp.add("sidecar_test.txt");
    write_sidecar(path, {{"source", "synthetic"}, {"seed", "7"}});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "source = synthetic");
    std::getline(in, line);
    CHECK(line == "seed = 7");
}
