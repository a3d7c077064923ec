#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "thn/data.hpp"

using namespace thn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("thn_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("ppm round trip is bitwise") {
  Image img = Image::filled(13, 9, {10, 200, 30});
  Rng rng(9);
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const fs::path p = temp_dir("ppm") / "x.ppm";
  write_ppm(p.string(), img);
  Image back = read_ppm(p.string());
  CHECK(back.w == img.w);
  CHECK(back.h == img.h);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("synthetic generator: determinism, static scene, scale drift") {
  SUBCASE("same seed twice gives bitwise-identical frames") {
    SynthSpec spec;
    spec.frames = 6;
    SynthSequence a = gen_sequence(spec, "s", Rng(77));
    SynthSequence b = gen_sequence(spec, "s", Rng(77));
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t f = 0; f < a.frames.size(); ++f) CHECK(a.frames[f].rgb == b.frames[f].rgb);
    SynthSequence c = gen_sequence(spec, "s", Rng(78));
    CHECK(a.frames[0].rgb != c.frames[0].rgb);
  }

  SUBCASE("zero speed and no effects keep the box constant") {
    SynthSpec spec;
    spec.frames = 10;
    spec.speed_max = 0.0;
    spec.p_distractor = 0.0;
    spec.p_occlusion = 0.0;
    spec.p_scale_drift = 0.0;
    SynthSequence s = gen_sequence(spec, "static", Rng(5));
    REQUIRE(s.ann.gt.size() == 10);
    for (const BBox& b : s.ann.gt) {
      CHECK(b.cx == s.ann.gt[0].cx);
      CHECK(b.cy == s.ann.gt[0].cy);
      CHECK(b.w == s.ann.gt[0].w);
    }
    CHECK(s.ann.attributes.empty());
  }

  SUBCASE("1% drift compounds geometrically over 50 steps") {
    SynthSpec spec;
    spec.frames = 51;
    spec.speed_max = 0.0;
    spec.p_distractor = 0.0;
    spec.p_occlusion = 0.0;
    spec.p_scale_drift = 1.0;
    spec.scale_drift = 0.01;
    spec.size_max = 24.0;  // keep the clamp out of reach
    SynthSequence s = gen_sequence(spec, "drift", Rng(6));
    const double ratio = s.ann.gt[50].w / s.ann.gt[0].w;
    const double steps = std::log(ratio) / std::log(1.01);
    CHECK(std::fabs(std::fabs(steps) - 50.0) < 1e-6);
    CHECK(s.ann.attributes.count("scale-variation") == 1);
  }
}

TEST_CASE("otb ingestion") {
  const fs::path root = temp_dir("otb");
  const fs::path seq = root / "toy";
  fs::create_directories(seq / "img");
  Image img = Image::filled(64, 48, {9, 9, 9});
  for (int f = 1; f <= 3; ++f) {
    char name[16];
    std::snprintf(name, sizeof(name), "%04d.ppm", f);
    write_ppm((seq / "img" / name).string(), img);
  }

  SUBCASE("well-formed sequence with mixed separators") {
    std::ofstream gt(seq / "groundtruth_rect.txt");
    gt << "10,20,30,40\n";
    gt << "11\t21\t31\t41\n";
    gt << "12,22,32,42\n";
    gt.close();
    SequenceAnnotation ann = load_otb(seq.string());
    CHECK(ann.name == "toy");
    REQUIRE(ann.frames() == 3);
    CHECK(ann.gt[0].x1() == 10.0);
    CHECK(ann.gt[0].y1() == 20.0);
    CHECK(ann.gt[0].w == 30.0);
    CHECK(ann.gt[0].h == 40.0);
    CHECK(ann.gt[1].x1() == 11.0);
    CHECK(ann.frame_paths[0].find("0001.ppm") != std::string::npos);
  }

  SUBCASE("line/frame count mismatch names the sequence") {
    std::ofstream gt(seq / "groundtruth_rect.txt");
    gt << "10,20,30,40\n10,20,30,40\n";
    gt.close();
    try {
      load_otb(seq.string());
      FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("toy") != std::string::npos);
    }
  }
}

TEST_CASE("dataset writer emits a loadable OTB layout with attributes") {
  SynthSpec spec;
  spec.frames = 4;
  std::vector<SynthSequence> seqs;
  seqs.push_back(gen_sequence(spec, "alpha", Rng(31)));
  seqs.push_back(gen_sequence(spec, "beta", Rng(32)));
  const fs::path root = temp_dir("writer");
  write_dataset(root.string(), seqs);

  const auto loaded = load_dataset(root.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "alpha");
  CHECK(loaded[0].frames() == 4);
  CHECK(loaded[0].attributes == seqs[0].ann.attributes);
  // ground truth survives the text round trip to the printed precision
  CHECK(std::fabs(loaded[0].gt[2].cx - seqs[0].ann.gt[2].cx) < 1e-3);
}

TEST_CASE("crop pipeline geometry") {
  Image frame = Image::filled(200, 160, {40, 80, 120});
  Rng rng(55);
  for (auto& b : frame.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));

  SUBCASE("context arithmetic: w=h=64 gives side 128 and scale 127/128") {
    const BBox gt{100.0, 80.0, 64.0, 64.0};
    CHECK(context_side(gt) == 128.0);
    CropPair pair = crop_pair(frame, gt, frame, gt, CropMode::INFERENCE, CropConfig{});
    CHECK(pair.template_geom.scale == 127.0 / 128.0);
    CHECK(pair.template_img.shape() == Shape{1, 3, 127, 127});
    CHECK(pair.search_img.shape() == Shape{1, 3, 255, 255});
  }

  SUBCASE("geometry round-trips boxes within 0.5 px") {
    const BBox gt{100.0, 80.0, 50.0, 30.0};
    CropPair pair = crop_pair(frame, gt, frame, gt, CropMode::TRAIN, CropConfig{});
    Rng rr(7);
    for (int i = 0; i < 20; ++i) {
      const BBox b{rr.uniform(20, 180), rr.uniform(20, 140), rr.uniform(5, 60), rr.uniform(5, 60)};
      const BBox back = pair.search_geom.to_frame(pair.search_geom.to_crop(b));
      CHECK(std::fabs(back.cx - b.cx) < 0.5);
      CHECK(std::fabs(back.cy - b.cy) < 0.5);
      CHECK(std::fabs(back.w - b.w) < 0.5);
      CHECK(std::fabs(back.h - b.h) < 0.5);
    }
    // the target lands centered in its own training search crop
    CHECK(pair.gt_in_search.cx == doctest::Approx(511.0 / 2.0).epsilon(1e-12));
  }

  SUBCASE("out-of-frame area reads exactly as the mean color") {
    const BBox corner{4.0, 4.0, 24.0, 24.0};  // crop window leaves the frame
    CropPair pair = crop_pair(frame, corner, frame, corner, CropMode::INFERENCE, CropConfig{});
    const auto mean = frame.channel_mean();
    // the top-left of the template crop is fully outside the frame
    for (int c = 0; c < 3; ++c)
      CHECK(pair.template_img(0, c, 0, 0) ==
            doctest::Approx(mean[static_cast<size_t>(c)] / 255.0 - 0.5).epsilon(1e-12));
  }

  SUBCASE("degenerate boxes are rejected") {
    CHECK_THROWS_AS(
        crop_pair(frame, BBox{10, 10, 0.0, 5.0}, frame, BBox{10, 10, 5, 5}, CropMode::TRAIN,
                  CropConfig{}),
        DomainError);
  }
}

TEST_CASE("label assignment") {
  // 8x8 grid, stride 8, centered in a 71px crop
  const MapGeometry geom = MapGeometry::centered(71, 8, 8, 8);

  SUBCASE("grid point at the box center is POS with symmetric targets") {
    const double cx = geom.point_x(4), cy = geom.point_y(4);
    const BBox gt{cx, cy, 20.0, 28.0};
    LabelAssignment lab = assign_labels(gt, geom);
    CHECK(lab.at(4, 4) == PointLabel::POS);
    CHECK(lab.d_hat(0, 0, 4, 4) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(lab.d_hat(0, 1, 4, 4) == doctest::Approx(14.0).epsilon(1e-12));
    CHECK(lab.d_hat(0, 2, 4, 4) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(lab.d_hat(0, 3, 4, 4) == doctest::Approx(14.0).epsilon(1e-12));
    CHECK(lab.at(0, 0) == PointLabel::NEG);
  }

  SUBCASE("labels match a per-point brute-force classification") {
    const BBox gt{geom.point_x(3) + 2.5, geom.point_y(4) - 1.5, 26.0, 19.0};
    LabelAssignment lab = assign_labels(gt, geom);
    int pos = 0, neg = 0, ign = 0;
    for (int iy = 0; iy < 8; ++iy)
      for (int ix = 0; ix < 8; ++ix) {
        const double dx = geom.point_x(ix) - gt.cx, dy = geom.point_y(iy) - gt.cy;
        const double rp = dx * dx / ((gt.w / 4) * (gt.w / 4)) + dy * dy / ((gt.h / 4) * (gt.h / 4));
        const double rn = dx * dx / ((gt.w / 2) * (gt.w / 2)) + dy * dy / ((gt.h / 2) * (gt.h / 2));
        PointLabel want = rp <= 1.0 ? PointLabel::POS
                                    : (rn <= 1.0 ? PointLabel::IGNORE : PointLabel::NEG);
        CHECK(lab.at(iy, ix) == want);
        pos += want == PointLabel::POS;
        neg += want == PointLabel::NEG;
        ign += want == PointLabel::IGNORE;
      }
    CHECK(pos == lab.count(PointLabel::POS));
    CHECK(neg == lab.count(PointLabel::NEG));
    CHECK(ign == lab.count(PointLabel::IGNORE));
    CHECK(pos >= 1);
  }

  SUBCASE("POS targets reconstruct the box within 1e-6 px") {
    const BBox gt{geom.point_x(4) - 3.0, geom.point_y(3) + 2.0, 24.0, 30.0};
    LabelAssignment lab = assign_labels(gt, geom);
    for (int iy = 0; iy < 8; ++iy)
      for (int ix = 0; ix < 8; ++ix) {
        if (lab.at(iy, ix) != PointLabel::POS) continue;
        const double x = geom.point_x(ix), y = geom.point_y(iy);
        for (int k = 0; k < 4; ++k) CHECK(lab.d_hat(0, k, iy, ix) > 0.0);
        CHECK(std::fabs((x - lab.d_hat(0, 0, iy, ix)) - gt.x1()) < 1e-6);
        CHECK(std::fabs((y - lab.d_hat(0, 1, iy, ix)) - gt.y1()) < 1e-6);
        CHECK(std::fabs((x + lab.d_hat(0, 2, iy, ix)) - gt.x2()) < 1e-6);
        CHECK(std::fabs((y + lab.d_hat(0, 3, iy, ix)) - gt.y2()) < 1e-6);
      }
  }

  SUBCASE("tiny targets promote the nearest interior point") {
    // between grid points but still covering the nearest one
    const BBox gt{geom.point_x(2) + 3.0, geom.point_y(2) + 3.0, 9.0, 9.0};
    LabelAssignment lab = assign_labels(gt, geom);
    CHECK(lab.count(PointLabel::POS) == 1);
    CHECK(lab.at(2, 2) == PointLabel::POS);
  }

  SUBCASE("subsampling caps counts and only flips to IGNORE") {
    const BBox gt{geom.point_x(4), geom.point_y(4), 40.0, 40.0};
    LabelAssignment lab = assign_labels(gt, geom);
    Rng rng(1234);
    LabelAssignment capped = subsample_labels(lab, 2, 10, rng);
    CHECK(capped.count(PointLabel::POS) == std::min(2, lab.count(PointLabel::POS)));
    CHECK(capped.count(PointLabel::NEG) == std::min(10, lab.count(PointLabel::NEG)));
    for (size_t i = 0; i < lab.cls.size(); ++i)
      if (lab.cls[i] != capped.cls[i]) CHECK(capped.cls[i] == PointLabel::IGNORE);
  }

  SUBCASE("negative pairs label every point NEG") {
    LabelAssignment lab = negative_labels(geom);
    CHECK(lab.count(PointLabel::NEG) == 64);
    CHECK_FALSE(lab.has_gt);
  }
}
