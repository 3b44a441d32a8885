#include "lemmse/error.hpp"
#include "lemmse/grid.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace lemmse;
using lemmse::testing::for_seeds;
using lemmse::testing::Gen;

namespace {

ImageGrid ramp(Shape s) {
  ImageGrid img(s);
  for (Index i = 0; i < img.size(); ++i) {
    img.values()[i] = static_cast<double>(i);
  }
  return img;
}

} // namespace

TEST(Translate, IdentityLeavesImage) {
  Gen gen(1);
  const ImageGrid img = gen.image({2, 5, 4});
  EXPECT_EQ(translate(img, {0, 0}).values(), img.values());
}

TEST(Translate, WrapsFullPeriod) {
  ImageGrid img(Shape{1, 2, 2}, (Vector(4) << 1, 2, 3, 4).finished());
  const ImageGrid out = translate(img, {1, 0});
  EXPECT_EQ(out.values(), (Vector(4) << 3, 4, 1, 2).finished());
}

TEST(Translate, InverseUndoes) {
  for_seeds(10, 20, [](Gen &gen) {
    const Index h = gen.integer(1, 7), w = gen.integer(1, 7);
    const ImageGrid img = gen.image({gen.integer(1, 3), h, w});
    const Translation g = gen.translation(h, w);
    EXPECT_EQ(translate(translate(img, g), inverse(g, h, w)).values(), img.values());
  });
}

TEST(Translate, ComposesAsGroupAction) {
  for_seeds(40, 30, [](Gen &gen) {
    const Index h = gen.integer(1, 6), w = gen.integer(1, 6);
    const ImageGrid img = gen.image({1, h, w});
    const Translation a = gen.translation(h, w), b = gen.translation(h, w);
    EXPECT_EQ(translate(translate(img, a), b).values(), translate(img, compose(a, b, h, w)).values());
  });
}

TEST(Translate, PermutesValues) {
  for_seeds(80, 10, [](Gen &gen) {
    const ImageGrid img = gen.image({2, 6, 5});
    Vector a = img.values(), b = translate(img, gen.translation(6, 5)).values();
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    EXPECT_EQ(a, b);
  });
}

TEST(Translation, GroupLaw) {
  EXPECT_EQ(compose({2, 3}, {4, 4}, 5, 6), (Translation{1, 1}));
  EXPECT_EQ(inverse({2, 0}, 5, 6), (Translation{3, 0}));
  EXPECT_EQ(normalize({-1, 13}, 5, 6), (Translation{4, 1}));
  EXPECT_EQ(translation_from_index(7, 5, 6), (Translation{1, 1}));
  EXPECT_EQ(shift_index(0, {1, 5}, 5, 6), 1 * 6 + 5);
}

TEST(ExtractPatch, SideOneIsPixel) {
  Gen gen(3);
  const ImageGrid img = gen.image({3, 4, 4});
  const Vector p = extract_patch(img, 5, PatchGeometry(1));
  ASSERT_EQ(p.size(), 3);
  for (Index c = 0; c < 3; ++c) {
    EXPECT_EQ(p[c], img(c, 1, 1));
  }
}

TEST(ExtractPatch, ConstantImage) {
  const ImageGrid img = ImageGrid::constant({2, 5, 5}, 0.25);
  const Vector p = extract_patch(img, 7, PatchGeometry(3));
  EXPECT_EQ(p.size(), 18);
  EXPECT_TRUE((p.array() == 0.25).all());
}

TEST(ExtractPatch, FullWindowOrdering) {
  const ImageGrid img = ramp({1, 3, 3});
  const Vector p = extract_patch(img, 4, PatchGeometry(3));
  for (Index i = 0; i < 9; ++i) {
    EXPECT_EQ(p[i], static_cast<double>(i));
  }
}

TEST(ExtractPatch, WrapsAtCorner) {
  const ImageGrid img = ramp({1, 4, 4});
  const Vector p = extract_patch(img, 0, PatchGeometry(3));
  // rows -1,0,1 and cols -1,0,1 wrapped
  const Vector want = (Vector(9) << 15, 12, 13, 3, 0, 1, 7, 4, 5).finished();
  EXPECT_EQ(p, want);
}

TEST(ExtractPatch, CommutesWithTranslate) {
  for_seeds(100, 20, [](Gen &gen) {
    const Index h = gen.integer(3, 7), w = gen.integer(3, 7);
    const ImageGrid img = gen.image({2, h, w});
    const Translation g = gen.translation(h, w);
    const PatchGeometry geom(2 * gen.integer(0, 2) + 1);
    const ImageGrid moved = translate(img, g);
    const Translation back = inverse(g, h, w);
    for (Index n = 0; n < h * w; ++n) {
      EXPECT_EQ(extract_patch(moved, n, geom), extract_patch(img, shift_index(n, back, h, w), geom));
    }
  });
}

TEST(ExtractAllPatches, RowsMatchSingleExtraction) {
  Gen gen(7);
  const ImageGrid img = gen.image({2, 5, 6});
  const PatchGeometry geom(3);
  const RowMatrix all = extract_all_patches(img, geom);
  ASSERT_EQ(all.rows(), 30);
  ASSERT_EQ(all.cols(), 18);
  for (Index n = 0; n < 30; ++n) {
    EXPECT_EQ(Vector(all.row(n).transpose()), extract_patch(img, n, geom));
  }
}

TEST(ExtractAllPatches, SideOneFlattens) {
  Gen gen(8);
  const ImageGrid img = gen.image({1, 4, 3});
  const RowMatrix all = extract_all_patches(img, PatchGeometry(1));
  EXPECT_EQ(Vector(all.col(0)), img.values());
}

TEST(ExtractAllPatches, CenterColumnSumsToImageSum) {
  Gen gen(9);
  const ImageGrid img = gen.image({3, 5, 5});
  const PatchGeometry geom(5);
  const RowMatrix all = extract_all_patches(img, geom);
  double sum = 0.0;
  for (Index c = 0; c < 3; ++c) {
    sum += all.col(c * geom.size() + geom.center_offset()).sum();
  }
  EXPECT_NEAR(sum, img.values().sum(), 1e-12);
}

TEST(ExtractAllPatches, TranslationPermutesRows) {
  for_seeds(120, 10, [](Gen &gen) {
    const ImageGrid img = gen.image({1, 5, 4});
    const PatchGeometry geom(3);
    const Translation g = gen.translation(5, 4);
    const RowMatrix a = extract_all_patches(img, geom);
    const RowMatrix b = extract_all_patches(translate(img, g), geom);
    for (Index n = 0; n < 20; ++n) {
      EXPECT_EQ(b.row(shift_index(n, g, 5, 4)), a.row(n));
    }
  });
}

TEST(PatchGeometry, RejectsEvenSide) {
  EXPECT_THROW(PatchGeometry(4), Error);
  EXPECT_THROW(PatchGeometry(0), Error);
  EXPECT_EQ(PatchGeometry(5).offsets().size(), 25u);
}

TEST(AugmentDataset, EnumeratesShifts) {
  const ImageGrid img = ramp({1, 2, 2});
  const Dataset aug = augment_dataset(Dataset({img}));
  ASSERT_EQ(aug.size(), 4u);
  for (Index g = 0; g < 4; ++g) {
    EXPECT_EQ(aug[static_cast<std::size_t>(g)].values(), translate(img, translation_from_index(g, 2, 2)).values());
  }
}

TEST(AugmentDataset, ConstantImageFixed) {
  const Dataset aug = augment_dataset(Dataset({ImageGrid::constant({1, 2, 2}, 0.5)}));
  ASSERT_EQ(aug.size(), 4u);
  for (const auto &x : aug.items()) {
    EXPECT_TRUE((x.values().array() == 0.5).all());
  }
}

TEST(AugmentDataset, TwiceRepeatsOrbits) {
  Gen gen(5);
  const Dataset d = gen.dataset(2, {1, 2, 3});
  const Dataset twice = augment_dataset(augment_dataset(d));
  EXPECT_EQ(twice.size(), 2u * 36u);
  // every image of the double orbit is a shift of the source it came from
  for (std::size_t k = 0; k < twice.size(); ++k) {
    const ImageGrid &src = d[k / 36];
    bool found = false;
    for (Index g = 0; g < 6 && !found; ++g) {
      found = translate(src, translation_from_index(g, 2, 3)).values() == twice[k].values();
    }
    EXPECT_TRUE(found) << k;
  }
}

TEST(Dataset, RejectsMixedShapes) {
  EXPECT_THROW(Dataset({ImageGrid({1, 2, 2}), ImageGrid({1, 3, 2})}), Error);
  EXPECT_THROW(Dataset(std::vector<ImageGrid>{}), Error);
}

TEST(ImageGrid, RejectsNonFinite) {
  Vector v = Vector::Zero(4);
  v[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ImageGrid(Shape{1, 2, 2}, v), Error);
}
