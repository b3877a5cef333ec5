#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "adiva/zfc.hpp"

using namespace adiva;

namespace {

zfc::Container mixed() {
  zfc::Container c;
  Mat m(2, 3);
  m << 1.5, -2.25, 3.0, 1e-30, std::numeric_limits<double>::denorm_min(), -0.0;
  c["a.f32"] = zfc::real_tensor(m);
  c["b.f64"] = zfc::real_tensor(m * (1.0 / 3.0), zfc::DType::kFloat64);
  c["c.i64"] = zfc::int_tensor({-1, 0, std::numeric_limits<std::int64_t>::max()});
  c["d.text"] = zfc::text_tensor("{\"k\": 1}");
  return c;
}

}  // namespace

TEST(Zfc, RoundtripIsBitExact) {
  const zfc::Container c = mixed();
  const std::string bytes = zfc::encode(c);
  const zfc::Container back = zfc::decode(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(zfc::encode(back), bytes);
  const Mat f64 = zfc::to_mat(back.at("b.f64"), "b.f64");
  EXPECT_EQ(std::memcmp(f64.data(), c.at("b.f64").reals.data(), sizeof(double) * 6), 0);
}

TEST(Zfc, Float32TensorsAreRoundedOnConstruction) {
  Mat m(1, 1);
  m << 0.1;
  EXPECT_EQ(zfc::real_tensor(m).reals[0], static_cast<double>(0.1f));
}

TEST(Zfc, HeaderLayout) {
  zfc::Container c;
  c["x"] = zfc::int_tensor({7});
  const std::string b = zfc::encode(c);
  ASSERT_EQ(b.size(), 4u + 4 + 2 + 1 + 1 + 1 + 8 + 8);
  EXPECT_EQ(b.substr(0, 4), "ZFC1");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);
  EXPECT_EQ(b[10], 'x');
  EXPECT_EQ(static_cast<unsigned char>(b[11]), 1);  // int64
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 1);  // rank
}

TEST(Zfc, BadMagic) {
  std::string b = zfc::encode(mixed());
  b[3] = '0';
  try {
    zfc::decode(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "BadMagic");
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(Zfc, TruncationAndTrailingBytesRejected) {
  const std::string b = zfc::encode(mixed());
  EXPECT_THROW(zfc::decode(b.substr(0, b.size() - 1)), Error);
  EXPECT_THROW(zfc::decode(b + "x"), Error);
}

TEST(Zfc, MissingTensor) {
  try {
    zfc::get(mixed(), "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "MissingTensor");
  }
}
