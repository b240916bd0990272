#include "tscs/image.hpp"
#include "tscs/operator_io.hpp"
#include "tscs/tensor_io.hpp"

#include "test_util.hpp"

#include <cstring>
#include <gtest/gtest.h>
#include <sstream>

namespace tscs {
namespace {

std::vector<std::uint8_t> bytes_of(const std::string &s) { return {s.begin(), s.end()}; }

TEST(TensorIo, RoundTripIsBitExact) {
  Rng rng(1);
  for (const Shape &shape : {Shape{1}, Shape{3, 4}, Shape{2, 3, 5}}) {
    auto t = test::random_tensor(shape, rng);
    t[0] = -0.0;
    const auto back = decode_tensor(encode_tensor(t));
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(double)), 0);
  }
}

TEST(TensorIo, LayoutIsLittleEndian) {
  const DenseTensor t({2}, {1.0, 2.0});
  const auto b = encode_tensor(t);
  ASSERT_EQ(b.size(), 8u + 4u + 8u + 16u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "TSCS0001");
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 2);
  // 1.0 is 0x3FF0000000000000
  EXPECT_EQ(b[20 + 7], 0x3F);
  EXPECT_EQ(b[20 + 6], 0xF0);
}

TEST(TensorIo, StreamAndFileRoundTrip) {
  Rng rng(2);
  const auto t = test::random_tensor({4, 2}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  EXPECT_EQ(read_tensor(ss), t);
  const auto path = std::filesystem::temp_directory_path() / "tscs_io_roundtrip.tscs";
  save_tensor(path, t);
  EXPECT_EQ(load_tensor(path), t);
  std::filesystem::remove(path);
  EXPECT_THROW(load_tensor(path), std::runtime_error);
}

TEST(TensorIo, MalformedInputsReportOffsets) {
  auto good = encode_tensor(DenseTensor({2, 2}, {1, 2, 3, 4}));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensor(bad_magic), FormatError);
  auto short_payload = good;
  short_payload.pop_back();
  try {
    decode_tensor(short_payload);
    FAIL();
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find("byte 28"), std::string::npos) << e.what();
  }
  auto zero_dim = good;
  zero_dim[12] = 0;
  try {
    decode_tensor(zero_dim);
    FAIL();
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find("byte 12"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_tensor(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)), FormatError);
}

TEST(Base64, KnownVectorsAndRoundTrip) {
  EXPECT_EQ(base64_encode(bytes_of("")), "");
  EXPECT_EQ(base64_encode(bytes_of("f")), "Zg==");
  EXPECT_EQ(base64_encode(bytes_of("fo")), "Zm8=");
  EXPECT_EQ(base64_encode(bytes_of("foo")), "Zm9v");
  EXPECT_EQ(base64_encode(bytes_of("foobar")), "Zm9vYmFy");
  Rng rng(3);
  for (std::size_t n = 0; n < 20; ++n) {
    std::vector<std::uint8_t> data(n);
    for (auto &b : data) b = static_cast<std::uint8_t>(rng() & 0xFF);
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
  }
  EXPECT_THROW(base64_decode("Zg="), FormatError);
  EXPECT_THROW(base64_decode("Z!=="), FormatError);
  EXPECT_THROW(base64_decode("Zg==Zg=="), FormatError);
}

TEST(OperatorIo, SensingRoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto op = build_operator(OperatorConfig{{8, 6, 3}, {4, 3, 3}, 2, {{4, 2, 0}, {8, 0, 0}}, seed, {}});
    const auto back = deserialize_operator(serialize_operator(op));
    EXPECT_EQ(back.config.input_shape, op.config.input_shape);
    EXPECT_EQ(back.config.basis_plan, op.config.basis_plan);
    EXPECT_EQ(back.layer.effective_factors(), op.layer.effective_factors());
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(back.layer.weights(t, j), op.layer.weights(t, j));
  }
}

TEST(OperatorIo, AdjointRoundTripIsBitExact) {
  const auto op = build_operator(OperatorConfig{{8, 8}, {5, 3}, 3, spatial_block_plan({2, 4, 8}, 2), 7, {}});
  for (auto kind : {AdjointInit::Kind::transpose, AdjointInit::Kind::gaussian}) {
    const auto adj = build_adjoint(op, {kind, 11});
    const auto back = deserialize_adjoint(serialize_adjoint(adj));
    EXPECT_EQ(back.layer.effective_factors(), adj.layer.effective_factors());
    EXPECT_EQ(back.input_shape(), adj.input_shape());
  }
}

TEST(OperatorIo, RejectsMalformedDocuments) {
  const auto op = build_operator(OperatorConfig{{4, 4}, {2, 2}, 1, {}, 0, {}});
  const auto adj = build_adjoint(op, {});
  EXPECT_THROW(deserialize_operator("not json"), FormatError);
  EXPECT_THROW(deserialize_operator("{}"), FormatError);
  EXPECT_THROW(deserialize_operator(serialize_adjoint(adj)), FormatError);
  EXPECT_THROW(deserialize_adjoint(serialize_operator(op)), FormatError);
}

TEST(Netpbm, GrayFixture) {
  auto bytes = bytes_of("P5\n2 2\n255\n");
  for (std::uint8_t v : {0, 255, 128, 64}) bytes.push_back(v);
  const auto img = decode_netpbm(bytes);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.channels, 1u);
  EXPECT_EQ(img.samples, (std::vector<double>{0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0}));
  EXPECT_EQ(img.to_tensor().shape(), (Shape{2, 2}));
  EXPECT_EQ(encode_netpbm(img), bytes);
}

TEST(Netpbm, ColourIsInterleavedByPixel) {
  auto bytes = bytes_of("P6 2 1 255\n");
  for (std::uint8_t v : {10, 20, 30, 40, 50, 60}) bytes.push_back(v);
  const auto t = decode_netpbm(bytes).to_tensor();
  ASSERT_EQ(t.shape(), (Shape{1, 2, 3}));
  EXPECT_DOUBLE_EQ(t[2], 30.0 / 255.0);
  EXPECT_DOUBLE_EQ(t[3], 40.0 / 255.0);
}

TEST(Netpbm, CommentsInHeader) {
  auto bytes = bytes_of("P5\n# made by hand\n1 # width\n1\n255\n");
  bytes.push_back(7);
  EXPECT_DOUBLE_EQ(decode_netpbm(bytes).samples[0], 7.0 / 255.0);
}

TEST(Netpbm, QuantizationRoundTrip) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseTensor t({5, 7, 3});
  for (auto &v : t.data()) v = u(rng);
  const auto back = decode_netpbm(encode_netpbm(ImageBuffer::from_tensor(t))).to_tensor();
  EXPECT_LE(max_abs_diff(back.data(), t.data()), 1.0 / 510.0 + 1e-15);
}

TEST(Netpbm, ClipsOutOfRangeSamples) {
  const auto img = ImageBuffer::from_tensor(DenseTensor({1, 2}, {-0.5, 1.5}));
  EXPECT_EQ(img.samples, (std::vector<double>{0.0, 1.0}));
  EXPECT_THROW(ImageBuffer::from_tensor(DenseTensor({2, 2, 2})), ShapeError);
}

std::size_t parse_offset(const std::string &text) {
  try {
    decode_netpbm(bytes_of(text));
  } catch (const ImageParseError &e) {
    return e.offset;
  }
  ADD_FAILURE() << "no error for " << text;
  return 0;
}

TEST(Netpbm, MalformedInputsReportOffsets) {
  EXPECT_EQ(parse_offset("P3\n1 1\n255\n"), 0u);
  EXPECT_EQ(parse_offset(""), 0u);
  EXPECT_EQ(parse_offset("P5\nx 1\n255\n"), 3u);
  EXPECT_EQ(parse_offset("P5\n1 1\n65535\n\1\1"), 7u);
  EXPECT_EQ(parse_offset("P5\n0 1\n255\n"), 3u);
  EXPECT_EQ(parse_offset("P5\n1 0\n255\n"), 5u);
  EXPECT_EQ(parse_offset("P5\n2 2\n255\nab"), 13u);
  EXPECT_EQ(parse_offset("P5\n1 1\n255"), 10u);
}

TEST(Netpbm, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "tscs_io_image.pgm";
  const ImageBuffer img{3, 1, 1, {0.0, 0.5, 1.0}};
  save_image(img, path);
  const auto back = load_image(path);
  EXPECT_EQ(back.samples[0], 0.0);
  EXPECT_EQ(back.samples[1], 128.0 / 255.0);
  EXPECT_EQ(back.samples[2], 1.0);
  std::filesystem::remove(path);
}

} // namespace
} // namespace tscs
