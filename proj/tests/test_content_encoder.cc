#include <doctest.h>

#include <cstring>
#include <fstream>

#include "hsvc/content_encoder.h"
#include "test_support.h"

using namespace hsvc;
using namespace hsvc::content;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// Header assembled byte by byte, independent of encode_tensor.
std::string header(const char* magic, std::uint32_t version, std::uint32_t rows,
                   std::uint32_t cols) {
  std::string h(44, '\0');
  std::memcpy(h.data(), magic, 4);
  for (int i = 0; i < 4; ++i) {
    h[4 + i] = static_cast<char>((version >> (8 * i)) & 0xff);
    h[8 + i] = static_cast<char>((rows >> (8 * i)) & 0xff);
    h[12 + i] = static_cast<char>((cols >> (8 * i)) & 0xff);
  }
  return h;
}

TensorFileError::Kind load_error(const fs::path& p) {
  try {
    load_features(p);
  } catch (const TensorFileError& e) {
    return e.kind();
  }
  FAIL("expected TensorFileError");
  return TensorFileError::Kind::kIo;
}

}  // namespace

TEST_CASE("load_features reads the documented format") {
  const auto dir = testing::temp_dir("content_format");
  std::string bytes = header("HSVC", 1, 25, 512);
  std::vector<float> payload(25 * 512);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(i) * 0.5f;
  bytes.append(reinterpret_cast<const char*>(payload.data()), payload.size() * 4);
  std::ofstream(dir / "a.ling.bin", std::ios::binary) << bytes;

  const auto feats = load_features(dir / "a.ling.bin");
  CHECK(feats.frames() == 25);
  CHECK(feats.values.cols() == 512);
  CHECK(feats.values.at(3, 7) == payload[3 * 512 + 7]);
}

TEST_CASE("load_features rejects malformed files") {
  const auto dir = testing::temp_dir("content_errors");
  auto write = [&](const std::string& name, const std::string& bytes) {
    std::ofstream(dir / name, std::ios::binary) << bytes;
    return dir / name;
  };
  std::string dim80 = header("HSVC", 1, 2, 80) + std::string(2 * 80 * 4, '\0');
  CHECK(load_error(write("d80", dim80)) == TensorFileError::Kind::kDimensionMismatch);
  CHECK(load_error(write("magic", header("XXXX", 1, 1, 512) + std::string(2048, '\0'))) ==
        TensorFileError::Kind::kBadMagic);
  CHECK(load_error(write("ver", header("HSVC", 7, 1, 512) + std::string(2048, '\0'))) ==
        TensorFileError::Kind::kBadVersion);
  CHECK(load_error(write("trunc", header("HSVC", 1, 2, 512) + std::string(100, '\0'))) ==
        TensorFileError::Kind::kTruncated);
  CHECK(load_error(write("short", "HSV")) == TensorFileError::Kind::kTruncated);
  CHECK(load_error(dir / "missing") == TensorFileError::Kind::kIo);

  std::string nan_payload = header("HSVC", 1, 1, 512) + std::string(2048, '\0');
  const float nan = std::nanf("");
  std::memcpy(nan_payload.data() + 44 + 8, &nan, 4);
  CHECK(load_error(write("nan", nan_payload)) == TensorFileError::Kind::kDimensionMismatch);
}

TEST_CASE("save_features size, round trip and overwrite") {
  const auto dir = testing::temp_dir("content_save");
  LinguisticFeatures zeros{Tensor::matrix(25, 512)};
  save_features(dir / "z.bin", zeros);
  CHECK(fs::file_size(dir / "z.bin") == 44 + 25 * 512 * 4);

  LinguisticFeatures r{testing::random_tensor({7, 512}, 3)};
  save_features(dir / "r.bin", r);
  CHECK(load_features(dir / "r.bin").values == r.values);
  const std::string first = slurp(dir / "r.bin");

  LinguisticFeatures r2{testing::random_tensor({9, 512}, 4)};
  save_features(dir / "r.bin", r2);
  CHECK(load_features(dir / "r.bin").values == r2.values);
  CHECK(slurp(dir / "r.bin") != first);
  for (const auto& e : fs::directory_iterator(dir))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);

  CHECK_THROWS_AS(save_features(dir / "bad.bin", LinguisticFeatures{Tensor::matrix(2, 80)}),
                  TensorFileError);
}

TEST_CASE("generic tensor files") {
  const auto dir = testing::temp_dir("content_tensor");
  const Tensor t = testing::random_tensor({100, 1}, 8);
  save_tensor(dir / "t.bin", t);
  CHECK(load_tensor(dir / "t.bin") == t);
  CHECK(decode_tensor(encode_tensor(t)) == t);
}

TEST_CASE("pseudo_encode rate, determinism and normalization") {
  const audio::AudioClip clip{testing::noise(16000, 21, 0.2), 16000};
  const auto a = pseudo_encode(clip, 5);
  CHECK(a.frames() == 25);
  CHECK(a.values.cols() == 512);
  CHECK(pseudo_encode(clip, 5).values == a.values);
  CHECK_FALSE(pseudo_encode(clip, 6).values == a.values);

  for (std::size_t d = 0; d < 512; ++d) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < 25; ++t) mean += a.values.at(t, d);
    mean /= 25.0;
    for (std::size_t t = 0; t < 25; ++t) sq += (a.values.at(t, d) - mean) * (a.values.at(t, d) - mean);
    CHECK(std::abs(mean) < 1e-4);
    CHECK(sq / 25.0 == doctest::Approx(1.0).epsilon(1e-4));
  }

  for (std::size_t n : {3200u, 6400u, 51200u}) {
    const auto f = pseudo_encode({testing::noise(n, n, 0.1), 16000}, 0);
    CHECK(f.frames() == n / 640);
    CHECK(frames_for(n) == n / 640);
  }
  CHECK(frames_for(641) == 2);
  CHECK_THROWS(pseudo_encode({testing::noise(2047, 1), 16000}, 0));
  CHECK_THROWS(pseudo_encode({testing::noise(16000, 1), 22050}, 0));
}
