#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "flimsr/dataset.hpp"
#include "flimsr/flimb.hpp"
#include "flimsr/metrics.hpp"
#include "flimsr/phantom.hpp"
#include "support.hpp"

using namespace flimsr;

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> gradient_magnitude(std::span<const float> p, std::size_t h, std::size_t w) {
  std::vector<double> g;
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      const double gx = 0.5 * (p[y * w + x + 1] - p[y * w + x - 1]);
      const double gy = 0.5 * (p[(y + 1) * w + x] - p[(y - 1) * w + x]);
      g.push_back(std::hypot(gx, gy));
    }
  }
  return g;
}

}  // namespace

TEST_CASE("flimb round trip preserves dims, names, pixel size and data") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto img = test::random_image(6, 3 + seed, 7, seed, -50.0, 50.0);
    const auto back = decode_flimb(encode_flimb(img));
    CHECK(back.channels() == 6);
    CHECK(back.height() == img.height());
    CHECK(back.width() == img.width());
    CHECK(back.pixel_size_um() == img.pixel_size_um());
    for (std::size_t c = 0; c < 6; ++c) CHECK(back.channel_descs()[c].name == img.channel_descs()[c].name);
    CHECK(std::equal(back.data().begin(), back.data().end(), img.data().begin()));
  }
  const auto dir = test::scratch_dir("flimb");
  const auto img = test::random_image(6, 4, 5, 11);
  write_flimb(img, dir / "a.flimb");
  const auto back = read_flimb(dir / "a.flimb");
  CHECK(std::equal(back.data().begin(), back.data().end(), img.data().begin()));
}

TEST_CASE("flimb file size of a 6x2x2 image") {
  const auto img = test::random_image(6, 2, 2, 3);
  // magic + version + pixel size + C,H,W + length byte and name for LTi (3 bytes) and INTi (4 bytes)
  const std::size_t header = 4 + 1 + 4 + 3 * 4 + 3 * (1 + 3) + 3 * (1 + 4);
  CHECK(encode_flimb(img).size() == header + 6 * 2 * 2 * 4);
  const auto dir = test::scratch_dir("flimb_size");
  write_flimb(img, dir / "x.flimb");
  CHECK(std::filesystem::file_size(dir / "x.flimb") == header + 96);
}

TEST_CASE("flimb header bytes are little-endian") {
  const auto img = test::random_image(6, 2, 3, 3);
  const auto bytes = encode_flimb(img);
  CHECK(std::memcmp(bytes.data(), "FLIM", 4) == 0);
  CHECK(bytes[4] == 1);
  float px = 0;
  std::memcpy(&px, bytes.data() + 5, 4);
  CHECK(px == doctest::Approx(7.5));
  CHECK(bytes[9] == 6);
  CHECK(bytes[13] == 2);
  CHECK(bytes[17] == 3);
  CHECK(bytes[21] == 3);
  CHECK(std::string(bytes.begin() + 22, bytes.begin() + 25) == "LT1");
}

TEST_CASE("flimb rejects bad input") {
  const auto img = test::random_image(6, 2, 2, 3);
  auto bytes = encode_flimb(img);

  SUBCASE("bad magic") {
    std::memcpy(bytes.data(), "JUNK", 4);
    CHECK_THROWS_WITH_AS(decode_flimb(bytes), "not a FLIMB file", FlimbError);
  }
  SUBCASE("unsupported version") {
    bytes[4] = 2;
    CHECK_THROWS_WITH_AS(decode_flimb(bytes), doctest::Contains("unsupported FLIMB version 2"), FlimbError);
  }
  SUBCASE("declared payload larger than the file") {
    put_u32(bytes, 13, 1000);
    CHECK_THROWS_WITH_AS(decode_flimb(bytes), doctest::Contains("truncated"), FlimbError);
  }
  SUBCASE("cut payload") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_flimb(bytes), FlimbError);
  }
  SUBCASE("non-finite data is refused on write") {
    std::vector<float> data(24, 1.0f);
    // Build the image without validation by writing raw bytes, then decode.
    auto raw = encode_flimb(img);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(raw.data() + raw.size() - 4, &nan, 4);
    CHECK_THROWS_WITH_AS(decode_flimb(raw), "non-finite data", FlimbError);
    CHECK_THROWS_WITH(FlimImage(standard_channels(), 2, 2, 7.5f, [&] {
                        data[5] = nan;
                        return data;
                      }()),
                      "non-finite data");
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_flimb("/nonexistent/dir/x.flimb"), FlimbError); }
}

TEST_CASE("patient split: sizes, disjointness, determinism") {
  std::vector<std::string> ids;
  for (int i = 0; i < 19; ++i) ids.push_back("P" + std::to_string(i));
  const auto s = split_patients(ids, 16, 42);
  CHECK(s.train_ids.size() == 16);
  CHECK(s.test_ids.size() == 3);
  std::set<std::string> all(s.train_ids.begin(), s.train_ids.end());
  for (const auto& t : s.test_ids) CHECK(all.insert(t).second);
  CHECK(all == std::set<std::string>(ids.begin(), ids.end()));
  CHECK(split_patients(ids, 16, 42) == s);

  bool any_differs = false;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    if (split_patients(ids, 16, seed).test_ids != s.test_ids) any_differs = true;
  }
  CHECK(any_differs);

  CHECK_THROWS(split_patients(ids, 0, 1));
  CHECK_THROWS(split_patients(ids, 19, 1));
  CHECK_THROWS(split_patients({"a", "a", "b"}, 1, 1));
}

TEST_CASE("patients round trip through a directory tree") {
  PhantomSpec spec;
  spec.n_patients = 2;
  spec.fovs_per_patient = 2;
  spec.fov_size = 64;
  const auto patients = generate_phantom(spec, 5);
  const auto dir = test::scratch_dir("patients");
  save_patients(patients, dir);
  CHECK(std::filesystem::exists(dir / "P00" / "fov_0.flimb"));
  CHECK(std::filesystem::exists(dir / "P01" / "fov_1.flimb"));
  const auto back = load_patients(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t p = 0; p < 2; ++p) {
    CHECK(back[p].patient_id == patients[p].patient_id);
    REQUIRE(back[p].images.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::equal(back[p].images[i].data().begin(), back[p].images[i].data().end(),
                       patients[p].images[i].data().begin()));
    }
  }
}

TEST_CASE("phantom shape contract") {
  PhantomSpec spec;  // 19 x 2 x 256
  const auto patients = generate_phantom(spec, 1);
  REQUIRE(patients.size() == 19);
  std::set<std::string> ids;
  for (const auto& p : patients) {
    ids.insert(p.patient_id);
    REQUIRE(p.images.size() == 2);
    for (const auto& img : p.images) {
      CHECK(img.channels() == 6);
      CHECK(img.height() == 256);
      CHECK(img.width() == 256);
    }
  }
  CHECK(ids.size() == 19);
}

TEST_CASE("phantom is deterministic and seed dependent") {
  PhantomSpec spec;
  spec.n_patients = 2;
  spec.fovs_per_patient = 1;
  spec.fov_size = 64;
  const auto a = generate_phantom(spec, 9);
  const auto b = generate_phantom(spec, 9);
  const auto c = generate_phantom(spec, 10);
  CHECK(std::equal(a[1].images[0].data().begin(), a[1].images[0].data().end(), b[1].images[0].data().begin()));
  CHECK_FALSE(std::equal(a[1].images[0].data().begin(), a[1].images[0].data().end(), c[1].images[0].data().begin()));
}

TEST_CASE("phantom value ranges and cross-channel edge correlation") {
  PhantomSpec spec;
  spec.n_patients = 3;
  spec.fovs_per_patient = 1;
  spec.fov_size = 128;
  spec.lifetime_min_ns = 1.0;
  spec.lifetime_max_ns = 4.0;
  for (const double rho : {0.5, 0.8, 0.95}) {
    spec.cross_channel_correlation = rho;
    for (const auto& p : generate_phantom(spec, 21)) {
      const auto& img = p.images[0];
      for (std::size_t c = 0; c < 6; ++c) {
        const auto plane = img.plane(c);
        for (float v : plane) {
          REQUIRE(std::isfinite(v));
          if (img.channel_descs()[c].kind == ChannelKind::lifetime) {
            REQUIRE(v >= 1.0f);
            REQUIRE(v <= 4.0f);
          } else {
            REQUIRE(v >= 0.0f);
          }
        }
      }
      for (std::size_t band = 0; band < 3; ++band) {
        const auto glt = gradient_magnitude(img.plane(2 * band), 128, 128);
        const auto gin = gradient_magnitude(img.plane(2 * band + 1), 128, 128);
        CHECK(pearson(glt, gin) >= rho);
      }
    }
  }
}

TEST_CASE("phantom spectra are band limited") {
  PhantomSpec spec;
  spec.n_patients = 2;
  spec.fovs_per_patient = 1;
  spec.fov_size = 128;
  const double cutoff = 1.0 / spec.finest_scale();  // cycles/pixel
  for (const auto& p : generate_phantom(spec, 3)) {
    const auto& img = p.images[0];
    for (std::size_t c = 0; c < 6; ++c) {
      const auto s = radial_power_spectrum(img.plane(c), 128, 128);
      double total = 0.0, high = 0.0;
      for (std::size_t b = 1; b < s.bin_centers.size(); ++b) {
        const double power = s.mean_power[b] * static_cast<double>(s.counts[b]);
        total += power;
        if (s.bin_centers[b] > cutoff) high += power;
      }
      CHECK(high < 0.01 * total);
    }
  }
}

TEST_CASE("phantom spec validation") {
  PhantomSpec spec;
  spec.fov_size = 32;
  CHECK_THROWS_WITH(spec.validate(), "fov_size must be >= 64");
  spec = {};
  spec.lifetime_min_ns = 5.0;
  spec.lifetime_max_ns = 5.0;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.cross_channel_correlation = 1.5;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.psf_sigma_px = -1.0;
  CHECK_THROWS(spec.validate());
}
