#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "cdl/image_io.hpp"
#include "test_util.hpp"

namespace {

std::string tmp_path(const std::string& name) {
    return testing::TempDir() + "io_" + name;
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Pgm, RandomImageRoundTripsBitExactly) {
    cdl::Image<uint8_t> img(13, 7);
    cdl::Rng rng(99);
    for (auto& v : img.data) v = uint8_t(rng.uniform_int(256));
    const std::string path = tmp_path("roundtrip.pgm");
    cdl::write_pgm(path, img);
    const auto back = cdl::read_pgm(path);
    EXPECT_EQ(back.height, img.height);
    EXPECT_EQ(back.width, img.width);
    EXPECT_EQ(back.data, img.data);
}

TEST(Pgm, WriterEmitsTheReferenceByteLayout) {
    cdl::Image<uint8_t> img(2, 3);
    img.data = {0, 128, 255, 1, 2, 3};
    const std::string path = tmp_path("golden.pgm");
    cdl::write_pgm(path, img);
    std::string expect = "P5\n3 2\n255\n";
    expect += '\0';
    expect += char(128);
    expect += char(255);
    expect += char(1);
    expect += char(2);
    expect += char(3);
    EXPECT_EQ(read_bytes(path), expect);
}

TEST(Pgm, ReaderHandlesCommentsAndLooseWhitespace) {
    const std::string path = tmp_path("comments.pgm");
    std::string bytes = "P5 # magic\n# a full comment line\n  3\t1 # width, height\n255\n";
    bytes += char(10);
    bytes += char(20);
    bytes += char(30);
    write_bytes(path, bytes);
    const auto img = cdl::read_pgm(path);
    EXPECT_EQ(img.height, 1);
    EXPECT_EQ(img.width, 3);
    EXPECT_EQ(img.data, (std::vector<uint8_t>{10, 20, 30}));
}

TEST(Pgm, RejectsUnsupportedInputs) {
    const std::string p16 = tmp_path("deep.pgm");
    write_bytes(p16, "P5\n2 2\n65535\n\0\0\0\0\0\0\0\0");
    try {
        cdl::read_pgm(p16);
        FAIL() << "16-bit maxval should be rejected";
    } catch (const cdl::data_error& e) {
        EXPECT_NE(std::string(e.what()).find("16-bit"), std::string::npos);
    }

    const std::string ascii = tmp_path("ascii.pgm");
    write_bytes(ascii, "P2\n1 1\n255\n7\n");
    EXPECT_THROW(cdl::read_pgm(ascii), cdl::data_error);

    const std::string trunc = tmp_path("trunc.pgm");
    write_bytes(trunc, std::string("P5\n4 4\n255\n") + "abc");
    EXPECT_THROW(cdl::read_pgm(trunc), cdl::data_error);

    const std::string garbled = tmp_path("garbled.pgm");
    write_bytes(garbled, "P5\n-3 2\n255\nxxxxxx");
    EXPECT_THROW(cdl::read_pgm(garbled), cdl::data_error);

    EXPECT_THROW(cdl::read_pgm(tmp_path("does_not_exist.pgm")), cdl::data_error);
}

TEST(ImageIo, LoadScalesTo01AndSaveClampsAndRounds) {
    cdl::Image<uint8_t> raw(1, 3);
    raw.data = {0, 128, 255};
    const std::string path = tmp_path("scale.pgm");
    cdl::write_pgm(path, raw);
    const auto img = cdl::load_image<double>(path);
    EXPECT_DOUBLE_EQ(img(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(img(0, 1), 128.0 / 255.0);
    EXPECT_DOUBLE_EQ(img(0, 2), 1.0);

    cdl::Image<double> wild(1, 4);
    wild.data = {-0.5, 1.5, 0.5, 100.4 / 255.0};
    const std::string out = tmp_path("clamp.pgm");
    cdl::save_image(out, wild);
    const auto back = cdl::read_pgm(out);
    EXPECT_EQ(back.data[0], 0);
    EXPECT_EQ(back.data[1], 255);
    EXPECT_EQ(back.data[2], 128);  // 0.5*255 = 127.5 rounds up
    EXPECT_EQ(back.data[3], 100);
}

TEST(ImageIo, SavedOutputReloadsBitIdentically) {
    // once clamped and quantized, the file is a fixed point of save-load
    cdl::Rng rng(3);
    auto img = testutil::random_image<double>(rng, 9, 11);
    const std::string a = tmp_path("fix_a.pgm"), b = tmp_path("fix_b.pgm");
    cdl::save_image(a, img);
    cdl::save_image(b, cdl::load_image<double>(a));
    EXPECT_EQ(read_bytes(a), read_bytes(b));
}
