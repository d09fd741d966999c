// Drives the installed binary end to end through std::system. The binary
// path comes in through CDL_CLI_PATH at compile time.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "cdl/checkpoint.hpp"
#include "cdl/image_io.hpp"
#include "cdl/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string out_file = testing::TempDir() + "cli_stdout.txt";
    const std::string cmd =
        std::string(CDL_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    r.out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// One shared workspace: datagen + a short training run are slow enough that
// every test should reuse them.
class Cli : public ::testing::Test {
   protected:
    static std::string dir;
    static std::string ckpt;

    static void SetUpTestSuite() {
        dir = testing::TempDir() + "cli_ws";
        fs::create_directories(dir);
        ASSERT_EQ(run("datagen --out " + dir + "/data --count 6 --size 48 --seed 5").code, 0);

        std::ofstream cfg(dir + "/train.cfg");
        cfg << "# tiny smoke model\n"
               "num_filters = 4\n"
               "filter_size = 3\n"
               "stride = 1\n"
               "num_layers = 2\n"
               "adaptive = true\n"
               "batch_size = 4\n"
               "crop_size = 32\n"
               "lr = 2e-3\n"
               "sigma_lo = 20\n"
               "sigma_hi = 30\n"
               "max_epochs = 4\n"
               "checkpoint_every = 2\n"
               "seed = 7\n"
               "data_dir = " + dir + "/data\n"
               "val_count = 1\n"
               "checkpoint_dir = " + dir + "/run\n";
        cfg.close();
        const auto tr = run("train --config " + dir + "/train.cfg");
        ASSERT_EQ(tr.code, 0) << tr.out;
        ckpt = dir + "/run/latest.bin";
        ASSERT_TRUE(fs::exists(ckpt));
        ASSERT_TRUE(fs::exists(dir + "/run/best.bin"));
    }
};
std::string Cli::dir;
std::string Cli::ckpt;

}  // namespace

TEST(CliBasics, NoArgumentsIsAUsageError) {
    const auto r = run("");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("train"), std::string::npos);
    EXPECT_NE(r.out.find("denoise"), std::string::npos);
}

TEST(CliBasics, HelpExitsCleanly) {
    EXPECT_EQ(run("--help").code, 0);
}

TEST(CliBasics, MissingFilesMapToDataErrors) {
    EXPECT_EQ(run("estimate --in /nonexistent.pgm --method mad").code, 2);
    EXPECT_EQ(run("denoise --ckpt /nonexistent.bin --in x.pgm --out y.pgm").code, 2);
    EXPECT_EQ(run("estimate --in /nonexistent.pgm --method bogus").code, 1);
}

TEST_F(Cli, TrainingProducesLoadableCheckpoints) {
    const auto snap = cdl::load_checkpoint<double>(ckpt);
    EXPECT_EQ(snap.epoch, 4);
    EXPECT_EQ(snap.model_cfg.num_filters, 4);
    EXPECT_TRUE(snap.model_cfg.adaptive);
    EXPECT_EQ(snap.seed, 7u);
}

TEST_F(Cli, ResumeExtendsACheckpoint) {
    const auto r = run("train --config " + dir + "/train.cfg --resume " + ckpt +
                       " --epochs 6 --out " + dir + "/run2");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto snap = cdl::load_checkpoint<double>(dir + "/run2/latest.bin");
    EXPECT_EQ(snap.epoch, 6);
}

TEST_F(Cli, EstimateReadsNoisyImages) {
    cdl::Image<double> clean = cdl::synth_smooth_scene<double>(96, 96, 11);
    cdl::Rng rng(12);
    for (auto& v : clean.data) v += (25.0 / 255.0) * rng.normal();
    const std::string noisy = dir + "/noisy96.pgm";
    cdl::save_image(noisy, clean);

    for (const char* method : {"mad", "pca"}) {
        const auto r = run("estimate --in " + noisy + " --method " + method);
        ASSERT_EQ(r.code, 0) << r.out;
        const auto pos = r.out.find(": ");
        ASSERT_NE(pos, std::string::npos) << r.out;
        const double est = std::stod(r.out.substr(pos + 2));
        EXPECT_NEAR(est, 25.0, 3.0) << method << ": " << r.out;
    }
}

TEST_F(Cli, DenoiseWritesAndIsDeterministic) {
    const std::string in = dir + "/data/img_000.pgm";
    const auto a = run("denoise --ckpt " + ckpt + " --in " + in + " --out " + dir +
                       "/den_a.pgm --sigma 25");
    ASSERT_EQ(a.code, 0) << a.out;
    EXPECT_NE(a.out.find("sigma used: 25.00"), std::string::npos) << a.out;

    const auto b = run("denoise --ckpt " + ckpt + " --in " + in + " --out " + dir +
                       "/den_b.pgm --sigma auto-pca");
    ASSERT_EQ(b.code, 0) << b.out;
    const auto b2 = run("denoise --ckpt " + ckpt + " --in " + in + " --out " + dir +
                        "/den_b2.pgm --sigma auto-pca");
    ASSERT_EQ(b2.code, 0) << b2.out;
    EXPECT_EQ(read_bytes(dir + "/den_b.pgm"), read_bytes(dir + "/den_b2.pgm"));

    const auto img = cdl::read_pgm(dir + "/den_a.pgm");
    const auto src = cdl::read_pgm(in);
    EXPECT_EQ(img.height, src.height);
    EXPECT_EQ(img.width, src.width);

    // this checkpoint is adaptive: sigma is mandatory
    EXPECT_EQ(run("denoise --ckpt " + ckpt + " --in " + in + " --out " + dir + "/den_c.pgm").code,
              1);
    EXPECT_EQ(run("denoise --ckpt " + ckpt + " --in " + in + " --out " + dir +
                  "/den_d.pgm --sigma nonsense").code,
              1);
}

TEST_F(Cli, EvalWritesAStableReport) {
    const std::string rep = dir + "/report.csv";
    const std::string args = "eval --ckpt " + ckpt + " --data " + dir +
                             "/data --sigmas 15,25 --seed 3 --estimator pca --report " + rep;
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("denoised-psnr"), std::string::npos);

    const std::string first = read_bytes(rep);
    EXPECT_NE(first.find("model,estimator,image,sigma,psnr_noisy,psnr_denoised,sigma_used\n"),
              std::string::npos);
    // header + 6 images x 2 sigmas
    EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 13);
    EXPECT_NE(first.find("latest,pca,img_000.pgm,15.000000,"), std::string::npos);

    const auto again = run(args);
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(read_bytes(rep), first);
}

TEST_F(Cli, DumpFiltersRendersTheDictionary) {
    const auto r = run("dump-filters --ckpt " + ckpt + " --out " + dir + "/filters.pgm");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto img = cdl::read_pgm(dir + "/filters.pgm");
    // 4 filters of size 3 -> 2x2 grid of 3x3 tiles with 1px separators
    EXPECT_EQ(img.height, img.width);
    EXPECT_EQ(img.height, 2 * 3 + 1);
}

TEST_F(Cli, RejectsBadConfigs) {
    std::ofstream bad(dir + "/bad.cfg");
    bad << "num_filters = 4\nwhat_is_this = 12\n";
    bad.close();
    EXPECT_EQ(run("train --config " + dir + "/bad.cfg").code, 2);

    std::ofstream dup(dir + "/dup.cfg");
    dup << "lr = 1e-3\nlr = 2e-3\n";
    dup.close();
    EXPECT_EQ(run("train --config " + dir + "/dup.cfg").code, 2);

    EXPECT_EQ(run("train --config " + dir + "/missing.cfg").code, 2);
}
