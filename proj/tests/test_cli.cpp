#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path root = fs::temp_directory_path() / "akn_test_cli";

int run(const std::string& args)
{
    const std::string cmd = std::string(AKN_BINARY) + " " + args + " >" + (root / "out.txt").string() + " 2>" +
                            (root / "err.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

const char* tiny = "clip_len = 4\nheight = 16\nwidth = 16\ntrain_clips = 6\nval_clips = 3\n"
                   "epochs = 1\nbatch = 3\nlr = 0.01\ndecay_epochs = none\n";

} // namespace

TEST_CASE("cli end to end and exit codes")
{
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string q = root.string();
    write(root / "s1.conf", std::string(tiny) + "stage = 1\n");
    write(root / "s2.conf", std::string(tiny) + "stage = 2\ninit_ckpt = " + q + "/s1/model.akck\n");
    write(root / "s2bad.conf", std::string(tiny) + "stage = 2\n");
    write(root / "s2missing.conf", std::string(tiny) + "stage = 2\ninit_ckpt = " + q + "/none/model.akck\n");
    write(root / "broken.conf", "alpha = 7\n");

    CHECK(run("--help") == 0);
    CHECK(run("") != 0);
    CHECK(run("gen --out " + q + "/data") == 2);
    CHECK(run("gen --out " + q + "/data --config " + q + "/broken.conf") == 2);
    CHECK(run("gen --out " + q + "/data --config " + q + "/absent.conf") == 2);

    REQUIRE(run("gen --out " + q + "/data --config " + q + "/s1.conf") == 0);
    CHECK(fs::exists(root / "data" / "train" / "clip_00005.akvd"));
    CHECK(fs::exists(root / "data" / "val" / "clip_00002.akvd"));

    REQUIRE(run("train --quiet --data " + q + "/data --config " + q + "/s1.conf --out " + q + "/s1") == 0);
    CHECK(fs::exists(root / "s1" / "model.akck"));
    CHECK(slurp(root / "s1" / "metrics.log").starts_with("epoch=1 "));

    CHECK(run("train --quiet --data " + q + "/data --config " + q + "/s2bad.conf --out " + q + "/x") == 2);
    CHECK(run("train --quiet --data " + q + "/data --config " + q + "/s2missing.conf --out " + q + "/x") == 3);
    CHECK(run("train --quiet --data " + q + "/nodata --config " + q + "/s1.conf --out " + q + "/x") == 3);
    REQUIRE(run("train --quiet --data " + q + "/data --config " + q + "/s2.conf --out " + q + "/s2") == 0);

    REQUIRE(run("eval --ckpt " + q + "/s2/model.akck --data " + q + "/data") == 0);
    CHECK(slurp(root / "out.txt").find("accuracy") != std::string::npos);
    CHECK(run("eval --ckpt " + q + "/nothing.akck --data " + q + "/data") == 3);

    REQUIRE(run("analyze --config " + q + "/s2.conf --sweep --out " + q + "/sweep.tsv") == 0);
    CHECK(slurp(root / "sweep.tsv").starts_with("split\talpha\tgflops\tparams\n"));
    REQUIRE(run("analyze --config " + q + "/s2.conf") == 0);
    CHECK(slurp(root / "out.txt").starts_with("layer\tkind\tparams\tflops\n"));

    REQUIRE(run("viz --ckpt " + q + "/s2/model.akck --clip " + q + "/data/val/clip_00000.akvd --out " + q + "/viz") ==
            0);
    CHECK(fs::exists(root / "viz" / "frame_00.ppm"));
    CHECK(run("viz --ckpt " + q + "/s2/model.akck --clip " + q + "/none.akvd --out " + q + "/viz") == 3);
    fs::remove_all(root);
}
