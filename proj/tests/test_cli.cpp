#include "headswap/pipeline/cli.hpp"
#include "headswap/pipeline/formats.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;
using testing_support::TempDir;

namespace {

struct Run
{
    int code = 0;
    std::string out, err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "headswap");
    std::vector<const char*> argv;
    for (const std::string& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = headswap::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file())
            files.push_back(fs::relative(e.path(), a));
    for (const fs::path& f : files)
        if (!fs::exists(b / f) || bytes(a / f) != bytes(b / f))
            return false;
    return !files.empty();
}

} // namespace

TEST_CASE("cli: usage errors exit with 2")
{
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"fit", "--landmarks", "x.json", "--out", "y.json"}).code == 2);
    const Run unknown = run({"metrics", "--fake", ".", "--real", ".", "--frobnicate"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("frobnicate") != std::string::npos);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("cli: runtime failures exit with 1")
{
    TempDir dir("cli_fail");
    std::ofstream(dir.path / "model.fmm") << "garbage";
    std::ofstream(dir.path / "lm.json") << "{}";
    const Run r = run({"fit", "--model", (dir.path / "model.fmm").string(), "--landmarks",
                       (dir.path / "lm.json").string(), "--out", (dir.path / "fit.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("error:") == 0);
}

TEST_CASE("cli: full pipeline on a synthetic fixture")
{
    TempDir dir("cli");
    const fs::path d = dir.path;
    const std::string data = (d / "data").string(), p0 = (d / "data" / "person_000").string(),
                      p1 = (d / "data" / "person_001").string();
    REQUIRE(run({"--seed", "3", "synth-data", "--out", data, "--persons", "2", "--frames", "24", "--size", "32"})
                .code == 0);
    CHECK(fs::exists(d / "data" / "model.fmm"));
    CHECK(fs::exists(d / "data" / "person_001" / "nmfc" / "000023.nmfc"));

    const std::string model = (d / "data" / "model.fmm").string();
    REQUIRE(run({"fit", "--model", model, "--landmarks", p0 + "/landmarks.json", "--w-pr", "0.05", "--k-id", "3",
                 "--out", (d / "fit0.json").string()})
                .code == 0);
    REQUIRE(run({"--threads", "2", "fit", "--model", model, "--landmarks", p1 + "/landmarks.json", "--out",
                 (d / "fit1.json").string()})
                .code == 0);
    const headswap::FitResult fit0 = headswap::fit_from_json(headswap::read_json(d / "fit0.json"));
    CHECK(fit0.num_frames() == 24);
    CHECK(fit0.terms.landmark < 1.0);

    CHECK(run({"reenact", "--source-fit", (d / "fit1.json").string(), "--target-fit", (d / "fit0.json").string(),
               "--out", (d / "reenact").string()})
              .code == 2);
    REQUIRE(run({"reenact", "--model", model, "--source-fit", (d / "fit1.json").string(), "--target-fit",
                 (d / "fit0.json").string(), "--size", "32", "--out", (d / "reenact").string()})
                .code == 0);
    const headswap::FitResult re = headswap::fit_from_json(headswap::read_json(d / "reenact" / "fit.json"));
    const headswap::FitResult fit1 = headswap::fit_from_json(headswap::read_json(d / "fit1.json"));
    CHECK(re.identity == fit0.identity);
    CHECK(re.expressions == fit1.expressions);
    CHECK(fs::exists(d / "reenact" / "000023.nmfc"));

    REQUIRE(run({"nmfc", "--model", model, "--fit", (d / "fit0.json").string(), "--size", "32", "--out",
                 (d / "fit0_nmfc").string()})
                .code == 0);
    CHECK(fs::exists(d / "fit0_nmfc" / "000023.nmfc"));

    const std::string ckpt = (d / "multi.ckpt").string();
    REQUIRE(run({"--seed", "4", "train-init", "--data", p0, "--data", p1, "--steps", "2", "--out", ckpt, "--log",
                 (d / "init.csv").string()})
                .code == 0);
    CHECK(fs::exists(d / "init.csv"));
    REQUIRE(run({"--seed", "4", "train-init", "--data", p0, "--data", p1, "--steps", "2", "--out",
                 (d / "multi2.ckpt").string()})
                .code == 0);
    CHECK(bytes(ckpt) == bytes(d / "multi2.ckpt"));

    const std::string person = (d / "person.ckpt").string();
    REQUIRE(run({"finetune", "--checkpoint", ckpt, "--data", p0, "--test-len", "4", "--steps", "2", "--out", person})
                .code == 0);
    CHECK(run({"finetune", "--checkpoint", ckpt, "--data", p0, "--test-len", "24", "--steps", "1", "--out",
               (d / "x.ckpt").string()})
              .code == 1);

    REQUIRE(run({"render", "--checkpoint", person, "--nmfc", (d / "reenact").string(), "--out",
                 (d / "render").string()})
                .code == 0);
    CHECK(fs::exists(d / "render" / "frames" / "000023.png"));
    CHECK(fs::exists(d / "render" / "masks" / "000023.png"));
    REQUIRE(run({"render", "--checkpoint", ckpt, "--nmfc", p0 + "/nmfc", "--reference", p0, "--background",
                 p1 + "/frames", "--out", (d / "render_adaptive").string()})
                .code == 0);
    CHECK(run({"render", "--checkpoint", ckpt, "--nmfc", p0 + "/nmfc", "--out", (d / "r3").string()}).code == 1);

    const Run report = run({"metrics", "--fake", (d / "render" / "frames").string(), "--real", p0 + "/frames",
                            "--masks", p0 + "/masks", "--pred-masks", (d / "render" / "masks").string(), "--out",
                            (d / "report.json").string()});
    REQUIRE(report.code == 0);
    const nlohmann::json j = headswap::read_json(d / "report.json");
    CHECK(j.at("frames") == 24);
    CHECK(j.at("avg_pixel_dist").get<double>() > 0.0);
    CHECK(j.at("mask_iou").get<double>() >= 0.0);
    CHECK(j.at("mask_iou").get<double>() <= 1.0);

    const Run same = run({"metrics", "--fake", p0 + "/frames", "--real", p0 + "/frames", "--masks", p0 + "/masks"});
    REQUIRE(same.code == 0);
    const nlohmann::json zero = nlohmann::json::parse(same.out);
    CHECK(zero.at("avg_pixel_dist") == 0.0);
    CHECK(zero.at("masked_avg_pixel_dist") == 0.0);

    REQUIRE(run({"--seed", "3", "synth-data", "--out", (d / "again").string(), "--persons", "2", "--frames", "24",
                 "--size", "32"})
                .code == 0);
    CHECK(same_tree(d / "data", d / "again"));
}

TEST_CASE("cli: TOML config mirrors the flags")
{
    TempDir dir("cli_cfg");
    std::ofstream(dir.path / "run.toml") << "seed = 9\n[synth-data]\npersons = 1\nframes = 3\nsize = 16\nout = \""
                                         << (dir.path / "cfg").string() << "\"\n";
    REQUIRE(run({"--config", (dir.path / "run.toml").string(), "synth-data"}).code == 0);
    CHECK(fs::exists(dir.path / "cfg" / "person_000" / "frames" / "000002.png"));
    CHECK_FALSE(fs::exists(dir.path / "cfg" / "person_001"));
    REQUIRE(run({"--seed", "9", "synth-data", "--out", (dir.path / "flags").string(), "--persons", "1", "--frames", "3",
                 "--size", "16"})
                .code == 0);
    CHECK(same_tree(dir.path / "cfg", dir.path / "flags"));
}
