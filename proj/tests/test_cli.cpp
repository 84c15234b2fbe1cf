#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <string>

#include "support.hpp"
#include "xpt/digest.hpp"
#include "xpt/io.hpp"

using namespace xpt;
namespace fs = std::filesystem;

namespace {

const std::string kCli = XPT_CLI_PATH;
const std::string kSmoke = std::string(XPT_SOURCE_DIR) + "/configs/smoke.json";

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string p(const fs::path& path) { return "'" + path.string() + "'"; }

std::map<std::string, std::string> xptv_digests(const nlohmann::json& manifest) {
    std::map<std::string, std::string> out;
    for (const auto& a : manifest.at("artifacts")) {
        const auto path = a.at("path").get<std::string>();
        if (path.ends_with(".xptv")) out[path] = a.at("sha256").get<std::string>();
    }
    return out;
}

void truncate_file(const fs::path& path, std::uintmax_t size) { fs::resize_file(path, size); }

void overwrite_head(const fs::path& path) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("JUNK", 4);
}

}  // namespace

TEST_CASE("help and usage errors") {
    CHECK(run("--help") == 0);
    for (const char* sub : {"phantom", "simulate", "approximant", "reconstruct", "metrics", "psd", "sweep", "pipeline"})
        CHECK(run(std::string(sub) + " --help") == 0);
    CHECK(run("") == 2);
    CHECK(run("teleport") == 2);
    CHECK(run("phantom --out-label a.xptv") == 2);
    CHECK(run("reconstruct --method art --sino x --out y") == 2);
    CHECK(run("--version") == 0);
}

TEST_CASE("pipeline writes a readable manifest and refuses to overwrite") {
    test::TempDir dir("cli_pipeline");
    REQUIRE(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(dir.path())) == 0);
    const auto manifest = read_json(dir / "manifest.json");
    const auto& artifacts = manifest.at("artifacts");
    CHECK(artifacts.size() >= 7);
    for (const auto& a : artifacts) {
        const fs::path file = dir / a.at("path").get<std::string>();
        REQUIRE(fs::exists(file));
        CHECK(sha256_file(file) == a.at("sha256").get<std::string>());
        const auto name = file.filename().string();
        if (name == "probe.xptv") CHECK(!read_complex_stack(file).empty());
        else if (name.ends_with(".xptv") && name != "stack.xptv") CHECK(read_volume(file).size() > 0);
        else if (name.ends_with(".json")) CHECK(!read_json(file).is_null());
    }
    CHECK(manifest.at("seed") == 7);
    CHECK(manifest.at("stage_wall_time_s").size() == 6);
    CHECK(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(dir.path())) == 2);
    CHECK(run("pipeline --quiet --force --config " + p(kSmoke) + " --out-dir " + p(dir.path())) == 0);
}

TEST_CASE("pipeline reruns are bit-identical and XPT_SEED changes the run") {
    test::TempDir a("cli_rerun_a"), b("cli_rerun_b"), c("cli_rerun_c");
    REQUIRE(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(a.path())) == 0);
    REQUIRE(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(b.path())) == 0);
    const auto ma = read_json(a / "manifest.json"), mb = read_json(b / "manifest.json");
    CHECK(ma.at("config_hash") == mb.at("config_hash"));
    const auto da = xptv_digests(ma);
    CHECK(da.size() >= 5);
    CHECK(da == xptv_digests(mb));

    REQUIRE(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(c.path()), "XPT_SEED=11") == 0);
    const auto mc = read_json(c / "manifest.json");
    CHECK(mc.at("seed") == 11);
    CHECK(mc.at("config_hash") != ma.at("config_hash"));
    CHECK(xptv_digests(mc).at("phase.xptv") != da.at("phase.xptv"));
    CHECK(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(c.path()), "XPT_SEED=abc") == 2);
}

TEST_CASE("subcommands chain through files") {
    test::TempDir dir("cli_chain");
    const auto spec = dir / "phantom.json";
    write_json({{"dims", {16, 24, 24}}, {"seed", 3}}, spec);
    const auto config = dir / "run.json";
    write_json({{"slice_count", 2}, {"mode_count", 2}, {"slice_spacing_nm", 112.0}}, config);

    REQUIRE(run("phantom --quiet --spec " + p(spec) + " --out-label " + p(dir / "label.xptv") + " --out-phase " +
                p(dir / "phase.xptv")) == 0);
    REQUIRE(run("simulate --quiet --phase " + p(dir / "phase.xptv") + " --config " + p(config) + " --angles 4 " +
                "--half-range 45 --overlap 0.5 --out " + p(dir / "stack.xptv") + " --out-probe " +
                p(dir / "probe.xptv") + " --out-plan " + p(dir / "plan.json")) == 0);
    CHECK(fs::exists(dir / "stack.xptv.json"));
    REQUIRE(run("approximant --quiet --stack " + p(dir / "stack.xptv") + " --plan " + p(dir / "plan.json") +
                " --probe " + p(dir / "probe.xptv") + " --config " + p(config) + " --iters 1 --target-z 16 --out " +
                p(dir / "approx.xptv") + " --log " + p(dir / "loss.jsonl")) == 0);
    CHECK(read_volume(dir / "approx.xptv").dims() == Dims3{16, 24, 24});
    REQUIRE(run("reconstruct --quiet --method sart --stack " + p(dir / "stack.xptv") + " --plan " +
                p(dir / "plan.json") + " --probe " + p(dir / "probe.xptv") + " --config " + p(config) +
                " --retrieval-iters 5 --depth 16 --out-sino " + p(dir / "sino.xptv") + " --out " +
                p(dir / "sart.xptv")) == 0);
    REQUIRE(run("reconstruct --quiet --method fbp --sino " + p(dir / "sino.xptv") + " --angles " +
                p(dir / "plan.json") + " --depth 16 --out " + p(dir / "fbp.xptv")) == 0);
    CHECK(read_volume(dir / "fbp.xptv").dims() == Dims3{16, 24, 24});
    REQUIRE(run("metrics --quiet --ref " + p(dir / "phase.xptv") + " --test " + p(dir / "sart.xptv") + " --out " +
                p(dir / "report.json")) == 0);
    const auto report = read_json(dir / "report.json");
    CHECK(report.contains("pcc"));
    CHECK(report.contains("confusion"));
    REQUIRE(run("psd --quiet --in " + p(dir / "fbp.xptv") + " --theta 45 --out " + p(dir / "psd.xptv") +
                " --report " + p(dir / "wedge.json")) == 0);
    const double fraction = read_json(dir / "wedge.json").at("fraction").get<double>();
    CHECK(fraction >= 0.0);
    CHECK(fraction <= 1.0);

    CHECK(run("reconstruct --quiet --method fbp --sino " + p(dir / "sino.xptv") + " --out " +
              p(dir / "other.xptv")) == 2);
    write_json({0.0, 10.0}, dir / "short.json");
    CHECK(run("reconstruct --quiet --method fbp --sino " + p(dir / "sino.xptv") + " --angles " +
              p(dir / "short.json") + " --out " + p(dir / "other.xptv")) == 3);
}

TEST_CASE("sweep subcommand writes csv and json") {
    test::TempDir dir("cli_sweep");
    const auto spec = dir / "sweep.json";
    write_json({{"phantom", {{"dims", {24, 24, 24}}, {"seed", 5}}},
                {"sweep", {{"n_list", {9, 3}}, {"theta_list", {60.0, 20.0}}, {"methods", {"fbp"}}}}},
               spec);
    REQUIRE(run("sweep --quiet --spec " + p(spec) + " --out " + p(dir / "sweep.csv")) == 0);
    std::ifstream csv(dir / "sweep.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "N,theta,method,pcc,ms_ssim,dsc,ber,wall_time_s");
    CHECK(read_json(dir / "sweep.csv.json").contains("knees"));
    write_json({{"phantom", {{"dims", {24, 24, 24}}}}}, dir / "nosweep.json");
    CHECK(run("sweep --quiet --spec " + p(dir / "nosweep.json") + " --out " + p(dir / "x.csv")) == 2);
}

TEST_CASE("corrupted and degenerate inputs map to distinct exit codes") {
    test::TempDir dir("cli_errors");
    REQUIRE(run("pipeline --quiet --config " + p(kSmoke) + " --out-dir " + p(dir.path())) == 0);
    const auto plan = p(dir / "plan.json"), probe = p(dir / "probe.xptv");

    truncate_file(dir / "stack.xptv", 100);
    CHECK(run("approximant --quiet --stack " + p(dir / "stack.xptv") + " --plan " + plan + " --probe " + probe +
              " --out " + p(dir / "a.xptv")) == 3);
    overwrite_head(dir / "sart.xptv");
    CHECK(run("metrics --quiet --ref " + p(dir / "phase.xptv") + " --test " + p(dir / "sart.xptv") + " --out " +
              p(dir / "m.json")) == 3);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run("pipeline --quiet --config " + p(dir / "broken.json") + " --out-dir " + p(dir / "again")) == 3);

    const auto phase = read_volume(dir / "phase.xptv");
    write_volume(Volume(phase.dims(), phase.pitch(), VolumeKind::kPhase), dir / "flat.xptv");
    CHECK(run("metrics --quiet --ref " + p(dir / "phase.xptv") + " --test " + p(dir / "flat.xptv") + " --out " +
              p(dir / "m2.json")) == 4);
}
