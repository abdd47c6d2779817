#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tln/io.hpp"

using namespace tln;
namespace fs = std::filesystem;

namespace {

struct RunOutcome {
    int exit_code;
    std::string output;
};

fs::path work_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "tln_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string binary() {
    const char* bin = std::getenv("TLN_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "TLN_BIN must point at the tln binary");
    return bin;
}

RunOutcome run(const std::string& args) {
    const fs::path log = work_root() / "last_output.txt";
    const std::string cmd = binary() + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    int code = -1;
    if (WIFEXITED(status)) code = WEXITSTATUS(status);
    return {code, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// One shared tiny corpus: source dataset, target dataset, pretrained model.
struct Corpus {
    fs::path src, tgt, model;
};

const Corpus& corpus() {
    static Corpus c = [] {
        Corpus out;
        const fs::path root = work_root();
        out.src = root / "src_ds";
        out.tgt = root / "tgt_ds";
        out.model = root / "pre" / "model.tln";
        REQUIRE(run("make-dataset --out " + out.src.string() +
                    " --name src --classes 4 --per-class 24 --height 8 --width 8 --seed 3")
                    .exit_code == 0);
        REQUIRE(run("make-dataset --out " + out.tgt.string() +
                    " --name tgt --classes 3 --offset 8 --per-class 16 --height 8 --width 8 "
                    "--seed 4")
                    .exit_code == 0);
        REQUIRE(run("pretrain --data " + out.src.string() + " --arch toy4 --out " +
                    (root / "pre").string() + " --iterations 50 --batch 16 --seed 5")
                    .exit_code == 0);
        return out;
    }();
    return c;
}

}  // namespace

TEST_CASE("unknown flags produce usage text and a nonzero exit") {
    RunOutcome r = run("finetune --definitely-not-a-flag");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("--help") != std::string::npos);

    RunOutcome none = run("");
    CHECK(none.exit_code != 0);
}

TEST_CASE("unparseable TLN strings exit with the config code and a byte offset") {
    const auto& c = corpus();
    RunOutcome r = run("finetune --model " + c.model.string() + " --data " + c.tgt.string() +
                       " --tln \"[chi]_Q^psi\" --iterations 2 --batch 4 --out " +
                       (work_root() / "bad").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("byte") != std::string::npos);
}

TEST_CASE("missing datasets exit with the data code") {
    const auto& c = corpus();
    RunOutcome r = run("finetune --model " + c.model.string() + " --data " +
                       (work_root() / "nope").string() + " --out " +
                       (work_root() / "bad2").string());
    CHECK(r.exit_code == 3);
}

TEST_CASE("the traditional baseline notation runs end to end") {
    const auto& c = corpus();
    const fs::path out = work_root() / "ft_trad";
    RunOutcome r = run("finetune --model " + c.model.string() + " --data " + c.tgt.string() +
                       " --tln \"[chi^N-1]_N-2^psi\" --iterations 12 --batch 8 --seed 6 --out " +
                       out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "metrics.jsonl"));
    CHECK(fs::exists(out / "result.json"));
    auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["config"]["tln"] == "[chi^N-1]_N-2^psi");
    CHECK(manifest["config_hash"].get<std::string>().size() == 64);
}

TEST_CASE("import round-trips a CSV dataset") {
    const fs::path root = work_root();
    const fs::path csv = root / "import.csv";
    {
        std::ofstream os(csv);
        // 2 samples of 1x2x2, labels 0 and 1
        os << "0,10,20,30,40\n";
        os << "1,250,240,230,220\n";
    }
    const fs::path out = root / "imported";
    RunOutcome r = run("import --csv " + csv.string() + " --out " + out.string() +
                       " --class-names a,b --channels 1 --height 2 --width 2");
    CHECK(r.exit_code == 0);
    Dataset ds = load_dataset(out);
    CHECK(ds.count() == 2);
    CHECK(ds.labels == std::vector<std::uint8_t>{0, 1});
    CHECK(ds.pixels[0] == 10);
    CHECK(ds.pixels[7] == 220);

    // malformed rows are data errors
    {
        std::ofstream os(csv);
        os << "0,10,20\n";
    }
    CHECK(run("import --csv " + csv.string() + " --out " + out.string() +
              " --class-names a,b --channels 1 --height 2 --width 2")
              .exit_code == 3);
}

TEST_CASE("sweep then report: reproducible bytes and matching long-form schema") {
    const auto& c = corpus();
    const fs::path root = work_root();
    const fs::path cfg_file = root / "sweep_cfg.json";
    {
        nlohmann::json cfg;
        cfg["source_model"] = c.model.string();
        cfg["dataset"] = c.tgt.string();
        cfg["train_fraction"] = 0.75;
        cfg["master_seed"] = 11;
        cfg["repeats"] = 2;
        cfg["budget"] = {{"iterations", 6}, {"batch_size", 8}};
        cfg["schedule"] = {{"base_lr", 0.01}};
        cfg["jobs"] = 2;
        cfg["variants"] = nlohmann::json::array(
            {{{"label", "traditional"}, {"tln", "[chi^N-1]_N^psi"}},
             {{"label", "proposed"}, {"tln", "[chi]_N^psi"}}});
        write_text_file(cfg_file, canonical_json(cfg));
    }
    const fs::path sw1 = root / "sw1", sw2 = root / "sw2";
    CHECK(run("sweep --config " + cfg_file.string() + " --out " + sw1.string()).exit_code == 0);
    CHECK(run("sweep --config " + cfg_file.string() + " --out " + sw2.string()).exit_code == 0);

    // identical config -> bit-identical outputs
    CHECK(slurp(sw1 / "sweep.json") == slurp(sw2 / "sweep.json"));
    CHECK(slurp(sw1 / "sweep.csv") == slurp(sw2 / "sweep.csv"));
    CHECK(slurp(sw1 / "manifest.json") == slurp(sw2 / "manifest.json"));

    // matrix is complete: (4 + 3 setups) x 2 repeats data rows + header
    {
        std::istringstream is(slurp(sw1 / "sweep.csv"));
        std::string line;
        std::getline(is, line);
        CHECK(line == "variant,nu,repeat,accuracy");
        std::int64_t rows = 0;
        while (std::getline(is, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == (4 + 3) * 2);
    }

    const fs::path rep = root / "rep";
    RunOutcome r = run("report --sweep " + (sw1 / "sweep.json").string() +
                       " --nu N-1 --out " + rep.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("gain of proposed over traditional") != std::string::npos);
    // report re-derives the long-form csv byte for byte
    CHECK(slurp(rep / "long.csv") == slurp(sw1 / "sweep.csv"));
    {
        std::istringstream is(slurp(rep / "curves.csv"));
        std::string header;
        std::getline(is, header);
        CHECK(header == "dataset,variant,nu,mean_accuracy,ci95");
    }
}

TEST_CASE("tsne command writes coordinates with origin tags") {
    const auto& c = corpus();
    const fs::path out = work_root() / "ts";
    RunOutcome r = run("tsne --model " + c.model.string() + " --datasets " + c.src.string() +
                       "," + c.tgt.string() +
                       " --layer L_N --perplexity 8 --iterations 60 --samples 24 --seed 7 --out " +
                       out.string());
    CHECK(r.exit_code == 0);
    std::istringstream is(slurp(out / "tsne.csv"));
    std::string header;
    std::getline(is, header);
    CHECK(header == "sample_id,origin_dataset,x,y");
    std::int64_t rows = 0, src_rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.find(",src,") != std::string::npos) ++src_rows;
    }
    CHECK(rows == 48);
    CHECK(src_rows == 24);
    CHECK(fs::exists(out / "kl.jsonl"));

    // unknown layer names are config errors listing alternatives
    RunOutcome bad = run("tsne --model " + c.model.string() + " --datasets " + c.src.string() +
                         " --layer nope --iterations 5 --out " + (work_root() / "tsbad").string());
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("available") != std::string::npos);
}
