#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tln/error.hpp"
#include "tln/hash.hpp"
#include "tln/io.hpp"
#include "tln/synth.hpp"

using namespace tln;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("tln_io_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // block-boundary lengths
    CHECK(sha256_hex(std::string(55, 'a')) ==
          "9f4390f8d30c2dd92ec9f095b65e2b9ae9b0a925a5258e241c9f1e910f734318");
    CHECK(sha256_hex(std::string(64, 'a')) ==
          "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
}

TEST_CASE("dataset size arithmetic and round trip") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 5;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 51;
    Dataset ds = generate_shapes(spec);  // 10 samples of 3x16x16

    fs::path dir = temp_dir("roundtrip");
    save_dataset(ds, dir);
    CHECK(fs::file_size(dir / "data.bin") == 10 * (3 * 16 * 16 + 1));

    Dataset back = load_dataset(dir);
    CHECK(back.pixels == ds.pixels);
    CHECK(back.labels == ds.labels);
    CHECK(back.class_names == ds.class_names);
    CHECK(back.channel_mean == ds.channel_mean);
    CHECK(back.channel_std == ds.channel_std);

    // saving the loaded dataset reproduces both files byte for byte
    fs::path dir2 = temp_dir("roundtrip2");
    save_dataset(back, dir2);
    CHECK(file_bytes(dir / "data.bin") == file_bytes(dir2 / "data.bin"));
    CHECK(file_bytes(dir / "meta.json") == file_bytes(dir2 / "meta.json"));
}

TEST_CASE("corrupt datasets are rejected with byte counts") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 3;
    spec.seed = 52;
    Dataset ds = generate_shapes(spec);
    fs::path dir = temp_dir("corrupt");
    save_dataset(ds, dir);

    // truncate data.bin
    std::string bytes = file_bytes(dir / "data.bin");
    bytes.resize(bytes.size() - 10);
    std::ofstream(dir / "data.bin", std::ios::binary | std::ios::trunc) << bytes;
    try {
        load_dataset(dir);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected") != std::string::npos);
        CHECK(msg.find("found") != std::string::npos);
    }

    // label byte beyond the class count
    save_dataset(ds, dir);
    bytes = file_bytes(dir / "data.bin");
    bytes[std::size_t(3 * 16 * 16)] = char(9);  // first record's label
    std::ofstream(dir / "data.bin", std::ios::binary | std::ios::trunc) << bytes;
    try {
        load_dataset(dir);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("record 0") != std::string::npos);
    }

    CHECK_THROWS_AS(load_dataset(temp_dir("missing")), DataError);
}

TEST_CASE("network archive round trip is byte-identical") {
    Rng rng(53);
    auto chi = build_source_network("toy8", {3, 16, 16}, 6, rng);
    TlnConfig cfg;
    cfg.nu = Ref{false, 3};
    cfg.tau = 1;
    cfg.sizes = {24};
    cfg.norm = NormScheme::BatchStd;
    cfg.target_classes = 4;
    Tln net = instantiate(chi, cfg, 54);

    fs::path dir = temp_dir("archive");
    save_network(net, dir / "net.tln");
    Tln back = load_network(dir / "net.tln");
    save_network(back, dir / "net2.tln");
    CHECK(file_bytes(dir / "net.tln") == file_bytes(dir / "net2.tln"));

    CHECK(back.total_units() == net.total_units());
    CHECK(back.psi.size() == net.psi.size());
    CHECK(back.meta.source_id == net.meta.source_id);
    CHECK(back.units[0].layers[0].params.weight.data ==
          net.units[0].layers[0].params.weight.data);
    CHECK(back.units[8].layers[0].params.running_var.data ==
          net.units[8].layers[0].params.running_var.data);

    // pretrained wrapper rejects fine-tuned archives
    CHECK_THROWS_AS(load_pretrained(dir / "net.tln"), DataError);
    save_pretrained(chi, dir / "chi.tln");
    PretrainedNetwork chi2 = load_pretrained(dir / "chi.tln");
    CHECK(chi2.depth() == chi.depth());
    CHECK(chi2.units[7].layers[0].params.weight.data ==
          chi.units[7].layers[0].params.weight.data);
}

TEST_CASE("archives reject corruption") {
    fs::path dir = temp_dir("badarchive");
    write_text_file(dir / "x.tln", "NOPE....");
    CHECK_THROWS_AS(load_network(dir / "x.tln"), DataError);

    Rng rng(55);
    auto chi = build_source_network("toy4", {1, 8, 8}, 3, rng);
    save_pretrained(chi, dir / "chi.tln");
    std::string bytes = file_bytes(dir / "chi.tln");
    bytes.resize(bytes.size() / 2);
    std::ofstream(dir / "chi.tln", std::ios::binary | std::ios::trunc) << bytes;
    try {
        load_pretrained(dir / "chi.tln");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
}

TEST_CASE("manifests hash canonical configs") {
    nlohmann::json cfg;
    cfg["seed"] = 7;
    cfg["tln"] = "[chi]_N-5^psi";
    nlohmann::json a = make_manifest("finetune", cfg);
    nlohmann::json b = make_manifest("finetune", cfg);
    CHECK(a == b);
    CHECK(a["config_hash"] == sha256_hex(canonical_json(cfg)));

    nlohmann::json other = cfg;
    other["seed"] = 8;
    CHECK(make_manifest("finetune", other)["config_hash"] != a["config_hash"]);

    // key order does not matter: json objects are sorted
    nlohmann::json reordered;
    reordered["tln"] = "[chi]_N-5^psi";
    reordered["seed"] = 7;
    CHECK(make_manifest("finetune", reordered)["config_hash"] == a["config_hash"]);
}
