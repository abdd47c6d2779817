#include "tln/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "tln/error.hpp"
#include "tln/hash.hpp"

namespace tln {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'L', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(char(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(char((v >> (8 * i)) & 0xff));
    }
    void i64(std::int64_t v) {
        auto u = std::uint64_t(v);
        for (int i = 0; i < 8; ++i) bytes_.push_back(char((u >> (8 * i)) & 0xff));
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        for (int i = 0; i < 8; ++i) bytes_.push_back(char((u >> (8 * i)) & 0xff));
    }
    void str(const std::string& s) {
        u32(std::uint32_t(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void tensor(const Tensor& t) {
        u8(t.size() > 0 ? 1 : 0);
        if (t.size() == 0) return;
        u32(std::uint32_t(t.shape.size()));
        for (auto d : t.shape) i64(d);
        for (double v : t.data) f64(v);
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    explicit Reader(std::string bytes, std::string what)
        : bytes_(std::move(bytes)), what_(std::move(what)) {}

    std::uint8_t u8() {
        need(1);
        return std::uint8_t(bytes_[at_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes_[at_ + i])) << (8 * i);
        at_ += 4;
        return v;
    }
    std::int64_t i64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes_[at_ + i])) << (8 * i);
        at_ += 8;
        return std::int64_t(v);
    }
    double f64() {
        const auto u = std::uint64_t(i64());
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes_.substr(at_, n);
        at_ += n;
        return s;
    }
    Tensor tensor() {
        if (u8() == 0) return Tensor();
        const std::uint32_t nd = u32();
        Shape shape;
        for (std::uint32_t i = 0; i < nd; ++i) shape.push_back(i64());
        const std::int64_t n = numel(shape);
        if (n < 0 || n > (1 << 28)) throw DataError(what_ + ": implausible tensor extent");
        std::vector<double> data;
        data.resize(std::size_t(n));
        for (auto& v : data) v = f64();
        return Tensor(std::move(shape), std::move(data));
    }
    void expect_end() const {
        if (at_ != bytes_.size()) {
            throw DataError(what_ + ": " + std::to_string(bytes_.size() - at_) +
                            " trailing bytes");
        }
    }

private:
    void need(std::size_t n) const {
        if (at_ + n > bytes_.size()) {
            throw DataError(what_ + ": truncated (wanted " + std::to_string(n) + " bytes at " +
                            std::to_string(at_) + " of " + std::to_string(bytes_.size()) + ")");
        }
    }
    std::string bytes_;
    std::string what_;
    std::size_t at_ = 0;
};

void write_binary_file(const fs::path& file, const std::string& bytes) {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + file.string());
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os) throw DataError("short write to " + file.string());
}

std::string read_binary_file(const fs::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw DataError("cannot read " + file.string());
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_layer(Writer& w, const Layer& layer) {
    w.str(layer_kind_name(layer.spec.kind));
    w.str(layer.spec.name);
    w.i64(layer.spec.units);
    w.i64(layer.spec.kernel);
    w.i64(layer.spec.stride);
    w.i64(layer.spec.pad);
    w.u8(layer.spec.classifier_init ? 1 : 0);
    w.u8(layer.spec.with_shift ? 1 : 0);
    w.tensor(layer.params.weight);
    w.tensor(layer.params.bias);
    w.tensor(layer.params.gamma);
    w.tensor(layer.params.beta);
    w.tensor(layer.params.running_mean);
    w.tensor(layer.params.running_var);
}

Layer read_layer(Reader& r) {
    Layer layer;
    layer.spec.kind = layer_kind_from_name(r.str());
    layer.spec.name = r.str();
    layer.spec.units = r.i64();
    layer.spec.kernel = r.i64();
    layer.spec.stride = r.i64();
    layer.spec.pad = r.i64();
    layer.spec.classifier_init = r.u8() != 0;
    layer.spec.with_shift = r.u8() != 0;
    layer.params.weight = r.tensor();
    layer.params.bias = r.tensor();
    layer.params.gamma = r.tensor();
    layer.params.beta = r.tensor();
    layer.params.running_mean = r.tensor();
    layer.params.running_var = r.tensor();
    return layer;
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
    ds.validate();
    fs::create_directories(dir);
    json meta;
    meta["name"] = ds.name;
    meta["classes"] = ds.class_names;
    meta["channels"] = ds.channels;
    meta["height"] = ds.height;
    meta["width"] = ds.width;
    meta["count"] = ds.count();
    meta["channel_mean"] = ds.channel_mean;
    meta["channel_std"] = ds.channel_std;
    write_text_file(dir / "meta.json", canonical_json(meta));

    std::string bytes;
    bytes.reserve(std::size_t(ds.count() * (ds.sample_values() + 1)));
    for (std::int64_t i = 0; i < ds.count(); ++i) {
        bytes.append(reinterpret_cast<const char*>(ds.pixels.data() + i * ds.sample_values()),
                     std::size_t(ds.sample_values()));
        bytes.push_back(char(ds.labels[std::size_t(i)]));
    }
    write_binary_file(dir / "data.bin", bytes);
}

Dataset load_dataset(const fs::path& dir) {
    json meta;
    try {
        meta = json::parse(read_text_file(dir / "meta.json"));
    } catch (const json::exception& e) {
        throw DataError("bad meta.json in " + dir.string() + ": " + e.what());
    }
    Dataset ds;
    try {
        ds.name = meta.at("name").get<std::string>();
        ds.class_names = meta.at("classes").get<std::vector<std::string>>();
        ds.channels = meta.at("channels").get<std::int64_t>();
        ds.height = meta.at("height").get<std::int64_t>();
        ds.width = meta.at("width").get<std::int64_t>();
        ds.channel_mean = meta.at("channel_mean").get<std::vector<double>>();
        ds.channel_std = meta.at("channel_std").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError("bad meta.json in " + dir.string() + ": " + e.what());
    }
    const auto count = meta.at("count").get<std::int64_t>();
    if (count < 0 || ds.channels < 1 || ds.height < 1 || ds.width < 1) {
        throw DataError("bad meta.json in " + dir.string() + ": degenerate dimensions");
    }

    const std::string bytes = read_binary_file(dir / "data.bin");
    const std::int64_t record = ds.sample_values() + 1;
    if (std::int64_t(bytes.size()) != count * record) {
        throw DataError("corrupt dataset " + dir.string() + ": expected " +
                        std::to_string(count * record) + " bytes (" + std::to_string(count) +
                        " records of " + std::to_string(record) + "), found " +
                        std::to_string(bytes.size()));
    }
    ds.pixels.resize(std::size_t(count * ds.sample_values()));
    ds.labels.resize(std::size_t(count));
    for (std::int64_t i = 0; i < count; ++i) {
        std::memcpy(ds.pixels.data() + i * ds.sample_values(), bytes.data() + i * record,
                    std::size_t(ds.sample_values()));
        const std::uint8_t label = std::uint8_t(bytes[std::size_t(i * record + record - 1)]);
        if (label >= ds.class_names.size()) {
            throw DataError("corrupt dataset " + dir.string() + ": label " +
                            std::to_string(label) + " at record " + std::to_string(i) +
                            " exceeds " + std::to_string(ds.class_names.size()) + " classes");
        }
        ds.labels[std::size_t(i)] = label;
    }
    ds.validate();
    return ds;
}

void save_network(const Tln& net, const fs::path& file) {
    Writer w;
    w.u8(std::uint8_t(kMagic[0]));
    w.u8(std::uint8_t(kMagic[1]));
    w.u8(std::uint8_t(kMagic[2]));
    w.u8(std::uint8_t(kMagic[3]));
    w.u32(kVersion);
    w.str(net.meta.source_id);
    w.i64(net.meta.class_count);
    w.str(net.meta.unit_granularity);
    w.u32(std::uint32_t(net.meta.input_shape.size()));
    for (auto d : net.meta.input_shape) w.i64(d);
    w.u8(net.retains_source_classifier ? 1 : 0);
    w.u32(std::uint32_t(net.units.size()));
    for (const auto& u : net.units) {
        w.str(u.name);
        w.u8(u.pretrained ? 1 : 0);
        w.u32(std::uint32_t(u.layers.size()));
        for (const auto& l : u.layers) write_layer(w, l);
    }
    w.u32(std::uint32_t(net.psi.size()));
    for (const auto& l : net.psi) write_layer(w, l);
    write_binary_file(file, w.bytes());
}

Tln load_network(const fs::path& file) {
    Reader r(read_binary_file(file), file.string());
    char magic[4];
    for (auto& c : magic) c = char(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError(file.string() + ": not a TLN1 network archive");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw DataError(file.string() + ": unsupported archive version " +
                        std::to_string(version));
    }
    Tln net;
    net.meta.source_id = r.str();
    net.meta.class_count = r.i64();
    net.meta.unit_granularity = r.str();
    const std::uint32_t nd = r.u32();
    for (std::uint32_t i = 0; i < nd; ++i) net.meta.input_shape.push_back(r.i64());
    net.retains_source_classifier = r.u8() != 0;
    const std::uint32_t nunits = r.u32();
    for (std::uint32_t i = 0; i < nunits; ++i) {
        Unit u;
        u.name = r.str();
        u.pretrained = r.u8() != 0;
        const std::uint32_t nlayers = r.u32();
        for (std::uint32_t j = 0; j < nlayers; ++j) u.layers.push_back(read_layer(r));
        net.units.push_back(std::move(u));
    }
    const std::uint32_t npsi = r.u32();
    for (std::uint32_t j = 0; j < npsi; ++j) net.psi.push_back(read_layer(r));
    r.expect_end();
    net.validate();
    return net;
}

void save_pretrained(const PretrainedNetwork& net, const fs::path& file) {
    net.validate();
    Tln as_tln;
    as_tln.units = net.units;
    as_tln.meta = net.meta;
    as_tln.retains_source_classifier = true;
    save_network(as_tln, file);
}

PretrainedNetwork load_pretrained(const fs::path& file) {
    Tln net = load_network(file);
    if (!net.psi.empty()) {
        throw DataError(file.string() + ": archive holds a fine-tuned network, not a source");
    }
    PretrainedNetwork chi;
    chi.units = std::move(net.units);
    chi.meta = std::move(net.meta);
    chi.validate();
    return chi;
}

std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

void write_text_file(const fs::path& file, const std::string& text) {
    write_binary_file(file, text);
}

std::string read_text_file(const fs::path& file) { return read_binary_file(file); }

json make_manifest(const std::string& command, const json& config) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["config_hash"] = sha256_hex(canonical_json(config));
    m["format"] = "tln-manifest-v1";
    return m;
}

void write_manifest(const fs::path& file, const std::string& command, const json& config) {
    write_text_file(file, canonical_json(make_manifest(command, config)));
}

json sweep_to_json(const SweepResult& result, const json& manifest) {
    json out;
    out["format"] = "tln-sweep-v1";
    out["manifest"] = manifest;
    json variants = json::array();
    for (const auto& v : result.variants) {
        json jv;
        jv["label"] = v.label;
        jv["nus"] = v.nus;
        json acc = json::array();
        json traces = json::array();
        for (const auto& per_nu : v.cells) {
            json arow = json::array();
            json trow = json::array();
            for (const auto& cell : per_nu) {
                arow.push_back(cell.accuracy);
                json trace = json::array();
                for (const auto& m : cell.trace) {
                    trace.push_back({{"iteration", m.iteration},
                                     {"epoch", m.epoch},
                                     {"lr", m.lr},
                                     {"loss", m.loss},
                                     {"train_acc", m.train_acc},
                                     {"test_acc", m.test_acc}});
                }
                trow.push_back(std::move(trace));
            }
            acc.push_back(std::move(arow));
            traces.push_back(std::move(trow));
        }
        jv["accuracy"] = std::move(acc);
        jv["traces"] = std::move(traces);
        variants.push_back(std::move(jv));
    }
    out["variants"] = std::move(variants);
    return out;
}

SweepResult sweep_from_json(const json& j) {
    if (!j.contains("format") || j["format"] != "tln-sweep-v1") {
        throw DataError("not a tln sweep result");
    }
    SweepResult result;
    try {
        for (const auto& jv : j.at("variants")) {
            SweepResult::VariantResult v;
            v.label = jv.at("label").get<std::string>();
            v.nus = jv.at("nus").get<std::vector<std::int64_t>>();
            const auto& acc = jv.at("accuracy");
            for (std::size_t ni = 0; ni < acc.size(); ++ni) {
                std::vector<SweepCell> cells;
                for (std::size_t r = 0; r < acc[ni].size(); ++r) {
                    SweepCell cell;
                    cell.accuracy = acc[ni][r].get<double>();
                    if (jv.contains("traces")) {
                        for (const auto& jm : jv["traces"][ni][r]) {
                            EpochMetrics m;
                            m.iteration = jm.at("iteration").get<std::int64_t>();
                            m.epoch = jm.at("epoch").get<std::int64_t>();
                            m.lr = jm.at("lr").get<double>();
                            m.loss = jm.at("loss").get<double>();
                            m.train_acc = jm.at("train_acc").get<double>();
                            m.test_acc = jm.at("test_acc").get<double>();
                            cell.trace.push_back(m);
                        }
                    }
                    cells.push_back(std::move(cell));
                }
                v.cells.push_back(std::move(cells));
            }
            if (v.cells.size() != v.nus.size()) throw DataError("sweep matrix has holes");
            result.variants.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed sweep result: ") + e.what());
    }
    return result;
}

std::string sweep_long_csv(const SweepResult& result) {
    std::string csv = "variant,nu,repeat,accuracy\n";
    for (const auto& v : result.variants) {
        for (std::size_t ni = 0; ni < v.nus.size(); ++ni) {
            for (std::size_t r = 0; r < v.cells[ni].size(); ++r) {
                char line[160];
                std::snprintf(line, sizeof(line), "%s,%lld,%lld,%.17g\n", v.label.c_str(),
                              static_cast<long long>(v.nus[ni]), static_cast<long long>(r),
                              v.cells[ni][r].accuracy);
                csv += line;
            }
        }
    }
    return csv;
}

}  // namespace tln
