#include "agat/dataset_store.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "agat/errors.hpp"
#include "agat/image_io.hpp"
#include "agat/serialize.hpp"

namespace agat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* shape_name(ObjectShape s) { return s == ObjectShape::kEllipse ? "ellipse" : "rectangle"; }

ObjectShape shape_from_name(const std::string& s) {
    if (s == "ellipse") return ObjectShape::kEllipse;
    if (s == "rectangle") return ObjectShape::kRectangle;
    throw std::runtime_error("unknown object shape: " + s);
}

json sample_record(const LabeledSample& s) {
    json j;
    j["id"] = s.image.id;
    j["domain"] = domain_name(s.image.domain);
    j["image"] = "images/" + s.image.id + ".ppm";
    j["labels"] = "labels/" + s.image.id + ".pgm";
    j["seed"] = s.sample_seed;
    j["achieved_fraction"] = s.achieved_fraction;
    j["placement_complete"] = s.placement_complete;
    json objs = json::array();
    for (const ObjectRecord& o : s.objects) {
        json oj;
        oj["box"] = {o.box.x0, o.box.y0, o.box.x1, o.box.y1};
        oj["shape"] = shape_name(o.shape);
        oj["fill"] = {o.fill[0], o.fill[1], o.fill[2]};
        objs.push_back(oj);
    }
    j["objects"] = objs;
    return j;
}

void write_sample_files(const std::string& dir, const LabeledSample& s) {
    write_ppm(dir + "/images/" + s.image.id + ".ppm", s.image.pixels);
    Tensor lab(1, s.labels.h, s.labels.w);
    for (size_t i = 0; i < s.labels.labels.size(); ++i) lab.v[i] = s.labels.labels[i] ? 1.0 : 0.0;
    write_pgm(dir + "/labels/" + s.image.id + ".pgm", lab);
}

LabeledSample read_sample(const std::string& dir, const json& j) {
    LabeledSample s;
    s.image.pixels = read_ppm(dir + "/" + j.at("image").get<std::string>());
    s.image.domain = domain_from_name(j.at("domain").get<std::string>());
    s.image.id = j.at("id").get<std::string>();
    const Tensor lab = read_pgm(dir + "/" + j.at("labels").get<std::string>());
    s.labels = SemanticMap(lab.h, lab.w);
    for (size_t i = 0; i < lab.v.size(); ++i) s.labels.labels[i] = lab.v[i] > 0.5 ? kObjectClass : kBackgroundClass;
    s.sample_seed = j.at("seed").get<std::uint64_t>();
    s.achieved_fraction = j.at("achieved_fraction").get<double>();
    s.placement_complete = j.at("placement_complete").get<bool>();
    for (const json& oj : j.at("objects")) {
        ObjectRecord o;
        const auto& b = oj.at("box");
        o.box = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
        o.shape = shape_from_name(oj.at("shape").get<std::string>());
        const auto& f = oj.at("fill");
        o.fill = {f[0].get<double>(), f[1].get<double>(), f[2].get<double>()};
        s.objects.push_back(o);
    }
    return s;
}

void write_manifest_and_spec(const std::string& dir, const std::vector<const DomainDataset*>& domains, const DatasetSpec& spec) {
    fs::create_directories(dir + "/images");
    fs::create_directories(dir + "/labels");
    std::ofstream manifest(dir + "/manifest.jsonl", std::ios::trunc);
    for (const DomainDataset* d : domains) {
        for (const LabeledSample& s : d->samples) {
            write_sample_files(dir, s);
            manifest << sample_record(s).dump() << "\n";
        }
    }
    manifest.close();

    Config cfg;
    spec.to_config(cfg);
    write_file(dir + "/spec.cfg", cfg.serialize());

    json balance;
    for (const DomainDataset* d : domains) {
        json rows = json::array();
        for (const ClassBalanceRow& row : class_balance_stats(*d)) {
            json r;
            r["class_id"] = row.class_id;
            r["name"] = row.name;
            r["percent"] = row.percent;
            rows.push_back(r);
        }
        balance[domain_name(d->domain)] = rows;
    }
    write_file(dir + "/class_balance.json", balance.dump(2) + "\n");
}

}  // namespace

void save_dataset(const std::string& dir, const ToyDatasets& data, const DatasetSpec& spec) {
    write_manifest_and_spec(dir, {&data.source, &data.target, &data.intermediate}, spec);
}

void save_domain_dataset(const std::string& dir, const DomainDataset& data, const DatasetSpec& spec) {
    write_manifest_and_spec(dir, {&data}, spec);
}

ToyDatasets load_dataset(const std::string& dir, DatasetSpec* spec_out) {
    if (!dataset_dir_valid(dir)) throw DependencyError("not a dataset directory (missing manifest.jsonl): " + dir + "; run synth-data first");
    if (spec_out) {
        const Config cfg = Config::parse_file(dir + "/spec.cfg");
        *spec_out = DatasetSpec::from_config(cfg);
    }
    ToyDatasets out;
    out.source.domain = Domain::kSource;
    out.target.domain = Domain::kTarget;
    out.intermediate.domain = Domain::kIntermediate;
    std::ifstream manifest(dir + "/manifest.jsonl");
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        LabeledSample s = read_sample(dir, json::parse(line));
        switch (s.image.domain) {
            case Domain::kSource: out.source.samples.push_back(std::move(s)); break;
            case Domain::kTarget: out.target.samples.push_back(std::move(s)); break;
            case Domain::kIntermediate: out.intermediate.samples.push_back(std::move(s)); break;
        }
    }
    return out;
}

DomainDataset load_domain_dataset(const std::string& dir, Domain domain, DatasetSpec* spec_out) {
    ToyDatasets all = load_dataset(dir, spec_out);
    switch (domain) {
        case Domain::kSource: return std::move(all.source);
        case Domain::kTarget: return std::move(all.target);
        case Domain::kIntermediate: return std::move(all.intermediate);
    }
    throw UsageError("bad domain");
}

bool dataset_dir_valid(const std::string& dir) { return fs::exists(dir + "/manifest.jsonl") && fs::exists(dir + "/spec.cfg"); }

std::string dataset_manifest_hash(const std::string& dir) { return hash_file_hex(dir + "/manifest.jsonl"); }

}  // namespace agat
