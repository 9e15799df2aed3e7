#include "mse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace mse {

namespace {

constexpr const char* kMagic = "matrixse-checkpoint";
constexpr int kVersion = 1;

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const NamedArray& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out << kMagic << " v" << ck.version << "\n";
    out << "step " << ck.step << "\n";
    out << "config " << ck.config.items().size() << "\n";
    out << ck.config.serialize();
    out << "arrays " << ck.arrays.size() << "\n";
    int64_t offset = 0;
    for (const NamedArray& a : ck.arrays) {
        const int64_t bytes = (int64_t)a.data.size() * 4;
        out << a.name << " " << a.shape.size();
        for (int d : a.shape) out << " " << d;
        out << " " << offset << " " << bytes << "\n";
        if ((int64_t)a.data.size() != numel(a.shape))
            throw DataError("checkpoint array '" + a.name + "' shape/data mismatch");
        offset += bytes;
    }
    out << "data\n";
    for (const NamedArray& a : ck.arrays)
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  (std::streamsize)a.data.size() * 4);
    if (!out) throw DataError("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");

    Checkpoint ck;
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint truncated: missing header");
    {
        std::istringstream h(line);
        std::string magic, ver;
        h >> magic >> ver;
        if (magic != kMagic)
            throw DataError("not a checkpoint file (bad magic '" + magic + "')");
        if (ver != "v" + std::to_string(kVersion))
            throw DataError("checkpoint version mismatch: found '" + ver + "', expected v" +
                            std::to_string(kVersion));
    }
    if (!std::getline(in, line) || line.rfind("step ", 0) != 0)
        throw DataError("checkpoint truncated: missing step");
    ck.step = std::stoll(line.substr(5));

    if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
        throw DataError("checkpoint truncated: missing config");
    const int n_config = std::stoi(line.substr(7));
    std::string config_text;
    for (int i = 0; i < n_config; ++i) {
        if (!std::getline(in, line)) throw DataError("checkpoint truncated: config lines");
        config_text += line + "\n";
    }
    ck.config = KvConfig::parse_string(config_text);

    if (!std::getline(in, line) || line.rfind("arrays ", 0) != 0)
        throw DataError("checkpoint truncated: missing manifest");
    const int n_arrays = std::stoi(line.substr(7));

    struct Entry {
        std::string name;
        Shape shape;
        int64_t offset, bytes;
    };
    std::vector<Entry> manifest;
    int64_t expected_offset = 0;
    for (int i = 0; i < n_arrays; ++i) {
        if (!std::getline(in, line)) throw DataError("checkpoint truncated: manifest row");
        std::istringstream row(line);
        Entry e;
        int ndim = 0;
        if (!(row >> e.name >> ndim)) throw DataError("checkpoint manifest row malformed");
        e.shape.resize(ndim);
        for (int d = 0; d < ndim; ++d)
            if (!(row >> e.shape[d])) throw DataError("checkpoint manifest row malformed");
        if (!(row >> e.offset >> e.bytes))
            throw DataError("checkpoint manifest row malformed");
        if (e.bytes != numel(e.shape) * 4)
            throw DataError("checkpoint manifest mismatch: array '" + e.name + "' shape " +
                            shape_str(e.shape) + " does not cover " +
                            std::to_string(e.bytes) + " bytes");
        if (e.offset != expected_offset)
            throw DataError("checkpoint manifest mismatch: array '" + e.name +
                            "' offset " + std::to_string(e.offset) + ", expected " +
                            std::to_string(expected_offset));
        expected_offset += e.bytes;
        manifest.push_back(std::move(e));
    }
    if (!std::getline(in, line) || line != "data")
        throw DataError("checkpoint truncated: missing data marker");

    for (const Entry& e : manifest) {
        NamedArray a;
        a.name = e.name;
        a.shape = e.shape;
        a.data.resize(e.bytes / 4);
        in.read(reinterpret_cast<char*>(a.data.data()), e.bytes);
        if (in.gcount() != e.bytes)
            throw DataError("checkpoint truncated: array '" + e.name + "' expected " +
                            std::to_string(e.bytes) + " bytes, got " +
                            std::to_string(in.gcount()));
        ck.arrays.push_back(std::move(a));
    }
    return ck;
}

Checkpoint snapshot_state(const KvConfig& config, ModelParams<float>& params,
                          RAdam<float>& opt, int64_t step) {
    Checkpoint ck;
    ck.config = config;
    ck.step = step;
    auto all = params.all();
    for (Param<float>* p : all) ck.arrays.push_back({p->name, p->shape, p->value});
    for (size_t i = 0; i < all.size(); ++i)
        ck.arrays.push_back({"opt.m1." + all[i]->name, all[i]->shape, opt.first_moment(i)});
    for (size_t i = 0; i < all.size(); ++i)
        ck.arrays.push_back({"opt.m2." + all[i]->name, all[i]->shape, opt.second_moment(i)});
    ck.config.set("opt_step", std::to_string(opt.step_count()));
    return ck;
}

void restore_state(const Checkpoint& ck, ModelParams<float>& params, RAdam<float>& opt) {
    auto all = params.all();
    std::vector<int64_t> sizes;
    for (Param<float>* p : all) sizes.push_back((int64_t)p->value.size());
    if (opt.buffer_count() != all.size()) opt.bind(sizes);

    auto pull = [&](const std::string& name, const Shape& shape, std::vector<float>& dst) {
        const NamedArray* a = ck.find(name);
        if (!a) throw DataError("checkpoint missing array '" + name + "'");
        if (a->shape != shape)
            throw DataError("checkpoint array '" + name + "' has shape " +
                            shape_str(a->shape) + ", expected " + shape_str(shape));
        dst = a->data;
    };
    for (size_t i = 0; i < all.size(); ++i) {
        pull(all[i]->name, all[i]->shape, all[i]->value);
        pull("opt.m1." + all[i]->name, all[i]->shape, opt.first_moment(i));
        pull("opt.m2." + all[i]->name, all[i]->shape, opt.second_moment(i));
    }
    opt.set_step_count(config_int(ck.config, "opt_step", ck.step));
}

}  // namespace mse
