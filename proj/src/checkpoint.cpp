#include "checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace smac {

namespace {

constexpr const char* kMagic = "smac-checkpoint v1";

std::string shape_csv(const std::vector<int>& shape) {
    std::string s;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s;
}

struct Entry {
    std::string name;
    std::string shape;
    int64_t offset = 0;
    int64_t count = 0;
};

} // namespace

void save_checkpoint(const std::string& stem, const ParamRegistry& registry) {
    std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
    std::ofstream man(stem + ".manifest", std::ios::trunc);
    if (!bin || !man) throw DataError("cannot write checkpoint " + stem);

    std::vector<Entry> entries;
    int64_t offset = 0;
    auto emit = [&](const std::string& name, const Tensor& t) {
        bin.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
        entries.push_back({name, shape_csv(t.shape()), offset, t.numel()});
        offset += t.numel() * static_cast<int64_t>(sizeof(double));
    };
    for (const Parameter* p : registry.params) emit(p->name, p->value);
    for (const auto& [name, t] : registry.buffers) emit(name, *t);
    if (!bin) throw DataError("write failed for " + stem + ".bin");

    man << kMagic << "\n" << "entries " << entries.size() << "\n";
    for (const Entry& e : entries)
        man << e.name << " " << e.shape << " " << e.offset << " " << e.count << "\n";
    if (!man) throw DataError("write failed for " + stem + ".manifest");
}

void load_checkpoint(const std::string& stem, ParamRegistry& registry) {
    std::ifstream man(stem + ".manifest");
    if (!man) throw DataError("cannot open checkpoint manifest " + stem + ".manifest");
    std::string line;
    if (!std::getline(man, line) || line != kMagic)
        throw DataError(stem + ".manifest: bad magic line");
    size_t n = 0;
    {
        std::string word;
        if (!(man >> word >> n) || word != "entries")
            throw DataError(stem + ".manifest: missing entry count");
    }
    std::map<std::string, Entry> entries;
    for (size_t i = 0; i < n; ++i) {
        Entry e;
        if (!(man >> e.name >> e.shape >> e.offset >> e.count))
            throw DataError(stem + ".manifest: truncated entry list");
        entries[e.name] = e;
    }

    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw DataError("cannot open checkpoint data " + stem + ".bin");

    auto restore = [&](const std::string& name, Tensor& t) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw DataError("checkpoint " + stem + " has no entry for " + name);
        const Entry& e = it->second;
        if (e.shape != shape_csv(t.shape()) || e.count != t.numel())
            throw DataError("checkpoint entry " + name + " has shape " + e.shape +
                            ", model expects " + shape_csv(t.shape()));
        bin.seekg(e.offset);
        bin.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
        if (!bin) throw DataError("checkpoint " + stem + ": short read for " + name);
    };
    for (Parameter* p : registry.params) restore(p->name, p->value);
    for (auto& [name, t] : registry.buffers) restore(name, *t);
}

} // namespace smac
