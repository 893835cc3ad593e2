#include "dadapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace dadapt::models {

void ParamTable::put(std::string name, num::Tensor value) {
    for (auto& [n, v] : entries_) {
        if (n == name) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamTable::contains(const std::string& name) const {
    for (const auto& [n, v] : entries_) {
        if (n == name) return true;
    }
    return false;
}

const num::Tensor& ParamTable::get(const std::string& name) const {
    for (const auto& [n, v] : entries_) {
        if (n == name) return v;
    }
    throw CheckpointError("checkpoint entry missing: " + name);
}

bool ParamTable::has_prefix(const std::string& prefix) const {
    for (const auto& [n, v] : entries_) {
        if (n.compare(0, prefix.size(), prefix) == 0) return true;
    }
    return false;
}

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw CheckpointError("checkpoint truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamTable& table) {
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, std::uint32_t(table.entries().size()));
    for (const auto& [name, t] : table.entries()) {
        put_le<std::uint32_t>(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        put_le<std::uint32_t>(out, std::uint32_t(t.rank()));
        for (auto e : t.shape()) put_le<std::uint64_t>(out, std::uint64_t(e));
        for (num::Real v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(double(v)));
    }
    if (!out) throw CheckpointError("checkpoint write failed");
}

ParamTable read_checkpoint(std::istream& in) {
    char magic[sizeof kCheckpointMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw CheckpointError("not a checkpoint (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto count = get_le<std::uint32_t>(in);
    ParamTable table;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get_le<std::uint32_t>(in);
        if (len > (1u << 16)) throw CheckpointError("checkpoint entry name too long");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw CheckpointError("checkpoint truncated");
        const auto rank = get_le<std::uint32_t>(in);
        if (rank > 8) throw CheckpointError("checkpoint entry rank too large: " + name);
        num::Shape shape(rank);
        for (auto& e : shape) e = std::size_t(get_le<std::uint64_t>(in));
        const std::size_t n = num::shape_numel(shape);
        if (n > (std::size_t(1) << 28)) throw CheckpointError("checkpoint entry too large: " + name);
        std::vector<num::Real> data(n);
        for (auto& v : data) v = num::Real(std::bit_cast<double>(get_le<std::uint64_t>(in)));
        table.put(std::move(name), num::Tensor(std::move(shape), std::move(data)));
    }
    return table;
}

void save_checkpoint(const std::filesystem::path& path, const ParamTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    write_checkpoint(out, table);
}

ParamTable load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace dadapt::models
