#include "sfnn/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "sfnn/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; add byte swapping for this platform");

namespace sfnn {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw DataError(path + ": truncated checkpoint");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, std::uint32_t(s.size()));
    out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    const auto len = read_pod<std::uint32_t>(in, path);
    if (len > (1u << 20)) throw DataError(path + ": implausible name length");
    std::string s(len, '\0');
    if (!in.read(s.data(), len)) throw DataError(path + ": truncated checkpoint");
    return s;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    write_string(out, name);
    write_pod<std::uint8_t>(out, sizeof(double));
    write_pod<std::uint32_t>(out, std::uint32_t(t.dims().size()));
    for (std::size_t d : t.dims()) write_pod<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor(std::istream& in, const std::string& path) {
    std::string name = read_string(in, path);
    const auto width = read_pod<std::uint8_t>(in, path);
    if (width != sizeof(double))
        throw DataError(path + ": unsupported scalar width " + std::to_string(width));
    const auto rank = read_pod<std::uint32_t>(in, path);
    if (rank > 8) throw DataError(path + ": implausible tensor rank");
    Shape dims(rank);
    for (std::uint32_t i = 0; i < rank; ++i) dims[i] = read_pod<std::uint64_t>(in, path);
    Tensor t(dims);
    if (!in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(double))))
        throw DataError(path + ": truncated tensor data for " + name);
    return {std::move(name), std::move(t)};
}

} // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint64_t>(out, data.fingerprint);
    write_pod<std::uint64_t>(out, data.epoch);
    write_pod<std::uint64_t>(out, data.master_seed);
    write_pod<double>(out, data.learning_rate);
    write_pod<double>(out, data.momentum);
    write_pod<std::uint32_t>(out, std::uint32_t(data.params.size()));
    for (const auto& [name, tensor] : data.params) write_tensor(out, name, tensor);
    write_pod<std::uint32_t>(out, std::uint32_t(data.velocities.size()));
    for (const auto& [name, tensor] : data.velocities) write_tensor(out, name, tensor);
    if (!out) throw DataError(path + ": write failed");
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        throw DataError(path + ": not a checkpoint (bad magic)");
    CheckpointData data;
    data.version = read_pod<std::uint32_t>(in, path);
    if (data.version != kVersion)
        throw DataError(path + ": unsupported checkpoint version " +
                        std::to_string(data.version));
    data.fingerprint = read_pod<std::uint64_t>(in, path);
    data.epoch = read_pod<std::uint64_t>(in, path);
    data.master_seed = read_pod<std::uint64_t>(in, path);
    data.learning_rate = read_pod<double>(in, path);
    data.momentum = read_pod<double>(in, path);
    const auto np = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < np; ++i) data.params.push_back(read_tensor(in, path));
    const auto nv = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < nv; ++i) data.velocities.push_back(read_tensor(in, path));
    return data;
}

CheckpointData snapshot(const Network& net, const SgdState& state, std::uint64_t epoch,
                        std::uint64_t master_seed) {
    CheckpointData data;
    data.fingerprint = net.fingerprint();
    data.epoch = epoch;
    data.master_seed = master_seed;
    data.learning_rate = state.learning_rate;
    data.momentum = state.momentum;
    const auto& entries = net.param_entries();
    const auto tensors = net.param_tensors();
    for (std::size_t i = 0; i < entries.size(); ++i)
        data.params.emplace_back(entries[i].name, *tensors[i]);
    if (!state.velocities.empty()) {
        if (state.velocities.size() != entries.size())
            throw DimensionError("snapshot: velocity registry size mismatch");
        for (std::size_t i = 0; i < entries.size(); ++i)
            data.velocities.emplace_back(entries[i].name, state.velocities[i]);
    }
    return data;
}

void restore(const CheckpointData& data, Network& net, SgdState& state) {
    if (data.fingerprint != net.fingerprint())
        throw DataError("checkpoint topology fingerprint mismatch: file has " +
                        std::to_string(data.fingerprint) + ", network is " +
                        std::to_string(net.fingerprint()));
    const auto& entries = net.param_entries();
    if (data.params.size() != entries.size())
        throw DataError("checkpoint has " + std::to_string(data.params.size()) +
                        " parameters, network has " + std::to_string(entries.size()));
    auto tensors = net.param_tensors();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, tensor] = data.params[i];
        if (name != entries[i].name)
            throw DataError("checkpoint parameter '" + name + "' where '" + entries[i].name +
                            "' was expected");
        if (tensor.dims() != tensors[i]->dims())
            throw DataError("checkpoint parameter '" + name + "' has shape " +
                            shape_to_string(tensor.dims()) + ", want " +
                            shape_to_string(tensors[i]->dims()));
        *tensors[i] = tensor;
    }
    state.learning_rate = data.learning_rate;
    state.momentum = data.momentum;
    state.velocities.clear();
    if (!data.velocities.empty()) {
        if (data.velocities.size() != entries.size())
            throw DataError("checkpoint velocity count mismatch");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& [name, tensor] = data.velocities[i];
            if (name != entries[i].name || tensor.dims() != tensors[i]->dims())
                throw DataError("checkpoint velocity registry mismatch at '" + name + "'");
            state.velocities.push_back(tensor);
        }
    }
}

} // namespace sfnn
