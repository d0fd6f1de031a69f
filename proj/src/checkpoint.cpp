#include "iterseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace iterseg {
namespace {

class Writer {
  public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        buffer_.insert(buffer_.end(), p, p + n);
    }
    template <typename U>
    void little_endian(U value) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buffer_.push_back(static_cast<unsigned char>(value >> (8 * i)));
    }
    void u16(std::uint16_t v) { little_endian(v); }
    void u32(std::uint32_t v) { little_endian(v); }
    void f32(float v) { little_endian(std::bit_cast<std::uint32_t>(v)); }
    const std::vector<unsigned char>& buffer() const { return buffer_; }

  private:
    std::vector<unsigned char> buffer_;
};

class Reader {
  public:
    Reader(std::vector<unsigned char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    void need(std::size_t n, const std::string& what) const {
        if (data_.size() - pos_ < n) {
            throw CheckpointError(path_ + ": truncated while reading " + what + " (offset " + std::to_string(pos_) +
                                  ", need " + std::to_string(n) + " bytes, " + std::to_string(data_.size() - pos_) +
                                  " left)");
        }
    }
    template <typename U>
    U little_endian(const std::string& what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(data_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    std::uint16_t u16(const std::string& what) { return little_endian<std::uint16_t>(what); }
    std::uint32_t u32(const std::string& what) { return little_endian<std::uint32_t>(what); }
    float f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }
    std::string text(std::size_t n, const std::string& what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }
    const std::string& path() const { return path_; }

  private:
    std::vector<unsigned char> data_;
    std::size_t pos_ = 0;
    std::string path_;
};

}  // namespace

template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params.parameters()) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (T v : p.value.data()) w.f32(static_cast<float>(v));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path.string());

    const std::string magic = r.text(4, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
        throw CheckpointError(path.string() + ": bad magic: expected 'ISEG', found '" + magic + "'");
    }
    const auto version = r.u16("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(path.string() + ": unsupported version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.u32("entry count");
    std::vector<CheckpointEntry> entries;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::string where = "entry " + std::to_string(e);
        CheckpointEntry entry;
        const auto name_len = r.u32(where + " name length");
        entry.name = r.text(name_len, where + " name");
        const auto rank = r.u32(entry.name + " rank");
        if (rank == 0 || rank > 8) {
            throw CheckpointError(path.string() + ": entry '" + entry.name + "' has invalid rank " +
                                  std::to_string(rank));
        }
        std::size_t total = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const auto d = r.u32(entry.name + " dims");
            if (d == 0) throw CheckpointError(path.string() + ": entry '" + entry.name + "' has a zero dimension");
            entry.shape.push_back(d);
            total *= d;
        }
        r.need(total * 4, entry.name + " values");
        entry.values.resize(total);
        for (auto& v : entry.values) v = r.f32(entry.name + " values");
        entries.push_back(std::move(entry));
    }
    if (!r.at_end()) {
        throw CheckpointError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes after " +
                              std::to_string(count) + " entries");
    }
    return entries;
}

template <typename T>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path, const NetworkConfig& config) {
    auto entries = read_checkpoint(path);
    const auto specs = layer_specs(config);
    const char* suffix[2] = {".weight", ".bias"};
    std::vector<Parameter<T>> params;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const Shape expected[2] = {specs[i].weight_shape(), Shape{specs[i].out_channels}};
        for (int k = 0; k < 2; ++k) {
            const std::string name = specs[i].name + suffix[k];
            const std::size_t at = 2 * i + k;
            if (at >= entries.size()) {
                throw CheckpointError(path.string() + ": checkpoint ends before layer '" + name + "' required by config");
            }
            auto& e = entries[at];
            if (e.name != name) {
                throw CheckpointError(path.string() + ": layer mismatch at entry " + std::to_string(at) +
                                      ": config expects '" + name + "', checkpoint has '" + e.name + "'");
            }
            if (e.shape != expected[k]) {
                throw CheckpointError(path.string() + ": shape mismatch at layer '" + name + "': checkpoint " +
                                      shape_string(e.shape) + ", config expects " + shape_string(expected[k]));
            }
            params.push_back({name, Tensor<T>(e.shape, std::vector<T>(e.values.begin(), e.values.end())), {}});
        }
    }
    if (entries.size() != params.size()) {
        throw CheckpointError(path.string() + ": checkpoint has extra layer '" + entries[params.size()].name +
                              "' not in config");
    }
    return ParameterSet<T>(config, std::move(params));
}

template void save_checkpoint(const ParameterSet<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParameterSet<double>&, const std::filesystem::path&);
template ParameterSet<float> load_checkpoint(const std::filesystem::path&, const NetworkConfig&);
template ParameterSet<double> load_checkpoint(const std::filesystem::path&, const NetworkConfig&);

}  // namespace iterseg
