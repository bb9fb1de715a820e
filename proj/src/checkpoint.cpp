#include "trackdiff/checkpoint.hpp"

#include "trackdiff/config_io.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace trackdiff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'D', 'C', 'K', 'P', 'T', '\0', '\0'};

template <typename T>
void put(std::string& out, const T& v)
{
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get()
    {
        T v;
        need(sizeof(T));
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n)
    {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void get_doubles(double* dst, std::size_t n)
    {
        need(n * sizeof(double));
        std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) throw Error("corrupt checkpoint: truncated");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed)
{
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string serialize_checkpoint(const TrackDiffuserModel& model)
{
    const Json meta{{"net", to_json(model.net)},
                    {"normalizer", to_json(model.normalizer)},
                    {"diffusion_steps", model.diffusion_steps},
                    {"schedule", to_string(model.schedule)},
                    {"parameter_count", model.params.scalar_count()}};
    const std::string meta_text = meta.dump();

    std::string out(kMagic, sizeof(kMagic));
    put(out, kCheckpointVersion);
    put(out, static_cast<std::uint64_t>(meta_text.size()));
    out += meta_text;
    put(out, static_cast<std::uint64_t>(model.params.size()));
    for (const NamedTensor& t : model.params.tensors()) {
        put(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put(out, static_cast<std::uint64_t>(t.value.rows()));
        put(out, static_cast<std::uint64_t>(t.value.cols()));
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = t.value;
        out.append(reinterpret_cast<const char*>(row_major.data()),
                   static_cast<std::size_t>(row_major.size()) * sizeof(double));
    }
    put(out, fnv1a64(out.data(), out.size()));
    return out;
}

TrackDiffuserModel deserialize_checkpoint(const std::string& bytes)
{
    if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw Error("corrupt checkpoint: bad magic");
    const std::size_t body = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + body, sizeof(stored));
    if (stored != fnv1a64(bytes.data(), body)) throw Error("corrupt checkpoint: checksum mismatch");

    Reader r(bytes);
    r.get_string(sizeof(kMagic));
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));

    TrackDiffuserModel model;
    try {
        const Json meta = Json::parse(r.get_string(r.get<std::uint64_t>()));
        model.net = net_config_from_json(meta.at("net"));
        model.normalizer = normalizer_from_json(meta.at("normalizer"));
        model.diffusion_steps = meta.at("diffusion_steps").get<int>();
        model.schedule = schedule_kind_from_string(meta.at("schedule").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corrupt checkpoint: ") + e.what());
    }

    const auto count = r.get<std::uint64_t>();
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.get_string(r.get<std::uint32_t>());
        const auto rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
        const auto cols = static_cast<Eigen::Index>(r.get<std::uint64_t>());
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(rows, cols);
        r.get_doubles(row_major.data(), static_cast<std::size_t>(rows * cols));
        t.value = row_major;
        tensors.push_back(std::move(t));
    }
    if (r.pos() != body) throw Error("corrupt checkpoint: trailing bytes");

    // The tensor table must match the layout implied by the echoed config.
    const auto layout = param_layout(model.net);
    if (layout.size() != tensors.size()) throw Error("corrupt checkpoint: tensor count does not match config");
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].name != tensors[i].name || layout[i].rows != tensors[i].value.rows()
            || layout[i].cols != tensors[i].value.cols())
            throw Error("corrupt checkpoint: tensor '" + tensors[i].name + "' does not match config");
    model.params = DenoiserParams(std::move(tensors));
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const TrackDiffuserModel& model)
{
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    write_text_file(tmp, serialize_checkpoint(model));
    std::filesystem::rename(tmp, path);
}

TrackDiffuserModel load_checkpoint(const std::filesystem::path& path)
{
    return deserialize_checkpoint(read_text_file(path));
}

std::string model_digest(const TrackDiffuserModel& model)
{
    const std::string bytes = serialize_checkpoint(model);
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes.data(), bytes.size());
    return ss.str();
}

} // namespace trackdiff
