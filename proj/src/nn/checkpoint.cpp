#include "headswap/nn/checkpoint.hpp"

#include "headswap/binary_io.hpp"

namespace headswap::nn {

namespace {
constexpr char kMagic[4] = {'H', 'S', 'C', 'K'};
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    nlohmann::json manifest;
    manifest["meta"] = ckpt.meta;
    manifest["params"] = nlohmann::json::array();
    for (const Parameter* p : ckpt.params.all())
        manifest["params"].push_back({{"name", p->name}, {"shape", p->value.shape()}, {"trainable", p->trainable}});
    const std::string text = manifest.dump();

    ByteWriter out;
    out.raw(kMagic, 4);
    out.u32(static_cast<std::uint32_t>(text.size()));
    out.raw(text.data(), text.size());
    for (const Parameter* p : ckpt.params.all())
        out.f64s(p->value.data(), p->value.size());
    return out.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    ByteReader in(bytes);
    char magic[4];
    in.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kMagic))
        throw std::runtime_error("corrupt header: not a checkpoint");
    const std::uint32_t len = in.u32();
    if (len > in.remaining())
        throw std::runtime_error("corrupt header: manifest length exceeds file size");
    std::string text(len, '\0');
    in.raw(text.data(), len);

    nlohmann::json manifest;
    try
    {
        manifest = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error(std::string("corrupt header: ") + e.what());
    }

    Checkpoint ckpt;
    try
    {
        ckpt.meta = manifest.at("meta");
        for (const auto& entry : manifest.at("params"))
        {
            Tensor value(entry.at("shape").get<Shape>());
            in.f64s(value.data(), value.size());
            ckpt.params.add(entry.at("name").get<std::string>(), std::move(value), entry.at("trainable").get<bool>());
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error(std::string("corrupt header: ") + e.what());
    }
    catch (const std::invalid_argument& e)
    {
        throw std::runtime_error(std::string("corrupt header: ") + e.what());
    }
    if (in.remaining() != 0)
        throw std::runtime_error("corrupt header: trailing bytes after parameter data");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

} // namespace headswap::nn
