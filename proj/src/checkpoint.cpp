#include "eslr/checkpoint.hpp"

#include <fstream>
#include <string_view>

#include "eslr/binary_io.hpp"
#include "eslr/error.hpp"

namespace eslr {

namespace {
constexpr std::string_view kMagic = "ESLR-CKPT1\n";
constexpr std::uint64_t kMaxName = 4096;
constexpr std::uint64_t kMaxRank = 8;
}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint `" + path + "`");
    const nlohmann::json header{
        {"config", config_to_json(ckpt.config)}, {"iteration", ckpt.iteration}, {"seed", ckpt.seed}};
    const std::string text = header.dump(2);
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    binio::put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    binio::put<std::uint64_t>(out, ckpt.params.size());
    for (const auto& e : ckpt.params.entries()) {
        binio::put<std::uint64_t>(out, e.name.size());
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        binio::put<std::uint64_t>(out, e.value.shape().size());
        for (std::size_t d : e.value.shape()) binio::put<std::uint64_t>(out, d);
        binio::put_f64s(out, e.value.data());
    }
    if (!out) throw ValidationError("failed writing checkpoint `" + path + "`");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint `" + path + "`");
    try {
        std::string magic(kMagic.size(), '\0');
        in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
        if (!in || magic != kMagic) throw ValidationError("`" + path + "` is not an ESLR-CKPT1 checkpoint");

        const auto header_len = binio::get<std::uint64_t>(in, "header length");
        if (header_len > (1u << 24)) throw ValidationError("checkpoint header is implausibly large");
        std::string text(header_len, '\0');
        in.read(text.data(), static_cast<std::streamsize>(header_len));
        if (!in) throw ValidationError("checkpoint header is truncated");
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("checkpoint header is not valid JSON: ") + e.what());
        }

        Checkpoint ck;
        if (!header.contains("config") || !header.contains("iteration") || !header.contains("seed")) {
            throw ValidationError("checkpoint header lacks config, iteration or seed");
        }
        ck.config = config_from_json(header.at("config"));
        ck.iteration = header.at("iteration").get<std::size_t>();
        ck.seed = header.at("seed").get<std::uint64_t>();

        const auto count = binio::get<std::uint64_t>(in, "parameter count");
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto name_len = binio::get<std::uint64_t>(in, "name length");
            if (name_len == 0 || name_len > kMaxName) throw ValidationError("bad parameter name length");
            std::string name(name_len, '\0');
            in.read(name.data(), static_cast<std::streamsize>(name_len));
            if (!in) throw ValidationError("parameter name is truncated");
            const auto rank = binio::get<std::uint64_t>(in, "rank");
            if (rank > kMaxRank) throw ValidationError("parameter `" + name + "` has implausible rank");
            Shape shape;
            std::size_t total = 1;
            for (std::uint64_t r = 0; r < rank; ++r) {
                shape.push_back(binio::get<std::uint64_t>(in, "dimension"));
                total *= shape.back();
            }
            if (total > (std::size_t{1} << 28)) throw ValidationError("parameter `" + name + "` is implausibly large");
            std::vector<double> data = binio::get_f64s(in, total, "parameter `" + name + "`");
            ck.params.add(name, Tensor(shape, std::move(data)));
        }
        if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes after checkpoint");
        check_model_params(ck.params, ck.config.model);
        return ck;
    } catch (const std::runtime_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError("checkpoint `" + path + "`: " + e.what());
    }
}

}  // namespace eslr
