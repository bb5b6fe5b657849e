#pragma once

// Object/background decomposition of a vision-transformer patch grid.
//
// A binary pixel mask (0 = background, 255 = object) is resized to the
// extractor's square input resolution by nearest neighbour, then cut into
// patch_size x patch_size patches. A patch with at least one object pixel is
// an object patch; every other patch is background. The two sets tile the
// grid exactly. Feature extraction for the object view zeroes attention to
// background patches and vice versa; AttentionMaskSpec is that instruction.

#include <cctype>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ddig/error.hpp"

namespace ddig {

inline constexpr std::size_t default_image_size = 224;
inline constexpr std::size_t default_patch_size = 16;

struct PixelMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    static PixelMask filled(std::size_t width, std::size_t height, std::uint8_t value) {
        return {width, height, std::vector<std::uint8_t>(width * height, value)};
    }

    std::uint8_t at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
    void set(std::size_t x, std::size_t y, std::uint8_t v) { data[y * width + x] = v; }

    /// Throws MalformedMask unless dimensions are positive, the buffer matches
    /// them, and every value is 0 or 255.
    void validate() const {
        if (width == 0 || height == 0) throw Error(ErrorKind::MalformedMask, "mask has a zero dimension");
        if (data.size() != width * height) {
            throw Error(ErrorKind::MalformedMask, "mask buffer holds " + std::to_string(data.size()) +
                                                      " bytes, expected " + std::to_string(width * height));
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data[i] != 0 && data[i] != 255) {
                throw Error(ErrorKind::MalformedMask, "mask value " + std::to_string(data[i]) + " at pixel (" +
                                                          std::to_string(i % width) + ", " +
                                                          std::to_string(i / width) + ") is not 0 or 255");
            }
        }
    }
};

struct Patch {
    std::size_t row = 0;
    std::size_t col = 0;

    auto operator<=>(const Patch&) const = default;
};

enum class MaskedView { Object, Background };

constexpr std::string_view to_string(MaskedView v) {
    return v == MaskedView::Object ? "object" : "background";
}

inline std::optional<MaskedView> parse_masked_view(std::string_view s) {
    if (s == "object") return MaskedView::Object;
    if (s == "background") return MaskedView::Background;
    return std::nullopt;
}

/// Object/background assignment of a square patch grid.
class PatchPartition {
  public:
    PatchPartition(std::size_t image_size, std::size_t patch_size, std::vector<std::uint8_t> object_flags)
        : image_size_(image_size), patch_size_(patch_size), grid_(image_size / patch_size),
          object_(std::move(object_flags)) {}

    std::size_t grid_w() const { return grid_; }
    std::size_t grid_h() const { return grid_; }
    std::size_t image_size() const { return image_size_; }
    std::size_t patch_size() const { return patch_size_; }
    std::size_t patch_count() const { return grid_ * grid_; }

    bool is_object(std::size_t row, std::size_t col) const { return object_[row * grid_ + col] != 0; }

    /// Row-major sorted.
    std::vector<Patch> object_patches() const { return collect(true); }
    std::vector<Patch> background_patches() const { return collect(false); }

    std::size_t object_count() const {
        std::size_t n = 0;
        for (auto f : object_) n += f != 0;
        return n;
    }

    bool operator==(const PatchPartition&) const = default;

  private:
    std::vector<Patch> collect(bool object) const {
        std::vector<Patch> out;
        for (std::size_t r = 0; r < grid_; ++r) {
            for (std::size_t c = 0; c < grid_; ++c) {
                if (is_object(r, c) == object) out.push_back({r, c});
            }
        }
        return out;
    }

    std::size_t image_size_;
    std::size_t patch_size_;
    std::size_t grid_;
    std::vector<std::uint8_t> object_;
};

/// Nearest-neighbour resize with pixel centres aligned: destination pixel x
/// samples source column floor((x + 0.5) * src_w / dst_w). Identity when the
/// sizes already match.
inline PixelMask resize_nearest(const PixelMask& mask, std::size_t dst_w, std::size_t dst_h) {
    PixelMask out = PixelMask::filled(dst_w, dst_h, 0);
    for (std::size_t y = 0; y < dst_h; ++y) {
        const std::size_t sy = ((2 * y + 1) * mask.height) / (2 * dst_h);
        for (std::size_t x = 0; x < dst_w; ++x) {
            const std::size_t sx = ((2 * x + 1) * mask.width) / (2 * dst_w);
            out.set(x, y, mask.at(sx, sy));
        }
    }
    return out;
}

inline PatchPartition partition_mask(const PixelMask& mask, std::size_t image_size = default_image_size,
                                     std::size_t patch_size = default_patch_size) {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
        throw Error(ErrorKind::IndivisibleGrid, "image size " + std::to_string(image_size) +
                                                    " is not a positive multiple of patch size " +
                                                    std::to_string(patch_size));
    }
    mask.validate();
    const PixelMask sized =
        (mask.width == image_size && mask.height == image_size) ? mask : resize_nearest(mask, image_size, image_size);
    const std::size_t grid = image_size / patch_size;
    std::vector<std::uint8_t> flags(grid * grid, 0);
    for (std::size_t y = 0; y < image_size; ++y) {
        const std::size_t row = y / patch_size;
        for (std::size_t x = 0; x < image_size; ++x) {
            if (sized.at(x, y) == 255) flags[row * grid + x / patch_size] = 1;
        }
    }
    return PatchPartition(image_size, patch_size, std::move(flags));
}

struct AttentionMaskSpec {
    MaskedView view = MaskedView::Object;
    std::size_t image_size = default_image_size;
    std::size_t patch_size = default_patch_size;
    /// Patches whose attention scores are zeroed, sorted row-major.
    std::vector<Patch> zeroed;

    /// True when no patch is kept. For the object view this is an image
    /// without object segmentation and must be recorded as such.
    bool keeps_nothing() const {
        const std::size_t grid = image_size / patch_size;
        return zeroed.size() == grid * grid;
    }

    bool operator==(const AttentionMaskSpec&) const = default;
};

inline AttentionMaskSpec to_attention_spec(const PatchPartition& partition, MaskedView view) {
    return {view, partition.image_size(), partition.patch_size(),
            view == MaskedView::Object ? partition.background_patches() : partition.object_patches()};
}

inline nlohmann::ordered_json to_json(const AttentionMaskSpec& spec) {
    nlohmann::ordered_json j;
    j["view"] = to_string(spec.view);
    j["image_size"] = spec.image_size;
    j["patch_size"] = spec.patch_size;
    auto zeroed = nlohmann::ordered_json::array();
    for (const auto& p : spec.zeroed) zeroed.push_back({p.row, p.col});
    j["zeroed"] = std::move(zeroed);
    return j;
}

inline AttentionMaskSpec attention_spec_from_json(const nlohmann::json& j) {
    try {
        AttentionMaskSpec spec;
        auto view = parse_masked_view(j.at("view").get<std::string>());
        if (!view) throw Error(ErrorKind::MalformedMask, "unknown attention view");
        spec.view = *view;
        spec.image_size = j.at("image_size").get<std::size_t>();
        spec.patch_size = j.at("patch_size").get<std::size_t>();
        for (const auto& p : j.at("zeroed")) spec.zeroed.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedMask, std::string("malformed attention spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)

inline PixelMask decode_pgm(std::span<const unsigned char> bytes) {
    std::size_t pos = 0;
    auto unsupported = [](const std::string& what) { throw Error(ErrorKind::UnsupportedMaskFormat, what); };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') unsupported("mask is not a binary PGM (P5) file");
    pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) unsupported("malformed PGM header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > (1u << 24)) unsupported("PGM header value out of range");
            ++pos;
        }
        return v;
    };
    PixelMask m;
    m.width = number();
    m.height = number();
    const std::size_t maxval = number();
    if (maxval != 255) unsupported("PGM maxval must be 255, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) unsupported("malformed PGM header");
    ++pos;
    const std::size_t n = m.width * m.height;
    if (bytes.size() - pos != n) {
        throw Error(ErrorKind::MalformedMask, "PGM raster holds " + std::to_string(bytes.size() - pos) +
                                                  " bytes, expected " + std::to_string(n));
    }
    m.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    m.validate();
    return m;
}

inline PixelMask read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes);
}

inline void write_pgm(const std::filesystem::path& path, const PixelMask& mask) {
    mask.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "' for writing");
    out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "write to '" + path.string() + "' failed");
}

} // namespace ddig
