#pragma once

// Embedding storage: the ".ddig" feature-matrix format, the JSON Lines
// manifest that ties rows to items, and slicing by split/region/class/view.
//
// A dataset on disk is one manifest plus one feature file per view:
//
//   <prefix>.manifest.jsonl
//   <prefix>.full.ddig  <prefix>.object.ddig  <prefix>.background.ddig
//
// Feature file layout (all integers and floats little-endian):
//
//   offset 0   "DDIG"            4 bytes
//   offset 4   version (=1)      u16
//   offset 6   dimension         u32
//   offset 10  row count         u32
//   offset 14  rows x dim float32, row-major

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ddig/error.hpp"

namespace ddig {

enum class Split { Real, Generated };
enum class View { Full, Object, Background };

inline constexpr std::array<View, 3> all_views{View::Full, View::Object, View::Background};

constexpr std::string_view to_string(Split s) {
    return s == Split::Real ? "real" : "generated";
}

constexpr std::string_view to_string(View v) {
    switch (v) {
    case View::Full: return "full";
    case View::Object: return "object";
    case View::Background: return "background";
    }
    return "full";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "real") return Split::Real;
    if (s == "generated") return Split::Generated;
    return std::nullopt;
}

inline std::optional<View> parse_view(std::string_view s) {
    if (s == "full") return View::Full;
    if (s == "object") return View::Object;
    if (s == "background") return View::Background;
    return std::nullopt;
}

struct EmbeddingRecord {
    std::size_t row_index = 0;
    std::string item_id;
    Split split = Split::Real;
    std::string region;
    std::string object_class;
    View view = View::Full;
    bool has_object_segmentation = true;

    bool operator==(const EmbeddingRecord&) const = default;
};

/// Non-owning row-major matrix of float32 features.
struct MatrixView {
    std::span<const float> data;
    std::size_t rows = 0;
    std::size_t dim = 0;

    std::span<const float> row(std::size_t i) const { return data.subspan(i * dim, dim); }
    bool empty() const { return rows == 0; }
};

namespace detail {

inline std::size_t first_non_finite_row(std::span<const float> values, std::size_t dim) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) return i / dim;
    }
    return static_cast<std::size_t>(-1);
}

} // namespace detail

/// Feature vectors plus one manifest record per row. Row `i` of the matrix
/// belongs to `records()[i]`. Immutable once constructed.
class EmbeddingSet {
  public:
    EmbeddingSet() = default;

    /// Validates: dimension > 0, one vector per record, all values finite,
    /// item_id unique per view, no object row for an item flagged without
    /// segmentation, and a consistent segmentation flag across views.
    EmbeddingSet(std::size_t dimension, std::vector<float> vectors, std::vector<EmbeddingRecord> records)
        : dim_(dimension), vectors_(std::move(vectors)), records_(std::move(records)) {
        if (dim_ == 0) throw Error(ErrorKind::InvalidArgument, "embedding dimension must be positive");
        if (vectors_.size() != records_.size() * dim_) {
            throw Error(ErrorKind::ManifestMismatch,
                        "vector count " + std::to_string(vectors_.size() / dim_) + " does not match " +
                            std::to_string(records_.size()) + " records");
        }
        if (auto bad = detail::first_non_finite_row(vectors_, dim_); bad != static_cast<std::size_t>(-1)) {
            throw Error::non_finite(records_[bad].row_index);
        }
        check_record_invariants();
    }

    std::size_t dimension() const { return dim_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const std::vector<EmbeddingRecord>& records() const { return records_; }
    const EmbeddingRecord& record(std::size_t i) const { return records_[i]; }
    std::span<const float> vectors() const { return vectors_; }
    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(vectors_).subspan(i * dim_, dim_);
    }
    MatrixView matrix() const { return {vectors_, records_.size(), dim_}; }

    /// Throws ManifestMismatch unless row_index values of each view form the
    /// contiguous range 0..n-1. Required of anything read from or written to disk.
    void check_row_indices() const;

    /// Bit-exact equality of vectors and field-wise equality of records.
    friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
        return a.dim_ == b.dim_ && a.records_ == b.records_ && a.vectors_.size() == b.vectors_.size() &&
               (a.vectors_.empty() ||
                std::memcmp(a.vectors_.data(), b.vectors_.data(), a.vectors_.size() * sizeof(float)) == 0);
    }

  private:
    void check_record_invariants() const {
        std::array<std::unordered_set<std::string_view>, 3> ids;
        std::unordered_map<std::string_view, bool> flag;
        for (const auto& r : records_) {
            if (!ids[static_cast<int>(r.view)].insert(r.item_id).second) {
                throw Error(ErrorKind::DuplicateItem, "duplicate item_id '" + r.item_id + "' in view '" +
                                                          std::string(to_string(r.view)) + "'");
            }
            if (r.view == View::Object && !r.has_object_segmentation) {
                throw Error(ErrorKind::ManifestMismatch,
                            "item '" + r.item_id + "' has an object row but no object segmentation");
            }
            auto [it, inserted] = flag.emplace(r.item_id, r.has_object_segmentation);
            if (!inserted && it->second != r.has_object_segmentation) {
                throw Error(ErrorKind::ManifestMismatch,
                            "item '" + r.item_id + "' has inconsistent has_object_segmentation across views");
            }
        }
    }

    std::size_t dim_ = 1;
    std::vector<float> vectors_;
    std::vector<EmbeddingRecord> records_;
};

inline void check_row_indices(std::span<const EmbeddingRecord> records) {
    std::array<std::vector<char>, 3> seen;
    std::array<std::size_t, 3> count{};
    for (const auto& r : records) ++count[static_cast<int>(r.view)];
    for (int v = 0; v < 3; ++v) seen[v].assign(count[v], 0);
    for (const auto& r : records) {
        auto& s = seen[static_cast<int>(r.view)];
        if (r.row_index >= s.size() || s[r.row_index]) {
            throw Error(ErrorKind::ManifestMismatch, "row_index values for view '" + std::string(to_string(r.view)) +
                                                         "' are not a contiguous 0-based range (item " + r.item_id +
                                                         ")");
        }
        s[r.row_index] = 1;
    }
}

inline void EmbeddingSet::check_row_indices() const { ddig::check_row_indices(records_); }

// ---------------------------------------------------------------------------
// Raw feature files

inline constexpr std::array<char, 4> feature_magic{'D', 'D', 'I', 'G'};
inline constexpr std::uint16_t feature_format_version = 1;
inline constexpr std::size_t feature_header_size = 14;

struct FeatureMatrix {
    std::size_t dimension = 0;
    std::size_t rows = 0;
    std::vector<float> values;

    MatrixView view() const { return {values, rows, dimension}; }
};

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(value >> (8 * i)));
}

template <class T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
}

inline void floats_to_le(std::span<const float> src, unsigned char* dst) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!src.empty()) std::memcpy(dst, src.data(), src.size() * sizeof(float));
    } else {
        for (std::size_t i = 0; i < src.size(); ++i) {
            auto bits = std::bit_cast<std::uint32_t>(src[i]);
            for (int b = 0; b < 4; ++b) dst[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
        }
    }
}

inline void floats_from_le(const unsigned char* src, std::span<float> dst) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!dst.empty()) std::memcpy(dst.data(), src, dst.size() * sizeof(float));
    } else {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * i));
    }
}

inline std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw Error(ErrorKind::IoFailure, "cannot read '" + path.string() + "'");
    }
    return bytes;
}

} // namespace detail

inline std::vector<unsigned char> encode_feature_matrix(std::size_t dimension, std::size_t rows,
                                                        std::span<const float> values) {
    if (values.size() != dimension * rows) {
        throw Error(ErrorKind::InvalidArgument, "feature payload size does not match rows x dimension");
    }
    if (dimension > UINT32_MAX || rows > UINT32_MAX) {
        throw Error(ErrorKind::InvalidArgument, "feature matrix too large for the format");
    }
    std::vector<unsigned char> out;
    out.reserve(feature_header_size + values.size() * 4);
    out.insert(out.end(), feature_magic.begin(), feature_magic.end());
    detail::put_le<std::uint16_t>(out, feature_format_version);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dimension));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
    out.resize(feature_header_size + values.size() * 4);
    detail::floats_to_le(values, out.data() + feature_header_size);
    return out;
}

inline FeatureMatrix decode_feature_matrix(std::span<const unsigned char> bytes) {
    if (bytes.size() < 4 || !std::equal(feature_magic.begin(), feature_magic.end(), bytes.begin())) {
        throw Error(ErrorKind::MagicMismatch, "missing DDIG magic header");
    }
    if (bytes.size() < feature_header_size) {
        throw Error(ErrorKind::TruncatedPayload, "header shorter than " + std::to_string(feature_header_size) + " bytes");
    }
    const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
    if (version != feature_format_version) {
        throw Error(ErrorKind::VersionUnsupported, "unsupported format version " + std::to_string(version));
    }
    FeatureMatrix m;
    m.dimension = detail::get_le<std::uint32_t>(bytes.data() + 6);
    m.rows = detail::get_le<std::uint32_t>(bytes.data() + 10);
    if (m.dimension == 0) throw Error(ErrorKind::MagicMismatch, "header declares zero dimension");
    const std::size_t expected = m.rows * m.dimension * 4;
    const std::size_t payload = bytes.size() - feature_header_size;
    if (payload != expected) {
        throw Error(ErrorKind::TruncatedPayload, "payload is " + std::to_string(payload) + " bytes, header implies " +
                                                     std::to_string(expected));
    }
    m.values.resize(m.rows * m.dimension);
    detail::floats_from_le(bytes.data() + feature_header_size, m.values);
    if (auto bad = detail::first_non_finite_row(m.values, m.dimension); bad != static_cast<std::size_t>(-1)) {
        throw Error::non_finite(bad);
    }
    return m;
}

inline FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
    const auto bytes = detail::read_all_bytes(path);
    return decode_feature_matrix(bytes);
}

inline void write_feature_matrix(const std::filesystem::path& path, std::size_t dimension, std::size_t rows,
                                 std::span<const float> values) {
    const auto bytes = encode_feature_matrix(dimension, rows, values);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::ordered_json to_json(const EmbeddingRecord& r) {
    nlohmann::ordered_json j;
    j["item_id"] = r.item_id;
    j["split"] = to_string(r.split);
    j["region"] = r.region;
    j["object_class"] = r.object_class;
    j["view"] = to_string(r.view);
    j["row_index"] = r.row_index;
    j["has_object_segmentation"] = r.has_object_segmentation;
    return j;
}

inline EmbeddingRecord record_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::MalformedManifest, what); };
    if (!j.is_object()) fail("manifest line is not a JSON object");
    for (const char* key : {"item_id", "split", "region", "object_class", "view", "row_index",
                            "has_object_segmentation"}) {
        if (!j.contains(key)) fail(std::string("manifest record missing key '") + key + "'");
    }
    EmbeddingRecord r;
    try {
        r.item_id = j.at("item_id").get<std::string>();
        r.region = j.at("region").get<std::string>();
        r.object_class = j.at("object_class").get<std::string>();
        const auto& idx = j.at("row_index");
        if (!idx.is_number_unsigned()) fail("row_index must be a non-negative integer");
        r.row_index = idx.get<std::size_t>();
        r.has_object_segmentation = j.at("has_object_segmentation").get<bool>();
        auto split = parse_split(j.at("split").get<std::string>());
        auto view = parse_view(j.at("view").get<std::string>());
        if (!split) fail("unknown split '" + j.at("split").get<std::string>() + "'");
        if (!view) fail("unknown view '" + j.at("view").get<std::string>() + "'");
        r.split = *split;
        r.view = *view;
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("manifest record has a field of the wrong type: ") + e.what());
    }
    return r;
}

inline std::vector<EmbeddingRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ManifestMismatch, "cannot open manifest '" + path.string() + "'");
    std::vector<EmbeddingRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw Error(ErrorKind::MalformedManifest, "manifest line " + std::to_string(line_no) + " is not valid JSON");
        }
        records.push_back(record_from_json(j));
    }
    return records;
}

inline void write_manifest(const std::filesystem::path& path, std::span<const EmbeddingRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "' for writing");
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw Error(ErrorKind::IoFailure, "write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------
// Datasets (manifest + per-view feature files)

struct DatasetPaths {
    std::filesystem::path manifest;
    std::filesystem::path full;
    std::filesystem::path object;
    std::filesystem::path background;

    static DatasetPaths from_prefix(const std::string& prefix) {
        return {prefix + ".manifest.jsonl", prefix + ".full.ddig", prefix + ".object.ddig",
                prefix + ".background.ddig"};
    }

    const std::filesystem::path& feature_file(View v) const {
        switch (v) {
        case View::Full: return full;
        case View::Object: return object;
        case View::Background: return background;
        }
        return full;
    }
};

/// Reads a manifest and its per-view feature files into one validated set.
/// Records keep manifest line order. A view's feature file may be absent only
/// when the manifest has no rows for that view.
inline EmbeddingSet read_embedding_file(const DatasetPaths& paths) {
    if (!std::filesystem::exists(paths.manifest)) {
        throw Error(ErrorKind::ManifestMismatch, "manifest '" + paths.manifest.string() + "' not found");
    }
    auto records = read_manifest(paths.manifest);

    std::array<std::size_t, 3> manifest_rows{};
    for (const auto& r : records) ++manifest_rows[static_cast<int>(r.view)];

    std::array<std::optional<FeatureMatrix>, 3> matrices;
    std::optional<std::size_t> dimension;
    for (View v : all_views) {
        const auto& file = paths.feature_file(v);
        const int vi = static_cast<int>(v);
        if (!std::filesystem::exists(file)) {
            if (manifest_rows[vi] > 0) {
                throw Error(ErrorKind::ManifestMismatch, "manifest lists " + std::to_string(manifest_rows[vi]) + " " +
                                                             std::string(to_string(v)) + " rows but '" + file.string() +
                                                             "' does not exist");
            }
            continue;
        }
        matrices[vi] = read_feature_matrix(file);
        if (matrices[vi]->rows != manifest_rows[vi]) {
            throw Error(ErrorKind::ManifestMismatch, "'" + file.string() + "' has " +
                                                         std::to_string(matrices[vi]->rows) + " rows, manifest lists " +
                                                         std::to_string(manifest_rows[vi]));
        }
        if (dimension && *dimension != matrices[vi]->dimension) {
            throw Error(ErrorKind::DimensionMismatch, "view files disagree on dimension (" +
                                                          std::to_string(*dimension) + " vs " +
                                                          std::to_string(matrices[vi]->dimension) + ")");
        }
        dimension = matrices[vi]->dimension;
    }
    if (!dimension) throw Error(ErrorKind::ManifestMismatch, "no feature files found next to the manifest");

    std::vector<float> vectors;
    vectors.reserve(records.size() * *dimension);
    check_row_indices(records);
    for (const auto& r : records) {
        auto row = matrices[static_cast<int>(r.view)]->view().row(r.row_index);
        vectors.insert(vectors.end(), row.begin(), row.end());
    }
    return EmbeddingSet(*dimension, std::move(vectors), std::move(records));
}

/// Writes all three view files (empty views get a header-only file) and the manifest.
inline void write_embedding_file(const EmbeddingSet& set, const DatasetPaths& paths) {
    set.check_row_indices();
    std::array<std::vector<std::size_t>, 3> source_row;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& r = set.record(i);
        const int v = static_cast<int>(r.view);
        if (source_row[v].size() <= r.row_index) source_row[v].resize(r.row_index + 1);
        source_row[v][r.row_index] = i;
    }
    for (View v : all_views) {
        const auto& rows = source_row[static_cast<int>(v)];
        std::vector<float> values;
        values.reserve(rows.size() * set.dimension());
        for (std::size_t src : rows) {
            auto row = set.row(src);
            values.insert(values.end(), row.begin(), row.end());
        }
        write_feature_matrix(paths.feature_file(v), set.dimension(), rows.size(), values);
    }
    write_manifest(paths.manifest, set.records());
}

// ---------------------------------------------------------------------------
// Slicing and balance

struct SliceQuery {
    std::optional<Split> split;
    std::optional<std::string> region;
    std::optional<std::string> object_class;
    View view = View::Full;
};

inline bool matches(const EmbeddingRecord& r, const SliceQuery& q) {
    return r.view == q.view && (!q.split || r.split == *q.split) && (!q.region || r.region == *q.region) &&
           (!q.object_class || r.object_class == *q.object_class);
}

/// Subset of `set` matching every provided filter, in original order. Records
/// keep their original row_index.
inline EmbeddingSet slice(const EmbeddingSet& set, const SliceQuery& q) {
    std::vector<float> vectors;
    std::vector<EmbeddingRecord> records;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (!matches(set.record(i), q)) continue;
        records.push_back(set.record(i));
        auto row = set.row(i);
        vectors.insert(vectors.end(), row.begin(), row.end());
    }
    return EmbeddingSet(set.dimension(), std::move(vectors), std::move(records));
}

/// Distinct item_ids across all views, optionally restricted to one region.
inline std::size_t count_items(const EmbeddingSet& set, const std::optional<std::string>& region = std::nullopt) {
    std::unordered_set<std::string_view> items;
    for (const auto& r : set.records()) {
        if (!region || r.region == *region) items.insert(r.item_id);
    }
    return items.size();
}

inline std::set<std::string> distinct_regions(const EmbeddingSet& set) {
    std::set<std::string> out;
    for (const auto& r : set.records()) out.insert(r.region);
    return out;
}

inline std::set<std::string> distinct_classes(const EmbeddingSet& set) {
    std::set<std::string> out;
    for (const auto& r : set.records()) out.insert(r.object_class);
    return out;
}

struct BalanceDeficit {
    std::string region;
    std::string object_class;
    std::size_t count = 0;

    bool operator==(const BalanceDeficit&) const = default;
};

/// Every (region, class) cell of the observed region x class grid holding fewer
/// than `min_per_cell` distinct items. Sorted by region, then class. Reports only.
inline std::vector<BalanceDeficit> validate_class_balance(const EmbeddingSet& set, std::size_t min_per_cell) {
    std::map<std::pair<std::string, std::string>, std::unordered_set<std::string>> cells;
    for (const auto& region : distinct_regions(set)) {
        for (const auto& cls : distinct_classes(set)) cells[{region, cls}];
    }
    for (const auto& r : set.records()) cells[{r.region, r.object_class}].insert(r.item_id);
    std::vector<BalanceDeficit> out;
    for (const auto& [key, items] : cells) {
        if (items.size() < min_per_cell) out.push_back({key.first, key.second, items.size()});
    }
    return out;
}

} // namespace ddig
