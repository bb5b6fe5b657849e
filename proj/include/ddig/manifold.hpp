#pragma once

// k-nearest-neighbour manifolds over reference embeddings, and the precision
// (realism) / coverage (diversity) metrics computed against them.
//
// Every reference row j gets a hypersphere of radius r_j = distance to its
// k-th nearest other reference row. A generated row is "inside the manifold"
// if it lies in at least one hypersphere (boundary inclusive); a reference row
// is "covered" if its hypersphere holds at least one generated row.
//
//   precision = #generated rows inside / n_generated_total
//   coverage  = #reference rows covered / n_real
//
// All comparisons are made on squared Euclidean distances computed by
// `squared_l2` below, so results are exactly reproducible by any routine that
// follows the same accumulation order (see ddig/oracle.hpp).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ddig/embedstore.hpp"
#include "ddig/error.hpp"

namespace ddig {

inline constexpr std::size_t default_k = 3;

struct ComputeOptions {
    /// Worker threads; 0 means std::thread::hardware_concurrency().
    unsigned threads = 0;
};

/// Squared Euclidean distance accumulated in double. Coordinate c is added to
/// lane c % 8 in increasing c; lanes are combined as
/// ((l0 + l1) + (l2 + l3)) + ((l4 + l5) + (l6 + l7)).
inline double squared_l2(std::span<const float> a, std::span<const float> b) {
    const std::size_t d = a.size();
    const float* pa = a.data();
    const float* pb = b.data();
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= d; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) {
            const double t = static_cast<double>(pa[i + l]) - static_cast<double>(pb[i + l]);
            acc[l] += t * t;
        }
    }
    for (std::size_t l = 0; i < d; ++i, ++l) {
        const double t = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        acc[l] += t * t;
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(block, worker) for every block in [0, n_blocks). Blocks are handed
/// out dynamically; callers must make each block's output independent of
/// which worker ran it.
template <class Fn>
void parallel_blocks(std::size_t n_blocks, unsigned threads, Fn&& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n_blocks, 1)));
    if (threads <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b, 0u);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) fn(b, w);
        });
    }
}

inline constexpr std::size_t query_block = 16;
inline constexpr std::size_t target_block = 64;
inline constexpr std::size_t lanes = 8;

/// Rows widened to double and zero-padded to a multiple of 8 columns. Padding
/// adds exact zeros to each lane, so distances match squared_l2 bit for bit.
struct PackedRows {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t stride = 0;

    explicit PackedRows(const MatrixView& m)
        : rows(m.rows), stride((m.dim + lanes - 1) / lanes * lanes) {
        values.assign(rows * stride, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto src = m.row(r);
            std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(r * stride));
        }
    }

    const double* row(std::size_t r) const { return values.data() + r * stride; }
};

#if defined(__GNUC__) || defined(__clang__)
typedef double lane4 __attribute__((vector_size(32)));

inline lane4 load4(const double* p) {
    lane4 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline double combine(lane4 lo, lane4 hi) {
    return ((lo[0] + lo[1]) + (lo[2] + lo[3])) + ((hi[0] + hi[1]) + (hi[2] + hi[3]));
}

/// Distances from four query rows to one target row.
inline void squared_l2_4x1(const double* const q[4], const double* t, std::size_t stride, double out[4]) {
    lane4 lo[4] = {}, hi[4] = {};
    for (std::size_t i = 0; i < stride; i += lanes) {
        const lane4 tl = load4(t + i);
        const lane4 th = load4(t + i + 4);
        for (int k = 0; k < 4; ++k) {
            const lane4 xl = load4(q[k] + i) - tl;
            const lane4 xh = load4(q[k] + i + 4) - th;
            lo[k] += xl * xl;
            hi[k] += xh * xh;
        }
    }
    for (int k = 0; k < 4; ++k) out[k] = combine(lo[k], hi[k]);
}

inline double squared_l2_1x1(const double* q, const double* t, std::size_t stride) {
    lane4 lo = {}, hi = {};
    for (std::size_t i = 0; i < stride; i += lanes) {
        const lane4 xl = load4(q + i) - load4(t + i);
        const lane4 xh = load4(q + i + 4) - load4(t + i + 4);
        lo += xl * xl;
        hi += xh * xh;
    }
    return combine(lo, hi);
}
#else
inline double squared_l2_1x1(const double* q, const double* t, std::size_t stride) {
    double acc[lanes] = {};
    for (std::size_t i = 0; i < stride; i += lanes) {
        for (std::size_t l = 0; l < lanes; ++l) {
            const double x = q[i + l] - t[i + l];
            acc[l] += x * x;
        }
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void squared_l2_4x1(const double* const q[4], const double* t, std::size_t stride, double out[4]) {
    for (int k = 0; k < 4; ++k) out[k] = squared_l2_1x1(q[k], t, stride);
}
#endif

/// Calls fn(query, target, squared distance) for every query in [q0, q1) and
/// target in [t0, t1), four queries at a time. `skip(q, t)` may veto a pair;
/// a vetoed pair may still be computed when it shares a group with others.
template <class Skip, class Fn>
void for_each_pair(const PackedRows& queries, std::size_t q0, std::size_t q1, const PackedRows& targets,
                   std::size_t t0, std::size_t t1, Skip&& skip, Fn&& fn) {
    std::size_t q = q0;
    for (; q + 4 <= q1; q += 4) {
        const double* qs[4] = {queries.row(q), queries.row(q + 1), queries.row(q + 2), queries.row(q + 3)};
        for (std::size_t t = t0; t < t1; ++t) {
            if (skip(q, t) && skip(q + 1, t) && skip(q + 2, t) && skip(q + 3, t)) continue;
            double d2[4];
            squared_l2_4x1(qs, targets.row(t), queries.stride, d2);
            for (std::size_t k = 0; k < 4; ++k) fn(q + k, t, d2[k]);
        }
    }
    for (; q < q1; ++q) {
        for (std::size_t t = t0; t < t1; ++t) {
            if (skip(q, t)) continue;
            fn(q, t, squared_l2_1x1(queries.row(q), targets.row(t), queries.stride));
        }
    }
}

/// Keeps the k smallest values seen, sorted ascending.
class SmallestK {
  public:
    explicit SmallestK(std::size_t k) : values_(k, std::numeric_limits<double>::infinity()) {}

    void offer(double v) {
        if (!(v < values_.back())) return;
        std::size_t pos = values_.size() - 1;
        while (pos > 0 && values_[pos - 1] > v) {
            values_[pos] = values_[pos - 1];
            --pos;
        }
        values_[pos] = v;
    }

    double kth() const { return values_.back(); }

  private:
    std::vector<double> values_;
};

inline void check_dimensions(const MatrixView& a, const MatrixView& b) {
    if (a.dim != b.dim) {
        throw Error(ErrorKind::DimensionMismatch,
                    "dimension mismatch: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
    }
}

} // namespace detail

/// Hyperspheres around reference rows. Holds a view into the reference data,
/// which must outlive the manifold, plus a widened copy used for distances.
class Manifold {
  public:
    Manifold(MatrixView reference, std::size_t k, std::vector<double> squared_radii,
             std::vector<std::string> item_ids = {})
        : Manifold(reference, k, std::move(squared_radii), std::make_shared<const detail::PackedRows>(reference),
                   std::move(item_ids)) {}

    Manifold(MatrixView reference, std::size_t k, std::vector<double> squared_radii,
             std::shared_ptr<const detail::PackedRows> packed, std::vector<std::string> item_ids = {})
        : reference_(reference), k_(k), squared_radii_(std::move(squared_radii)), packed_(std::move(packed)),
          item_ids_(std::move(item_ids)) {
        radii_.reserve(squared_radii_.size());
        for (double r2 : squared_radii_) radii_.push_back(std::sqrt(r2));
    }

    const MatrixView& reference() const { return reference_; }
    std::size_t size() const { return reference_.rows; }
    std::size_t dimension() const { return reference_.dim; }
    std::size_t k() const { return k_; }
    std::span<const double> radii() const { return radii_; }
    /// The values membership is decided on: inside iff squared_l2 <= squared_radii()[j].
    std::span<const double> squared_radii() const { return squared_radii_; }
    /// Reference item_ids, when built from an EmbeddingSet.
    const std::vector<std::string>& item_ids() const { return item_ids_; }
    const detail::PackedRows& packed() const { return *packed_; }

  private:
    MatrixView reference_;
    std::size_t k_;
    std::vector<double> squared_radii_;
    std::vector<double> radii_;
    std::shared_ptr<const detail::PackedRows> packed_;
    std::vector<std::string> item_ids_;
};

namespace detail {

inline Manifold build_manifold_impl(MatrixView reference, std::size_t k, ComputeOptions opts,
                                    std::vector<std::string> item_ids) {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be positive");
    if (reference.rows <= k) {
        throw Error(ErrorKind::TooFewPoints, "manifold needs more than k=" + std::to_string(k) +
                                                 " reference rows, got " + std::to_string(reference.rows));
    }
    const std::size_t n = reference.rows;
    auto packed = std::make_shared<const PackedRows>(reference);
    std::vector<double> squared_radii(n);
    const std::size_t n_blocks = (n + query_block - 1) / query_block;

    parallel_blocks(n_blocks, opts.threads, [&](std::size_t block, unsigned) {
        const std::size_t q0 = block * query_block;
        const std::size_t q1 = std::min(n, q0 + query_block);
        std::vector<SmallestK> nearest(q1 - q0, SmallestK(k));
        for (std::size_t t0 = 0; t0 < n; t0 += target_block) {
            const std::size_t t1 = std::min(n, t0 + target_block);
            for_each_pair(
                *packed, q0, q1, *packed, t0, t1, [](std::size_t q, std::size_t t) { return q == t; },
                [&](std::size_t q, std::size_t t, double d2) {
                    if (q != t) nearest[q - q0].offer(d2);
                });
        }
        for (std::size_t q = q0; q < q1; ++q) squared_radii[q] = nearest[q - q0].kth();
    });
    return Manifold(reference, k, std::move(squared_radii), std::move(packed), std::move(item_ids));
}

} // namespace detail

/// Exact k-th-nearest-neighbour radii (self excluded), computed blockwise so
/// no full pairwise matrix is ever resident.
inline Manifold build_manifold(MatrixView reference, std::size_t k = default_k, ComputeOptions opts = {}) {
    return detail::build_manifold_impl(reference, k, opts, {});
}

/// As above, remembering reference item_ids. `reference` must outlive the result.
inline Manifold build_manifold(const EmbeddingSet& reference, std::size_t k = default_k, ComputeOptions opts = {}) {
    std::vector<std::string> ids;
    ids.reserve(reference.size());
    for (const auto& r : reference.records()) ids.push_back(r.item_id);
    return detail::build_manifold_impl(reference.matrix(), k, opts, std::move(ids));
}

// ---------------------------------------------------------------------------
// Membership

/// Per-axis reductions of the membership relation, computed without
/// materializing it.
struct MembershipSummary {
    /// generated row i lies in at least one hypersphere
    std::vector<std::uint8_t> generated_inside;
    /// reference row j's hypersphere holds at least one generated row
    std::vector<std::uint8_t> reference_covered;
    /// number of generated rows in each hypersphere; empty unless requested
    std::vector<std::uint32_t> reference_hits;

    std::size_t inside_count() const {
        return static_cast<std::size_t>(std::count(generated_inside.begin(), generated_inside.end(), 1));
    }
    std::size_t covered_count() const {
        return static_cast<std::size_t>(std::count(reference_covered.begin(), reference_covered.end(), 1));
    }
};

struct MembershipOptions {
    unsigned threads = 0;
    /// Count generated rows per hypersphere. Disables pair pruning.
    bool count_reference_hits = false;
};

inline MembershipSummary summarize_membership(const Manifold& manifold, MatrixView generated,
                                              MembershipOptions opts = {}) {
    detail::check_dimensions(manifold.reference(), generated);
    const auto r2 = manifold.squared_radii();
    const std::size_t n_ref = manifold.size();
    const std::size_t n_gen = generated.rows;

    MembershipSummary out;
    out.generated_inside.assign(n_gen, 0);
    out.reference_covered.assign(n_ref, 0);
    if (opts.count_reference_hits) out.reference_hits.assign(n_ref, 0);
    if (n_gen == 0) return out;

    const detail::PackedRows gen(generated);
    const std::size_t n_blocks = (n_gen + detail::query_block - 1) / detail::query_block;
    const auto threads = static_cast<unsigned>(
        std::min<std::size_t>(detail::resolve_threads(opts.threads), n_blocks));
    std::vector<std::vector<std::uint8_t>> covered(threads, std::vector<std::uint8_t>(n_ref, 0));
    std::vector<std::vector<std::uint32_t>> hits(opts.count_reference_hits ? threads : 0,
                                                 std::vector<std::uint32_t>(n_ref, 0));

    detail::parallel_blocks(n_blocks, threads, [&](std::size_t block, unsigned worker) {
        auto& cov = covered[worker];
        const std::size_t g0 = block * detail::query_block;
        const std::size_t g1 = std::min(n_gen, g0 + detail::query_block);
        // A pair can be skipped once both of its outcomes are already known.
        auto known = [&](std::size_t g, std::size_t j) {
            return !opts.count_reference_hits && out.generated_inside[g] && cov[j];
        };
        auto record = [&](std::size_t g, std::size_t j, double d2) {
            if (d2 <= r2[j]) {
                out.generated_inside[g] = 1;
                cov[j] = 1;
                if (opts.count_reference_hits) ++hits[worker][j];
            }
        };
        for (std::size_t t0 = 0; t0 < n_ref; t0 += detail::target_block) {
            const std::size_t t1 = std::min(n_ref, t0 + detail::target_block);
            detail::for_each_pair(gen, g0, g1, manifold.packed(), t0, t1, known, record);
        }
    });

    for (const auto& cov : covered) {
        for (std::size_t j = 0; j < n_ref; ++j) out.reference_covered[j] |= cov[j];
    }
    for (const auto& h : hits) {
        for (std::size_t j = 0; j < n_ref; ++j) out.reference_hits[j] += h[j];
    }
    return out;
}

/// Dense boolean membership relation, entry (j, i) true iff generated row i
/// lies in reference row j's hypersphere. Intended for small inputs and
/// inspection; the metric path uses MembershipSummary.
class MembershipMatrix {
  public:
    MembershipMatrix(std::size_t n_reference, std::size_t n_generated)
        : n_ref_(n_reference), n_gen_(n_generated), bits_(n_reference * n_generated, 0) {}

    std::size_t reference_count() const { return n_ref_; }
    std::size_t generated_count() const { return n_gen_; }

    bool contains(std::size_t reference_row, std::size_t generated_row) const {
        return bits_[reference_row * n_gen_ + generated_row] != 0;
    }
    void set(std::size_t reference_row, std::size_t generated_row, bool value) {
        bits_[reference_row * n_gen_ + generated_row] = value ? 1 : 0;
    }

    /// any() over reference rows: the precision indicator for generated row i.
    bool generated_inside(std::size_t generated_row) const {
        for (std::size_t j = 0; j < n_ref_; ++j) {
            if (contains(j, generated_row)) return true;
        }
        return false;
    }

    /// any() over generated rows: the coverage indicator for reference row j.
    bool reference_covered(std::size_t reference_row) const {
        const auto* row = bits_.data() + reference_row * n_gen_;
        return std::any_of(row, row + n_gen_, [](std::uint8_t b) { return b != 0; });
    }

    MembershipSummary summary() const {
        MembershipSummary s;
        s.generated_inside.resize(n_gen_);
        s.reference_covered.resize(n_ref_);
        s.reference_hits.assign(n_ref_, 0);
        for (std::size_t j = 0; j < n_ref_; ++j) {
            for (std::size_t i = 0; i < n_gen_; ++i) {
                if (!contains(j, i)) continue;
                s.generated_inside[i] = 1;
                s.reference_covered[j] = 1;
                ++s.reference_hits[j];
            }
        }
        return s;
    }

    std::vector<std::string> reference_ids;
    std::vector<std::string> generated_ids;

  private:
    std::size_t n_ref_;
    std::size_t n_gen_;
    std::vector<std::uint8_t> bits_;
};

inline MembershipMatrix membership(const Manifold& manifold, MatrixView generated, ComputeOptions opts = {}) {
    detail::check_dimensions(manifold.reference(), generated);
    const auto r2 = manifold.squared_radii();
    const std::size_t n_ref = manifold.size();
    MembershipMatrix m(n_ref, generated.rows);
    const detail::PackedRows gen(generated);
    const std::size_t n_blocks = (n_ref + detail::query_block - 1) / detail::query_block;
    detail::parallel_blocks(n_blocks, opts.threads, [&](std::size_t block, unsigned) {
        const std::size_t j0 = block * detail::query_block;
        const std::size_t j1 = std::min(n_ref, j0 + detail::query_block);
        detail::for_each_pair(
            manifold.packed(), j0, j1, gen, 0, generated.rows, [](std::size_t, std::size_t) { return false; },
            [&](std::size_t j, std::size_t i, double d2) { m.set(j, i, d2 <= r2[j]); });
    });
    m.reference_ids = manifold.item_ids();
    return m;
}

inline MembershipMatrix membership(const Manifold& manifold, const EmbeddingSet& generated, ComputeOptions opts = {}) {
    auto m = membership(manifold, generated.matrix(), opts);
    m.generated_ids.reserve(generated.size());
    for (const auto& r : generated.records()) m.generated_ids.push_back(r.item_id);
    return m;
}

// ---------------------------------------------------------------------------
// Metrics

struct PrecisionResult {
    double value = 0.0;
    std::size_t inside_count = 0;
    std::size_t n_generated_total = 0;
    std::size_t n_generated_embedded = 0;
};

struct CoverageResult {
    double value = 0.0;
    std::size_t covered_count = 0;
    std::size_t n_real = 0;
};

/// Precision and coverage of one (region, view) cell with their denominators.
struct MetricResult {
    double precision = 0.0;
    double coverage = 0.0;
    std::size_t inside_count = 0;
    std::size_t covered_count = 0;
    /// Includes generated items with no row in this view (no object segmentation).
    std::size_t n_generated_total = 0;
    std::size_t n_generated_embedded = 0;
    std::size_t n_real = 0;

    bool operator==(const MetricResult&) const = default;
};

inline PrecisionResult precision_from(const MembershipSummary& s, std::size_t n_generated_total) {
    if (n_generated_total == 0) throw Error(ErrorKind::ZeroDenominator, "precision denominator is zero");
    if (n_generated_total < s.generated_inside.size()) {
        throw Error(ErrorKind::InvalidArgument, "n_generated_total (" + std::to_string(n_generated_total) +
                                                    ") is smaller than the embedded row count (" +
                                                    std::to_string(s.generated_inside.size()) + ")");
    }
    PrecisionResult p;
    p.inside_count = s.inside_count();
    p.n_generated_total = n_generated_total;
    p.n_generated_embedded = s.generated_inside.size();
    p.value = static_cast<double>(p.inside_count) / static_cast<double>(n_generated_total);
    return p;
}

inline CoverageResult coverage_from(const MembershipSummary& s) {
    if (s.reference_covered.empty()) throw Error(ErrorKind::ZeroDenominator, "coverage denominator is zero");
    CoverageResult c;
    c.covered_count = s.covered_count();
    c.n_real = s.reference_covered.size();
    c.value = static_cast<double>(c.covered_count) / static_cast<double>(c.n_real);
    return c;
}

/// Fraction of all generated items whose row lies inside the manifold.
/// `n_generated_total` counts items without a row in this view as outside.
inline PrecisionResult precision(const Manifold& manifold, MatrixView generated, std::size_t n_generated_total,
                                 ComputeOptions opts = {}) {
    if (n_generated_total == 0) throw Error(ErrorKind::ZeroDenominator, "precision denominator is zero");
    return precision_from(summarize_membership(manifold, generated, {opts.threads, false}), n_generated_total);
}

inline CoverageResult coverage(const Manifold& manifold, MatrixView generated, ComputeOptions opts = {}) {
    return coverage_from(summarize_membership(manifold, generated, {opts.threads, false}));
}

inline MetricResult metric_result(const MembershipSummary& s, std::size_t n_generated_total) {
    const auto p = precision_from(s, n_generated_total);
    const auto c = coverage_from(s);
    return {p.value, c.value, p.inside_count, c.covered_count, p.n_generated_total, p.n_generated_embedded, c.n_real};
}

/// Precision and coverage from a single membership pass.
inline MetricResult evaluate(const Manifold& manifold, MatrixView generated, std::size_t n_generated_total,
                             ComputeOptions opts = {}) {
    if (n_generated_total == 0) throw Error(ErrorKind::ZeroDenominator, "precision denominator is zero");
    return metric_result(summarize_membership(manifold, generated, {opts.threads, false}), n_generated_total);
}

} // namespace ddig
