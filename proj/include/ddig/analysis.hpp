#pragma once

// Per-group (by default per-region) evaluation across the full, object and
// background views, disparity statistics, failure-mode mining and run
// comparison.
//
// Denominators: a cell's precision divides by every generated item of the
// group, whether or not it has a row in that view. Generated items without an
// object segmentation therefore count as "outside" in the object view, while
// their full and background rows are used as-is.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ddig/embedstore.hpp"
#include "ddig/error.hpp"
#include "ddig/manifold.hpp"

namespace ddig {

// ---------------------------------------------------------------------------
// Run evaluation

struct RunOptions {
    std::size_t k = default_k;
    std::vector<View> views{all_views.begin(), all_views.end()};
    /// Manifest key to disaggregate by: "region" or "object_class".
    std::string group_by = "region";
    std::string run_id;
    std::string prompt_template;
    /// Record, per reference item, how many generated rows fall in its hypersphere.
    bool reference_hit_counts = false;
    unsigned threads = 0;
};

struct ReportConfig {
    std::string distance = "euclidean";
    std::string normalization = "none";
    std::string boundary = "inclusive";
    std::string multi_instance_masks = "union";
    std::string group_by = "region";
    std::vector<View> views;
    std::vector<std::string> classes;

    bool operator==(const ReportConfig&) const = default;
};

struct CellKey {
    std::string region;
    View view = View::Full;

    auto operator<=>(const CellKey&) const = default;
};

struct ReferenceHitCount {
    std::string item_id;
    std::uint32_t count = 0;

    bool operator==(const ReferenceHitCount&) const = default;
};

struct CellResult {
    /// Present when the cell was computed.
    std::optional<MetricResult> metrics;
    /// Why the cell was skipped (e.g. "TooFewPoints"); empty when computed.
    std::string skip_reason;
    std::vector<ReferenceHitCount> reference_hits;

    bool ok() const { return metrics.has_value(); }
    bool operator==(const CellResult&) const = default;
};

struct ViewAverage {
    double precision = 0.0;
    double coverage = 0.0;
    std::size_t regions = 0;
};

struct RunReport {
    std::string run_id;
    std::string prompt_template;
    std::size_t k = default_k;
    ReportConfig config;
    std::map<CellKey, CellResult> cells;

    std::vector<std::string> regions() const {
        std::set<std::string> s;
        for (const auto& [key, cell] : cells) s.insert(key.region);
        return {s.begin(), s.end()};
    }

    const MetricResult* metrics(const std::string& region, View view) const {
        auto it = cells.find({region, view});
        return it == cells.end() || !it->second.ok() ? nullptr : &*it->second.metrics;
    }

    /// Unweighted mean over the computed cells of a view.
    std::optional<ViewAverage> average(View view) const {
        ViewAverage avg;
        for (const auto& [key, cell] : cells) {
            if (key.view != view || !cell.ok()) continue;
            avg.precision += cell.metrics->precision;
            avg.coverage += cell.metrics->coverage;
            ++avg.regions;
        }
        if (avg.regions == 0) return std::nullopt;
        avg.precision /= static_cast<double>(avg.regions);
        avg.coverage /= static_cast<double>(avg.regions);
        return avg;
    }

    bool operator==(const RunReport&) const = default;
};

/// Per-row outcomes of one cell, kept for mining.
struct CellDetail {
    std::vector<std::string> real_items;
    std::vector<std::string> real_classes;
    std::vector<std::uint8_t> real_covered;
    std::vector<std::string> generated_items;
    std::vector<std::string> generated_classes;
    std::vector<std::uint8_t> generated_inside;
};

struct RunEvaluation {
    RunReport report;
    std::map<CellKey, CellDetail> details;
};

namespace detail {

inline const std::string& group_label(const EmbeddingRecord& r, const std::string& group_by) {
    return group_by == "object_class" ? r.object_class : r.region;
}

inline void check_split(const EmbeddingSet& set, Split expected, const char* name) {
    for (const auto& r : set.records()) {
        if (r.split != expected) {
            throw Error(ErrorKind::ManifestMismatch, std::string(name) + " dataset contains a '" +
                                                         std::string(to_string(r.split)) + "' row (item " +
                                                         r.item_id + ")");
        }
    }
}

inline EmbeddingSet slice_group(const EmbeddingSet& set, const std::string& group_by, const std::string& group,
                                View view) {
    SliceQuery q;
    q.view = view;
    if (group_by == "object_class") {
        q.object_class = group;
    } else {
        q.region = group;
    }
    return slice(set, q);
}

} // namespace detail

inline RunEvaluation evaluate_run(const EmbeddingSet& real, const EmbeddingSet& generated, const RunOptions& opts) {
    if (opts.k == 0) throw Error(ErrorKind::InvalidConfig, "k must be at least 1");
    if (opts.views.empty()) throw Error(ErrorKind::InvalidConfig, "at least one view is required");
    if (opts.group_by != "region" && opts.group_by != "object_class") {
        throw Error(ErrorKind::InvalidConfig, "group_by must be 'region' or 'object_class'");
    }
    if (!real.empty() && !generated.empty() && real.dimension() != generated.dimension()) {
        throw Error(ErrorKind::DimensionMismatch, "real and generated embeddings differ in dimension (" +
                                                      std::to_string(real.dimension()) + " vs " +
                                                      std::to_string(generated.dimension()) + ")");
    }
    detail::check_split(real, Split::Real, "real");
    detail::check_split(generated, Split::Generated, "generated");

    std::set<std::string> real_groups, gen_groups;
    for (const auto& r : real.records()) real_groups.insert(detail::group_label(r, opts.group_by));
    for (const auto& r : generated.records()) gen_groups.insert(detail::group_label(r, opts.group_by));
    for (const auto& g : gen_groups) {
        if (!real_groups.count(g)) {
            throw Error(ErrorKind::RegionMismatch, "group '" + g + "' has generated items but no real items");
        }
    }

    std::map<std::string, std::size_t> generated_items;
    {
        std::map<std::string, std::set<std::string_view>> items;
        for (const auto& r : generated.records()) items[detail::group_label(r, opts.group_by)].insert(r.item_id);
        for (const auto& [g, s] : items) generated_items[g] = s.size();
    }

    RunEvaluation eval;
    auto& report = eval.report;
    report.run_id = opts.run_id;
    report.prompt_template = opts.prompt_template;
    report.k = opts.k;
    report.config.group_by = opts.group_by;
    std::set<View> view_set(opts.views.begin(), opts.views.end());
    report.config.views.assign(view_set.begin(), view_set.end());
    std::set<std::string> classes;
    for (const auto& r : real.records()) classes.insert(r.object_class);
    for (const auto& r : generated.records()) classes.insert(r.object_class);
    report.config.classes.assign(classes.begin(), classes.end());

    for (const auto& group : real_groups) {
        for (View view : report.config.views) {
            CellResult cell;
            const auto ref = detail::slice_group(real, opts.group_by, group, view);
            const auto gen = detail::slice_group(generated, opts.group_by, group, view);
            const std::size_t n_total = generated_items.count(group) ? generated_items[group] : 0;
            if (n_total == 0) {
                cell.skip_reason = "NoGenerated";
            } else if (ref.size() <= opts.k) {
                cell.skip_reason = "TooFewPoints";
            } else {
                const auto manifold = build_manifold(ref, opts.k, {opts.threads});
                const auto summary =
                    summarize_membership(manifold, gen.matrix(), {opts.threads, opts.reference_hit_counts});
                cell.metrics = metric_result(summary, n_total);
                if (opts.reference_hit_counts) {
                    for (std::size_t j = 0; j < ref.size(); ++j) {
                        cell.reference_hits.push_back({ref.record(j).item_id, summary.reference_hits[j]});
                    }
                }
                CellDetail d;
                for (const auto& r : ref.records()) {
                    d.real_items.push_back(r.item_id);
                    d.real_classes.push_back(r.object_class);
                }
                for (const auto& r : gen.records()) {
                    d.generated_items.push_back(r.item_id);
                    d.generated_classes.push_back(r.object_class);
                }
                d.real_covered = summary.reference_covered;
                d.generated_inside = summary.generated_inside;
                eval.details.emplace(CellKey{group, view}, std::move(d));
            }
            report.cells.emplace(CellKey{group, view}, std::move(cell));
        }
    }
    return eval;
}

inline RunReport compute_run(const EmbeddingSet& real, const EmbeddingSet& generated, const RunOptions& opts) {
    return evaluate_run(real, generated, opts).report;
}

// ---------------------------------------------------------------------------
// Disparity statistics

struct MetricDisparity {
    std::string worst_region;
    std::string best_region;
    double worst_value = 0.0;
    double best_value = 0.0;
    double mean = 0.0;
    double span = 0.0;
    /// best / worst; absent when the worst value is zero.
    std::optional<double> ratio;
};

struct ViewDisparity {
    View view = View::Full;
    MetricDisparity precision;
    MetricDisparity coverage;
};

struct DisparityStats {
    std::vector<ViewDisparity> views;

    const ViewDisparity* find(View v) const {
        for (const auto& d : views) {
            if (d.view == v) return &d;
        }
        return nullptr;
    }
};

namespace detail {

/// `values` must be sorted by region name; ties resolve to the first region.
inline MetricDisparity disparity_of(const std::vector<std::pair<std::string, double>>& values) {
    MetricDisparity d;
    d.worst_region = d.best_region = values.front().first;
    d.worst_value = d.best_value = values.front().second;
    double sum = 0.0;
    for (const auto& [region, v] : values) {
        if (v < d.worst_value) {
            d.worst_value = v;
            d.worst_region = region;
        }
        if (v > d.best_value) {
            d.best_value = v;
            d.best_region = region;
        }
        sum += v;
    }
    d.mean = sum / static_cast<double>(values.size());
    d.span = d.best_value - d.worst_value;
    if (d.worst_value > 0.0) d.ratio = d.best_value / d.worst_value;
    return d;
}

} // namespace detail

/// Best/worst region, mean, span and ratio of precision and coverage for each
/// view with at least two computed cells.
inline DisparityStats disparity_stats(const RunReport& report) {
    if (report.regions().size() < 2) {
        throw Error(ErrorKind::SingleRegion, "disparity statistics need at least two regions");
    }
    DisparityStats stats;
    for (View view : report.config.views) {
        std::vector<std::pair<std::string, double>> prec, cov;
        for (const auto& [key, cell] : report.cells) {
            if (key.view != view || !cell.ok()) continue;
            prec.emplace_back(key.region, cell.metrics->precision);
            cov.emplace_back(key.region, cell.metrics->coverage);
        }
        if (prec.size() < 2) continue;
        stats.views.push_back({view, detail::disparity_of(prec), detail::disparity_of(cov)});
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Failure-mode mining

enum class FailureMode { LowDiversityBackground, LowDiversityObject, LowRealismBackground };

inline constexpr std::array<FailureMode, 3> all_failure_modes{
    FailureMode::LowDiversityBackground, FailureMode::LowDiversityObject, FailureMode::LowRealismBackground};

constexpr std::string_view to_string(FailureMode m) {
    switch (m) {
    case FailureMode::LowDiversityBackground: return "low_diversity_background";
    case FailureMode::LowDiversityObject: return "low_diversity_object";
    case FailureMode::LowRealismBackground: return "low_realism_background";
    }
    return "";
}

inline std::optional<FailureMode> parse_failure_mode(std::string_view s) {
    for (auto m : all_failure_modes) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

/// Whether a real item's hypersphere holds a generated row, per view.
struct CoverageWitness {
    bool full = false;
    bool object = false;
    bool background = false;

    bool operator==(const CoverageWitness&) const = default;
};

struct FailureModeHit {
    FailureMode mode = FailureMode::LowDiversityBackground;
    /// Real item for the diversity modes, generated item for low realism.
    std::string item_id;
    std::string region;
    std::string object_class;
    /// Set for the diversity modes.
    std::optional<CoverageWitness> coverage;
    /// Low realism: whether the item's background row is inside any hypersphere.
    bool background_inside = false;

    bool operator==(const FailureModeHit&) const = default;
};

/// Background uncovered while full and object are covered, or object and full
/// uncovered while background is covered. The two predicates are exclusive.
inline std::optional<FailureMode> mine_low_diversity(const CoverageWitness& w) {
    if (w.object && w.full && !w.background) return FailureMode::LowDiversityBackground;
    if (w.background && !w.object && !w.full) return FailureMode::LowDiversityObject;
    return std::nullopt;
}

/// A generated background inside no real hypersphere.
inline bool mine_low_realism(bool background_inside) { return !background_inside; }

namespace detail {

inline void sort_hits(std::vector<FailureModeHit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const FailureModeHit& a, const FailureModeHit& b) {
        return std::tie(a.region, a.object_class, a.item_id) < std::tie(b.region, b.object_class, b.item_id);
    });
}

inline const CellDetail& require_detail(const RunEvaluation& eval, const std::string& region, View view) {
    auto it = eval.details.find({region, view});
    static const CellDetail empty;
    return it == eval.details.end() ? empty : it->second;
}

} // namespace detail

/// Every hit of `mode`, sorted by (region, object_class, item_id). Real items
/// lacking a computed row in any of the three views are not judged.
inline std::vector<FailureModeHit> mine(const RunEvaluation& eval, FailureMode mode) {
    const auto& views = eval.report.config.views;
    auto has_view = [&](View v) { return std::find(views.begin(), views.end(), v) != views.end(); };
    std::vector<FailureModeHit> hits;

    if (mode == FailureMode::LowRealismBackground) {
        if (!has_view(View::Background)) throw Error(ErrorKind::InvalidConfig, "mining needs the background view");
        for (const auto& region : eval.report.regions()) {
            const auto& d = detail::require_detail(eval, region, View::Background);
            for (std::size_t i = 0; i < d.generated_items.size(); ++i) {
                if (!mine_low_realism(d.generated_inside[i] != 0)) continue;
                hits.push_back({mode, d.generated_items[i], region, d.generated_classes[i], std::nullopt, false});
            }
        }
        detail::sort_hits(hits);
        return hits;
    }

    if (!has_view(View::Full) || !has_view(View::Object) || !has_view(View::Background)) {
        throw Error(ErrorKind::InvalidConfig, "diversity mining needs the full, object and background views");
    }
    for (const auto& region : eval.report.regions()) {
        const auto& full = detail::require_detail(eval, region, View::Full);
        const auto& object = detail::require_detail(eval, region, View::Object);
        const auto& background = detail::require_detail(eval, region, View::Background);
        std::unordered_map<std::string_view, bool> obj_cov, bg_cov;
        for (std::size_t j = 0; j < object.real_items.size(); ++j) obj_cov[object.real_items[j]] = object.real_covered[j];
        for (std::size_t j = 0; j < background.real_items.size(); ++j) {
            bg_cov[background.real_items[j]] = background.real_covered[j];
        }
        for (std::size_t j = 0; j < full.real_items.size(); ++j) {
            auto o = obj_cov.find(full.real_items[j]);
            auto b = bg_cov.find(full.real_items[j]);
            if (o == obj_cov.end() || b == bg_cov.end()) continue;
            const CoverageWitness w{full.real_covered[j] != 0, o->second, b->second};
            if (mine_low_diversity(w) == mode) {
                hits.push_back({mode, full.real_items[j], region, full.real_classes[j], w, false});
            }
        }
    }
    detail::sort_hits(hits);
    return hits;
}

/// Up to `n` hits drawn without replacement, in their original order.
inline std::vector<FailureModeHit> sample_hits(const std::vector<FailureModeHit>& hits, std::size_t n,
                                               std::uint64_t seed) {
    std::vector<FailureModeHit> out;
    std::mt19937_64 rng(seed);
    std::sample(hits.begin(), hits.end(), std::back_inserter(out), n, rng);
    return out;
}

// ---------------------------------------------------------------------------
// Run comparison

enum class ComparisonColumn { AvgPrecision, WorstPrecision, AvgCoverage, WorstCoverage };

inline constexpr std::array<ComparisonColumn, 4> all_comparison_columns{
    ComparisonColumn::AvgPrecision, ComparisonColumn::WorstPrecision, ComparisonColumn::AvgCoverage,
    ComparisonColumn::WorstCoverage};

constexpr std::string_view to_string(ComparisonColumn c) {
    switch (c) {
    case ComparisonColumn::AvgPrecision: return "avg_precision";
    case ComparisonColumn::WorstPrecision: return "worst_precision";
    case ComparisonColumn::AvgCoverage: return "avg_coverage";
    case ComparisonColumn::WorstCoverage: return "worst_coverage";
    }
    return "";
}

struct ColumnComparison {
    double original = 0.0;
    double updated = 0.0;
    double delta = 0.0;
    /// delta / original in whole percent, rounded half away from zero; absent when original is 0.
    std::optional<long> percent;
    /// Worst columns only.
    std::string original_worst_region;
    std::string updated_worst_region;
};

struct ViewComparison {
    View view = View::Full;
    std::array<ColumnComparison, 4> columns;

    const ColumnComparison& operator[](ComparisonColumn c) const { return columns[static_cast<int>(c)]; }
};

struct ComparisonTable {
    std::string original_run;
    std::string updated_run;
    std::string original_prompt_template;
    std::string updated_prompt_template;
    std::vector<ViewComparison> views;

    const ViewComparison* find(View v) const {
        for (const auto& c : views) {
            if (c.view == v) return &c;
        }
        return nullptr;
    }
};

inline long percent_change(double delta, double original) {
    return static_cast<long>(std::round(100.0 * delta / original));
}

namespace detail {

struct ColumnValue {
    double value = 0.0;
    std::string region;
};

inline std::array<ColumnValue, 4> column_values(const RunReport& report, View view) {
    auto avg = report.average(view);
    std::vector<std::pair<std::string, double>> prec, cov;
    for (const auto& [key, cell] : report.cells) {
        if (key.view != view || !cell.ok()) continue;
        prec.emplace_back(key.region, cell.metrics->precision);
        cov.emplace_back(key.region, cell.metrics->coverage);
    }
    const auto p = disparity_of(prec);
    const auto c = disparity_of(cov);
    return {{{avg->precision, ""}, {p.worst_value, p.worst_region}, {avg->coverage, ""}, {c.worst_value, c.worst_region}}};
}

} // namespace detail

/// Average and worst-region precision and coverage of two runs per view, with
/// absolute and percent deltas (new relative to original). Worst is taken per
/// column independently.
inline ComparisonTable compare_runs(const RunReport& original, const RunReport& updated) {
    auto mismatch = [](const std::string& what) { throw Error(ErrorKind::ConfigMismatch, what); };
    if (original.k != updated.k) {
        mismatch("reports use different k (" + std::to_string(original.k) + " vs " + std::to_string(updated.k) + ")");
    }
    if (original.config.views != updated.config.views) mismatch("reports cover different views");
    if (original.regions() != updated.regions()) mismatch("reports cover different regions");
    if (original.config.distance != updated.config.distance ||
        original.config.normalization != updated.config.normalization ||
        original.config.group_by != updated.config.group_by) {
        mismatch("reports use different distance, normalization or grouping");
    }

    ComparisonTable table;
    table.original_run = original.run_id;
    table.updated_run = updated.run_id;
    table.original_prompt_template = original.prompt_template;
    table.updated_prompt_template = updated.prompt_template;
    for (View view : original.config.views) {
        if (!original.average(view) || !updated.average(view)) continue;
        const auto a = detail::column_values(original, view);
        const auto b = detail::column_values(updated, view);
        ViewComparison vc;
        vc.view = view;
        for (std::size_t c = 0; c < 4; ++c) {
            auto& col = vc.columns[c];
            col.original = a[c].value;
            col.updated = b[c].value;
            col.delta = b[c].value - a[c].value;
            if (a[c].value != 0.0) col.percent = percent_change(col.delta, a[c].value);
            col.original_worst_region = a[c].region;
            col.updated_worst_region = b[c].region;
        }
        table.views.push_back(std::move(vc));
    }
    return table;
}

} // namespace ddig
