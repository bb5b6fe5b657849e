// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any selected criterion fails.
//
//   acceptance [--only NAME]... [--skip NAME]...

#include <sys/resource.h>

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "testing.hpp"

using namespace ddig;
using ddig::support::Rng;
using ddig::support::SetBuilder;
using ddig::support::Texture;

namespace {

// Tolerances and sizes.
constexpr std::size_t oracle_instances = 1000;
constexpr std::size_t oracle_max_rows = 200;
constexpr std::size_t oracle_max_dim = 16;
constexpr std::size_t identity_instances = 300;
constexpr std::size_t invariance_instances = 100;
constexpr std::size_t counting_instances = 200;
constexpr double disparity_target = 2.0;
constexpr double disparity_tolerance = 0.15;
constexpr double object_ratio_limit = 1.3;
constexpr std::uint64_t disparity_seeds[] = {1, 2, 3, 4, 5};
constexpr std::size_t mining_instances = 30;
constexpr std::size_t partition_random_masks = 2000;
constexpr std::size_t roundtrip_rows = 10000;
constexpr std::size_t roundtrip_dim = 768;
constexpr std::size_t perf_rows = 30000;
constexpr std::size_t perf_dim = 768;
constexpr double perf_limit_seconds = 600.0;
constexpr double perf_rss_limit_mb = 2048.0;

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Check {
  public:
    void require(bool ok, const std::string& what) {
        if (!ok && first_failure_.empty()) first_failure_ = what;
        pass_ = pass_ && ok;
    }
    Outcome done(const std::string& summary) const {
        return {pass_, pass_ ? summary : summary + "; first failure: " + first_failure_};
    }

  private:
    bool pass_ = true;
    std::string first_failure_;
};

MatrixView view_of(const std::vector<float>& v, std::size_t d) { return {v, v.size() / d, d}; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
    Rng rng(0xA11CE);
    Check check;
    std::size_t pairs = 0;
    for (std::size_t t = 0; t < oracle_instances; ++t) {
        const std::size_t k = std::array<std::size_t, 3>{1, 3, 5}[rng.index(3)];
        const std::size_t d = 1 + rng.index(oracle_max_dim);
        const std::size_t n_ref = k + 1 + rng.index(oracle_max_rows - k);
        const std::size_t n_gen = 1 + rng.index(oracle_max_rows);
        const std::size_t n_total = n_gen + (rng.chance(0.3) ? rng.index(n_gen) : 0);
        const auto tex = support::random_texture(rng);
        const auto ref = support::random_rows(rng, n_ref, d, tex);
        auto gen = support::random_rows(rng, n_gen, d, tex);
        // Some generated rows copy reference rows so zero distances occur.
        for (std::size_t i = 0; i < n_gen; ++i) {
            if (rng.chance(0.1)) {
                const std::size_t j = rng.index(n_ref);
                std::copy_n(ref.begin() + static_cast<std::ptrdiff_t>(j * d), d, gen.begin() + static_cast<std::ptrdiff_t>(i * d));
            }
        }
        const unsigned threads = 1 + static_cast<unsigned>(rng.index(4));
        const auto o = oracle::brute_force_oracle(ref, gen, d, k, n_total);
        const auto m = build_manifold(view_of(ref, d), k, {threads});
        const auto mm = membership(m, view_of(gen, d), {threads});
        bool same = true;
        for (std::size_t j = 0; j < n_ref && same; ++j) {
            for (std::size_t i = 0; i < n_gen; ++i) same = same && mm.contains(j, i) == o.membership[j][i];
        }
        pairs += n_ref * n_gen;
        const auto r = evaluate(m, view_of(gen, d), n_total, {threads});
        const std::string tag = "instance " + std::to_string(t);
        check.require(same, tag + ": membership differs");
        check.require(r.precision == o.precision, tag + ": precision differs");
        check.require(r.coverage == o.coverage, tag + ": coverage differs");
        check.require(std::equal(m.squared_radii().begin(), m.squared_radii().end(), o.squared_radii.begin()),
                      tag + ": radii differ");
    }
    return check.done(std::to_string(oracle_instances) + " instances, " + std::to_string(pairs) +
                      " membership entries identical; precision/coverage exactly equal");
}

Outcome identity() {
    Rng rng(0x1D);
    Check check;
    for (std::size_t t = 0; t < identity_instances; ++t) {
        const std::size_t k = std::array<std::size_t, 3>{1, 3, 5}[rng.index(3)];
        const std::size_t d = 1 + rng.index(32);
        const std::size_t n = k + 1 + rng.index(300);
        const auto x = support::random_rows(rng, n, d, support::random_texture(rng));
        const auto r = evaluate(build_manifold(view_of(x, d), k), view_of(x, d), n);
        check.require(r.precision == 1.0 && r.coverage == 1.0, "instance " + std::to_string(t));
    }
    return check.done(std::to_string(identity_instances) + " random D: precision(D,D) = coverage(D,D) = 1 exactly");
}

Outcome invariance() {
    Rng rng(0x5CA1E);
    Check check;
    auto metrics = [](const std::vector<float>& ref, const std::vector<float>& gen, std::size_t d, std::size_t k) {
        const auto r = evaluate(build_manifold(view_of(ref, d), k), view_of(gen, d), gen.size() / d);
        return std::pair{r.precision, r.coverage};
    };
    for (std::size_t t = 0; t < invariance_instances; ++t) {
        const std::string tag = "instance " + std::to_string(t);
        const std::size_t k = std::array<std::size_t, 3>{1, 3, 5}[rng.index(3)];
        const std::size_t d = 1 + rng.index(16);
        const std::size_t n = k + 1 + rng.index(150), g = 1 + rng.index(150);

        // Lattice-valued data: power-of-two scaling and lattice translation are exact.
        const auto ref = support::random_rows(rng, n, d, Texture::Quantized);
        const auto gen = support::random_rows(rng, g, d, Texture::Quantized);
        const auto base = metrics(ref, gen, d, k);

        const float scale = std::ldexp(1.0f, static_cast<int>(rng.integer(-6, 6)));
        auto sref = ref, sgen = gen;
        for (auto& v : sref) v *= scale;
        for (auto& v : sgen) v *= scale;
        check.require(metrics(sref, sgen, d, k) == base, tag + ": power-of-two scaling");

        std::vector<float> shift(d);
        for (auto& s : shift) s = static_cast<float>(rng.integer(-8192, 8192)) / 1024.0f;
        auto tref = ref, tgen = gen;
        for (std::size_t i = 0; i < tref.size(); ++i) tref[i] += shift[i % d];
        for (std::size_t i = 0; i < tgen.size(); ++i) tgen[i] += shift[i % d];
        check.require(metrics(tref, tgen, d, k) == base, tag + ": translation");

        auto permute = [&](const std::vector<float>& rows) {
            std::vector<std::size_t> order(rows.size() / d);
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);
            std::vector<float> out;
            for (auto i : order) out.insert(out.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * d),
                                            rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
            return out;
        };
        check.require(metrics(permute(ref), permute(gen), d, k) == base, tag + ": permutation");

        // Generic real-valued data under an arbitrary positive scale.
        const auto cref = support::random_rows(rng, n, d, Texture::Continuous);
        const auto cgen = support::random_rows(rng, g, d, Texture::Continuous);
        const auto cbase = metrics(cref, cgen, d, k);
        const float c = static_cast<float>(rng.uniform(0.05, 20.0));
        auto aref = cref, agen = cgen;
        for (auto& v : aref) v *= c;
        for (auto& v : agen) v *= c;
        check.require(metrics(aref, agen, d, k) == cbase, tag + ": arbitrary scale " + std::to_string(c));
    }
    return check.done(std::to_string(invariance_instances) +
                      " instances: scaling (2^e on lattice data, arbitrary c on generic data), translation and "
                      "permutation leave precision and coverage bit-identical");
}

Outcome counting_rule() {
    Rng rng(0xC0DE);
    Check check;
    for (std::size_t t = 0; t < counting_instances; ++t) {
        const std::string tag = "instance " + std::to_string(t);
        const std::size_t d = 1 + rng.index(8);
        const std::size_t n_real = 4 + rng.index(60), n_gen = 1 + rng.index(60);
        const double flag_rate = rng.uniform(0.0, 0.9);
        SetBuilder real(d, Split::Real), gen(d, Split::Generated);
        std::vector<std::vector<float>> real_rows;
        for (std::size_t j = 0; j < n_real; ++j) {
            for (View v : all_views) {
                real_rows.push_back(support::random_rows(rng, 1, d, Texture::Continuous));
                real.add("r" + std::to_string(j), "R", "c", v, real_rows.back());
            }
        }
        std::size_t unsegmented = 0;
        for (std::size_t i = 0; i < n_gen; ++i) {
            const bool seg = !rng.chance(flag_rate);
            unsegmented += !seg;
            for (View v : all_views) {
                if (v == View::Object && !seg) continue;
                // Half of the rows copy a real row, so many land inside.
                const auto x = rng.chance(0.5) ? support::random_rows(rng, 1, d, Texture::Continuous)
                                               : real_rows[rng.index(real_rows.size())];
                gen.add("g" + std::to_string(i), "R", "c", v, x, seg);
            }
        }
        const auto rs = real.build();
        const auto gs = gen.build();
        const auto report = compute_run(rs, gs, {});
        const auto* obj = report.metrics("R", View::Object);
        if (!obj) {
            check.require(false, tag + ": object cell missing");
            continue;
        }
        const double f = static_cast<double>(unsegmented) / static_cast<double>(n_gen);
        check.require(obj->n_generated_total == n_gen, tag + ": denominator");
        check.require(obj->n_generated_embedded == n_gen - unsegmented, tag + ": embedded rows");
        check.require(obj->precision <= 1.0 - f + 1e-15, tag + ": precision > 1 - f");
        check.require(obj->precision == static_cast<double>(obj->inside_count) / static_cast<double>(n_gen),
                      tag + ": precision != inside / n_total");
        SliceQuery q;
        q.view = View::Object;
        const auto o = support::oracle_for(slice(rs, q), slice(gs, q), 3, n_gen);
        check.require(o.precision == obj->precision && o.inside_count == obj->inside_count, tag + ": oracle");
    }

    // Constructed: 10 embedded rows, 6 inside, 5 items without a row: 6/15.
    std::vector<float> ref, gen;
    for (int j = 0; j < 8; ++j) ref.insert(ref.end(), {static_cast<float>(j), 0.0f});
    for (int i = 0; i < 6; ++i) gen.insert(gen.end(), {static_cast<float>(i), 0.0f});
    for (int i = 0; i < 4; ++i) gen.insert(gen.end(), {60.0f + static_cast<float>(i), 60.0f});
    const auto r = evaluate(build_manifold(view_of(ref, 2), 3), view_of(gen, 2), 15);
    check.require(r.inside_count == 6 && r.precision == 6.0 / 15.0, "constructed 6/15 fixture");
    return check.done(std::to_string(counting_instances) +
                      " instances with flagged items: object precision <= 1 - f and = inside/n_total exactly; "
                      "constructed fixture 6/15 = 0.4");
}

Outcome disparity() {
    Check check;
    std::ostringstream values;
    for (auto seed : disparity_seeds) {
        const auto data = support::mode_dropping_fixture(seed);
        const auto report = compute_run(data.real, data.generated, {});
        // Every cell is re-derived by the oracle.
        for (const auto& [key, cell] : report.cells) {
            SliceQuery q;
            q.view = key.view;
            q.region = key.region;
            const auto g = slice(data.generated, q);
            const auto o = support::oracle_for(slice(data.real, q), g, 3, g.size());
            check.require(cell.ok() && cell.metrics->coverage == o.coverage && cell.metrics->precision == o.precision,
                          "seed " + std::to_string(seed) + ": oracle mismatch");
        }
        const auto stats = disparity_stats(report);
        const auto& bg = stats.find(View::Background)->coverage;
        const auto& obj = stats.find(View::Object)->coverage;
        const double bg_ratio = bg.ratio.value_or(0.0), obj_ratio = obj.ratio.value_or(1e9);
        check.require(std::abs(bg_ratio - disparity_target) <= disparity_tolerance && bg.worst_region == "B",
                      "seed " + std::to_string(seed) + ": background ratio " + fmt("%.3f", bg_ratio));
        check.require(obj_ratio <= object_ratio_limit, "seed " + std::to_string(seed) + ": object ratio " +
                                                           fmt("%.3f", obj_ratio));
        check.require(bg.span > obj.span, "seed " + std::to_string(seed) + ": span ordering");
        values << (values.tellp() > 0 ? ", " : "") << fmt("%.3f", bg_ratio) << "/" << fmt("%.3f", obj_ratio);
    }
    return check.done("background/object coverage ratio best/worst per seed: " + values.str() + " (target " +
                      fmt("%.2f", disparity_target) + " +- " + fmt("%.2f", disparity_tolerance) + ", object <= " +
                      fmt("%.1f", object_ratio_limit) + ")");
}

Outcome comparison_arithmetic() {
    struct Printed {
        double orig[4], upd[4];
        const char* delta[4];
        long percent[4];
    };
    // Columns: avg precision, worst precision, avg coverage, worst coverage.
    const Printed obj{{0.617, 0.564, 0.377, 0.352}, {0.665, 0.609, 0.390, 0.344},
                        {"0.048", "0.045", "0.013", "-0.008"}, {8, 8, 3, -2}};
    const Printed bg{{0.481, 0.363, 0.383, 0.278}, {0.466, 0.389, 0.461, 0.423},
                       {"-0.015", "0.026", "0.078", "0.145"}, {-3, 7, 20, 52}};

    // Two regions per view whose mean is the printed average and whose
    // minimum is the printed worst value.
    auto seeded = [&](bool updated) {
        RunReport r;
        r.config.views = {View::Object, View::Background};
        for (const auto& [view, pub] : {std::pair{View::Object, obj}, std::pair{View::Background, bg}}) {
            const double* v = updated ? pub.upd : pub.orig;
            MetricResult worst, other;
            worst.precision = v[1];
            worst.coverage = v[3];
            other.precision = 2 * v[0] - v[1];
            other.coverage = 2 * v[2] - v[3];
            r.cells[{"Africa", view}].metrics = worst;
            r.cells[{"SoutheastAsia", view}].metrics = other;
        }
        return run_report_from_json(nlohmann::json::parse(to_json(r).dump()));
    };
    const auto table = compare_runs(seeded(false), seeded(true));
    Check check;
    for (const auto& [view, pub] : {std::pair{View::Object, obj}, std::pair{View::Background, bg}}) {
        const auto* vc = table.find(view);
        if (!vc) {
            check.require(false, "missing view");
            continue;
        }
        for (std::size_t c = 0; c < 4; ++c) {
            const auto& col = vc->columns[c];
            const std::string tag = std::string(to_string(view)) + " " + std::string(to_string(all_comparison_columns[c]));
            check.require(format_fixed3(col.original) == format_fixed3(pub.orig[c]), tag + ": original");
            check.require(format_fixed3(col.updated) == format_fixed3(pub.upd[c]), tag + ": new");
            check.require(format_fixed3(col.delta) == pub.delta[c], tag + ": delta " + format_fixed3(col.delta));
            check.require(col.percent == pub.percent[c], tag + ": percent");
        }
    }
    const auto& wc = (*table.find(View::Background))[ComparisonColumn::WorstCoverage];
    const auto& ac = (*table.find(View::Background))[ComparisonColumn::AvgCoverage];
    const auto csv = to_csv(table);
    check.require(csv.find("Delta(%),8,8,3,-2,-3,7,20,52\n") != std::string::npos, "CSV percent row");
    return check.done("background worst coverage 0.278 -> 0.423: delta " + format_fixed3(wc.delta) + ", +" +
                      std::to_string(*wc.percent) + "%; average coverage 0.383 -> 0.461: delta " +
                      format_fixed3(ac.delta) + ", +" + std::to_string(*ac.percent) +
                      "%; all 16 printed deltas and percents reproduced");
}

Outcome failure_mode_mining() {
    Check check;
    Rng rng(0xF1);
    std::size_t planted = 0, checked_regions = 0, oracle_hits = 0;
    const std::vector<std::string> names{"Africa", "Americas", "EastAsia", "Europe", "SoutheastAsia", "WestAsia"};
    for (std::size_t t = 0; t < mining_instances; ++t) {
        std::vector<std::string> regions(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(1 + rng.index(6)));
        const auto fx = support::planted_fixture(regions, rng.next());
        const auto eval = evaluate_run(fx.data.real, fx.data.generated, {});
        auto as_map = [](const std::vector<FailureModeHit>& hits) {
            std::map<std::string, std::vector<std::string>> m;
            for (const auto& h : hits) m[h.region].push_back(h.item_id);
            return m;
        };
        const auto ldb = mine(eval, FailureMode::LowDiversityBackground);
        const auto ldo = mine(eval, FailureMode::LowDiversityObject);
        const auto lr = mine(eval, FailureMode::LowRealismBackground);
        const std::string tag = "instance " + std::to_string(t);
        check.require(as_map(ldb) == fx.truth.low_diversity_background, tag + ": low_diversity_background");
        check.require(as_map(ldo) == fx.truth.low_diversity_object, tag + ": low_diversity_object");
        check.require(as_map(lr) == fx.truth.low_realism_background, tag + ": low_realism_background");
        planted += 3 * regions.size();
        for (const auto& h : ldb) check.require(mine_low_diversity(*h.coverage) == h.mode, tag + ": witness");
        for (const auto& h : ldo) check.require(mine_low_diversity(*h.coverage) == h.mode, tag + ": witness");
    }

    // Unplanted data: every hit and non-hit re-derived from oracle membership.
    for (std::size_t t = 0; t < 10; ++t) {
        const auto data = support::mode_dropping_fixture(rng.next(), {3, 4, 10, 50, 1.2, 4.0, 2});
        const auto eval = evaluate_run(data.real, data.generated, {});
        std::map<FailureMode, std::set<std::string>> expected;
        for (const auto& region : eval.report.regions()) {
            std::map<View, oracle::Result> o;
            std::map<View, EmbeddingSet> refs, gens;
            for (View v : all_views) {
                SliceQuery q;
                q.view = v;
                q.region = region;
                refs[v] = slice(data.real, q);
                gens[v] = slice(data.generated, q);
                o[v] = support::oracle_for(refs[v], gens[v], 3, gens[v].size());
            }
            for (std::size_t j = 0; j < refs[View::Full].size(); ++j) {
                const CoverageWitness w{o[View::Full].reference_covered[j], o[View::Object].reference_covered[j],
                                        o[View::Background].reference_covered[j]};
                if (auto m = mine_low_diversity(w)) expected[*m].insert(refs[View::Full].record(j).item_id);
            }
            for (std::size_t i = 0; i < gens[View::Background].size(); ++i) {
                if (!o[View::Background].generated_inside[i]) {
                    expected[FailureMode::LowRealismBackground].insert(gens[View::Background].record(i).item_id);
                }
            }
            // Count consistency against the reported precision.
            const auto* m = eval.report.metrics(region, View::Background);
            const auto hits = mine(eval, FailureMode::LowRealismBackground);
            const auto n = static_cast<std::size_t>(
                std::count_if(hits.begin(), hits.end(), [&](const auto& h) { return h.region == region; }));
            const double predicted = static_cast<double>(m->n_generated_total) * (1.0 - m->precision);
            check.require(n == m->n_generated_total - m->inside_count && std::abs(predicted - double(n)) < 1e-9,
                          "region " + region + ": low realism count");
            ++checked_regions;
        }
        for (auto mode : all_failure_modes) {
            std::set<std::string> got;
            for (const auto& h : mine(eval, mode)) got.insert(h.item_id);
            oracle_hits += expected[mode].size();
            check.require(got == expected[mode], "oracle instance " + std::to_string(t) + ": " +
                                                     std::string(to_string(mode)));
        }
    }
    return check.done(std::to_string(planted) + " planted items recovered with 0 false positives/negatives over " +
                      std::to_string(mining_instances) + " fixtures; " + std::to_string(oracle_hits) +
                      " oracle-derived hits matched on 10 random datasets; low realism count = n_gen x (1 - precision_bg) in " +
                      std::to_string(checked_regions) + " regions");
}

Outcome patch_partition() {
    Check check;
    Rng rng(0xBA7C4);
    // Independent formulation: patch (r, c) is object iff some destination
    // pixel in it samples a 255 source pixel, with the source pixel chosen by
    // floor((x + 0.5) * src / dst) in double arithmetic.
    auto oracle = [](const PixelMask& m, std::size_t image, std::size_t patch) {
        const std::size_t grid = image / patch;
        std::vector<std::vector<bool>> obj(grid, std::vector<bool>(grid, false));
        for (std::size_t y = 0; y < image; ++y) {
            const auto sy = static_cast<std::size_t>(std::floor((double(y) + 0.5) * double(m.height) / double(image)));
            for (std::size_t x = 0; x < image; ++x) {
                const auto sx = static_cast<std::size_t>(std::floor((double(x) + 0.5) * double(m.width) / double(image)));
                if (m.data[sy * m.width + sx] == 255) obj[y / patch][x / patch] = true;
            }
        }
        return obj;
    };
    for (std::size_t t = 0; t < partition_random_masks; ++t) {
        const std::size_t w = 1 + rng.index(500), h = 1 + rng.index(500);
        auto m = PixelMask::filled(w, h, 0);
        const double density = std::array<double, 4>{0.0, 0.0002, 0.01, 0.5}[rng.index(4)];
        for (auto& v : m.data) v = rng.chance(density) ? 255 : 0;
        const auto p = partition_mask(m);
        const auto obj = p.object_patches(), bg = p.background_patches();
        std::vector<Patch> all(obj);
        all.insert(all.end(), bg.begin(), bg.end());
        std::sort(all.begin(), all.end());
        bool tiles = all.size() == 196;
        for (std::size_t i = 0; tiles && i < all.size(); ++i) tiles = all[i] == Patch{i / 14, i % 14};
        check.require(tiles, "mask " + std::to_string(t) + ": object and background do not tile the 14x14 grid");
        const auto expected = oracle(m, 224, 16);
        bool same = true;
        for (std::size_t r = 0; r < 14; ++r) {
            for (std::size_t c = 0; c < 14; ++c) same = same && p.is_object(r, c) == expected[r][c];
        }
        check.require(same, "mask " + std::to_string(t) + ": differs from independent rule");
    }
    // Every single-pixel 224x224 mask.
    auto m = PixelMask::filled(224, 224, 0);
    for (std::size_t y = 0; y < 224; ++y) {
        for (std::size_t x = 0; x < 224; ++x) {
            m.set(x, y, 255);
            const auto p = partition_mask(m);
            check.require(p.object_patches() == std::vector<Patch>{{y / 16, x / 16}} &&
                              p.background_patches().size() == 195,
                          "single pixel (" + std::to_string(x) + ", " + std::to_string(y) + ")");
            m.set(x, y, 0);
        }
    }
    const auto zero = partition_mask(PixelMask::filled(224, 224, 0));
    const auto one = partition_mask(PixelMask::filled(224, 224, 255));
    check.require(zero.object_count() == 0 && zero.background_patches().size() == 196, "all-zero mask");
    check.require(one.object_count() == 196 && one.background_patches().empty(), "all-one mask");
    check.require(to_attention_spec(zero, MaskedView::Object).zeroed.size() == 196, "all-zero object spec");
    return check.done(std::to_string(partition_random_masks) +
                      " random masks tile the 14x14 grid and match an independent rule; all 50176 single-pixel "
                      "masks give one object patch and 195 background; all-zero 0/196, all-one 196/0");
}

Outcome format_round_trip() {
    Check check;
    Rng rng(0xF00D);
    std::vector<float> values(roundtrip_rows * roundtrip_dim);
    std::size_t specials = 0;
    for (auto& v : values) {
        // Arbitrary finite bit patterns, including subnormals and negative zero.
        float f;
        do {
            f = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next()));
        } while (!std::isfinite(f));
        if (rng.chance(0.001)) f = -0.0f;
        specials += f == 0.0f || std::fpclassify(f) == FP_SUBNORMAL;
        v = f;
    }
    support::TempDir dir;
    const auto path = dir.path() / "big.ddig";
    write_feature_matrix(path, roundtrip_dim, roundtrip_rows, values);
    const auto size = std::filesystem::file_size(path);
    check.require(size == feature_header_size + roundtrip_rows * roundtrip_dim * 4, "file size");
    const auto back = read_feature_matrix(path);
    check.require(back.rows == roundtrip_rows && back.dimension == roundtrip_dim, "header");
    check.require(back.values.size() == values.size() &&
                      std::memcmp(back.values.data(), values.data(), values.size() * sizeof(float)) == 0,
                  "payload not bit-identical");

    // Same data through the manifest + view-file dataset path.
    SetBuilder b(roundtrip_dim, Split::Real);
    for (std::size_t i = 0; i < roundtrip_rows; ++i) {
        b.add("item" + std::to_string(i), "R", "c", View::Full,
              std::span<const float>(values).subspan(i * roundtrip_dim, roundtrip_dim));
    }
    const auto set = b.build();
    const auto paths = DatasetPaths::from_prefix(dir.prefix("set"));
    write_embedding_file(set, paths);
    check.require(read_embedding_file(paths) == set, "dataset round trip");

    std::filesystem::resize_file(path, size - 1);
    std::string caught;
    try {
        read_feature_matrix(path);
    } catch (const Error& e) {
        caught = std::string(to_string(e.kind()));
    }
    check.require(caught == "TruncatedPayload", "1-byte truncation not detected (" + caught + ")");
    return check.done(std::to_string(roundtrip_rows) + " x " + std::to_string(roundtrip_dim) + " (" +
                      std::to_string(size) + " bytes, " + std::to_string(specials) +
                      " zero/subnormal values) round-trips bit-identically; 1-byte truncation -> " + caught);
}

double peak_rss_mb() {
    rusage u{};
    getrusage(RUSAGE_SELF, &u);
    return static_cast<double>(u.ru_maxrss) / 1024.0;
}

Outcome performance() {
    Rng rng(0x9E7F);
    // Clustered rows: 300 centres, real and generated rows drawn around them.
    const std::size_t centres = 300;
    std::vector<float> centre(centres * perf_dim);
    for (auto& v : centre) v = static_cast<float>(rng.normal() * 4.0);
    auto draw = [&](std::size_t n) {
        std::vector<float> out(n * perf_dim);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng.index(centres);
            for (std::size_t k = 0; k < perf_dim; ++k) {
                out[i * perf_dim + k] = centre[c * perf_dim + k] + static_cast<float>(rng.normal());
            }
        }
        return out;
    };
    const auto real_rows = draw(perf_rows);
    const auto gen_rows = draw(perf_rows);
    const double rss_before = peak_rss_mb();

    const auto t0 = std::chrono::steady_clock::now();
    const auto m = build_manifold(view_of(real_rows, perf_dim), default_k);
    const auto t1 = std::chrono::steady_clock::now();
    const auto r = evaluate(m, view_of(gen_rows, perf_dim), perf_rows);
    const auto t2 = std::chrono::steady_clock::now();

    const double build_s = std::chrono::duration<double>(t1 - t0).count();
    const double member_s = std::chrono::duration<double>(t2 - t1).count();
    const double total = build_s + member_s;
    const double rss = peak_rss_mb();
    Check check;
    check.require(total < perf_limit_seconds, "took " + fmt("%.1f", total) + " s");
    check.require(rss < perf_rss_limit_mb, "peak RSS " + fmt("%.0f", rss) + " MB");
    return check.done(std::to_string(perf_rows) + " x " + std::to_string(perf_rows) + " at d=" +
                      std::to_string(perf_dim) + " on " + std::to_string(detail::resolve_threads(0)) +
                      " thread(s): manifold " + fmt("%.1f", build_s) + " s + membership " + fmt("%.1f", member_s) +
                      " s = " + fmt("%.1f", total) + " s (limit " + fmt("%.0f", perf_limit_seconds) +
                      " s); peak RSS " + fmt("%.0f", rss) + " MB (inputs " + fmt("%.0f", rss_before) +
                      " MB, limit " + fmt("%.0f", perf_rss_limit_mb) + " MB); precision " +
                      fmt("%.4f", r.precision) + ", coverage " + fmt("%.4f", r.coverage));
}

struct Criterion {
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<std::string> only, skip;
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("--skip", skip, "Skip these criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {"oracle_equivalence", oracle_equivalence}, {"identity", identity},
        {"invariance", invariance},                 {"counting_rule", counting_rule},
        {"disparity", disparity},                   {"comparison_arithmetic", comparison_arithmetic},
        {"failure_mode_mining", failure_mode_mining}, {"patch_partition", patch_partition},
        {"format_round_trip", format_round_trip},   {"performance", performance},
    };
    auto listed = [](const std::vector<std::string>& v, const char* name) {
        return std::find(v.begin(), v.end(), name) != v.end();
    };
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !listed(only, c.name)) continue;
        if (listed(skip, c.name)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << fmt("%.1f", s) << " s): " << o.detail
                  << std::endl;
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
