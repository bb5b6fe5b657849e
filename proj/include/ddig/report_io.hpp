#pragma once

// JSON / CSV / JSONL encodings of run reports, comparison tables, disparity
// statistics and mined failure-mode hits.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ddig/analysis.hpp"
#include "ddig/embedstore.hpp"
#include "ddig/error.hpp"

namespace ddig {

using ojson = nlohmann::ordered_json;

inline ojson to_json(const MetricDisparity& d) {
    ojson j;
    j["worst_region"] = d.worst_region;
    j["worst_value"] = d.worst_value;
    j["best_region"] = d.best_region;
    j["best_value"] = d.best_value;
    j["mean"] = d.mean;
    j["span"] = d.span;
    j["ratio"] = d.ratio ? ojson(*d.ratio) : ojson(nullptr);
    return j;
}

inline ojson to_json(const DisparityStats& stats) {
    ojson out = ojson::array();
    for (const auto& v : stats.views) {
        ojson j;
        j["view"] = to_string(v.view);
        j["precision"] = to_json(v.precision);
        j["coverage"] = to_json(v.coverage);
        out.push_back(std::move(j));
    }
    return out;
}

inline ojson to_json(const RunReport& report) {
    ojson j;
    j["run_id"] = report.run_id;
    j["prompt_template"] = report.prompt_template;
    j["k"] = report.k;

    ojson cfg;
    cfg["distance"] = report.config.distance;
    cfg["normalization"] = report.config.normalization;
    cfg["boundary"] = report.config.boundary;
    cfg["multi_instance_masks"] = report.config.multi_instance_masks;
    cfg["group_by"] = report.config.group_by;
    cfg["views"] = ojson::array();
    for (View v : report.config.views) cfg["views"].push_back(to_string(v));
    cfg["classes"] = report.config.classes;
    j["config"] = std::move(cfg);

    ojson cells = ojson::array();
    for (const auto& [key, cell] : report.cells) {
        ojson c;
        c["region"] = key.region;
        c["view"] = to_string(key.view);
        if (cell.ok()) {
            const auto& m = *cell.metrics;
            c["status"] = "ok";
            c["precision"] = m.precision;
            c["coverage"] = m.coverage;
            c["inside_count"] = m.inside_count;
            c["covered_count"] = m.covered_count;
            c["n_generated_total"] = m.n_generated_total;
            c["n_generated_embedded"] = m.n_generated_embedded;
            c["n_real"] = m.n_real;
            if (!cell.reference_hits.empty()) {
                ojson hits = ojson::array();
                for (const auto& h : cell.reference_hits) hits.push_back({{"item_id", h.item_id}, {"count", h.count}});
                c["reference_hits"] = std::move(hits);
            }
        } else {
            c["status"] = "skipped";
            c["reason"] = cell.skip_reason;
        }
        cells.push_back(std::move(c));
    }
    j["cells"] = std::move(cells);

    ojson averages = ojson::array();
    for (View v : report.config.views) {
        auto avg = report.average(v);
        if (!avg) continue;
        averages.push_back({{"view", to_string(v)},
                            {"precision", avg->precision},
                            {"coverage", avg->coverage},
                            {"regions", avg->regions}});
    }
    j["averages"] = std::move(averages);
    if (report.regions().size() >= 2) j["disparity"] = to_json(disparity_stats(report));
    return j;
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& what) -> void { throw Error(ErrorKind::MalformedReport, what); };
    RunReport r;
    try {
        r.run_id = j.at("run_id").get<std::string>();
        r.prompt_template = j.at("prompt_template").get<std::string>();
        r.k = j.at("k").get<std::size_t>();
        const auto& cfg = j.at("config");
        r.config.distance = cfg.at("distance").get<std::string>();
        r.config.normalization = cfg.at("normalization").get<std::string>();
        r.config.boundary = cfg.value("boundary", std::string("inclusive"));
        r.config.multi_instance_masks = cfg.value("multi_instance_masks", std::string("union"));
        r.config.group_by = cfg.at("group_by").get<std::string>();
        for (const auto& v : cfg.at("views")) {
            auto view = parse_view(v.get<std::string>());
            if (!view) fail("unknown view in report config");
            r.config.views.push_back(*view);
        }
        r.config.classes = cfg.at("classes").get<std::vector<std::string>>();
        for (const auto& c : j.at("cells")) {
            auto view = parse_view(c.at("view").get<std::string>());
            if (!view) fail("unknown view in report cell");
            CellKey key{c.at("region").get<std::string>(), *view};
            CellResult cell;
            const auto status = c.at("status").get<std::string>();
            if (status == "ok") {
                MetricResult m;
                m.precision = c.at("precision").get<double>();
                m.coverage = c.at("coverage").get<double>();
                m.inside_count = c.at("inside_count").get<std::size_t>();
                m.covered_count = c.at("covered_count").get<std::size_t>();
                m.n_generated_total = c.at("n_generated_total").get<std::size_t>();
                m.n_generated_embedded = c.at("n_generated_embedded").get<std::size_t>();
                m.n_real = c.at("n_real").get<std::size_t>();
                cell.metrics = m;
                if (c.contains("reference_hits")) {
                    for (const auto& h : c.at("reference_hits")) {
                        cell.reference_hits.push_back({h.at("item_id").get<std::string>(), h.at("count").get<std::uint32_t>()});
                    }
                }
            } else if (status == "skipped") {
                cell.skip_reason = c.at("reason").get<std::string>();
            } else {
                fail("unknown cell status '" + status + "'");
            }
            if (!r.cells.emplace(std::move(key), std::move(cell)).second) fail("duplicate (region, view) cell");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("malformed run report: ") + e.what());
    }
    return r;
}

inline RunReport read_run_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open report '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error&) {
        throw Error(ErrorKind::MalformedReport, "report '" + path.string() + "' is not valid JSON");
    }
    return run_report_from_json(j);
}

// ---------------------------------------------------------------------------
// Comparison table

inline ojson to_json(const ComparisonTable& t) {
    ojson j;
    j["original_run"] = t.original_run;
    j["new_run"] = t.updated_run;
    j["original_prompt_template"] = t.original_prompt_template;
    j["new_prompt_template"] = t.updated_prompt_template;
    ojson views = ojson::array();
    for (const auto& v : t.views) {
        ojson vj;
        vj["view"] = to_string(v.view);
        for (auto c : all_comparison_columns) {
            const auto& col = v[c];
            ojson cj;
            cj["original"] = col.original;
            cj["new"] = col.updated;
            cj["delta"] = col.delta;
            cj["delta_percent"] = col.percent ? ojson(*col.percent) : ojson(nullptr);
            if (c == ComparisonColumn::WorstPrecision || c == ComparisonColumn::WorstCoverage) {
                cj["original_worst_region"] = col.original_worst_region;
                cj["new_worst_region"] = col.updated_worst_region;
            }
            vj[std::string(to_string(c))] = std::move(cj);
        }
        views.push_back(std::move(vj));
    }
    j["views"] = std::move(views);
    return j;
}

inline std::string format_fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s(buf);
    if (s == "-0.000") s = "0.000";
    return s;
}

/// Rows Orig / New / Delta / Delta(%), one column per (view, metric), views
/// in the report's order.
inline std::string to_csv(const ComparisonTable& t) {
    static constexpr const char* column_names[] = {"avg_prec", "worst_prec", "avg_covg", "worst_covg"};
    std::ostringstream out;
    out << "row";
    for (const auto& v : t.views) {
        for (const char* name : column_names) out << ',' << to_string(v.view) << '_' << name;
    }
    out << '\n';
    auto emit = [&](const char* label, auto&& cell) {
        out << label;
        for (const auto& v : t.views) {
            for (auto c : all_comparison_columns) out << ',' << cell(v[c]);
        }
        out << '\n';
    };
    emit("Orig", [](const ColumnComparison& c) { return format_fixed3(c.original); });
    emit("New", [](const ColumnComparison& c) { return format_fixed3(c.updated); });
    emit("Delta", [](const ColumnComparison& c) { return format_fixed3(c.delta); });
    emit("Delta(%)", [](const ColumnComparison& c) { return c.percent ? std::to_string(*c.percent) : std::string(); });
    return out.str();
}

// ---------------------------------------------------------------------------
// Hits, plots, balance

inline ojson to_json(const FailureModeHit& h) {
    ojson j;
    j["mode"] = to_string(h.mode);
    j["item_id"] = h.item_id;
    j["region"] = h.region;
    j["object_class"] = h.object_class;
    if (h.coverage) {
        j["witness"] = {{"full", h.coverage->full}, {"object", h.coverage->object}, {"background", h.coverage->background}};
    } else {
        j["witness"] = {{"generated_item_id", h.item_id}, {"background_inside", h.background_inside}};
    }
    return j;
}

inline std::string to_jsonl(const std::vector<FailureModeHit>& hits) {
    std::string out;
    for (const auto& h : hits) out += to_json(h).dump() + '\n';
    return out;
}

/// region,view,precision,coverage per computed cell: one series per view.
inline std::string plot_csv(const RunReport& report) {
    std::ostringstream out;
    out << "region,view,precision,coverage\n";
    char buf[64];
    for (const auto& [key, cell] : report.cells) {
        if (!cell.ok()) continue;
        out << key.region << ',' << to_string(key.view);
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", cell.metrics->precision, cell.metrics->coverage);
        out << buf;
    }
    return out.str();
}

inline ojson to_json(const std::vector<BalanceDeficit>& deficits, std::size_t min_per_cell) {
    ojson j;
    j["min_per_cell"] = min_per_cell;
    j["balanced"] = deficits.empty();
    ojson list = ojson::array();
    for (const auto& d : deficits) list.push_back({{"region", d.region}, {"object_class", d.object_class}, {"count", d.count}});
    j["deficits"] = std::move(list);
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw Error(ErrorKind::IoFailure, "write to '" + path.string() + "' failed");
}

} // namespace ddig
