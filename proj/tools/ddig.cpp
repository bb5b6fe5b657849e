// ddig: decomposed precision/coverage evaluation from the command line.
//
//   ddig compute   --real PREFIX --generated PREFIX [--k 3] [--views ...] --out report.json
//   ddig mine      --real PREFIX --generated PREFIX --mode MODE --out hits.jsonl
//   ddig compare   ORIGINAL.json NEW.json --out PREFIX      (PREFIX.csv + PREFIX.json)
//   ddig partition MASK.pgm --view object|background --out spec.json
//   ddig validate  PREFIX [--min-per-cell 170]
//
// A dataset PREFIX names PREFIX.manifest.jsonl plus PREFIX.{full,object,background}.ddig.
// Exit codes: 0 success, 2 usage/config, 3 data format, 4 computation.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddig/ddig.hpp"

namespace {

using ddig::Error;
using ddig::ErrorKind;
using ddig::ExitCode;

struct DatasetArgs {
    std::string real;
    std::string generated;
    std::size_t k = ddig::default_k;
    std::string views = "full,object,background";
    std::string group_by = "region";
    unsigned threads = 0;
};

void add_dataset_options(CLI::App& cmd, DatasetArgs& args) {
    cmd.add_option("--real", args.real, "Real dataset prefix")->required();
    cmd.add_option("--generated", args.generated, "Generated dataset prefix")->required();
    cmd.add_option("--k", args.k, "Neighbour rank defining hypersphere radii")->capture_default_str();
    cmd.add_option("--views", args.views, "Comma-separated subset of full,object,background")->capture_default_str();
    cmd.add_option("--group-by", args.group_by, "Manifest key to disaggregate by (region|object_class)")
        ->capture_default_str();
    cmd.add_option("--threads", args.threads, "Worker threads (0 = all cores)");
}

std::vector<ddig::View> parse_views(const std::string& text) {
    std::vector<ddig::View> views;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto v = ddig::parse_view(item);
        if (!v) throw Error(ErrorKind::InvalidConfig, "unknown view '" + item + "'");
        views.push_back(*v);
    }
    if (views.empty()) throw Error(ErrorKind::InvalidConfig, "--views must name at least one view");
    return views;
}

ddig::EmbeddingSet load_dataset(const std::string& prefix) {
    const auto paths = ddig::DatasetPaths::from_prefix(prefix);
    if (!std::filesystem::exists(paths.manifest)) {
        throw Error(ErrorKind::ManifestMismatch, "manifest '" + paths.manifest.string() + "' not found",
                    ExitCode::Usage);
    }
    return ddig::read_embedding_file(paths);
}

ddig::RunOptions run_options(const DatasetArgs& args) {
    if (args.k < 1) throw Error(ErrorKind::InvalidConfig, "--k must be at least 1");
    if (args.group_by != "region" && args.group_by != "object_class") {
        throw Error(ErrorKind::InvalidConfig, "--group-by must be region or object_class");
    }
    ddig::RunOptions opts;
    opts.k = args.k;
    opts.views = parse_views(args.views);
    opts.group_by = args.group_by;
    opts.threads = args.threads;
    return opts;
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        ddig::write_text_file(out_path, text);
    }
}

void print_error(std::string_view kind, int exit_code, const std::string& message) {
    nlohmann::ordered_json j;
    j["error"] = kind;
    j["exit_code"] = exit_code;
    j["message"] = message;
    std::cerr << j.dump() << std::endl;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decomposed precision/coverage evaluation of generated-image embeddings"};
    app.require_subcommand(1);

    DatasetArgs compute_args;
    std::string compute_out, run_id, prompt_template, plot_out;
    bool reference_counts = false;
    auto* compute = app.add_subcommand("compute", "Per-region, per-view precision and coverage report");
    add_dataset_options(*compute, compute_args);
    compute->add_option("--out", compute_out, "Report JSON path (stdout if omitted)");
    compute->add_option("--run-id", run_id, "Identifier stored in the report");
    compute->add_option("--prompt-template", prompt_template, "Prompt template the generations used");
    compute->add_option("--plot", plot_out, "Also write region,view,precision,coverage CSV here");
    compute->add_flag("--reference-counts", reference_counts, "Record generated rows per reference hypersphere");

    DatasetArgs mine_args;
    std::string mine_out, mode_text;
    std::uint64_t seed = 0;
    std::size_t sample = 0;
    auto* mine = app.add_subcommand("mine", "Failure-mode hits as JSON Lines");
    add_dataset_options(*mine, mine_args);
    mine->add_option("--mode", mode_text,
                     "low_diversity_background | low_diversity_object | low_realism_background | all")
        ->required();
    mine->add_option("--out", mine_out, "Hits JSONL path (stdout if omitted)");
    mine->add_option("--seed", seed, "Seed for --sample")->capture_default_str();
    mine->add_option("--sample", sample, "Emit a seeded random subset of this many hits per mode");

    std::string report_a, report_b, compare_out;
    auto* compare = app.add_subcommand("compare", "Orig/New/Delta/Delta% table of two reports");
    compare->add_option("original", report_a, "Original run report")->required();
    compare->add_option("new", report_b, "New run report")->required();
    compare->add_option("--out", compare_out, "Output prefix for .csv and .json (CSV to stdout if omitted)");

    std::string mask_path, view_text = "object", spec_out;
    std::size_t image_size = ddig::default_image_size, patch_size = ddig::default_patch_size;
    auto* partition = app.add_subcommand("partition", "Attention mask spec for a binary PGM mask");
    partition->add_option("mask", mask_path, "Binary PGM (P5) mask")->required();
    partition->add_option("--image-size", image_size, "Extractor input resolution")->capture_default_str();
    partition->add_option("--patch-size", patch_size, "Transformer patch size")->capture_default_str();
    partition->add_option("--view", view_text, "object | background")->capture_default_str();
    partition->add_option("--out", spec_out, "Spec JSON path (stdout if omitted)");

    std::string validate_prefix, validate_out;
    std::size_t min_per_cell = 170;
    auto* validate = app.add_subcommand("validate", "Validate a dataset and report region x class balance");
    validate->add_option("dataset", validate_prefix, "Dataset prefix")->required();
    validate->add_option("--min-per-cell", min_per_cell, "Minimum items per (region, class)")->capture_default_str();
    validate->add_option("--out", validate_out, "Balance report JSON path (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("UsageError", static_cast<int>(ExitCode::Usage), e.what());
        return static_cast<int>(ExitCode::Usage);
    }

    try {
        if (compute->parsed()) {
            auto opts = run_options(compute_args);
            opts.run_id = run_id;
            opts.prompt_template = prompt_template;
            opts.reference_hit_counts = reference_counts;
            const auto real = load_dataset(compute_args.real);
            const auto generated = load_dataset(compute_args.generated);
            const auto report = ddig::compute_run(real, generated, opts);
            emit(compute_out, ddig::to_json(report).dump(2) + "\n");
            if (!plot_out.empty()) ddig::write_text_file(plot_out, ddig::plot_csv(report));
        } else if (mine->parsed()) {
            std::vector<ddig::FailureMode> modes;
            if (mode_text == "all") {
                modes.assign(ddig::all_failure_modes.begin(), ddig::all_failure_modes.end());
            } else if (auto m = ddig::parse_failure_mode(mode_text)) {
                modes.push_back(*m);
            } else {
                throw Error(ErrorKind::InvalidConfig, "unknown mining mode '" + mode_text + "'");
            }
            const auto opts = run_options(mine_args);
            const auto real = load_dataset(mine_args.real);
            const auto generated = load_dataset(mine_args.generated);
            const auto eval = ddig::evaluate_run(real, generated, opts);
            std::vector<ddig::FailureModeHit> hits;
            for (auto m : modes) {
                auto found = ddig::mine(eval, m);
                if (sample > 0) found = ddig::sample_hits(found, sample, seed);
                hits.insert(hits.end(), found.begin(), found.end());
            }
            std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
                return std::tie(a.region, a.object_class, a.item_id) < std::tie(b.region, b.object_class, b.item_id);
            });
            emit(mine_out, ddig::to_jsonl(hits));
        } else if (compare->parsed()) {
            const auto a = ddig::read_run_report(report_a);
            const auto b = ddig::read_run_report(report_b);
            const auto table = ddig::compare_runs(a, b);
            if (compare_out.empty()) {
                std::cout << ddig::to_csv(table);
            } else {
                ddig::write_text_file(compare_out + ".csv", ddig::to_csv(table));
                ddig::write_text_file(compare_out + ".json", ddig::to_json(table).dump(2) + "\n");
            }
        } else if (partition->parsed()) {
            auto view = ddig::parse_masked_view(view_text);
            if (!view) throw Error(ErrorKind::InvalidConfig, "--view must be object or background");
            const auto mask = ddig::read_pgm(mask_path);
            const auto spec = ddig::to_attention_spec(ddig::partition_mask(mask, image_size, patch_size), *view);
            emit(spec_out, ddig::to_json(spec).dump() + "\n");
        } else if (validate->parsed()) {
            const auto set = load_dataset(validate_prefix);
            const auto deficits = ddig::validate_class_balance(set, min_per_cell);
            emit(validate_out, ddig::to_json(deficits, min_per_cell).dump(2) + "\n");
        }
    } catch (const Error& e) {
        print_error(ddig::to_string(e.kind()), static_cast<int>(e.exit_code()), e.what());
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        print_error("InternalError", static_cast<int>(ExitCode::Computation), e.what());
        return static_cast<int>(ExitCode::Computation);
    }
    return 0;
}
