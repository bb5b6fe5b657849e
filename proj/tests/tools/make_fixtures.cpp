// Writes the checked-in CLI fixtures into the directory given as argv[1]:
//   toy_real / toy_generated          two regions, two classes, d = 6
//   toy_report_golden.json            per-cell metrics of the toy run, from the brute-force oracle
//   planted_real / planted_generated  one planted hit per failure mode and region
//   mask_*.pgm, mask_not_pgm.png      inputs for the partition command

#include <fstream>
#include <iostream>

#include "testing.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixtures OUTPUT_DIR\n";
        return 2;
    }
    namespace fs = std::filesystem;
    using namespace ddig;
    const fs::path dir = argv[1];
    fs::create_directories(dir);
    auto prefix = [&](const char* name) { return DatasetPaths::from_prefix((dir / name).string()); };

    const auto toy = support::toy_fixture();
    write_embedding_file(toy.real, prefix("toy_real"));
    write_embedding_file(toy.generated, prefix("toy_generated"));
    RunOptions opts;
    opts.run_id = "toy";
    opts.prompt_template = "{object} in {region}";
    write_text_file(dir / "toy_report_golden.json",
                    to_json(support::oracle_report(toy.real, toy.generated, opts)).dump(2) + "\n");

    const auto planted = support::planted_fixture();
    write_embedding_file(planted.data.real, prefix("planted_real"));
    write_embedding_file(planted.data.generated, prefix("planted_generated"));

    auto single = PixelMask::filled(224, 224, 0);
    single.set(0, 0, 255);
    write_pgm(dir / "mask_single_pixel.pgm", single);
    write_pgm(dir / "mask_empty.pgm", PixelMask::filled(100, 80, 0));
    write_text_file(dir / "mask_not_pgm.png", std::string("\x89PNG\r\n\x1a\n", 8));
    return 0;
}
