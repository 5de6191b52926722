#pragma once

// The generative-augmentation experiment: per cell, train the generator on a
// real subset, synthesize pairs, merge, train the slice segmenter, score
// volume DSC on held-out subjects. Cells derive their seeds from their own
// coordinates, so plan order never changes a result.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dhvae/config.hpp"
#include "dhvae/train.hpp"
#include "dhvae/unet.hpp"
#include "dhvae/volume.hpp"

namespace dhvae {

using SubjectSet = std::vector<std::pair<Volume3D, MaskVolume3D>>;

struct ExperimentPlan {
    std::vector<std::int64_t> real_counts = {6};
    std::vector<std::int64_t> synth_counts = {0, 500};
    std::vector<double> betas = {0.01};
    std::int64_t folds = 1;
    std::vector<std::uint64_t> seeds = {0};
    std::int64_t min_fg_pixels = 10;

    TrainConfig gen_template;
    SegConfig seg_template;

    void validate() const;
    static ExperimentPlan from_config(ConfigMap& cm);
};

struct ExperimentCell {
    std::int64_t fold = 0;
    std::int64_t real_count = 0;
    std::int64_t synth_count = 0;
    double beta = 0;
    std::uint64_t seed = 0;
    double dsc_mean = 0;
    double dsc_std = 0;
    std::int64_t n_real_slices = 0;
};

struct AggregateRow {
    std::int64_t real_count = 0;
    std::int64_t synth_count = 0;
    double beta = 0;
    double dsc_mean = 0;  // across folds and seeds
    double dsc_std = 0;
    std::int64_t n_cells = 0;
};

struct ExperimentResults {
    std::vector<ExperimentCell> cells;
    std::vector<AggregateRow> aggregate() const;
};

// Throws LeakageError when any subject id appears on both sides.
void assert_disjoint_subjects(const SubjectSet& train_pool, const SubjectSet& test_set);

ExperimentResults run_augmentation_experiment(const ExperimentPlan& plan, const SubjectSet& train_pool,
                                              const SubjectSet& test_set,
                                              const std::filesystem::path& work_dir);

// results.csv + aggregate.csv + an SVG of DSC vs synthetic count; refuses
// empty results and writes no partial files.
void emit_report(const ExperimentResults& results, const std::filesystem::path& out_dir);

ExperimentResults load_results_csv(const std::filesystem::path& path);

}  // namespace dhvae
