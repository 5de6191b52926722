// dhvae command-line front end: synthetic corpus generation, slice dataset
// preparation, generator training, sampling, quality metrics and the
// augmentation experiment.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "dhvae/config.hpp"
#include "dhvae/errors.hpp"
#include "dhvae/experiment.hpp"
#include "dhvae/hmc.hpp"
#include "dhvae/kernels.hpp"
#include "dhvae/serialize.hpp"
#include "dhvae/train.hpp"
#include "dhvae/unet.hpp"
#include "dhvae/volume.hpp"

namespace fs = std::filesystem;
using namespace dhvae;

namespace {

ConfigMap load_config(const std::string& path) {
    if (path.empty()) return ConfigMap::parse_string("", "<none>");
    ConfigMap cm = ConfigMap::parse_file(path);
    const std::int64_t version = cm.get_int("spec_version", -1);
    if (version != 1)
        throw ConfigError(path + ": expected 'spec_version = 1', got " +
                          (version < 0 ? std::string("no spec_version key") : std::to_string(version)));
    return cm;
}

std::string config_hash_of(const ConfigMap& cm, std::uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(cm.canonical_text() + std::to_string(seed))));
    return buf;
}

// loads every *.rawvol / *.nii / *.nii.gz (skipping *_mask files) in a
// directory, paired masks required
SubjectSet load_subject_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        const bool vol = name.ends_with(".rawvol") || name.ends_with(".nii") || name.ends_with(".nii.gz");
        const bool mask = name.find("_mask.") != std::string::npos;
        if (vol && !mask) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    SubjectSet out;
    for (const auto& f : files) {
        auto [vol, mask] = load_volume(f);
        if (!mask) throw PairingError("no paired mask for " + f.string());
        out.emplace_back(std::move(vol), std::move(*mask));
    }
    if (out.empty()) throw IngestionError("no volumes found under " + dir.string());
    return out;
}

std::vector<SlicePair> dataset_pairs(const fs::path& path) { return SliceDataset::load(path).pairs; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"discriminative Hamiltonian VAE: joint slice+mask synthesis and augmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::int64_t seed = 0;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "config file (spec_version = 1)");
    app.add_option("--seed", seed, "base RNG seed");
    app.add_option("--out", out_dir, "output directory");

    // make-blobs
    auto* mk = app.add_subcommand("make-blobs", "write a deterministic synthetic blob corpus");
    std::int64_t mk_subjects = 8, mk_h = 32, mk_w = 32, mk_d = 8;
    mk->add_option("--subjects", mk_subjects, "number of subjects");
    mk->add_option("--height", mk_h, "slice height");
    mk->add_option("--width", mk_w, "slice width");
    mk->add_option("--depth", mk_d, "volume depth (slices)");

    // prepare
    auto* prep = app.add_subcommand("prepare", "volumes -> tumor-slice dataset");
    std::string prep_volumes;
    std::string prep_out = "dataset.dhs";
    std::int64_t prep_min_fg = 10;
    int prep_axis = 2;
    std::string prep_split = "train";
    prep->add_option("--volumes", prep_volumes, "directory of volumes with *_mask pairs")->required();
    prep->add_option("--dataset", prep_out, "output dataset path");
    prep->add_option("--min-fg", prep_min_fg, "minimum foreground pixels per slice");
    prep->add_option("--axis", prep_axis, "slice axis (0=x, 1=y, 2=axial)");
    prep->add_option("--split", prep_split, "split tag stored in the dataset");

    // train-gen
    auto* tg = app.add_subcommand("train-gen", "train the generator");
    std::string tg_data;
    tg->add_option("--data", tg_data, "slice dataset")->required();

    // sample
    auto* sm = app.add_subcommand("sample", "draw synthetic pairs from a checkpoint");
    std::string sm_ckpt, sm_out = "synthetic.dhs";
    std::int64_t sm_n = 100;
    std::int64_t sm_min_fg = -1;
    std::string sm_traj, sm_traj_data;
    bool sm_traj_mh = false;
    sm->add_option("--checkpoint", sm_ckpt, "generator checkpoint")->required();
    sm->add_option("--n", sm_n, "number of pairs");
    sm->add_option("--dataset", sm_out, "output dataset path");
    sm->add_option("--min-fg", sm_min_fg, "rejection threshold (default: from checkpoint)");
    sm->add_option("--trajectory", sm_traj, "also dump a posterior leapfrog trajectory CSV here");
    sm->add_option("--trajectory-data", sm_traj_data, "dataset supplying the conditioning pair");
    sm->add_flag("--metropolis", sm_traj_mh, "apply MH acceptance to the dumped transition");

    // eval-images
    auto* ei = app.add_subcommand("eval-images", "PSNR/FID/LPIPS report");
    std::string ei_real, ei_synth, ei_ckpt, ei_out = "image_metrics.csv";
    ei->add_option("--real", ei_real, "real slice dataset")->required();
    ei->add_option("--synth", ei_synth, "synthetic slice dataset")->required();
    ei->add_option("--checkpoint", ei_ckpt, "checkpoint for reconstruction PSNR")->required();
    ei->add_option("--report", ei_out, "output CSV path");

    // eval-masks
    auto* em = app.add_subcommand("eval-masks", "JSD/KLD mask-distribution report");
    std::string em_real, em_synth, em_out = "mask_metrics.csv";
    em->add_option("--real", em_real, "real slice dataset")->required();
    em->add_option("--synth", em_synth, "synthetic slice dataset")->required();
    em->add_option("--report", em_out, "output CSV path");

    // augment-exp
    auto* ax = app.add_subcommand("augment-exp", "run the augmentation experiment");
    std::string ax_train, ax_test;
    ax->add_option("--train-volumes", ax_train, "directory of training subjects")->required();
    ax->add_option("--test-volumes", ax_test, "directory of held-out subjects")->required();

    // report
    auto* rp = app.add_subcommand("report", "re-emit tables and plots from results.csv");
    std::string rp_results;
    rp->add_option("--results", rp_results, "path to results.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ConfigMap cm = load_config(config_path);
        const std::uint64_t useed = static_cast<std::uint64_t>(seed);
        const std::string chash = config_hash_of(cm, useed);
        const fs::path out(out_dir);

        if (*mk) {
            (void)cm.get_int("spec_version", 1);
            cm.finish();
            fs::create_directories(out);
            auto corpus = make_blob_corpus(mk_subjects, mk_h, mk_w, mk_d, useed);
            for (std::size_t i = 0; i < corpus.size(); ++i) {
                const auto& [vol, mask] = corpus[i];
                save_volume(vol, out / (vol.subject_id + ".rawvol"));
                save_mask(mask, vol.spacing, out / (vol.subject_id + "_mask.rawvol"));
            }
            std::cout << "wrote " << corpus.size() << " subjects under " << out.string() << "\n";
        } else if (*prep) {
            (void)cm.get_int("spec_version", 1);
            cm.finish();
            SubjectSet subjects = load_subject_dir(prep_volumes);
            std::vector<SlicePair> pairs;
            for (const auto& [vol, mask] : subjects) {
                const Volume3D norm = minmax_normalize(vol);
                for (auto& p : extract_tumor_slices(norm, mask, prep_min_fg, prep_axis))
                    pairs.push_back(std::move(p));
            }
            SliceDataset ds = SliceDataset::from_pairs(std::move(pairs), prep_split);
            ds.save(prep_out);
            std::cout << "wrote " << ds.size() << " slice pairs to " << prep_out << "\n";
        } else if (*tg) {
            TrainConfig cfg = TrainConfig::from_config(cm);
            cm.finish();
            if (seed != 0) cfg.seed = useed;
            SliceDataset ds = SliceDataset::load(tg_data);
            TrainResult res = train_generator(ds, cfg, out);
            std::cout << "checkpoint: " << res.checkpoint.string() << "\n";
            if (!res.reports.empty())
                std::cout << "final global loss: " << res.reports.back().global << "\n";
        } else if (*sm) {
            (void)cm.get_int("spec_version", 1);
            cm.finish();
            std::optional<std::int64_t> min_fg;
            if (sm_min_fg >= 1) min_fg = sm_min_fg;
            auto pairs = generate_pairs(sm_ckpt, sm_n, useed, min_fg);
            SliceDataset ds = SliceDataset::from_pairs(std::move(pairs), "synthetic");
            ds.save(sm_out);
            std::cout << "wrote " << ds.size() << " synthetic pairs to " << sm_out << "\n";
            if (!sm_traj.empty()) {
                if (sm_traj_data.empty())
                    throw ConfigError("--trajectory needs --trajectory-data for the conditioning pair");
                SliceDataset cond = SliceDataset::load(sm_traj_data);
                if (cond.pairs.empty()) throw ConfigError("trajectory dataset is empty");
                TrainState st = load_checkpoint(sm_ckpt);
                ModelParams gen = st.gen;
                for (auto it = gen.params.entries.begin(); it != gen.params.entries.end(); ++it)
                    if (it->first == "hmc.log_eps") {
                        gen.params.entries.erase(it);
                        break;
                    }
                const SlicePair& p = cond.pairs.front();
                const LatentGaussian lg = encode(gen, p.image, p.mask);
                Rng rng(mix_seed(useed, 0x7A7));
                const Tensor z0 = reparameterize(lg, rng.normal_tensor(lg.mean.shape()));
                std::vector<TrajectoryRow> rows;
                // one transition per step count to expose the whole trajectory
                LeapfrogParams lf = st.lf;
                Graph g;
                ParamVars pv = enter_params(g, gen.params);
                Var xv = g.leaf(p.image.reshaped({1, 1, cond.slice_h, cond.slice_w}));
                Var mv = g.leaf(p.mask.reshaped({1, 1, cond.slice_h, cond.slice_w}));
                const Shape zs = {1, z0.dim(0), z0.dim(1), z0.dim(2)};
                Var zv = g.leaf(z0.reshaped(zs));
                Tensor rho0 = sample_momentum(lf.mass, zs, mix_seed(useed, 0x4057));
                GradFn grad_u = [&](Var zz) {
                    Var u = reduce_sum_to(potential_terms_g(g, gen.cfg, pv, zz, xv, mv), {1});
                    return g.gradients(u, {zz})[0];
                };
                std::vector<PhaseState> traj;
                evolve_g(g, {zv, g.leaf(rho0)}, vexp(g.leaf(broadcast_to(lf.log_eps, zs))), lf.K, grad_u,
                         &traj);
                HmcSampleResult tr = hmc_transition(gen, p.image, p.mask, z0, lf, useed, sm_traj_mh);
                for (std::size_t i = 0; i < traj.size(); ++i) {
                    TrajectoryRow row;
                    row.step = static_cast<std::int64_t>(i);
                    Graph gg;
                    ParamVars pvv = enter_params(gg, gen.params);
                    Var zz = gg.leaf(traj[i].z);
                    Var uu = reduce_sum_to(potential_terms_g(gg, gen.cfg, pvv, zz, gg.leaf(p.image.reshaped({1, 1, cond.slice_h, cond.slice_w})), gg.leaf(p.mask.reshaped({1, 1, cond.slice_h, cond.slice_w}))), {1});
                    row.potential = gg.value(uu)[0];
                    const PhaseState ps{traj[i].z.reshaped(z0.shape()), traj[i].rho.reshaped(z0.shape())};
                    row.hamiltonian = hamiltonian(ps, lf.mass, row.potential);
                    row.kinetic = row.hamiltonian - row.potential;
                    row.accepted = tr.accepted;
                    rows.push_back(row);
                }
                write_trajectory_csv(rows, sm_traj);
                std::cout << "trajectory (" << rows.size() << " states) written to " << sm_traj << "\n";
            }
        } else if (*ei) {
            (void)cm.get_int("spec_version", 1);
            cm.finish();
            TrainState st = load_checkpoint(ei_ckpt);
            ModelParams gen = st.gen;
            for (auto it = gen.params.entries.begin(); it != gen.params.entries.end(); ++it)
                if (it->first == "hmc.log_eps") {
                    gen.params.entries.erase(it);
                    break;
                }
            std::string note;
            FeatureExtractor fx = resolve_extractor(st.cfg.extractor, useed, &note);
            MetricsReport rep = evaluate_image_quality(dataset_pairs(ei_real), dataset_pairs(ei_synth), gen,
                                                       fx, useed, chash);
            if (!note.empty()) rep.notes.push_back(note);
            rep.write_csv(ei_out);
            std::cout << "psnr " << rep.get("psnr") << "  fid " << rep.get("fid") << "  lpips "
                      << rep.get("lpips") << "\n";
        } else if (*em) {
            (void)cm.get_int("spec_version", 1);
            cm.finish();
            MetricsReport rep = evaluate_mask_quality(dataset_pairs(em_real), dataset_pairs(em_synth),
                                                      useed, chash);
            rep.write_csv(em_out);
            std::cout << "jsd " << rep.get("jsd") << "  kld(r||s) " << rep.get("kld_real_synth")
                      << "  kld(s||r) " << rep.get("kld_synth_real") << "\n";
        } else if (*ax) {
            ExperimentPlan plan = ExperimentPlan::from_config(cm);
            cm.finish();
            if (seed != 0) plan.seeds = {useed};
            SubjectSet train = load_subject_dir(ax_train);
            SubjectSet test = load_subject_dir(ax_test);
            ExperimentResults results = run_augmentation_experiment(plan, train, test, out / "work");
            emit_report(results, out);
            std::cout << "wrote " << results.cells.size() << " cells to " << (out / "results.csv").string()
                      << "\n";
            for (const auto& row : results.aggregate())
                std::cout << "real=" << row.real_count << " synth=" << row.synth_count << " beta=" << row.beta
                          << ": DSC " << row.dsc_mean << " +- " << row.dsc_std << "\n";
        } else if (*rp) {
            (void)cm.get_int("spec_version", 1);
            cm.finish();
            ExperimentResults results = load_results_csv(rp_results);
            emit_report(results, out);
            std::cout << "report regenerated under " << out.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
