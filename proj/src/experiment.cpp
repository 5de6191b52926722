#include "dhvae/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dhvae/errors.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

void ExperimentPlan::validate() const {
    if (real_counts.empty() || synth_counts.empty() || betas.empty() || seeds.empty())
        throw ConfigError("experiment plan sweeps must be nonempty");
    if (folds < 1) throw ConfigError("experiment plan needs folds >= 1");
    if (min_fg_pixels < 1) throw ConfigError("experiment plan min_fg_pixels must be >= 1");
    for (double b : betas)
        if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("beta values must lie in [0,1]");
}

ExperimentPlan ExperimentPlan::from_config(ConfigMap& cm) {
    ExperimentPlan plan;
    plan.gen_template = TrainConfig::from_config(cm);
    plan.real_counts = cm.get_int_list("plan.real_counts", plan.real_counts);
    plan.synth_counts = cm.get_int_list("plan.synth_counts", plan.synth_counts);
    plan.betas = cm.get_double_list("plan.betas", plan.betas);
    plan.folds = cm.get_int("plan.folds", plan.folds);
    std::vector<std::int64_t> seeds;
    for (auto s : cm.get_int_list("plan.seeds", {})) seeds.push_back(s);
    if (!seeds.empty()) {
        plan.seeds.clear();
        for (auto s : seeds) plan.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    plan.min_fg_pixels = cm.get_int("plan.min_fg_pixels", plan.min_fg_pixels);
    plan.seg_template.depth = cm.get_int("seg.depth", plan.seg_template.depth);
    plan.seg_template.base_filters = cm.get_int("seg.base_filters", plan.seg_template.base_filters);
    plan.seg_template.epochs = cm.get_int("seg.epochs", plan.seg_template.epochs);
    plan.seg_template.batch_size = cm.get_int("seg.batch_size", plan.seg_template.batch_size);
    plan.seg_template.lr = cm.get_double("seg.lr", plan.seg_template.lr);
    return plan;
}

void assert_disjoint_subjects(const SubjectSet& train_pool, const SubjectSet& test_set) {
    std::set<std::string> train_ids;
    for (const auto& [vol, mask] : train_pool) train_ids.insert(vol.subject_id);
    for (const auto& [vol, mask] : test_set)
        if (train_ids.count(vol.subject_id))
            throw LeakageError("subject '" + vol.subject_id + "' appears in both train and test sets");
}

namespace {

std::vector<SlicePair> slices_of(const SubjectSet& subjects, const std::vector<std::size_t>& idx,
                                 std::int64_t min_fg) {
    std::vector<SlicePair> out;
    for (std::size_t i : idx) {
        const auto& [vol, mask] = subjects[i];
        const Volume3D norm = minmax_normalize(vol);
        for (auto& p : extract_tumor_slices(norm, mask, min_fg)) out.push_back(std::move(p));
    }
    return out;
}

struct GenKey {
    std::int64_t fold, real_count;
    double beta;
    std::uint64_t seed;
    bool operator<(const GenKey& o) const {
        return std::tie(fold, real_count, beta, seed) < std::tie(o.fold, o.real_count, o.beta, o.seed);
    }
};

}  // namespace

ExperimentResults run_augmentation_experiment(const ExperimentPlan& plan, const SubjectSet& train_pool,
                                              const SubjectSet& test_set,
                                              const std::filesystem::path& work_dir) {
    plan.validate();
    if (train_pool.empty() || test_set.empty())
        throw ConfigError("experiment needs nonempty train and test subject sets");
    assert_disjoint_subjects(train_pool, test_set);
    std::filesystem::create_directories(work_dir);

    // normalized test volumes, reused across cells
    SubjectSet test_norm;
    test_norm.reserve(test_set.size());
    for (const auto& [vol, mask] : test_set) test_norm.emplace_back(minmax_normalize(vol), mask);

    ExperimentResults results;
    std::map<GenKey, std::pair<std::filesystem::path, std::vector<SlicePair>>> generators;

    for (std::int64_t fold = 0; fold < plan.folds; ++fold)
        for (std::uint64_t seed : plan.seeds)
            for (std::int64_t real_count : plan.real_counts)
                for (double beta : plan.betas) {
                    if (real_count < 1 || real_count > static_cast<std::int64_t>(train_pool.size()))
                        throw ConfigError("real_count " + std::to_string(real_count) +
                                          " exceeds the train pool of " + std::to_string(train_pool.size()));
                    // per-fold subject draw, independent of plan order
                    Rng fold_rng(mix_seed(seed, static_cast<std::uint64_t>(fold), 0xF01D));
                    std::vector<std::size_t> order(train_pool.size());
                    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                    for (std::size_t i = order.size() - 1; i > 0; --i)
                        std::swap(order[i], order[static_cast<std::size_t>(fold_rng.uniform_int(
                                      static_cast<std::int64_t>(i) + 1))]);
                    order.resize(static_cast<std::size_t>(real_count));

                    std::vector<SlicePair> real_slices = slices_of(train_pool, order, plan.min_fg_pixels);
                    if (real_slices.empty())
                        throw ConfigError("fold " + std::to_string(fold) + ": no tumor-bearing slices");

                    const GenKey key{fold, real_count, beta, seed};
                    if (!generators.count(key)) {
                        TrainConfig gc = plan.gen_template;
                        gc.alpha = 1.0 - beta;
                        gc.seed = mix_seed(seed, static_cast<std::uint64_t>(fold),
                                           static_cast<std::uint64_t>(real_count), 0x6E6);
                        std::ostringstream dir;
                        dir << "gen_f" << fold << "_r" << real_count << "_b" << beta << "_s" << seed;
                        const SliceDataset ds = SliceDataset::from_pairs(real_slices, "train");
                        TrainResult tr = train_generator(ds, gc, work_dir / dir.str());
                        generators[key] = {tr.checkpoint, real_slices};
                    }

                    for (std::int64_t synth_count : plan.synth_counts) {
                        ExperimentCell cell;
                        cell.fold = fold;
                        cell.real_count = real_count;
                        cell.synth_count = synth_count;
                        cell.beta = beta;
                        cell.seed = seed;
                        cell.n_real_slices = static_cast<std::int64_t>(real_slices.size());

                        std::vector<SlicePair> merged = real_slices;
                        if (synth_count > 0) {
                            const std::uint64_t cell_seed =
                                mix_seed(seed, static_cast<std::uint64_t>(fold),
                                         static_cast<std::uint64_t>(synth_count), 0xCE11);
                            auto synth = generate_pairs(generators[key].first, synth_count, cell_seed,
                                                        plan.min_fg_pixels);
                            for (auto& p : synth) merged.push_back(std::move(p));
                        }
                        SegConfig sc = plan.seg_template;
                        sc.seed = mix_seed(seed, static_cast<std::uint64_t>(fold),
                                           static_cast<std::uint64_t>(synth_count), 0x5E66);
                        const SliceDataset seg_ds = SliceDataset::from_pairs(std::move(merged), "train");
                        auto [seg, history] = train_segmenter(seg_ds, sc);
                        auto [mean, sd] = evaluate_dsc(seg, test_norm, make_selector(SelectorPolicy::oracle_extent));
                        cell.dsc_mean = mean;
                        cell.dsc_std = sd;
                        results.cells.push_back(cell);
                    }
                }
    return results;
}

std::vector<AggregateRow> ExperimentResults::aggregate() const {
    std::map<std::tuple<std::int64_t, std::int64_t, double>, std::vector<double>> groups;
    for (const auto& c : cells)
        groups[{c.real_count, c.synth_count, c.beta}].push_back(c.dsc_mean);
    std::vector<AggregateRow> rows;
    for (const auto& [key, vals] : groups) {
        AggregateRow r;
        r.real_count = std::get<0>(key);
        r.synth_count = std::get<1>(key);
        r.beta = std::get<2>(key);
        r.n_cells = static_cast<std::int64_t>(vals.size());
        for (double v : vals) r.dsc_mean += v;
        r.dsc_mean /= static_cast<double>(vals.size());
        for (double v : vals) r.dsc_std += (v - r.dsc_mean) * (v - r.dsc_mean);
        r.dsc_std = std::sqrt(r.dsc_std / static_cast<double>(vals.size()));
        rows.push_back(r);
    }
    return rows;
}

namespace {

void write_svg_plot(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
    // DSC vs synthetic count, one polyline per (real_count, beta)
    const int W = 640, H = 420, ML = 60, MR = 20, MT = 20, MB = 50;
    double xmax = 1, ymin = 1.0, ymax = 0.0;
    for (const auto& r : rows) {
        xmax = std::max(xmax, static_cast<double>(r.synth_count));
        ymin = std::min(ymin, r.dsc_mean - r.dsc_std);
        ymax = std::max(ymax, r.dsc_mean + r.dsc_std);
    }
    ymin = std::max(0.0, ymin - 0.05);
    ymax = std::min(1.0, ymax + 0.05);
    if (ymax <= ymin) ymax = ymin + 0.1;
    auto px = [&](double x) { return ML + (W - ML - MR) * (x / xmax); };
    auto py = [&](double y) { return H - MB - (H - MT - MB) * ((y - ymin) / (ymax - ymin)); };

    std::map<std::pair<std::int64_t, double>, std::vector<const AggregateRow*>> series;
    for (const auto& r : rows) series[{r.real_count, r.beta}].push_back(&r);

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\"" << H - MB
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (W / 2) << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"13\">synthetic pairs added</text>\n";
    os << "<text x=\"16\" y=\"" << (H / 2)
       << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " << (H / 2)
       << ")\">volume DSC</text>\n";
    for (double y = std::ceil(ymin * 10) / 10; y <= ymax + 1e-9; y += 0.1) {
        os << "<line x1=\"" << ML << "\" y1=\"" << py(y) << "\" x2=\"" << W - MR << "\" y2=\"" << py(y)
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << ML - 6 << "\" y=\"" << py(y) + 4
           << "\" text-anchor=\"end\" font-size=\"11\">" << std::round(y * 100) / 100 << "</text>\n";
    }
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    int ci = 0;
    int legend_y = MT + 10;
    for (auto& [key, pts] : series) {
        std::vector<const AggregateRow*> sorted = pts;
        std::sort(sorted.begin(), sorted.end(),
                  [](const AggregateRow* a, const AggregateRow* b) { return a->synth_count < b->synth_count; });
        const char* color = colors[ci % 6];
        std::ostringstream poly;
        for (const auto* r : sorted) poly << px(static_cast<double>(r->synth_count)) << "," << py(r->dsc_mean) << " ";
        os << "<polyline points=\"" << poly.str() << "\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        for (const auto* r : sorted) {
            os << "<circle cx=\"" << px(static_cast<double>(r->synth_count)) << "\" cy=\"" << py(r->dsc_mean)
               << "\" r=\"3\" fill=\"" << color << "\"/>\n";
            os << "<line x1=\"" << px(static_cast<double>(r->synth_count)) << "\" y1=\""
               << py(r->dsc_mean - r->dsc_std) << "\" x2=\"" << px(static_cast<double>(r->synth_count))
               << "\" y2=\"" << py(r->dsc_mean + r->dsc_std) << "\" stroke=\"" << color << "\"/>\n";
        }
        os << "<text x=\"" << W - MR - 150 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\"" << color
           << "\">real=" << key.first << " beta=" << key.second << "</text>\n";
        legend_y += 14;
        ++ci;
    }
    os << "</svg>\n";
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << os.str();
}

}  // namespace

void emit_report(const ExperimentResults& results, const std::filesystem::path& out_dir) {
    if (results.cells.empty()) throw ConfigError("emit_report: empty results");
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(out_dir / "results.csv");
        if (!os) throw IoError("cannot open results.csv");
        os << "fold,real_count,synth_count,beta,seed,dsc_mean,dsc_std,n_real_slices\n";
        for (const auto& c : results.cells)
            os << c.fold << "," << c.real_count << "," << c.synth_count << "," << format_double(c.beta)
               << "," << c.seed << "," << format_double(c.dsc_mean) << "," << format_double(c.dsc_std)
               << "," << c.n_real_slices << "\n";
    }
    const auto agg = results.aggregate();
    {
        std::ofstream os(out_dir / "aggregate.csv");
        if (!os) throw IoError("cannot open aggregate.csv");
        os << "real_count,synth_count,beta,dsc_mean,dsc_std,n_cells\n";
        for (const auto& r : agg)
            os << r.real_count << "," << r.synth_count << "," << format_double(r.beta) << ","
               << format_double(r.dsc_mean) << "," << format_double(r.dsc_std) << "," << r.n_cells << "\n";
    }
    write_svg_plot(agg, out_dir / "dsc_vs_count.svg");
}

ExperimentResults load_results_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty results csv", 0);
    if (line != "fold,real_count,synth_count,beta,seed,dsc_mean,dsc_std,n_real_slices")
        throw FormatError("unexpected results csv header: " + line, 0);
    ExperimentResults out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ExperimentCell c;
        std::getline(ls, tok, ','); c.fold = std::stoll(tok);
        std::getline(ls, tok, ','); c.real_count = std::stoll(tok);
        std::getline(ls, tok, ','); c.synth_count = std::stoll(tok);
        std::getline(ls, tok, ','); c.beta = std::stod(tok);
        std::getline(ls, tok, ','); c.seed = std::stoull(tok);
        std::getline(ls, tok, ','); c.dsc_mean = std::stod(tok);
        std::getline(ls, tok, ','); c.dsc_std = std::stod(tok);
        if (!std::getline(ls, tok, ',')) throw FormatError("short results row: " + line, 0);
        c.n_real_slices = std::stoll(tok);
        out.cells.push_back(c);
    }
    return out;
}

}  // namespace dhvae
