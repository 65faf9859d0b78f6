// lodet: synthetic longitudinal lesion studies, detection-loss training,
// lesion-level evaluation, and high-sensitivity/high-specificity ensembling.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lodet/ensemble.hpp"
#include "lodet/errors.hpp"
#include "lodet/io_formats.hpp"
#include "lodet/losses.hpp"
#include "lodet/metrics.hpp"
#include "lodet/model.hpp"
#include "lodet/patching.hpp"
#include "lodet/phantom.hpp"
#include "lodet/plot.hpp"
#include "lodet/rng.hpp"
#include "lodet/trainer.hpp"
#include "lodet/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lodet;

namespace {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<LongitudinalStudy> load_corpus(const CorpusManifest& manifest) {
    std::vector<LongitudinalStudy> corpus;
    corpus.reserve(manifest.patients.size());
    for (const auto& p : manifest.patients) {
        LongitudinalStudy study;
        study.patient_id = p.patient_id;
        for (const auto& tp : p.timepoints) {
            StudyTimepoint s;
            s.image = read_vxg_volume(manifest.resolve(tp.image_path));
            s.reference_mask = read_vxg_mask(manifest.resolve(tp.mask_path));
            if (!same_dims(s.image.dims, s.reference_mask.dims)) {
                throw ValidationError("corpus: image/mask dims mismatch for patient " +
                                      p.patient_id);
            }
            study.timepoints.push_back(std::move(s));
        }
        corpus.push_back(std::move(study));
    }
    return corpus;
}

// --- phantom -----------------------------------------------------------------

struct PhantomArgs {
    std::string spec_path;
    std::string out_dir;
    int n_patients = 10;
    std::uint64_t seed = 0;
};

int run_phantom(const PhantomArgs& args) {
    PhantomSpec base;
    if (!args.spec_path.empty()) {
        base = phantom_spec_from_json(read_text_file(args.spec_path));
    }
    base.validate();

    const fs::path out_dir(args.out_dir);
    fs::create_directories(out_dir);

    CorpusManifest manifest;
    manifest.base_dir = out_dir;
    Rng root(args.seed);
    int tiny = 0, larger = 0;
    int volumes = 0;
    const double tiny_limit_mm3 = 100.0;  // 0.1 cm^3
    for (int i = 0; i < args.n_patients; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%03d", i);
        const std::string pid(buf);

        PhantomSpec spec = base;
        spec.seed = root.fork(static_cast<std::uint64_t>(i)).next_u64();
        LongitudinalStudy study = generate_study(spec);
        study.patient_id = pid;

        ManifestPatient mp;
        mp.patient_id = pid;
        for (std::size_t t = 0; t < study.timepoints.size(); ++t) {
            auto& tp = study.timepoints[t];
            tp.image.meta.patient_id = pid;
            tp.reference_mask.meta.patient_id = pid;
            const std::string rel_img = pid + "/tp" + std::to_string(t) + "_image.vxg";
            const std::string rel_mask = pid + "/tp" + std::to_string(t) + "_mask.vxg";
            write_vxg(tp.image, out_dir / rel_img);
            write_vxg(tp.reference_mask, out_dir / rel_mask);
            mp.timepoints.push_back({rel_img, rel_mask, t > 0});
            ++volumes;
            for (const auto& lr : tp.lesion_records) {
                const double r_mm = lr.radius_vox * spec.spacing_mm;
                const double vol_mm3 = 4.0 / 3.0 * 3.14159265358979323846 * r_mm * r_mm * r_mm;
                if (vol_mm3 < tiny_limit_mm3) ++tiny;
                else ++larger;
            }
        }
        manifest.patients.push_back(std::move(mp));
    }
    save_manifest(manifest, out_dir / "manifest.json");
    std::cout << "wrote " << args.n_patients << " patients (" << volumes << " volumes) to "
              << out_dir.string() << "\n"
              << "lesion records: " << (tiny + larger) << " total, " << tiny
              << " tiny (< 0.1 cm^3), " << larger << " larger\n";
    return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string manifest_path;
    std::string out_path;
    std::string log_path;
    std::string loss = "jvss";
    double alpha = 0.5;
    double epsilon = 1e-5;
    std::string prior_mode = "none";
    int epochs = 10;
    std::uint64_t seed = 0;
    double learning_rate = 0.001;
    double momentum = 0.6;
    double l1 = 1e-6;
    double l2 = 1e-4;
    int batch_size = 16;
    int segments_per_epoch = 200;
    double validation_fraction = 0.1;
    int n_conv_layers = 9;
    std::vector<int> channels;
    std::vector<int> lowres_factors{3, 5};
    int head_layers = 2;
    int main_size = 37;
    int infer_size = 45;
    double tumor_fraction = 0.5;
    int threads = 0;
};

int run_train(const TrainArgs& args) {
    const CorpusManifest manifest = load_manifest(args.manifest_path);
    const std::vector<LongitudinalStudy> corpus = load_corpus(manifest);

    ModelConfig mc;
    mc.n_conv_layers = args.n_conv_layers;
    mc.channels_per_layer = args.channels;
    mc.prior_mode = prior_mode_from_name(args.prior_mode);
    mc.lowres_factors = args.lowres_factors;
    mc.head_layers = args.head_layers;
    mc.seed = args.seed;

    TrainConfig tc;
    tc.loss = loss_kind_from_name(args.loss);
    tc.vss.alpha = args.alpha;
    tc.vss.epsilon = args.epsilon;
    tc.learning_rate = args.learning_rate;
    tc.momentum = args.momentum;
    tc.l1_weight = args.l1;
    tc.l2_weight = args.l2;
    tc.epochs = args.epochs;
    tc.batch_size = args.batch_size;
    tc.segments_per_epoch = args.segments_per_epoch;
    tc.validation_fraction = args.validation_fraction;
    tc.seed = args.seed;
    tc.n_threads = args.threads;
    tc.segments.main_size = args.main_size;
    tc.segments.infer_size = args.infer_size;
    tc.segments.n_conv_layers = args.n_conv_layers;
    tc.segments.lowres_factors = args.lowres_factors;
    tc.segments.tumor_fraction = args.tumor_fraction;

    TrainResult result = train(corpus, mc, tc);
    save_checkpoint(result.model, result.fingerprint, args.out_path);
    const std::string log_path =
        args.log_path.empty() ? args.out_path + ".log.json" : args.log_path;
    atomic_write_file(log_path, training_log_to_json(result.log));

    const auto& last = result.log.epochs.back();
    std::cout << "checkpoint " << result.log.checkpoint_id << " -> " << args.out_path << "\n"
              << "final epoch train_loss=" << last.train_loss << " val_loss=" << last.val_loss
              << "\n";
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string manifest_path;
    std::string ckpt_path;
    std::string report_path;
    std::string csv_path;
    double threshold = 0.5;
    int tile_size = 16;
    int infer_size = 45;
    int threads = 0;
};

struct VolumeEval {
    std::string patient_id;
    int timepoint = 0;
    LesionMatchReport lesion;
    SubvolumeMetrics subvolume;
    bool prior_substituted = false;
};

struct AggregateEval {
    std::int64_t ref_lesions = 0, tp_lesions = 0;
    std::int64_t pred_components = 0, fp_components = 0;
    double dsc_sum = 0.0;
    std::int64_t dsc_count = 0;
    std::int64_t sub_tp = 0, sub_tn = 0, sub_fp = 0, sub_fn = 0;
    int volumes = 0;

    void add(const VolumeEval& e) {
        ref_lesions += e.lesion.n_ref_lesions;
        tp_lesions += static_cast<std::int64_t>(e.lesion.tp_lesions.size());
        pred_components += e.lesion.n_pred_components;
        fp_components += e.lesion.fp_count;
        for (double d : e.lesion.tp_dsc) dsc_sum += d;
        dsc_count += static_cast<std::int64_t>(e.lesion.tp_dsc.size());
        sub_tp += e.subvolume.tp;
        sub_tn += e.subvolume.tn;
        sub_fp += e.subvolume.fp;
        sub_fn += e.subvolume.fn;
        ++volumes;
    }

    double lesion_sensitivity() const {
        return ref_lesions > 0 ? double(tp_lesions) / double(ref_lesions) : 1.0;
    }
    double lesion_precision() const {
        return pred_components > 0
                   ? double(pred_components - fp_components) / double(pred_components)
                   : 1.0;
    }
    double mdsc() const { return dsc_count > 0 ? dsc_sum / double(dsc_count) : 0.0; }
    double sub_sensitivity() const {
        return (sub_tp + sub_fn) > 0 ? double(sub_tp) / double(sub_tp + sub_fn) : 1.0;
    }
    double sub_specificity() const {
        return (sub_tn + sub_fp) > 0 ? double(sub_tn) / double(sub_tn + sub_fp) : 1.0;
    }
    double sub_precision() const {
        return (sub_tp + sub_fp) > 0 ? double(sub_tp) / double(sub_tp + sub_fp) : 1.0;
    }
};

json lesion_report_to_json(const LesionMatchReport& r) {
    return json{{"n_ref_lesions", r.n_ref_lesions},
                {"n_pred_components", r.n_pred_components},
                {"tp_lesions", r.tp_lesions},
                {"fn_lesions", r.fn_lesions},
                {"fp_components", r.fp_components},
                {"tp_dsc", r.tp_dsc},
                {"fp_count", r.fp_count},
                {"sensitivity", r.sensitivity},
                {"precision", r.precision},
                {"mdsc", r.mdsc},
                {"sensitivity_degenerate", r.sensitivity_degenerate},
                {"precision_degenerate", r.precision_degenerate}};
}

json subvolume_metrics_to_json(const SubvolumeMetrics& m) {
    return json{{"tp", m.tp},
                {"tn", m.tn},
                {"fp", m.fp},
                {"fn", m.fn},
                {"sensitivity", m.sensitivity},
                {"specificity", m.specificity},
                {"precision", m.precision},
                {"precision_degenerate", m.precision_degenerate}};
}

json fingerprint_json(const TrainingFingerprint& fp) {
    return json{{"loss", fp.loss},
                {"alpha", fp.alpha},
                {"epsilon", fp.epsilon},
                {"epochs", fp.epochs},
                {"seed", fp.seed}};
}

SegmentSpec spec_for_model(const Model& model, int infer_size) {
    SegmentSpec spec;
    spec.n_conv_layers = model.config.n_conv_layers;
    spec.lowres_factors = model.config.lowres_factors;
    spec.infer_size = infer_size;
    spec.main_size = infer_size;  // unused at inference; keep consistent parity
    return spec;
}

std::vector<VolumeEval> evaluate_corpus(const Model& model, const SegmentSpec& spec,
                                        const std::vector<LongitudinalStudy>& corpus,
                                        double threshold, int tile_size, int threads) {
    std::vector<VolumeEval> evals;
    for (const auto& study : corpus) {
        for (std::size_t t = 0; t < study.timepoints.size(); ++t) {
            const auto& tp = study.timepoints[t];
            const Volume* prior =
                study.has_prior(static_cast<int>(t)) ? &study.timepoints[t - 1].image : nullptr;
            PredictResult pred = predict_volume(model, tp.image, prior, spec, threads);
            const MaskVolume pred_mask = binarize(pred.prob, threshold);
            VolumeEval e;
            e.patient_id = study.patient_id;
            e.timepoint = static_cast<int>(t);
            e.lesion = lesion_match(pred_mask, tp.reference_mask);
            e.subvolume = subvolume_metrics(pred_mask, tp.reference_mask, tile_size);
            e.prior_substituted = pred.prior_substituted;
            evals.push_back(std::move(e));
        }
    }
    return evals;
}

int run_eval(const EvalArgs& args) {
    const CorpusManifest manifest = load_manifest(args.manifest_path);
    const std::vector<LongitudinalStudy> corpus = load_corpus(manifest);
    const Checkpoint ckpt = load_checkpoint(args.ckpt_path);
    const SegmentSpec spec = spec_for_model(ckpt.model, args.infer_size);

    const std::vector<VolumeEval> evals =
        evaluate_corpus(ckpt.model, spec, corpus, args.threshold, args.tile_size, args.threads);
    AggregateEval agg;
    json patients = json::array();
    {
        json current_tp = json::array();
        std::string current_id;
        for (std::size_t i = 0; i < evals.size(); ++i) {
            const auto& e = evals[i];
            agg.add(e);
            if (e.patient_id != current_id && !current_tp.empty()) {
                patients.push_back({{"patient_id", current_id}, {"timepoints", current_tp}});
                current_tp = json::array();
            }
            current_id = e.patient_id;
            current_tp.push_back({{"timepoint", e.timepoint},
                                  {"lesion", lesion_report_to_json(e.lesion)},
                                  {"subvolume", subvolume_metrics_to_json(e.subvolume)},
                                  {"prior_substituted", e.prior_substituted}});
        }
        if (!current_tp.empty()) {
            patients.push_back({{"patient_id", current_id}, {"timepoints", current_tp}});
        }
    }

    json report{
        {"fingerprint", fingerprint_json(ckpt.fingerprint)},
        {"threshold", args.threshold},
        {"tile_size", args.tile_size},
        {"patients", std::move(patients)},
        {"aggregate",
         {{"lesion",
           {{"sensitivity", agg.lesion_sensitivity()},
            {"precision", agg.lesion_precision()},
            {"fp_count", agg.fp_components},
            {"fp_per_volume", agg.volumes > 0 ? double(agg.fp_components) / agg.volumes : 0.0},
            {"mdsc", agg.mdsc()},
            {"n_ref_lesions", agg.ref_lesions},
            {"n_tp_lesions", agg.tp_lesions}}},
          {"subvolume",
           {{"sensitivity", agg.sub_sensitivity()},
            {"specificity", agg.sub_specificity()},
            {"precision", agg.sub_precision()},
            {"tp", agg.sub_tp},
            {"tn", agg.sub_tn},
            {"fp", agg.sub_fp},
            {"fn", agg.sub_fn}}},
          {"volumes", agg.volumes}}}};
    atomic_write_file(args.report_path, report.dump(2) + "\n");

    if (!args.csv_path.empty()) {
        std::ostringstream csv;
        csv << "loss,alpha,prior,sensitivity,precision,fp_count,mdsc\n";
        csv << ckpt.fingerprint.loss << "," << ckpt.fingerprint.alpha << ","
            << prior_mode_name(ckpt.model.config.prior_mode) << "," << agg.lesion_sensitivity()
            << "," << agg.lesion_precision() << "," << agg.fp_components << "," << agg.mdsc()
            << "\n";
        atomic_write_file(args.csv_path, csv.str());
    }
    std::cout << "lesion-level: sensitivity=" << agg.lesion_sensitivity()
              << " precision=" << agg.lesion_precision() << " fp=" << agg.fp_components
              << " mdsc=" << agg.mdsc() << "\n"
              << "subvolume:    sensitivity=" << agg.sub_sensitivity()
              << " specificity=" << agg.sub_specificity()
              << " precision=" << agg.sub_precision() << "\n";
    return 0;
}

// --- ensemble ----------------------------------------------------------------

struct EnsembleArgs {
    std::string ckpt_sens;
    std::string ckpt_spec;
    std::string manifest_path;
    std::string out_dir;
    double threshold = 0.5;
    int infer_size = 45;
    int threads = 0;
};

int run_ensemble(const EnsembleArgs& args) {
    const CorpusManifest manifest = load_manifest(args.manifest_path);
    const std::vector<LongitudinalStudy> corpus = load_corpus(manifest);
    const Checkpoint sens = load_checkpoint(args.ckpt_sens);
    const Checkpoint spec_ckpt = load_checkpoint(args.ckpt_spec);
    const SegmentSpec sens_spec = spec_for_model(sens.model, args.infer_size);
    const SegmentSpec spec_spec = spec_for_model(spec_ckpt.model, args.infer_size);

    const fs::path out_dir(args.out_dir);
    fs::create_directories(out_dir);

    json review = json::array();
    std::int64_t total_confirmed = 0, total_candidates = 0;
    int volumes = 0;
    for (const auto& study : corpus) {
        json tps = json::array();
        for (std::size_t t = 0; t < study.timepoints.size(); ++t) {
            const auto& tp = study.timepoints[t];
            const Volume* prior =
                study.has_prior(static_cast<int>(t)) ? &study.timepoints[t - 1].image : nullptr;
            const MaskVolume m_sens = binarize(
                predict_volume(sens.model, tp.image, prior, sens_spec, args.threads).prob,
                args.threshold);
            const MaskVolume m_spec = binarize(
                predict_volume(spec_ckpt.model, tp.image, prior, spec_spec, args.threads).prob,
                args.threshold);
            if (!same_dims(m_sens.dims, m_spec.dims)) {
                throw ValidationError("ensemble: model output dims mismatch");
            }
            AnnotatedMask annotated = ensemble_union(m_sens, m_spec);
            annotated.mask.meta = tp.image.meta;

            const std::string rel =
                study.patient_id + "/tp" + std::to_string(t) + "_union.vxg";
            write_vxg(annotated.mask, out_dir / rel);

            json comps = json::array();
            int confirmed = 0, candidates = 0;
            for (const auto& c : annotated.components) {
                double cx = 0, cy = 0, cz = 0;
                for (const auto v : c.voxels) {
                    cx += double(v % annotated.mask.dims[0]);
                    cy += double((v / annotated.mask.dims[0]) % annotated.mask.dims[1]);
                    cz += double(v / (std::int64_t(annotated.mask.dims[0]) *
                                      annotated.mask.dims[1]));
                }
                const double n = double(c.voxels.size());
                comps.push_back({{"id", c.id},
                                 {"tag", component_tag_name(c.tag)},
                                 {"source", component_source_name(c.source)},
                                 {"voxels", c.voxels.size()},
                                 {"centroid", {cx / n, cy / n, cz / n}}});
                if (c.tag == ComponentTag::confirmed) ++confirmed;
                else ++candidates;
            }
            total_confirmed += confirmed;
            total_candidates += candidates;
            ++volumes;
            tps.push_back({{"timepoint", t},
                           {"union_mask", rel},
                           {"confirmed", confirmed},
                           {"candidates_for_review", candidates},
                           {"components", std::move(comps)}});
        }
        review.push_back({{"patient_id", study.patient_id}, {"timepoints", std::move(tps)}});
    }
    json report{{"ckpt_sens", fingerprint_json(sens.fingerprint)},
                {"ckpt_spec", fingerprint_json(spec_ckpt.fingerprint)},
                {"threshold", args.threshold},
                {"patients", std::move(review)},
                {"totals",
                 {{"confirmed", total_confirmed},
                  {"candidates_for_review", total_candidates},
                  {"volumes", volumes},
                  {"candidates_per_volume",
                   volumes > 0 ? double(total_candidates) / volumes : 0.0}}}};
    atomic_write_file(out_dir / "review_report.json", report.dump(2) + "\n");
    std::cout << "confirmed lesions: " << total_confirmed << ", candidates needing review: "
              << total_candidates << " over " << volumes << " volumes ("
              << (volumes > 0 ? double(total_candidates) / volumes : 0.0)
              << " per volume)\nreport: " << (out_dir / "review_report.json").string() << "\n";
    return 0;
}

// --- curves -------------------------------------------------------------------

struct CurvesArgs {
    std::string mode;  // roc | pr
    std::string ckpt_path;
    std::string manifest_path;
    std::vector<std::string> report_paths;
    std::string out_prefix;
    int n_thresholds = 21;
    int tile_size = 16;
    int infer_size = 45;
    int threads = 0;
};

void write_curve_csv(const CurvePoints& curve, const fs::path& path) {
    std::ostringstream csv;
    csv << "x,y\n";
    for (const auto& p : curve.points) csv << p[0] << "," << p[1] << "\n";
    atomic_write_file(path, csv.str());
}

int run_curves(const CurvesArgs& args) {
    if (args.mode == "roc") {
        const CorpusManifest manifest = load_manifest(args.manifest_path);
        const std::vector<LongitudinalStudy> corpus = load_corpus(manifest);
        const Checkpoint ckpt = load_checkpoint(args.ckpt_path);
        const SegmentSpec spec = spec_for_model(ckpt.model, args.infer_size);

        std::vector<double> thresholds;
        for (int i = 0; i < args.n_thresholds; ++i) {
            thresholds.push_back(1.0 - double(i) / (args.n_thresholds - 1));
        }
        thresholds.front() = 1.0;
        thresholds.back() = 0.0;

        std::vector<Volume> probs;
        std::vector<const Volume*> prob_ptrs;
        std::vector<const MaskVolume*> ref_ptrs;
        for (const auto& study : corpus) {
            for (std::size_t t = 0; t < study.timepoints.size(); ++t) {
                const Volume* prior = study.has_prior(static_cast<int>(t))
                                          ? &study.timepoints[t - 1].image
                                          : nullptr;
                probs.push_back(
                    predict_volume(ckpt.model, study.timepoints[t].image, prior, spec,
                                   args.threads)
                        .prob);
            }
        }
        std::size_t k = 0;
        for (const auto& study : corpus) {
            for (const auto& tp : study.timepoints) {
                prob_ptrs.push_back(&probs[k++]);
                ref_ptrs.push_back(&tp.reference_mask);
            }
        }
        const CurvePoints curve =
            roc_points_aggregate(prob_ptrs, ref_ptrs, args.tile_size, thresholds);
        write_curve_csv(curve, args.out_prefix + "_roc.csv");
        PlotSeries series{"roc", curve.points, plot_palette_color(0)};
        write_line_plot_png(args.out_prefix + "_roc.png", {series});
        std::cout << "ROC AUC = " << curve.auc << "\n"
                  << "wrote " << args.out_prefix << "_roc.csv and " << args.out_prefix
                  << "_roc.png\n";
        return 0;
    }

    // pr mode: one (sensitivity, precision) point per eval report.
    std::vector<std::array<double, 2>> points;
    for (const auto& path : args.report_paths) {
        json j;
        try {
            j = json::parse(read_text_file(path));
        } catch (const json::exception& e) {
            throw ValidationError("unparseable eval report " + path + ": " + e.what());
        }
        try {
            const auto& lesion = j.at("aggregate").at("lesion");
            points.push_back({lesion.at("sensitivity").get<double>(),
                              lesion.at("precision").get<double>()});
        } catch (const json::exception& e) {
            throw ValidationError("eval report " + path + " missing aggregate metrics: " +
                                  e.what());
        }
    }
    const CurvePoints curve = pr_points(points);
    write_curve_csv(curve, args.out_prefix + "_pr.csv");
    PlotSeries series{"pr", curve.points, plot_palette_color(1)};
    write_line_plot_png(args.out_prefix + "_pr.png", {series});
    std::cout << "PR AUC = " << curve.auc << "\n"
              << "wrote " << args.out_prefix << "_pr.csv and " << args.out_prefix << "_pr.png\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"longitudinal lesion detection toolkit"};
    app.require_subcommand(1);

    PhantomArgs phantom_args;
    auto* cmd_phantom = app.add_subcommand("phantom", "generate synthetic longitudinal studies");
    cmd_phantom->add_option("--spec", phantom_args.spec_path, "phantom spec JSON (defaults used when omitted)");
    cmd_phantom->add_option("--out", phantom_args.out_dir, "output directory")->required();
    cmd_phantom->add_option("--n-patients", phantom_args.n_patients, "number of studies")
        ->check(CLI::NonNegativeNumber);
    cmd_phantom->add_option("--seed", phantom_args.seed, "master seed");

    TrainArgs train_args;
    auto* cmd_train = app.add_subcommand("train", "train a detection model on a corpus");
    cmd_train->add_option("--manifest", train_args.manifest_path, "corpus manifest JSON")->required();
    cmd_train->add_option("--out", train_args.out_path, "checkpoint output path")->required();
    cmd_train->add_option("--log", train_args.log_path, "training log JSON (default <out>.log.json)");
    cmd_train->add_option("--loss", train_args.loss, "bce|jvss|sse|dice")
        ->check(CLI::IsMember({"bce", "jvss", "sse", "dice"}));
    cmd_train->add_option("--alpha", train_args.alpha, "sensitivity weight")
        ->check(CLI::Range(0.0, 1.0));
    cmd_train->add_option("--epsilon", train_args.epsilon, "VSS denominator guard")
        ->check(CLI::PositiveNumber);
    cmd_train->add_option("--prior-mode", train_args.prior_mode, "none|channel|path")
        ->check(CLI::IsMember({"none", "channel", "path"}));
    cmd_train->add_option("--epochs", train_args.epochs)->check(CLI::PositiveNumber);
    cmd_train->add_option("--seed", train_args.seed);
    cmd_train->add_option("--lr", train_args.learning_rate)->check(CLI::NonNegativeNumber);
    cmd_train->add_option("--momentum", train_args.momentum)->check(CLI::Range(0.0, 0.9999));
    cmd_train->add_option("--l1", train_args.l1)->check(CLI::NonNegativeNumber);
    cmd_train->add_option("--l2", train_args.l2)->check(CLI::NonNegativeNumber);
    cmd_train->add_option("--batch-size", train_args.batch_size)->check(CLI::PositiveNumber);
    cmd_train->add_option("--segments-per-epoch", train_args.segments_per_epoch)
        ->check(CLI::PositiveNumber);
    cmd_train->add_option("--validation-fraction", train_args.validation_fraction)
        ->check(CLI::Range(0.0, 0.9999));
    cmd_train->add_option("--n-conv-layers", train_args.n_conv_layers)->check(CLI::PositiveNumber);
    cmd_train->add_option("--channels", train_args.channels,
                          "channels per conv layer (default 8 each)");
    cmd_train->add_option("--lowres-factors", train_args.lowres_factors,
                          "low-res pathway factors (may be empty)");
    cmd_train->add_option("--head-layers", train_args.head_layers)->check(CLI::PositiveNumber);
    cmd_train->add_option("--main-size", train_args.main_size)->check(CLI::PositiveNumber);
    cmd_train->add_option("--infer-size", train_args.infer_size)->check(CLI::PositiveNumber);
    cmd_train->add_option("--tumor-fraction", train_args.tumor_fraction)
        ->check(CLI::Range(0.0, 1.0));
    cmd_train->add_option("--threads", train_args.threads)->check(CLI::NonNegativeNumber);

    EvalArgs eval_args;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    cmd_eval->add_option("--manifest", eval_args.manifest_path)->required();
    cmd_eval->add_option("--ckpt", eval_args.ckpt_path)->required();
    cmd_eval->add_option("--report", eval_args.report_path, "JSON report output")->required();
    cmd_eval->add_option("--csv", eval_args.csv_path, "summary CSV output");
    cmd_eval->add_option("--threshold", eval_args.threshold)->check(CLI::Range(0.0, 1.0));
    cmd_eval->add_option("--tile-size", eval_args.tile_size)->check(CLI::PositiveNumber);
    cmd_eval->add_option("--infer-size", eval_args.infer_size)->check(CLI::PositiveNumber);
    cmd_eval->add_option("--threads", eval_args.threads)->check(CLI::NonNegativeNumber);

    EnsembleArgs ensemble_args;
    auto* cmd_ensemble =
        app.add_subcommand("ensemble", "combine high-sensitivity and high-specificity models");
    cmd_ensemble->add_option("--ckpt-sens", ensemble_args.ckpt_sens)->required();
    cmd_ensemble->add_option("--ckpt-spec", ensemble_args.ckpt_spec)->required();
    cmd_ensemble->add_option("--manifest", ensemble_args.manifest_path)->required();
    cmd_ensemble->add_option("--out", ensemble_args.out_dir)->required();
    cmd_ensemble->add_option("--threshold", ensemble_args.threshold)->check(CLI::Range(0.0, 1.0));
    cmd_ensemble->add_option("--infer-size", ensemble_args.infer_size)->check(CLI::PositiveNumber);
    cmd_ensemble->add_option("--threads", ensemble_args.threads)->check(CLI::NonNegativeNumber);

    CurvesArgs curves_args;
    auto* cmd_curves = app.add_subcommand("curves", "ROC / PR curves with AUC");
    cmd_curves->add_option("--mode", curves_args.mode, "roc|pr")
        ->required()
        ->check(CLI::IsMember({"roc", "pr"}));
    cmd_curves->add_option("--ckpt", curves_args.ckpt_path, "checkpoint (roc mode)");
    cmd_curves->add_option("--manifest", curves_args.manifest_path, "manifest (roc mode)");
    cmd_curves->add_option("--reports", curves_args.report_paths,
                           "eval report JSONs, one PR point each (pr mode)");
    cmd_curves->add_option("--out", curves_args.out_prefix, "output prefix")->required();
    cmd_curves->add_option("--n-thresholds", curves_args.n_thresholds)->check(CLI::Range(2, 10001));
    cmd_curves->add_option("--tile-size", curves_args.tile_size)->check(CLI::PositiveNumber);
    cmd_curves->add_option("--infer-size", curves_args.infer_size)->check(CLI::PositiveNumber);
    cmd_curves->add_option("--threads", curves_args.threads)->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
        if (cmd_phantom->parsed()) return run_phantom(phantom_args);
        if (cmd_train->parsed()) return run_train(train_args);
        if (cmd_eval->parsed()) return run_eval(eval_args);
        if (cmd_ensemble->parsed()) return run_ensemble(ensemble_args);
        if (cmd_curves->parsed()) {
            if (curves_args.mode == "roc" &&
                (curves_args.ckpt_path.empty() || curves_args.manifest_path.empty())) {
                std::cerr << "curves --mode roc requires --ckpt and --manifest\n";
                return 1;
            }
            if (curves_args.mode == "pr" && curves_args.report_paths.size() < 2) {
                std::cerr << "curves --mode pr requires at least 2 --reports\n";
                return 1;
            }
            return run_curves(curves_args);
        }
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
