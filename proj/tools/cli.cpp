#include "cli.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hydra/error.hpp"
#include "hydra/eval.hpp"
#include "hydra/hydra.hpp"
#include "hydra/model_io.hpp"
#include "hydra/pipeline.hpp"
#include "hydra/stats.hpp"
#include "hydra/trace.hpp"

namespace hydra::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::string format;  // empty: infer from file extension
    bool json = false;
};

TraceFormat format_or_infer(const Globals& g, const fs::path& path) {
    if (g.format == "csv") return TraceFormat::csv;
    if (g.format == "jsonl") return TraceFormat::jsonl;
    return format_for_path(path);
}

Trace read_trace(const Globals& g, const fs::path& path) {
    if (g.format.empty()) return load_trace(path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open trace '" + path.string() + "'");
    return parse_trace(in, format_or_infer(g, path), path.stem().string());
}

// Runs `body` with a stream bound to `path`, or to `fallback` when path is empty.
void with_output(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
    if (path.empty()) {
        body(fallback);
        return;
    }
    std::ofstream file(path);
    if (!file) throw Error("cannot open '" + path + "' for writing");
    body(file);
    file.flush();
    if (!file) throw Error("write failed for '" + path + "'");
}

// Profile for a single-candidate model: the explicit flag wins over the copy
// embedded in the model file.
ServerProfile resolve_profile(const std::string& flag, const std::optional<ServerProfile>& embedded,
                              const std::string& what) {
    if (!flag.empty()) return load_profile(flag);
    if (embedded) return *embedded;
    throw ConfigError(what + " has no embedded profile; pass --profile");
}

CandidateModelDoc load_candidate(const std::string& path) {
    auto file = load_model_file(path);
    if (auto* doc = std::get_if<CandidateModelDoc>(&file)) return std::move(*doc);
    throw ConfigError("'" + path + "' is a hydra model, expected a single candidate model");
}

std::vector<PowerPrediction> predict_with_file(const std::string& model_path, const std::string& profile_flag,
                                               const Trace& trace) {
    auto file = load_model_file(model_path);
    if (auto* h = std::get_if<HydraModel>(&file)) return run_over_trace(*h, trace);
    auto& doc = std::get<CandidateModelDoc>(file);
    const auto profile = resolve_profile(profile_flag, doc.profile, "'" + model_path + "'");
    return run_single_over_trace(doc.model, std::string(kind_name(doc.model)), profile, trace);
}

CLI::Validator at_least(double lo) {
    std::ostringstream bound;
    bound << lo;
    return CLI::Validator(
        [lo, b = bound.str()](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v)) return "'" + s + "' is not a number";
            return v >= lo ? std::string{} : "value " + s + " must be >= " + b;
        },
        ">=" + bound.str());
}

const CLI::Validator kAlphaValidator(
    [](std::string& s) -> std::string {
        double v = 0.0;
        if (!CLI::detail::lexical_cast(s, v)) return "'" + s + "' is not a number";
        for (double a : kAlphaFamily)
            if (v == a) return {};
        return "alpha must be one of 1, 2, 0.5";
    },
    "{1,2,0.5}");

// ---------------------------------------------------------------------------

struct GenerateOpts {
    std::string regime = "mixed";
    std::int64_t samples = 1000;
    double noise = 0.0;
    double container_noise = 0.0;
    std::int64_t mix_period = 120;
    std::string profile;
    std::string profile_out;
    std::string out;
};

void cmd_generate(const Globals& g, const GenerateOpts& o, std::ostream& out) {
    SyntheticConfig cfg;
    cfg.regime = regime_from_string(o.regime);
    cfg.duration_samples = o.samples;
    cfg.noise_sigma_watts = o.noise;
    cfg.container_noise = o.container_noise;
    cfg.mix_period = o.mix_period;
    cfg.seed = g.seed;
    if (!o.profile.empty()) cfg.profile = load_profile(o.profile);
    const Trace trace = generate_synthetic(cfg);
    save_trace(o.out, trace, format_or_infer(g, o.out));
    if (!o.profile_out.empty()) save_profile(o.profile_out, cfg.profile);
    if (g.json)
        out << json{{"out", o.out}, {"samples", trace.size()}, {"regime", o.regime}, {"seed", g.seed}}.dump() << '\n';
    else
        out << "wrote " << trace.size() << " samples to " << o.out << '\n';
}

struct CorrelateOpts {
    std::string trace;
    double threshold = 0.7;
    std::string out;
};

void cmd_correlate(const Globals& g, const CorrelateOpts& o, std::ostream& out) {
    const auto report = select_features(read_trace(g, o.trace), o.threshold);
    with_output(o.out, out, [&](std::ostream& os) {
        if (!g.json) {
            write_correlation_csv(os, report);
            return;
        }
        json rows = json::array();
        for (const auto& f : report.features)
            rows.push_back({{"feature", f.feature}, {"r", f.r ? json(*f.r) : json(nullptr)}, {"selected", f.selected}});
        os << json{{"threshold", report.threshold}, {"features", rows}}.dump(2) << '\n';
    });
}

struct TrainOpts {
    std::string kind;
    std::string trace;
    std::string profile;
    std::string out;
    std::optional<double> alpha;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double validation_fraction = 0.1;
};

void cmd_train(const Globals& g, const TrainOpts& o, std::ostream& out) {
    const Trace trace = read_trace(g, o.trace);
    const ServerProfile profile = load_profile(o.profile);
    if (o.kind == "analytical") {
        const AnalyticalModel model = o.alpha ? make_analytical(*o.alpha) : fit_alpha(trace, profile);
        const auto preds = run_single_over_trace(model, "analytical", profile, trace);
        const double err = evaluate(preds, trace).overall_rmse_watts;
        save_json(o.out, model_to_json(model, profile));
        if (g.json)
            out << json{{"kind", "analytical"}, {"alpha", model.alpha}, {"rmse_watts", err}, {"fitted", !o.alpha}}.dump()
                << '\n';
        else
            out << "alpha: " << model.alpha << (o.alpha ? " (fixed)" : " (fitted)") << "\nrmse_watts: " << err << '\n';
        return;
    }

    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch_size;
    tc.learning_rate = o.learning_rate;
    tc.validation_fraction = o.validation_fraction;
    tc.seed = g.seed;
    const NormalizationStats norm = fit_normalization(trace);
    const auto examples = make_mlp_examples(trace, norm, profile);
    const TrainResult r = train_mlp(examples, norm, tc);
    save_json(o.out, model_to_json(r.model, profile));
    const double final_loss = r.loss_history.empty() ? r.initial_loss : r.loss_history.back();
    if (g.json) {
        out << json{{"kind", "mlp"},
                    {"train_loss", final_loss},
                    {"validation_loss", r.validation_loss ? json(*r.validation_loss) : json(nullptr)},
                    {"epochs", r.loss_history.size()},
                    {"train_size", r.train_size},
                    {"validation_size", r.validation_size}}
                   .dump()
            << '\n';
        return;
    }
    out << "train_loss: " << final_loss << '\n';
    if (r.validation_loss)
        out << "validation_loss: " << *r.validation_loss << '\n';
    else
        out << "validation_loss: n/a (no validation split)\n";
}

struct SelectorOpts {
    std::string trace;
    std::vector<std::string> candidates;
    std::string profile;
    std::string out;
    std::string labels_out;
    std::size_t window = 30;
    double epsilon = 0.05;
    double holdout = 0.2;
    std::size_t selection_interval = 1;
    std::size_t trees = 100;
    std::size_t max_depth = 12;
    std::size_t min_samples_split = 2;
    std::size_t features_per_split = 4;
    bool no_bootstrap = false;
};

void cmd_train_selector(const Globals& g, const SelectorOpts& o, std::ostream& out) {
    const Trace trace = read_trace(g, o.trace);
    std::vector<CandidateModel> models;
    std::optional<ServerProfile> embedded;
    for (const auto& path : o.candidates) {
        auto doc = load_candidate(path);
        if (!embedded) embedded = doc.profile;
        models.push_back(std::move(doc.model));
    }
    const ServerProfile profile = resolve_profile(o.profile, embedded, "the first candidate file");

    SelectorTrainingConfig cfg;
    cfg.labeling.window = o.window;
    cfg.labeling.epsilon_rel = o.epsilon;
    cfg.holdout_fraction = o.holdout;
    cfg.selection_interval = o.selection_interval;
    cfg.forest.n_trees = o.trees;
    cfg.forest.max_depth = o.max_depth;
    cfg.forest.min_samples_split = o.min_samples_split;
    cfg.forest.feature_subsample_k = o.features_per_split;
    cfg.forest.bootstrap = !o.no_bootstrap;
    cfg.forest.seed = g.seed;

    const auto result = build_hydra(trace, make_candidates(std::move(models)), profile, cfg);
    save_json(o.out, hydra_to_json(result.model));
    if (!o.labels_out.empty()) {
        std::vector<SelectorExample> all = result.train;
        all.insert(all.end(), result.heldout.begin(), result.heldout.end());
        with_output(o.labels_out, out, [&](std::ostream& os) { write_selector_examples_csv(os, all); });
    }

    if (g.json) {
        json labels = json::object();
        for (const auto& [id, n] : result.label_counts) labels[id] = n;
        out << json{{"labels", labels},
                    {"train_windows", result.train.size()},
                    {"heldout_windows", result.heldout.size()},
                    {"heldout_accuracy", result.heldout_accuracy ? json(*result.heldout_accuracy) : json(nullptr)}}
                   .dump()
            << '\n';
        return;
    }
    out << "label distribution:\n";
    for (const auto& [id, n] : result.label_counts) out << "  " << id << ": " << n << '\n';
    if (result.heldout_accuracy)
        out << "heldout_accuracy: " << *result.heldout_accuracy << " (" << result.heldout.size() << " windows)\n";
    else
        out << "heldout_accuracy: n/a (no windows held out)\n";
}

struct PredictOpts {
    std::string model;
    std::string trace;
    std::string profile;
    std::string out;
};

void cmd_predict(const Globals& g, const PredictOpts& o, std::ostream& out) {
    const auto preds = predict_with_file(o.model, o.profile, read_trace(g, o.trace));
    with_output(o.out, out, [&](std::ostream& os) { write_predictions_csv(os, preds); });
}

struct EvaluateOpts {
    std::string predictions;
    std::string model;
    std::string trace;
    std::string profile;
    bool csv = false;
};

void cmd_evaluate(const Globals& g, const EvaluateOpts& o, std::ostream& out) {
    const Trace trace = read_trace(g, o.trace);
    std::vector<PowerPrediction> preds;
    if (!o.predictions.empty()) {
        std::ifstream in(o.predictions);
        if (!in) throw Error("cannot open predictions '" + o.predictions + "'");
        preds = parse_predictions_csv(in);
    } else {
        preds = predict_with_file(o.model, o.profile, trace);
    }
    const auto report = evaluate(preds, trace);
    if (g.json)
        out << eval_to_json(report).dump(2) << '\n';
    else if (o.csv)
        write_eval_csv(out, report);
    else
        write_eval_table(out, report);
}

struct BenchOpts {
    std::vector<std::string> models;
    std::string trace;
    std::string profile;
    std::size_t iterations = 10000;
};

void cmd_bench(const Globals& g, const BenchOpts& o, std::ostream& out) {
    const Trace trace = read_trace(g, o.trace);
    // Loaded models must outlive the subjects that reference them.
    std::deque<ModelFile> files;
    std::deque<SelectionState> states;
    std::deque<ServerProfile> profiles;
    std::vector<BenchSubject> subjects;
    for (const auto& path : o.models) {
        const std::string id = fs::path(path).stem().string();
        files.push_back(load_model_file(path));
        if (const auto* h = std::get_if<HydraModel>(&files.back())) {
            auto& st = states.emplace_back();
            subjects.push_back({id, [h, &st](const StatSample& s) { return hydra_predict(*h, s, st).predicted_watts; }});
            continue;
        }
        const auto& doc = std::get<CandidateModelDoc>(files.back());
        const auto& profile = profiles.emplace_back(resolve_profile(o.profile, doc.profile, "'" + path + "'"));
        subjects.push_back({id, [m = &doc.model, p = &profile](const StatSample& s) {
                                return candidate_predict_watts(*m, *p, s);
                            }});
    }
    const auto report = latency_bench(subjects, trace.samples, o.iterations);
    if (g.json)
        out << latency_to_json(report).dump(2) << '\n';
    else
        write_latency_table(out, report);
}

struct RaplOpts {
    std::string trace;
    std::string out;
};

void cmd_rapl_report(const Globals& g, const RaplOpts& o, std::ostream& out) {
    const auto report = rapl_ratio_report(read_trace(g, o.trace));
    with_output(o.out, out, [&](std::ostream& os) {
        if (!g.json) {
            write_rapl_csv(os, report);
            return;
        }
        os << json{{"pearson_wall_rapl", report.pearson_wall_rapl},
                   {"timestamp", report.timestamps},
                   {"wall_watts", report.wall_watts},
                   {"rapl_watts", report.rapl_watts},
                   {"ratio", report.ratio}}
                  .dump()
           << '\n';
    });
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hydra hybrid server power model toolkit", "hydra"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every randomized step (echoed to stderr)")->capture_default_str();
    app.add_option("--format", g.format, "Trace format for files written and read (default: from extension)")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    app.add_flag("--json", g.json, "Emit reports as a single JSON document");

    std::function<void()> action;

    GenerateOpts gen;
    auto* sc = app.add_subcommand("generate", "Write a synthetic trace");
    sc->add_option("--regime", gen.regime, "compute, noncompute or mixed")
        ->check(CLI::IsMember({"compute", "noncompute", "mixed"}))
        ->capture_default_str();
    sc->add_option("--samples", gen.samples, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--noise", gen.noise, "Gaussian power noise sigma in watts")->check(at_least(0))->capture_default_str();
    sc->add_option("--container-noise", gen.container_noise, "Strength of container helper-process noise")
        ->check(at_least(0))
        ->capture_default_str();
    sc->add_option("--mix-period", gen.mix_period, "Samples per regime block in mixed traces")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--profile", gen.profile, "Server profile JSON (default: built-in reference server)")
        ->check(CLI::ExistingFile);
    sc->add_option("--profile-out", gen.profile_out, "Also write the profile used to this JSON file");
    sc->add_option("--out", gen.out, "Output trace (.csv or .jsonl)")->required();
    sc->callback([&] { action = [&] { cmd_generate(g, gen, out); }; });

    CorrelateOpts cor;
    sc = app.add_subcommand("correlate", "Pearson correlation of each statistic with measured power");
    sc->add_option("--trace", cor.trace, "Input trace with measured power")->required()->check(CLI::ExistingFile);
    sc->add_option("--threshold", cor.threshold, "Selection threshold on |r|")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sc->add_option("--out", cor.out, "Output CSV (default: stdout)");
    sc->callback([&] { action = [&] { cmd_correlate(g, cor, out); }; });

    TrainOpts tr;
    sc = app.add_subcommand("train", "Train a candidate model");
    sc->add_option("--kind", tr.kind, "analytical or mlp")->required()->check(CLI::IsMember({"analytical", "mlp"}));
    sc->add_option("--trace", tr.trace, "Training trace with measured power")->required()->check(CLI::ExistingFile);
    sc->add_option("--profile", tr.profile, "Server profile JSON")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", tr.out, "Output model file")->required();
    sc->add_option("--alpha", tr.alpha, "analytical: fix alpha instead of fitting it")->check(kAlphaValidator);
    sc->add_option("--epochs", tr.epochs, "mlp: training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--batch-size", tr.batch_size, "mlp: mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--lr", tr.learning_rate, "mlp: Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--validation-fraction", tr.validation_fraction, "mlp: share of examples held out")
        ->check(CLI::Range(0.0, 0.9))
        ->capture_default_str();
    sc->callback([&] { action = [&] { cmd_train(g, tr, out); }; });

    SelectorOpts sel;
    sc = app.add_subcommand("train-selector", "Label windows and train the selector forest into a hydra model");
    sc->add_option("--trace", sel.trace, "Training trace with measured power")->required()->check(CLI::ExistingFile);
    sc->add_option("--candidates", sel.candidates, "Candidate model files")
        ->required()
        ->expected(1, -1)
        ->check(CLI::ExistingFile);
    sc->add_option("--profile", sel.profile, "Server profile JSON (default: from the first candidate)")
        ->check(CLI::ExistingFile);
    sc->add_option("--out", sel.out, "Output hydra model file")->required();
    sc->add_option("--labels-out", sel.labels_out, "Also write the labeled windows as CSV");
    sc->add_option("--window", sel.window, "Samples per labeling window")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--epsilon", sel.epsilon, "Relative RMSE slack for the lightest adequate model")
        ->check(at_least(0))
        ->capture_default_str();
    sc->add_option("--holdout", sel.holdout, "Trailing share of windows held out for scoring")
        ->check(CLI::Range(0.0, 0.99))
        ->capture_default_str();
    sc->add_option("--selection-interval", sel.selection_interval, "Run the selector every N samples")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--trees", sel.trees, "Number of trees")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--max-depth", sel.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--min-samples-split", sel.min_samples_split, "Minimum samples to split a node")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--features-per-split", sel.features_per_split, "Features drawn at each split")
        ->check(CLI::Range(1, static_cast<int>(kNumFeatures)))
        ->capture_default_str();
    sc->add_flag("--no-bootstrap", sel.no_bootstrap, "Grow every tree on the full training set");
    sc->callback([&] { action = [&] { cmd_train_selector(g, sel, out); }; });

    PredictOpts pr;
    sc = app.add_subcommand("predict", "Predict power over a trace");
    sc->add_option("--model", pr.model, "Hydra or single candidate model file")->required()->check(CLI::ExistingFile);
    sc->add_option("--trace", pr.trace, "Input trace")->required()->check(CLI::ExistingFile);
    sc->add_option("--profile", pr.profile, "Profile for a single model without one embedded")->check(CLI::ExistingFile);
    sc->add_option("--out", pr.out, "Output predictions CSV (default: stdout)");
    sc->callback([&] { action = [&] { cmd_predict(g, pr, out); }; });

    EvaluateOpts ev;
    sc = app.add_subcommand("evaluate", "RMSE overall and per utilization bin");
    auto* ev_pred = sc->add_option("--predictions", ev.predictions, "Predictions CSV")->check(CLI::ExistingFile);
    auto* ev_model = sc->add_option("--model", ev.model, "Model file to run instead")->check(CLI::ExistingFile);
    ev_pred->excludes(ev_model);
    sc->add_option("--trace", ev.trace, "Trace with measured power")->required()->check(CLI::ExistingFile);
    sc->add_option("--profile", ev.profile, "Profile for a single model without one embedded")->check(CLI::ExistingFile);
    sc->add_flag("--csv", ev.csv, "Emit CSV instead of a table");
    sc->callback([&, ev_pred, ev_model] {
        if (ev_pred->count() == 0 && ev_model->count() == 0)
            throw CLI::ValidationError("evaluate", "one of --predictions or --model is required");
        action = [&] { cmd_evaluate(g, ev, out); };
    });

    BenchOpts be;
    sc = app.add_subcommand("bench", "Per-prediction latency of model files");
    sc->add_option("--models", be.models, "Model files (hydra or single)")
        ->required()
        ->expected(1, -1)
        ->check(CLI::ExistingFile);
    sc->add_option("--trace", be.trace, "Inputs, cycled in order")->required()->check(CLI::ExistingFile);
    sc->add_option("--profile", be.profile, "Profile for single models without one embedded")->check(CLI::ExistingFile);
    sc->add_option("--iterations", be.iterations, "Timed calls per model (>= 1000)")
        ->check(at_least(static_cast<double>(kMinBenchIterations)))
        ->capture_default_str();
    sc->callback([&] { action = [&] { cmd_bench(g, be, out); }; });

    RaplOpts ra;
    sc = app.add_subcommand("rapl-report", "Wall-to-RAPL power ratio per sample");
    sc->add_option("--trace", ra.trace, "Trace with measured_power_watts and rapl_watts")
        ->required()
        ->check(CLI::ExistingFile);
    sc->add_option("--out", ra.out, "Output CSV (default: stdout)");
    sc->callback([&] { action = [&] { cmd_rapl_report(g, ra, out); }; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "hydra: usage error: " << e.what() << " (see --help)\n";
        return kExitUsage;
    }

    err << "seed: " << g.seed << '\n';
    try {
        action();
    } catch (const std::exception& e) {
        err << "hydra: error: " << e.what() << '\n';
        return kExitDataError;
    }
    return kExitOk;
}

}  // namespace hydra::cli
