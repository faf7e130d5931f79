#include "safsar/cli/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "safsar/cache/cache_io.hpp"
#include "safsar/cache/params_io.hpp"
#include "safsar/episodic/embeddings.hpp"
#include "safsar/episodic/pipeline_check.hpp"

#ifndef SAFSAR_VERSION
#define SAFSAR_VERSION "unknown"
#endif

namespace safsar::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

std::string format_fixed(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

struct ModelFlags {
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t video_depth = 4;
    std::size_t text_depth = 2;
    std::size_t frames = 8;
    std::size_t fusion_layers = 2;
    std::size_t freeze_depth = 0;
    std::size_t crop = 0;
    double lambda = 1.0;
    double temperature = 1.0;
    double flip = 0.0;
    bool ablate_fusion = false;
    bool ablate_tlm = false;

    void add_to(CLI::App* app) {
        app->add_option("--dim", dim, "Model width d")->capture_default_str();
        app->add_option("--heads", heads, "Attention heads h")->capture_default_str();
        app->add_option("--video-depth", video_depth, "Video encoder layers")->capture_default_str();
        app->add_option("--text-depth", text_depth, "Text encoder layers")->capture_default_str();
        app->add_option("--frames", frames, "Frames sampled per clip (T)")->capture_default_str();
        app->add_option("--fusion-layers", fusion_layers, "Fusion transformer layers (l)")->capture_default_str();
        app->add_option("--freeze-depth", freeze_depth, "Video layers frozen with the patch embedding")
            ->capture_default_str();
        app->add_option("--crop", crop, "Square crop size; 0 keeps full frames")->capture_default_str();
        app->add_option("--lambda", lambda, "Weight of the global loss")->capture_default_str();
        app->add_option("--temperature", temperature, "Softmax temperature on cosine logits")
            ->capture_default_str();
        app->add_option("--flip-prob", flip, "Horizontal flip probability during training")
            ->capture_default_str();
        app->add_flag("--ablate-fusion", ablate_fusion, "Disable text-video fusion");
        app->add_flag("--ablate-tlm", ablate_tlm, "Disable the task-specific learning module");
    }

    PipelineConfig config() const {
        PipelineConfig c;
        c.shape.dim = dim;
        c.shape.heads = heads;
        c.video_depth = video_depth;
        c.text_depth = text_depth;
        c.frames = frames;
        c.freeze_depth = freeze_depth;
        c.augment.crop_height = c.augment.crop_width = crop;
        c.augment.flip_probability = flip;
        c.model.fusion_layers = fusion_layers;
        c.model.lambda = lambda;
        c.model.temperature = temperature;
        c.model.use_fusion = !ablate_fusion;
        c.model.use_tlm = !ablate_tlm;
        return c;
    }
};

struct DataFlags {
    std::string path;
    std::uint64_t synth_seed = 0;

    void add_to(CLI::App* app) {
        app->add_option("--data", path, "Dataset cache manifest; omitted: built-in synthetic dataset");
        app->add_option("--data-seed", synth_seed, "Seed of the built-in synthetic dataset")->capture_default_str();
    }

    Dataset load() const {
        if (!path.empty()) return cache::read_cache(path);
        SynthSpec spec;
        spec.seed = synth_seed;
        return synth_generate(spec);
    }

    json describe() const {
        if (!path.empty()) return {{"cache", path}};
        return {{"synthetic", true}, {"seed", synth_seed}};
    }
};

// One manifest per invocation, written next to the main artifact.
class RunManifest {
public:
    RunManifest(std::string command, std::uint64_t seed)
        : command_(std::move(command)), seed_(seed), started_(utc_now()) {}

    json config = json::object();
    json artifacts = json::object();
    json results = json::object();

    void write(const fs::path& path, int exit_code) const {
        json j{{"command", command_},
               {"seed", seed_},
               {"config", config},
               {"artifacts", artifacts},
               {"results", results},
               {"started_at", started_},
               {"finished_at", utc_now()},
               {"exit_code", exit_code},
               {"code_version", SAFSAR_VERSION}};
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw CacheIoError("cannot write run manifest " + path.string());
        out << j.dump(2) << '\n';
    }

private:
    std::string command_;
    std::uint64_t seed_;
    std::string started_;
};

fs::path manifest_for(const std::string& explicit_path, const std::string& artifact, const std::string& command) {
    if (!explicit_path.empty()) return explicit_path;
    if (!artifact.empty()) return artifact + ".manifest.json";
    return "safsar-" + command + ".manifest.json";
}

std::string accuracy_line(const EvalReport& r) {
    return "acc=" + format_fixed("%.6f", r.accuracy) + " ci95=" + format_fixed("%.6f", r.ci95) +
           " ways=" + std::to_string(r.ways) + " shots=" + std::to_string(r.shots) +
           " episodes=" + std::to_string(r.episodes) + " seed=" + std::to_string(r.seed);
}

json report_json(const EvalReport& r, const json& config) {
    std::string bitmap;
    bitmap.reserve(r.correct.size());
    for (auto c : r.correct) bitmap.push_back(c ? '1' : '0');
    return {{"accuracy", r.accuracy}, {"ci95", r.ci95},       {"episodes", r.episodes},
            {"ways", r.ways},         {"shots", r.shots},     {"seed", r.seed},
            {"split", r.split},       {"random_predictor", r.random_predictor},
            {"correct", bitmap},      {"config", config}};
}

Model model_for(const std::string& params_path, const Dataset& data, const ModelFlags& flags,
                std::uint64_t seed) {
    if (!params_path.empty()) return cache::load_model(params_path);
    return init_model(data, flags.config(), seed);
}

struct Common {
    std::uint64_t seed = 0;
    std::string manifest;

    void add_to(CLI::App* app) {
        app->add_option("--seed", seed, "Master seed")->capture_default_str();
        app->add_option("--manifest", manifest, "Run manifest path");
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-shot action recognition with text-video fusion and task adaptation", "safsar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SAFSAR_VERSION);

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "Generate the synthetic motion dataset as a clip cache");
    Common gen_c;
    gen_c.add_to(gen);
    SynthSpec spec;
    std::string gen_out;
    gen->add_option("--out", gen_out, "Output manifest path")->required();
    gen->add_option("--classes", spec.classes, "Class count")->capture_default_str();
    gen->add_option("--items", spec.items_per_class, "Items per class")->capture_default_str();
    gen->add_option("--train-classes", spec.train_classes, "Classes in the train split")->capture_default_str();
    gen->add_option("--val-classes", spec.val_classes, "Classes in the val split")->capture_default_str();
    gen->add_option("--raw-frames", spec.frames, "Frames per generated clip")->capture_default_str();
    gen->add_option("--height", spec.height, "Frame height")->capture_default_str();
    gen->add_option("--width", spec.width, "Frame width")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "Episodic training");
    Common tr_c;
    tr_c.add_to(tr);
    DataFlags tr_data;
    tr_data.add_to(tr);
    ModelFlags tr_model;
    tr_model.add_to(tr);
    TrainConfig tcfg;
    std::string tr_out, tr_trace, tr_init;
    tr->add_option("--out", tr_out, "Output parameter file")->required();
    tr->add_option("--trace", tr_trace, "Loss trace (JSON lines); default <out>.trace.jsonl");
    tr->add_option("--init", tr_init, "Start from this parameter file");
    tr->add_option("--ways", tcfg.ways, "Classes per episode (N)")->capture_default_str();
    tr->add_option("--shots", tcfg.shots, "Support items per class (K)")->capture_default_str();
    tr->add_option("--episodes", tcfg.episodes, "Training episodes")->capture_default_str();
    tr->add_option("--lr", tcfg.adam.lr, "Adam learning rate")->capture_default_str();
    tr->add_option("--val-every", tcfg.val_every, "Validation interval in episodes (0: off)")
        ->capture_default_str();
    tr->add_option("--val-episodes", tcfg.val_episodes, "Episodes per validation")->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate over E random episodes");
    Common ev_c;
    ev_c.add_to(ev);
    DataFlags ev_data;
    ev_data.add_to(ev);
    ModelFlags ev_model;
    ev_model.add_to(ev);
    EvalConfig ecfg;
    std::string ev_params, ev_report, ev_split = "test";
    ev->add_option("--params", ev_params, "Parameter file; omitted: freshly initialized model");
    ev->add_option("--report", ev_report, "Write the evaluation report (JSON line) here");
    ev->add_option("--ways", ecfg.ways, "Classes per episode (N)")->capture_default_str();
    ev->add_option("--shots", ecfg.shots, "Support items per class (K)")->capture_default_str();
    ev->add_option("--episodes", ecfg.episodes, "Evaluation episodes (E)")->capture_default_str();
    ev->add_option("--workers", ecfg.workers, "Worker threads (0: all cores)")->capture_default_str();
    ev->add_option("--split", ev_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    ev->add_flag("--random-predictor", ecfg.random_predictor, "Score a uniform random guesser instead");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full pipeline gradient");
    Common gc_c;
    gc_c.add_to(gc);
    PipelineCheckSetup gsetup;
    std::size_t gc_coords = 16, gc_seeds = 1;
    double gc_eps = 1e-4, gc_tol = 1e-4;
    gc->add_option("--dim", gsetup.dim, "Model width d")->capture_default_str();
    gc->add_option("--heads", gsetup.heads, "Attention heads")->capture_default_str();
    gc->add_option("--ways", gsetup.ways, "Classes per episode (N)")->capture_default_str();
    gc->add_option("--shots", gsetup.shots, "Support items per class (K)")->capture_default_str();
    gc->add_option("--tokens", gsetup.tokens, "Description length L")->capture_default_str();
    gc->add_option("--fusion-layers", gsetup.fusion_layers, "Fusion layers (l)")->capture_default_str();
    gc->add_option("--video-depth", gsetup.video_depth, "Video encoder layers")->capture_default_str();
    gc->add_option("--coords", gc_coords, "Coordinates probed per tensor (0: all)")->capture_default_str();
    gc->add_option("--seeds", gc_seeds, "Consecutive seeds to check, starting at --seed")->capture_default_str();
    gc->add_option("--epsilon", gc_eps, "Central-difference step")->capture_default_str();
    gc->add_option("--tol", gc_tol, "Maximum relative error")->capture_default_str();

    // validate-cache
    auto* vc = app.add_subcommand("validate-cache", "Check a cache and print a JSON report");
    Common vc_c;
    vc_c.add_to(vc);
    std::string vc_path;
    vc->add_option("cache", vc_path, "Cache manifest path")->required();

    // dump-embeddings
    auto* de = app.add_subcommand("dump-embeddings", "Write per-episode feature dumps (JSON lines)");
    Common de_c;
    de_c.add_to(de);
    DataFlags de_data;
    de_data.add_to(de);
    ModelFlags de_model;
    de_model.add_to(de);
    EvalConfig dcfg;
    dcfg.episodes = 10;
    std::string de_params, de_out, de_split = "test";
    de->add_option("--params", de_params, "Parameter file; omitted: freshly initialized model");
    de->add_option("--out", de_out, "Output path")->required();
    de->add_option("--ways", dcfg.ways, "Classes per episode (N)")->capture_default_str();
    de->add_option("--shots", dcfg.shots, "Support items per class (K)")->capture_default_str();
    de->add_option("--episodes", dcfg.episodes, "Episodes to dump")->capture_default_str();
    de->add_option("--split", de_split, "Split to sample")->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();

    // param-count
    auto* pc = app.add_subcommand("param-count", "Parameter counts per module");
    Common pc_c;
    pc_c.add_to(pc);
    DataFlags pc_data;
    pc_data.add_to(pc);
    ModelFlags pc_model;
    pc_model.add_to(pc);
    std::string pc_params;
    pc->add_option("--params", pc_params, "Parameter file; omitted: model built from flags and data");

    std::vector<std::string> argv_store{"safsar"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << SAFSAR_VERSION << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    std::optional<RunManifest> manifest;
    fs::path manifest_path;
    auto finish = [&](int code) {
        if (manifest) {
            try {
                manifest->write(manifest_path, code);
            } catch (const std::exception& e) {
                err << "error: " << e.what() << '\n';
                return kExitFailure;
            }
        }
        return code;
    };

    try {
        if (gen->parsed()) {
            spec.seed = gen_c.seed;
            manifest.emplace("gen-synthetic", gen_c.seed);
            manifest_path = manifest_for(gen_c.manifest, gen_out, "gen-synthetic");
            manifest->config = {{"classes", spec.classes},         {"items_per_class", spec.items_per_class},
                                {"train_classes", spec.train_classes}, {"val_classes", spec.val_classes},
                                {"frames", spec.frames},           {"height", spec.height},
                                {"width", spec.width},             {"noise", spec.noise},
                                {"blob_sigma", spec.blob_sigma}};
            const Dataset data = synth_generate(spec);
            cache::write_cache(data, gen_out);
            const double nc = nearest_centroid_accuracy(data);
            manifest->artifacts = {{"manifest", gen_out}};
            manifest->results = {{"items", data.items.size()}, {"nearest_centroid_accuracy", nc}};
            out << "wrote " << data.items.size() << " clips in " << data.classes.size() << " classes to " << gen_out
                << " (nearest-centroid accuracy " << format_fixed("%.4f", nc) << ")\n";
            return finish(kExitOk);
        }

        if (tr->parsed()) {
            tcfg.seed = tr_c.seed;
            if (tr_trace.empty()) tr_trace = tr_out + ".trace.jsonl";
            manifest.emplace("train", tr_c.seed);
            manifest_path = manifest_for(tr_c.manifest, tr_out, "train");
            const Dataset data = tr_data.load();
            Model model = tr_init.empty() ? init_model(data, tr_model.config(), tr_c.seed) : cache::load_model(tr_init);
            manifest->config = {{"data", tr_data.describe()},
                                {"model", cache::model_metadata(model)["config"]},
                                {"ways", tcfg.ways},
                                {"shots", tcfg.shots},
                                {"episodes", tcfg.episodes},
                                {"adam", {{"lr", tcfg.adam.lr}, {"beta1", tcfg.adam.beta1},
                                          {"beta2", tcfg.adam.beta2}, {"eps", tcfg.adam.eps}}},
                                {"val_every", tcfg.val_every},
                                {"val_episodes", tcfg.val_episodes},
                                {"init", tr_init}};
            if (model.config.model.temperature != 1.0) {
                err << "note: softmax temperature " << model.config.model.temperature << " (default 1)\n";
            }
            std::ofstream trace(tr_trace, std::ios::trunc);
            if (!trace) throw CacheIoError("cannot write loss trace " + tr_trace);
            TrainResult result;
            try {
                result = train(data, std::move(model), tcfg, [&](const LossRecord& r) {
                    trace << json{{"episode", r.episode}, {"l1", r.l1}, {"l2", r.l2}, {"loss", r.total}}.dump()
                          << '\n';
                });
            } catch (const DivergedError& e) {
                manifest->results = {{"diverged_at", e.episode()}};
                throw;
            }
            cache::save_model(result.model, tr_out);
            double tail = 0.0;
            const std::size_t n = std::min<std::size_t>(100, result.trace.size());
            for (std::size_t i = result.trace.size() - n; i < result.trace.size(); ++i) tail += result.trace[i].total;
            tail = n ? tail / static_cast<double>(n) : 0.0;
            json val = json::array();
            for (const auto& [at, acc] : result.val_history) val.push_back({{"episodes", at}, {"accuracy", acc}});
            manifest->artifacts = {{"params", tr_out}, {"trace", tr_trace}};
            manifest->results = {{"final_loss", result.trace.empty() ? 0.0 : result.trace.back().total},
                                 {"mean_loss_last_100", tail},
                                 {"validation", val},
                                 {"selected_at", result.selected_at ? json(*result.selected_at) : json(nullptr)}};
            out << "episodes=" << result.trace.size() << " mean_loss_last_100=" << format_fixed("%.6f", tail);
            if (result.selected_at) out << " selected_at=" << *result.selected_at;
            out << " params=" << tr_out << '\n';
            return finish(kExitOk);
        }

        if (ev->parsed()) {
            ecfg.seed = ev_c.seed;
            ecfg.split = parse_split(ev_split);
            manifest.emplace("eval", ev_c.seed);
            manifest_path = manifest_for(ev_c.manifest, ev_report, "eval");
            const Dataset data = ev_data.load();
            const Model model = model_for(ev_params, data, ev_model, ev_c.seed);
            const json config = {{"data", ev_data.describe()},
                                 {"params", ev_params.empty() ? json(nullptr) : json(ev_params)},
                                 {"model", cache::model_metadata(model)["config"]},
                                 {"ways", ecfg.ways},
                                 {"shots", ecfg.shots},
                                 {"episodes", ecfg.episodes},
                                 {"split", ev_split},
                                 {"workers", ecfg.workers},
                                 {"random_predictor", ecfg.random_predictor}};
            manifest->config = config;
            const EvalReport report = evaluate(data, model, ecfg);
            if (!ev_report.empty()) {
                std::ofstream rep(ev_report, std::ios::trunc);
                if (!rep) throw CacheIoError("cannot write report " + ev_report);
                rep << report_json(report, config).dump() << '\n';
                manifest->artifacts = {{"report", ev_report}};
            }
            manifest->results = {{"accuracy", report.accuracy}, {"ci95", report.ci95}};
            out << accuracy_line(report) << '\n';
            return finish(kExitOk);
        }

        if (gc->parsed()) {
            manifest.emplace("gradcheck", gc_c.seed);
            manifest_path = manifest_for(gc_c.manifest, "", "gradcheck");
            manifest->config = {{"dim", gsetup.dim},           {"heads", gsetup.heads},
                                {"ways", gsetup.ways},         {"shots", gsetup.shots},
                                {"tokens", gsetup.tokens},     {"fusion_layers", gsetup.fusion_layers},
                                {"video_depth", gsetup.video_depth}, {"coords_per_tensor", gc_coords},
                                {"seeds", gc_seeds},           {"epsilon", gc_eps},
                                {"tolerance", gc_tol}};
            if (!(gc_eps > 0.0)) throw ConfigError("--epsilon must be positive");
            double worst = 0.0;
            json per_seed = json::array();
            for (std::size_t k = 0; k < gc_seeds; ++k) {
                gsetup.seed = gc_c.seed + k;
                PipelineCheck check = make_pipeline_check(gsetup);
                GradCheckOptions opt;
                opt.coords_per_tensor = gc_coords;
                opt.seed = gsetup.seed;
                const auto r = grad_check<double>(check.objective, check.params, gc_eps, opt);
                worst = std::max(worst, r.max_rel_error);
                per_seed.push_back({{"seed", gsetup.seed},
                                    {"max_rel_error", r.max_rel_error},
                                    {"worst_param", r.worst_param},
                                    {"coords", r.coords_checked}});
                out << "seed=" << gsetup.seed << " max_rel_error=" << format_fixed("%.3e", r.max_rel_error)
                    << " worst=" << r.worst_param << '[' << r.worst_index << "] coords=" << r.coords_checked
                    << " tensors=" << trainable_tensors(check.params) << '\n';
            }
            const bool ok = worst <= gc_tol;
            manifest->results = {{"max_rel_error", worst}, {"passed", ok}, {"per_seed", per_seed}};
            out << "max_rel_error=" << format_fixed("%.3e", worst) << " tol=" << format_fixed("%.1e", gc_tol) << ' '
                << (ok ? "PASS" : "FAIL") << '\n';
            return finish(ok ? kExitOk : kExitFailure);
        }

        if (vc->parsed()) {
            manifest.emplace("validate-cache", vc_c.seed);
            manifest_path = manifest_for(vc_c.manifest, "", "validate-cache");
            manifest->config = {{"manifest", vc_path}};
            const json report = cache::validate_cache(vc_path);
            manifest->results = {{"valid", report["valid"]}, {"violations", report["violations"].size()}};
            out << report.dump(2) << '\n';
            return finish(report["valid"].get<bool>() ? kExitOk : kExitFailure);
        }

        if (de->parsed()) {
            dcfg.seed = de_c.seed;
            dcfg.split = parse_split(de_split);
            manifest.emplace("dump-embeddings", de_c.seed);
            manifest_path = manifest_for(de_c.manifest, de_out, "dump-embeddings");
            const Dataset data = de_data.load();
            const Model model = model_for(de_params, data, de_model, de_c.seed);
            manifest->config = {{"data", de_data.describe()},
                                {"params", de_params.empty() ? json(nullptr) : json(de_params)},
                                {"model", cache::model_metadata(model)["config"]},
                                {"ways", dcfg.ways},
                                {"shots", dcfg.shots},
                                {"episodes", dcfg.episodes},
                                {"split", de_split}};
            std::ofstream dump(de_out, std::ios::trunc);
            if (!dump) throw CacheIoError("cannot write " + de_out);
            const std::size_t n = dump_embeddings(data, model, dcfg, dump);
            manifest->artifacts = {{"embeddings", de_out}};
            manifest->results = {{"records", n}};
            out << "wrote " << n << " episode records to " << de_out << '\n';
            return finish(kExitOk);
        }

        if (pc->parsed()) {
            manifest.emplace("param-count", pc_c.seed);
            manifest_path = manifest_for(pc_c.manifest, "", "param-count");
            Model model;
            if (!pc_params.empty()) {
                model = cache::load_model(pc_params);
            } else {
                model = init_model(pc_data.load(), pc_model.config(), pc_c.seed);
            }
            manifest->config = {{"params", pc_params.empty() ? json(nullptr) : json(pc_params)},
                                {"data", pc_data.describe()},
                                {"model", cache::model_metadata(model)["config"]}};
            struct Row {
                std::size_t tensors = 0, scalars = 0, trainable = 0;
            };
            std::vector<std::string> order;
            std::map<std::string, Row> rows;
            Row total;
            for (const auto& e : model.params.entries()) {
                const std::string mod(param_module(e.name));
                if (!rows.contains(mod)) order.push_back(mod);
                Row& r = rows[mod];
                for (Row* t : {&r, &total}) {
                    t->tensors += 1;
                    t->scalars += e.value.size();
                    t->trainable += e.frozen ? 0 : e.value.size();
                }
            }
            char line[128];
            std::snprintf(line, sizeof line, "%-8s %8s %12s %12s\n", "module", "tensors", "scalars", "trainable");
            out << line;
            json modules = json::object();
            for (const auto& mod : order) {
                const Row& r = rows[mod];
                std::snprintf(line, sizeof line, "%-8s %8zu %12zu %12zu\n", mod.c_str(), r.tensors, r.scalars,
                              r.trainable);
                out << line;
                modules[mod] = {{"tensors", r.tensors}, {"scalars", r.scalars}, {"trainable", r.trainable}};
            }
            std::snprintf(line, sizeof line, "%-8s %8zu %12zu %12zu\n", "total", total.tensors, total.scalars,
                          total.trainable);
            out << line;
            manifest->results = {{"modules", modules},
                                 {"total", {{"tensors", total.tensors},
                                            {"scalars", total.scalars},
                                            {"trainable", total.trainable}}}};
            return finish(kExitOk);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return finish(kExitUsage);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return finish(kExitFailure);
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace safsar::cli
