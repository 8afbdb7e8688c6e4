// Command-line front end. Links the shared library through its C API only.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfconv/sfconv.h"

namespace {

int check(sfc_status st) {
    if (st == SFC_OK) return 0;
    std::fprintf(stderr, "error: %s\n", sfc_last_error());
    return static_cast<int>(st);
}

bool parse_shape(const std::string& text, std::vector<uint64_t>& out) {
    out.clear();
    std::string cur;
    for (char c : text + "x") {
        if (c == 'x' || c == 'X') {
            if (cur.empty()) return false;
            try {
                out.push_back(std::stoull(cur));
            } catch (const std::exception&) {
                return false;
            }
            cur.clear();
        } else {
            cur += c;
        }
    }
    return !out.empty();
}

void progress(uint64_t epoch, uint64_t total, double task, double kl, double total_loss,
              double eval_metric, void*) {
    std::fprintf(stderr,
                 "epoch %" PRIu64 "/%" PRIu64
                 "  task=%.6f  kl=%.6f  total=%.6f  eval=%.4f\n",
                 epoch + 1, total, task, kl, total_loss, eval_metric);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SFConv: factorized convolutions with singular-value equalization"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint_path, data_path, input_shape_text;
    std::string resume_path, kind, hist_dir, out_csv;
    uint64_t n = 64, seed = 0;
    uint32_t bins = 32, trials = 50, warmup = 10;
    bool include_bias = true;

    CLI::App* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--out", out_path, "output directory")->required();
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "dataset directory")->required();

    CLI::App* bench = app.add_subcommand("bench", "parameters, FLOPs and FPS of a model");
    bench->add_option("--config", config_path, "config file")->required();
    bench->add_option("--input-shape", input_shape_text, "BxCxHxW")->required();
    bench->add_option("--trials", trials, "timed trials (>= 3)");
    bench->add_option("--warmup", warmup, "untimed warmup passes");

    CLI::App* spectrum = app.add_subcommand("spectrum", "per-layer singular value spectra");
    spectrum->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    spectrum->add_option("--out", out_csv, "CSV path (default stdout)");

    CLI::App* stats = app.add_subcommand("stats", "image statistics over a directory");
    stats->add_option("--input", data_path, "directory of .tnsr/.pgm/.ppm files")
        ->required();
    stats->add_option("--bins", bins, "histogram bins");
    stats->add_option("--hist-dir", hist_dir, "write per-image histogram CSVs here");
    stats->add_option("--out", out_csv, "CSV path (default stdout)");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--kind", kind, "classify or segment")->required();
    synth->add_option("--n", n, "sample count")->required();
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--out", out_path, "output directory")->required();

    CLI::App* weights = app.add_subcommand("weights", "weight histogram of a checkpoint");
    weights->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    weights->add_option("--bins", bins, "histogram bins");
    weights->add_flag("--include-bias,!--no-include-bias", include_bias,
                      "include bias parameters");
    weights->add_option("--out", out_csv, "CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        return check(sfc_train_run(config_path.c_str(), out_path.c_str(),
                                   resume_path.empty() ? nullptr : resume_path.c_str(),
                                   progress, nullptr));
    }

    if (eval->parsed()) {
        double metric = 0.0;
        int rc = check(sfc_evaluate_dir(checkpoint_path.c_str(), data_path.c_str(), &metric));
        if (rc == 0) std::printf("metric %.6f\n", metric);
        return rc;
    }

    if (bench->parsed()) {
        std::vector<uint64_t> shape;
        if (!parse_shape(input_shape_text, shape) || shape.size() != 4) {
            std::fprintf(stderr, "error: --input-shape must look like 8x1x32x32\n");
            return 2;
        }
        sfc_model* model = nullptr;
        int rc = check(sfc_model_from_config(config_path.c_str(), &model));
        if (rc != 0) return rc;
        uint64_t params = 0, flops = 0;
        double fps = 0.0;
        rc = check(sfc_model_param_count(model, &params));
        if (rc == 0)
            rc = check(sfc_model_flops(model, shape.data(),
                                       static_cast<uint32_t>(shape.size()), &flops));
        if (rc == 0)
            rc = check(sfc_model_measure_fps(model, shape.data(),
                                             static_cast<uint32_t>(shape.size()), trials,
                                             warmup, &fps));
        if (rc == 0) {
            std::printf("input shape   %s\n", input_shape_text.c_str());
            std::printf("parameters    %" PRIu64 "\n", params);
            std::printf("flops/pass    %" PRIu64 "\n", flops);
            std::printf("fps (median)  %.2f\n", fps);
            std::printf("params,flops,fps,input_shape\n");
            std::printf("%" PRIu64 ",%" PRIu64 ",%.6f,%s\n", params, flops, fps,
                        input_shape_text.c_str());
        }
        sfc_model_free(model);
        return rc;
    }

    if (spectrum->parsed()) {
        sfc_model* model = nullptr;
        int rc = check(sfc_model_from_checkpoint(checkpoint_path.c_str(), &model));
        if (rc != 0) return rc;
        rc = check(
            sfc_model_spectrum_csv(model, out_csv.empty() ? nullptr : out_csv.c_str()));
        sfc_model_free(model);
        return rc;
    }

    if (stats->parsed()) {
        return check(sfc_image_stats_csv(data_path.c_str(), bins,
                                         hist_dir.empty() ? nullptr : hist_dir.c_str(),
                                         out_csv.empty() ? nullptr : out_csv.c_str()));
    }

    if (synth->parsed()) {
        return check(sfc_synth_write(kind.c_str(), n, seed, out_path.c_str()));
    }

    if (weights->parsed()) {
        sfc_model* model = nullptr;
        int rc = check(sfc_model_from_checkpoint(checkpoint_path.c_str(), &model));
        if (rc != 0) return rc;
        rc = check(sfc_model_weight_histogram_csv(
            model, bins, include_bias ? 1 : 0, out_csv.empty() ? nullptr : out_csv.c_str()));
        sfc_model_free(model);
        return rc;
    }

    return 0;
}
