#include "sfconv/sfconv.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "complexity.hpp"
#include "config.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "imstats.hpp"
#include "model.hpp"
#include "tensor_io.hpp"
#include "train.hpp"

namespace {

thread_local std::string g_last_error = "no error";

sfc_status fail(sfc_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Maps the exception hierarchy onto status codes; every API body runs
// inside this guard so exceptions never cross the C boundary.
template <typename Fn>
sfc_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const sfconv::ShapeError& e) {
        return fail(SFC_ERR_SHAPE, e.what());
    } catch (const sfconv::DomainError& e) {
        return fail(SFC_ERR_DOMAIN, e.what());
    } catch (const sfconv::IoError& e) {
        return fail(SFC_ERR_IO, e.what());
    } catch (const sfconv::ConfigError& e) {
        return fail(SFC_ERR_CONFIG, e.what());
    } catch (const std::exception& e) {
        return fail(SFC_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(SFC_ERR_INTERNAL, "unknown error");
    }
}

sfconv::Shape to_shape(const uint64_t* extents, uint32_t rank) {
    sfconv::Shape s;
    s.reserve(rank);
    for (uint32_t i = 0; i < rank; ++i) s.push_back(static_cast<std::size_t>(extents[i]));
    return s;
}

struct OutStream {
    std::ofstream file;
    std::ostream& os;

    explicit OutStream(const char* path)
        : file(path ? std::ofstream(path, std::ios::binary | std::ios::trunc)
                    : std::ofstream()),
          os(path ? static_cast<std::ostream&>(file) : std::cout) {
        if (path && !file) throw sfconv::IoError(std::string("cannot write ") + path);
    }
};

}  // namespace

struct sfc_tensor {
    sfconv::Tensor t;
};

struct sfc_model {
    sfconv::Model m;
    sfconv::TrainConfig cfg;
};

extern "C" {

const char* sfc_last_error(void) { return g_last_error.c_str(); }

const char* sfc_version(void) { return "1.0.0"; }

sfc_status sfc_tensor_create(const uint64_t* extents, uint32_t rank, sfc_tensor** out) {
    return guarded([&]() -> sfc_status {
        if (!extents || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = new sfc_tensor{sfconv::Tensor(to_shape(extents, rank))};
        return SFC_OK;
    });
}

void sfc_tensor_free(sfc_tensor* t) { delete t; }

uint32_t sfc_tensor_rank(const sfc_tensor* t) {
    return t ? static_cast<uint32_t>(t->t.rank()) : 0;
}

uint32_t sfc_tensor_extents(const sfc_tensor* t, uint64_t* out, uint32_t cap) {
    if (!t) return 0;
    const uint32_t rank = static_cast<uint32_t>(t->t.rank());
    if (out) {
        const uint32_t n = rank < cap ? rank : cap;
        for (uint32_t i = 0; i < n; ++i) out[i] = t->t.extent(i);
    }
    return rank;
}

sfc_status sfc_tensor_data(sfc_tensor* t, double** out, uint64_t* count) {
    return guarded([&]() -> sfc_status {
        if (!t || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = t->t.raw();
        if (count) *count = t->t.size();
        return SFC_OK;
    });
}

sfc_status sfc_tensor_read(const char* path, sfc_tensor** out) {
    return guarded([&]() -> sfc_status {
        if (!path || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = new sfc_tensor{sfconv::read_image_file(path)};
        return SFC_OK;
    });
}

sfc_status sfc_tensor_write(const sfc_tensor* t, const char* path) {
    return guarded([&]() -> sfc_status {
        if (!t || !path) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::write_tnsr_file(t->t, path);
        return SFC_OK;
    });
}

sfc_status sfc_moment_stats(const sfc_tensor* t, double* mean, double* variance,
                            double* skewness, double* kurtosis) {
    return guarded([&]() -> sfc_status {
        if (!t) return fail(SFC_ERR_INVALID, "null tensor");
        std::span<const double> s = t->t.data();
        if (mean) *mean = sfconv::sample_mean(s);
        if (variance) *variance = sfconv::sample_variance(s);
        if (skewness) *skewness = sfconv::skewness(s);
        if (kurtosis) *kurtosis = sfconv::kurtosis(s);
        return SFC_OK;
    });
}

sfc_status sfc_histogram(const sfc_tensor* t, uint32_t bins, double* edges,
                         uint64_t* counts) {
    return guarded([&]() -> sfc_status {
        if (!t || !edges || !counts) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::HistogramReport rep = sfconv::histogram(t->t.data(), bins);
        for (std::size_t i = 0; i < rep.bin_edges.size(); ++i) edges[i] = rep.bin_edges[i];
        for (std::size_t i = 0; i < rep.counts.size(); ++i) counts[i] = rep.counts[i];
        return SFC_OK;
    });
}

sfc_status sfc_model_from_config(const char* config_path, sfc_model** out) {
    return guarded([&]() -> sfc_status {
        if (!config_path || !out) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::TrainConfig cfg = sfconv::load_train_config(config_path);
        *out = new sfc_model{sfconv::build_model(cfg), cfg};
        return SFC_OK;
    });
}

sfc_status sfc_model_from_config_text(const char* config_text, sfc_model** out) {
    return guarded([&]() -> sfc_status {
        if (!config_text || !out) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::TrainConfig cfg = sfconv::parse_train_config_text(config_text);
        *out = new sfc_model{sfconv::build_model(cfg), cfg};
        return SFC_OK;
    });
}

sfc_status sfc_model_from_checkpoint(const char* checkpoint_path, sfc_model** out) {
    return guarded([&]() -> sfc_status {
        if (!checkpoint_path || !out) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::Checkpoint ck = sfconv::read_checkpoint_file(checkpoint_path);
        sfconv::TrainConfig cfg;
        sfconv::Model m = sfconv::model_from_checkpoint(ck, &cfg);
        *out = new sfc_model{std::move(m), std::move(cfg)};
        return SFC_OK;
    });
}

void sfc_model_free(sfc_model* m) { delete m; }

sfc_status sfc_model_forward(sfc_model* m, const sfc_tensor* input, sfc_tensor** out) {
    return guarded([&]() -> sfc_status {
        if (!m || !input || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = new sfc_tensor{sfconv::model_forward(m->m, input->t)};
        return SFC_OK;
    });
}

sfc_status sfc_model_param_count(const sfc_model* m, uint64_t* out) {
    return guarded([&]() -> sfc_status {
        if (!m || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = sfconv::count_params(m->m);
        return SFC_OK;
    });
}

sfc_status sfc_model_flops(const sfc_model* m, const uint64_t* shape, uint32_t rank,
                           uint64_t* out) {
    return guarded([&]() -> sfc_status {
        if (!m || !shape || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = sfconv::count_flops(m->m, to_shape(shape, rank));
        return SFC_OK;
    });
}

sfc_status sfc_model_measure_fps(const sfc_model* m, const uint64_t* shape, uint32_t rank,
                                 uint32_t trials, uint32_t warmup, double* out) {
    return guarded([&]() -> sfc_status {
        if (!m || !shape || !out) return fail(SFC_ERR_INVALID, "null argument");
        *out = sfconv::measure_fps(m->m, to_shape(shape, rank), trials, warmup);
        return SFC_OK;
    });
}

sfc_status sfc_model_spectrum_csv(const sfc_model* m, const char* path) {
    return guarded([&]() -> sfc_status {
        if (!m) return fail(SFC_ERR_INVALID, "null model");
        OutStream out(path);
        out.os << "layer,matrix,index,sigma,normalized\n";
        for (const sfconv::SpectrumEntry& e : sfconv::spectrum_report(m->m)) {
            for (std::size_t i = 0; i < e.p_spectrum.size(); ++i)
                out.os << (e.layer_index + 1) << ",p," << i << ","
                       << sfconv::format_double(e.p_raw[i]) << ","
                       << sfconv::format_double(e.p_spectrum[i]) << "\n";
            for (std::size_t i = 0; i < e.q_spectrum.size(); ++i)
                out.os << (e.layer_index + 1) << ",q," << i << ","
                       << sfconv::format_double(e.q_raw[i]) << ","
                       << sfconv::format_double(e.q_spectrum[i]) << "\n";
        }
        out.os.flush();
        if (!out.os) throw sfconv::IoError("short write on spectrum CSV");
        return SFC_OK;
    });
}

sfc_status sfc_model_weight_histogram_csv(const sfc_model* m, uint32_t bins,
                                          int include_bias, const char* path) {
    return guarded([&]() -> sfc_status {
        if (!m) return fail(SFC_ERR_INVALID, "null model");
        sfconv::HistogramReport rep =
            sfconv::weight_histogram(m->m, bins, include_bias != 0);
        OutStream out(path);
        out.os << "bin_low,bin_high,count\n";
        for (std::size_t i = 0; i < rep.counts.size(); ++i)
            out.os << sfconv::format_double(rep.bin_edges[i]) << ","
                   << sfconv::format_double(rep.bin_edges[i + 1]) << "," << rep.counts[i]
                   << "\n";
        out.os << "# n=" << rep.n << " variance=" << sfconv::format_double(rep.variance);
        if (rep.stats_valid)
            out.os << " skewness=" << sfconv::format_double(rep.skewness)
                   << " kurtosis=" << sfconv::format_double(rep.kurtosis);
        out.os << "\n";
        out.os.flush();
        if (!out.os) throw sfconv::IoError("short write on histogram CSV");
        return SFC_OK;
    });
}

sfc_status sfc_train_run(const char* config_path, const char* out_dir,
                         const char* resume_checkpoint, sfc_train_callback cb, void* user) {
    return guarded([&]() -> sfc_status {
        if (!config_path || !out_dir) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::TrainConfig cfg = sfconv::load_train_config(config_path);
        sfconv::ProgressFn progress;
        if (cb) {
            progress = [cb, user](const sfconv::EpochReport& r) {
                cb(r.epoch, r.total_epochs, r.mean_task_loss, r.mean_kl, r.mean_total,
                   r.eval_metric, user);
            };
        }
        sfconv::train(cfg, out_dir, resume_checkpoint ? resume_checkpoint : "", progress);
        return SFC_OK;
    });
}

sfc_status sfc_evaluate_dir(const char* checkpoint_path, const char* data_dir,
                            double* metric_out) {
    return guarded([&]() -> sfc_status {
        if (!checkpoint_path || !data_dir || !metric_out)
            return fail(SFC_ERR_INVALID, "null argument");
        sfconv::Checkpoint ck = sfconv::read_checkpoint_file(checkpoint_path);
        sfconv::TrainConfig cfg;
        sfconv::Model m = sfconv::model_from_checkpoint(ck, &cfg);
        sfconv::Dataset data = sfconv::load_dataset_dir(data_dir);
        if (data.task != cfg.task)
            throw sfconv::ConfigError("dataset task does not match the checkpoint");
        *metric_out = sfconv::evaluate(m, data, cfg.batch_size);
        return SFC_OK;
    });
}

sfc_status sfc_synth_write(const char* kind, uint64_t n, uint64_t seed, const char* out_dir) {
    return guarded([&]() -> sfc_status {
        if (!kind || !out_dir) return fail(SFC_ERR_INVALID, "null argument");
        sfconv::TaskKind task = sfconv::task_from_name(kind);
        sfconv::Dataset d = sfconv::synth_dataset(task, static_cast<std::size_t>(n), seed);
        sfconv::write_dataset(d, out_dir);
        return SFC_OK;
    });
}

sfc_status sfc_image_stats_csv(const char* input_dir, uint32_t bins, const char* hist_dir,
                               const char* out_csv) {
    return guarded([&]() -> sfc_status {
        if (!input_dir) return fail(SFC_ERR_INVALID, "null input directory");
        namespace fs = std::filesystem;
        std::vector<std::string> files;
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(input_dir, ec)) {
            if (!entry.is_regular_file()) continue;
            const std::string ext = entry.path().extension().string();
            if (ext == ".tnsr" || ext == ".pgm" || ext == ".ppm")
                files.push_back(entry.path().string());
        }
        if (ec)
            throw sfconv::IoError("cannot list " + std::string(input_dir) + ": " +
                                  ec.message());
        if (files.empty())
            throw sfconv::IoError("no .tnsr/.pgm/.ppm files in " + std::string(input_dir));
        std::sort(files.begin(), files.end());

        if (hist_dir) {
            fs::create_directories(hist_dir, ec);
            if (ec)
                throw sfconv::IoError("cannot create " + std::string(hist_dir) + ": " +
                                      ec.message());
        }

        OutStream out(out_csv);
        out.os << "path,n,skewness,kurtosis\n";
        double skew_sum = 0.0, kurt_sum = 0.0;
        std::size_t valid = 0;
        for (const std::string& f : files) {
            sfconv::Tensor img = sfconv::read_image_file(f);
            if (img.rank() == 3 && img.extent(0) == 3) img = sfconv::to_gray(img);
            sfconv::HistogramReport rep = sfconv::histogram(img.data(), bins);
            out.os << f << "," << rep.n << ",";
            if (rep.stats_valid) {
                out.os << sfconv::format_double(rep.skewness) << ","
                       << sfconv::format_double(rep.kurtosis);
                skew_sum += rep.skewness;
                kurt_sum += rep.kurtosis;
                ++valid;
            } else {
                out.os << ",";
            }
            out.os << "\n";
            if (hist_dir) {
                const std::string name =
                    (fs::path(hist_dir) / (fs::path(f).stem().string() + "_hist.csv"))
                        .string();
                std::ofstream hos(name, std::ios::binary | std::ios::trunc);
                if (!hos) throw sfconv::IoError("cannot write " + name);
                hos << "bin_low,bin_high,count\n";
                for (std::size_t i = 0; i < rep.counts.size(); ++i)
                    hos << sfconv::format_double(rep.bin_edges[i]) << ","
                        << sfconv::format_double(rep.bin_edges[i + 1]) << ","
                        << rep.counts[i] << "\n";
            }
        }
        if (valid > 0) {
            // corpus averages; stderr keeps the CSV machine-clean when it
            // goes to stdout
            std::cerr << "mean skewness " << skew_sum / static_cast<double>(valid)
                      << ", mean kurtosis " << kurt_sum / static_cast<double>(valid)
                      << " over " << valid << " images\n";
        }
        out.os.flush();
        if (!out.os) throw sfconv::IoError("short write on stats CSV");
        return SFC_OK;
    });
}

}  // extern "C"
