#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfconv_layer.hpp"

namespace sfconv {

enum class TaskKind { Classify, Segment };

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);

enum class LayerKind { Conv, SfConv, Relu, Sigmoid, Pool, Upsample, Flatten, Dense };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    ConvSpec conv;                // Conv / SfConv
    std::size_t rank = 0;         // SfConv
    std::size_t in_features = 0;  // Dense
    std::size_t out_features = 0;
    bool with_bias = true;
};

struct DataSpec {
    enum class Kind { Synth, Dir };
    Kind kind = Kind::Synth;
    std::size_t n = 512;
    std::size_t eval_n = 128;
    std::uint64_t seed = 1;
    std::string train_dir;
    std::string eval_dir;
};

struct TrainConfig {
    TaskKind task = TaskKind::Classify;
    std::vector<LayerSpec> backbone;
    double learning_rate = 0.005;
    double weight_decay = 1e-5;
    std::size_t scheduler_step = 10;
    double scheduler_gamma = 1.0;
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    double lambda = 5.0;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 10;  // epochs between checkpoints; 0 = final only
    DataSpec data;
};

// Task-specific defaults; the backbone defaults to default_backbone(task).
TrainConfig default_train_config(TaskKind task);

std::vector<LayerSpec> default_backbone(TaskKind task);

// INI-style text: [section] headers, key = value lines, ';'/'#' comments.
// Unknown sections or keys are errors.
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig load_train_config(const std::string& path);

// Canonical form: fixed section/key order, shortest round-trip numbers.
// serialize -> parse is the identity.
std::string serialize_train_config(const TrainConfig& cfg);

std::string format_double(double v);  // %.17g, locale independent

}  // namespace sfconv
