#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "complexity.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace sfconv {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566ull;
constexpr std::uint64_t kEvalDataTag = 0x6576616cull;

void dump_spectra(const Model& m, std::ostream& os) {
    os << "layer spectra at failure:\n";
    for (const SpectrumEntry& e : spectrum_report(m)) {
        os << "  layer" << (e.layer_index + 1) << " kl_p=" << e.kl_p << " kl_q=" << e.kl_q
           << "\n    p:";
        for (double v : e.p_spectrum) os << " " << v;
        os << "\n    q:";
        for (double v : e.q_spectrum) os << " " << v;
        os << "\n";
    }
}

void copy_named_tensor(const Checkpoint& ck, const std::string& name, Tensor& dst) {
    const Tensor* src = find_tensor(ck, name);
    if (!src) throw IoError("checkpoint is missing tensor '" + name + "'");
    if (!src->same_shape(dst))
        throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                         shape_str(src->shape()) + ", expected " + shape_str(dst.shape()));
    std::copy_n(src->raw(), src->size(), dst.raw());
}

std::string checkpoint_name(std::size_t epochs_done) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_epoch_%04zu.sfck", epochs_done);
    return buf;
}

Checkpoint build_checkpoint(const TrainConfig& cfg, Model& model, const AdamState& adam,
                            const RuntimeState& rt) {
    Checkpoint ck;
    ck.config_text = compose_snapshot(serialize_train_config(cfg), rt);
    std::vector<ParamRef> params = model_params(model);
    for (const ParamRef& p : params) ck.tensors.emplace_back(p.name, *p.tensor);
    for (std::size_t i = 0; i < params.size(); ++i)
        ck.tensors.emplace_back("adam_m/" + params[i].name, adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
        ck.tensors.emplace_back("adam_v/" + params[i].name, adam.v[i]);
    return ck;
}

}  // namespace

AdamState init_adam(const std::vector<ParamRef>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const ParamRef& p : params) {
        st.m.emplace_back(Tensor(p.tensor->shape()));
        st.v.emplace_back(Tensor(p.tensor->shape()));
    }
    return st;
}

void adam_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
               AdamState& st, double lr, double weight_decay) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw ShapeError("optimizer state does not match parameter list");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].tensor;
        const Tensor& g = grads[i];
        if (!p.same_shape(g))
            throw ShapeError("gradient shape mismatch for " + params[i].name);
        Tensor& m = st.m[i];
        Tensor& v = st.v[i];
        const bool decay = params[i].decayable && weight_decay != 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j] + (decay ? weight_decay * p[j] : 0.0);
            m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * gj;
            v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
}

double lr_schedule(std::size_t epoch, double base_lr, std::size_t step, double gamma) {
    if (step < 1) throw DomainError("scheduler step must be >= 1");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
}

double mean_layer_kl(const Model& m) {
    std::vector<const FactorizedFilter*> layers = factorized_layers(m);
    if (layers.empty()) return 0.0;
    return network_kl(layers).total / static_cast<double>(layers.size());
}

double evaluate(const Model& m, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw DomainError("cannot evaluate on an empty dataset");
    if (batch_size < 1) batch_size = 1;
    double correct = 0.0;
    double dice_sum = 0.0;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, idx.size() - start);
        Batch b = make_batch(data, std::span(idx).subspan(start, count));
        Tensor out = model_forward(m, b.images);
        if (data.task == TaskKind::Classify) {
            if (out.rank() != 2)
                throw ShapeError("classification output must be batch x classes");
            const std::size_t classes = out.extent(1);
            for (std::size_t i = 0; i < count; ++i) {
                if (b.labels[i] < 0 || static_cast<std::size_t>(b.labels[i]) >= classes)
                    throw DomainError("label " + std::to_string(b.labels[i]) +
                                      " outside the model's " + std::to_string(classes) +
                                      " classes");
                std::size_t best = 0;
                for (std::size_t c = 1; c < classes; ++c)
                    if (out(i, c) > out(i, best)) best = c;
                if (static_cast<int>(best) == b.labels[i]) correct += 1.0;
            }
        } else {
            if (!out.same_shape(*b.masks))
                throw ShapeError("prediction shape does not match masks");
            const std::size_t per = out.size() / count;
            for (std::size_t i = 0; i < count; ++i) {
                Tensor pred({per});
                Tensor target({per});
                std::copy_n(out.raw() + i * per, per, pred.raw());
                std::copy_n(b.masks->raw() + i * per, per, target.raw());
                dice_sum += dice_coefficient(pred, target);
            }
        }
    }
    const double n = static_cast<double>(data.size());
    return data.task == TaskKind::Classify ? correct / n : dice_sum / n;
}

Model model_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out) {
    auto [config_part, rt] = split_snapshot(ck.config_text);
    TrainConfig cfg = parse_train_config_text(config_part);
    Shape input = rt && rt->input_shape.size() == 3 ? rt->input_shape
                                                    : task_input_shape(cfg.task);
    Model model = build_model(cfg, input);
    for (const ParamRef& p : model_params(model)) copy_named_tensor(ck, p.name, *p.tensor);
    if (cfg_out) *cfg_out = cfg;
    return model;
}

TrainOutcome train(const TrainConfig& cfg, const std::string& out_dir,
                   const std::string& resume_checkpoint, const ProgressFn& progress) {
    Dataset train_data;
    Dataset eval_storage;
    const Dataset* eval_data = nullptr;
    if (cfg.data.kind == DataSpec::Kind::Synth) {
        train_data = synth_dataset(cfg.task, cfg.data.n, cfg.data.seed);
        if (cfg.data.eval_n > 0) {
            eval_storage =
                synth_dataset(cfg.task, cfg.data.eval_n, mix64(cfg.data.seed ^ kEvalDataTag));
            eval_data = &eval_storage;
        } else {
            eval_data = &train_data;
        }
    } else {
        train_data = load_dataset_dir(cfg.data.train_dir);
        if (train_data.task != cfg.task)
            throw ConfigError("dataset in " + cfg.data.train_dir + " is for task " +
                              task_name(train_data.task));
        if (!cfg.data.eval_dir.empty()) {
            eval_storage = load_dataset_dir(cfg.data.eval_dir);
            if (eval_storage.task != cfg.task)
                throw ConfigError("dataset in " + cfg.data.eval_dir + " is for task " +
                                  task_name(eval_storage.task));
            eval_data = &eval_storage;
        } else {
            eval_data = &train_data;
        }
    }

    const Shape input_shape = train_data.images.front().shape();
    Model model = build_model(cfg, input_shape);
    std::vector<ParamRef> params = model_params(model);
    AdamState adam = init_adam(params);
    Rng rng(mix64(cfg.seed ^ mix64(kShuffleTag)));
    std::size_t start_epoch = 0;
    std::uint64_t global_step = 0;

    if (!resume_checkpoint.empty()) {
        Checkpoint ck = read_checkpoint_file(resume_checkpoint);
        auto [config_part, rt] = split_snapshot(ck.config_text);
        if (!rt) throw IoError("checkpoint carries no runtime state, cannot resume");
        if (rt->input_shape.size() == 3 && rt->input_shape != input_shape)
            throw ShapeError("checkpoint input shape " + shape_str(rt->input_shape) +
                             " does not match dataset shape " + shape_str(input_shape));
        for (const ParamRef& p : params) copy_named_tensor(ck, p.name, *p.tensor);
        for (std::size_t i = 0; i < params.size(); ++i) {
            copy_named_tensor(ck, "adam_m/" + params[i].name, adam.m[i]);
            copy_named_tensor(ck, "adam_v/" + params[i].name, adam.v[i]);
        }
        adam.t = rt->step;
        global_step = rt->step;
        start_epoch = rt->epochs_done;
        rng.load_state(rt->rng_state);
        if (start_epoch >= cfg.epochs)
            throw ConfigError("checkpoint already covers " + std::to_string(start_epoch) +
                              " epochs, config asks for " + std::to_string(cfg.epochs));
    }

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    metrics << kMetricsHeader << "\n";

    TrainOutcome outcome{std::move(model), 0.0, 0.0, 0.0, metrics_path, ""};
    Model& net = outcome.model;
    params = model_params(net);  // re-point at the moved-into model
    outcome.init_mean_layer_kl = mean_layer_kl(net);

    const std::size_t n = train_data.size();
    std::vector<std::size_t> order(n);
    for (std::size_t e = start_epoch; e < cfg.epochs; ++e) {
        const double lr = lr_schedule(e, cfg.learning_rate, cfg.scheduler_step,
                                      cfg.scheduler_gamma);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);

        std::vector<std::string> rows;
        double sum_task = 0.0, sum_kl = 0.0, sum_total = 0.0;
        std::size_t steps_this_epoch = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            Batch batch = make_batch(train_data, std::span(order).subspan(start, count));
            ForwardTrace trace = model_forward_trace(net, batch.images);
            LossGrad task = cfg.task == TaskKind::Classify
                                ? softmax_cross_entropy(trace.output, batch.labels)
                                : dice_loss(trace.output, *batch.masks);
            NetworkKl kl = network_kl(factorized_layers(net));
            const double total = task.value + cfg.lambda * kl.total;
            if (!std::isfinite(total)) {
                dump_spectra(net, std::cerr);
                throw DomainError("non-finite loss at step " +
                                  std::to_string(global_step + 1));
            }
            BackwardResult bw = model_backward(net, trace, task.grad);
            add_kl_gradients(net, params, cfg.lambda, bw.grads);
            adam_step(params, bw.grads, adam, lr, cfg.weight_decay);
            ++global_step;
            ++steps_this_epoch;
            sum_task += task.value;
            sum_kl += kl.total;
            sum_total += total;

            std::ostringstream row;
            row << e << "," << global_step << "," << format_double(task.value) << ","
                << format_double(kl.total) << "," << format_double(cfg.lambda) << ","
                << format_double(total) << ",";
            rows.push_back(row.str());
        }

        const double eval_metric = evaluate(net, *eval_data, cfg.batch_size);
        rows.back() += format_double(eval_metric);  // eval lands on the epoch's last row
        for (const std::string& r : rows) metrics << r << "\n";
        metrics.flush();
        outcome.final_eval_metric = eval_metric;

        if (progress) {
            const double steps = static_cast<double>(steps_this_epoch);
            progress(EpochReport{e, cfg.epochs, sum_task / steps, sum_kl / steps,
                                 sum_total / steps, eval_metric});
        }

        const bool last = e + 1 == cfg.epochs;
        if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 && !last) {
            RuntimeState rt{e + 1, global_step, rng.save_state(), input_shape};
            write_checkpoint_file(build_checkpoint(cfg, net, adam, rt),
                                  (fs::path(out_dir) / checkpoint_name(e + 1)).string());
        }
    }
    if (!metrics.flush()) throw IoError("short write on " + metrics_path);

    RuntimeState rt{cfg.epochs, global_step, rng.save_state(), input_shape};
    outcome.checkpoint_path = (fs::path(out_dir) / "ckpt_final.sfck").string();
    write_checkpoint_file(build_checkpoint(cfg, net, adam, rt), outcome.checkpoint_path);
    outcome.final_mean_layer_kl = mean_layer_kl(net);
    return outcome;
}

}  // namespace sfconv
