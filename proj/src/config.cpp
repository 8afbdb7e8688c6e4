#include "config.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "errors.hpp"

namespace sfconv {

std::string task_name(TaskKind t) { return t == TaskKind::Classify ? "classify" : "segment"; }

TaskKind task_from_name(const std::string& s) {
    if (s == "classify") return TaskKind::Classify;
    if (s == "segment") return TaskKind::Segment;
    throw ConfigError("unknown task '" + s + "' (expected classify or segment)");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a number: '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        std::uint64_t u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a non-negative integer: '" + v + "'");
    }
}

// section -> key -> value; insertion order of backbone keys preserved separately
struct IniData {
    std::map<std::string, std::map<std::string, std::string>> kv;
    std::vector<std::pair<std::string, std::string>> backbone_layers;  // key, value
};

IniData parse_ini(const std::string& text) {
    IniData ini;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t cpos = line.find_first_of(";#");
        if (cpos != std::string::npos) line = line.substr(0, cpos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            ini.kv.try_emplace(section);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        if (section == "backbone") {
            ini.backbone_layers.emplace_back(key, value);
        }
        auto [it, inserted] = ini.kv[section].try_emplace(key, value);
        if (!inserted) throw ConfigError("duplicate key '" + section + "." + key + "'");
    }
    return ini;
}

LayerSpec parse_layer(const std::string& key, const std::string& value) {
    std::vector<std::string> toks = split_ws(value);
    if (toks.empty()) throw ConfigError("backbone." + key + ": empty layer");
    LayerSpec spec;
    const std::string& kind = toks[0];
    if (kind == "conv") spec.kind = LayerKind::Conv;
    else if (kind == "sfconv") spec.kind = LayerKind::SfConv;
    else if (kind == "relu") spec.kind = LayerKind::Relu;
    else if (kind == "sigmoid") spec.kind = LayerKind::Sigmoid;
    else if (kind == "pool") spec.kind = LayerKind::Pool;
    else if (kind == "upsample") spec.kind = LayerKind::Upsample;
    else if (kind == "flatten") spec.kind = LayerKind::Flatten;
    else if (kind == "dense") spec.kind = LayerKind::Dense;
    else throw ConfigError("backbone." + key + ": unknown layer kind '" + kind + "'");

    std::map<std::string, std::uint64_t> args;
    for (std::size_t i = 1; i < toks.size(); ++i) {
        std::size_t eq = toks[i].find('=');
        if (eq == std::string::npos)
            throw ConfigError("backbone." + key + ": expected name=value, got '" + toks[i] + "'");
        std::string name = toks[i].substr(0, eq);
        args[name] = parse_u64("backbone." + key + "." + name, toks[i].substr(eq + 1));
    }
    auto take = [&](const std::string& name, bool required, std::uint64_t dflt) {
        auto it = args.find(name);
        if (it == args.end()) {
            if (required)
                throw ConfigError("backbone." + key + ": missing argument '" + name + "'");
            return dflt;
        }
        std::uint64_t v = it->second;
        args.erase(it);
        return v;
    };

    switch (spec.kind) {
        case LayerKind::Conv:
        case LayerKind::SfConv:
            spec.conv.k = take("k", true, 0);
            spec.conv.c_in = take("cin", true, 0);
            spec.conv.c_out = take("cout", true, 0);
            spec.conv.stride = take("s", false, 1);
            spec.conv.pad = take("p", false, 0);
            spec.with_bias = take("bias", false, 1) != 0;
            if (spec.kind == LayerKind::SfConv) {
                spec.rank = take("r", true, 0);
                if (spec.rank == 0) throw ConfigError("backbone." + key + ": r must be >= 1");
            }
            if (spec.conv.k == 0 || spec.conv.c_in == 0 || spec.conv.c_out == 0 ||
                spec.conv.stride == 0)
                throw ConfigError("backbone." + key + ": k, cin, cout, s must be >= 1");
            break;
        case LayerKind::Dense:
            spec.in_features = take("in", true, 0);
            spec.out_features = take("out", true, 0);
            spec.with_bias = take("bias", false, 1) != 0;
            if (spec.in_features == 0 || spec.out_features == 0)
                throw ConfigError("backbone." + key + ": in and out must be >= 1");
            break;
        default:
            break;
    }
    if (!args.empty())
        throw ConfigError("backbone." + key + ": unknown argument '" + args.begin()->first + "'");
    return spec;
}

std::string layer_to_string(const LayerSpec& s) {
    std::ostringstream os;
    switch (s.kind) {
        case LayerKind::Conv:
        case LayerKind::SfConv:
            os << (s.kind == LayerKind::Conv ? "conv" : "sfconv") << " k=" << s.conv.k
               << " cin=" << s.conv.c_in << " cout=" << s.conv.c_out << " s=" << s.conv.stride
               << " p=" << s.conv.pad;
            if (s.kind == LayerKind::SfConv) os << " r=" << s.rank;
            os << " bias=" << (s.with_bias ? 1 : 0);
            break;
        case LayerKind::Dense:
            os << "dense in=" << s.in_features << " out=" << s.out_features
               << " bias=" << (s.with_bias ? 1 : 0);
            break;
        case LayerKind::Relu: os << "relu"; break;
        case LayerKind::Sigmoid: os << "sigmoid"; break;
        case LayerKind::Pool: os << "pool"; break;
        case LayerKind::Upsample: os << "upsample"; break;
        case LayerKind::Flatten: os << "flatten"; break;
    }
    return os.str();
}

}  // namespace

TrainConfig default_train_config(TaskKind task) {
    TrainConfig cfg;
    cfg.task = task;
    if (task == TaskKind::Classify) {
        cfg.learning_rate = 0.005;
        cfg.batch_size = 32;
        cfg.epochs = 100;
        cfg.lambda = 5.0;
        cfg.data.n = 512;
        cfg.data.eval_n = 128;
    } else {
        cfg.learning_rate = 0.01;
        cfg.batch_size = 16;
        cfg.epochs = 50;
        cfg.lambda = 10.0;
        cfg.data.n = 128;
        cfg.data.eval_n = 32;
    }
    cfg.weight_decay = 1e-5;
    cfg.scheduler_step = 10;
    cfg.scheduler_gamma = 1.0;
    cfg.backbone = default_backbone(task);
    return cfg;
}

std::vector<LayerSpec> default_backbone(TaskKind task) {
    auto sf = [](std::size_t cin, std::size_t cout) {
        LayerSpec s;
        s.kind = LayerKind::SfConv;
        s.conv = ConvSpec{3, 1, 1, cin, cout};
        s.rank = 10;
        return s;
    };
    auto plain = [](LayerKind k) {
        LayerSpec s;
        s.kind = k;
        return s;
    };
    std::vector<LayerSpec> bb;
    if (task == TaskKind::Classify) {
        // four conv blocks on 32x32 input, then a linear head
        const std::size_t chans[5] = {1, 8, 16, 32, 32};
        for (int blk = 0; blk < 4; ++blk) {
            bb.push_back(sf(chans[blk], chans[blk + 1]));
            bb.push_back(plain(LayerKind::Relu));
            bb.push_back(plain(LayerKind::Pool));
        }
        bb.push_back(plain(LayerKind::Flatten));
        LayerSpec head;
        head.kind = LayerKind::Dense;
        head.in_features = 32 * 2 * 2;
        head.out_features = 3;
        bb.push_back(head);
    } else {
        // three-level encoder/decoder on 48x48 input, sigmoid mask head
        bb.push_back(sf(1, 8));
        bb.push_back(plain(LayerKind::Relu));
        bb.push_back(plain(LayerKind::Pool));
        bb.push_back(sf(8, 16));
        bb.push_back(plain(LayerKind::Relu));
        bb.push_back(plain(LayerKind::Pool));
        bb.push_back(sf(16, 32));
        bb.push_back(plain(LayerKind::Relu));
        bb.push_back(plain(LayerKind::Upsample));
        bb.push_back(sf(32, 16));
        bb.push_back(plain(LayerKind::Relu));
        bb.push_back(plain(LayerKind::Upsample));
        bb.push_back(sf(16, 8));
        bb.push_back(plain(LayerKind::Relu));
        LayerSpec head;
        head.kind = LayerKind::Conv;
        head.conv = ConvSpec{1, 1, 0, 8, 1};
        bb.push_back(head);
        bb.push_back(plain(LayerKind::Sigmoid));
    }
    return bb;
}

TrainConfig parse_train_config_text(const std::string& text) {
    IniData ini = parse_ini(text);

    auto* train = ini.kv.count("train") ? &ini.kv["train"] : nullptr;
    if (!train || !train->count("task")) throw ConfigError("missing required key train.task");
    TaskKind task = task_from_name(train->at("task"));
    TrainConfig cfg = default_train_config(task);
    train->erase("task");

    auto take = [](std::map<std::string, std::string>* m, const std::string& key,
                   std::string* out) {
        if (!m) return false;
        auto it = m->find(key);
        if (it == m->end()) return false;
        *out = it->second;
        m->erase(it);
        return true;
    };

    std::string v;
    if (take(train, "learning_rate", &v)) cfg.learning_rate = parse_double("train.learning_rate", v);
    if (take(train, "weight_decay", &v)) cfg.weight_decay = parse_double("train.weight_decay", v);
    if (take(train, "scheduler_step", &v))
        cfg.scheduler_step = static_cast<std::size_t>(parse_u64("train.scheduler_step", v));
    if (take(train, "scheduler_gamma", &v))
        cfg.scheduler_gamma = parse_double("train.scheduler_gamma", v);
    if (take(train, "batch_size", &v))
        cfg.batch_size = static_cast<std::size_t>(parse_u64("train.batch_size", v));
    if (take(train, "epochs", &v)) cfg.epochs = static_cast<std::size_t>(parse_u64("train.epochs", v));
    if (take(train, "lambda", &v)) cfg.lambda = parse_double("train.lambda", v);
    if (take(train, "seed", &v)) cfg.seed = parse_u64("train.seed", v);
    if (take(train, "checkpoint_every", &v))
        cfg.checkpoint_every = static_cast<std::size_t>(parse_u64("train.checkpoint_every", v));
    if (train && !train->empty())
        throw ConfigError("unknown key 'train." + train->begin()->first + "'");
    ini.kv.erase("train");

    if (ini.kv.count("data")) {
        auto* data = &ini.kv["data"];
        bool seed_given = false;
        if (take(data, "kind", &v)) {
            if (v == "synth") cfg.data.kind = DataSpec::Kind::Synth;
            else if (v == "dir") cfg.data.kind = DataSpec::Kind::Dir;
            else throw ConfigError("data.kind must be synth or dir, got '" + v + "'");
        }
        if (take(data, "n", &v)) cfg.data.n = static_cast<std::size_t>(parse_u64("data.n", v));
        if (take(data, "eval_n", &v))
            cfg.data.eval_n = static_cast<std::size_t>(parse_u64("data.eval_n", v));
        if (take(data, "seed", &v)) {
            cfg.data.seed = parse_u64("data.seed", v);
            seed_given = true;
        }
        if (take(data, "train_dir", &v)) cfg.data.train_dir = v;
        if (take(data, "eval_dir", &v)) cfg.data.eval_dir = v;
        if (!data->empty()) throw ConfigError("unknown key 'data." + data->begin()->first + "'");
        if (cfg.data.kind == DataSpec::Kind::Dir) {
            if (cfg.data.train_dir.empty())
                throw ConfigError("data.kind=dir requires data.train_dir");
        } else if (!seed_given) {
            cfg.data.seed = cfg.seed + 1;
        }
        ini.kv.erase("data");
    } else {
        cfg.data.seed = cfg.seed + 1;
    }

    if (ini.kv.count("backbone")) {
        if (ini.backbone_layers.empty()) throw ConfigError("empty [backbone] section");
        cfg.backbone.clear();
        for (std::size_t i = 0; i < ini.backbone_layers.size(); ++i) {
            const auto& [key, value] = ini.backbone_layers[i];
            std::string expect = "layer" + std::to_string(i + 1);
            if (key != expect)
                throw ConfigError("backbone layers must be named layer1..layerN in order; got '" +
                                  key + "' where '" + expect + "' was expected");
            cfg.backbone.push_back(parse_layer(key, value));
        }
        ini.kv.erase("backbone");
    }

    if (!ini.kv.empty()) throw ConfigError("unknown section '[" + ini.kv.begin()->first + "]'");

    if (cfg.learning_rate < 0.0 || cfg.weight_decay < 0.0 || cfg.scheduler_gamma < 0.0 ||
        cfg.lambda < 0.0)
        throw ConfigError("rates, gamma and lambda must be non-negative");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.scheduler_step < 1) throw ConfigError("scheduler_step must be >= 1");
    if (cfg.data.kind == DataSpec::Kind::Synth && cfg.data.n < 1)
        throw ConfigError("data.n must be >= 1");
    if (cfg.backbone.empty()) throw ConfigError("backbone must have at least one layer");
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_train_config_text(buf.str());
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "[train]\n";
    os << "task = " << task_name(cfg.task) << "\n";
    os << "learning_rate = " << format_double(cfg.learning_rate) << "\n";
    os << "weight_decay = " << format_double(cfg.weight_decay) << "\n";
    os << "scheduler_step = " << cfg.scheduler_step << "\n";
    os << "scheduler_gamma = " << format_double(cfg.scheduler_gamma) << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "lambda = " << format_double(cfg.lambda) << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "checkpoint_every = " << cfg.checkpoint_every << "\n";
    os << "\n[data]\n";
    os << "kind = " << (cfg.data.kind == DataSpec::Kind::Synth ? "synth" : "dir") << "\n";
    if (cfg.data.kind == DataSpec::Kind::Synth) {
        os << "n = " << cfg.data.n << "\n";
        os << "eval_n = " << cfg.data.eval_n << "\n";
        os << "seed = " << cfg.data.seed << "\n";
    } else {
        os << "train_dir = " << cfg.data.train_dir << "\n";
        if (!cfg.data.eval_dir.empty()) os << "eval_dir = " << cfg.data.eval_dir << "\n";
    }
    os << "\n[backbone]\n";
    for (std::size_t i = 0; i < cfg.backbone.size(); ++i)
        os << "layer" << (i + 1) << " = " << layer_to_string(cfg.backbone[i]) << "\n";
    return os.str();
}

}  // namespace sfconv
