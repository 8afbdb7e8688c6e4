#include "checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "errors.hpp"
#include "tensor_io.hpp"

namespace sfconv {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'C', 'K'};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os.write(kMagic, 4);
    put_u32(os, kSfckVersion);
    put_str(os, ck.config_text);
    for (const auto& [name, tensor] : ck.tensors) {
        put_str(os, name);
        write_tnsr(os, tensor);
    }
    if (!os) throw IoError("short write while serializing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        throw IoError("not a checkpoint file (bad magic)");
    const std::uint32_t version = get_u32(is);
    if (version != kSfckVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_text = get_str(is);
    while (true) {
        is.peek();
        if (is.eof()) break;
        std::string name = get_str(is);
        ck.tensors.emplace_back(std::move(name), read_tnsr(is));
    }
    return ck;
}

void write_checkpoint_file(const Checkpoint& ck, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        write_checkpoint(os, ck);
        if (!os.flush()) throw IoError("short write on " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint read_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    return read_checkpoint(is);
}

const Tensor* find_tensor(const Checkpoint& ck, const std::string& name) {
    for (const auto& [n, t] : ck.tensors)
        if (n == name) return &t;
    return nullptr;
}

std::string compose_snapshot(const std::string& config_text, const RuntimeState& rt) {
    std::ostringstream os;
    os << config_text;
    if (!config_text.empty() && config_text.back() != '\n') os << "\n";
    os << "\n[runtime]\n";
    os << "epochs_done = " << rt.epochs_done << "\n";
    os << "step = " << rt.step << "\n";
    os << "rng = " << rt.rng_state << "\n";
    os << "input = ";
    for (std::size_t i = 0; i < rt.input_shape.size(); ++i)
        os << (i ? "x" : "") << rt.input_shape[i];
    os << "\n";
    return os.str();
}

std::pair<std::string, std::optional<RuntimeState>> split_snapshot(const std::string& text) {
    const std::string marker = "[runtime]";
    std::istringstream is(text);
    std::string line;
    std::string config_part;
    bool in_runtime = false;
    RuntimeState rt;
    bool seen = false;
    while (std::getline(is, line)) {
        if (trim(line) == marker) {
            in_runtime = true;
            seen = true;
            continue;
        }
        if (!in_runtime) {
            config_part += line;
            config_part += "\n";
            continue;
        }
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw IoError("malformed runtime line: " + line);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "epochs_done") rt.epochs_done = std::stoull(value);
            else if (key == "step") rt.step = std::stoull(value);
            else if (key == "rng") rt.rng_state = value;
            else if (key == "input") {
                rt.input_shape.clear();
                std::stringstream ss(value);
                std::string part;
                while (std::getline(ss, part, 'x'))
                    rt.input_shape.push_back(std::stoull(part));
            } else {
                throw IoError("unknown runtime key '" + key + "'");
            }
        } catch (const IoError&) {
            throw;
        } catch (const std::exception&) {
            throw IoError("malformed runtime value for '" + key + "'");
        }
    }
    // drop the blank separator line compose_snapshot adds
    while (config_part.size() >= 2 && config_part.ends_with("\n\n")) config_part.pop_back();
    if (!seen) return {config_part, std::nullopt};
    return {config_part, rt};
}

}  // namespace sfconv
