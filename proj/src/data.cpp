#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor_io.hpp"

namespace sfconv {

namespace {

constexpr std::size_t kClassifySide = 32;
constexpr std::size_t kSegmentSide = 48;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

Tensor classify_image(int label, Rng& rng) {
    const std::size_t s = kClassifySide;
    Tensor img({1, s, s});
    const double theta = static_cast<double>(label) * std::numbers::pi / 4.0;  // 0, 45, 90 deg
    const double ct = std::cos(theta), st = std::sin(theta);
    const double freq = rng.uniform(0.08, 0.16);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
            const double t = ct * static_cast<double>(x) + st * static_cast<double>(y);
            double v = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * freq * t + phase);
            v += rng.normal(0.0, 0.08);
            // skewed low-variance intensity profile
            img(0, y, x) = std::pow(clamp01(v), 2.5);
        }
    }
    return img;
}

// One attempt at a stroke image; returns false when mask coverage leaves
// the configured band.
bool segment_attempt(Rng& rng, Tensor& img, Tensor& mask) {
    const std::size_t s = kSegmentSide;
    img = Tensor({1, s, s});
    mask = Tensor({1, s, s});
    const std::size_t n_strokes = 1 + rng.index(2);
    for (std::size_t k = 0; k < n_strokes; ++k) {
        double x = rng.uniform(6.0, static_cast<double>(s) - 6.0);
        double y = rng.uniform(6.0, static_cast<double>(s) - 6.0);
        double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const std::size_t steps = 24 + rng.index(33);
        for (std::size_t t = 0; t < steps; ++t) {
            ang += rng.normal(0.0, 0.18);
            x += std::cos(ang);
            y += std::sin(ang);
            if (x < 1.0 || y < 1.0 || x > static_cast<double>(s) - 2.0 ||
                y > static_cast<double>(s) - 2.0)
                break;
            const long cx = std::lround(x), cy = std::lround(y);
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    if (dx * dx + dy * dy > 1) continue;  // 5-pixel cross
                    const long px = cx + dx, py = cy + dy;
                    if (px < 0 || py < 0 || px >= static_cast<long>(s) ||
                        py >= static_cast<long>(s))
                        continue;
                    mask(0, static_cast<std::size_t>(py), static_cast<std::size_t>(px)) = 1.0;
                }
            }
        }
    }
    double covered = 0.0;
    for (double v : mask.data()) covered += v;
    const double frac = covered / static_cast<double>(s * s);
    if (frac < kMaskFractionLo || frac > kMaskFractionHi) return false;

    Tensor raw({1, s, s});
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = mask[i] > 0.5 ? 0.75 + rng.normal(0.0, 0.05)
                               : 0.25 + rng.normal(0.0, 0.05);
    }
    // 3x3 box blur softens the stroke boundary
    for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
            double acc = 0.0;
            int cnt = 0;
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    const long px = static_cast<long>(x) + dx, py = static_cast<long>(y) + dy;
                    if (px < 0 || py < 0 || px >= static_cast<long>(s) ||
                        py >= static_cast<long>(s))
                        continue;
                    acc += raw(0, static_cast<std::size_t>(py), static_cast<std::size_t>(px));
                    ++cnt;
                }
            }
            img(0, y, x) = clamp01(acc / cnt + rng.normal(0.0, 0.03));
        }
    }
    return true;
}

// Manifest rows never contain commas or quotes, so plain splitting suffices.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool is_pnm(const std::string& name) {
    return name.size() > 4 &&
           (name.ends_with(".pgm") || name.ends_with(".ppm"));
}

Tensor load_image_scaled(const std::string& path) {
    Tensor t = read_image_file(path);
    if (is_pnm(path)) {
        for (auto& v : t.data()) v /= 255.0;
    }
    return t;
}

}  // namespace

Dataset synth_classify(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw DomainError("dataset size must be >= 1");
    Dataset d;
    d.task = TaskKind::Classify;
    d.images.reserve(n);
    d.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 3);
        Rng rng = Rng::stream(seed, i);
        d.images.push_back(classify_image(label, rng));
        d.labels.push_back(label);
    }
    return d;
}

Dataset synth_segment(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw DomainError("dataset size must be >= 1");
    Dataset d;
    d.task = TaskKind::Segment;
    d.images.reserve(n);
    d.masks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool ok = false;
        Tensor img, mask;
        for (std::size_t attempt = 0; attempt < 64 && !ok; ++attempt) {
            Rng rng = Rng::stream(seed, i * 1024 + attempt);
            ok = segment_attempt(rng, img, mask);
        }
        if (!ok)
            throw DomainError("stroke generator failed to hit the coverage band for sample " +
                              std::to_string(i));
        d.images.push_back(std::move(img));
        d.masks.push_back(std::move(mask));
    }
    return d;
}

Dataset synth_dataset(TaskKind kind, std::size_t n, std::uint64_t seed) {
    return kind == TaskKind::Classify ? synth_classify(n, seed) : synth_segment(n, seed);
}

void write_dataset(const Dataset& d, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

    std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::binary);
    if (!manifest) throw IoError("cannot write manifest in " + dir);
    const bool classify = d.task == TaskKind::Classify;
    manifest << (classify ? "image,label\n" : "image,mask\n");
    char name[32];
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::snprintf(name, sizeof name, "img_%05zu.tnsr", i);
        write_tnsr_file(d.images[i], (fs::path(dir) / name).string());
        if (classify) {
            manifest << name << "," << d.labels[i] << "\n";
        } else {
            char mname[32];
            std::snprintf(mname, sizeof mname, "msk_%05zu.tnsr", i);
            write_tnsr_file(d.masks[i], (fs::path(dir) / mname).string());
            manifest << name << "," << mname << "\n";
        }
    }
    if (!manifest.flush()) throw IoError("short write on manifest in " + dir);
}

Dataset load_dataset_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.csv", std::ios::binary);
    if (!manifest) throw IoError("cannot open manifest.csv in " + dir);
    std::string line;
    if (!std::getline(manifest, line)) throw IoError("empty manifest in " + dir);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    Dataset d;
    bool classify;
    if (line == "image,label") {
        classify = true;
        d.task = TaskKind::Classify;
    } else if (line == "image,mask") {
        classify = false;
        d.task = TaskKind::Segment;
    } else {
        throw IoError("manifest header must be image,label or image,mask, got '" + line + "'");
    }

    while (std::getline(manifest, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 2)
            throw IoError("manifest row needs 2 fields, got '" + line + "'");
        Tensor img = load_image_scaled((fs::path(dir) / fields[0]).string());
        if (!d.images.empty() && !img.same_shape(d.images.front()))
            throw ShapeError("dataset images disagree in shape: " + fields[0]);
        d.images.push_back(std::move(img));
        if (classify) {
            try {
                std::size_t pos = 0;
                int label = std::stoi(fields[1], &pos);
                if (pos != fields[1].size() || label < 0) throw std::invalid_argument("");
                d.labels.push_back(label);
            } catch (const std::exception&) {
                throw IoError("bad label '" + fields[1] + "' in manifest");
            }
        } else {
            Tensor mask = load_image_scaled((fs::path(dir) / fields[1]).string());
            if (!mask.same_shape(d.images.back()))
                throw ShapeError("mask shape differs from image: " + fields[1]);
            for (auto& v : mask.data()) v = v >= 0.5 ? 1.0 : 0.0;
            d.masks.push_back(std::move(mask));
        }
    }
    if (d.images.empty()) throw IoError("manifest lists no samples in " + dir);
    return d;
}

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ShapeError("empty batch");
    const Shape& per = d.images.front().shape();
    Batch b{Tensor({indices.size(), per[0], per[1], per[2]}), {}, std::nullopt};
    const std::size_t stride = d.images.front().size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= d.size()) throw ShapeError("batch index out of range");
        std::copy_n(d.images[src].raw(), stride, b.images.raw() + i * stride);
    }
    if (d.task == TaskKind::Classify) {
        b.labels.reserve(indices.size());
        for (std::size_t src : indices) b.labels.push_back(d.labels[src]);
    } else {
        Tensor masks({indices.size(), per[0], per[1], per[2]});
        for (std::size_t i = 0; i < indices.size(); ++i)
            std::copy_n(d.masks[indices[i]].raw(), stride, masks.raw() + i * stride);
        b.masks = std::move(masks);
    }
    return b;
}

}  // namespace sfconv
