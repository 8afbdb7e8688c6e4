#include "tensor_io.hpp"

#include <cctype>
#include <fstream>

#include "binio.hpp"

namespace sfconv {

void write_tnsr(std::ostream& os, const Tensor& t) {
    os.write("TNSR", 4);
    put_u32(os, kTnsrVersion);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(os, static_cast<std::uint64_t>(e));
    for (double x : t.data()) put_f64(os, x);
    if (!os) throw IoError("TNSR write failed");
}

Tensor read_tnsr(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "TNSR")
        throw IoError("not a TNSR stream (bad magic)");
    std::uint32_t version = get_u32(is);
    if (version != kTnsrVersion)
        throw IoError("unsupported TNSR version " + std::to_string(version));
    std::uint32_t rank = get_u32(is);
    if (rank == 0 || rank > 32) throw IoError("TNSR rank out of range: " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) {
        std::uint64_t v = get_u64(is);
        if (v == 0) throw IoError("TNSR extent of zero");
        e = static_cast<std::size_t>(v);
    }
    std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 34)) throw IoError("TNSR payload implausibly large");
    std::vector<double> data(n);
    for (auto& x : data) x = get_f64(is);
    return Tensor(std::move(shape), std::move(data));
}

void write_tnsr_file(const Tensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_tnsr(os, t);
    if (!os.flush()) throw IoError("write failed: " + path);
}

Tensor read_tnsr_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return read_tnsr(is);
}

namespace {

// next whitespace-delimited token, skipping '#' comment lines
int pnm_int(std::istream& is, const std::string& path) {
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw IoError("malformed PNM header: " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

}  // namespace

Tensor read_pnm_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = static_cast<char>(is.get());
    char m1 = static_cast<char>(is.get());
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw IoError("unsupported PNM type (want binary P5/P6): " + path);
    const std::size_t channels = (m1 == '5') ? 1 : 3;
    int w = pnm_int(is, path);
    int h = pnm_int(is, path);
    int maxval = pnm_int(is, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw IoError("unsupported PNM geometry or maxval: " + path);
    // header ends with exactly one whitespace byte, already consumed by pnm_int
    std::size_t npix = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<unsigned char> buf(npix * channels);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        throw IoError("truncated PNM payload: " + path);
    // interleaved on disk, planar in the tensor
    Tensor t({channels, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    double* out = t.raw();
    for (std::size_t p = 0; p < npix; ++p)
        for (std::size_t c = 0; c < channels; ++c)
            out[c * npix + p] = static_cast<double>(buf[p * channels + c]);
    return t;
}

Tensor read_image_file(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open: " + path);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    if (std::string(magic, 4) == "TNSR") return read_tnsr_file(path);
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return read_pnm_file(path);
    throw IoError("unrecognized image format: " + path);
}

}  // namespace sfconv
