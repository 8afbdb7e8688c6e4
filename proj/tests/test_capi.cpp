#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sfconv/sfconv.h"

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / "sfconv_test_capi" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

const char* kTinyConfig =
    "[train]\n"
    "task = classify\n"
    "epochs = 2\n"
    "batch_size = 8\n"
    "seed = 3\n"
    "checkpoint_every = 0\n"
    "[data]\n"
    "n = 16\n"
    "eval_n = 4\n"
    "[backbone]\n"
    "layer1 = sfconv k=3 cin=1 cout=4 s=1 p=1 r=3 bias=1\n"
    "layer2 = relu\n"
    "layer3 = pool\n"
    "layer4 = flatten\n"
    "layer5 = dense in=1024 out=3 bias=1\n";

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& text) {
    auto p = dir / "train.ini";
    std::ofstream os(p);
    os << text;
    return p;
}

sfc_tensor* make_tensor(std::initializer_list<uint64_t> extents,
                        std::initializer_list<double> values) {
    std::vector<uint64_t> e(extents);
    sfc_tensor* t = nullptr;
    REQUIRE(sfc_tensor_create(e.data(), uint32_t(e.size()), &t) == SFC_OK);
    double* data = nullptr;
    uint64_t count = 0;
    REQUIRE(sfc_tensor_data(t, &data, &count) == SFC_OK);
    REQUIRE(count == values.size());
    std::size_t i = 0;
    for (double v : values) data[i++] = v;
    return t;
}

}  // namespace

TEST_CASE("version and error strings are always present") {
    REQUIRE(sfc_version() != nullptr);
    CHECK(std::strlen(sfc_version()) > 0);
    REQUIRE(sfc_last_error() != nullptr);
}

TEST_CASE("tensor lifecycle through the opaque handle") {
    const uint64_t extents[3] = {2, 3, 4};
    sfc_tensor* t = nullptr;
    REQUIRE(sfc_tensor_create(extents, 3, &t) == SFC_OK);
    REQUIRE(t != nullptr);
    CHECK(sfc_tensor_rank(t) == 3);

    uint64_t got[4] = {0, 0, 0, 0};
    CHECK(sfc_tensor_extents(t, got, 4) == 3);
    CHECK(got[0] == 2);
    CHECK(got[2] == 4);
    uint64_t two[2] = {0, 0};
    CHECK(sfc_tensor_extents(t, two, 2) == 3);  // still reports the full rank
    CHECK(two[1] == 3);

    double* data = nullptr;
    uint64_t count = 0;
    REQUIRE(sfc_tensor_data(t, &data, &count) == SFC_OK);
    REQUIRE(data != nullptr);
    REQUIRE(count == 24);
    for (uint64_t i = 0; i < count; ++i) CHECK(data[i] == 0.0);
    for (uint64_t i = 0; i < count; ++i) data[i] = 0.5 * double(i);

    auto path = fresh_dir("tensors") / "t.tnsr";
    CHECK(sfc_tensor_write(t, path.string().c_str()) == SFC_OK);

    sfc_tensor* back = nullptr;
    REQUIRE(sfc_tensor_read(path.string().c_str(), &back) == SFC_OK);
    CHECK(sfc_tensor_rank(back) == 3);
    double* bdata = nullptr;
    uint64_t bcount = 0;
    REQUIRE(sfc_tensor_data(back, &bdata, &bcount) == SFC_OK);
    REQUIRE(bcount == 24);
    for (uint64_t i = 0; i < bcount; ++i) CHECK(bdata[i] == 0.5 * double(i));

    sfc_tensor_free(t);
    sfc_tensor_free(back);
    sfc_tensor_free(nullptr);  // harmless
}

TEST_CASE("error codes and messages surface through the boundary") {
    sfc_tensor* t = nullptr;
    CHECK(sfc_tensor_read("/nonexistent/file.tnsr", &t) == SFC_ERR_IO);
    CHECK(std::strlen(sfc_last_error()) > 0);
    CHECK(t == nullptr);

    CHECK(sfc_tensor_create(nullptr, 1, &t) == SFC_ERR_INVALID);
    const uint64_t zero_extent[1] = {0};
    CHECK(sfc_tensor_create(zero_extent, 1, &t) == SFC_ERR_SHAPE);

    sfc_model* m = nullptr;
    CHECK(sfc_model_from_config_text("[train]\ntask = juggling\n", &m) == SFC_ERR_CONFIG);
    CHECK(m == nullptr);
    CHECK(sfc_model_from_config_text(nullptr, &m) == SFC_ERR_INVALID);
}

TEST_CASE("moment statistics and histogram") {
    sfc_tensor* t = make_tensor({6}, {-1.0, 1.0, -1.0, 1.0, -1.0, 1.0});
    double skew = 99.0, kurt = 99.0, mean = 99.0, variance = 99.0;
    REQUIRE(sfc_moment_stats(t, &mean, &variance, &skew, &kurt) == SFC_OK);
    CHECK(mean == doctest::Approx(0.0));
    CHECK(variance == doctest::Approx(1.0));
    CHECK(skew == doctest::Approx(0.0));
    CHECK(kurt == doctest::Approx(-2.0));
    // each output pointer is optional
    CHECK(sfc_moment_stats(t, nullptr, nullptr, &skew, nullptr) == SFC_OK);
    sfc_tensor_free(t);

    sfc_tensor* flat = make_tensor({3}, {2.0, 2.0, 2.0});
    CHECK(sfc_moment_stats(flat, nullptr, nullptr, &skew, nullptr) == SFC_ERR_DOMAIN);
    sfc_tensor_free(flat);

    sfc_tensor* v = make_tensor({2, 2}, {0.0, 0.0, 10.0, 10.0});
    double edges[3] = {0, 0, 0};
    uint64_t counts[2] = {0, 0};
    REQUIRE(sfc_histogram(v, 2, edges, counts) == SFC_OK);
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 2);
    CHECK(edges[0] == 0.0);
    CHECK(edges[2] == 10.0);
    CHECK(sfc_histogram(v, 1, edges, counts) == SFC_ERR_DOMAIN);
    sfc_tensor_free(v);
}

TEST_CASE("model handles expose structure and prediction") {
    sfc_model* m = nullptr;
    REQUIRE(sfc_model_from_config_text(kTinyConfig, &m) == SFC_OK);
    REQUIRE(m != nullptr);

    uint64_t params = 0;
    CHECK(sfc_model_param_count(m, &params) == SFC_OK);
    // sfconv: 3*3*(1+4)+4 = 49; dense: 3*1024+3 = 3075
    CHECK(params == 49 + 3075);

    uint64_t flops = 0;
    const uint64_t shape[4] = {1, 1, 32, 32};
    CHECK(sfc_model_flops(m, shape, 4, &flops) == SFC_OK);
    CHECK(flops > 0);
    CHECK(sfc_model_flops(m, shape, 3, &flops) == SFC_ERR_SHAPE);

    // forward on a handle-made batch
    const uint64_t bshape[4] = {2, 1, 32, 32};
    sfc_tensor* batch = nullptr;
    REQUIRE(sfc_tensor_create(bshape, 4, &batch) == SFC_OK);
    double* bd = nullptr;
    uint64_t bcount = 0;
    REQUIRE(sfc_tensor_data(batch, &bd, &bcount) == SFC_OK);
    for (uint64_t i = 0; i < bcount; ++i) bd[i] = double(i % 7) / 7.0;
    sfc_tensor* out = nullptr;
    REQUIRE(sfc_model_forward(m, batch, &out) == SFC_OK);
    CHECK(sfc_tensor_rank(out) == 2);
    uint64_t oext[2];
    CHECK(sfc_tensor_extents(out, oext, 2) == 2);
    CHECK(oext[0] == 2);
    CHECK(oext[1] == 3);

    sfc_tensor_free(batch);
    sfc_tensor_free(out);
    sfc_model_free(m);
}

TEST_CASE("training, evaluation, spectra and weights through the c api") {
    auto out_dir = fresh_dir("train");
    auto cfg_path = write_config(out_dir, kTinyConfig);
    int epochs_seen = 0;
    auto cb = [](uint64_t epoch, uint64_t total, double task_loss, double kl, double total_loss,
                 double eval_metric, void* user) {
        (void)epoch;
        (void)task_loss;
        (void)kl;
        (void)total_loss;
        (void)eval_metric;
        CHECK(total == 2);
        ++*static_cast<int*>(user);
    };
    REQUIRE(sfc_train_run(cfg_path.string().c_str(), out_dir.string().c_str(), nullptr, cb,
                          &epochs_seen) == SFC_OK);
    CHECK(epochs_seen == 2);
    auto final_ckpt = out_dir / "ckpt_final.sfck";
    REQUIRE(std::filesystem::exists(final_ckpt));
    CHECK(std::filesystem::exists(out_dir / "metrics.csv"));

    sfc_model* m = nullptr;
    REQUIRE(sfc_model_from_checkpoint(final_ckpt.string().c_str(), &m) == SFC_OK);

    auto spec_csv = out_dir / "spectrum.csv";
    REQUIRE(sfc_model_spectrum_csv(m, spec_csv.string().c_str()) == SFC_OK);
    std::string spec = slurp(spec_csv);
    CHECK(spec.rfind("layer,matrix,index,sigma,normalized", 0) == 0);
    // one factorized layer of rank 3: three p rows and three q rows
    std::size_t lines = 0;
    for (char ch : spec)
        if (ch == '\n') ++lines;
    CHECK(lines == 1 + 6);

    auto hist_csv = out_dir / "weights.csv";
    REQUIRE(sfc_model_weight_histogram_csv(m, 8, 1, hist_csv.string().c_str()) == SFC_OK);
    std::string hist = slurp(hist_csv);
    CHECK(hist.rfind("bin_low,bin_high,count", 0) == 0);

    double fps = 0.0;
    const uint64_t shape[4] = {1, 1, 32, 32};
    REQUIRE(sfc_model_measure_fps(m, shape, 4, 3, 0, &fps) == SFC_OK);
    CHECK(fps > 0.0);
    CHECK(sfc_model_measure_fps(m, shape, 4, 2, 0, &fps) == SFC_ERR_DOMAIN);
    sfc_model_free(m);

    // synth -> evaluate round trip
    auto data_dir = fresh_dir("synth");
    REQUIRE(sfc_synth_write("classify", 9, 5, data_dir.string().c_str()) == SFC_OK);
    CHECK(std::filesystem::exists(data_dir / "manifest.csv"));
    double metric = -1.0;
    REQUIRE(sfc_evaluate_dir(final_ckpt.string().c_str(), data_dir.string().c_str(), &metric) ==
            SFC_OK);
    CHECK(metric >= 0.0);
    CHECK(metric <= 1.0);

    // image statistics over the synthetic directory
    auto stats_csv = out_dir / "stats.csv";
    auto hist_dir = fresh_dir("hists");
    REQUIRE(sfc_image_stats_csv(data_dir.string().c_str(), 16, hist_dir.string().c_str(),
                                stats_csv.string().c_str()) == SFC_OK);
    std::string stats = slurp(stats_csv);
    CHECK(stats.rfind("path,n,skewness,kurtosis", 0) == 0);
    std::size_t rows = 0;
    for (char ch : stats)
        if (ch == '\n') ++rows;
    CHECK(rows == 1 + 9);
    bool any_hist = false;
    for (auto& e : std::filesystem::directory_iterator(hist_dir))
        if (e.path().extension() == ".csv") any_hist = true;
    CHECK(any_hist);

    CHECK(sfc_synth_write("mystery", 3, 1, data_dir.string().c_str()) == SFC_ERR_CONFIG);
}

TEST_CASE("resume through the c api continues the same trajectory") {
    std::string cfg4 = kTinyConfig;
    auto pos = cfg4.find("epochs = 2");
    REQUIRE(pos != std::string::npos);
    cfg4.replace(pos, 10, "epochs = 4");
    auto pos2 = cfg4.find("checkpoint_every = 0");
    REQUIRE(pos2 != std::string::npos);
    cfg4.replace(pos2, 20, "checkpoint_every = 2");

    auto full_dir = fresh_dir("resume_full");
    auto cfg_full = write_config(full_dir, cfg4);
    REQUIRE(sfc_train_run(cfg_full.string().c_str(), full_dir.string().c_str(), nullptr, nullptr,
                          nullptr) == SFC_OK);
    auto mid = full_dir / "ckpt_epoch_0002.sfck";
    REQUIRE(std::filesystem::exists(mid));

    auto tail_dir = fresh_dir("resume_tail");
    auto cfg_tail = write_config(tail_dir, cfg4);
    REQUIRE(sfc_train_run(cfg_tail.string().c_str(), tail_dir.string().c_str(),
                          mid.string().c_str(), nullptr, nullptr) == SFC_OK);
    CHECK(slurp(full_dir / "ckpt_final.sfck") == slurp(tail_dir / "ckpt_final.sfck"));
}
