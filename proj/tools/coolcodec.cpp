// Command-line front end: encode / decode / sweep / bdrate.
// Exit codes: 0 success, 2 format error, 3 round-trip mismatch.

#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "coolcodec/coolcodec.hpp"

using namespace coolcodec;

namespace {

constexpr int kExitFormat = 2;
constexpr int kExitMismatch = 3;

uint64_t default_seed() {
    if (const char* env = std::getenv("COOLCODEC_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

std::vector<double> parse_lambdas(const std::string& spec) {
    if (spec.empty()) return {0.02, 0.004, 0.001, 0.0004, 0.0001};
    std::vector<double> out;
    std::istringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok));
    }
    if (out.empty()) throw FormatError("no lambda values in \"" + spec + "\"");
    return out;
}

RdPoint encode_point(const Image& img, double lambda, const std::string& config, int iters,
                     uint64_t seed, const std::string& log_path, const std::string& out_path) {
    EncoderConfig enc = EncoderConfig::with_total(iters);
    enc.lambda = lambda;
    enc.seed = seed;
    enc.log_path = log_path;
    const DecoderConfig dcfg = DecoderConfig::from_name(config);
    EncodeResult res = encode_image(img, enc, dcfg);

    // round-trip verification: the standalone decode must reproduce the
    // encoder-side reconstruction exactly
    DecodeResult dec = decode_image(res.bytes);
    if (dec.img.pix != res.recon.pix)
        throw TrainingError("round-trip mismatch: decoded image differs from encoder output");
    if (!out_path.empty()) write_file(out_path, res.bytes);

    RdPoint p;
    p.lambda = lambda;
    p.bpp = res.stats.bpp;
    p.psnr = res.stats.psnr;
    p.file_bytes = res.stats.file_bytes;
    p.nn_bytes = res.stats.nn_bytes;
    p.iters = res.stats.iterations;
    p.seconds = res.stats.seconds;
    return p;
}

int run(int argc, char** argv) {
    CLI::App app{"overfitted image codec"};
    app.require_subcommand(1);

    // encode
    std::string in_path, out_path, config = "hop", log_path;
    double lambda = 0.001;
    int iters = 100000;
    uint64_t seed = default_seed();
    auto* enc_cmd = app.add_subcommand("encode", "encode a PPM image");
    enc_cmd->add_option("--input,-i", in_path, "input image (binary PPM)")->required();
    enc_cmd->add_option("--output,-o", out_path, "output bitstream")->required();
    enc_cmd->add_option("--lambda", lambda, "rate multiplier");
    enc_cmd->add_option("--config", config, "decoder config: lop|mop|hop|vhop");
    enc_cmd->add_option("--iters", iters, "total training iterations");
    enc_cmd->add_option("--seed", seed, "RNG seed (default: COOLCODEC_SEED or 0)");
    enc_cmd->add_option("--log", log_path, "per-iteration CSV log");

    // decode
    std::string dec_in, dec_out;
    bool dec_stats = false;
    auto* dec_cmd = app.add_subcommand("decode", "decode a bitstream to PPM");
    dec_cmd->add_option("--input,-i", dec_in, "input bitstream")->required();
    dec_cmd->add_option("--output,-o", dec_out, "output image (PPM)")->required();
    dec_cmd->add_flag("--stats", dec_stats, "print size/complexity stats");

    // sweep
    std::string sw_in, sw_csv, sw_lambdas, sw_config = "hop";
    int sw_iters = 100000, sw_workers = 1;
    uint64_t sw_seed = default_seed();
    auto* sw_cmd = app.add_subcommand("sweep", "encode at several lambda values");
    sw_cmd->add_option("--input,-i", sw_in, "input image (binary PPM)")->required();
    sw_cmd->add_option("--lambdas", sw_lambdas, "comma-separated lambda list");
    sw_cmd->add_option("--config", sw_config, "decoder config");
    sw_cmd->add_option("--csv", sw_csv, "output CSV path")->required();
    sw_cmd->add_option("--iters", sw_iters, "total training iterations per point");
    sw_cmd->add_option("--seed", sw_seed, "RNG seed");
    sw_cmd->add_option("--workers", sw_workers, "parallel encodes");

    // bdrate
    std::string bd_anchor, bd_test;
    auto* bd_cmd = app.add_subcommand("bdrate", "BD-rate between two sweep CSVs");
    bd_cmd->add_option("--anchor", bd_anchor, "anchor sweep CSV")->required();
    bd_cmd->add_option("--test", bd_test, "test sweep CSV")->required();

    CLI11_PARSE(app, argc, argv);

    if (enc_cmd->parsed()) {
        const Image img = load_ppm(in_path);
        const RdPoint p = encode_point(img, lambda, config, iters, seed, log_path, out_path);
        std::cout << "encoded " << in_path << ": " << p.file_bytes << " bytes, " << p.bpp
                  << " bpp, " << p.psnr << " dB, nn " << p.nn_bytes << " B, " << p.seconds
                  << " s\n";
        return 0;
    }
    if (dec_cmd->parsed()) {
        const auto bytes = read_file(dec_in);
        const DecodeResult res = decode_image(bytes);
        save_ppm(res.img, dec_out);
        if (dec_stats) {
            std::cout << "bpp " << res.stats.bpp << "\nnn_bytes " << res.stats.nn_bytes
                      << "\nlatent_bytes " << res.stats.latent_bytes << "\nmac_per_pixel "
                      << res.stats.macs_per_pixel << "\n";
        }
        return 0;
    }
    if (sw_cmd->parsed()) {
        const Image img = load_ppm(sw_in);
        std::vector<double> lambdas = parse_lambdas(sw_lambdas);
        std::sort(lambdas.rbegin(), lambdas.rend());  // rows ordered by descending lambda
        std::vector<RdPoint> rows(lambdas.size());
        std::atomic<size_t> next{0};
        std::atomic<bool> failed{false};
        std::string fail_msg;
        std::mutex fail_mu;
        auto worker = [&]() {
            for (size_t i = next.fetch_add(1); i < lambdas.size(); i = next.fetch_add(1)) {
                if (failed.load()) return;
                try {
                    rows[i] = encode_point(img, lambdas[i], sw_config, sw_iters, sw_seed, "", "");
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> g(fail_mu);
                    failed = true;
                    fail_msg = e.what();
                    return;
                }
            }
        };
        const int nw = std::max(1, std::min<int>(sw_workers, int(lambdas.size())));
        std::vector<std::thread> threads;
        for (int i = 1; i < nw; ++i) threads.emplace_back(worker);
        worker();
        for (auto& t : threads) t.join();
        if (failed) throw TrainingError("sweep aborted: " + fail_msg);
        std::ofstream out(sw_csv);
        if (!out) throw FormatError("cannot write " + sw_csv);
        out << sweep_csv(rows);
        std::cout << "wrote " << sw_csv << " (" << rows.size() << " points)\n";
        return 0;
    }
    if (bd_cmd->parsed()) {
        RdCurve anchor, test;
        anchor.points = load_sweep_csv(bd_anchor);
        test.points = load_sweep_csv(bd_test);
        std::cout << "bd-rate " << bd_rate_percent(anchor, test) << " %\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
