#include "warpfuse/cli/cli.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "warpfuse/align/align.hpp"
#include "warpfuse/core/types.hpp"
#include "warpfuse/fusion/toy.hpp"
#include "warpfuse/io/image_io.hpp"
#include "warpfuse/metrics/metrics.hpp"
#include "warpfuse/synth/synth.hpp"
#include "warpfuse/tps/serialize.hpp"
#include "warpfuse/tps/tps.hpp"
#include "warpfuse/tps/warp.hpp"

namespace warpfuse::cli {

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed on '" + path + "'");
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed on '" + path + "'");
}

// ".PGM" and ".pgm" save as PGM, everything else as PNG.
std::string output_extension(const std::string& input_path) {
    size_t dot = input_path.find_last_of('.');
    if (dot == std::string::npos) return ".png";
    std::string ext = input_path.substr(dot);
    for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext == ".pgm" ? ".pgm" : ".png";
}

std::string join_dir(const std::string& dir, const std::string& name) {
    if (dir.empty() || dir == ".") return name;
    return dir.back() == '/' ? dir + name : dir + "/" + name;
}

void ensure_dir(const std::string& dir) {
    if (dir.empty() || dir == ".") return;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
}

// Ground-truth rasters come in as 8-bit images; anything at or above mid-gray
// counts as foreground.
SaliencyMap load_binary_gt(const std::string& path) {
    SaliencyMap gt = io::to_saliency(io::load_image(path));
    for (double& v : gt.values) v = v >= 0.5 ? 1.0 : 0.0;
    return gt;
}

std::pair<int, int> parse_grid_arg(const std::string& text) {
    size_t x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
        throw UsageError("--grid expects RxC, e.g. 4x4");
    }
    int rows = 0, cols = 0;
    try {
        size_t used = 0;
        rows = std::stoi(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(text);
        cols = std::stoi(text.substr(x + 1), &used);
        if (used != text.size() - x - 1) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw UsageError("--grid expects RxC, e.g. 4x4");
    }
    if (rows < 2 || cols < 2) throw UsageError("--grid needs at least 2 rows and 2 columns");
    return {rows, cols};
}

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// --- subcommand bodies -----------------------------------------------------

void cmd_solve(const std::string& points_path, const std::string& targets_path,
               const std::string& out_path) {
    tps::ControlPointGrid grid = tps::parse_grid(read_text_file(points_path));
    std::vector<Vec2> targets = tps::parse_points(read_text_file(targets_path));
    if (targets.size() != grid.points.size()) {
        throw std::invalid_argument("targets count does not match grid points");
    }
    tps::TpsParameters params = tps::solve_tps(grid, targets);
    write_text_file(out_path, tps::serialize_parameters(params));
}

void cmd_warp(const std::string& image_path, const std::string& params_path,
              const std::string& out_path) {
    FeatureMap img = io::load_image(image_path);
    tps::TpsParameters params = tps::parse_parameters(read_text_file(params_path));
    io::save_image(tps::warp_image(img, params), out_path);
}

void cmd_align(const std::string& ref_path, const std::string& mov_path,
               const std::string& grid_arg, double lambda, int iters, uint64_t seed,
               const std::string& out_dir) {
    auto [rows, cols] = parse_grid_arg(grid_arg);
    if (iters < 1) throw UsageError("--iters must be at least 1");
    FeatureMap ref = io::load_image(ref_path);
    FeatureMap mov = io::load_image(mov_path);
    tps::ControlPointGrid grid = tps::make_control_grid(rows, cols);

    align::AlignConfig cfg;
    cfg.lambda_bend = lambda;
    cfg.max_iters = iters;
    cfg.seed = seed;
    align::AlignResult result = align::optimize_displacements(ref, mov, grid, cfg);

    std::vector<Vec2> targets(grid.points.size());
    for (size_t i = 0; i < targets.size(); ++i) {
        targets[i] = grid.points[i] + result.displacements.deltas[i];
    }
    tps::TpsParameters params = tps::solve_tps(grid, targets);

    ensure_dir(out_dir);
    write_text_file(join_dir(out_dir, "displacements.json"),
                    align::serialize_displacements(result.displacements));
    write_text_file(join_dir(out_dir, "params.json"), tps::serialize_parameters(params));
    io::save_image(tps::warp_image(mov, params),
                   join_dir(out_dir, "warped" + output_extension(mov_path)));
}

void cmd_synth(const std::string& rgb_path, const std::string& thermal_path,
               const std::string& gt_path, const std::string& cls_arg, uint64_t seed,
               const std::string& out_dir) {
    synth::PerturbClass cls =
        cls_arg == "strong" ? synth::PerturbClass::kStrong : synth::PerturbClass::kWeak;
    FeatureMap rgb = io::load_image(rgb_path);
    FeatureMap thermal = io::load_image(thermal_path);
    SaliencyMap gt = load_binary_gt(gt_path);

    tps::ControlPointGrid grid = tps::make_control_grid(4, 4);
    synth::PerturbationSpec spec = synth::sample_perturbation(seed, cls, grid);
    synth::PerturbedPair pair = synth::apply_perturbation(thermal, gt, spec);

    ensure_dir(out_dir);
    io::save_image(rgb, join_dir(out_dir, "rgb" + output_extension(rgb_path)));
    io::save_image(pair.image, join_dir(out_dir, "thermal" + output_extension(thermal_path)));
    io::save_image(pair.gt, join_dir(out_dir, "gt" + output_extension(gt_path)));
    write_text_file(join_dir(out_dir, "spec.json"), synth::serialize_spec(spec, pair.params));
}

void cmd_eval(const std::string& manifest_path, const std::string& out_path) {
    std::istringstream lines(read_text_file(manifest_path));
    std::string out = "name,f_measure,s_measure,e_measure\n";
    double sum_f = 0.0, sum_s = 0.0, sum_e = 0.0;
    int count = 0;
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw IoError("manifest line needs 'pred,gt': " + line);
        }
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string pred_path = trim(line.substr(0, comma));
        std::string gt_path = trim(line.substr(comma + 1));
        if (pred_path.empty() || gt_path.empty()) {
            throw IoError("manifest line needs 'pred,gt': " + line);
        }
        SaliencyMap pred = io::to_saliency(io::load_image(pred_path));
        SaliencyMap gt = load_binary_gt(gt_path);
        metrics::MetricReport rep = metrics::evaluate_pair(pred, gt);
        out += pred_path + "," + format_metric(rep.f) + "," + format_metric(rep.s) + "," +
               format_metric(rep.e) + "\n";
        sum_f += rep.f;
        sum_s += rep.s;
        sum_e += rep.e;
        ++count;
    }
    if (count == 0) throw IoError("manifest lists no pairs: " + manifest_path);
    double n = count;
    out += "mean," + format_metric(sum_f / n) + "," + format_metric(sum_s / n) + "," +
           format_metric(sum_e / n) + "\n";
    write_text_file(out_path, out);
}

void cmd_toy_forward(const std::string& config_path, const std::string& out_dir) {
    fusion::ToyConfig cfg = fusion::parse_toy_config(read_text_file(config_path));
    fusion::ToyResult res = fusion::run_toy_forward(cfg);
    std::vector<fusion::GradCheckReport> grads;
    for (const std::string& block : fusion::grad_check_blocks()) {
        grads.push_back(fusion::grad_check(block, cfg.seed));
    }
    ensure_dir(out_dir);
    write_text_file(join_dir(out_dir, "report.json"), fusion::toy_report_json(cfg, res, grads));
    io::save_image(res.prediction, join_dir(out_dir, "prediction.pgm"));
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"thin-plate-spline alignment and fusion toolkit"};
    app.require_subcommand(1);

    std::string points_path, targets_path, out_path;
    CLI::App* solve = app.add_subcommand("solve", "fit spline parameters to control targets");
    solve->add_option("--points", points_path, "control grid JSON")->required();
    solve->add_option("--targets", targets_path, "target points JSON")->required();
    solve->add_option("--out", out_path, "output parameters JSON")->required();

    std::string image_path, params_path, warp_out;
    CLI::App* warp = app.add_subcommand("warp", "resample an image through spline parameters");
    warp->add_option("--image", image_path, "input image (PGM/PNG)")->required();
    warp->add_option("--params", params_path, "spline parameters JSON")->required();
    warp->add_option("--out", warp_out, "output image path")->required();

    std::string ref_path, mov_path, grid_arg = "4x4", align_dir = ".";
    double lambda = 0.0;
    int iters = 40;
    uint64_t align_seed = 0;
    CLI::App* align_cmd = app.add_subcommand("align", "register a moving image onto a reference");
    align_cmd->add_option("--ref", ref_path, "reference image")->required();
    align_cmd->add_option("--mov", mov_path, "moving image")->required();
    align_cmd->add_option("--grid", grid_arg, "control grid as RxC (default 4x4)");
    align_cmd->add_option("--lambda", lambda, "roughness penalty weight (default 0)");
    align_cmd->add_option("--iters", iters, "sweep budget per pyramid level (default 40)");
    align_cmd->add_option("--seed", align_seed, "rng seed (default 0)");
    align_cmd->add_option("--out-dir", align_dir, "output directory (default .)");

    std::string rgb_path, thermal_path, gt_path, cls_arg = "weak", synth_dir = ".";
    uint64_t synth_seed = 0;
    CLI::App* synth_cmd = app.add_subcommand("synth", "misalign an aligned pair, keeping the warp");
    synth_cmd->add_option("--rgb", rgb_path, "aligned visible image")->required();
    synth_cmd->add_option("--thermal", thermal_path, "aligned thermal image")->required();
    synth_cmd->add_option("--gt", gt_path, "ground-truth mask")->required();
    synth_cmd->add_option("--class", cls_arg, "perturbation class (default weak)")
        ->check(CLI::IsMember({"weak", "strong"}));
    synth_cmd->add_option("--seed", synth_seed, "rng seed (default 0)");
    synth_cmd->add_option("--out-dir", synth_dir, "output directory (default .)");

    std::string manifest_path, eval_out;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    eval_cmd->add_option("--manifest", manifest_path, "CSV of pred,gt paths")->required();
    eval_cmd->add_option("--out", eval_out, "output CSV")->required();

    std::string config_path, toy_dir = ".";
    CLI::App* toy = app.add_subcommand("toy-forward", "run the small fusion network end to end");
    toy->add_option("--config", config_path, "config JSON")->required();
    toy->add_option("--out-dir", toy_dir, "output directory (default .)");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (solve->parsed()) cmd_solve(points_path, targets_path, out_path);
        else if (warp->parsed()) cmd_warp(image_path, params_path, warp_out);
        else if (align_cmd->parsed())
            cmd_align(ref_path, mov_path, grid_arg, lambda, iters, align_seed, align_dir);
        else if (synth_cmd->parsed())
            cmd_synth(rgb_path, thermal_path, gt_path, cls_arg, synth_seed, synth_dir);
        else if (eval_cmd->parsed()) cmd_eval(manifest_path, eval_out);
        else if (toy->parsed()) cmd_toy_forward(config_path, toy_dir);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DegenerateGridError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.push_back("warpfuse");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(storage.size());
    for (const std::string& s : storage) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace warpfuse::cli
