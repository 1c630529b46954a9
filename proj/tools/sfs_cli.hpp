//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "sfs/commands.hpp"
#include "sfs/config.hpp"
#include "sfs/csf.hpp"
#include "sfs/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sfs::cli {

inline NetworkConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_network_config(text.str());
    } catch (const ParseError& e) {
        throw Error(path + ": " + e.what());
    }
}

// Parses "lo:hi" into an exponent range.
inline std::pair<int, int> parse_exponent_range(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--shift", "expected EMIN:EMAX");
    try {
        return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw CLI::ValidationError("--shift", "expected integer EMIN:EMAX");
    }
}

inline int cmd_encode(const std::string& weights_path, const std::string& csf_path, const std::string& profile,
                      const std::optional<std::string>& shift, std::ostream& out) {
    DenseTensor wf = read_weights_file(weights_path);
    WeightFormat format = WeightFormat::float32;
    if (shift) {
        const auto [lo, hi] = parse_exponent_range(*shift);
        wf = quantize_shift(wf, lo, hi);
        format = WeightFormat::shift_quantized;
    }
    const CsfStream stream =
        encode_csf(stack_filters(wf, 0, wf.dim(0)), profile == "fc" ? CsfProfile::fc : CsfProfile::conv, format);
    const auto bytes = serialize_csf(stream);
    write_file_bytes(csf_path, bytes);
    out << "encoded " << wf.dim(0) << " filters, " << stream.position_count() << " positions, "
        << nonzero_count(stream) << " nonzeros of " << wf.size() << " -> " << bytes.size() << " bytes\n";
    return kOk;
}

inline int cmd_decode(const std::string& csf_path, const std::optional<std::string>& weights_path, std::ostream& out) {
    const CsfStream stream = deserialize_csf(read_file_bytes(csf_path));
    const DenseTensor stacked = decode_csf(stream);
    const std::size_t dense = stacked.size();
    const std::size_t nnz = nonzero_count(stream);
    out << "profile " << (stream.profile == CsfProfile::conv ? "conv" : "fc") << ", dtype "
        << (stream.format == WeightFormat::float32 ? "float32" : "shift-quantized") << ", m " << stream.m << ", C "
        << stream.channels << ", K " << stream.kernel << ", positions " << stream.position_count() << '\n';
    out << "nonzeros " << nnz << " of " << dense << " (density " << fixed(dense ? double(nnz) / double(dense) : 0.0, 4)
        << "), " << serialized_size(stream) << " bytes\n";
    if (weights_path) {
        write_weights_file(*weights_path, unstack_filters(stacked));
        out << "wrote " << *weights_path << '\n';
    }
    return kOk;
}

// Full command line (args[0] is the program name). Returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse CNN layer encoder, streaming simulator and planner", "sfs"};
    app.require_subcommand(1);

    std::string weights_path, csf_path, config_path;
    std::optional<std::string> out_path, shift;
    std::string profile = "conv";
    auto* encode = app.add_subcommand("encode", "Encode a raw weight dump into a CSF file");
    encode->add_option("weights", weights_path, "Weight file (u32 M,C,K,K header + float32 data)")->required();
    encode->add_option("-o,--output", csf_path, "Output CSF file")->required();
    encode->add_option("--profile", profile, "Stream profile")->check(CLI::IsMember({"conv", "fc"}));
    encode->add_option("--shift", shift, "Quantize weights to powers of two within EMIN:EMAX first");

    auto* decode = app.add_subcommand("decode", "Inspect a CSF file, optionally writing the dense weights back");
    decode->add_option("csf", csf_path, "CSF file")->required();
    decode->add_option("-o,--output", out_path, "Write decoded weights to this file");

    VerifyOptions verify_opts;
    auto* verify = app.add_subcommand("verify", "Run the streaming engine against the dense reference per layer");
    verify->add_option("config", config_path, "Network config")->required();
    verify->add_option("--density", verify_opts.density, "Nonzero weight fraction")->check(CLI::Range(0.0, 1.0));
    verify->add_option("--seed", verify_opts.seed, "Generator seed");
    verify->add_option("--batch", verify_opts.max_batch, "Filters per stream (capped at M)")->check(CLI::PositiveNumber);
    verify->add_option("--threads", verify_opts.threads, "Worker threads (0: all cores)");
    verify->add_flag("--corrupt", verify_opts.corrupt, "Tamper with the first encoded batch (negative control)")
        ->group("");

    std::optional<std::uint64_t> div_budget, grp_budget;
    std::size_t tile = 14;
    bool budget_max = false;
    auto* plan = app.add_subcommand("plan", "Feature-division and filter-grouping plans");
    plan->add_option("config", config_path, "Network config")->required();
    plan->add_option("--div-budget", div_budget, "Output buffer elements for feature division");
    plan->add_option("--grp-budget", grp_budget, "Output buffer elements for filter grouping");
    auto* tile_opt = plan->add_option("--tile", tile, "Fixed output tile edge")->check(CLI::PositiveNumber);
    auto* max_opt = plan->add_flag("--budget-max", budget_max, "Use the largest tile the budget allows");
    tile_opt->excludes(max_opt);

    bool csv = false;
    auto* macs = app.add_subcommand("macs", "Dense MAC counts per layer");
    macs->add_option("config", config_path, "Network config")->required();
    macs->add_flag("--csv", csv, "CSV output");

    ReportOptions report_opts;
    std::size_t report_tile = 14;
    bool report_budget_max = false;
    auto* report = app.add_subcommand("report", "MAC, planning and efficiency tables");
    report->add_option("config", config_path, "Network config")->required();
    report->add_flag("--csv", report_opts.csv, "One CSV row per layer");
    report->add_option("--div-budget", report_opts.div_budget, "Feature-division buffer elements");
    report->add_option("--grp-budget", report_opts.grp_budget, "Filter-grouping buffer elements");
    auto* rtile = report->add_option("--tile", report_tile, "Fixed output tile edge")->check(CLI::PositiveNumber);
    report->add_flag("--budget-max", report_budget_max, "Use the largest tile the budget allows")->excludes(rtile);
    report->add_option("--pe", report_opts.perf.pe_count, "Processing elements")->check(CLI::PositiveNumber);
    report->add_option("--clock-mhz", report_opts.perf.clock_mhz, "Clock frequency")->check(CLI::PositiveNumber);
    report->add_option("--add-latency", report_opts.perf.add_latency_cycles, "Adder latency in cycles")
        ->check(CLI::PositiveNumber);
    auto* wpc = report->add_option("--weights-per-clock", report_opts.perf.weights_per_clock,
                                   "Weights loadable per clock (default: PE count)")
                    ->check(CLI::PositiveNumber);
    report->add_option("--divisor", report_opts.perf.efficiency_divisor, "Efficiency-per-PE divisor")
        ->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(reversed.begin(), reversed.end());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*encode)
            return cmd_encode(weights_path, csf_path, profile, shift, out);
        if (*decode)
            return cmd_decode(csf_path, out_path, out);
        if (*verify)
            return cmd_verify(load_config(config_path), verify_opts, out);
        if (*plan) {
            if (!div_budget && !grp_budget) {
                err << "plan: give --div-budget and/or --grp-budget\n";
                return kUsageError;
            }
            return cmd_plan(load_config(config_path),
                            {div_budget, grp_budget, budget_max ? TileMode::budget_max() : TileMode::fixed(tile)}, out);
        }
        if (*macs)
            return cmd_macs(load_config(config_path), csv, out);
        if (*report) {
            report_opts.mode = report_budget_max ? TileMode::budget_max() : TileMode::fixed(report_tile);
            if (wpc->count() == 0)
                report_opts.perf.weights_per_clock = report_opts.perf.pe_count;
            return cmd_report(load_config(config_path), report_opts, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }
    return kUsageError;
}

} // namespace sfs::cli
