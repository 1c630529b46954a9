//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Command implementations behind the `sfs` tool. Each takes parsed inputs
// and writes to a stream so it can be driven from tests as well as main().

#include "sfs/config.hpp"
#include "sfs/csf.hpp"
#include "sfs/engine.hpp"
#include "sfs/perf.hpp"
#include "sfs/published.hpp"
#include "sfs/tensor.hpp"
#include "sfs/tiling.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace sfs::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kUsageError = 2 };

inline std::string with_commas(std::uint64_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i && (digits.size() - i) % 3 == 0)
            out += ',';
        out += digits[i];
    }
    return out;
}

inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

class TextTable {
public:
    struct Column {
        std::string header;
        bool right = true;
    };

    explicit TextTable(std::vector<Column> columns) : columns_(std::move(columns)) {}

    void add_row(std::vector<std::string> cells) {
        cells.resize(columns_.size());
        rows_.push_back(std::move(cells));
    }

    void render(std::ostream& out) const {
        std::vector<std::size_t> width(columns_.size());
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            width[c] = columns_[c].header.size();
            for (const auto& row : rows_)
                width[c] = std::max(width[c], row[c].size());
        }
        const auto emit = [&](const auto& cell_at) {
            std::string line;
            for (std::size_t c = 0; c < columns_.size(); ++c) {
                const std::string& cell = cell_at(c);
                const std::string fill(width[c] - cell.size(), ' ');
                if (c)
                    line += "  ";
                line += columns_[c].right ? fill + cell : cell + fill;
            }
            line.erase(line.find_last_not_of(' ') + 1);
            out << line << '\n';
        };
        emit([&](std::size_t c) -> const std::string& { return columns_[c].header; });
        for (const auto& row : rows_)
            emit([&](std::size_t c) -> const std::string& { return row[c]; });
    }

private:
    std::vector<Column> columns_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char ch : s)
        q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

inline void csv_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
        out << (i ? "," : "") << csv_field(cells[i]);
    out << '\n';
}

inline std::string extent(std::size_t h, std::size_t w) { return std::to_string(h) + "x" + std::to_string(w); }

// ---- macs ---------------------------------------------------------------

inline int cmd_macs(const NetworkConfig& config, bool csv, std::ostream& out) {
    if (csv) {
        csv_row(out, {"layer", "type", "out_h", "out_w", "macs", "mmacs"});
        for (const auto& l : config.layers) {
            const auto o = output_shape(l);
            const auto macs = mac_count(l);
            csv_row(out, {l.name, to_string(l.kind), std::to_string(o.height), std::to_string(o.width),
                          std::to_string(macs), fixed(static_cast<double>(macs) / 1e6, 4)});
        }
        return kOk;
    }
    TextTable t({{"Layer", false}, {"Type", false}, {"Output"}, {"MACs"}, {"MMACs"}});
    std::uint64_t total = 0;
    for (const auto& l : config.layers) {
        const auto o = output_shape(l);
        const auto macs = mac_count(l);
        total += macs;
        t.add_row({l.name, to_string(l.kind), extent(o.height, o.width), with_commas(macs),
                   fixed(static_cast<double>(macs) / 1e6, 4)});
    }
    if (!config.layers.empty())
        t.add_row({"Total", "", "", with_commas(total), fixed(static_cast<double>(total) / 1e6, 4)});
    t.render(out);
    return kOk;
}

// ---- plan ---------------------------------------------------------------

struct PlanOptions {
    std::optional<std::uint64_t> div_budget;
    std::optional<std::uint64_t> grp_budget;
    TileMode mode = TileMode::fixed(14);
};

namespace detail {

inline bool published_division_settings(std::uint64_t budget, const TileMode& mode) {
    return budget == published::kDivisionBudget && mode.kind == TileMode::Kind::fixed_tile && mode.tile == 14;
}

inline void division_section(const NetworkConfig& config, std::uint64_t budget, const TileMode& mode,
                             std::ostream& out) {
    out << "Feature division (output buffer size: " << budget << ", "
        << (mode.kind == TileMode::Kind::fixed_tile ? "tile " + std::to_string(mode.tile) : std::string("largest tile"))
        << ")\n";
    TextTable t({{"Layer", false},
                 {"Feature division"},
                 {"Tile out"},
                 {"Tile in"},
                 {"Load times"},
                 {"Filter weight #"},
                 {"Total weight # loaded"},
                 {"Note", false}});
    std::uint64_t weights = 0;
    std::uint64_t loaded = 0;
    const bool annotate = published_division_settings(budget, mode);
    for (const auto& l : config.layers) {
        if (l.kind != LayerKind::conv) {
            t.add_row({l.name, "n/a (fc)"});
            continue;
        }
        try {
            const auto p = plan_feature_division(l, budget, mode);
            weights += p.dense_weight_count;
            loaded += p.total_weights_loaded;
            std::string note;
            if (const auto* ref = annotate ? published::find(published::kVgg16Division, l) : nullptr;
                ref && (ref->grid != p.grid_h || ref->grid != p.grid_w || ref->load_times != p.load_times ||
                        ref->filter_weights != p.dense_weight_count || ref->total_weights_loaded != p.total_weights_loaded))
                note = "published: " + std::to_string(ref->grid) + " x " + std::to_string(ref->grid) + " / " +
                       with_commas(ref->total_weights_loaded);
            t.add_row({l.name, std::to_string(p.grid_h) + " x " + std::to_string(p.grid_w),
                       extent(p.tile_out_h, p.tile_out_w), extent(p.tile_in_h, p.tile_in_w),
                       std::to_string(p.load_times), with_commas(p.dense_weight_count),
                       with_commas(p.total_weights_loaded), note});
        } catch (const PlanningError& e) {
            t.add_row({l.name, "infeasible", "", "", "", "", "", e.what()});
        }
    }
    if (!config.layers.empty())
        t.add_row({"Total", "", "", "", "", with_commas(weights), with_commas(loaded)});
    t.render(out);
}

inline void grouping_section(const NetworkConfig& config, std::uint64_t budget, std::ostream& out) {
    out << "Filter grouping (output buffer size: " << budget << ")\n";
    TextTable t({{"Layer", false},
                 {"Filter batch size"},
                 {"Filter batches"},
                 {"Feature value #"},
                 {"Total feature # loaded"},
                 {"Note", false}});
    std::uint64_t features = 0;
    std::uint64_t loaded = 0;
    const bool annotate = budget == published::kGroupingBudget;
    for (const auto& l : config.layers) {
        try {
            const auto g = plan_filter_grouping(l, budget);
            features += g.feature_count;
            loaded += g.total_features_loaded;
            std::string note;
            if (const auto* ref = annotate ? published::find(published::kVgg16Grouping, l) : nullptr;
                ref && (ref->batch_size != g.m || ref->batches != g.batches || ref->feature_values != g.feature_count ||
                        ref->total_features_loaded != g.total_features_loaded))
                note = "inconsistent published row: " + std::to_string(ref->batches) + " / " +
                       with_commas(ref->total_features_loaded) + " (batches = ceil(" + std::to_string(l.filters) +
                       "/" + std::to_string(g.m) + ") = " + std::to_string(g.batches) + ")";
            t.add_row({l.name, std::to_string(g.m), std::to_string(g.batches), with_commas(g.feature_count),
                       with_commas(g.total_features_loaded), note});
        } catch (const PlanningError& e) {
            t.add_row({l.name, "infeasible", "", "", "", e.what()});
        }
    }
    if (!config.layers.empty())
        t.add_row({"Total", "", "", with_commas(features), with_commas(loaded)});
    t.render(out);
}

} // namespace detail

inline int cmd_plan(const NetworkConfig& config, const PlanOptions& opts, std::ostream& out) {
    if (opts.div_budget)
        detail::division_section(config, *opts.div_budget, opts.mode, out);
    if (opts.div_budget && opts.grp_budget)
        out << '\n';
    if (opts.grp_budget)
        detail::grouping_section(config, *opts.grp_budget, out);
    if (opts.div_budget && opts.grp_budget) {
        std::uint64_t weights = 0;
        std::uint64_t features = 0;
        std::size_t compared = 0;
        for (const auto& l : config.layers) {
            if (l.kind != LayerKind::conv)
                continue;
            try {
                const auto cmp = compare_strategies(l, *opts.div_budget, *opts.grp_budget, opts.mode);
                weights += cmp.weights_loaded;
                features += cmp.features_loaded;
                ++compared;
            } catch (const PlanningError&) {
            }
        }
        out << "\nData reloaded over " << compared << " conv layers: division " << with_commas(weights)
            << " weights, grouping " << with_commas(features) << " features\n";
    }
    return kOk;
}

// ---- report -------------------------------------------------------------

struct ReportOptions {
    std::uint64_t div_budget = published::kDivisionBudget;
    std::uint64_t grp_budget = published::kGroupingBudget;
    TileMode mode = TileMode::fixed(14);
    PerfParams perf;
    bool csv = false;
};

namespace detail {

inline void report_csv(const NetworkConfig& config, const ReportOptions& opts, std::ostream& out) {
    csv_row(out, {"layer", "type", "out_h", "out_w", "macs", "div_grid_h", "div_grid_w", "load_times",
                  "filter_weights", "total_weights_loaded", "batch_size", "batches", "feature_values",
                  "total_features_loaded", "predicted_cycles", "predicted_runtime_ms", "predicted_efficiency"});
    for (const auto& l : config.layers) {
        const auto o = output_shape(l);
        std::vector<std::string> row{l.name, to_string(l.kind), std::to_string(o.height), std::to_string(o.width),
                                     std::to_string(mac_count(l))};
        if (l.kind != LayerKind::conv) {
            row.insert(row.end(), {"", "", "", "", ""});
        } else {
            try {
                const auto p = plan_feature_division(l, opts.div_budget, opts.mode);
                row.insert(row.end(), {std::to_string(p.grid_h), std::to_string(p.grid_w), std::to_string(p.load_times),
                                       std::to_string(p.dense_weight_count), std::to_string(p.total_weights_loaded)});
            } catch (const PlanningError&) {
                row.insert(row.end(), {"infeasible", "", "", "", ""});
            }
        }
        try {
            const auto g = plan_filter_grouping(l, opts.grp_budget);
            row.insert(row.end(), {std::to_string(g.m), std::to_string(g.batches), std::to_string(g.feature_count),
                                   std::to_string(g.total_features_loaded)});
        } catch (const PlanningError&) {
            row.insert(row.end(), {"infeasible", "", "", ""});
        }
        const auto trace = dense_trace(l, l.filters);
        const double ms = predict_runtime(trace, opts.perf);
        row.insert(row.end(),
                   {std::to_string(predicted_cycles(trace, opts.perf)), fixed(ms, 4),
                    fixed(efficiency_per_pe(static_cast<double>(trace.macs_executed) / 1e6, ms,
                                            opts.perf.efficiency_divisor),
                          4)});
        csv_row(out, row);
    }
}

inline void efficiency_section(const NetworkConfig& config, const PerfParams& params, std::ostream& out) {
    std::vector<PerfRowInput> inputs;
    std::vector<const published::PerfRow*> refs;
    for (const auto& l : config.layers) {
        if (const auto* ref = published::find_perf(l)) {
            inputs.push_back({l.name, RowRole::ours, ref->ours.macs_millions, ref->ours.runtime_ms});
            inputs.push_back({l.name, RowRole::baseline, ref->baseline.macs_millions, ref->baseline.runtime_ms});
            refs.push_back(ref);
        }
    }
    if (inputs.empty())
        return;
    const auto rows = build_table(inputs, params);
    out << "\nEfficiency per PE from published MACs and run times (divisors " << params.efficiency_divisor << " / "
        << kBaselineEfficiencyDivisor << ")\n";
    TextTable t({{"Layer", false},
                 {"Row", false},
                 {"MMACs"},
                 {"Run time (ms)"},
                 {"Efficiency"},
                 {"Improvement (X)"},
                 {"Note", false}});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto* ref = refs[i / 2];
        const auto& published_row = row.role == RowRole::ours ? ref->ours : ref->baseline;
        std::string note;
        if (std::abs(row.efficiency - published_row.efficiency) > 1e-4)
            note = "published efficiency " + fixed(published_row.efficiency, 4);
        if (row.improvement && std::abs(*row.improvement - ref->improvement) > 0.1)
            note += (note.empty() ? "" : "; ") + std::string("published improvement ") + fixed(ref->improvement, 1);
        t.add_row({row.layer, row.role == RowRole::ours ? "ours" : "baseline", fixed(row.macs_millions, 4),
                   fixed(row.runtime_ms, 4), fixed(row.efficiency, 4),
                   row.improvement ? fixed(*row.improvement, 1) : "", note});
    }
    t.render(out);
}

} // namespace detail

inline int cmd_report(const NetworkConfig& config, const ReportOptions& opts, std::ostream& out) {
    opts.perf.validate();
    if (opts.csv) {
        detail::report_csv(config, opts, out);
        return kOk;
    }
    out << "MAC counts and predicted dense run time (" << opts.perf.pe_count << " PEs, "
        << fixed(opts.perf.clock_mhz, 2) << " MHz, " << opts.perf.add_latency_cycles << "-cycle add)\n";
    TextTable t({{"Layer", false}, {"Type", false}, {"Output"}, {"MACs"}, {"MMACs"}, {"Pred. cycles"}, {"Pred. ms"}});
    for (const auto& l : config.layers) {
        const auto o = output_shape(l);
        const auto trace = dense_trace(l, l.filters);
        t.add_row({l.name, to_string(l.kind), extent(o.height, o.width), with_commas(mac_count(l)),
                   fixed(static_cast<double>(mac_count(l)) / 1e6, 4), with_commas(predicted_cycles(trace, opts.perf)),
                   fixed(predict_runtime(trace, opts.perf), 4)});
    }
    t.render(out);
    out << '\n';
    detail::division_section(config, opts.div_budget, opts.mode, out);
    out << '\n';
    detail::grouping_section(config, opts.grp_budget, out);
    detail::efficiency_section(config, opts.perf, out);
    return kOk;
}

// ---- verify -------------------------------------------------------------

struct VerifyOptions {
    double density = 0.1;
    std::uint64_t seed = 1;
    std::size_t max_batch = 512; // filters per CSF stream, capped at M
    bool corrupt = false;        // negative control: tamper with the first encoded batch
    unsigned threads = 0;        // 0: hardware concurrency
};

struct LayerVerdict {
    std::string layer;
    bool pass = false;
    double max_abs_dev = 0.0;
    std::uint64_t macs_executed = 0;
    std::uint64_t expected_macs = 0;
    std::string error;
};

// Flips the sign and doubles the first encoded weight of batch 0; with no
// weights at all, breaks the ptr/entry-count invariant instead.
inline void corrupt_stream(CsfStream& s, std::size_t batch) {
    if (batch != 0)
        return;
    for (auto& pos : s.positions) {
        if (!pos.entries.empty()) {
            pos.entries.front().weight *= -2.0f;
            return;
        }
    }
    s.positions.front().ptr += 1;
}

inline LayerVerdict verify_layer(const LayerSpec& layer, std::size_t index, const VerifyOptions& opts) {
    LayerVerdict v;
    v.layer = layer.name;
    try {
        const DenseTensor wf = random_sparse_filters(layer, opts.density, opts.seed + 2 * index);
        const DenseTensor vi = random_features(layer, opts.seed + 2 * index + 1);
        const std::size_t m = std::min(layer.filters, std::max<std::size_t>(opts.max_batch, 1));
        const auto result = run_layer_batched(wf, vi, layer, m, opts.corrupt ? StreamHook(corrupt_stream) : StreamHook{});
        const DenseTensor oracle = layer.kind == LayerKind::conv ? dense_conv(vi, wf, layer) : dense_fc(vi, wf, layer);
        const auto out = output_shape(layer);
        v.macs_executed = result.trace.macs_executed;
        v.expected_macs = layer.kind == LayerKind::conv ? count_nonzero(wf) * out.height * out.width : count_nonzero(wf);
        v.max_abs_dev = max_abs_diff(result.output, oracle);
        const auto& tr = result.trace;
        v.pass = bit_equal(result.output, oracle) && tr.macs_executed == v.expected_macs &&
                 tr.weight_loads == tr.macs_executed && tr.index_loads == tr.weight_loads;
    } catch (const Error& e) {
        v.pass = false;
        v.error = e.what();
    }
    return v;
}

// Layers are independent; they run on a small worker pool and results come
// back in config order.
inline std::vector<LayerVerdict> verify_layers(const NetworkConfig& config, const VerifyOptions& opts) {
    std::vector<LayerVerdict> verdicts(config.layers.size());
    unsigned workers = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(config.layers.size(), 1)));
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < config.layers.size(); i = next++)
                    verdicts[i] = verify_layer(config.layers[i], i, opts);
            });
    }
    return verdicts;
}

inline int cmd_verify(const NetworkConfig& config, const VerifyOptions& opts, std::ostream& out) {
    if (!(opts.density >= 0.0 && opts.density <= 1.0))
        throw std::invalid_argument("density must lie in [0, 1]");
    const auto verdicts = verify_layers(config, opts);
    TextTable t({{"Layer", false}, {"Result", false}, {"Max abs dev"}, {"MACs executed"}, {"Expected MACs"}, {"Detail", false}});
    bool all = true;
    for (const auto& v : verdicts) {
        all = all && v.pass;
        t.add_row({v.layer, v.pass ? "PASS" : "FAIL", v.error.empty() ? fixed(v.max_abs_dev, 6) : "",
                   with_commas(v.macs_executed), with_commas(v.expected_macs), v.error});
    }
    t.render(out);
    out << (all ? "all layers match the dense reference" : "verification FAILED") << " (density " << fixed(opts.density, 4)
        << ", seed " << opts.seed << ")\n";
    return all ? kOk : kVerifyFailed;
}

} // namespace sfs::cli
