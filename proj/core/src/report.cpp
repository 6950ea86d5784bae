#include "dsc/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dsc/digest.hpp"
#include "dsc/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dsc {

namespace {

// 12 significant digits: enough for a faithful round trip of reported values.
std::string fmt12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string summary_csv(const DscReport& report) {
    std::string out = "dataset_id,variant,mode,r_avg,z_mean,z_se,n,expected_n,missing\n";
    for (const auto& ds : report.datasets) {
        for (VariantKind kind :
             {VariantKind::Individual, VariantKind::Global, VariantKind::Concealed}) {
            for (Mode mode : {Mode::Conventional, Mode::Aligned}) {
                const bool present =
                    (mode == Mode::Conventional) ? report.has_conventional : report.has_aligned;
                if (!present) continue;
                const auto& per_dataset =
                    (mode == Mode::Conventional) ? report.conventional : report.aligned;
                const ReportCell& cell = per_dataset.at(ds).cell(kind);
                out += ds + ',' + variant_kind_name(kind) + ',' + mode_name(mode) + ',';
                if (cell.missing) {
                    out += ",,,";
                } else {
                    out += fmt12(cell.r_avg) + ',' + fmt12(cell.z_mean) + ',' + fmt12(cell.z_se) + ',';
                }
                out += std::to_string(cell.n) + ',' + std::to_string(cell.expected_n) + ',' +
                       (cell.missing ? "1" : "0") + "\n";
            }
        }
    }
    return out;
}

std::string gaps_csv(const DscReport& report) {
    std::string out =
        "dataset_id,mode,v,c,v_significant,c_significant,ci_v_lo,ci_v_hi,ci_c_lo,ci_c_hi,missing\n";
    for (const auto& ds : report.datasets) {
        for (Mode mode : {Mode::Conventional, Mode::Aligned}) {
            const bool present =
                (mode == Mode::Conventional) ? report.has_conventional : report.has_aligned;
            if (!present) continue;
            const auto& per_dataset =
                (mode == Mode::Conventional) ? report.conventional : report.aligned;
            const GapCell& g = per_dataset.at(ds).gap;
            out += ds + ',' + mode_name(mode) + ',';
            if (g.missing) {
                out += ",,,,,,,,1\n";
            } else {
                out += fmt12(g.gap.v) + ',' + fmt12(g.gap.c) + ',' +
                       (g.gap.v_significant ? "1" : "0") + ',' +
                       (g.gap.c_significant ? "1" : "0") + ',' + fmt12(g.gap.ci_v.ci_lo) + ',' +
                       fmt12(g.gap.ci_v.ci_hi) + ',' + fmt12(g.gap.ci_c.ci_lo) + ',' +
                       fmt12(g.gap.ci_c.ci_hi) + ",0\n";
            }
        }
    }
    return out;
}

json figure_data(const DscReport& report) {
    json arr = json::array();
    for (const auto& ds : report.datasets) {
        size_t kind_index = 0;
        for (VariantKind kind :
             {VariantKind::Individual, VariantKind::Global, VariantKind::Concealed}) {
            const ReportCell* conv =
                report.has_conventional ? &report.conventional.at(ds).cell(kind) : nullptr;
            const ReportCell* alig =
                report.has_aligned ? &report.aligned.at(ds).cell(kind) : nullptr;
            const bool conv_ok = conv && !conv->missing;
            const bool alig_ok = alig && !alig->missing;
            if (!conv_ok && !alig_ok) {
                ++kind_index;
                continue;
            }
            const double bar = conv_ok ? conv->r_avg : alig->r_avg;
            const double extension = alig_ok ? alig->r_avg : bar;
            bool significant = false;
            if (conv_ok && alig_ok) {
                auto it = report.effects.find(ds);
                if (it != report.effects.end() && !it->second[kind_index].missing) {
                    significant = it->second[kind_index].significant;
                }
            }
            json item;
            item["dataset_id"] = ds;
            item["variant"] = variant_kind_name(kind);
            item["bar_value"] = bar;
            item["extension_value"] = extension;
            item["significant"] = significant;
            arr.push_back(item);
            ++kind_index;
        }
    }
    return arr;
}

}  // namespace

EmitManifest emit(const DscReport& report, const std::string& out_dir, const EmitOptions& options) {
    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error("cannot create output directory '" + root.string() + "': " + ec.message());

    EmitManifest manifest;
    auto emit_file = [&](const std::string& name, const std::string& content) {
        write_file(root / name, content);
        manifest.outputs.push_back({name, sha256_hex(content), content.size()});
    };

    emit_file("summary.csv", summary_csv(report));
    emit_file("gaps.csv", gaps_csv(report));
    emit_file("figure_dsc.json", figure_data(report).dump(2) + "\n");

    json m;
    m["tool"] = "dsceval";
    m["outputs"] = json::array();
    for (const auto& f : manifest.outputs) {
        m["outputs"].push_back(json{{"file", f.file}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    }
    m["metadata"] = report.metadata;
    if (!options.config_json.empty()) {
        try {
            m["config"] = json::parse(options.config_json);
        } catch (const json::exception&) {
            m["config"] = options.config_json;  // keep verbatim if not valid JSON
        }
    } else {
        m["config"] = nullptr;
    }
    write_file(root / "manifest.json", m.dump(2) + "\n");

    return manifest;
}

}  // namespace dsc
