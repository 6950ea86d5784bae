#pragma once

#include <string>
#include <vector>

#include "dsc/dsc.hpp"

namespace dsc {

struct FileDigest {
    std::string file;  // relative to the output directory
    std::string sha256;
    size_t bytes = 0;
};

struct EmitManifest {
    std::vector<FileDigest> outputs;
};

struct EmitOptions {
    // Verbatim JSON echo of the experiment configuration, stored in the
    // manifest for provenance; empty means none.
    std::string config_json;
};

// Writes summary.csv, gaps.csv, figure_dsc.json and manifest.json into
// out_dir. Deterministic: emitting the same report twice yields identical
// bytes and digests.
EmitManifest emit(const DscReport& report, const std::string& out_dir,
                  const EmitOptions& options = {});

}  // namespace dsc
