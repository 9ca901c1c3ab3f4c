#pragma once

#include <filesystem>
#include <iosfwd>

#include "scatterbench/nn/net.hpp"

namespace scatterbench::nn {

/// SCW1 checkpoint: the full graph (layer kinds, hyper-parameters, wiring) and
/// all learned state, little-endian. Reading back yields a bit-identical net.
void write_scw1(std::ostream& os, const Net& net);
Net read_scw1(std::istream& is);

void write_scw1(const std::filesystem::path& path, const Net& net);
Net read_scw1(const std::filesystem::path& path);

}  // namespace scatterbench::nn
