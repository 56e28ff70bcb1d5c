#ifndef SRNET_WEIGHTS_IO_HPP
#define SRNET_WEIGHTS_IO_HPP

#include <string>

#include "srnet/network.hpp"

namespace srnet {

// Versioned binary container: magic "SRNW", format version, JSON header
// (engine version, network spec, tensor table with byte offsets), then
// little-endian float64 data. Reload is bit-exact.
void save_weights(Network& net, const std::string& path);
Network load_weights(const std::string& path);

}  // namespace srnet

#endif
