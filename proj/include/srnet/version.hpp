#ifndef SRNET_VERSION_HPP
#define SRNET_VERSION_HPP

namespace srnet {

inline constexpr const char* kEngineVersion = "0.1.0";

}

#endif
